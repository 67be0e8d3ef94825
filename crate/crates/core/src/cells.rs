//! Recurrent cells (basic, GRU, LSTM) and affine heads over the autodiff graph.
//!
//! All computations are batched: inputs are `[B × D]`, states `[B × H]`.
//!
//! Gate conventions:
//! - basic: `h' = tanh(x·Wx + h·Wh + b)`
//! - GRU: `z = σ(..)`, `r = σ(..)`, `h̃ = tanh(x·Wx + (r⊙h)·Wh + b)`,
//!   `h' = (1 − z)⊙h + z⊙h̃`
//! - LSTM: `i, f, o = σ(..)`, `c̃ = tanh(..)`, `c' = f⊙c + i⊙c̃`,
//!   `h' = o⊙tanh(c')`

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, ParamId, Tensor, Var};
use crate::format::fmt_f64;
use crate::rng::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("head role mismatch: expected {expected}, got {found}")]
    RoleMismatch { expected: HeadRole, found: HeadRole },
    #[error("{what}: expected dimension {expected}, got {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown cell kind '{0}'")]
    UnknownKind(String),
    #[error("params file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, CellError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Basic,
    Gru,
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Basic, CellKind::Gru, CellKind::Lstm];

    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Basic => &["candidate"],
            CellKind::Gru => &["update", "reset", "candidate"],
            CellKind::Lstm => &["input", "forget", "output", "candidate"],
        }
    }

    /// Width of the vector handed to a predictive-state decoder.
    pub fn decoder_width(self, hidden: usize) -> usize {
        match self {
            CellKind::Lstm => 2 * hidden,
            _ => hidden,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Basic => "basic",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

impl FromStr for CellKind {
    type Err = CellError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(CellKind::Basic),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(CellError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    /// One entry per gate, ordered as [`CellKind::gate_names`].
    pub gates: Vec<GateParams>,
}

impl CellParams {
    /// Registers the cell's parameters in `g`.
    ///
    /// Weights are drawn from `U(−s, s)` with `s = 1/√H`; biases are zero
    /// except the LSTM forget gate, which starts at 1.
    pub fn init(
        g: &mut Graph,
        kind: CellKind,
        input: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(CellError::Dimension {
                what: "cell size",
                expected: 1,
                found: 0,
            });
        }
        let mut rng = rng::stream(seed, Stream::CellInit, 0);
        let s = 1.0 / (hidden as f64).sqrt();
        let mut gates = Vec::new();
        for name in kind.gate_names() {
            let w_x = uniform(&mut rng, vec![input, hidden], s);
            let w_h = uniform(&mut rng, vec![hidden, hidden], s);
            let b = if kind == CellKind::Lstm && *name == "forget" {
                1.0
            } else {
                0.0
            };
            gates.push(GateParams {
                w_x: g.param(format!("{kind}.{name}.w_x"), w_x)?,
                w_h: g.param(format!("{kind}.{name}.w_h"), w_h)?,
                bias: g.param(
                    format!("{kind}.{name}.bias"),
                    Tensor::filled(vec![hidden], b),
                )?,
            });
        }
        Ok(Self {
            kind,
            input_size: input,
            hidden_size: hidden,
            gates,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.gates
            .iter()
            .flat_map(|g| [g.w_x, g.w_h, g.bias])
            .collect()
    }
}

fn uniform(rng: &mut impl Rng, shape: Vec<usize>, s: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-s..s)).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

/// Recurrent memory. `cell` is present only for LSTM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InternalState {
    pub hidden: Var,
    pub cell: Option<Var>,
}

impl InternalState {
    pub fn zeros(g: &mut Graph, kind: CellKind, batch: usize, hidden: usize) -> Self {
        let h = g.constant(Tensor::zeros(vec![batch, hidden]));
        let cell = (kind == CellKind::Lstm).then(|| g.constant(Tensor::zeros(vec![batch, hidden])));
        Self { hidden: h, cell }
    }

    pub fn detach(&self, g: &mut Graph) -> Self {
        Self {
            hidden: g.detach(self.hidden),
            cell: self.cell.map(|c| g.detach(c)),
        }
    }
}

fn gate_preact(g: &mut Graph, gate: &GateParams, x: Var, h: Var) -> Result<Var> {
    let xw = g.matmul(x, gate.w_x.var())?;
    let hw = g.matmul(h, gate.w_h.var())?;
    let s = g.add(xw, hw)?;
    Ok(g.add(s, gate.bias.var())?)
}

/// One recurrence step: consumes `x` (`[B × D]`) and returns the next state.
pub fn cell_step(
    g: &mut Graph,
    params: &CellParams,
    state: InternalState,
    x: Var,
) -> Result<InternalState> {
    let xd = g.value(x).cols();
    if xd != params.input_size {
        return Err(CellError::Dimension {
            what: "cell input",
            expected: params.input_size,
            found: xd,
        });
    }
    let hd = g.value(state.hidden).cols();
    if hd != params.hidden_size {
        return Err(CellError::Dimension {
            what: "cell state",
            expected: params.hidden_size,
            found: hd,
        });
    }
    let h = state.hidden;
    match params.kind {
        CellKind::Basic => {
            let pre = gate_preact(g, &params.gates[0], x, h)?;
            Ok(InternalState {
                hidden: g.tanh(pre)?,
                cell: None,
            })
        }
        CellKind::Gru => {
            let [update, reset, cand] = [&params.gates[0], &params.gates[1], &params.gates[2]];
            let zp = gate_preact(g, update, x, h)?;
            let z = g.sigmoid(zp)?;
            let rp = gate_preact(g, reset, x, h)?;
            let r = g.sigmoid(rp)?;
            let rh = g.mul(r, h)?;
            let cp = gate_preact(g, cand, x, rh)?;
            let c = g.tanh(cp)?;
            let keep = g.one_minus(z)?;
            let old = g.mul(keep, h)?;
            let new = g.mul(z, c)?;
            Ok(InternalState {
                hidden: g.add(old, new)?,
                cell: None,
            })
        }
        CellKind::Lstm => {
            let c_prev = state.cell.ok_or(CellError::Dimension {
                what: "lstm cell component",
                expected: params.hidden_size,
                found: 0,
            })?;
            let ip = gate_preact(g, &params.gates[0], x, h)?;
            let i = g.sigmoid(ip)?;
            let fp = gate_preact(g, &params.gates[1], x, h)?;
            let f = g.sigmoid(fp)?;
            let op = gate_preact(g, &params.gates[2], x, h)?;
            let o = g.sigmoid(op)?;
            let cp = gate_preact(g, &params.gates[3], x, h)?;
            let cand = g.tanh(cp)?;
            let kept = g.mul(f, c_prev)?;
            let written = g.mul(i, cand)?;
            let c = g.add(kept, written)?;
            let tc = g.tanh(c)?;
            Ok(InternalState {
                hidden: g.mul(o, tc)?,
                cell: Some(c),
            })
        }
    }
}

/// Runs the cell over `inputs` starting from the zero state and returns one
/// state per input. `truncation` cuts gradient flow every that many steps.
pub fn unroll(
    g: &mut Graph,
    params: &CellParams,
    inputs: &[Var],
    truncation: Option<usize>,
) -> Result<Vec<InternalState>> {
    let Some(first) = inputs.first() else {
        return Ok(Vec::new());
    };
    let batch = g.value(*first).rows();
    let mut state = InternalState::zeros(g, params.kind, batch, params.hidden_size);
    let mut states = Vec::with_capacity(inputs.len());
    for (t, &x) in inputs.iter().enumerate() {
        if let Some(n) = truncation {
            if n > 0 && t > 0 && t % n == 0 {
                state = state.detach(g);
            }
        }
        state = cell_step(g, params, state, x)?;
        states.push(state);
    }
    Ok(states)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadRole {
    Readout,
    Decoder,
}

impl fmt::Display for HeadRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadRole::Readout => "readout",
            HeadRole::Decoder => "decoder",
        })
    }
}

/// `y = v·W + b` with `W` of shape `[in × out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffineHead {
    pub role: HeadRole,
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl AffineHead {
    pub fn init(
        g: &mut Graph,
        role: HeadRole,
        input: usize,
        output: usize,
        seed: u64,
    ) -> Result<Self> {
        let purpose = match role {
            HeadRole::Readout => Stream::ReadoutInit,
            HeadRole::Decoder => Stream::DecoderInit,
        };
        let mut rng = rng::stream(seed, purpose, 0);
        let s = 1.0 / (input as f64).sqrt();
        let weight = g.param(
            format!("{role}.weight"),
            uniform(&mut rng, vec![input, output], s),
        )?;
        let bias = g.param(format!("{role}.bias"), Tensor::zeros(vec![output]))?;
        Ok(Self {
            role,
            weight,
            bias,
            input,
            output,
        })
    }

    /// Decoder head sized for `cell`'s decoder input.
    pub fn decoder_for(g: &mut Graph, cell: &CellParams, output: usize, seed: u64) -> Result<Self> {
        Self::init(
            g,
            HeadRole::Decoder,
            cell.kind.decoder_width(cell.hidden_size),
            output,
            seed,
        )
    }

    pub fn apply(&self, g: &mut Graph, v: Var) -> Result<Var> {
        let width = g.value(v).cols();
        if width != self.input {
            return Err(CellError::Dimension {
                what: "head input",
                expected: self.input,
                found: width,
            });
        }
        let y = g.matmul(v, self.weight.var())?;
        Ok(g.add(y, self.bias.var())?)
    }

    fn expect_role(&self, role: HeadRole) -> Result<()> {
        if self.role != role {
            return Err(CellError::RoleMismatch {
                expected: role,
                found: self.role,
            });
        }
        Ok(())
    }
}

/// Task prediction from the hidden component only.
pub fn readout(g: &mut Graph, head: &AffineHead, state: &InternalState) -> Result<Var> {
    head.expect_role(HeadRole::Readout)?;
    head.apply(g, state.hidden)
}

/// Hidden state for basic/GRU cells; `[hidden ; cell]` for LSTM.
pub fn decoder_input(g: &mut Graph, state: &InternalState) -> Result<Var> {
    match state.cell {
        Some(c) => Ok(g.concat_cols(state.hidden, c)?),
        None => Ok(state.hidden),
    }
}

/// `F(decoder_input(h))`.
pub fn decode(g: &mut Graph, head: &AffineHead, state: &InternalState) -> Result<Var> {
    head.expect_role(HeadRole::Decoder)?;
    let v = decoder_input(g, state)?;
    head.apply(g, v)
}

pub const PARAMS_MAGIC: &str = "PSDLAB-PARAMS-v1";

/// Contents of a parameter file.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamsFile {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub params: Vec<(String, Tensor)>,
}

impl ParamsFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(PARAMS_MAGIC);
        out.push('\n');
        out.push_str(&format!(
            "cell {} {} {}\n",
            self.kind, self.input_size, self.hidden_size
        ));
        for (name, t) in &self.params {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            out.push_str(&format!(
                "param {} {}\n",
                name,
                if dims.is_empty() {
                    "scalar".into()
                } else {
                    dims.join("x")
                }
            ));
            let cols = t.cols().max(1);
            for row in t.data().chunks(cols) {
                let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| CellError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == PARAMS_MAGIC => {}
            _ => return Err(err(1, "missing PSDLAB-PARAMS-v1 header")),
        }
        let (ln, header) = lines.next().ok_or_else(|| err(2, "missing cell line"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "cell" {
            return Err(err(ln, "expected 'cell <kind> <input> <hidden>'"));
        }
        let kind: CellKind = parts[1].parse()?;
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad size"));
        let (input_size, hidden_size) = (num(parts[2])?, num(parts[3])?);

        let mut params = Vec::new();
        loop {
            let (ln, line) = lines.next().ok_or_else(|| err(0, "missing 'end'"))?;
            if line == "end" {
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "param" {
                return Err(err(ln, "expected 'param <name> <dims>'"));
            }
            let shape: Vec<usize> = if parts[2] == "scalar" {
                vec![]
            } else {
                parts[2]
                    .split('x')
                    .map(|d| d.parse().map_err(|_| err(ln, "bad dimension")))
                    .collect::<Result<_>>()?
            };
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            while data.len() < n {
                let (rl, row) = lines.next().ok_or_else(|| err(ln, "truncated tensor"))?;
                for v in row.split(',') {
                    data.push(v.parse::<f64>().map_err(|_| err(rl, "bad number"))?);
                }
            }
            if data.len() != n {
                return Err(err(ln, "tensor row length does not match shape"));
            }
            params.push((parts[1].to_string(), Tensor::new(shape, data)?));
        }
        Ok(Self {
            kind,
            input_size,
            hidden_size,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(g: &mut Graph, kind: CellKind, d: usize, h: usize) -> CellParams {
        let p = CellParams::init(g, kind, d, h, 0).unwrap();
        for id in p.param_ids() {
            g.param_value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        p
    }

    #[test]
    fn zero_everything_is_a_fixed_point() {
        for kind in CellKind::ALL {
            let mut g = Graph::new();
            let p = zero_params(&mut g, kind, 2, 3);
            let s = InternalState::zeros(&mut g, kind, 1, 3);
            let x = g.constant(Tensor::zeros(vec![1, 2]));
            let next = cell_step(&mut g, &p, s, x).unwrap();
            assert_eq!(g.value(next.hidden).data(), &[0.0; 3], "{kind}");
        }
    }

    #[test]
    fn gru_with_zero_params_halves_state() {
        let mut g = Graph::new();
        let p = zero_params(&mut g, CellKind::Gru, 1, 2);
        let h = g.constant(Tensor::matrix(1, 2, vec![0.8, -0.4]).unwrap());
        let x = g.constant(Tensor::matrix(1, 1, vec![0.3]).unwrap());
        let next = cell_step(
            &mut g,
            &p,
            InternalState {
                hidden: h,
                cell: None,
            },
            x,
        )
        .unwrap();
        assert_eq!(g.value(next.hidden).data(), &[0.4, -0.2]);
    }

    #[test]
    fn gru_with_saturated_gates_matches_basic_cell() {
        let mut g = Graph::new();
        let gru = CellParams::init(&mut g, CellKind::Gru, 2, 3, 9).unwrap();
        let basic = CellParams::init(&mut g, CellKind::Basic, 2, 3, 4).unwrap();
        for gate in &gru.gates[..2] {
            g.param_value_mut(gate.w_x)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
            g.param_value_mut(gate.w_h)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
            g.param_value_mut(gate.bias)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 50.0);
        }
        for (src, dst) in [
            (gru.gates[2].w_x, basic.gates[0].w_x),
            (gru.gates[2].w_h, basic.gates[0].w_h),
        ] {
            let v = g.param_value(src).clone();
            *g.param_value_mut(dst) = v;
        }
        let bias = Tensor::vector(vec![0.1, -0.2, 0.3]);
        *g.param_value_mut(gru.gates[2].bias) = bias.clone();
        *g.param_value_mut(basic.gates[0].bias) = bias;

        let h = g.constant(Tensor::matrix(1, 3, vec![0.5, -0.3, 0.9]).unwrap());
        let x = g.constant(Tensor::matrix(1, 2, vec![0.7, -1.1]).unwrap());
        let a = cell_step(
            &mut g,
            &gru,
            InternalState {
                hidden: h,
                cell: None,
            },
            x,
        )
        .unwrap();
        let b = cell_step(
            &mut g,
            &basic,
            InternalState {
                hidden: h,
                cell: None,
            },
            x,
        )
        .unwrap();
        assert_eq!(g.value(a.hidden).data(), g.value(b.hidden).data());
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        for kind in CellKind::ALL {
            let mut g1 = Graph::new();
            let mut g2 = Graph::new();
            let p1 = CellParams::init(&mut g1, kind, 3, 4, 42).unwrap();
            let _ = CellParams::init(&mut g2, kind, 3, 4, 42).unwrap();
            assert_eq!(g1.params_snapshot(), g2.params_snapshot());
            assert_eq!(p1.gates.len(), kind.gate_names().len());
            let s = 1.0 / 2.0;
            for gate in &p1.gates {
                for id in [gate.w_x, gate.w_h] {
                    assert!(g1.param_value(id).data().iter().all(|v| v.abs() < s));
                }
            }
            assert_eq!(g1.param_value(p1.gates[0].w_x).shape(), &[3, 4]);
            assert_eq!(g1.param_value(p1.gates[0].w_h).shape(), &[4, 4]);
        }
    }

    #[test]
    fn lstm_forget_bias_is_one() {
        let mut g = Graph::new();
        let p = CellParams::init(&mut g, CellKind::Lstm, 2, 5, 1).unwrap();
        assert_eq!(g.param_value(p.gates[1].bias).data(), &[1.0; 5]);
        assert_eq!(g.param_value(p.gates[0].bias).data(), &[0.0; 5]);
    }

    #[test]
    fn readout_examples() {
        let mut g = Graph::new();
        let head = AffineHead::init(&mut g, HeadRole::Readout, 2, 2, 0).unwrap();
        g.param_value_mut(head.weight)
            .data_mut()
            .copy_from_slice(&[0.0; 4]);
        g.param_value_mut(head.bias)
            .data_mut()
            .copy_from_slice(&[0.5, -1.5]);
        let h = g.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        let state = InternalState {
            hidden: h,
            cell: None,
        };
        let y = readout(&mut g, &head, &state).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -1.5]);

        g.param_value_mut(head.weight)
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        g.param_value_mut(head.bias)
            .data_mut()
            .copy_from_slice(&[0.0, 0.0]);
        let y = readout(&mut g, &head, &state).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn role_mismatch_is_rejected() {
        let mut g = Graph::new();
        let dec = AffineHead::init(&mut g, HeadRole::Decoder, 2, 2, 0).unwrap();
        let h = g.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        let state = InternalState {
            hidden: h,
            cell: None,
        };
        assert!(matches!(
            readout(&mut g, &dec, &state),
            Err(CellError::RoleMismatch { .. })
        ));
    }

    #[test]
    fn decoder_input_examples() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let c = g.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        let gru_state = InternalState {
            hidden: h,
            cell: None,
        };
        let v = decoder_input(&mut g, &gru_state).unwrap();
        assert_eq!(g.value(v).data(), &[1.0, 2.0]);
        let lstm_state = InternalState {
            hidden: h,
            cell: Some(c),
        };
        let v = decoder_input(&mut g, &lstm_state).unwrap();
        assert_eq!(g.value(v).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn lstm_decoder_must_see_both_components() {
        let mut g = Graph::new();
        let cell = CellParams::init(&mut g, CellKind::Lstm, 1, 2, 0).unwrap();
        let dec = AffineHead::decoder_for(&mut g, &cell, 3, 0).unwrap();
        assert_eq!(dec.input, 4);
        let narrow = AffineHead::init(&mut Graph::new(), HeadRole::Decoder, 2, 3, 0).unwrap();
        let x = g.constant(Tensor::matrix(1, 1, vec![0.2]).unwrap());
        let s0 = InternalState::zeros(&mut g, CellKind::Lstm, 1, 2);
        let s1 = cell_step(&mut g, &cell, s0, x).unwrap();
        assert!(decode(&mut g, &dec, &s1).is_ok());
        assert!(matches!(
            decode(&mut g, &narrow, &s1),
            Err(CellError::Dimension {
                expected: 2,
                found: 4,
                ..
            })
        ));
    }

    #[test]
    fn unroll_is_causal() {
        for kind in CellKind::ALL {
            let xs_a = [0.3, -0.2, 0.5, 0.1];
            let xs_b = [0.3, -0.2, 0.5, -0.9];
            let run = |xs: &[f64]| {
                let mut g = Graph::new();
                let p = CellParams::init(&mut g, kind, 1, 3, 5).unwrap();
                let inputs: Vec<Var> = xs
                    .iter()
                    .map(|&v| g.constant(Tensor::matrix(1, 1, vec![v]).unwrap()))
                    .collect();
                let states = unroll(&mut g, &p, &inputs, None).unwrap();
                states
                    .iter()
                    .map(|s| g.value(s.hidden).data().to_vec())
                    .collect::<Vec<_>>()
            };
            let (a, b) = (run(&xs_a), run(&xs_b));
            assert_eq!(a.len(), 4);
            assert_eq!(a[..3], b[..3]);
            assert_ne!(a[3], b[3]);
        }
    }

    #[test]
    fn params_file_round_trip() {
        let mut g = Graph::new();
        let cell = CellParams::init(&mut g, CellKind::Lstm, 2, 3, 8).unwrap();
        let _ = AffineHead::init(&mut g, HeadRole::Readout, 3, 2, 8).unwrap();
        let file = ParamsFile {
            kind: cell.kind,
            input_size: 2,
            hidden_size: 3,
            params: g.params_snapshot(),
        };
        let text = file.to_text();
        assert!(text.starts_with("PSDLAB-PARAMS-v1\ncell lstm 2 3\n"));
        let parsed = ParamsFile::parse(&text).unwrap();
        assert_eq!(parsed, file);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn params_file_rejects_bad_header() {
        assert!(matches!(
            ParamsFile::parse("PSDLAB-PARAMS-v0\n"),
            Err(CellError::Parse { line: 1, .. })
        ));
    }
}
