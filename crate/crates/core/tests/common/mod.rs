//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use psdlab::autodiff::{Graph, ParamId, Var};
use psdlab::cells::CellKind;
use psdlab::predictive_state::{joint_loss, FeaturizerKind};
use psdlab::rng::{stream, Stream};
use psdlab::training::{filtering_loss, imitation_loss, psd_term, Model, PsdSettings};
use rand::Rng;

/// Step of the five-point central stencil. Large enough that rounding noise
/// (about `ε·|f|/h`) stays far below the smallest gradients checked.
pub const FD_STEP: f64 = 1e-3;
/// Absolute floor under the relative-error denominator, so entries whose
/// true gradient is ~0 are judged on absolute error.
pub const FD_FLOOR: f64 = 1e-6;

/// A tiny randomized problem: model plus observation (and action) data.
pub struct TinyProblem {
    pub model: Model,
    pub obs: Vec<Vec<Vec<f64>>>,
    pub acts: Option<Vec<Vec<Vec<f64>>>>,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct TinySpec {
    pub kind: CellKind,
    pub steps: usize,
    pub hidden: usize,
    pub dim: usize,
    pub k: usize,
    pub phi: FeaturizerKind,
    pub lambda: f64,
    pub imitation: bool,
    pub batch: usize,
    pub seed: u64,
}

impl TinySpec {
    /// Draws a spec within T ≤ 6, H ≤ 4, D ≤ 3, k ≤ 3.
    pub fn random(kind: CellKind, index: u64) -> Self {
        let mut rng = stream(index, Stream::Test, kind as u64);
        let steps = rng.random_range(3..=6);
        Self {
            kind,
            steps,
            hidden: rng.random_range(1..=4),
            dim: rng.random_range(1..=3),
            k: rng.random_range(1..=3.min(steps - 1)),
            phi: if rng.random_bool(0.5) {
                FeaturizerKind::Identity
            } else {
                FeaturizerKind::SecondOrder
            },
            lambda: if rng.random_bool(0.5) { 0.0 } else { 1.0 },
            imitation: rng.random_bool(0.3),
            batch: rng.random_range(1..=3),
            seed: index,
        }
    }
}

impl TinyProblem {
    pub fn new(spec: &TinySpec) -> Self {
        let mut rng = stream(spec.seed, Stream::Test, 1000 + spec.kind as u64);
        let psd = PsdSettings::new(spec.k, spec.phi, spec.lambda, spec.dim).unwrap();
        let out = if spec.imitation { 2 } else { spec.dim };
        let model = Model::new(
            spec.kind,
            spec.dim,
            spec.hidden,
            out,
            Some(psd),
            None,
            spec.seed,
        )
        .unwrap();
        let mut seq = |len: usize, width: usize| -> Vec<Vec<f64>> {
            (0..len)
                .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        };
        // ragged batch: later rows are one step shorter
        let lens: Vec<usize> = (0..spec.batch)
            .map(|b| (spec.steps - b.min(1)).max(2))
            .collect();
        let obs: Vec<_> = lens.iter().map(|&l| seq(l, spec.dim)).collect();
        let acts = spec
            .imitation
            .then(|| lens.iter().map(|&l| seq(l, 2)).collect());
        Self {
            model,
            obs,
            acts,
            lambda: spec.lambda,
        }
    }

    /// Builds `L + λR` on a fresh tape and returns its root.
    pub fn objective(&mut self) -> Var {
        TinyObjective {
            model: &mut self.model,
            obs: &self.obs,
            acts: &self.acts,
            lambda: self.lambda,
        }
        .build()
    }

    pub fn value(&mut self) -> f64 {
        let root = self.objective();
        self.model.graph.value(root).item()
    }

    /// Largest relative error between backprop and five-point central
    /// differences over every parameter entry.
    pub fn max_fd_error(&mut self) -> f64 {
        let Self {
            model,
            obs,
            acts,
            lambda,
        } = self;
        let obs = &*obs;
        let acts = &*acts;
        let lambda = *lambda;
        max_fd_error(model, |m| {
            let mut p = TinyObjective {
                model: m,
                obs,
                acts,
                lambda,
            };
            p.build()
        })
    }
}

struct TinyObjective<'a> {
    model: &'a mut Model,
    obs: &'a [Vec<Vec<f64>>],
    acts: &'a Option<Vec<Vec<Vec<f64>>>>,
    lambda: f64,
}

impl TinyObjective<'_> {
    fn build(&mut self) -> Var {
        let m = &mut *self.model;
        let g = &mut m.graph;
        g.reset();
        let obs: Vec<&[Vec<f64>]> = self.obs.iter().map(Vec::as_slice).collect();
        let out = match self.acts {
            Some(acts) => {
                let a: Vec<Option<&[Vec<f64>]>> = acts.iter().map(|x| Some(x.as_slice())).collect();
                imitation_loss(g, &m.cell, &m.readout, &obs, &a).unwrap()
            }
            None => filtering_loss(g, &m.cell, &m.readout, &obs).unwrap(),
        };
        let settings = m.psd.unwrap();
        let decoder = m.decoder.unwrap();
        let (r, _) = psd_term(g, &decoder, &out.states, &obs, &settings).unwrap();
        joint_loss(g, out.loss, r, self.lambda).unwrap()
    }
}

/// Largest relative error between backprop and five-point central
/// differences of `objective`, which must rebuild the tape from scratch.
pub fn max_fd_error(model: &mut Model, mut objective: impl FnMut(&mut Model) -> Var) -> f64 {
    let root = objective(model);
    model.graph.zero_grad();
    model.graph.backward(root).unwrap();
    let ids: Vec<ParamId> = model.graph.param_ids().collect();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&p| model.graph.param_grad(p).to_vec())
        .collect();
    let mut worst: f64 = 0.0;
    for (&p, grads) in ids.iter().zip(&analytic) {
        for (i, &a) in grads.iter().enumerate() {
            let orig = model.graph.param_value(p).data()[i];
            let mut at = |x: f64| {
                model.graph.param_value_mut(p).data_mut()[i] = x;
                let root = objective(model);
                model.graph.value(root).item()
            };
            let h = FD_STEP;
            let near = at(orig + h) - at(orig - h);
            let far = at(orig + 2.0 * h) - at(orig - 2.0 * h);
            model.graph.param_value_mut(p).data_mut()[i] = orig;
            let numeric = (8.0 * near - far) / (12.0 * h);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

pub fn graph_param_values(g: &Graph) -> Vec<Vec<f64>> {
    g.param_ids()
        .map(|p| g.param_value(p).data().to_vec())
        .collect()
}
