use serde::{Deserialize, Serialize};

use super::Result;
use crate::autodiff::{Graph, ParamId, Tensor};
use crate::cells::{AffineHead, CellKind, CellParams, HeadRole, ParamsFile};
use crate::predictive_state::{Featurizer, FeaturizerKind, PsdError};

/// What the decoder is asked to predict and how strongly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdSettings {
    pub k: usize,
    pub phi: FeaturizerKind,
    pub lambda: f64,
    pub obs_dim: usize,
}

impl PsdSettings {
    pub fn new(
        k: usize,
        phi: FeaturizerKind,
        lambda: f64,
        obs_dim: usize,
    ) -> std::result::Result<Self, PsdError> {
        if k == 0 {
            return Err(PsdError::ZeroHorizon);
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(PsdError::NegativeLambda(lambda));
        }
        Ok(Self {
            k,
            phi,
            lambda,
            obs_dim,
        })
    }

    pub fn featurizer(&self) -> Featurizer {
        Featurizer::new(self.phi, self.k * self.obs_dim)
    }

    /// With `λ = 0` the decoder branch is skipped entirely.
    pub fn active(&self) -> bool {
        self.lambda > 0.0
    }
}

/// A recurrent cell with its task head and optional decoder / policy std.
pub struct Model {
    pub graph: Graph,
    pub cell: CellParams,
    pub readout: AffineHead,
    pub decoder: Option<AffineHead>,
    pub log_std: Option<ParamId>,
    pub psd: Option<PsdSettings>,
}

impl Model {
    /// Registers parameters in a fixed order: cell, readout, decoder,
    /// policy log-std. Each block draws from its own random stream, so
    /// adding a decoder leaves the other initial values untouched.
    pub fn new(
        kind: CellKind,
        input: usize,
        hidden: usize,
        output: usize,
        psd: Option<PsdSettings>,
        init_log_std: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut graph = Graph::new();
        let cell = CellParams::init(&mut graph, kind, input, hidden, seed)?;
        let readout = AffineHead::init(&mut graph, HeadRole::Readout, hidden, output, seed)?;
        let decoder = match &psd {
            Some(s) => Some(AffineHead::decoder_for(
                &mut graph,
                &cell,
                s.featurizer().output_len(),
                seed,
            )?),
            None => None,
        };
        let log_std = match init_log_std {
            Some(v) => Some(graph.param("policy.log_std", Tensor::filled(vec![output], v))?),
            None => None,
        };
        Ok(Self {
            graph,
            cell,
            readout,
            decoder,
            log_std,
            psd,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.graph.param_ids().collect()
    }

    pub fn decoder_ids(&self) -> Vec<ParamId> {
        self.decoder
            .map(|d| vec![d.weight, d.bias])
            .unwrap_or_default()
    }

    pub fn params_file(&self) -> ParamsFile {
        ParamsFile {
            kind: self.cell.kind,
            input_size: self.cell.input_size,
            hidden_size: self.cell.hidden_size,
            params: self.graph.params_snapshot(),
        }
    }
}
