use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::autodiff::{Graph, ParamId};

/// Global gradient-norm threshold.
pub const CLIP_NORM: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` in place. `step` is 1-based.
pub fn adam_step(
    cfg: &AdamConfig,
    step: u64,
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Rescales all parameter gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping when clipping happened.
pub fn clip_global_norm(g: &mut Graph, params: &[ParamId], max_norm: f64) -> Option<f64> {
    let norm = params
        .iter()
        .map(|&p| g.param_grad(p).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm <= max_norm {
        return None;
    }
    let scale = max_norm / norm;
    for &p in params {
        g.param_grad_mut(p).iter_mut().for_each(|v| *v *= scale);
    }
    Some(norm)
}

/// Adam state for every parameter of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, g: &Graph) -> Self {
        let shapes: Vec<usize> = g.param_ids().map(|p| g.param_value(p).len()).collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies the accumulated gradients. Refuses (without touching any
    /// parameter) if a gradient is not finite.
    pub fn step(&mut self, g: &mut Graph) -> Result<()> {
        let ids: Vec<ParamId> = g.param_ids().collect();
        if let Some(bad) = ids
            .iter()
            .find(|&&p| g.param_grad(p).iter().any(|v| !v.is_finite()))
        {
            return Err(TrainError::NonFiniteGradient(
                g.param_name(*bad).to_string(),
            ));
        }
        self.step += 1;
        for (i, &p) in ids.iter().enumerate() {
            let grad = g.param_grad(p).to_vec();
            let param = g.param_value_mut(p).data_mut();
            adam_step(
                &self.config,
                self.step,
                param,
                &grad,
                &mut self.m[i],
                &mut self.v[i],
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.3, -1.2];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        for step in 1..=10 {
            adam_step(&cfg, step, &mut p, &[0.0, 0.0], &mut m, &mut v);
        }
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        let mut prev = 0.0;
        for step in 1..=2000 {
            adam_step(&cfg, step, &mut p, &[3.0], &mut m, &mut v);
            let delta = (p[0] - prev).abs();
            prev = p[0];
            assert!(
                (delta - cfg.lr).abs() < 1e-3 * cfg.lr,
                "step {step}: {delta}"
            );
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut g = Graph::new();
        let p = g.param("w", Tensor::vector(vec![1.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &g);
        g.param_grad_mut(p)[0] = f64::NAN;
        assert_eq!(
            adam.step(&mut g),
            Err(TrainError::NonFiniteGradient("w".into()))
        );
        assert_eq!(g.param_value(p).data(), &[1.0]);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = Graph::new();
        let a = g.param("a", Tensor::vector(vec![0.0, 0.0])).unwrap();
        let b = g.param("b", Tensor::vector(vec![0.0])).unwrap();
        g.param_grad_mut(a).copy_from_slice(&[30.0, 0.0]);
        g.param_grad_mut(b).copy_from_slice(&[40.0]);
        let before = clip_global_norm(&mut g, &[a, b], CLIP_NORM);
        assert_eq!(before, Some(50.0));
        assert!((g.param_grad(a)[0] - 6.0).abs() < 1e-12);
        assert!((g.param_grad(b)[0] - 8.0).abs() < 1e-12);
        assert_eq!(clip_global_norm(&mut g, &[a, b], CLIP_NORM), None);
    }
}
