//! Adam with bias correction and a linear warmup / linear decay schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::{ParamId, ParamSet};

/// Learning-rate schedule: linear warmup from 0 to `base_lr` over
/// `warmup_steps`, then linear decay to 0 at `total_steps`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_lr <= 0.0 {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        if self.total_steps <= self.warmup_steps {
            return Err(Error::Config(
                "total_steps must exceed warmup_steps".into(),
            ));
        }
        Ok(())
    }
}

pub fn lr_at(step: u64, cfg: &LrConfig) -> f64 {
    debug_assert!(step <= cfg.total_steps);
    if cfg.warmup_steps > 0 && step <= cfg.warmup_steps {
        cfg.base_lr * step as f64 / cfg.warmup_steps as f64
    } else {
        let span = (cfg.total_steps - cfg.warmup_steps) as f64;
        let remaining = cfg.total_steps.saturating_sub(step) as f64;
        cfg.base_lr * remaining / span
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state: per-parameter moments, a step counter, and the schedule.
/// The `trainable` mask freezes parameters without disturbing their moments.
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    lr_cfg: LrConfig,
    trainable: Vec<bool>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr_cfg: LrConfig) -> Result<Self> {
        lr_cfg.validate()?;
        Ok(Adam {
            m: params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect(),
            v: params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect(),
            step: 0,
            lr_cfg,
            trainable: vec![true; params.len()],
        })
    }

    /// Restrict updates to parameters whose name satisfies `filter`.
    pub fn with_filter(
        params: &ParamSet,
        lr_cfg: LrConfig,
        filter: impl Fn(&str) -> bool,
    ) -> Result<Self> {
        let mut adam = Self::new(params, lr_cfg)?;
        adam.trainable = params.iter().map(|(_, name, _)| filter(name)).collect();
        Ok(adam)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over all trainable parameters, in place.
    /// Returns the learning rate that was applied.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<f64> {
        let t = self.step + 1;
        let lr = lr_at(t.min(self.lr_cfg.total_steps), &self.lr_cfg);
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        for i in 0..params.len() {
            if !self.trainable[i] {
                continue;
            }
            let id = ParamId(i);
            let Some(g) = grads.get(id) else {
                continue;
            };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    name: params.name(id).to_string(),
                });
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let data = params.get_mut(id).data_mut();
            for ((w, gi), (mi, vi)) in data.iter_mut().zip(g).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
        self.step = t;
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(value: Vec<f64>) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::vector(value)).unwrap();
        ps
    }

    fn grads_for(ps: &ParamSet, g: Vec<f64>) -> Gradients {
        // Drive a gradient through a real graph so the plumbing is exercised.
        use crate::graph::Graph;
        let graph = Graph::train();
        let w = graph.param(ps, ps.id_of("w").unwrap());
        let gv = graph.constant(Tensor::vector(g));
        let loss = w.mul(&gv).unwrap().sum_all();
        graph.backward(loss, ps.len()).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = LrConfig {
            base_lr: 2e-5,
            warmup_steps: 17_304,
            total_steps: 57_680,
        };
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert_eq!(lr_at(17_304, &cfg), 2e-5);
        assert_eq!(lr_at(57_680, &cfg), 0.0);
        // Monotone up before warmup, down after.
        assert!(lr_at(8_000, &cfg) < lr_at(17_000, &cfg));
        assert!(lr_at(20_000, &cfg) > lr_at(50_000, &cfg));
    }

    #[test]
    fn first_step_matches_hand_update() {
        // theta=0, g=1, lr=0.1: bias-corrected update is lr * g/(|g|+eps).
        let mut ps = one_param(vec![0.0]);
        let g = grads_for(&ps, vec![1.0]);
        let cfg = LrConfig {
            base_lr: 0.1,
            warmup_steps: 0,
            total_steps: u64::MAX,
        };
        let mut adam = Adam::new(&ps, cfg).unwrap();
        adam.step(&mut ps, &g).unwrap();
        let w = ps.get(ps.id_of("w").unwrap()).data()[0];
        assert!((w + 0.1).abs() < 1e-7, "got {w}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut ps = one_param(vec![1.5, -2.0]);
        let g = grads_for(&ps, vec![0.0, 0.0]);
        let cfg = LrConfig {
            base_lr: 0.1,
            warmup_steps: 0,
            total_steps: 1000,
        };
        let mut adam = Adam::new(&ps, cfg).unwrap();
        adam.step(&mut ps, &g).unwrap();
        assert_eq!(ps.get(ps.id_of("w").unwrap()).data(), &[1.5, -2.0]);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let mut ps = one_param(vec![0.3, -0.7]);
            let cfg = LrConfig {
                base_lr: 0.05,
                warmup_steps: 2,
                total_steps: 50,
            };
            let mut adam = Adam::new(&ps, cfg).unwrap();
            for step in 0..10 {
                let g = grads_for(&ps, vec![0.1 * (step as f64 + 1.0), -0.2]);
                adam.step(&mut ps, &g).unwrap();
            }
            ps.get(ps.id_of("w").unwrap()).data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b, "trajectories must be bit-identical");
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut ps = one_param(vec![0.0]);
        let g = grads_for(&ps, vec![f64::NAN]);
        let cfg = LrConfig {
            base_lr: 0.1,
            warmup_steps: 0,
            total_steps: 10,
        };
        let mut adam = Adam::new(&ps, cfg).unwrap();
        match adam.step(&mut ps, &g) {
            Err(Error::NonFiniteGradient { name }) => assert_eq!(name, "w"),
            other => panic!("expected NonFiniteGradient, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn filter_freezes_parameters() {
        let mut ps = ParamSet::new();
        ps.add("frozen.w", Tensor::vector(vec![1.0])).unwrap();
        ps.add("live.w", Tensor::vector(vec![1.0])).unwrap();
        use crate::graph::Graph;
        let graph = Graph::train();
        let a = graph.param(&ps, ps.id_of("frozen.w").unwrap());
        let b = graph.param(&ps, ps.id_of("live.w").unwrap());
        let loss = a.add(&b).unwrap().sum_all();
        let grads = graph.backward(loss, ps.len()).unwrap();
        let cfg = LrConfig {
            base_lr: 0.1,
            warmup_steps: 0,
            total_steps: 10,
        };
        let mut adam = Adam::with_filter(&ps, cfg, |n| n.starts_with("live.")).unwrap();
        adam.step(&mut ps, &grads).unwrap();
        assert_eq!(ps.get(ps.id_of("frozen.w").unwrap()).data(), &[1.0]);
        assert!(ps.get(ps.id_of("live.w").unwrap()).data()[0] < 1.0);
    }
}
