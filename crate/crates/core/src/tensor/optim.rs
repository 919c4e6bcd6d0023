//! AdamW with decoupled weight decay.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::arena::Buffer;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be >= 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, format!("{b} not in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be > 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Moments {
    m: Buffer,
    v: Buffer,
}

/// Optimizer state: step counter plus first/second moments per parameter.
/// Moment buffers are allocated lazily on a parameter's first update.
#[derive(Debug)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    state: HashMap<String, Moments>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            step: 0,
            state: HashMap::new(),
        })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    /// For schedules; the new rate applies from the next step.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.cfg.learning_rate = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter that holds a gradient.
    /// Gradients are left in place; call [`ParamStore::zero_grad`] after.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (name, p) in params.iter() {
            if let Some(g) = p.grad() {
                if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "gradient of `{name}` contains {bad}"
                    )));
                }
            }
        }
        self.step += 1;
        let AdamWConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        } = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);

        for (name, p) in params.iter_mut() {
            if !p.requires_grad() {
                continue;
            }
            if p.grad().is_none() {
                continue;
            }
            let n = p.numel();
            let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: Buffer::zeros(n),
                v: Buffer::zeros(n),
            });
            let (theta, grad) = p.data_mut_with_grad();
            let grad = grad.expect("checked above");
            for i in 0..n {
                let g = grad[i];
                theta[i] -= lr * wd * theta[i];
                st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
                st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(v: f64, g: Option<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let mut t = Tensor::new(&[1], vec![v]).unwrap().with_requires_grad(true);
        if let Some(g) = g {
            t.accumulate_grad(&[g]).unwrap();
        }
        s.insert("w", t).unwrap();
        s
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut s = store(0.7, Some(0.0));
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        opt.step(&mut s).unwrap();
        assert_eq!(s.get("w").unwrap().item(), 0.7);
    }

    #[test]
    fn single_step_matches_hand_formula() {
        let cfg = AdamWConfig {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            ..Default::default()
        };
        let theta0: f64 = 0.5;
        let mut s = store(theta0, Some(1.0));
        AdamW::new(cfg).unwrap().step(&mut s).unwrap();
        // t=1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
        let decayed = theta0 - 1e-3 * 0.01 * theta0;
        let want = decayed - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((s.get("w").unwrap().item() - want).abs() < 1e-15);
    }

    #[test]
    fn decay_only_shrinks_by_lr_wd_theta() {
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let theta0 = 2.0;
        let mut s = store(theta0, Some(0.0));
        AdamW::new(cfg).unwrap().step(&mut s).unwrap();
        assert_eq!(s.get("w").unwrap().item(), theta0 - 0.1 * 0.5 * theta0);
    }

    #[test]
    fn lr_zero_is_identity() {
        let mut s = store(-1.25, Some(3.0));
        let mut opt = AdamW::new(AdamWConfig {
            learning_rate: 0.0,
            ..Default::default()
        })
        .unwrap();
        for _ in 0..3 {
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.get("w").unwrap().item().to_bits(), (-1.25f64).to_bits());
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = store(1.0, Some(f64::NAN));
        let err = AdamW::new(AdamWConfig::default())
            .unwrap()
            .step(&mut s)
            .unwrap_err();
        assert!(err.to_string().contains("`w`"), "{err}");
    }

    #[test]
    fn frozen_params_untouched() {
        let mut s = store(1.0, Some(1.0));
        s.get_mut("w").unwrap().set_requires_grad(false);
        AdamW::new(AdamWConfig::default()).unwrap().step(&mut s).unwrap();
        assert_eq!(s.get("w").unwrap().item(), 1.0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(AdamW::new(AdamWConfig {
            beta1: 1.0,
            ..Default::default()
        })
        .is_err());
        assert!(AdamW::new(AdamWConfig {
            eps: 0.0,
            ..Default::default()
        })
        .is_err());
    }
}
