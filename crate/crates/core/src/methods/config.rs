use serde::{Deserialize, Serialize};

use crate::adapters::AdapterKind;
use crate::error::{Error, Result};
use crate::tensor::AdamWConfig;

/// Learning rates outside this range are rejected (0 is allowed as an
/// explicit no-update probe).
pub const LR_RANGE: (f64, f64) = (1e-7, 1e-4);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples per optimizer step, accumulated one at a time.
    pub batch_size: usize,
    pub train_set_size: usize,
    pub seed: u64,
    pub adapter: AdapterKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamWConfig::default();
        Self {
            learning_rate: 1e-5,
            epochs: 40,
            batch_size: 1,
            train_set_size: 20,
            seed: 0,
            adapter: AdapterKind::None,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            weight_decay: opt.weight_decay,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate;
        if lr != 0.0 && !(LR_RANGE.0..=LR_RANGE.1).contains(&lr) {
            return Err(Error::config(
                "learning_rate",
                format!("{lr} outside [{:e}, {:e}]", LR_RANGE.0, LR_RANGE.1),
            ));
        }
        for (field, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("train_set_size", self.train_set_size),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if let AdapterKind::Lora(l) = &self.adapter {
            l.validate()?;
        }
        self.adamw().validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlSupport {
    /// KL over the verbalizer tokens only, renormalized.
    #[default]
    VerbalizerTokens,
    FullVocab,
}

impl KlSupport {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "verbalizer_tokens" => Ok(KlSupport::VerbalizerTokens),
            "full_vocab" => Ok(KlSupport::FullVocab),
            other => Err(Error::config("kl_support", format!("unknown value `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KlSupport::VerbalizerTokens => "verbalizer_tokens",
            KlSupport::FullVocab => "full_vocab",
        }
    }
}

/// Which way the distillation KL points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(teacher ‖ student)`, the usual distillation choice.
    #[default]
    Forward,
    /// `KL(student ‖ teacher)`.
    Reverse,
}

impl KlDirection {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(KlDirection::Forward),
            "reverse" => Ok(KlDirection::Reverse),
            other => Err(Error::config("kl_direction", format!("unknown value `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KlDirection::Forward => "forward",
            KlDirection::Reverse => "reverse",
        }
    }
}

/// Context-distillation settings: `L = α·KL + (1−α)·CE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub kl_support: KlSupport,
    pub kl_direction: KlDirection,
    /// Supports shown to the teacher.
    pub k: usize,
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 1.0,
            kl_support: KlSupport::VerbalizerTokens,
            kl_direction: KlDirection::Forward,
            k: 8,
            train: TrainConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", format!("{} not in [0, 1]", self.alpha)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config(
                "temperature",
                format!("{} must be > 0", self.temperature),
            ));
        }
        self.train.validate()
    }
}

/// One step's decomposed loss. `l_kl` is absent when no teacher is involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_kl: Option<f64>,
    pub l_ce: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    /// `α·l_kl + (1−α)·l_ce`, evaluated the same way the training graph
    /// combines the terms.
    pub fn combine(alpha: f64, l_kl: f64, l_ce: f64) -> f64 {
        if alpha == 0.0 {
            l_ce
        } else if alpha == 1.0 {
            l_kl
        } else {
            alpha * l_kl + (1.0 - alpha) * l_ce
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_range_enforced() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.learning_rate = 1e-3;
        assert!(c.validate().unwrap_err().to_string().contains("learning_rate"));
        c.learning_rate = 0.0;
        c.validate().unwrap();
    }

    #[test]
    fn alpha_range() {
        let d = DistillConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(d.validate().unwrap_err().to_string().contains("alpha"));
    }
}
