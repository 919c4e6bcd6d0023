//! Parameter-efficient fine-tuning: LoRA and BitFit.
//!
//! LoRA adds `s·B·A` (with `s = alpha / r`) to targeted linear layers and
//! freezes every base parameter. `A ~ N(0, 0.02)` and `B = 0`, so a freshly
//! attached adapter leaves the model's outputs unchanged. Adapter matrices
//! live in the model's parameter store under `lora.<layer>.{A|B}`.
//!
//! BitFit freezes everything except parameters whose name ends in `.bias`
//! (layer-norm biases and an untied LM-head bias included).

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MiniTransformer, INIT_STD, LINEAR_LAYERS};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout_p: f64,
    pub target_names: Vec<String>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            alpha: 32.0,
            dropout_p: 0.05,
            target_names: vec!["q_proj".into(), "v_proj".into()],
        }
    }
}

impl LoraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::config("lora.rank", "must be >= 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("lora.alpha", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("lora.dropout_p", "must be in [0, 1)"));
        }
        if self.target_names.is_empty() {
            return Err(Error::config("lora.target_names", "must not be empty"));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// An attached adapter: its config and the layer prefixes it wraps
/// (e.g. `layers.0.q_proj`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraState {
    pub config: LoraConfig,
    pub layers: Vec<String>,
}

impl LoraState {
    pub fn a_name(layer: &str) -> String {
        format!("lora.{layer}.A")
    }

    pub fn b_name(layer: &str) -> String {
        format!("lora.{layer}.B")
    }

    pub fn targets(&self, layer: &str) -> bool {
        self.layers.iter().any(|l| l == layer)
    }

    pub fn scale(&self) -> f64 {
        self.config.scale()
    }
}

fn linear_layers(model: &MiniTransformer) -> Vec<String> {
    (0..model.config().n_layers)
        .flat_map(|i| LINEAR_LAYERS.iter().map(move |n| format!("layers.{i}.{n}")))
        .collect()
}

/// Wraps every linear layer whose name contains one of `cfg.target_names`.
pub fn attach_lora(model: &mut MiniTransformer, cfg: &LoraConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    if model.lora.is_some() {
        return Err(Error::State("a LoRA adapter is already attached".into()));
    }
    let all = linear_layers(model);
    let mut layers = Vec::new();
    for target in &cfg.target_names {
        let hits: Vec<&String> = all.iter().filter(|l| l.contains(target.as_str())).collect();
        if hits.is_empty() {
            return Err(Error::Targeting {
                target: target.clone(),
                available: LINEAR_LAYERS.join(", "),
            });
        }
        layers.extend(hits.into_iter().cloned());
    }
    // keep forward order, drop duplicates from overlapping targets
    layers.sort_by_key(|l| all.iter().position(|a| a == l));
    layers.dedup();

    let mut rng = rng::stream(seed, "lora-init");
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    model.params.set_all_requires_grad(false);
    for layer in &layers {
        let w = model.params.get(&format!("{layer}.weight"))?;
        let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
        let a: Vec<f64> = (0..cfg.rank * in_dim).map(|_| normal.sample(&mut rng)).collect();
        let a = Tensor::new(&[cfg.rank, in_dim], a)?.with_requires_grad(true);
        let b = Tensor::zeros(&[out_dim, cfg.rank]).with_requires_grad(true);
        model.params.insert(LoraState::a_name(layer), a)?;
        model.params.insert(LoraState::b_name(layer), b)?;
    }
    model.lora = Some(LoraState {
        config: cfg.clone(),
        layers,
    });
    Ok(())
}

/// Folds `W += s·B·A` into the base weights and removes the adapter. The
/// result is a plain model with every parameter trainable again.
pub fn merge_lora(model: &mut MiniTransformer) -> Result<()> {
    let state = model
        .lora
        .take()
        .ok_or_else(|| Error::State("no LoRA adapter attached".into()))?;
    let s = state.scale();
    for layer in &state.layers {
        let a = model
            .params
            .remove(&LoraState::a_name(layer))
            .ok_or_else(|| Error::State(format!("adapter matrix A missing for {layer}")))?;
        let b = model
            .params
            .remove(&LoraState::b_name(layer))
            .ok_or_else(|| Error::State(format!("adapter matrix B missing for {layer}")))?;
        let r = a.shape()[0];
        let in_dim = a.shape()[1];
        let out_dim = b.shape()[0];
        let w = model.params.get_mut(&format!("{layer}.weight"))?;
        let wd = w.data_mut();
        for o in 0..out_dim {
            for i in 0..in_dim {
                let mut acc = 0.0;
                for k in 0..r {
                    acc += b.data()[o * r + k] * a.data()[k * in_dim + i];
                }
                wd[o * in_dim + i] += s * acc;
            }
        }
    }
    model.params.set_all_requires_grad(true);
    Ok(())
}

/// Restricts training to bias parameters.
pub fn apply_bitfit(model: &mut MiniTransformer) {
    for (name, t) in model.params.iter_mut() {
        t.set_requires_grad(name.ends_with(".bias"));
    }
}

/// Names BitFit leaves trainable.
pub fn bitfit_mask(model: &MiniTransformer) -> Vec<String> {
    model
        .params()
        .names()
        .filter(|n| n.ends_with(".bias"))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainableCount {
    pub trainable: usize,
    pub total: usize,
    pub fraction: f64,
}

pub fn count_trainable(model: &MiniTransformer) -> TrainableCount {
    let trainable = model.params().trainable_elements();
    let total = model.params().total_elements();
    TrainableCount {
        trainable,
        total,
        fraction: trainable as f64 / total as f64,
    }
}

/// Which adapter, if any, a training run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterKind {
    #[default]
    None,
    Lora(LoraConfig),
    Bitfit,
}

impl AdapterKind {
    pub fn name(&self) -> &'static str {
        match self {
            AdapterKind::None => "none",
            AdapterKind::Lora(_) => "lora",
            AdapterKind::Bitfit => "bitfit",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(AdapterKind::None),
            "lora" => Ok(AdapterKind::Lora(LoraConfig::default())),
            "bitfit" => Ok(AdapterKind::Bitfit),
            other => Err(Error::config("adapter", format!("unknown adapter `{other}`"))),
        }
    }

    /// Applies the adapter to a plain model.
    pub fn apply(&self, model: &mut MiniTransformer, seed: u64) -> Result<()> {
        match self {
            AdapterKind::None => Ok(()),
            AdapterKind::Lora(cfg) => attach_lora(model, cfg, seed),
            AdapterKind::Bitfit => {
                apply_bitfit(model);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn model() -> MiniTransformer {
        MiniTransformer::init(&ModelConfig::student_xs(40), 1).unwrap()
    }

    #[test]
    fn lora_trainables_are_exactly_a_and_b() {
        let mut m = model();
        attach_lora(&mut m, &LoraConfig::default(), 0).unwrap();
        let mut names = m.params().trainable_names();
        names.sort();
        let mut want = Vec::new();
        for l in 0..2 {
            for p in ["q_proj", "v_proj"] {
                want.push(format!("lora.layers.{l}.{p}.A"));
                want.push(format!("lora.layers.{l}.{p}.B"));
            }
        }
        want.sort();
        assert_eq!(names, want);
    }

    #[test]
    fn unknown_target_lists_available_layers() {
        let mut m = model();
        let cfg = LoraConfig {
            target_names: vec!["gate_proj".into()],
            ..Default::default()
        };
        let err = attach_lora(&mut m, &cfg, 0).unwrap_err();
        assert!(err.to_string().contains("q_proj"), "{err}");
    }

    #[test]
    fn merge_without_adapter_is_state_error() {
        let mut m = model();
        assert!(matches!(merge_lora(&mut m), Err(Error::State(_))));
        attach_lora(&mut m, &LoraConfig::default(), 0).unwrap();
        merge_lora(&mut m).unwrap();
        assert!(matches!(merge_lora(&mut m), Err(Error::State(_))));
    }

    #[test]
    fn merge_right_after_attach_keeps_weights() {
        let base = model();
        let mut m = base.clone();
        attach_lora(&mut m, &LoraConfig::default(), 3).unwrap();
        merge_lora(&mut m).unwrap();
        assert!(m.params().bit_eq(base.params()));
    }

    #[test]
    fn bitfit_trainable_set_is_bias_set() {
        let mut m = model();
        apply_bitfit(&mut m);
        let mut got = m.params().trainable_names();
        let mut want = bitfit_mask(&m);
        got.sort();
        want.sort();
        assert_eq!(got, want);
        let c = count_trainable(&m);
        let bias: usize = m
            .params()
            .iter()
            .filter(|(n, _)| n.ends_with(".bias"))
            .map(|(_, t)| t.numel())
            .sum();
        assert_eq!(c.trainable, bias);
    }

    #[test]
    fn plain_model_fully_trainable() {
        assert_eq!(count_trainable(&model()).fraction, 1.0);
    }
}
