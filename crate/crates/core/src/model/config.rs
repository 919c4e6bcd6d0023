use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three specials plus two labels' worth of verbalizer forms.
pub const MIN_VOCAB: usize = 7;

/// Decoder-only transformer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout_p: f64,
    pub tie_embeddings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Name, shape, and initializer of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(name: String, shape: &[usize], init: Init) -> Self {
        Self {
            name,
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_bias(&self) -> bool {
        self.name.ends_with(".bias")
    }
}

pub const PRESETS: &[&str] = &["student-xs", "teacher-s"];

/// Linear layers inside each block, in forward order.
pub const LINEAR_LAYERS: &[&str] = &["q_proj", "k_proj", "v_proj", "out_proj", "ff_in", "ff_out"];

impl ModelConfig {
    /// 2 layers, width 64, 4 heads.
    pub fn student_xs(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            max_seq_len: 384,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            dropout_p: 0.1,
            tie_embeddings: true,
        }
    }

    /// 4 layers, width 128, 8 heads.
    pub fn teacher_s(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            max_seq_len: 384,
            d_model: 128,
            n_layers: 4,
            n_heads: 8,
            d_ff: 512,
            dropout_p: 0.1,
            tie_embeddings: true,
        }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Result<Self> {
        match name {
            "student-xs" => Ok(Self::student_xs(vocab_size)),
            "teacher-s" => Ok(Self::teacher_s(vocab_size)),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (available: {})", PRESETS.join(", ")),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config(
                "d_model",
                format!("{} not divisible by n_heads {}", self.d_model, self.n_heads),
            ));
        }
        if self.vocab_size < MIN_VOCAB {
            return Err(Error::config(
                "vocab_size",
                format!("{} < minimum {MIN_VOCAB}", self.vocab_size),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p", format!("{} not in [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Every parameter in creation order. Names follow
    /// `layers.<i>.<name>.{weight|bias}`; linear weights are `[out × in]`.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (d, f) = (self.d_model, self.d_ff);
        let mut specs = vec![
            ParamSpec::new("embed_tokens.weight".into(), &[self.vocab_size, d], Init::Normal),
            ParamSpec::new("embed_positions.weight".into(), &[self.max_seq_len, d], Init::Normal),
        ];
        for i in 0..self.n_layers {
            let p = |n: &str| format!("layers.{i}.{n}");
            specs.push(ParamSpec::new(p("ln1.weight"), &[d], Init::Ones));
            specs.push(ParamSpec::new(p("ln1.bias"), &[d], Init::Zeros));
            for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
                specs.push(ParamSpec::new(p(&format!("{proj}.weight")), &[d, d], Init::Normal));
                specs.push(ParamSpec::new(p(&format!("{proj}.bias")), &[d], Init::Zeros));
            }
            specs.push(ParamSpec::new(p("ln2.weight"), &[d], Init::Ones));
            specs.push(ParamSpec::new(p("ln2.bias"), &[d], Init::Zeros));
            specs.push(ParamSpec::new(p("ff_in.weight"), &[f, d], Init::Normal));
            specs.push(ParamSpec::new(p("ff_in.bias"), &[f], Init::Zeros));
            specs.push(ParamSpec::new(p("ff_out.weight"), &[d, f], Init::Normal));
            specs.push(ParamSpec::new(p("ff_out.bias"), &[d], Init::Zeros));
        }
        specs.push(ParamSpec::new("final_ln.weight".into(), &[d], Init::Ones));
        specs.push(ParamSpec::new("final_ln.bias".into(), &[d], Init::Zeros));
        if !self.tie_embeddings {
            specs.push(ParamSpec::new("lm_head.weight".into(), &[self.vocab_size, d], Init::Normal));
            specs.push(ParamSpec::new("lm_head.bias".into(), &[self.vocab_size], Init::Zeros));
        }
        specs
    }

    pub fn parameter_count(&self) -> usize {
        self.param_specs().iter().map(ParamSpec::numel).sum()
    }

    /// Fraction of parameters BitFit leaves trainable, from shapes alone.
    pub fn bias_fraction(&self) -> f64 {
        let specs = self.param_specs();
        let bias: usize = specs.iter().filter(|s| s.is_bias()).map(ParamSpec::numel).sum();
        bias as f64 / specs.iter().map(ParamSpec::numel).sum::<usize>() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let cfg = ModelConfig {
            tie_embeddings: false,
            ..ModelConfig::teacher_s(50)
        };
        let specs = cfg.param_specs();
        let mut names: Vec<_> = specs.iter().map(|s| s.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), specs.len());
    }

    #[test]
    fn every_linear_has_bias() {
        let cfg = ModelConfig::student_xs(50);
        let specs = cfg.param_specs();
        for s in specs.iter().filter(|s| s.name.ends_with(".weight") && s.shape.len() == 2) {
            if s.name.starts_with("embed") {
                continue;
            }
            let bias = s.name.replace(".weight", ".bias");
            assert!(specs.iter().any(|o| o.name == bias), "{bias} missing");
        }
    }

    #[test]
    fn validation_names_field() {
        let bad = ModelConfig {
            n_heads: 3,
            ..ModelConfig::student_xs(50)
        };
        assert!(bad.validate().unwrap_err().to_string().contains("d_model"));
        let bad = ModelConfig {
            vocab_size: 3,
            ..ModelConfig::student_xs(50)
        };
        assert!(bad.validate().unwrap_err().to_string().contains("vocab_size"));
        assert!(ModelConfig::preset("nope", 50).is_err());
    }
}
