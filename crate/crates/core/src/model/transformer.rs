use rand_distr::{Distribution, Normal};

use super::config::{Init, ModelConfig};
use crate::adapters::LoraState;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{ParamStore, Tape, Tensor, Var};

pub const INIT_STD: f64 = 0.02;
const LN_EPS: f64 = 1e-5;

/// Forward-pass mode. Training enables dropout, with masks derived from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Pre-norm decoder-only transformer with learned positions and GELU MLPs.
#[derive(Debug, Clone)]
pub struct MiniTransformer {
    config: ModelConfig,
    pub(crate) params: ParamStore,
    pub(crate) lora: Option<LoraState>,
}

/// Per-call dropout-site counter so every mask gets its own stream.
struct Dropout {
    mode: Mode,
    site: u64,
}

impl Dropout {
    fn apply(&mut self, tape: &mut Tape, x: &Var, p: f64) -> Result<Var> {
        match self.mode {
            Mode::Eval => Ok(x.clone()),
            Mode::Train { seed } => {
                self.site += 1;
                let s = rng::derive_indexed(seed, "model-dropout", self.site);
                tape.dropout(x, p, s)
            }
        }
    }
}

impl MiniTransformer {
    /// Weights ~ N(0, 0.02), biases 0, layer-norm gains 1. Deterministic in
    /// `(cfg, seed)`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(seed, "model-init");
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut params = ParamStore::new();
        for spec in cfg.param_specs() {
            let n = spec.numel();
            let data: Vec<f64> = match spec.init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            params.insert(spec.name, Tensor::new(&spec.shape, data)?.with_requires_grad(true))?;
        }
        Ok(Self {
            config: cfg.clone(),
            params,
            lora: None,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        for spec in config.param_specs() {
            let t = params.get(&spec.name).map_err(|_| {
                Error::CorruptCheckpoint(format!("missing parameter `{}`", spec.name))
            })?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Shape {
                    op: "load parameter",
                    lhs: spec.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            config,
            params,
            lora: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn lora(&self) -> Option<&LoraState> {
        self.lora.as_ref()
    }

    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::ContextWindow {
                limit: self.config.max_seq_len,
                actual: tokens.len(),
                detail: String::new(),
            });
        }
        if tokens.is_empty() {
            return Err(Error::Contract("empty token sequence".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Index {
                what: "token id",
                index: bad as usize,
                size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn p(&self, tape: &mut Tape, name: &str) -> Result<Var> {
        Ok(tape.param(name, self.params.get(name)?))
    }

    fn proj(&self, tape: &mut Tape, prefix: &str, x: &Var, dropout: &mut Dropout) -> Result<Var> {
        let w = self.p(tape, &format!("{prefix}.weight"))?;
        let b = self.p(tape, &format!("{prefix}.bias"))?;
        let out = tape.linear(x, &w, Some(&b))?;
        let Some(lora) = self.lora.as_ref().filter(|l| l.targets(prefix)) else {
            return Ok(out);
        };
        let a = self.p(tape, &LoraState::a_name(prefix))?;
        let bm = self.p(tape, &LoraState::b_name(prefix))?;
        let xd = dropout.apply(tape, x, lora.config.dropout_p)?;
        let low = tape.linear(&xd, &a, None)?;
        let up = tape.linear(&low, &bm, None)?;
        let up = tape.scale(&up, lora.scale());
        tape.add(&out, &up)
    }

    fn layer_norm(&self, tape: &mut Tape, prefix: &str, x: &Var) -> Result<Var> {
        let g = self.p(tape, &format!("{prefix}.weight"))?;
        let b = self.p(tape, &format!("{prefix}.bias"))?;
        tape.layer_norm(x, &g, &b, LN_EPS)
    }

    /// Next-token logits `[seq_len × vocab_size]`. Row `t` depends only on
    /// tokens `0..=t`.
    pub fn forward(&self, tape: &mut Tape, tokens: &[u32], mode: Mode) -> Result<Var> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let mut dropout = Dropout { mode, site: 0 };
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..tokens.len()).collect();

        let tok_table = self.p(tape, "embed_tokens.weight")?;
        let pos_table = self.p(tape, "embed_positions.weight")?;
        let tok = tape.embedding(&tok_table, &ids)?;
        let pos = tape.embedding(&pos_table, &positions)?;
        let mut h = tape.add(&tok, &pos)?;
        drop((tok, pos));

        for l in 0..cfg.n_layers {
            let pre = format!("layers.{l}");
            let a = self.layer_norm(tape, &format!("{pre}.ln1"), &h)?;
            let q = self.proj(tape, &format!("{pre}.q_proj"), &a, &mut dropout)?;
            let k = self.proj(tape, &format!("{pre}.k_proj"), &a, &mut dropout)?;
            let v = self.proj(tape, &format!("{pre}.v_proj"), &a, &mut dropout)?;
            drop(a);
            let scores = tape.causal_attention_scores(&q, &k, cfg.n_heads)?;
            drop((q, k));
            let probs = tape.softmax(&scores, 2)?;
            drop(scores);
            let mixed = tape.attention_mix(&probs, &v, cfg.n_heads)?;
            drop((probs, v));
            let attn = self.proj(tape, &format!("{pre}.out_proj"), &mixed, &mut dropout)?;
            let attn = dropout.apply(tape, &attn, cfg.dropout_p)?;
            h = tape.add(&h, &attn)?;

            let f = self.layer_norm(tape, &format!("{pre}.ln2"), &h)?;
            let f = self.proj(tape, &format!("{pre}.ff_in"), &f, &mut dropout)?;
            let f = tape.gelu(&f);
            let f = self.proj(tape, &format!("{pre}.ff_out"), &f, &mut dropout)?;
            let f = dropout.apply(tape, &f, cfg.dropout_p)?;
            h = tape.add(&h, &f)?;
        }

        let h = self.layer_norm(tape, "final_ln", &h)?;
        if cfg.tie_embeddings {
            tape.linear(&h, &tok_table, None)
        } else {
            let w = self.p(tape, "lm_head.weight")?;
            let b = self.p(tape, "lm_head.bias")?;
            tape.linear(&h, &w, Some(&b))
        }
    }

    /// Eval-mode logits at one position, without recording a graph.
    pub fn logits_at(&self, tokens: &[u32], position: usize) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let logits = self.forward(&mut tape, tokens, Mode::Eval)?;
        let row = tape.slice(&logits, 0, position, 1)?;
        Ok(row.value())
    }

    /// Eval-mode logits for every position.
    pub fn logits(&self, tokens: &[u32]) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        Ok(self.forward(&mut tape, tokens, Mode::Eval)?.value())
    }
}
