//! Format pretraining: next-token language modelling over rendered prompts
//! so a from-scratch model learns the prompt layout and the task rule
//! before any few-shot adaptation.
//!
//! Answers in the pretraining corpus use their own verbalizer (by default
//! `true`/`false`), so the evaluation verbalizer stays unseen as an answer
//! until adaptation.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{score_verbalizer, Example, PromptTemplate, Task, VerbalizerMap};
use crate::error::{Error, Result};
use crate::model::{MiniTransformer, Mode};
use crate::rng;
use crate::tensor::{AdamW, AdamWConfig, Tape};

pub const PRETRAIN_ANSWERS: (&str, &str) = ("true", "false");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Linear warm-up length; the rate then decays linearly to 10%.
    pub warmup_steps: usize,
    pub batch_size: usize,
    /// Each sequence holds a uniform 0..=max_supports labelled blocks
    /// before the query.
    pub max_supports: usize,
    pub weight_decay: f64,
    /// Extra weight on the query's answer token, added to the mean
    /// next-token loss. Zero gives plain language modelling.
    pub answer_weight: f64,
    pub eval_every: usize,
    pub heldout_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 1e-3,
            warmup_steps: 100,
            batch_size: 1,
            max_supports: 3,
            weight_decay: 0.01,
            answer_weight: 1.0,
            eval_every: 250,
            heldout_size: 32,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1e-2) {
            return Err(Error::config("learning_rate", "must be in (0, 1e-2]"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        let lr = self.learning_rate;
        if step < self.warmup_steps {
            return lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let done = (step - self.warmup_steps) as f64 / span;
        lr * (1.0 - 0.9 * done.min(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub step: usize,
    /// Mean training loss since the previous record.
    pub train_loss: f64,
    pub heldout_perplexity: f64,
    /// Answer accuracy on held-out queries under the pretraining verbalizer.
    pub heldout_answer_acc: f64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrainReport {
    pub log: Vec<PretrainLog>,
    pub wall_ms: u64,
}

/// The default task over a dataset: standard template, Yes/No verbalizer,
/// and a vocabulary that also covers the pretraining answer words.
pub fn standard_task<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Result<Task> {
    Task::build(
        PromptTemplate::default(),
        VerbalizerMap::default(),
        examples,
        &[PRETRAIN_ANSWERS.0, PRETRAIN_ANSWERS.1],
    )
}

pub fn pretrain_verbalizer(task: &Task) -> Result<VerbalizerMap> {
    VerbalizerMap::new(&[PRETRAIN_ANSWERS.0], &[PRETRAIN_ANSWERS.1]).resolve(&task.tokenizer)
}

/// A full sequence: supports and query, each followed by its answer.
struct Sequence {
    tokens: Vec<u32>,
    answer_position: usize,
    answer: u32,
}

fn sample_sequence(
    task: &Task,
    vmap: &VerbalizerMap,
    corpus: &[Example],
    max_supports: usize,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<Sequence> {
    let n = rng.random_range(0..=max_supports).min(corpus.len() - 1);
    let picks = index::sample(rng, corpus.len(), n + 1).into_vec();
    let supports: Vec<Example> = picks[..n].iter().map(|&i| corpus[i].clone()).collect();
    let query = &corpus[picks[n]];
    let p = task.prompt_with(vmap, &supports, query, max_len - 1)?;
    let answer = vmap.gold_id(query.label);
    let mut tokens = p.tokens;
    tokens.push(answer);
    Ok(Sequence {
        tokens,
        answer_position: p.answer_position,
        answer,
    })
}

fn lm_loss(tape: &mut Tape, model: &MiniTransformer, tokens: &[u32], mode: Mode) -> Result<crate::tensor::Var> {
    let n = tokens.len() - 1;
    let logits = model.forward(tape, &tokens[..n], mode)?;
    let targets: Vec<usize> = tokens[1..].iter().map(|&t| t as usize).collect();
    tape.cross_entropy_rows(&logits, &targets)
}

fn train_loss(tape: &mut Tape, model: &MiniTransformer, s: &Sequence, answer_weight: f64, mode: Mode) -> Result<crate::tensor::Var> {
    let n = s.tokens.len() - 1;
    let logits = model.forward(tape, &s.tokens[..n], mode)?;
    let targets: Vec<usize> = s.tokens[1..].iter().map(|&t| t as usize).collect();
    let lm = tape.cross_entropy_rows(&logits, &targets)?;
    if answer_weight == 0.0 {
        return Ok(lm);
    }
    let row = tape.slice(&logits, 0, s.answer_position, 1)?;
    let ans = tape.cross_entropy(&row, s.answer as usize)?;
    let ans = tape.scale(&ans, answer_weight);
    tape.add(&lm, &ans)
}

fn heldout_metrics(model: &MiniTransformer, vmap: &VerbalizerMap, set: &[Sequence]) -> Result<(f64, f64)> {
    let (mut nll, mut count, mut correct) = (0.0, 0usize, 0usize);
    for s in set {
        let mut tape = Tape::no_grad();
        let n = s.tokens.len() - 1;
        let loss = lm_loss(&mut tape, model, &s.tokens, Mode::Eval)?;
        nll += loss.item() * n as f64;
        count += n;
        let row = model.logits_at(&s.tokens[..n], s.answer_position)?;
        let score = score_verbalizer(row.data(), vmap)?;
        if vmap.gold_id(score.label) == s.answer {
            correct += 1;
        }
    }
    Ok(((nll / count as f64).exp(), correct as f64 / set.len() as f64))
}

/// Language-model pretraining on sequences sampled from `corpus`. Held-out
/// metrics use sequences from `heldout`.
pub fn format_pretrain(
    model: &mut MiniTransformer,
    task: &Task,
    corpus: &[Example],
    heldout: &[Example],
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    cfg.validate()?;
    if corpus.len() < cfg.max_supports + 1 || heldout.len() < cfg.max_supports + 1 {
        return Err(Error::config("corpus", "too small for max_supports"));
    }
    let vmap = pretrain_verbalizer(task)?;
    let max_len = model.config().max_seq_len;
    let mut hrng = rng::stream(cfg.seed, "pretrain-heldout");
    let held: Vec<Sequence> = (0..cfg.heldout_size)
        .map(|_| sample_sequence(task, &vmap, heldout, cfg.max_supports, max_len, &mut hrng))
        .collect::<Result<_>>()?;

    let start = Instant::now();
    let mut opt = AdamW::new(AdamWConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    })?;
    let (ppl, acc) = heldout_metrics(model, &vmap, &held)?;
    let mut log = vec![PretrainLog {
        step: 0,
        train_loss: f64::NAN,
        heldout_perplexity: ppl,
        heldout_answer_acc: acc,
        elapsed_ms: 0,
    }];
    let mut running = (0.0, 0usize);
    for step in 0..cfg.steps {
        let mut srng = rng::indexed_stream(cfg.seed, "pretrain-sample", step as u64);
        for j in 0..cfg.batch_size {
            let s = sample_sequence(task, &vmap, corpus, cfg.max_supports, max_len, &mut srng)?;
            let seed = rng::derive_indexed(cfg.seed, "pretrain-dropout", (step * cfg.batch_size + j) as u64);
            let mut tape = Tape::new();
            let loss = train_loss(&mut tape, model, &s, cfg.answer_weight, Mode::Train { seed })?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("pretraining loss {value} at step {step}")));
            }
            let loss = tape.scale(&loss, 1.0 / cfg.batch_size as f64);
            let grads = tape.backward(&loss)?;
            model.params_mut().absorb(&grads)?;
            running.0 += value;
            running.1 += 1;
        }
        opt.set_learning_rate(cfg.lr_at(step));
        opt.step(model.params_mut())?;
        model.params_mut().zero_grad();

        let done = step + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let (ppl, acc) = heldout_metrics(model, &vmap, &held)?;
            let entry = PretrainLog {
                step: done,
                train_loss: running.0 / running.1 as f64,
                heldout_perplexity: ppl,
                heldout_answer_acc: acc,
                elapsed_ms: start.elapsed().as_millis() as u64,
            };
            log::info!(
                "pretrain step {done}: loss {:.4} ppl {:.3} answer acc {:.3}",
                entry.train_loss,
                ppl,
                acc
            );
            log.push(entry);
            running = (0.0, 0);
        }
    }
    Ok(PretrainReport {
        log,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::fixtures::{dataset, task, tiny};

    fn cfg() -> PretrainConfig {
        PretrainConfig {
            steps: 500,
            eval_every: 500,
            heldout_size: 8,
            max_supports: 1,
            ..Default::default()
        }
    }

    #[test]
    fn perplexity_drops() {
        let ds = dataset();
        let t = task(&ds);
        let mut m = tiny(&t, 1);
        let r = format_pretrain(&mut m, &t, &ds.train_pool, &ds.validation_matched, &cfg()).unwrap();
        let (first, last) = (&r.log[0], r.log.last().unwrap());
        assert_eq!(last.step, 500);
        assert!(last.heldout_perplexity < first.heldout_perplexity);
    }

    #[test]
    fn deterministic_in_seed() {
        let ds = dataset();
        let t = task(&ds);
        let c = PretrainConfig { steps: 20, eval_every: 10, ..cfg() };
        let mut a = tiny(&t, 1);
        let mut b = tiny(&t, 1);
        format_pretrain(&mut a, &t, &ds.train_pool, &ds.validation_matched, &c).unwrap();
        format_pretrain(&mut b, &t, &ds.train_pool, &ds.validation_matched, &c).unwrap();
        assert!(a.params().bit_eq(b.params()));
    }

    #[test]
    fn pretraining_answers_differ_from_verbalizer() {
        let ds = dataset();
        let t = task(&ds);
        let v = pretrain_verbalizer(&t).unwrap();
        for id in v.token_ids() {
            assert!(!t.verbalizer.token_ids().contains(&id));
        }
    }
}
