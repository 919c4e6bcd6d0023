//! The supervised loop shared by PBFT and context distillation.
//!
//! PBFT is this loop with no teacher targets. CD adds precomputed teacher
//! logits and mixes the two terms. Shuffle order and dropout masks depend
//! only on the run seed, epoch and step, so PBFT on query-only prompts and
//! CD at `α = 0` perform identical updates.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{KlDirection, KlSupport, LossBreakdown, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{MiniTransformer, Mode};
use crate::rng;
use crate::tensor::{AdamW, Tape, Var, Watermark};

/// One supervised prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub uid: u64,
    pub tokens: Vec<u32>,
    pub answer_position: usize,
    /// Gold answer token.
    pub target: u32,
    /// Teacher answer-position logits over the KL support, if distilling.
    pub teacher_logits: Option<Vec<f64>>,
}

/// How the answer-position loss is built.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    pub temperature: f64,
    pub kl_support: KlSupport,
    pub kl_direction: KlDirection,
    /// Token ids the KL is restricted to under `VerbalizerTokens`.
    pub kl_ids: Vec<usize>,
}

impl Objective {
    pub fn cross_entropy() -> Self {
        Self {
            alpha: 0.0,
            temperature: 1.0,
            kl_support: KlSupport::FullVocab,
            kl_direction: KlDirection::Forward,
            kl_ids: Vec::new(),
        }
    }
}

/// One JSON-lines training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub l_kl: Option<f64>,
    pub l_ce: f64,
    pub l_total: f64,
    pub lr: f64,
    pub arena_peak_bytes: u64,
    pub elapsed_ms: u64,
}

impl StepLog {
    pub fn losses(&self) -> LossBreakdown {
        LossBreakdown {
            l_kl: self.l_kl,
            l_ce: self.l_ce,
            l_total: self.l_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    /// Mean `l_total` per epoch.
    pub epoch_loss: Vec<f64>,
    /// Peak tensor bytes above the level at loop entry.
    pub peak_bytes: u64,
    pub wall_ms: u64,
}

/// Called after every optimizer step with the step record and the model.
pub type Observer<'a> = &'a mut dyn FnMut(&StepLog, &MiniTransformer);

pub fn write_log(path: &Path, steps: &[StepLog]) -> Result<()> {
    let mut out = String::new();
    for s in steps {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn kl_value(p: &[f64], q: &[f64], t: f64) -> f64 {
    let ls = |x: &[f64]| {
        let s: Vec<f64> = x.iter().map(|v| v / t).collect();
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = s.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        s.into_iter().map(move |v| v - z).collect::<Vec<_>>()
    };
    let (lp, lq) = (ls(p), ls(q));
    lp.iter()
        .zip(&lq)
        .map(|(a, b)| if a.exp() > 0.0 { a.exp() * (a - b) } else { 0.0 })
        .sum()
}

/// Builds the answer-position loss for one instance. Only the terms with
/// non-zero weight enter the graph; the other is evaluated on the side for
/// logging.
pub fn instance_loss(
    tape: &mut Tape,
    model: &MiniTransformer,
    inst: &Instance,
    obj: &Objective,
    mode: Mode,
) -> Result<(Var, LossBreakdown)> {
    let logits = model.forward(tape, &inst.tokens, mode)?;
    let row = tape.slice(&logits, 0, inst.answer_position, 1)?;
    drop(logits);
    let alpha = obj.alpha;

    let student_kl_row = match (&inst.teacher_logits, obj.kl_support) {
        (None, _) => None,
        (Some(_), KlSupport::FullVocab) => Some(row.clone()),
        (Some(_), KlSupport::VerbalizerTokens) => Some(tape.index_select(&row, 1, &obj.kl_ids)?),
    };
    let teacher = match (&inst.teacher_logits, &student_kl_row) {
        (Some(t), Some(s)) => {
            if t.len() != s.numel() {
                return Err(Error::shape("teacher logits", &[t.len()], s.shape()));
            }
            Some(Var::constant(&crate::tensor::Tensor::new(s.shape(), t.clone())?))
        }
        _ => None,
    };
    if alpha > 0.0 && teacher.is_none() {
        return Err(Error::Contract("alpha > 0 requires teacher logits".into()));
    }

    let ce_in_graph = alpha < 1.0;
    let kl_in_graph = alpha > 0.0;
    let ce = if ce_in_graph {
        Some(tape.cross_entropy(&row, inst.target as usize)?)
    } else {
        None
    };
    let kl = if kl_in_graph {
        let (t, s) = (teacher.as_ref().unwrap(), student_kl_row.as_ref().unwrap());
        Some(match obj.kl_direction {
            KlDirection::Forward => tape.kl_divergence(t, s, obj.temperature)?,
            KlDirection::Reverse => tape.kl_divergence(s, t, obj.temperature)?,
        })
    } else {
        None
    };

    let l_ce = match &ce {
        Some(v) => v.item(),
        None => {
            let r = row.data();
            let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z = r.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
            z - r[inst.target as usize]
        }
    };
    let l_kl = match (&kl, &teacher, &student_kl_row) {
        (Some(v), _, _) => Some(v.item()),
        (None, Some(t), Some(s)) => Some(match obj.kl_direction {
            KlDirection::Forward => kl_value(t.data(), s.data(), obj.temperature),
            KlDirection::Reverse => kl_value(s.data(), t.data(), obj.temperature),
        }),
        _ => None,
    };

    let loss = match (ce, kl) {
        (Some(ce), None) => ce,
        (None, Some(kl)) => kl,
        (Some(ce), Some(kl)) => {
            let a = tape.scale(&kl, alpha);
            let b = tape.scale(&ce, 1.0 - alpha);
            tape.add(&a, &b)?
        }
        (None, None) => unreachable!("alpha selects at least one term"),
    };
    let l_total = loss.item();
    Ok((
        loss,
        LossBreakdown {
            l_kl,
            l_ce,
            l_total,
        },
    ))
}

fn check_finite(b: &LossBreakdown, uid: u64, step: u64, epoch: usize) -> Result<()> {
    let bad = !b.l_total.is_finite() || !b.l_ce.is_finite() || b.l_kl.is_some_and(|k| !k.is_finite());
    if bad {
        return Err(Error::Numeric(format!(
            "non-finite loss at epoch {epoch}, step {step}, example uid {uid}: \
             l_total={}, l_ce={}, l_kl={:?}",
            b.l_total, b.l_ce, b.l_kl
        )));
    }
    Ok(())
}

/// Runs `cfg.epochs` passes over `instances` with AdamW, updating whatever
/// parameters of `model` are trainable.
pub fn train_loop(
    model: &mut MiniTransformer,
    instances: &[Instance],
    obj: &Objective,
    cfg: &TrainConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::Contract("no training instances".into()));
    }
    let mark = Watermark::open();
    let start = Instant::now();
    let mut opt = AdamW::new(cfg.adamw())?;
    let mut steps = Vec::new();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..instances.len()).collect();
        order.shuffle(&mut rng::indexed_stream(cfg.seed, "train-shuffle", epoch as u64));
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut acc = LossBreakdown {
                l_kl: None,
                l_ce: 0.0,
                l_total: 0.0,
            };
            for (j, &i) in batch.iter().enumerate() {
                let inst = &instances[i];
                let seed = rng::derive_indexed(cfg.seed, "train-dropout", step * cfg.batch_size as u64 + j as u64);
                let mut tape = Tape::new();
                let (loss, b) = instance_loss(&mut tape, model, inst, obj, Mode::Train { seed })?;
                check_finite(&b, inst.uid, step, epoch)?;
                let loss = if batch.len() > 1 { tape.scale(&loss, scale) } else { loss };
                let grads = tape.backward(&loss)?;
                drop(loss);
                model.params_mut().absorb(&grads)?;
                drop(grads);
                acc.l_ce += b.l_ce * scale;
                acc.l_total += b.l_total * scale;
                acc.l_kl = b.l_kl.map(|k| acc.l_kl.unwrap_or(0.0) + k * scale);
            }
            opt.step(model.params_mut())?;
            model.params_mut().zero_grad();
            let record = StepLog {
                step,
                epoch,
                l_kl: acc.l_kl,
                l_ce: acc.l_ce,
                l_total: acc.l_total,
                lr: cfg.learning_rate,
                arena_peak_bytes: mark.delta(),
                elapsed_ms: start.elapsed().as_millis() as u64,
            };
            epoch_sum += acc.l_total * batch.len() as f64;
            if let Some(obs) = observer.as_mut() {
                obs(&record, model);
            }
            steps.push(record);
            step += 1;
        }
        epoch_loss.push(epoch_sum / instances.len() as f64);
    }
    Ok(TrainReport {
        steps,
        epoch_loss,
        peak_bytes: mark.delta(),
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
