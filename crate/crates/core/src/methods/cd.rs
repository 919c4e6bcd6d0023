use serde::Serialize;

use super::config::{DistillConfig, KlSupport};
use super::eval::evaluate_queries;
use super::pbft::pbft_instances;
use super::train::{train_loop, Instance, Objective, Observer, TrainReport};
use crate::data::{draw_train_queries, Example, PoolSampler, Task};
use crate::error::{Error, Result};
use crate::model::MiniTransformer;
use crate::rng;
use crate::tensor::Watermark;

#[derive(Debug, Clone, Serialize)]
pub struct CdOutcome {
    pub report: TrainReport,
    pub train_uids: Vec<u64>,
    /// Tensor bytes of the teacher's inference pass.
    pub teacher_peak_bytes: u64,
    /// Tensor bytes of student training alone.
    pub student_peak_bytes: u64,
    /// Both phases together.
    pub total_peak_bytes: u64,
}

fn check_compatible(teacher: &MiniTransformer, student: &MiniTransformer, task: &Task) -> Result<()> {
    let v = task.vocab_size();
    for (who, m) in [("teacher", teacher), ("student", student)] {
        if m.config().vocab_size != v {
            return Err(Error::config(
                "vocab_size",
                format!("{who} has {} but the tokenizer has {v}", m.config().vocab_size),
            ));
        }
    }
    Ok(())
}

/// Teacher answer-position logits on full prompts, restricted to the KL
/// support.
pub fn teacher_targets(
    teacher: &MiniTransformer,
    task: &Task,
    pool: &[Example],
    queries: &[Example],
    dcfg: &DistillConfig,
) -> Result<Vec<Vec<f64>>> {
    let sampler = PoolSampler::new(pool.to_vec(), dcfg.train.seed);
    let ids = task.verbalizer.token_ids();
    queries
        .iter()
        .map(|q| {
            let supports = sampler.sample(q, dcfg.k)?;
            let p = task.prompt(&supports, q, teacher.config().max_seq_len)?;
            let row = teacher.logits_at(&p.tokens, p.answer_position)?;
            Ok(match dcfg.kl_support {
                KlSupport::FullVocab => row.to_vec(),
                KlSupport::VerbalizerTokens => ids.iter().map(|&i| row.data()[i]).collect(),
            })
        })
        .collect()
}

/// Query-only student inputs with teacher targets attached. Identical for
/// every `k`.
pub fn student_instances(
    task: &Task,
    pool: &[Example],
    queries: &[Example],
    teacher_logits: Vec<Vec<f64>>,
    seed: u64,
    max_len: usize,
) -> Result<Vec<Instance>> {
    let mut inst = pbft_instances(task, pool, queries, 0, seed, max_len)?;
    for (i, t) in inst.iter_mut().zip(teacher_logits) {
        i.teacher_logits = Some(t);
    }
    Ok(inst)
}

pub fn objective(task: &Task, dcfg: &DistillConfig) -> Objective {
    Objective {
        alpha: dcfg.alpha,
        temperature: dcfg.temperature,
        kl_support: dcfg.kl_support,
        kl_direction: dcfg.kl_direction,
        kl_ids: task.verbalizer.token_ids(),
    }
}

/// Context distillation: the teacher sees `k` supports, the student only the
/// query, and the student minimizes `α·KL(teacher ‖ student) + (1−α)·CE`.
/// The teacher is only read.
pub fn cd_train(
    teacher: &MiniTransformer,
    student: &mut MiniTransformer,
    task: &Task,
    pool: &[Example],
    dcfg: &DistillConfig,
    observer: Option<Observer<'_>>,
) -> Result<CdOutcome> {
    dcfg.validate()?;
    check_compatible(teacher, student, task)?;
    let total = Watermark::open();
    let queries = draw_train_queries(pool, dcfg.train.train_set_size, dcfg.train.seed)?;

    let teacher_mark = Watermark::open();
    let targets = teacher_targets(teacher, task, pool, &queries, dcfg)?;
    let teacher_peak_bytes = teacher_mark.delta();
    drop(teacher_mark);

    let instances = student_instances(
        task,
        pool,
        &queries,
        targets,
        dcfg.train.seed,
        student.config().max_seq_len,
    )?;
    dcfg.train
        .adapter
        .apply(student, rng::derive_seed(dcfg.train.seed, "adapter-init"))?;
    let report = train_loop(student, &instances, &objective(task, dcfg), &dcfg.train, observer)?;
    Ok(CdOutcome {
        student_peak_bytes: report.peak_bytes,
        report,
        train_uids: queries.iter().map(|q| q.uid).collect(),
        teacher_peak_bytes,
        total_peak_bytes: total.delta(),
    })
}

/// Teacher accuracy on the run's training queries, with `k` supports.
pub fn teacher_train_accuracy(
    teacher: &MiniTransformer,
    task: &Task,
    pool: &[Example],
    k: usize,
    train_set_size: usize,
    seed: u64,
) -> Result<f64> {
    let queries = draw_train_queries(pool, train_set_size, seed)?;
    let sampler = PoolSampler::new(pool.to_vec(), seed);
    Ok(evaluate_queries(teacher, task, &queries, &sampler, k)?.accuracy)
}
