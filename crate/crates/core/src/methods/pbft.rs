use serde::Serialize;

use super::config::TrainConfig;
use super::train::{train_loop, Instance, Objective, Observer, TrainReport};
use crate::data::{draw_train_queries, Example, PoolSampler, Task};
use crate::error::Result;
use crate::model::MiniTransformer;
use crate::rng;

#[derive(Debug, Clone, Serialize)]
pub struct PbftOutcome {
    pub report: TrainReport,
    pub train_uids: Vec<u64>,
}

/// Full prompts (`k` supports + query) for the run's training queries.
pub fn pbft_instances(
    task: &Task,
    pool: &[Example],
    queries: &[Example],
    k: usize,
    seed: u64,
    max_len: usize,
) -> Result<Vec<Instance>> {
    let sampler = PoolSampler::new(pool.to_vec(), seed);
    queries
        .iter()
        .map(|q| {
            let supports = sampler.sample(q, k)?;
            let p = task.prompt(&supports, q, max_len)?;
            Ok(Instance {
                uid: q.uid,
                tokens: p.tokens,
                answer_position: p.answer_position,
                target: task.verbalizer.gold_id(q.label),
                teacher_logits: None,
            })
        })
        .collect()
}

/// Pattern-based fine-tuning: cross-entropy on the gold answer token of
/// full prompts. Applies `cfg.adapter` to `model` first.
pub fn pbft_train(
    model: &mut MiniTransformer,
    task: &Task,
    pool: &[Example],
    k: usize,
    cfg: &TrainConfig,
    observer: Option<Observer<'_>>,
) -> Result<PbftOutcome> {
    cfg.validate()?;
    let queries = draw_train_queries(pool, cfg.train_set_size, cfg.seed)?;
    let instances = pbft_instances(task, pool, &queries, k, cfg.seed, model.config().max_seq_len)?;
    cfg.adapter.apply(model, rng::derive_seed(cfg.seed, "adapter-init"))?;
    let report = train_loop(model, &instances, &Objective::cross_entropy(), cfg, observer)?;
    Ok(PbftOutcome {
        report,
        train_uids: queries.iter().map(|q| q.uid).collect(),
    })
}
