//! Answer-position evaluation: ICL, and the scoring step every method's
//! evaluation shares.

use serde::Serialize;

use crate::data::{draw, score_verbalizer, Example, Label, PoolSampler, Task};
use crate::error::Result;
use crate::model::MiniTransformer;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRecord {
    pub uid: u64,
    pub gold: Label,
    pub predicted: Label,
    pub prob_yes: f64,
    pub prob_no: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedQuery {
    pub uid: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Correct predictions over scored queries; 0 when nothing was scored.
    pub accuracy: f64,
    pub correct: usize,
    pub scored: usize,
    pub records: Vec<QueryRecord>,
    /// Queries whose prompt could not be built or run, e.g. context overflow.
    pub skipped: Vec<SkippedQuery>,
}

impl EvalReport {
    pub fn mean_coverage(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.coverage).sum::<f64>() / self.records.len() as f64
    }
}

/// Scores `queries`, each with `k` supports drawn by `sampler`.
pub fn evaluate_queries(
    model: &MiniTransformer,
    task: &Task,
    queries: &[Example],
    sampler: &PoolSampler,
    k: usize,
) -> Result<EvalReport> {
    let max_len = model.config().max_seq_len;
    let mut records = Vec::with_capacity(queries.len());
    let mut skipped = Vec::new();
    for q in queries {
        let supports = sampler.sample(q, k)?;
        let scored = task.prompt(&supports, q, max_len).and_then(|p| {
            let logits = model.logits_at(&p.tokens, p.answer_position)?;
            score_verbalizer(logits.data(), &task.verbalizer)
        });
        match scored {
            Ok(s) => records.push(QueryRecord {
                uid: q.uid,
                gold: q.label,
                predicted: s.label,
                prob_yes: s.prob_yes,
                prob_no: s.prob_no,
                coverage: s.coverage,
            }),
            Err(e) => skipped.push(SkippedQuery {
                uid: q.uid,
                error: e.to_string(),
            }),
        }
    }
    let correct = records.iter().filter(|r| r.gold == r.predicted).count();
    let scored = records.len();
    Ok(EvalReport {
        accuracy: if scored == 0 { 0.0 } else { correct as f64 / scored as f64 },
        correct,
        scored,
        records,
        skipped,
    })
}

/// The evaluation queries for a seed: `n` drawn from `split` once.
pub fn draw_eval_queries(split: &[Example], n: usize, seed: u64) -> Result<Vec<Example>> {
    draw(split, n.min(split.len()), seed, "eval-queries")
}

/// In-context learning: `n_inferences` queries from `eval_split`, each with
/// `k` supports from `pool`. The model is only read.
pub fn icl_evaluate(
    model: &MiniTransformer,
    task: &Task,
    pool: &[Example],
    eval_split: &[Example],
    k: usize,
    n_inferences: usize,
    seed: u64,
) -> Result<EvalReport> {
    let queries = draw_eval_queries(eval_split, n_inferences, seed)?;
    let sampler = PoolSampler::new(pool.to_vec(), seed);
    evaluate_queries(model, task, &queries, &sampler, k)
}
