use serde::Serialize;

use super::cd::cd_train;
use super::config::DistillConfig;
use super::eval::icl_evaluate;
use crate::data::{Example, Task};
use crate::error::{Error, Result};
use crate::model::MiniTransformer;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub in_acc: f64,
    pub out_acc: f64,
    pub final_l_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweep {
    /// In input order.
    pub rows: Vec<AlphaRow>,
    /// Whether the alphas were given in increasing order.
    pub alphas_sorted: bool,
    /// Whether out-of-domain accuracy rises then falls (or only rises, or
    /// only falls) along increasing alpha.
    pub out_acc_unimodal: bool,
}

/// Where the trained student is scored.
pub struct EvalSets<'a> {
    pub matched: &'a [Example],
    pub mismatched: &'a [Example],
    pub n_inferences: usize,
}

fn unimodal(ys: &[f64]) -> bool {
    let mut falling = false;
    for w in ys.windows(2) {
        if w[1] < w[0] {
            falling = true;
        } else if w[1] > w[0] && falling {
            return false;
        }
    }
    true
}

/// One CD run per alpha, all from the same student initialization and seed.
/// The student is scored query-only (no supports) on both splits.
pub fn alpha_sweep(
    teacher: &MiniTransformer,
    student: &MiniTransformer,
    task: &Task,
    pool: &[Example],
    base: &DistillConfig,
    alphas: &[f64],
    eval: &EvalSets<'_>,
) -> Result<AlphaSweep> {
    if alphas.len() < 3 {
        return Err(Error::config("alphas", format!("need at least 3, got {}", alphas.len())));
    }
    let seed = base.train.seed;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let dcfg = DistillConfig { alpha, ..base.clone() };
        let mut s = student.clone();
        let out = cd_train(teacher, &mut s, task, pool, &dcfg, None)?;
        let in_acc = icl_evaluate(&s, task, pool, eval.matched, 0, eval.n_inferences, seed)?.accuracy;
        let out_acc = icl_evaluate(&s, task, pool, eval.mismatched, 0, eval.n_inferences, seed)?.accuracy;
        rows.push(AlphaRow {
            alpha,
            in_acc,
            out_acc,
            final_l_total: out.report.steps.last().map_or(f64::NAN, |l| l.l_total),
        });
    }
    let alphas_sorted = alphas.windows(2).all(|w| w[0] <= w[1]);
    let mut by_alpha = rows.clone();
    by_alpha.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let outs: Vec<f64> = by_alpha.iter().map(|r| r.out_acc).collect();
    Ok(AlphaSweep {
        rows,
        alphas_sorted,
        out_acc_unimodal: unimodal(&outs),
    })
}
