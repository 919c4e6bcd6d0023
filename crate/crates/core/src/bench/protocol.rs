use serde::Serialize;

use crate::data::{Example, Task};
use crate::error::{Error, Result};
use crate::methods::icl_evaluate;
use crate::model::MiniTransformer;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    /// `None` when the seed's run failed.
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolResult {
    pub per_seed: Vec<SeedAccuracy>,
    /// Arithmetic mean over the seeds that succeeded.
    pub mean: f64,
    /// Population standard deviation over the same seeds.
    pub stddev: f64,
}

/// Mean and population stddev, summed in input order.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Accuracy averaged over seeds: each seed draws its own `n_inferences`
/// queries from `split` and its own supports from `pool`.
pub fn accuracy_protocol(
    model: &MiniTransformer,
    task: &Task,
    pool: &[Example],
    split: &[Example],
    k: usize,
    n_inferences: usize,
    seeds: &[u64],
) -> Result<ProtocolResult> {
    if n_inferences == 0 {
        return Err(Error::config("n_inferences", "must be >= 1"));
    }
    if seeds.is_empty() {
        return Err(Error::config("seeds", "must not be empty"));
    }
    let per_seed: Vec<SeedAccuracy> = seeds
        .iter()
        .map(|&seed| match icl_evaluate(model, task, pool, split, k, n_inferences, seed) {
            Ok(r) if r.scored == 0 => SeedAccuracy {
                seed,
                accuracy: None,
                error: Some(format!(
                    "no query could be scored: {}",
                    r.skipped.first().map_or("empty split", |s| s.error.as_str())
                )),
            },
            Ok(r) => SeedAccuracy {
                seed,
                accuracy: Some(r.accuracy),
                error: None,
            },
            Err(e) => SeedAccuracy {
                seed,
                accuracy: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let ok: Vec<f64> = per_seed.iter().filter_map(|s| s.accuracy).collect();
    let (mean, stddev) = mean_std(&ok);
    Ok(ProtocolResult {
        per_seed,
        mean,
        stddev,
    })
}
