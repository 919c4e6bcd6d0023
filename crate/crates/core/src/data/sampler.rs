use rand::seq::index;

use super::example::Example;
use crate::error::{Error, Result};
use crate::rng;

/// Draws support sets from a fixed pool.
///
/// A draw depends only on `(seed, query.uid, k)`, never on earlier draws,
/// and never returns the query itself (matched by uid, not text).
#[derive(Debug, Clone)]
pub struct PoolSampler {
    pool: Vec<Example>,
    seed: u64,
}

impl PoolSampler {
    pub fn new(pool: Vec<Example>, seed: u64) -> Self {
        Self { pool, seed }
    }

    pub fn pool(&self) -> &[Example] {
        &self.pool
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample(&self, query: &Example, k: usize) -> Result<Vec<Example>> {
        let candidates: Vec<&Example> = self.pool.iter().filter(|e| e.uid != query.uid).collect();
        if k > candidates.len() {
            return Err(Error::Sampling(format!(
                "{k} supports requested but only {} pool examples besides the query",
                candidates.len()
            )));
        }
        let s = rng::derive_indexed(self.seed, "supports", query.uid);
        let mut r = rng::indexed_stream(s, "k", k as u64);
        Ok(index::sample(&mut r, candidates.len(), k)
            .into_iter()
            .map(|i| candidates[i].clone())
            .collect())
    }
}

/// `n` distinct examples drawn from `from`, in draw order.
pub fn draw(from: &[Example], n: usize, seed: u64, component: &str) -> Result<Vec<Example>> {
    if n > from.len() {
        return Err(Error::Sampling(format!("{n} examples requested from {}", from.len())));
    }
    let mut r = rng::stream(seed, component);
    Ok(index::sample(&mut r, from.len(), n)
        .into_iter()
        .map(|i| from[i].clone())
        .collect())
}

/// The training queries for a run: drawn once per seed and shared by every
/// method so comparisons are paired.
pub fn draw_train_queries(pool: &[Example], n: usize, seed: u64) -> Result<Vec<Example>> {
    draw(pool, n, seed, "train-queries")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Split};

    fn pool(n: u64) -> Vec<Example> {
        (0..n)
            .map(|uid| Example {
                uid,
                premise: "same".into(),
                hypothesis: "text".into(),
                label: Label::Entailment,
                split: Split::TrainPool,
            })
            .collect()
    }

    #[test]
    fn k_pool_minus_one_takes_everything_else() {
        let s = PoolSampler::new(pool(10), 1);
        let q = s.pool()[4].clone();
        let mut uids: Vec<u64> = s.sample(&q, 9).unwrap().iter().map(|e| e.uid).collect();
        uids.sort();
        assert_eq!(uids, vec![0, 1, 2, 3, 5, 6, 7, 8, 9]);
        assert!(s.sample(&q, 10).is_err());
    }

    #[test]
    fn exclusion_and_determinism() {
        let s = PoolSampler::new(pool(30), 7);
        for t in 0..1000u64 {
            let q = s.pool()[(t % 30) as usize].clone();
            let a = s.sample(&q, 5).unwrap();
            assert!(a.iter().all(|e| e.uid != q.uid));
            if t < 30 {
                assert_eq!(a, s.sample(&q, 5).unwrap());
            }
        }
    }
}
