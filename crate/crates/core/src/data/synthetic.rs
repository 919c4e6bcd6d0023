//! Rule-labelled synthetic NLI.
//!
//! Premises are sequences of distinct pseudo-word symbols. An entailed
//! hypothesis is an ordered subsequence of its premise; a contradicted one
//! contains at least one symbol the premise lacks. The matched splits draw
//! symbols from set A and the mismatched split from a disjoint set B, so the
//! domain shift is a vocabulary shift under the same rule.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::example::{Example, Label, Split};
use super::mnli::write_jsonl;
use crate::error::{Error, Result};
use crate::rng;

const ONSETS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const CODAS: &[char] = &['k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'x'];

/// Template and verbalizer words a symbol must never collide with.
const RESERVED: &[&str] = &[
    "yes", "no", "not", "set", "sit", "ten", "tin", "bet", "mix", "fix", "sex", "pin", "run",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Symbols per domain (A and B each).
    pub symbols_per_domain: usize,
    pub premise_len: (usize, usize),
    pub hypothesis_len: (usize, usize),
    pub pool_size: usize,
    pub validation_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            symbols_per_domain: 24,
            premise_len: (3, 5),
            hypothesis_len: (1, 3),
            pool_size: 3000,
            validation_size: 1000,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.symbols_per_domain < 20 {
            return Err(Error::config("symbols_per_domain", "must be >= 20"));
        }
        let (pmin, pmax) = self.premise_len;
        let (hmin, hmax) = self.hypothesis_len;
        if pmin == 0 || pmin > pmax {
            return Err(Error::config("premise_len", format!("invalid range {pmin}..={pmax}")));
        }
        if hmin == 0 || hmin > hmax {
            return Err(Error::config("hypothesis_len", format!("invalid range {hmin}..={hmax}")));
        }
        if hmax > pmin {
            return Err(Error::config(
                "hypothesis_len",
                format!("max {hmax} exceeds shortest premise {pmin}; entailment infeasible"),
            ));
        }
        if pmax + hmax > self.symbols_per_domain {
            return Err(Error::config(
                "premise_len",
                "premise plus novel symbols exceed the domain's symbol count",
            ));
        }
        if 2 * self.symbols_per_domain > all_symbols().len() {
            return Err(Error::config(
                "symbols_per_domain",
                format!("at most {} available", all_symbols().len() / 2),
            ));
        }
        Ok(())
    }
}

/// Every pseudo-word in a fixed interleaved order.
fn all_symbols() -> Vec<String> {
    let mut out = Vec::new();
    for &v in VOWELS {
        for &c in CODAS {
            for &o in ONSETS {
                let w: String = [o, v, c].iter().collect();
                if !RESERVED.contains(&w.as_str()) {
                    out.push(w);
                }
            }
        }
    }
    out
}

/// Disjoint symbol sets `(A, B)`.
pub fn symbol_sets(n: usize) -> (Vec<String>, Vec<String>) {
    let all = all_symbols();
    let a = all.iter().step_by(2).take(n).cloned().collect();
    let b = all.iter().skip(1).step_by(2).take(n).cloned().collect();
    (a, b)
}

/// Entailment iff `h` is an ordered subsequence of `p`; contradiction iff
/// some symbol of `h` is absent from `p`; `None` for anything else.
pub fn rule_label(premise: &str, hypothesis: &str) -> Option<Label> {
    let p: Vec<&str> = premise.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    if h.iter().any(|s| !p.contains(s)) {
        return Some(Label::Contradiction);
    }
    let mut it = p.iter();
    h.iter()
        .all(|s| it.any(|x| x == s))
        .then_some(Label::Entailment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub symbols_matched: Vec<String>,
    pub symbols_mismatched: Vec<String>,
    pub train_pool: Vec<Example>,
    pub validation_matched: Vec<Example>,
    pub validation_mismatched: Vec<Example>,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::TrainPool => &self.train_pool,
            Split::ValidationMatched => &self.validation_matched,
            Split::ValidationMismatched => &self.validation_mismatched,
        }
    }

    pub fn all_examples(&self) -> impl Iterator<Item = &Example> {
        self.train_pool
            .iter()
            .chain(&self.validation_matched)
            .chain(&self.validation_mismatched)
    }

    /// Writes `dataset.json` (the whole dataset) and one JSONL file per
    /// split into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(DATASET_FILE);
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        for split in [Split::TrainPool, Split::ValidationMatched, Split::ValidationMismatched] {
            write_jsonl(&dir.join(format!("{}.jsonl", split.as_str())), self.split(split))?;
        }
        Ok(())
    }

    /// Reads a directory written by [`SyntheticDataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let json = dir.join(DATASET_FILE);
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn one_pair(
    rng: &mut ChaCha8Rng,
    symbols: &[String],
    cfg: &SyntheticConfig,
    label: Label,
) -> (String, String) {
    let plen = rng.random_range(cfg.premise_len.0..=cfg.premise_len.1);
    let hlen = rng.random_range(cfg.hypothesis_len.0..=cfg.hypothesis_len.1);
    let chosen = index::sample(rng, symbols.len(), plen + hlen).into_vec();
    let premise: Vec<&str> = chosen[..plen].iter().map(|&i| symbols[i].as_str()).collect();
    let novel: Vec<&str> = chosen[plen..].iter().map(|&i| symbols[i].as_str()).collect();
    let mut keep = index::sample(rng, plen, hlen).into_vec();
    keep.sort_unstable();
    let mut hyp: Vec<&str> = keep.iter().map(|&i| premise[i]).collect();
    if label == Label::Contradiction {
        let n_novel = rng.random_range(1..=hlen);
        let mut slots: Vec<usize> = (0..hlen).collect();
        slots.shuffle(rng);
        for (slot, sym) in slots.into_iter().take(n_novel).zip(novel) {
            hyp[slot] = sym;
        }
    }
    (premise.join(" "), hyp.join(" "))
}

/// `n` examples from `symbols` with labels balanced to within one.
pub fn generate_split(
    cfg: &SyntheticConfig,
    symbols: &[String],
    n: usize,
    split: Split,
    uid_base: u64,
    stream: &str,
) -> Vec<Example> {
    let mut rng = rng::stream(cfg.seed, stream);
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i % 2 == 0 { Label::Entailment } else { Label::Contradiction })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (premise, hypothesis) = one_pair(&mut rng, symbols, cfg, label);
            Example {
                uid: uid_base + i as u64,
                premise,
                hypothesis,
                label,
                split,
            }
        })
        .collect()
}

pub const DATASET_FILE: &str = "dataset.json";

const UID_STRIDE: u64 = 1 << 32;

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let (a, b) = symbol_sets(cfg.symbols_per_domain);
    let train_pool = generate_split(cfg, &a, cfg.pool_size, Split::TrainPool, 0, "synthetic-pool");
    let validation_matched = generate_split(
        cfg,
        &a,
        cfg.validation_size,
        Split::ValidationMatched,
        UID_STRIDE,
        "synthetic-matched",
    );
    let validation_mismatched = generate_split(
        cfg,
        &b,
        cfg.validation_size,
        Split::ValidationMismatched,
        2 * UID_STRIDE,
        "synthetic-mismatched",
    );
    Ok(SyntheticDataset {
        config: cfg.clone(),
        symbols_matched: a,
        symbols_mismatched: b,
        train_pool,
        validation_matched,
        validation_mismatched,
    })
}

/// Checks a dataset against the generation rule, returning the first
/// offending example's description.
pub fn audit(ds: &SyntheticDataset) -> std::result::Result<(), String> {
    let a: HashSet<&str> = ds.symbols_matched.iter().map(String::as_str).collect();
    let b: HashSet<&str> = ds.symbols_mismatched.iter().map(String::as_str).collect();
    if !a.is_disjoint(&b) {
        return Err("symbol sets overlap".into());
    }
    for split in [Split::TrainPool, Split::ValidationMatched, Split::ValidationMismatched] {
        let ex = ds.split(split);
        let domain = if split == Split::ValidationMismatched { &b } else { &a };
        let ent = ex.iter().filter(|e| e.label == Label::Entailment).count();
        if ent.abs_diff(ex.len() - ent) > 1 {
            return Err(format!("{}: {ent} of {} entailed", split.as_str(), ex.len()));
        }
        for e in ex {
            if rule_label(&e.premise, &e.hypothesis) != Some(e.label) {
                return Err(format!("uid {} violates the rule", e.uid));
            }
            let syms = e.premise.split_whitespace().chain(e.hypothesis.split_whitespace());
            if let Some(s) = syms.into_iter().find(|s| !domain.contains(s)) {
                return Err(format!("uid {}: `{s}` outside its domain", e.uid));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        assert_eq!(rule_label("a b c d", "b d"), Some(Label::Entailment));
        assert_eq!(rule_label("a b c d", "b z"), Some(Label::Contradiction));
        assert_eq!(rule_label("a b c d", "d b"), None);
    }

    #[test]
    fn small_dataset_passes_audit() {
        let cfg = SyntheticConfig {
            pool_size: 200,
            validation_size: 101,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        audit(&ds).unwrap();
        assert_eq!(ds, generate_synthetic(&cfg).unwrap());
    }

    #[test]
    fn infeasible_lengths_rejected() {
        let cfg = SyntheticConfig {
            premise_len: (2, 4),
            hypothesis_len: (1, 3),
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("hypothesis_len"));
    }

    #[test]
    fn premise_symbols_distinct() {
        let ds = generate_synthetic(&SyntheticConfig {
            pool_size: 300,
            validation_size: 10,
            ..Default::default()
        })
        .unwrap();
        for e in &ds.train_pool {
            let p: Vec<&str> = e.premise.split_whitespace().collect();
            let set: HashSet<&&str> = p.iter().collect();
            assert_eq!(set.len(), p.len());
        }
    }
}
