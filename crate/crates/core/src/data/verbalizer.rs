//! Label ↔ answer-token mapping and answer-position scoring.

use serde::{Deserialize, Serialize};

use super::example::Label;
use super::tokenizer::{split_words, Tokenizer};
use crate::error::{Error, Result};

/// Surface forms per label. The first form of each label is the one written
/// into support blocks and used as the supervised answer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizerMap {
    pub entailment: Vec<String>,
    pub contradiction: Vec<String>,
    #[serde(skip)]
    ids: Option<[Vec<u32>; 2]>,
}

impl Default for VerbalizerMap {
    fn default() -> Self {
        Self::new(&["Yes", "yes"], &["No", "no"])
    }
}

impl VerbalizerMap {
    pub fn new(entailment: &[&str], contradiction: &[&str]) -> Self {
        Self {
            entailment: entailment.iter().map(|s| s.to_string()).collect(),
            contradiction: contradiction.iter().map(|s| s.to_string()).collect(),
            ids: None,
        }
    }

    pub fn forms(&self, label: Label) -> &[String] {
        match label {
            Label::Entailment => &self.entailment,
            Label::Contradiction => &self.contradiction,
        }
    }

    /// The word written after `Answer:` for a labelled block.
    pub fn answer_word(&self, label: Label) -> &str {
        &self.forms(label)[0]
    }

    /// Every form, entailment first, for seeding a tokenizer vocabulary.
    pub fn all_forms(&self) -> Vec<&str> {
        self.entailment.iter().chain(&self.contradiction).map(String::as_str).collect()
    }

    /// Resolves forms to token ids, checking that each form is exactly one
    /// in-vocabulary token and that the two labels share no id.
    pub fn resolve(mut self, tok: &Tokenizer) -> Result<Self> {
        if self.entailment.is_empty() || self.contradiction.is_empty() {
            return Err(Error::config("verbalizer", "each label needs at least one form"));
        }
        let mut ids: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
        for label in Label::ALL {
            for form in self.forms(label) {
                let pieces = split_words(form);
                let id = match pieces.as_slice() {
                    [one] if *one == form => tok.id(one),
                    _ => None,
                };
                let id = id.ok_or_else(|| {
                    Error::config(
                        "verbalizer",
                        format!("form `{form}` is not a single in-vocabulary token"),
                    )
                })?;
                ids[label.index()].push(id);
            }
        }
        if ids[0].iter().any(|i| ids[1].contains(i)) {
            return Err(Error::config("verbalizer", "label token sets overlap"));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn is_resolved(&self) -> bool {
        self.ids.is_some()
    }

    fn resolved(&self) -> &[Vec<u32>; 2] {
        self.ids.as_ref().expect("verbalizer used before resolve()")
    }

    pub fn label_ids(&self, label: Label) -> &[u32] {
        &self.resolved()[label.index()]
    }

    /// Supervised answer token for `label`.
    pub fn gold_id(&self, label: Label) -> u32 {
        self.label_ids(label)[0]
    }

    /// All verbalizer ids, entailment forms first. This is the KL support
    /// in verbalizer-token distillation.
    pub fn token_ids(&self) -> Vec<usize> {
        let [e, c] = self.resolved();
        e.iter().chain(c).map(|&i| i as usize).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerbalizerScore {
    pub label: Label,
    pub prob_yes: f64,
    pub prob_no: f64,
    /// `prob_yes + prob_no`: how much of the full distribution the
    /// verbalizer accounts for.
    pub coverage: f64,
}

/// Full-vocabulary softmax, probability summed over each label's forms.
/// Ties go to entailment.
pub fn score_verbalizer(logits: &[f64], vmap: &VerbalizerMap) -> Result<VerbalizerScore> {
    let ids = vmap.token_ids();
    if let Some(&bad) = ids.iter().find(|&&i| i >= logits.len()) {
        return Err(Error::Index {
            what: "verbalizer token",
            index: bad,
            size: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(format!("answer logits contain {max}")));
    }
    let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    let mass = |label| {
        vmap.label_ids(label)
            .iter()
            .map(|&i| (logits[i as usize] - max).exp() / z)
            .sum::<f64>()
    };
    let (prob_yes, prob_no) = (mass(Label::Entailment), mass(Label::Contradiction));
    Ok(VerbalizerScore {
        label: if prob_yes >= prob_no { Label::Entailment } else { Label::Contradiction },
        prob_yes,
        prob_no,
        coverage: prob_yes + prob_no,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Tokenizer, VerbalizerMap) {
        let vm = VerbalizerMap::default();
        let tok = Tokenizer::build(&vm.all_forms(), ["a b c d e f"]);
        let vm = vm.resolve(&tok).unwrap();
        (tok, vm)
    }

    #[test]
    fn spike_on_yes() {
        let (tok, vm) = setup();
        let mut logits = vec![0.0; tok.vocab_size()];
        logits[tok.id("Yes").unwrap() as usize] = 10.0;
        let s = score_verbalizer(&logits, &vm).unwrap();
        assert_eq!(s.label, Label::Entailment);
        assert!(s.prob_yes > 0.99);
    }

    #[test]
    fn uniform_coverage_is_form_fraction() {
        let (tok, vm) = setup();
        let v = tok.vocab_size();
        let s = score_verbalizer(&vec![0.0; v], &vm).unwrap();
        assert!((s.coverage - 4.0 / v as f64).abs() < 1e-15);
    }

    #[test]
    fn multi_token_form_rejected() {
        let tok = Tokenizer::build(&["Yes", "No"], ["of course"]);
        let err = VerbalizerMap::new(&["of course"], &["No"]).resolve(&tok).unwrap_err();
        assert!(err.to_string().contains("of course"));
        let err = VerbalizerMap::new(&["Yes."], &["No"]).resolve(&tok).unwrap_err();
        assert!(err.to_string().contains("Yes."));
    }

    #[test]
    fn overlapping_labels_rejected() {
        let tok = Tokenizer::build(&["Yes", "No"], [""]);
        assert!(VerbalizerMap::new(&["Yes"], &["No", "Yes"]).resolve(&tok).is_err());
    }
}
