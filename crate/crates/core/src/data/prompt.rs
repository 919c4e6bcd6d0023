//! Prompt assembly.
//!
//! Rendered layout, with every section joined by a single `\n`:
//!
//! ```text
//! <prefix>
//! Premise: <premise>
//! Hypothesis: <hypothesis>
//! Answer: <answer word>        (once per support)
//! Premise: <premise>
//! Hypothesis: <hypothesis>
//! Answer: 
//! ```
//!
//! The query block ends with `Answer:` and one space, so the model's next
//! prediction is the answer. Token sequences start with `BOS`.

use serde::{Deserialize, Serialize};

use super::example::Example;
use super::tokenizer::{Tokenizer, BOS};
use super::verbalizer::VerbalizerMap;
use crate::error::{Error, Result};

pub const DEFAULT_PREFIX: &str =
    "Determine if the premise entails the hypothesis. Answer with yes or no.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub prefix: String,
    pub separator: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            prefix: DEFAULT_PREFIX.into(),
            separator: "\n".into(),
        }
    }
}

/// Per-section token counts, for overflow diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SectionCounts {
    pub prefix: usize,
    pub supports: Vec<usize>,
    pub query: usize,
}

impl SectionCounts {
    pub fn total(&self) -> usize {
        // BOS plus one separator token between sections
        1 + self.prefix + self.supports.iter().map(|s| s + 1).sum::<usize>() + 1 + self.query
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub tokens: Vec<u32>,
    /// Index whose next-token logits score the answer.
    pub answer_position: usize,
    pub sections: SectionCounts,
}

impl PromptTemplate {
    pub fn render_block(&self, premise: &str, hypothesis: &str, answer: &str) -> String {
        format!("Premise: {premise}\nHypothesis: {hypothesis}\nAnswer: {answer}")
    }

    /// Full prompt text, as tokenized by [`build_prompt`].
    pub fn render(&self, supports: &[Example], query: &Example, vmap: &VerbalizerMap) -> String {
        let mut parts = vec![self.prefix.clone()];
        for s in supports {
            parts.push(self.render_block(&s.premise, &s.hypothesis, vmap.answer_word(s.label)));
        }
        parts.push(self.render_block(&query.premise, &query.hypothesis, ""));
        parts.join(&self.separator)
    }
}

/// Builds the token sequence for `supports` followed by `query`. Support
/// blocks carry their gold answer word from `vmap`.
pub fn build_prompt(
    template: &PromptTemplate,
    tok: &Tokenizer,
    vmap: &VerbalizerMap,
    supports: &[Example],
    query: &Example,
    max_len: usize,
) -> Result<Prompt> {
    let sep = tok.encode(&template.separator);
    if sep.len() != 1 {
        return Err(Error::config("separator", "must encode to exactly one token"));
    }
    let prefix = tok.encode(&template.prefix);
    let blocks: Vec<Vec<u32>> = supports
        .iter()
        .map(|s| tok.encode(&template.render_block(&s.premise, &s.hypothesis, vmap.answer_word(s.label))))
        .collect();
    let q = tok.encode(&template.render_block(&query.premise, &query.hypothesis, ""));
    let sections = SectionCounts {
        prefix: prefix.len(),
        supports: blocks.iter().map(Vec::len).collect(),
        query: q.len(),
    };
    let total = sections.total();
    if total > max_len {
        return Err(Error::ContextWindow {
            limit: max_len,
            actual: total,
            detail: format!(
                " (bos 1, prefix {}, supports {:?} + {} separators, query {})",
                sections.prefix,
                sections.supports,
                sections.supports.len() + 1,
                sections.query
            ),
        });
    }
    let mut tokens = Vec::with_capacity(total);
    tokens.push(BOS);
    tokens.extend(&prefix);
    for b in &blocks {
        tokens.extend(&sep);
        tokens.extend(b);
    }
    tokens.extend(&sep);
    tokens.extend(&q);
    Ok(Prompt {
        answer_position: tokens.len() - 1,
        tokens,
        sections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Split};

    fn ex(uid: u64, p: &str, h: &str, label: Label) -> Example {
        Example {
            uid,
            premise: p.into(),
            hypothesis: h.into(),
            label,
            split: Split::TrainPool,
        }
    }

    fn setup() -> (PromptTemplate, Tokenizer, VerbalizerMap) {
        let vm = VerbalizerMap::default();
        let t = PromptTemplate::default();
        let tok = Tokenizer::build(
            &vm.all_forms(),
            [t.prefix.as_str(), "Premise: Hypothesis: Answer: a b c d e\n"],
        );
        let vm = vm.resolve(&tok).unwrap();
        (t, tok, vm)
    }

    #[test]
    fn zero_supports_answer_at_end() {
        let (t, tok, vm) = setup();
        let q = ex(0, "a b c", "a c", Label::Entailment);
        let p = build_prompt(&t, &tok, &vm, &[], &q, 100).unwrap();
        assert_eq!(p.answer_position, p.tokens.len() - 1);
        assert_eq!(tok.token(p.tokens[p.answer_position]), Some(":"));
        assert_eq!(p.tokens[0], BOS);
        assert_eq!(&p.tokens[1..], tok.encode(&t.render(&[], &q, &vm)).as_slice());
    }

    #[test]
    fn overflow_reports_sections() {
        let (t, tok, vm) = setup();
        let q = ex(0, "a b c", "a c", Label::Entailment);
        let s = ex(1, "d e", "e", Label::Contradiction);
        let err = build_prompt(&t, &tok, &vm, &[s.clone(), s], &q, 20).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("limit 20") && msg.contains("prefix 14"), "{msg}");
    }
}
