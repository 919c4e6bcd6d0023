use super::example::Example;
use super::prompt::{build_prompt, Prompt, PromptTemplate};
use super::tokenizer::Tokenizer;
use super::verbalizer::VerbalizerMap;
use crate::error::{Error, Result};

/// Everything needed to turn examples into model inputs: template,
/// tokenizer, and a resolved verbalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub template: PromptTemplate,
    pub tokenizer: Tokenizer,
    pub verbalizer: VerbalizerMap,
}

impl Task {
    /// Builds a tokenizer covering the template, every example, the
    /// verbalizer forms, and `extra_words`.
    pub fn build<'a>(
        template: PromptTemplate,
        verbalizer: VerbalizerMap,
        examples: impl IntoIterator<Item = &'a Example>,
        extra_words: &[&str],
    ) -> Result<Self> {
        let mut reserved = verbalizer.all_forms();
        reserved.extend_from_slice(extra_words);
        let scaffold = template.render_block("", "", "");
        let mut texts = vec![template.prefix.clone(), template.separator.clone(), scaffold];
        for e in examples {
            texts.push(e.premise.clone());
            texts.push(e.hypothesis.clone());
        }
        let tokenizer = Tokenizer::build(&reserved, texts.iter().map(String::as_str));
        Self::new(template, tokenizer, verbalizer)
    }

    pub fn new(template: PromptTemplate, tokenizer: Tokenizer, verbalizer: VerbalizerMap) -> Result<Self> {
        let verbalizer = verbalizer.resolve(&tokenizer)?;
        if tokenizer.encode(&template.separator).len() != 1 {
            return Err(Error::config("separator", "must encode to exactly one token"));
        }
        Ok(Self {
            template,
            tokenizer,
            verbalizer,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokenizer.vocab_size()
    }

    pub fn prompt(&self, supports: &[Example], query: &Example, max_len: usize) -> Result<Prompt> {
        build_prompt(&self.template, &self.tokenizer, &self.verbalizer, supports, query, max_len)
    }

    /// Same layout with a different answer vocabulary for support blocks.
    pub fn prompt_with(
        &self,
        vmap: &VerbalizerMap,
        supports: &[Example],
        query: &Example,
        max_len: usize,
    ) -> Result<Prompt> {
        build_prompt(&self.template, &self.tokenizer, vmap, supports, query, max_len)
    }
}
