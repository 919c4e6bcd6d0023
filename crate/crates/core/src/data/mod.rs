//! NLI examples, tokenization, prompts, verbalizers and support sampling.

mod example;
mod mnli;
mod prompt;
mod sampler;
mod synthetic;
mod task;
mod tokenizer;
mod verbalizer;

pub use example::{Example, Label, Split};
pub use mnli::{load_mnli_jsonl, parse_mnli_jsonl, to_jsonl, write_jsonl, MnliLoad};
pub use prompt::{build_prompt, Prompt, PromptTemplate, SectionCounts, DEFAULT_PREFIX};
pub use sampler::{draw, draw_train_queries, PoolSampler};
pub use synthetic::{
    audit, generate_split, generate_synthetic, rule_label, symbol_sets, SyntheticConfig,
    SyntheticDataset, DATASET_FILE,
};
pub use task::Task;
pub use tokenizer::{split_words, Tokenizer, BOS, PAD, UNK};
pub use verbalizer::{score_verbalizer, VerbalizerMap, VerbalizerScore};
