//! Few-shot adaptation: in-context learning, pattern-based fine-tuning,
//! context distillation, and the format pretraining that precedes them.

mod alpha;
mod cd;
mod config;
mod eval;
mod pbft;
mod pretrain;
mod train;

pub use alpha::{alpha_sweep, AlphaRow, AlphaSweep, EvalSets};
pub use cd::{cd_train, objective, student_instances, teacher_targets, teacher_train_accuracy, CdOutcome};
pub use config::{DistillConfig, KlDirection, KlSupport, LossBreakdown, TrainConfig, LR_RANGE};
pub use eval::{draw_eval_queries, evaluate_queries, icl_evaluate, EvalReport, QueryRecord, SkippedQuery};
pub use pbft::{pbft_instances, pbft_train, PbftOutcome};
pub use pretrain::{format_pretrain, pretrain_verbalizer, standard_task, PretrainConfig, PretrainLog, PretrainReport, PRETRAIN_ANSWERS};
pub use train::{instance_loss, train_loop, write_log, Instance, Objective, Observer, StepLog, TrainReport};

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::data::{generate_synthetic, SyntheticConfig, SyntheticDataset, Task};
    use crate::model::{MiniTransformer, ModelConfig};

    pub fn dataset() -> SyntheticDataset {
        generate_synthetic(&SyntheticConfig {
            pool_size: 120,
            validation_size: 60,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    pub fn task(ds: &SyntheticDataset) -> Task {
        super::standard_task(ds.all_examples()).unwrap()
    }

    /// One layer, width 16: fast enough for many short runs.
    pub fn tiny(task: &Task, seed: u64) -> MiniTransformer {
        let cfg = ModelConfig {
            vocab_size: task.vocab_size(),
            max_seq_len: 256,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            dropout_p: 0.1,
            tie_embeddings: true,
        };
        MiniTransformer::init(&cfg, seed).unwrap()
    }
}
