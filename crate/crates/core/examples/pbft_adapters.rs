//! Pattern-based fine-tuning with full updates, LoRA and BitFit: how much
//! each one trains and what the training step costs in tensor memory.

use dforge::adapters::{count_trainable, AdapterKind, LoraConfig};
use dforge::data::{generate_synthetic, SyntheticConfig};
use dforge::methods::{icl_evaluate, pbft_train, standard_task, TrainConfig};
use dforge::model::{MiniTransformer, ModelConfig};
use dforge::Result;

fn main() -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 300,
        validation_size: 100,
        ..Default::default()
    })?;
    let task = standard_task(ds.all_examples())?;
    let base = MiniTransformer::init(&ModelConfig::student_xs(task.vocab_size()), 1)?;
    let k = 4;

    let adapters = [
        AdapterKind::None,
        AdapterKind::Lora(LoraConfig::default()),
        AdapterKind::Bitfit,
    ];
    for adapter in adapters {
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            epochs: 5,
            train_set_size: 10,
            adapter,
            ..Default::default()
        };
        let mut model = base.clone();
        let out = pbft_train(&mut model, &task, &ds.train_pool, k, &cfg, None)?;
        let counts = count_trainable(&model);
        let acc = icl_evaluate(&model, &task, &ds.train_pool, &ds.validation_matched, k, 50, 0)?.accuracy;
        println!(
            "{:<7} trainable {:>6} of {} ({:.2}%), loss {:.3} -> {:.3}, peak {} KiB, acc {acc:.2}",
            cfg.adapter.name(),
            counts.trainable,
            counts.total,
            100.0 * counts.fraction,
            out.report.epoch_loss[0],
            out.report.epoch_loss.last().unwrap(),
            out.report.peak_bytes / 1024,
        );
    }
    Ok(())
}
