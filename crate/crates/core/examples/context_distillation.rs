//! Distills a teacher that reads four supports into a student that reads
//! only the query, printing the loss terms as training goes.

use dforge::data::{generate_synthetic, SyntheticConfig};
use dforge::methods::{cd_train, icl_evaluate, standard_task, DistillConfig, StepLog, TrainConfig};
use dforge::model::{MiniTransformer, ModelConfig};
use dforge::Result;

fn main() -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 300,
        validation_size: 100,
        ..Default::default()
    })?;
    let task = standard_task(ds.all_examples())?;
    let teacher = MiniTransformer::init(&ModelConfig::teacher_s(task.vocab_size()), 1)?;
    let mut student = MiniTransformer::init(&ModelConfig::student_xs(task.vocab_size()), 2)?;

    let dcfg = DistillConfig {
        alpha: 0.5,
        k: 4,
        train: TrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            train_set_size: 10,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut observe = |s: &StepLog, _: &MiniTransformer| {
        if s.step.is_multiple_of(20) {
            println!(
                "step {:>3}  kl {:.4}  ce {:.4}  total {:.4}",
                s.step,
                s.l_kl.unwrap_or(f64::NAN),
                s.l_ce,
                s.l_total
            );
        }
    };
    let out = cd_train(&teacher, &mut student, &task, &ds.train_pool, &dcfg, Some(&mut observe))?;
    println!(
        "peak bytes: teacher {}, student {}, whole run {}",
        out.teacher_peak_bytes, out.student_peak_bytes, out.total_peak_bytes
    );
    let acc = icl_evaluate(&student, &task, &ds.train_pool, &ds.validation_matched, 0, 50, 0)?.accuracy;
    println!("student query-only accuracy: {acc:.2}");
    Ok(())
}
