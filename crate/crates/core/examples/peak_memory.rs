//! Peak tensor memory of one training step as the prompt grows. Full-prompt
//! fine-tuning pays for every support; the distilled student never sees them.

use dforge::bench::{measure_peak_memory, measure_wall_time};
use dforge::data::{generate_synthetic, SyntheticConfig};
use dforge::methods::{cd_train, pbft_train, standard_task, DistillConfig, TrainConfig};
use dforge::model::{MiniTransformer, ModelConfig};
use dforge::Result;

fn main() -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 300,
        validation_size: 20,
        ..Default::default()
    })?;
    let task = standard_task(ds.all_examples())?;
    let teacher = MiniTransformer::init(&ModelConfig::teacher_s(task.vocab_size()), 1)?;
    let student = MiniTransformer::init(&ModelConfig::student_xs(task.vocab_size()), 2)?;
    let train = TrainConfig {
        epochs: 1,
        train_set_size: 4,
        ..Default::default()
    };

    println!(" k  pbft_peak  cd_student_peak  cd_teacher_peak  cd_ms");
    for k in [1, 4, 8, 12] {
        let (pbft, pbft_bytes) = measure_peak_memory(|| {
            let mut s = student.clone();
            pbft_train(&mut s, &task, &ds.train_pool, k, &train, None)
        })?;
        pbft?;
        let dcfg = DistillConfig {
            k,
            train: train.clone(),
            ..Default::default()
        };
        let (cd, ms) = measure_wall_time(|| {
            let mut s = student.clone();
            cd_train(&teacher, &mut s, &task, &ds.train_pool, &dcfg, None)
        });
        let cd = cd?;
        println!(
            "{k:>2}  {pbft_bytes:>9}  {:>15}  {:>15}  {ms:>5.0}",
            cd.student_peak_bytes, cd.teacher_peak_bytes
        );
    }
    Ok(())
}
