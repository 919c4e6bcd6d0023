//! In-context evaluation of a freshly initialized student at several
//! support counts, on the matched and mismatched splits.

use dforge::data::{generate_synthetic, SyntheticConfig};
use dforge::methods::{icl_evaluate, standard_task};
use dforge::model::{MiniTransformer, ModelConfig};
use dforge::Result;

fn main() -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 300,
        validation_size: 100,
        ..Default::default()
    })?;
    let task = standard_task(ds.all_examples())?;
    let model = MiniTransformer::init(&ModelConfig::student_xs(task.vocab_size()), 1)?;

    println!("k  matched  mismatched  skipped");
    for k in [0, 1, 4, 8] {
        let m = icl_evaluate(&model, &task, &ds.train_pool, &ds.validation_matched, k, 50, 0)?;
        let o = icl_evaluate(&model, &task, &ds.train_pool, &ds.validation_mismatched, k, 50, 0)?;
        println!(
            "{k:<2} {:>7.2} {:>11.2} {:>8}",
            m.accuracy,
            o.accuracy,
            m.skipped.len() + o.skipped.len()
        );
    }
    Ok(())
}
