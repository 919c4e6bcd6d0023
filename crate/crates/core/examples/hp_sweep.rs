//! Learning-rate × epoch grid search for distillation, selecting the cell
//! with the best out-of-domain accuracy.

use dforge::bench::{hp_to_csv, hyperparam_sweep, HpGrid, Method, SweepConfig, SweepEnv, Timing};
use dforge::data::{generate_synthetic, SyntheticConfig};
use dforge::methods::TrainConfig;
use dforge::Result;

fn main() -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 200,
        validation_size: 60,
        ..Default::default()
    })?;
    let base = SweepConfig {
        seeds: vec![0, 1],
        n_inferences: 30,
        train: TrainConfig {
            train_set_size: 4,
            ..Default::default()
        },
        timing: Timing::Disabled,
        ..Default::default()
    };
    let env = SweepEnv::from_dataset(&ds, &base.student, &base.student)?;
    let grid = HpGrid {
        method: Method::Cd,
        k: 4,
        learning_rates: vec![1e-4, 1e-5],
        epochs: vec![2, 4],
    };
    let result = hyperparam_sweep(&env, &base, &grid)?;
    print!("{}", hp_to_csv(&result)?);
    if let Some(best) = result.best_row() {
        println!("selected lr {} with {} epochs", best.learning_rate, best.epochs);
    }
    Ok(())
}
