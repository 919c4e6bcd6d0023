//! A small method × support count × seed sweep. Prints the CSV and the
//! per-cell summary; timing is disabled so the output repeats exactly.

use dforge::bench::{records_to_csv, run_sweep, DataRef, Method, ModelRef, SweepConfig, Timing};
use dforge::data::SyntheticConfig;
use dforge::methods::TrainConfig;
use dforge::Result;

fn main() -> Result<()> {
    let cfg = SweepConfig {
        methods: vec![Method::Baseline, Method::Icl, Method::PbftBitfit, Method::CdLora],
        support_counts: vec![1, 4],
        seeds: vec![0, 1, 2],
        n_inferences: 30,
        data: DataRef::Synthetic(SyntheticConfig {
            pool_size: 200,
            validation_size: 60,
            ..Default::default()
        }),
        teacher: ModelRef {
            preset: "student-xs".into(),
            checkpoint: None,
            init_seed: 1,
        },
        train: TrainConfig {
            learning_rate: 1e-4,
            epochs: 2,
            train_set_size: 4,
            ..Default::default()
        },
        timing: Timing::Disabled,
        ..Default::default()
    };
    let out = run_sweep(&cfg)?;
    print!("{}", records_to_csv(&out.records)?);
    println!("\nmethod       k  seeds  in_acc         out_acc");
    for r in &out.summary.rows {
        println!(
            "{:<11} {:>2}  {:>5}  {:.3}±{:.3}  {:.3}±{:.3}",
            r.method.as_str(),
            r.k,
            r.seeds_ok,
            r.in_acc_mean,
            r.in_acc_std,
            r.out_acc_mean,
            r.out_acc_std,
        );
    }
    println!("failed cells: {}", out.failed());
    Ok(())
}
