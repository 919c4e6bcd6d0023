use serde::{Deserialize, Serialize};

use super::sweep::{run_cell, Method, SweepConfig, SweepEnv};
use super::table::{csv_writer, fmt_real};
use crate::error::{Error, Result};
use crate::methods::LR_RANGE;

pub const EPOCH_RANGE: (usize, usize) = (2, 100);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpGrid {
    pub method: Method,
    pub k: usize,
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl HpGrid {
    pub fn validate(&self) -> Result<()> {
        if !self.method.trains() {
            return Err(Error::config("method", format!("`{}` has nothing to tune", self.method.as_str())));
        }
        if self.learning_rates.is_empty() || self.epochs.is_empty() {
            return Err(Error::config("grid", "learning rate and epoch grids must be non-empty"));
        }
        if let Some(lr) = self.learning_rates.iter().find(|lr| !(LR_RANGE.0..=LR_RANGE.1).contains(*lr)) {
            return Err(Error::config(
                "learning_rates",
                format!("{lr} outside [{:e}, {:e}]", LR_RANGE.0, LR_RANGE.1),
            ));
        }
        if let Some(e) = self.epochs.iter().find(|e| !(EPOCH_RANGE.0..=EPOCH_RANGE.1).contains(*e)) {
            return Err(Error::config(
                "epochs",
                format!("{e} outside [{}, {}]", EPOCH_RANGE.0, EPOCH_RANGE.1),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HpRow {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Means over the sweep's seeds; `None` if any seed failed.
    pub in_acc: Option<f64>,
    pub out_acc: Option<f64>,
    pub selected: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HpResult {
    /// Learning-rate-major, in grid order.
    pub rows: Vec<HpRow>,
    pub best: Option<usize>,
}

impl HpResult {
    pub fn best_row(&self) -> Option<&HpRow> {
        self.best.map(|i| &self.rows[i])
    }
}

/// Highest out-of-domain accuracy; ties go to fewer epochs, then the lower
/// learning rate.
fn select(rows: &[HpRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        let Some(acc) = r.out_acc else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let o = &rows[b];
                let oa = o.out_acc.unwrap();
                acc > oa
                    || (acc == oa
                        && (r.epochs < o.epochs || (r.epochs == o.epochs && r.learning_rate < o.learning_rate)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Exhaustive grid search. Every cell uses the same seeds as `base`, so
/// cells are compared on paired runs.
pub fn hyperparam_sweep(env: &SweepEnv, base: &SweepConfig, grid: &HpGrid) -> Result<HpResult> {
    grid.validate()?;
    base.validate()?;
    let mut rows = Vec::new();
    for &lr in &grid.learning_rates {
        for &epochs in &grid.epochs {
            let mut cfg = base.clone();
            cfg.train.learning_rate = lr;
            cfg.train.epochs = epochs;
            let recs: Vec<_> = base.seeds.iter().map(|&s| run_cell(env, &cfg, grid.method, grid.k, s)).collect();
            let n = recs.len() as f64;
            let row = match recs.iter().find(|r| r.failed()) {
                Some(f) => HpRow {
                    learning_rate: lr,
                    epochs,
                    in_acc: None,
                    out_acc: None,
                    selected: false,
                    note: format!("seed {}: {}", f.seed, f.notes),
                },
                None => HpRow {
                    learning_rate: lr,
                    epochs,
                    in_acc: Some(recs.iter().map(|r| r.in_domain_acc.unwrap()).sum::<f64>() / n),
                    out_acc: Some(recs.iter().map(|r| r.out_domain_acc.unwrap()).sum::<f64>() / n),
                    selected: false,
                    note: String::new(),
                },
            };
            rows.push(row);
        }
    }
    let best = select(&rows);
    if let Some(b) = best {
        rows[b].selected = true;
    }
    Ok(HpResult { rows, best })
}

pub const HP_CSV_HEADER: [&str; 6] = ["learning_rate", "epochs", "in_acc", "out_acc", "selected", "note"];

pub fn hp_to_csv(result: &HpResult) -> Result<String> {
    let err = |e: csv::Error| Error::State(format!("csv: {e}"));
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(HP_CSV_HEADER).map_err(err)?;
        for r in &result.rows {
            w.write_record([
                format!("{:e}", r.learning_rate),
                r.epochs.to_string(),
                fmt_real(r.in_acc),
                fmt_real(r.out_acc),
                u8::from(r.selected).to_string(),
                r.note.clone(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::State(format!("csv: {e}")))?;
    }
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(lr: f64, epochs: usize, out: Option<f64>) -> HpRow {
        HpRow {
            learning_rate: lr,
            epochs,
            in_acc: out,
            out_acc: out,
            selected: false,
            note: String::new(),
        }
    }

    #[test]
    fn ties_prefer_fewer_epochs_then_lower_lr() {
        let rows = [
            row(1e-4, 10, Some(0.6)),
            row(1e-5, 10, Some(0.6)),
            row(1e-4, 2, Some(0.6)),
            row(1e-6, 2, Some(0.6)),
            row(1e-7, 100, Some(0.5)),
        ];
        assert_eq!(select(&rows), Some(3));
    }

    #[test]
    fn failed_cells_never_win() {
        let rows = [row(1e-4, 2, None), row(1e-5, 2, Some(0.1))];
        assert_eq!(select(&rows), Some(1));
        assert_eq!(select(&[row(1e-4, 2, None)]), None);
    }

    #[test]
    fn grid_bounds() {
        let mut g = HpGrid {
            method: Method::Pbft,
            k: 1,
            learning_rates: vec![1e-5],
            epochs: vec![2],
        };
        g.validate().unwrap();
        g.epochs = vec![1];
        assert!(g.validate().is_err());
        g.epochs = vec![2];
        g.learning_rates = vec![1e-3];
        assert!(g.validate().is_err());
        g.learning_rates = vec![1e-5];
        g.method = Method::Icl;
        assert!(g.validate().is_err());
    }

    fn env_and_base() -> (SweepEnv, SweepConfig) {
        use crate::methods::fixtures::{dataset, task, tiny};
        use crate::methods::TrainConfig;
        let ds = dataset();
        let t = task(&ds);
        let env = SweepEnv {
            teacher: tiny(&t, 1),
            student: tiny(&t, 2),
            task: t,
            pool: ds.train_pool.clone(),
            matched: ds.validation_matched.clone(),
            mismatched: ds.validation_mismatched.clone(),
        };
        let base = SweepConfig {
            seeds: vec![0, 1],
            n_inferences: 20,
            train: TrainConfig {
                train_set_size: 3,
                ..Default::default()
            },
            timing: super::super::Timing::Disabled,
            ..Default::default()
        };
        (env, base)
    }

    #[test]
    fn one_cell_grid_selects_it() {
        let (env, base) = env_and_base();
        let g = HpGrid {
            method: Method::CdBitfit,
            k: 2,
            learning_rates: vec![1e-4],
            epochs: vec![2],
        };
        let r = hyperparam_sweep(&env, &base, &g).unwrap();
        assert_eq!(r.best, Some(0));
        assert!(r.rows[0].selected);
    }

    #[test]
    fn two_by_two_flags_one_max_row() {
        let (env, base) = env_and_base();
        let g = HpGrid {
            method: Method::Pbft,
            k: 1,
            learning_rates: vec![1e-6, 1e-4],
            epochs: vec![2, 4],
        };
        let r = hyperparam_sweep(&env, &base, &g).unwrap();
        assert_eq!(r.rows.len(), 4);
        // scan the emitted table, not the struct
        let csv = hp_to_csv(&r).unwrap();
        let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
        let flagged: Vec<&Vec<String>> = rows.iter().filter(|c| c[4] == "1").collect();
        assert_eq!(flagged.len(), 1);
        let max = rows.iter().map(|c| c[3].parse::<f64>().unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(flagged[0][3].parse::<f64>().unwrap(), max);
    }
}
