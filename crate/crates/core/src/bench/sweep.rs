use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::measure::{measure_peak_memory, Timing};
use super::protocol::mean_std;
use crate::adapters::{AdapterKind, LoraConfig};
use crate::data::{generate_synthetic, Example, SyntheticConfig, SyntheticDataset, Task};
use crate::error::{Error, Result};
use crate::methods::{
    cd_train, icl_evaluate, pbft_train, standard_task, DistillConfig, KlDirection, KlSupport,
    TrainConfig,
};
use crate::model::{load_checkpoint, MiniTransformer, ModelConfig};

/// A sweepable adaptation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Icl,
    Pbft,
    PbftLora,
    PbftBitfit,
    Cd,
    CdLora,
    CdBitfit,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Baseline,
        Method::Icl,
        Method::Pbft,
        Method::PbftLora,
        Method::PbftBitfit,
        Method::Cd,
        Method::CdLora,
        Method::CdBitfit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Icl => "icl",
            Method::Pbft => "pbft",
            Method::PbftLora => "pbft_lora",
            Method::PbftBitfit => "pbft_bitfit",
            Method::Cd => "cd",
            Method::CdLora => "cd_lora",
            Method::CdBitfit => "cd_bitfit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("methods", format!("unknown method `{s}`")))
    }

    /// The method without its adapter suffix.
    pub fn family(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Icl => "icl",
            Method::Pbft | Method::PbftLora | Method::PbftBitfit => "pbft",
            Method::Cd | Method::CdLora | Method::CdBitfit => "cd",
        }
    }

    pub fn adapter(self, lora: &LoraConfig) -> AdapterKind {
        match self {
            Method::PbftLora | Method::CdLora => AdapterKind::Lora(lora.clone()),
            Method::PbftBitfit | Method::CdBitfit => AdapterKind::Bitfit,
            _ => AdapterKind::None,
        }
    }

    pub fn trains(self) -> bool {
        !matches!(self, Method::Baseline | Method::Icl)
    }
}

/// Where a model comes from: a checkpoint, or a fresh preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelRef {
    pub preset: String,
    pub checkpoint: Option<PathBuf>,
    /// Initialization seed when no checkpoint is given.
    pub init_seed: u64,
}

impl ModelRef {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: name.into(),
            checkpoint: None,
            init_seed: 0,
        }
    }

    pub fn resolve(&self, task: &Task) -> Result<MiniTransformer> {
        let m = match &self.checkpoint {
            Some(p) => load_checkpoint(p)?,
            None => MiniTransformer::init(&ModelConfig::preset(&self.preset, task.vocab_size())?, self.init_seed)?,
        };
        if m.config().vocab_size != task.vocab_size() {
            return Err(Error::config(
                "vocab_size",
                format!("model has {} but the dataset's tokenizer has {}", m.config().vocab_size, task.vocab_size()),
            ));
        }
        Ok(m)
    }
}

impl Default for ModelRef {
    fn default() -> Self {
        Self::preset("student-xs")
    }
}

/// A dataset directory written by `SyntheticDataset::save`, or a generator
/// config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRef {
    Dir(PathBuf),
    Synthetic(SyntheticConfig),
}

impl Default for DataRef {
    fn default() -> Self {
        DataRef::Synthetic(SyntheticConfig::default())
    }
}

impl DataRef {
    pub fn resolve(&self) -> Result<SyntheticDataset> {
        match self {
            DataRef::Dir(d) => SyntheticDataset::load(d),
            DataRef::Synthetic(c) => generate_synthetic(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub support_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_inferences: usize,
    pub teacher: ModelRef,
    pub student: ModelRef,
    pub data: DataRef,
    /// CSV destination; the summary JSON goes next to it.
    pub output: PathBuf,
    /// Shared by every trained method. `seed` and `adapter` are set per cell.
    pub train: TrainConfig,
    pub alpha: f64,
    pub temperature: f64,
    pub kl_support: KlSupport,
    pub kl_direction: KlDirection,
    pub lora: LoraConfig,
    pub timing: Timing,
    /// Worker threads. Cells are independent, so results do not depend on it.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            support_counts: vec![1, 4, 8, 12],
            seeds: vec![0, 1, 2, 3, 4],
            n_inferences: 100,
            teacher: ModelRef::preset("teacher-s"),
            student: ModelRef::preset("student-xs"),
            data: DataRef::default(),
            output: PathBuf::from("sweep.csv"),
            train: TrainConfig::default(),
            alpha: 0.5,
            temperature: 1.0,
            kl_support: KlSupport::VerbalizerTokens,
            kl_direction: KlDirection::Forward,
            lora: LoraConfig::default(),
            timing: Timing::Measured,
            jobs: 1,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must not be empty"));
        }
        if self.support_counts.is_empty() || self.support_counts.contains(&0) {
            return Err(Error::config("support_counts", "must be non-empty and positive"));
        }
        if !self.support_counts.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("support_counts", "must be strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.n_inferences == 0 {
            return Err(Error::config("n_inferences", "must be >= 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be >= 1"));
        }
        self.distill(0, self.train.clone()).validate()?;
        self.lora.validate()
    }

    pub fn distill(&self, k: usize, train: TrainConfig) -> DistillConfig {
        DistillConfig {
            alpha: self.alpha,
            temperature: self.temperature,
            kl_support: self.kl_support,
            kl_direction: self.kl_direction,
            k,
            train,
        }
    }

    /// The train config of one cell.
    pub fn cell_train(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            adapter: method.adapter(&self.lora),
            ..self.train.clone()
        }
    }
}

/// Resolved inputs shared by every cell of a sweep.
pub struct SweepEnv {
    pub task: Task,
    pub pool: Vec<Example>,
    pub matched: Vec<Example>,
    pub mismatched: Vec<Example>,
    pub teacher: MiniTransformer,
    pub student: MiniTransformer,
}

impl SweepEnv {
    pub fn from_dataset(ds: &SyntheticDataset, teacher: &ModelRef, student: &ModelRef) -> Result<Self> {
        let task = standard_task(ds.all_examples())?;
        Ok(Self {
            teacher: teacher.resolve(&task)?,
            student: student.resolve(&task)?,
            task,
            pool: ds.train_pool.clone(),
            matched: ds.validation_matched.clone(),
            mismatched: ds.validation_mismatched.clone(),
        })
    }

    pub fn resolve(cfg: &SweepConfig) -> Result<Self> {
        Self::from_dataset(&cfg.data.resolve()?, &cfg.teacher, &cfg.student)
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub method: Method,
    pub adapter: &'static str,
    pub k: usize,
    pub seed: u64,
    /// `None` for a failed cell.
    pub in_domain_acc: Option<f64>,
    pub out_domain_acc: Option<f64>,
    /// Training-phase peak for trained methods, inference peak otherwise.
    pub peak_memory_bytes: Option<u64>,
    pub train_time_ms: u64,
    pub eval_time_ms: u64,
    pub notes: String,
}

impl BenchRecord {
    pub fn failed(&self) -> bool {
        self.in_domain_acc.is_none()
    }
}

struct CellOut {
    in_acc: f64,
    out_acc: f64,
    peak: u64,
    train_ms: u64,
    eval_ms: u64,
    notes: Vec<String>,
}

/// Query-only evaluation for CD students and the baseline, full prompts
/// for ICL and PBFT.
fn eval_k(method: Method, k: usize) -> usize {
    match method.family() {
        "baseline" | "cd" => 0,
        _ => k,
    }
}

fn evaluate(
    env: &SweepEnv,
    model: &MiniTransformer,
    k: usize,
    n: usize,
    seed: u64,
    notes: &mut Vec<String>,
) -> Result<(f64, f64)> {
    let mut accs = [0.0; 2];
    for (i, (name, split)) in [("matched", &env.matched), ("mismatched", &env.mismatched)]
        .into_iter()
        .enumerate()
    {
        let r = icl_evaluate(model, &env.task, &env.pool, split, k, n, seed)?;
        if r.scored == 0 {
            return Err(Error::State(format!("no {name} query could be scored: {}", r.skipped[0].error)));
        }
        if !r.skipped.is_empty() {
            notes.push(format!("{name}: {} of {n} skipped (context overflow)", r.skipped.len()));
        }
        accs[i] = r.accuracy;
    }
    Ok((accs[0], accs[1]))
}

fn run_cell_inner(env: &SweepEnv, cfg: &SweepConfig, method: Method, k: usize, seed: u64) -> Result<CellOut> {
    let mut notes = Vec::new();
    let n = cfg.n_inferences;
    if !method.trains() {
        let ek = eval_k(method, k);
        let (res, ms) = cfg.timing.time(|| measure_peak_memory(|| evaluate(env, &env.student, ek, n, seed, &mut notes)));
        let ((in_acc, out_acc), peak) = {
            let (r, peak) = res?;
            (r?, peak)
        };
        return Ok(CellOut {
            in_acc,
            out_acc,
            peak,
            train_ms: 0,
            eval_ms: ms,
            notes,
        });
    }

    let train = cfg.cell_train(method, seed);
    let mut model = env.student.clone();
    let (peak, train_ms) = if method.family() == "pbft" {
        let (out, ms) = cfg.timing.time(|| pbft_train(&mut model, &env.task, &env.pool, k, &train, None));
        (out?.report.peak_bytes, ms)
    } else {
        let dcfg = cfg.distill(k, train);
        let (out, ms) =
            cfg.timing.time(|| cd_train(&env.teacher, &mut model, &env.task, &env.pool, &dcfg, None));
        (out?.student_peak_bytes, ms)
    };
    let ek = eval_k(method, k);
    let (accs, eval_ms) = cfg.timing.time(|| evaluate(env, &model, ek, n, seed, &mut notes));
    let (in_acc, out_acc) = accs?;
    Ok(CellOut {
        in_acc,
        out_acc,
        peak,
        train_ms,
        eval_ms,
        notes,
    })
}

/// Runs one (method, k, seed) cell. Failures become error-noted records.
pub fn run_cell(env: &SweepEnv, cfg: &SweepConfig, method: Method, k: usize, seed: u64) -> BenchRecord {
    let adapter = method.adapter(&cfg.lora).name();
    match run_cell_inner(env, cfg, method, k, seed) {
        Ok(c) => BenchRecord {
            method,
            adapter,
            k,
            seed,
            in_domain_acc: Some(c.in_acc),
            out_domain_acc: Some(c.out_acc),
            peak_memory_bytes: Some(c.peak),
            train_time_ms: c.train_ms,
            eval_time_ms: c.eval_ms,
            notes: c.notes.join("; "),
        },
        Err(e) => {
            log::warn!("{} k={k} seed={seed} failed: {e}", method.as_str());
            BenchRecord {
                method,
                adapter,
                k,
                seed,
                in_domain_acc: None,
                out_domain_acc: None,
                peak_memory_bytes: None,
                train_time_ms: 0,
                eval_time_ms: 0,
                notes: format!("error: {e}"),
            }
        }
    }
}

/// Per-(method, k) aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub adapter: &'static str,
    pub k: usize,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub in_acc_mean: f64,
    pub in_acc_std: f64,
    pub out_acc_mean: f64,
    pub out_acc_std: f64,
    pub peak_mem_bytes_mean: f64,
    pub train_ms_mean: f64,
    pub eval_ms_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    /// Always "population".
    pub stddev: &'static str,
    pub rows: Vec<SummaryRow>,
}

pub fn summarize(records: &[BenchRecord]) -> SweepSummary {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.method, r.k)) {
            keys.push((r.method, r.k));
        }
    }
    let rows = keys
        .into_iter()
        .map(|(method, k)| {
            let cell: Vec<&BenchRecord> = records.iter().filter(|r| r.method == method && r.k == k).collect();
            let ok: Vec<&&BenchRecord> = cell.iter().filter(|r| !r.failed()).collect();
            let col = |f: &dyn Fn(&BenchRecord) -> f64| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (in_m, in_s) = col(&|r| r.in_domain_acc.unwrap());
            let (out_m, out_s) = col(&|r| r.out_domain_acc.unwrap());
            SummaryRow {
                method,
                adapter: cell[0].adapter,
                k,
                seeds_ok: ok.len(),
                seeds_failed: cell.len() - ok.len(),
                in_acc_mean: in_m,
                in_acc_std: in_s,
                out_acc_mean: out_m,
                out_acc_std: out_s,
                peak_mem_bytes_mean: col(&|r| r.peak_memory_bytes.unwrap() as f64).0,
                train_ms_mean: col(&|r| r.train_time_ms as f64).0,
                eval_ms_mean: col(&|r| r.eval_time_ms as f64).0,
            }
        })
        .collect();
    SweepSummary {
        stddev: "population",
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    /// Method-major, then k, then seed, in config order.
    pub records: Vec<BenchRecord>,
    pub summary: SweepSummary,
}

impl SweepOutput {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

/// Every (method, k, seed) cell of `cfg`, run against `env`. Cells may run
/// on `cfg.jobs` threads; each has its own seed-derived randomness and
/// arena scope, so the records do not depend on the thread count.
pub fn run_sweep_with(env: &SweepEnv, cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let cells: Vec<(Method, usize, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| {
            cfg.support_counts
                .iter()
                .flat_map(move |&k| cfg.seeds.iter().map(move |&s| (m, k, s)))
        })
        .collect();
    let slots: Mutex<Vec<Option<BenchRecord>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(m, k, s)) = cells.get(i) else { break };
        log::info!("cell {}/{}: {} k={k} seed={s}", i + 1, cells.len(), m.as_str());
        let rec = run_cell(env, cfg, m, k, s);
        slots.lock().expect("no worker panicked")[i] = Some(rec);
    };
    if cfg.jobs == 1 {
        work();
    } else {
        std::thread::scope(|sc| {
            for _ in 0..cfg.jobs.min(cells.len()) {
                sc.spawn(work);
            }
        });
    }
    let records: Vec<BenchRecord> = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();
    let summary = summarize(&records);
    Ok(SweepOutput { records, summary })
}

/// Resolves the config's data and models, then runs the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    run_sweep_with(&SweepEnv::resolve(cfg)?, cfg)
}

/// Where the summary JSON of a sweep with CSV at `csv` goes.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}
