use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::args::{Cli, Command, DistillFlags, ModelArgs, TeacherStudentArgs, TrainFlags};
use super::manifest::RunManifest;
use super::Outcome;
use crate::adapters::{count_trainable, AdapterKind};
use crate::bench::{
    accuracy_protocol, hp_to_csv, hyperparam_sweep, run_sweep_with, summary_path, write_csv, write_summary,
    write_text, DataRef, HpGrid, Method, ModelRef, SweepConfig, SweepEnv, Timing,
};
use crate::data::{audit, generate_synthetic, SyntheticConfig, SyntheticDataset};
use crate::error::{Error, Result};
use crate::methods::{
    alpha_sweep, cd_train, format_pretrain, icl_evaluate, pbft_train, standard_task, teacher_train_accuracy,
    write_log, DistillConfig, EvalSets, KlDirection, KlSupport, PretrainConfig, TrainConfig,
};
use crate::model::{load_checkpoint, save_checkpoint, MiniTransformer};
use crate::rng::derive_seed;

/// Default dataset directory when `--data` is not given.
pub const DATA_DIR_ENV: &str = "DFORGE_DATA_DIR";

fn given(m: &ArgMatches, id: &str) -> bool {
    matches!(m.try_get_raw(id), Ok(Some(_))) && m.value_source(id) == Some(ValueSource::CommandLine)
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
}

fn data_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| Error::config("data", format!("no dataset: pass --data or set {DATA_DIR_ENV}")))
}

fn load_dataset(dir: &Path) -> Result<(SyntheticDataset, crate::data::Task)> {
    let ds = SyntheticDataset::load(dir)?;
    let task = standard_task(ds.all_examples())?;
    Ok((ds, task))
}

macro_rules! set {
    ($m:expr, $id:literal, $dst:expr, $val:expr) => {
        if given($m, $id) {
            $dst = $val;
        }
    };
}

fn apply_model(m: &ArgMatches, a: &ModelArgs, dst: &mut ModelRef) {
    if let Some(p) = &a.model {
        dst.checkpoint = Some(p.clone());
    }
    set!(m, "preset", dst.preset, a.preset.clone());
}

fn apply_models(m: &ArgMatches, a: &TeacherStudentArgs, teacher: &mut ModelRef, student: &mut ModelRef) {
    if let Some(p) = &a.teacher {
        teacher.checkpoint = Some(p.clone());
    }
    if let Some(p) = &a.student {
        student.checkpoint = Some(p.clone());
    }
    set!(m, "teacher_preset", teacher.preset, a.teacher_preset.clone());
    set!(m, "student_preset", student.preset, a.student_preset.clone());
}

fn apply_train(m: &ArgMatches, a: &TrainFlags, dst: &mut TrainConfig) -> Result<()> {
    set!(m, "lr", dst.learning_rate, a.lr);
    set!(m, "epochs", dst.epochs, a.epochs);
    set!(m, "batch_size", dst.batch_size, a.batch_size);
    set!(m, "train_set_size", dst.train_set_size, a.train_set_size);
    if given(m, "adapter") {
        dst.adapter = AdapterKind::parse(&a.adapter)?;
    }
    if let AdapterKind::Lora(l) = &mut dst.adapter {
        set!(m, "lora_rank", l.rank, a.lora_rank);
        set!(m, "lora_alpha", l.alpha, a.lora_alpha);
    }
    Ok(())
}

fn apply_distill(m: &ArgMatches, a: &DistillFlags, dst: &mut DistillConfig) -> Result<()> {
    set!(m, "alpha", dst.alpha, a.alpha);
    set!(m, "temperature", dst.temperature, a.temperature);
    set!(m, "k", dst.k, a.k);
    if given(m, "kl_support") {
        dst.kl_support = KlSupport::parse(&a.kl_support)?;
    }
    if given(m, "kl_direction") {
        dst.kl_direction = KlDirection::parse(&a.kl_direction)?;
    }
    Ok(())
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataCmd {
    pub seed: u64,
    pub synthetic: SyntheticConfig,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainCmd {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub model: ModelRef,
    pub pretrain: PretrainConfig,
    pub out: Option<PathBuf>,
}

impl Default for PretrainCmd {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            model: ModelRef::preset("student-xs"),
            pretrain: PretrainConfig::default(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmd {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub model: ModelRef,
    pub k: usize,
    pub train: TrainConfig,
    pub n_inferences: usize,
    pub out: Option<PathBuf>,
}

impl Default for TrainCmd {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            model: ModelRef::preset("student-xs"),
            k: 4,
            train: TrainConfig::default(),
            n_inferences: 100,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillCmd {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub teacher: ModelRef,
    pub student: ModelRef,
    pub distill: DistillConfig,
    pub n_inferences: usize,
    pub out: Option<PathBuf>,
}

impl Default for DistillCmd {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            teacher: ModelRef::preset("teacher-s"),
            student: ModelRef::preset("student-xs"),
            distill: DistillConfig::default(),
            n_inferences: 100,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCmd {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub model: ModelRef,
    /// `baseline` (query only) or `icl`.
    pub method: String,
    pub k: usize,
    pub n_inferences: usize,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

impl Default for EvalCmd {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            model: ModelRef::preset("student-xs"),
            method: "icl".into(),
            k: 4,
            n_inferences: 100,
            seeds: vec![0, 1, 2, 3, 4],
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaCmd {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub teacher: ModelRef,
    pub student: ModelRef,
    pub distill: DistillConfig,
    pub alphas: Vec<f64>,
    pub n_inferences: usize,
    pub out: Option<PathBuf>,
}

impl Default for AlphaCmd {
    fn default() -> Self {
        let d = DistillCmd::default();
        Self {
            seed: 0,
            data: None,
            teacher: d.teacher,
            student: d.student,
            distill: d.distill,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n_inferences: 100,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpCmd {
    pub seed: u64,
    /// Shared settings; its method and support-count lists are unused.
    pub base: SweepConfig,
    pub grid: HpGrid,
    pub out: Option<PathBuf>,
}

impl Default for HpCmd {
    fn default() -> Self {
        Self {
            seed: 0,
            base: SweepConfig::default(),
            grid: HpGrid {
                method: Method::Cd,
                k: 8,
                learning_rates: vec![1e-4, 1e-5, 1e-6, 1e-7],
                epochs: vec![2, 10, 40, 100],
            },
            out: None,
        }
    }
}

/// Resolves configs and runs the chosen subcommand.
pub(super) fn run(cli: &Cli, top: &ArgMatches, m: &ArgMatches) -> Result<Outcome> {
    let cfg_path = cli.config.as_deref();
    let seed_given = given(top, "seed") || given(m, "seed");
    macro_rules! seed {
        ($cfg:expr) => {
            if seed_given {
                $cfg.seed = cli.seed;
            }
        };
    }
    match &cli.command {
        Command::GenData(a) => {
            let mut c: GenDataCmd = load_config(cfg_path)?;
            seed!(c);
            set!(m, "pool_size", c.synthetic.pool_size, a.pool_size);
            set!(m, "validation_size", c.synthetic.validation_size, a.validation_size);
            set!(m, "symbols_per_domain", c.synthetic.symbols_per_domain, a.symbols_per_domain);
            if let Some(o) = &a.out {
                c.out = Some(o.clone());
            }
            c.synthetic.seed = c.seed;
            c.synthetic.validate()?;
            gen_data(cli, c)
        }
        Command::Pretrain(a) => {
            let mut c: PretrainCmd = load_config(cfg_path)?;
            seed!(c);
            c.data = a.data.data.clone().or(c.data);
            apply_model(m, &a.model, &mut c.model);
            set!(m, "steps", c.pretrain.steps, a.steps);
            set!(m, "lr", c.pretrain.learning_rate, a.lr);
            set!(m, "batch_size", c.pretrain.batch_size, a.batch_size);
            set!(m, "max_supports", c.pretrain.max_supports, a.max_supports);
            set!(m, "eval_every", c.pretrain.eval_every, a.eval_every);
            c.out = a.out.clone().or(c.out);
            c.pretrain.seed = c.seed;
            c.model.init_seed = derive_seed(c.seed, "model-init");
            c.pretrain.validate()?;
            pretrain(cli, c)
        }
        Command::Train(a) => {
            let mut c: TrainCmd = load_config(cfg_path)?;
            seed!(c);
            c.data = a.data.data.clone().or(c.data);
            apply_model(m, &a.model, &mut c.model);
            set!(m, "k", c.k, a.k);
            apply_train(m, &a.train, &mut c.train)?;
            set!(m, "n_inferences", c.n_inferences, a.n_inferences);
            c.out = a.out.clone().or(c.out);
            c.train.seed = c.seed;
            c.model.init_seed = derive_seed(c.seed, "model-init");
            c.train.validate()?;
            train(cli, c)
        }
        Command::Distill(a) => {
            let mut c: DistillCmd = load_config(cfg_path)?;
            seed!(c);
            c.data = a.data.data.clone().or(c.data);
            apply_models(m, &a.models, &mut c.teacher, &mut c.student);
            apply_distill(m, &a.distill, &mut c.distill)?;
            apply_train(m, &a.train, &mut c.distill.train)?;
            set!(m, "n_inferences", c.n_inferences, a.n_inferences);
            c.out = a.out.clone().or(c.out);
            c.distill.train.seed = c.seed;
            c.teacher.init_seed = derive_seed(c.seed, "teacher-init");
            c.student.init_seed = derive_seed(c.seed, "student-init");
            c.distill.validate()?;
            distill(cli, c)
        }
        Command::Eval(a) => {
            let mut c: EvalCmd = load_config(cfg_path)?;
            seed!(c);
            set!(m, "method", c.method, a.method.clone());
            c.data = a.data.data.clone().or(c.data);
            apply_model(m, &a.model, &mut c.model);
            set!(m, "k", c.k, a.k);
            set!(m, "n_inferences", c.n_inferences, a.n_inferences);
            set!(m, "seeds", c.seeds, a.seeds.clone());
            c.out = a.out.clone().or(c.out);
            c.model.init_seed = derive_seed(c.seed, "model-init");
            if !matches!(c.method.as_str(), "baseline" | "icl") {
                return Err(Error::config("method", format!("`{}` is not baseline or icl", c.method)));
            }
            if c.method == "baseline" {
                c.k = 0;
            }
            eval(cli, c)
        }
        Command::Sweep(a) => {
            let mut c: SweepConfig = load_config(cfg_path)?;
            let raw_output = c.output.clone();
            let output_in_file = cfg_path.is_some() && file_has_key(cfg_path.unwrap(), "output")?;
            set!(m, "methods", c.methods, a.sweep.methods.clone());
            set!(m, "support_counts", c.support_counts, a.sweep.support_counts.clone());
            set!(m, "seeds", c.seeds, a.sweep.seeds.clone());
            set!(m, "n_inferences", c.n_inferences, a.sweep.n_inferences);
            set!(m, "alpha", c.alpha, a.alpha);
            if a.sweep.no_timing {
                c.timing = Timing::Disabled;
            }
            set!(m, "jobs", c.jobs, cli.jobs);
            apply_models(m, &a.models, &mut c.teacher, &mut c.student);
            apply_train(m, &a.train, &mut c.train)?;
            if let Some(d) = a.data.data.clone() {
                c.data = DataRef::Dir(d);
            } else if cfg_path.is_none_or(|p| !file_has_key(p, "data").unwrap_or(false)) {
                if let Some(d) = std::env::var_os(DATA_DIR_ENV) {
                    c.data = DataRef::Dir(PathBuf::from(d));
                }
            }
            let explicit_out = a.sweep.output.clone().or(output_in_file.then_some(raw_output));
            let seed = if seed_given { cli.seed } else { 0 };
            c.teacher.init_seed = derive_seed(seed, "teacher-init");
            c.student.init_seed = derive_seed(seed, "student-init");
            c.validate()?;
            sweep(cli, c, seed, explicit_out)
        }
        Command::AlphaSweep(a) => {
            let mut c: AlphaCmd = load_config(cfg_path)?;
            seed!(c);
            c.data = a.data.data.clone().or(c.data);
            apply_models(m, &a.models, &mut c.teacher, &mut c.student);
            set!(m, "alphas", c.alphas, a.alphas.clone());
            apply_distill(m, &a.distill, &mut c.distill)?;
            apply_train(m, &a.train, &mut c.distill.train)?;
            set!(m, "n_inferences", c.n_inferences, a.n_inferences);
            c.out = a.out.clone().or(c.out);
            c.distill.train.seed = c.seed;
            c.teacher.init_seed = derive_seed(c.seed, "teacher-init");
            c.student.init_seed = derive_seed(c.seed, "student-init");
            c.distill.validate()?;
            for &alpha in &c.alphas {
                DistillConfig { alpha, ..c.distill.clone() }.validate()?;
            }
            alpha_cmd(cli, c)
        }
        Command::HpSweep(a) => {
            let mut c: HpCmd = load_config(cfg_path)?;
            seed!(c);
            set!(m, "method", c.grid.method, a.method);
            set!(m, "k", c.grid.k, a.k);
            set!(m, "lrs", c.grid.learning_rates, a.lrs.clone());
            set!(m, "epochs_grid", c.grid.epochs, a.epochs_grid.clone());
            set!(m, "seeds", c.base.seeds, a.seeds.clone());
            set!(m, "n_inferences", c.base.n_inferences, a.n_inferences);
            set!(m, "alpha", c.base.alpha, a.alpha);
            set!(m, "train_set_size", c.base.train.train_set_size, a.train_set_size);
            apply_models(m, &a.models, &mut c.base.teacher, &mut c.base.student);
            if let Some(d) = a.data.data.clone() {
                c.base.data = DataRef::Dir(d);
            } else if let Some(d) = std::env::var_os(DATA_DIR_ENV) {
                c.base.data = DataRef::Dir(PathBuf::from(d));
            }
            c.out = a.out.clone().or(c.out);
            c.base.teacher.init_seed = derive_seed(c.seed, "teacher-init");
            c.base.student.init_seed = derive_seed(c.seed, "student-init");
            c.grid.validate()?;
            c.base.validate()?;
            hp_cmd(cli, c)
        }
        Command::InspectCheckpoint(a) => {
            let model = load_checkpoint(&a.checkpoint)?;
            print_json(&inspect(&model))?;
            Ok(Outcome::Ok)
        }
    }
}

fn file_has_key(path: &Path, key: &str) -> Result<bool> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    Ok(v.get(key).is_some())
}

/// Runs `body` with a manifest that records the outcome.
fn with_manifest<C: Serialize>(
    cli: &Cli,
    name: &str,
    cfg: &C,
    seed: u64,
    body: impl FnOnce(&mut RunManifest) -> Result<Outcome>,
) -> Result<Outcome> {
    let mut man = RunManifest::start(name, cfg, seed, &cli.runs_dir)?;
    log::info!("run directory {}", man.run_dir.display());
    let out = body(&mut man);
    let status = match &out {
        Ok(Outcome::Ok) => "ok".to_string(),
        Ok(Outcome::Partial(msg)) => format!("partial: {msg}"),
        Err(e) => format!("failed: {e}"),
    };
    man.finish(&status)?;
    out
}

fn gen_data(cli: &Cli, c: GenDataCmd) -> Result<Outcome> {
    with_manifest(cli, "gen-data", &c, c.seed, |man| {
        let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        let dir = man.output(c.out.as_deref().or(env_dir.as_deref()), "data");
        let ds = generate_synthetic(&c.synthetic)?;
        audit(&ds).map_err(Error::State)?;
        ds.save(&dir)?;
        print_json(&json!({
            "out": dir,
            "train_pool": ds.train_pool.len(),
            "validation_matched": ds.validation_matched.len(),
            "validation_mismatched": ds.validation_mismatched.len(),
        }))?;
        Ok(Outcome::Ok)
    })
}

fn out_dir(man: &mut RunManifest, out: Option<&Path>) -> PathBuf {
    match out {
        Some(d) => {
            man.artifacts.push(d.to_path_buf());
            d.to_path_buf()
        }
        None => man.run_dir.clone(),
    }
}

fn pretrain(cli: &Cli, c: PretrainCmd) -> Result<Outcome> {
    let dir = data_dir(c.data.as_deref())?;
    with_manifest(cli, "pretrain", &c, c.seed, |man| {
        let (ds, task) = load_dataset(&dir)?;
        let mut model = c.model.resolve(&task)?;
        let rep = format_pretrain(&mut model, &task, &ds.train_pool, &ds.validation_matched, &c.pretrain)?;
        let out = out_dir(man, c.out.as_deref());
        let ckpt = out.join("model.dfck");
        save_checkpoint(&model, &ckpt)?;
        let mut log = String::new();
        for l in &rep.log {
            log.push_str(&serde_json::to_string(l)?);
            log.push('\n');
        }
        write_text(&out.join("pretrain_log.jsonl"), &log)?;
        man.artifacts.push(ckpt.clone());
        print_json(&json!({ "checkpoint": ckpt, "final": rep.log.last(), "wall_ms": rep.wall_ms }))?;
        Ok(Outcome::Ok)
    })
}

fn both_splits(
    model: &MiniTransformer,
    task: &crate::data::Task,
    ds: &SyntheticDataset,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let a = icl_evaluate(model, task, &ds.train_pool, &ds.validation_matched, k, n, seed)?;
    let b = icl_evaluate(model, task, &ds.train_pool, &ds.validation_mismatched, k, n, seed)?;
    Ok((a.accuracy, b.accuracy))
}

fn train(cli: &Cli, c: TrainCmd) -> Result<Outcome> {
    let dir = data_dir(c.data.as_deref())?;
    with_manifest(cli, "train", &c, c.seed, |man| {
        let (ds, task) = load_dataset(&dir)?;
        let mut model = c.model.resolve(&task)?;
        let rep = pbft_train(&mut model, &task, &ds.train_pool, c.k, &c.train, None)?;
        let (in_acc, out_acc) = both_splits(&model, &task, &ds, c.k, c.n_inferences, c.seed)?;
        let out = out_dir(man, c.out.as_deref());
        let ckpt = out.join("model.dfck");
        save_checkpoint(&model, &ckpt)?;
        write_log(&out.join("train_log.jsonl"), &rep.report.steps)?;
        let result = json!({
            "checkpoint": ckpt,
            "in_acc": in_acc,
            "out_acc": out_acc,
            "epoch_loss": rep.report.epoch_loss,
            "peak_bytes": rep.report.peak_bytes,
            "wall_ms": rep.report.wall_ms,
        });
        write_text(&out.join("result.json"), &(serde_json::to_string_pretty(&result)? + "\n"))?;
        man.artifacts.push(ckpt);
        print_json(&result)?;
        Ok(Outcome::Ok)
    })
}

fn distill(cli: &Cli, c: DistillCmd) -> Result<Outcome> {
    let dir = data_dir(c.data.as_deref())?;
    with_manifest(cli, "distill", &c, c.seed, |man| {
        let (ds, task) = load_dataset(&dir)?;
        let teacher = c.teacher.resolve(&task)?;
        let mut student = c.student.resolve(&task)?;
        let d = &c.distill;
        let teacher_acc =
            teacher_train_accuracy(&teacher, &task, &ds.train_pool, d.k, d.train.train_set_size, d.train.seed)?;
        let rep = cd_train(&teacher, &mut student, &task, &ds.train_pool, d, None)?;
        let (in_acc, out_acc) = both_splits(&student, &task, &ds, 0, c.n_inferences, c.seed)?;
        let out = out_dir(man, c.out.as_deref());
        let ckpt = out.join("student.dfck");
        save_checkpoint(&student, &ckpt)?;
        write_log(&out.join("train_log.jsonl"), &rep.report.steps)?;
        let result = json!({
            "checkpoint": ckpt,
            "teacher_train_acc": teacher_acc,
            "in_acc": in_acc,
            "out_acc": out_acc,
            "student_peak_bytes": rep.student_peak_bytes,
            "teacher_peak_bytes": rep.teacher_peak_bytes,
            "total_peak_bytes": rep.total_peak_bytes,
            "wall_ms": rep.report.wall_ms,
        });
        write_text(&out.join("result.json"), &(serde_json::to_string_pretty(&result)? + "\n"))?;
        man.artifacts.push(ckpt);
        print_json(&result)?;
        Ok(Outcome::Ok)
    })
}

fn eval(cli: &Cli, c: EvalCmd) -> Result<Outcome> {
    let dir = data_dir(c.data.as_deref())?;
    with_manifest(cli, "eval", &c, c.seed, |man| {
        let (ds, task) = load_dataset(&dir)?;
        let model = c.model.resolve(&task)?;
        let matched =
            accuracy_protocol(&model, &task, &ds.train_pool, &ds.validation_matched, c.k, c.n_inferences, &c.seeds)?;
        let mismatched = accuracy_protocol(
            &model,
            &task,
            &ds.train_pool,
            &ds.validation_mismatched,
            c.k,
            c.n_inferences,
            &c.seeds,
        )?;
        let failed = matched.per_seed.iter().chain(&mismatched.per_seed).filter(|s| s.accuracy.is_none()).count();
        let report = json!({ "method": c.method, "k": c.k, "matched": matched, "mismatched": mismatched });
        let path = man.output(c.out.as_deref(), "eval.json");
        write_text(&path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        print_json(&report)?;
        Ok(if failed == 0 {
            Outcome::Ok
        } else {
            Outcome::Partial(format!("{failed} seed evaluations failed"))
        })
    })
}

fn sweep(cli: &Cli, c: SweepConfig, seed: u64, explicit_out: Option<PathBuf>) -> Result<Outcome> {
    with_manifest(cli, "sweep", &c, seed, |man| {
        let csv = man.output(explicit_out.as_deref(), "sweep.csv");
        let env = SweepEnv::resolve(&c)?;
        let out = run_sweep_with(&env, &c)?;
        write_csv(&csv, &out.records)?;
        let summary = summary_path(&csv);
        write_summary(&summary, &out.summary)?;
        man.artifacts.push(summary);
        println!("{} rows -> {}", out.records.len(), csv.display());
        Ok(match out.failed() {
            0 => Outcome::Ok,
            n => Outcome::Partial(format!("{n} of {} cells failed", out.records.len())),
        })
    })
}

fn alpha_cmd(cli: &Cli, c: AlphaCmd) -> Result<Outcome> {
    let dir = data_dir(c.data.as_deref())?;
    with_manifest(cli, "alpha-sweep", &c, c.seed, |man| {
        let (ds, task) = load_dataset(&dir)?;
        let teacher = c.teacher.resolve(&task)?;
        let student = c.student.resolve(&task)?;
        let eval = EvalSets {
            matched: &ds.validation_matched,
            mismatched: &ds.validation_mismatched,
            n_inferences: c.n_inferences,
        };
        let res = alpha_sweep(&teacher, &student, &task, &ds.train_pool, &c.distill, &c.alphas, &eval)?;
        let mut text = String::from("alpha,in_acc,out_acc,final_l_total\n");
        for r in &res.rows {
            text.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.alpha, r.in_acc, r.out_acc, r.final_l_total));
        }
        let path = man.output(c.out.as_deref(), "alpha_sweep.csv");
        write_text(&path, &text)?;
        print_json(&res)?;
        Ok(Outcome::Ok)
    })
}

fn hp_cmd(cli: &Cli, c: HpCmd) -> Result<Outcome> {
    with_manifest(cli, "hp-sweep", &c, c.seed, |man| {
        let env = SweepEnv::resolve(&c.base)?;
        let res = hyperparam_sweep(&env, &c.base, &c.grid)?;
        let path = man.output(c.out.as_deref(), "hp_sweep.csv");
        write_text(&path, &hp_to_csv(&res)?)?;
        print_json(&json!({ "table": path, "best": res.best_row() }))?;
        let failed = res.rows.iter().filter(|r| r.out_acc.is_none()).count();
        Ok(match failed {
            0 => Outcome::Ok,
            n => Outcome::Partial(format!("{n} grid cells failed")),
        })
    })
}

fn inspect(m: &MiniTransformer) -> serde_json::Value {
    let tensors: Vec<_> = m
        .params()
        .iter()
        .map(|(n, t)| json!({ "name": n, "shape": t.shape(), "trainable": t.requires_grad() }))
        .collect();
    json!({
        "config": m.config(),
        "lora": m.lora(),
        "trainable": count_trainable(m),
        "digest": format!("{:016x}", m.params().digest()),
        "tensors": tensors,
    })
}
