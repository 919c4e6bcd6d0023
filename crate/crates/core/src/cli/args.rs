use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::adapters::LoraConfig;
use crate::bench::{Method, SweepConfig};
use crate::data::SyntheticConfig;
use crate::methods::{DistillConfig, PretrainConfig, TrainConfig};

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn d_train() -> TrainConfig {
    TrainConfig::default()
}

fn d_distill() -> DistillConfig {
    DistillConfig::default()
}

fn d_pre() -> PretrainConfig {
    PretrainConfig::default()
}

fn d_syn() -> SyntheticConfig {
    SyntheticConfig::default()
}

fn d_sweep() -> SweepConfig {
    SweepConfig::default()
}

#[derive(Debug, Parser)]
#[command(name = "dforge", version, about = "Few-shot adaptation lab: ICL, pattern-based fine-tuning and context distillation on tiny transformers")]
pub struct Cli {
    /// JSON config file; flags given on the command line override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Global seed; component seeds are derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Root under which each run gets its own directory.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,

    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic NLI dataset.
    GenData(GenDataArgs),
    /// Format-pretrain a model on rendered prompts.
    Pretrain(PretrainArgs),
    /// Pattern-based fine-tuning.
    Train(TrainArgs),
    /// Context distillation from a teacher into a student.
    Distill(DistillArgs),
    /// Baseline or in-context evaluation over several seeds.
    Eval(EvalArgs),
    /// Method × support count × seed sweep.
    Sweep(SweepArgs),
    /// One distillation run per alpha.
    AlphaSweep(AlphaSweepArgs),
    /// Learning-rate × epoch grid search.
    HpSweep(HpSweepArgs),
    /// Print a checkpoint's config and parameter summary.
    InspectCheckpoint(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory written by gen-data [default: $DFORGE_DATA_DIR].
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory [default: $DFORGE_DATA_DIR, else <run dir>/data].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = d_syn().pool_size)]
    pub pool_size: usize,
    #[arg(long, default_value_t = d_syn().validation_size)]
    pub validation_size: usize,
    #[arg(long, default_value_t = d_syn().symbols_per_domain)]
    pub symbols_per_domain: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint to start from (overrides --preset).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Architecture preset for a fresh model.
    #[arg(long, default_value = "student-xs")]
    pub preset: String,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = d_train().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = d_train().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = d_train().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = d_train().train_set_size)]
    pub train_set_size: usize,
    /// none, lora or bitfit.
    #[arg(long, default_value = "none")]
    pub adapter: String,
    #[arg(long, default_value_t = LoraConfig::default().rank)]
    pub lora_rank: usize,
    #[arg(long, default_value_t = LoraConfig::default().alpha)]
    pub lora_alpha: f64,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = d_pre().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = d_pre().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = d_pre().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = d_pre().max_supports)]
    pub max_supports: usize,
    #[arg(long, default_value_t = d_pre().eval_every)]
    pub eval_every: usize,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training method (only pattern-based fine-tuning trains alone).
    #[arg(long, default_value = "pbft", value_parser = ["pbft"])]
    pub method: String,
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Supports per training prompt.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 100)]
    pub n_inferences: usize,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TeacherStudentArgs {
    /// Teacher checkpoint (overrides --teacher-preset).
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long, default_value = "teacher-s")]
    pub teacher_preset: String,
    /// Student checkpoint (overrides --student-preset).
    #[arg(long)]
    pub student: Option<PathBuf>,
    #[arg(long, default_value = "student-xs")]
    pub student_preset: String,
}

#[derive(Debug, Args)]
pub struct DistillFlags {
    #[arg(long, default_value_t = d_distill().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = d_distill().temperature)]
    pub temperature: f64,
    /// verbalizer_tokens or full_vocab.
    #[arg(long, default_value = "verbalizer_tokens")]
    pub kl_support: String,
    /// forward (teacher ‖ student) or reverse.
    #[arg(long, default_value = "forward")]
    pub kl_direction: String,
    /// Supports shown to the teacher.
    #[arg(long, default_value_t = d_distill().k)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub models: TeacherStudentArgs,
    #[command(flatten)]
    pub distill: DistillFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 100)]
    pub n_inferences: usize,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// baseline (query only) or icl.
    #[arg(long, default_value = "icl", value_parser = ["baseline", "icl"])]
    pub method: String,
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub n_inferences: usize,
    /// Evaluation seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,
    /// Report path [default: <run dir>/eval.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepFlags {
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_values_t = d_sweep().methods)]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_values_t = d_sweep().support_counts)]
    pub support_counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = d_sweep().seeds)]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = d_sweep().n_inferences)]
    pub n_inferences: usize,
    /// Record zero wall times so that reruns emit identical CSVs.
    #[arg(long)]
    pub no_timing: bool,
    /// CSV path [default: <run dir>/sweep.csv]; the summary JSON goes next
    /// to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub models: TeacherStudentArgs,
    #[command(flatten)]
    pub sweep: SweepFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = d_sweep().alpha)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct AlphaSweepArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub models: TeacherStudentArgs,
    /// At least three values in [0, 1].
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    pub alphas: Vec<f64>,
    #[command(flatten)]
    pub distill: DistillFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 100)]
    pub n_inferences: usize,
    /// CSV path [default: <run dir>/alpha_sweep.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HpSweepArgs {
    #[arg(long, default_value = "cd", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-5, 1e-6, 1e-7])]
    pub lrs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 10, 40, 100])]
    pub epochs_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = d_sweep().seeds)]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = d_sweep().n_inferences)]
    pub n_inferences: usize,
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub models: TeacherStudentArgs,
    #[arg(long, default_value_t = d_sweep().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = d_train().train_set_size)]
    pub train_set_size: usize,
    /// CSV path [default: <run dir>/hp_sweep.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub checkpoint: PathBuf,
}
