//! Experiment driver for progressive GNN-to-MLP distillation.
//!
//! Commands: `synth`, `train-teacher`, `distill`, `infer`, `sweep`. Settings
//! resolve as built-in defaults, then the `--config` JSON file, then flags.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod dataset;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Classify, Outcome};
use crate::config::{ExperimentConfig, Precision};

#[derive(Debug, Parser)]
#[command(
    name = "gnn2mlp",
    version,
    about = "Distill a graph convolutional teacher into a cascade of MLP students"
)]
pub struct Cli {
    /// JSON file with `dataset`, `teacher`, `cascade`, `policy` and `run` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for every artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Kernel threads. Results agree with single-threaded runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic-block-model dataset.
    Synth(SynthArgs),
    /// Train the graph convolutional teacher and export soft labels.
    TrainTeacher(TeacherArgs),
    /// Distill the teacher into a cascade of MLP students.
    Distill(DistillArgs),
    /// Run confidence-gated anytime inference.
    Infer(InferArgs),
    /// Accuracy versus cumulative inference cost for k = 1..K.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// L1-normalize feature rows.
    #[arg(long)]
    pub row_normalize: bool,
}

#[derive(Debug, Args)]
pub struct TeacherArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory holding the teacher checkpoint and soft labels (default: --out).
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long)]
    pub students: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda_init: Option<f64>,
    /// `formula` or `inverted`.
    #[arg(long)]
    pub lambda_sign: Option<String>,
}

/// Confidence gate value; `off` disables it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub Option<f64>);

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    if s == "off" || s == "none" {
        return Ok(Threshold(None));
    }
    s.parse::<f64>()
        .map(|v| Threshold(Some(v)))
        .map_err(|e| format!("expected a number or `off`: {e}"))
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory holding the cascade checkpoint (default: --out).
    #[arg(long)]
    pub cascade: Option<PathBuf>,
    /// Feature CSV to classify (default: the dataset's features).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Confidence gate in [0, 1], or `off`.
    #[arg(long, value_parser = parse_threshold)]
    pub conf_threshold: Option<Threshold>,
    #[arg(long)]
    pub max_students: Option<usize>,
    #[arg(long)]
    pub budget_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Cascade directories, one block of rows each (default: --out).
    #[arg(long)]
    pub cascade: Vec<PathBuf>,
    /// Timed repetitions per student.
    #[arg(long)]
    pub repeats: Option<usize>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Cli {
    /// Resolve defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        set!(cfg.run.seed, self.seed);
        set!(cfg.run.out, self.out.clone());
        set!(cfg.run.threads, self.threads);
        set!(cfg.run.precision, self.precision);
        let data = |cfg: &mut ExperimentConfig, d: &DataArgs| {
            if let Some(p) = &d.data {
                cfg.dataset.path = Some(p.clone());
            }
            if d.row_normalize {
                cfg.dataset.row_normalize = true;
            }
        };
        match &self.command {
            Command::Synth(a) => {
                let s = &mut cfg.dataset.synth;
                set!(s.nodes, a.nodes);
                set!(s.classes, a.classes);
                set!(s.feat_dim, a.feat_dim);
                set!(s.p_in, a.p_in);
                set!(s.p_out, a.p_out);
                set!(s.noise, a.noise);
            }
            Command::TrainTeacher(a) => {
                data(&mut cfg, &a.data);
                let t = &mut cfg.teacher;
                set!(t.hidden_dim, a.hidden_dim);
                set!(t.depth, a.depth);
                set!(t.lr, a.lr);
                set!(t.weight_decay, a.weight_decay);
                set!(t.dropout, a.dropout);
                set!(t.max_epochs, a.max_epochs);
                set!(t.patience, a.patience);
            }
            Command::Distill(a) => {
                data(&mut cfg, &a.data);
                let c = &mut cfg.cascade;
                set!(c.students, a.students);
                set!(c.hidden_dim, a.hidden_dim);
                set!(c.layers, a.layers);
                set!(c.lr, a.lr);
                set!(c.weight_decay, a.weight_decay);
                set!(c.dropout, a.dropout);
                set!(c.max_epochs, a.max_epochs);
                set!(c.patience, a.patience);
                set!(c.alpha, a.alpha);
                set!(c.beta, a.beta);
                set!(c.gamma, a.gamma);
                set!(c.tau, a.tau);
                set!(c.sigma, a.sigma);
                set!(c.lambda_init, a.lambda_init);
                set!(c.lambda_sign, a.lambda_sign.clone());
            }
            Command::Infer(a) => {
                data(&mut cfg, &a.data);
                set!(cfg.policy.conf_threshold, a.conf_threshold.map(|t| t.0));
                if a.max_students.is_some() {
                    cfg.policy.max_students = a.max_students;
                }
                if a.budget_ms.is_some() {
                    cfg.policy.budget_ms = a.budget_ms;
                }
            }
            Command::Sweep(a) => {
                data(&mut cfg, &a.data);
                set!(cfg.run.repeats, a.repeats);
            }
        }
        Ok(cfg)
    }
}

/// Size the global kernel pool. Only the first call in a process takes effect.
pub fn configure_threads(n: usize) -> anyhow::Result<()> {
    if n == 0 {
        anyhow::bail!("--threads must be at least 1");
    }
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

macro_rules! with_precision {
    ($p:expr, $f:ident($($arg:expr),*)) => {
        match $p {
            Precision::F32 => commands::$f::<f32>($($arg),*),
            Precision::F64 => commands::$f::<f64>($($arg),*),
        }
    };
}

pub fn execute(cli: &Cli) -> Outcome {
    let cfg = cli.resolve().usage()?;
    configure_threads(cfg.run.threads).usage()?;
    let p = cfg.run.precision;
    let out = cfg.run.out.clone();
    match &cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::TrainTeacher(_) => with_precision!(p, train_teacher_cmd(&cfg)),
        Command::Distill(a) => {
            let teacher = a.teacher.clone().unwrap_or(out);
            with_precision!(p, distill_cmd(&cfg, &teacher))
        }
        Command::Infer(a) => {
            let dir = a.cascade.clone().unwrap_or(out);
            with_precision!(p, infer_cmd(&cfg, &dir, a.features.as_deref()))
        }
        Command::Sweep(a) => {
            let dirs = if a.cascade.is_empty() {
                vec![out]
            } else {
                a.cascade.clone()
            };
            with_precision!(p, sweep_cmd(&cfg, &dirs))
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
