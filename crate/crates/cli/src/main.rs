//! `sketchmor` command-line driver.
//!
//! Every command works inside a workspace directory (`--dir`):
//!
//! ```text
//! DIR/system/          affine system (Matrix Market terms + system.json)
//! DIR/model/           basis.bin, sketch/, greedy_log.csv, model.json
//! DIR/solutions.json   online solutions
//! DIR/certificates.json
//! DIR/qoi.csv
//! DIR/report/          summary.json, delta.csv, greedy.csv, plot_data.json
//! ```

mod commands;
mod failure;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sketchmor::bench::Family;
use sketchmor::embeddings::EmbeddingKind;

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "sketchmor", version, about = "Sketched minimal-residual reduced order models")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic benchmark system into DIR/system.
    Gen(GenArgs),
    /// Re-sketch the model basis with a new embedding.
    Sketch(SketchArgs),
    /// Sketched greedy reduced basis.
    GreedyRb(GreedyArgs),
    /// Greedy dictionary for sparse online approximation.
    GreedyDict(DictArgs),
    /// Online solves from the stored sketch.
    Solve(SolveArgs),
    /// A posteriori certificates with an independent embedding.
    Certify(CertifyArgs),
    /// Two-phase quantity-of-interest estimates.
    Qoi(QoiArgs),
    /// Summaries and plot data from the workspace.
    Report(ReportArgs),
    /// Execute a JSON pipeline.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    CoerciveDiffusion,
    NoncoerciveShifted,
    SuperpositionTransport,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::CoerciveDiffusion => Family::CoerciveDiffusion,
            FamilyArg::NoncoerciveShifted => Family::NoncoerciveShifted,
            FamilyArg::SuperpositionTransport => Family::SuperpositionTransport,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Gaussian,
    Srht,
    RowSampling,
}

impl From<KindArg> for EmbeddingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Gaussian => EmbeddingKind::Gaussian,
            KindArg::Srht => EmbeddingKind::Srht,
            KindArg::RowSampling => EmbeddingKind::RowSampling,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DirArg {
    /// Workspace directory.
    #[arg(long, default_value = ".")]
    pub dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub dir: DirArg,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameter dimension (coercive family).
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of operator terms (coercive family).
    #[arg(long)]
    pub m_a: Option<usize>,
    /// Conditioning knob.
    #[arg(long)]
    pub knob: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct EmbeddingArgs {
    #[arg(long, value_enum, default_value = "srht")]
    pub embedding: KindArg,
    /// Sketch size.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct GammaArgs {
    /// Second-level sketch size; omit to work at the Θ level.
    #[arg(long)]
    pub k_prime: Option<usize>,
    #[arg(long, value_enum, default_value = "srht")]
    pub gamma_embedding: KindArg,
    #[arg(long, default_value_t = 1)]
    pub gamma_seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Training set size.
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub train_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Lazy (relaxed) argmax.
    #[arg(long)]
    pub relaxed: bool,
}

#[derive(Args, Debug)]
pub struct SketchArgs {
    #[command(flatten)]
    pub dir: DirArg,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
}

#[derive(Args, Debug)]
pub struct GreedyArgs {
    #[command(flatten)]
    pub dir: DirArg,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
    #[command(flatten)]
    pub gamma: GammaArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 20)]
    pub r_max: usize,
}

#[derive(Args, Debug)]
pub struct DictArgs {
    #[command(flatten)]
    pub dir: DirArg,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
    #[command(flatten)]
    pub gamma: GammaArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Dictionary size.
    #[arg(long, default_value_t = 50)]
    pub k_max: usize,
    /// Sparsity of the online approximation.
    #[arg(long, default_value_t = 5)]
    pub r: usize,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub dir: DirArg,
    /// JSON file with an array of parameter vectors.
    #[arg(long, conflicts_with = "count")]
    pub params: Option<PathBuf>,
    /// Number of parameters sampled from the box.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub gamma: GammaArgs,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub dir: DirArg,
    /// Size of Θ* (default: k).
    #[arg(long)]
    pub k_star: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed_star: u64,
    #[arg(long, default_value_t = 0.05)]
    pub eps_star: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Fail (exit 4) when ω̄ exceeds this value.
    #[arg(long, default_value_t = 1.0)]
    pub max_omega: f64,
}

#[derive(Args, Debug)]
pub struct QoiArgs {
    #[command(flatten)]
    pub dir: DirArg,
    /// Matrix Market file with W_p; otherwise sketched POD of the solutions.
    #[arg(long)]
    pub w: Option<PathBuf>,
    /// Dimension of W_p for the POD option.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Size of the embedding used for the bound.
    #[arg(long)]
    pub k_star: Option<usize>,
    #[arg(long, default_value_t = 11)]
    pub seed_star: u64,
    #[arg(long, default_value_t = 0.05)]
    pub eps_star: f64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub dir: DirArg,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Workspace directory; overrides `dir` in the config.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Sketch(a) => commands::sketch(&a),
        Command::GreedyRb(a) => commands::greedy_rb(&a),
        Command::GreedyDict(a) => commands::greedy_dict(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::Qoi(a) => commands::qoi(&a),
        Command::Report(a) => commands::report(&a),
        Command::Run(a) => run::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::CONFIG } else { 0 });
        }
    };
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(failure::CONFIG);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
