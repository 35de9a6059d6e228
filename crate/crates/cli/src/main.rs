//! `divdis`: divergence-based disagreement reports for classifier ensembles.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divdis_core::detect::ScoreKind;
use divdis_core::estimate::Method;
use divdis_core::transform::TransformKind;
use divdis_core::{ErrorClass, Notion};

use output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "divdis",
    version,
    about = "Divergence-based disagreement for OOD error estimation, detection and calibration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-pair, per-split disagreement for each notion
    Disagree(DisagreeArgs),
    /// Per-model, per-split error for each notion (labelled splits only)
    Error(DisagreeArgs),
    /// Agreement-line and accuracy-line fits for every OOD split
    Line(LineArgs),
    /// Unlabelled OOD error estimates (ALine-S or ALine-D)
    Estimate(EstimateArgs),
    /// OOD detection AUCs from confidence and disagreement scores
    Detect(DetectArgs),
    /// Ensemble calibration error against line quality
    Calibrate(CalibrateArgs),
    /// Write a seeded synthetic ensemble with its manifest
    Synth(SynthArgs),
    /// Plot-ready grids of disagreement and error values
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory; tables are printed to stdout when omitted
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Report formats
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    pub format: Vec<Format>,
    /// Overwrite existing output files
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Ensemble manifest (JSON)
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Notions to compute: top1, hd, jsd, kld
    #[arg(long, value_delimiter = ',', default_value = "top1,hd,jsd,kld")]
    pub notion: Vec<Notion>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Probability floor for logarithms, in (0, 1e-3)
    #[arg(long, default_value = "1e-12")]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct DisagreeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Axis transform applied before fitting: identity or probit
    #[arg(long, default_value = "identity")]
    pub transform: TransformKind,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Axis transform applied before fitting: identity or probit
    #[arg(long, default_value = "identity")]
    pub transform: TransformKind,
    /// Estimator: aline-s or aline-d
    #[arg(long, default_value = "aline-s")]
    pub method: Method,
    /// Agreement-line R² a split must exceed (every notion) to enter table1
    #[arg(long, default_value_t = 0.95)]
    pub r2_gate: f64,
    /// Weight of the per-model anchor rows in ALine-D
    #[arg(long, default_value_t = 1.0)]
    pub anchor_weight: f64,
    /// Emit the MAPE table (splits by notion) over gated splits
    #[arg(long)]
    pub table1: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Ensemble manifest (JSON)
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Score kinds: neg-msp, neg-maxlogit, pair-top1, pair-hd, pair-jsd, pair-kld
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "neg-msp,neg-maxlogit,pair-top1,pair-hd,pair-jsd,pair-kld"
    )]
    pub kinds: Vec<ScoreKind>,
    /// Average sample scores over subjects before a single AUC
    #[arg(long)]
    pub pooled: bool,
    /// Emit the AUC table (severities by score kind, in percent)
    #[arg(long)]
    pub table2: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Probability floor for logarithms, in (0, 1e-3)
    #[arg(long, default_value = "1e-12")]
    pub eps: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Axis transform applied before fitting: identity or probit
    #[arg(long, default_value = "identity")]
    pub transform: TransformKind,
    /// Equal-width confidence bins per class
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for prediction files, labels and manifest.json
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub models: usize,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Skill range LO,HI
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [2.5, 5.0])]
    pub skill: Vec<f64>,
    /// Temperature range LO,HI
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.8, 1.2])]
    pub temperature: Vec<f64>,
    /// Shift severity of the in-distribution split
    #[arg(long, default_value_t = 0.0)]
    pub id_noise: f64,
    /// Shift severities of the splits shift1, shift2, ...
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.6, 0.9, 1.2, 1.5])]
    pub severities: Vec<f64>,
    /// Pair every model with this one instead of forming all pairs
    #[arg(long, value_name = "MODEL")]
    pub anchor: Option<String>,
    /// Instead of shifted splits, write a single split `planted1` made of the
    /// ID samples plus N samples every model gets right with certainty
    #[arg(long, value_name = "N")]
    pub planted: Option<usize>,
    /// Overwrite existing files
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// 1: three-class simplex grid; 2: binary error curve
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub figure: u8,
    #[arg(long, default_value = "hd")]
    pub notion: Notion,
    /// Grid steps per unit
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    /// Figure 1 only: disagreement against the anchor, or error for a label
    #[arg(long, value_enum, default_value = "disagreement")]
    pub mode: GridModeArg,
    /// Figure 1 error mode: the true class (0, 1 or 2)
    #[arg(long, default_value_t = 0)]
    pub label: usize,
    /// Figure 1 disagreement mode: anchor distribution P1,P2,P3
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.35, 0.325, 0.325])]
    pub anchor: Vec<f64>,
    /// Probability floor for logarithms, in (0, 1e-3)
    #[arg(long, default_value = "1e-12")]
    pub eps: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GridModeArg {
    Disagreement,
    Error,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Validation => ExitCode::from(1),
                ErrorClass::Numerical => ExitCode::from(2),
            }
        }
    }
}
