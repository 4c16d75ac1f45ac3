use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "tokenbound", version, about = "Token-level generalization bounds and supporting numerics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Failure probability of the bound.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub delta: f64,

    /// Number of points in the Σ grid.
    #[arg(long, global = true, default_value_t = 1000)]
    pub grid_size: usize,

    /// Bits per parameter of the quantized model.
    #[arg(long, global = true, default_value_t = 4.0)]
    pub bits: f64,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound evaluation and Monte Carlo validation.
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Loss-variation term Σ of a trace.
    Sigma(SigmaArgs),
    /// Optimal smoothing weight, loss range and overhead.
    Smooth(SmoothArgs),
    /// Prequential complexity.
    #[command(subcommand)]
    Preq(PreqCmd),
    /// Scaling-law fits, frontier selection and compute allocation.
    #[command(subcommand)]
    Scaling(ScalingCmd),
    /// Hessian trace estimation and quantization.
    #[command(subcommand)]
    Spectral(SpectralCmd),
    /// Convert a report between JSON and CSV.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum BoundCmd {
    /// Evaluate the bound on a trace file.
    Eval(EvalArgs),
    /// Coverage or tightness suites on synthetic processes.
    Mc(McArgs),
    /// Write a synthetic trace file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Parameter count of the model.
    #[arg(long)]
    pub params: u64,
    /// Training tokens; defaults to the trace length (or its parent size).
    #[arg(long)]
    pub tokens: Option<u64>,
    /// Use this per-token complexity instead of the parameter-count code.
    #[arg(long)]
    pub complexity: Option<f64>,
    /// Use this Σ instead of computing it from the trace.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Trace columns hold raw quantized losses.
    #[arg(long)]
    pub literal: bool,
    /// Row label for CSV output.
    #[arg(long, default_value = "model")]
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Coverage,
    Tightness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundChoice {
    Azuma,
    FreedmanMaintext,
    FreedmanAppendix,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// JSON process spec (one object or an array); defaults to the built-in suite.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, value_enum, num_args = 1.., default_values_t = [BoundChoice::FreedmanMaintext, BoundChoice::FreedmanAppendix])]
    pub bounds: Vec<BoundChoice>,
    /// Smoothing weight of the synthetic predictor.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 64)]
    pub vocab: usize,
    #[arg(long, num_args = 1.., default_values_t = [1024usize])]
    pub horizons: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON process spec (a single object).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Derive α from the complexity of a model with this many parameters
    /// trained on the trace horizon, so the trace matches `bound eval`.
    #[arg(long)]
    pub params: Option<u64>,
    #[arg(long, default_value = "text")]
    pub trace_format: String,
}

#[derive(Debug, Args)]
pub struct SigmaArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Per-token complexity; computed from --params when absent.
    #[arg(long)]
    pub complexity: Option<f64>,
    #[arg(long)]
    pub params: Option<u64>,
    #[arg(long)]
    pub tokens: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(long)]
    pub vocab: u64,
    /// Per-token complexity; computed from --params and --tokens when absent.
    #[arg(long)]
    pub complexity: Option<f64>,
    #[arg(long)]
    pub params: Option<u64>,
    #[arg(long)]
    pub tokens: Option<u64>,
    /// Empirical risk of the unsmoothed model, for the smoothing guarantee.
    #[arg(long)]
    pub risk: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum PreqCmd {
    /// K(h) from an online loss curve CSV.
    Kh(KhArgs),
    /// Exact and asymptotic K(h) under a scaling law.
    Asymptotic(AsymptoticArgs),
    /// Model size where prequential and parameter-count codes cross.
    Crossover(CrossoverArgs),
    /// Per-token complexity of a prequential code.
    Complexity(PreqComplexityArgs),
}

#[derive(Debug, Args)]
pub struct KhArgs {
    #[arg(long)]
    pub curve: PathBuf,
}

#[derive(Debug, Args)]
pub struct AsymptoticArgs {
    #[arg(long)]
    pub tokens: u64,
    /// Data exponent β; defaults to the bundled preset.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Data coefficient B.
    #[arg(long, default_value_t = 1.0)]
    pub coef_b: f64,
    /// Drop the coefficient B from the asymptotic form.
    #[arg(long)]
    pub literal: bool,
}

#[derive(Debug, Args)]
pub struct CrossoverArgs {
    /// Prequential code length coefficient in bits.
    #[arg(long)]
    pub k_bits: Option<f64>,
    /// Growth exponent of the prequential code in model size.
    #[arg(long)]
    pub exponent: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PreqComplexityArgs {
    #[arg(long)]
    pub kh_nats: f64,
    #[arg(long)]
    pub tokens: u64,
}

#[derive(Debug, Subcommand)]
pub enum ScalingCmd {
    /// Fit `a + b·x^{−p}` (or `k·x^p` with --growth) to a CSV with columns x,y.
    Fit(FitArgs),
    /// Select checkpoints at a fixed parameter-to-token ratio.
    Frontier(FrontierArgs),
    /// Compute-optimal model and data size.
    Allocate(AllocateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub growth: bool,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[arg(long)]
    pub curves: PathBuf,
    /// Target N/D.
    #[arg(long, default_value_t = 0.05)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    /// Training compute in FLOPs.
    #[arg(long)]
    pub compute: f64,
    /// JSON scaling-law parameters; defaults to the bundled replication fit.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SpectralCmd {
    /// Stochastic Lanczos quadrature estimate of Tr(H^{1/2}).
    Slq(SlqArgs),
    /// LDLQ rounding with a random incoherence transform.
    Ldlq(LdlqArgs),
    /// Bits per parameter for a quantization budget.
    Bits(BitsArgs),
}

#[derive(Debug, Args)]
pub struct SlqArgs {
    /// Dense matrix (CSV or binary).
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub probes: Option<usize>,
    /// Target relative accuracy when sizing from the spectrum.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Failure probability when sizing from the spectrum.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value = "rademacher")]
    pub probe: String,
    /// Shift the spectrum instead of failing on negative Ritz values.
    #[arg(long)]
    pub shift: bool,
    /// Histogram bins for CSV output.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformChoice {
    None,
    Gaussian,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantizerChoice {
    Nearest,
    Stochastic,
}

#[derive(Debug, Args)]
pub struct LdlqArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Weights as a single CSV row or column.
    #[arg(long)]
    pub weights: PathBuf,
    /// Grid step; defaults to 2^{−bits}.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, value_enum, default_value_t = TransformChoice::Orthogonal)]
    pub transform: TransformChoice,
    #[arg(long, value_enum, default_value_t = QuantizerChoice::Stochastic)]
    pub quantizer: QuantizerChoice,
}

#[derive(Debug, Args)]
pub struct BitsArgs {
    #[arg(long)]
    pub trace_sqrt: f64,
    #[arg(long)]
    pub params: u64,
    /// Quantization budget Q on the proxy loss.
    #[arg(long)]
    pub budget: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A JSON report document or a CSV table.
    #[arg(long)]
    pub input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
