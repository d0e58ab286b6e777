mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rmtk::SpectralMeasure;

/// Exit status for invalid input, unreadable files and rejected parameters.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit status when an iterative numerical method fails to converge.
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rmtk",
    version,
    about = "Random-matrix spectra, free convolutions, outliers and fits"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Global {
    /// Master seed; every random draw in the run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "rmtk-out")]
    #[serde(skip, default = "default_out")]
    pub out: PathBuf,
    /// Number of points in density grids.
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Imaginary offset for Stieltjes inversion.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Fixed-point tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

fn default_out() -> PathBuf {
    PathBuf::from("rmtk-out")
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Sample spectra of (sums of) random matrix ensembles.
    Sample(SampleArgs),
    /// Free additive convolution of two measures.
    Convolve(ConvolveArgs),
    /// Predict outlier locations of deformed matrices.
    OutlierPredict(OutlierPredictArgs),
    /// Fit the outlier scaling model to a dataset.
    OutlierFit(OutlierFitArgs),
    /// Generate a synthetic outlier dataset from known parameters.
    SynthOutliers(SynthOutliersArgs),
    /// Quantile-quantile comparison of two spectra.
    Qq(QqArgs),
    /// Potential of an invariant ensemble with a given equilibrium measure.
    Potential(PotentialArgs),
    /// Kac-Rice complexity exponent over a family of measures.
    Complexity(ComplexityArgs),
    /// Rigidity, local-law and eigenvector statistics of sampled matrices.
    Diagnostics(DiagnosticsArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Rerun(RerunArgs),
}

fn parse_measure(s: &str) -> Result<SpectralMeasure, String> {
    let text = if s.trim_start().starts_with('{') {
        s.to_owned()
    } else {
        std::fs::read_to_string(s).map_err(|e| format!("cannot read {s}: {e}"))?
    };
    SpectralMeasure::from_json(&text).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Ensemble term `kind:n[:m|d][@scale]`; repeat to sum independent terms.
    #[arg(long = "ensemble", required = true)]
    pub ensembles: Vec<String>,
    /// Number of independent samples.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Drop this many largest eigenvalues from each sample.
    #[arg(long, default_value_t = 0)]
    pub drop_top: usize,
    /// Measure (inline JSON or file) to compare the pooled spectrum with.
    #[arg(long, value_parser = parse_measure)]
    pub compare: Option<SpectralMeasure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolveMethod {
    Closed,
    Cubic,
    Subordination,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvolveArgs {
    #[arg(long, value_parser = parse_measure)]
    pub mu: SpectralMeasure,
    #[arg(long, value_parser = parse_measure)]
    pub nu: SpectralMeasure,
    #[arg(long, value_enum, default_value_t = ConvolveMethod::Subordination)]
    pub method: ConvolveMethod,
    /// Also run subordination on the same grid and report the largest difference.
    #[arg(long)]
    pub cross_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictMethod {
    FixedRank,
    Subordination,
    Perturbative,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutlierPredictArgs {
    /// Bulk law of the noise matrix.
    #[arg(long, value_parser = parse_measure)]
    pub bulk: SpectralMeasure,
    /// Spike values.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub spikes: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PredictMethod::FixedRank)]
    pub method: PredictMethod,
    /// Spectral law of the deformation (subordination).
    #[arg(long, value_parser = parse_measure)]
    pub nu: Option<SpectralMeasure>,
    /// Law of the non-spike deformation entries (perturbative).
    #[arg(long, value_parser = parse_measure)]
    pub eta_law: Option<SpectralMeasure>,
    /// Fraction of non-spike deformation entries (perturbative).
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Noise scale `s` (perturbative).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutlierFitArgs {
    /// Dataset CSV with columns outlier_index,seed,batch_size,value.
    #[arg(long)]
    pub data: PathBuf,
    /// Exponent grid `lo:hi:step`.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub upsilon_grid: String,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub penalty: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthOutliersArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub theta: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long)]
    pub upsilon: f64,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512,1024")]
    pub batch_sizes: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Standard deviation of Gaussian noise added to each value.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct QqArgs {
    /// One-column CSV of the first spectrum.
    #[arg(long)]
    pub a: PathBuf,
    /// One-column CSV of the second spectrum.
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PotentialArgs {
    #[arg(long, value_parser = parse_measure)]
    pub measure: SpectralMeasure,
    /// Half-width of the grid on which the S_V functional is tabulated.
    #[arg(long, default_value_t = 10.0)]
    pub sv_range: f64,
    #[arg(long, default_value_t = 401)]
    pub sv_points: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ComplexityArgs {
    /// JSON file: a list of {"u": .., "measure": {..}} entries.
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps_index: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiagnosticsArgs {
    /// Ensemble term `kind:n[:m|d]`.
    #[arg(long)]
    pub ensemble: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Rigidity constant.
    #[arg(long, default_value_t = 10.0)]
    pub rigidity_c: f64,
    /// Real part of the local-law evaluation point; defaults to one unit left of the support.
    #[arg(long, allow_negative_numbers = true)]
    pub z_re: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub z_im: f64,
    /// Highest moment of the eigenvector statistic; 0 skips eigenvectors.
    #[arg(long, default_value_t = 2)]
    pub p_max: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<rmtk::Error> for CliError {
    fn from(e: rmtk::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("RMT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Validation(format!("RMT_THREADS must be a positive integer, got {v:?}"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let Cli {
        mut global,
        command,
    } = cli;
    let command = match command {
        Command::Rerun(args) => {
            let manifest = output::read_manifest(&args.manifest)?;
            let out = global.out;
            global = manifest.global;
            global.out = out;
            manifest.command
        }
        c => c,
    };
    commands::execute(&global, &command)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => EXIT_VALIDATION,
                CliError::Numerical(_) => EXIT_NUMERICAL,
            })
        }
    }
}
