use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rcit::citest::TestKind;
use rcit::{ApproxMethod, CiTestConfig};

#[derive(Debug, Parser)]
#[command(name = "rcit", version, about = "Randomized conditional independence tests")]
pub struct Cli {
    /// Worker threads for suites and benchmarks (default: one per core).
    #[arg(long, global = true, env = "RCIT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test X independent of Y given Z on columns of a CSV file.
    Test(TestArgs),
    /// Write simulated data as CSV plus a JSON sidecar.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Null calibration suite on the post non-linear null model.
    Calibrate(SuiteArgs),
    /// Power suite on the hidden common cause alternative.
    Power(SuiteArgs),
    /// Calibration on alternative data with the X rows permuted.
    Perm(SuiteArgs),
    /// Runtime of single test calls.
    Bench(BenchArgs),
    /// Accuracy of the weighted chi-square approximations against Imhof.
    BenchNull(BenchNullArgs),
    /// PC on a CSV file, optionally scored against a true DAG.
    Discover(DiscoverArgs),
}

/// Options shared by commands that run RCoT or RCIT.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FeatureArgs {
    /// Fourier features for the X and Y blocks.
    #[arg(long, default_value_t = 5)]
    pub num_features_xy: usize,
    /// Fourier features for the conditioning block.
    #[arg(long, default_value_t = 25)]
    pub num_features_z: usize,
    /// Permutations used by the perm approximation.
    #[arg(long, default_value_t = 500)]
    pub permutations: usize,
}

impl FeatureArgs {
    pub fn config(&self, approx: ApproxMethod, seed: u64) -> CiTestConfig {
        CiTestConfig {
            num_features_xy: self.num_features_xy,
            num_features_z: self.num_features_z,
            permutations: self.permutations,
            approx_method: approx,
            seed,
            ..CiTestConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated column names.
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// Conditioning columns; omit for an unconditional test.
    #[arg(long)]
    pub z: Option<String>,
    /// rcot, rcit or fisher-z.
    #[arg(long, default_value = "rcot")]
    pub method: TestKind,
    /// lpb, hbe, sw, woodf, imhof or perm.
    #[arg(long, default_value = "lpb")]
    pub approx: ApproxMethod,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// X and Y independent given Z.
    PnlNull(PnlArgs),
    /// X and Y share a hidden cause.
    PnlAlt(PnlArgs),
    /// Random DAG and data sampled from it.
    Dag(DagArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PnlArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Dimension of Z.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; the sidecar goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DagArgs {
    /// Number of vertices.
    #[arg(long, default_value_t = 20)]
    pub v: usize,
    /// Expected neighborhood size.
    #[arg(long, default_value_t = 2.0)]
    pub en: f64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Pass every column through a random nonlinearity.
    #[arg(long)]
    pub nonlinear: bool,
    /// Hide up to three common causes.
    #[arg(long)]
    pub latents: bool,
    /// Truncate on up to three colliders.
    #[arg(long)]
    pub selection: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SuiteArgs {
    /// Comma-separated tests such as `rcot`, `rcit-perm` or `fisher-z`.
    #[arg(long, default_value = "rcot,rcit")]
    pub tests: String,
    /// Sample sizes, e.g. `500,1000`.
    #[arg(long, default_value = "1000")]
    pub n: String,
    /// Conditioning dimensions, e.g. `1..10` or `1,4`.
    #[arg(long, default_value = "1..10")]
    pub k: String,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one summary row per condition here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value = "rcot,rcit,fisher-z")]
    pub tests: String,
    #[arg(long, default_value = "1000,10000,100000")]
    pub sizes: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchNullArgs {
    /// `random`, or a JSON file holding an array of weight arrays.
    #[arg(long, default_value = "random")]
    pub weights: String,
    /// Number of random weight vectors.
    #[arg(long, default_value_t = 20)]
    pub sets: usize,
    /// Largest random vector length.
    #[arg(long, default_value_t = 25)]
    pub max_len: usize,
    /// Upper tail probabilities whose Imhof quantiles are evaluated.
    #[arg(long, default_value = "0.1,0.05,0.01")]
    pub levels: String,
    /// Monte-Carlo draws per quantile; 0 skips the check.
    #[arg(long, default_value_t = 0)]
    pub mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiscoverArgs {
    /// Required unless `--test oracle`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// A test such as `rcot` or `fisher-z`, or `oracle` (d-separation in `--truth`).
    #[arg(long, default_value = "rcot")]
    pub test: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Largest conditioning set PC tries.
    #[arg(long)]
    pub max_cond: Option<usize>,
    /// True DAG as JSON (`{vertex_names, edges}` or a `synth dag` sidecar).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the CPDAG as an adjacency matrix CSV.
    #[arg(long)]
    pub adjacency_csv: Option<PathBuf>,
}
