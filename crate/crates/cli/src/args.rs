//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "nearfar",
    version,
    about = "Near/far matching, IV inference and sensitivity analysis"
)]
pub struct Cli {
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Base seed; falls back to NEARFAR_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Upper bound on worker threads. Every engine currently runs on one
    /// thread, so results are identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    /// Resolved configuration (JSON), or a run record from an earlier run.
    /// Replaces the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic cohort CSV.
    Generate(GenerateArgs),
    /// Optimal near/far matching of a cohort.
    Match(MatchArgs),
    /// Matching with sinks (half the cohort by default) to strengthen the IV.
    Strengthen(MatchArgs),
    /// Wald estimate and test-inverted confidence interval.
    Estimate(EstimateArgs),
    /// Wilcoxon signed rank or sign test of H0: beta = beta0.
    Test(TestArgs),
    /// Asymptotic relative efficiency of two compliance mixes.
    Are(AreArgs),
    /// Monte-Carlo sample size for a target power.
    Samplesize(SampleSizeArgs),
    /// Bias ratio of two designs (needs a latent u column).
    Bias(TwoDesignArgs),
    /// Leave-one-covariate-out bias diagnostic.
    Leaveoneout(TwoDesignArgs),
    /// Sensitivity interval over a zone.
    Sensitivity(SensitivityArgs),
    /// Largest tolerable delta per (tau, lambda1) cell.
    Heatmap(HeatmapArgs),
    /// Power of the sensitivity analysis under the favorable DGP.
    Power(PowerArgs),
    /// Exclusion-principle audit of the pair-level dose model.
    Audit(AuditArgs),
    /// Two-step debiased matching.
    Debias(DebiasArgs),
    /// Run a bundled preset.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CohortArgs {
    /// Cohort CSV.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Column mapping (JSON).
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MetricArg {
    RankMahalanobis,
    Mahalanobis,
    Euclidean,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum EncouragementArg {
    Lower,
    Higher,
}

#[derive(Args, Debug, Clone)]
pub struct DistanceArgs {
    #[arg(long, value_enum, default_value = "rank-mahalanobis")]
    pub metric: MetricArg,
    /// Dose caliper: pairs closer than this in dose are penalized.
    #[arg(long, default_value_t = 0.0)]
    pub caliper: f64,
    #[arg(long)]
    pub penalty: Option<f64>,
    #[arg(long)]
    pub sinks: Option<usize>,
    /// Which member counts as encouraged.
    #[arg(long, value_enum, default_value = "lower")]
    pub encouragement: EncouragementArg,
    #[arg(long)]
    pub allow_dose_ties: bool,
}

#[derive(Args, Debug, Clone)]
pub struct DesignArgs {
    /// Existing design CSV; otherwise the cohort is matched with the distance flags.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[command(flatten)]
    pub distance: DistanceArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// DGP specification (JSON with a `kind` field).
    #[arg(long)]
    pub dgp: Option<PathBuf>,
    /// Shorthand for the sin/log/sin partially linear model.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub distance: DistanceArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Wilcoxon,
    Sign,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SideArg {
    Greater,
    Less,
    TwoSided,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Known residual sd for the Wald standard error.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "wilcoxon")]
    pub method: MethodArg,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 0.0)]
    pub beta0: f64,
    #[arg(long, value_enum, default_value = "wilcoxon")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "two-sided")]
    pub side: SideArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum DensityArg {
    Normal,
    Laplace,
}

#[derive(Args, Debug)]
pub struct AreArgs {
    #[arg(long)]
    pub iota1: Option<f64>,
    #[arg(long)]
    pub iota2: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub iota_a1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub iota_a2: f64,
    #[arg(long, value_enum, default_value = "wilcoxon")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "normal")]
    pub density: DensityArg,
    /// Also simulate the sample-size ratio with this many replications.
    #[arg(long, default_value_t = 0)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub effect: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
}

#[derive(Args, Debug)]
pub struct SampleSizeArgs {
    #[arg(long)]
    pub iota_c: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub iota_a: f64,
    #[arg(long, default_value_t = 0.1)]
    pub effect: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
    #[arg(long, value_enum, default_value = "wilcoxon")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "normal")]
    pub density: DensityArg,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
}

#[derive(Args, Debug)]
pub struct TwoDesignArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// Caliper of the strengthened design.
    #[arg(long, default_value_t = 0.0)]
    pub caliper1: f64,
    /// Sinks of the strengthened design; default half the cohort.
    #[arg(long)]
    pub sinks1: Option<usize>,
    #[arg(long, value_enum, default_value = "lower")]
    pub encouragement: EncouragementArg,
}

#[derive(Args, Debug, Clone)]
pub struct SensitivityOptionArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Imputations per zone point.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// `linear-f`, `matched-moments` or `known:<sigma>`.
    #[arg(long, default_value = "linear-f")]
    pub sigma: String,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Zone JSON; otherwise the symmetric zone from the flags below.
    #[arg(long)]
    pub zone: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub delta_sup: f64,
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    #[command(flatten)]
    pub options: SensitivityOptionArgs,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    pub tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub lambda1: Vec<f64>,
    #[arg(long, default_value_t = 11)]
    pub points: usize,
    #[command(flatten)]
    pub options: SensitivityOptionArgs,
}

#[derive(Args, Debug)]
pub struct PowerArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.8)]
    pub beta: f64,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub xi: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub delta_sup: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub lambda1: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2400)]
    pub n: usize,
    #[arg(long, default_value_t = 550)]
    pub block: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SolverArg {
    Auto,
    Exact,
    Local,
}

#[derive(Args, Debug)]
pub struct DebiasArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub distance: DistanceArgs,
    /// Required mean dose gap.
    #[arg(long, conflicts_with = "k")]
    pub phi: Option<f64>,
    /// Required mean dose gap as a multiple of the stage-one gap.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    pub solver: SolverArg,
    /// Solver time budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub budget: f64,
    #[arg(long, default_value_t = 0)]
    pub min_pairs: usize,
    /// Add a half-sample sink design with this caliper to the comparison.
    #[arg(long)]
    pub sink_caliper: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PresetArg {
    Table2,
    Table3,
    Table5,
    Table6,
    Audit,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub preset: PresetArg,
    /// Replications; each preset has its own default.
    #[arg(long)]
    pub reps: Option<usize>,
}
