use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cmgd",
    version,
    about = "Two-stage constrained multi-gradient descent"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem from many starts and write the merged front.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    /// Two Gaussian wells in 3-D separated by a slab.
    Toy,
    /// Three-regime speed–density calibration.
    Fd,
    /// Return / variance / cost portfolio with industry bands.
    Portfolio,
    /// Quadratic objectives and affine constraints from a JSON file.
    User,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub problem: ProblemKind,

    /// Number of random starts.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub starts: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Stage-one iteration budget.
    #[arg(long, default_value_t = 200)]
    pub m1: usize,

    /// Stage-two iteration budget.
    #[arg(long, default_value_t = 50)]
    pub m2: usize,

    /// Stationarity tolerance on the direction value.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,

    #[arg(long, default_value_t = 1e-8)]
    pub feas_tol: f64,

    /// Existing directory for the output files.
    #[arg(long)]
    pub out: PathBuf,

    /// Also write one SVG per objective pair.
    #[arg(long)]
    pub plot: bool,

    /// Speed–density file (flow, density, speed per line). Synthetic data
    /// is generated when absent.
    #[arg(long)]
    pub fd_data: Option<PathBuf>,

    /// Speed noise of the synthetic data set.
    #[arg(long, default_value_t = 2.0)]
    pub fd_noise: f64,

    /// Record count of the synthetic data set.
    #[arg(long, default_value_t = 500)]
    pub fd_records: usize,

    /// Density bin width of the inverse-frequency weights; 0 for uniform
    /// weights.
    #[arg(long, default_value_t = cmgd::problems::DEFAULT_BIN_WIDTH)]
    pub weight_bin_width: f64,

    #[arg(long, alias = "n", default_value_t = 2000)]
    pub portfolio_n: usize,

    #[arg(long, alias = "m", default_value_t = 10)]
    pub portfolio_m: usize,

    /// Problem file for `--problem user`.
    #[arg(long)]
    pub user_spec: Option<PathBuf>,

    /// Lower edge of the start box (toy and user problems).
    #[arg(long, allow_negative_numbers = true)]
    pub box_lower: Option<f64>,

    /// Upper edge of the start box (toy and user problems).
    #[arg(long, allow_negative_numbers = true)]
    pub box_upper: Option<f64>,

    /// Scale of linearized nonlinear constraints.
    #[arg(long, default_value_t = 0.1)]
    pub eta_lin: f64,

    /// Solve direction subproblems over the Euclidean ball instead of the
    /// box surrogate.
    #[arg(long)]
    pub exact_l2: bool,
}
