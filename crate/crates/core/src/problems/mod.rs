//! Ready-made benchmark problems.

mod fd;
mod portfolio;
mod toy;

pub use fd::{
    compute_bin_weights, fd_constraint_rows, fd_preconditioner, fd_problem, fd_start_box,
    load_speed_density, save_speed_density, synthetic_dataset, FdModelParams, LineWarning,
    LoadedDataset, SpeedDensityDataset, SpeedRecord, SyntheticFd, WeightingScheme,
    DEFAULT_BIN_WIDTH, DEFAULT_BREAKPOINTS,
};
pub use portfolio::{portfolio_problem, PortfolioConfig, PortfolioInstance, PortfolioSampler};
pub use toy::{toy_analytic_front, toy_pareto_distance, toy_problem, TOY_T_MAX};
