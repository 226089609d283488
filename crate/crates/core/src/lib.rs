//! Subsampling inference for two-way clustered panels with serially
//! correlated time effects.
//!
//! Subsamples cross a randomly partitioned unit index set with consecutive
//! time windows. On top of that engine the crate provides quantile
//! confidence intervals from the subsampling root distribution, a
//! subsampling variance estimator with data-driven subsample-size selection
//! and bias correction, score-subsampling sandwich variances for OLS, and a
//! seeded Monte Carlo coverage harness.

pub mod bandwidth;
pub mod error;
pub mod panel;
pub mod quantile;
pub mod regression;
pub mod seed;
pub mod sim;
pub mod subsample;
pub mod variance;

pub use error::{Error, Result};
pub use panel::{read_panel_csv, read_panel_csv_path, validate_panel, PanelData, RateSpec, SubsamplePlan};
pub use quantile::{quantile_ci, ConfidenceInterval, IntervalSide, RootDistribution};
pub use seed::SeedStream;
pub use subsample::{evaluate_subsamples, partition_units, time_windows, MeanStatistic, PanelStatistic};
pub use variance::{normal_ci, sigma_hat, sigma_hat_bc, VarianceEstimate};
