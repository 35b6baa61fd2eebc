//! Analytic channel-estimation MSE of separable time/frequency/space Wiener
//! interpolation over the DMRS grid, the SNR to MSE lookup table and the
//! estimation-error covariance.

mod correlations;
mod mse;
mod pattern;
mod table;
mod wiener;

pub use correlations::{exponential_pdp, freq_corr, spatial_corr, time_corr};
pub use mse::{analytic_mse_direct, analytic_mse_kron, analytic_mse_separable, SeparableCovariance, DIRECT_SIZE_CAP};
pub use pattern::{dmrs_pattern, PilotPattern, DMRS_SYMBOL, SLOT_SYMBOLS};
pub use table::{build_mse_table, est_error_cov, est_error_diag, MseTable};
pub use wiener::wiener_matrix;
