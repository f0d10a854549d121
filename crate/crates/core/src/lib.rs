//! Multi-pair two-way amplify-and-forward relaying with a massive antenna
//! array at the relay.
//!
//! The crate covers the full pipeline: imperfect-CSI channel generation,
//! MRC/MRT and ZFR/ZFT relay beamforming, Monte-Carlo and closed-form
//! achievable rates, a log-domain geometric-programming solver, the power
//! allocation schemes built on top of it and a sampling oracle for the
//! closed-form moment identities.

pub mod allocation;
pub mod beamforming;
pub mod channel;
pub mod error;
pub mod gp;
pub mod moments;
pub mod oracle;
pub mod rates;
pub mod system;

pub use allocation::{allocate, aopa_mrc, aopa_zf, epa, opa, AllocationResult, OpaSettings, OpaTrace, Scheme};
pub use beamforming::{
    alpha1_statistical, alpha2_statistical, build_unnormalized, normalize_instantaneous, BeamformerKind, Normalization,
    RelayBeamformer,
};
pub use channel::{draw_channel_sample, estimate_from_training, pilot_matrix, ChannelSample};
pub use error::{Error, Result};
pub use gp::{GpProblem, GpSettings, GpSolution, Monomial, Posynomial};
pub use moments::WishartConvention;
pub use rates::{
    asymptotic_rate, bound_coefficients, monte_carlo_rate, scsi_rate, AsymptoticCase, BoundCoefficients,
    EstimationMode, McSettings, RateReport,
};
pub use system::{
    estimation_stats, partner, spectral_efficiency_prefactor, EstimationStats, PowerAllocation, PowerBudget,
    SystemConfig,
};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
