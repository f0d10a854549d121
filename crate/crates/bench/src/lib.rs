//! Shared workloads for the benchmarks.

use twr_core::{db_to_linear, PowerAllocation, PowerBudget, SystemConfig};

/// Measured large-scale fading of ten pairs.
pub const FADING: [f64; 20] = [
    0.749, 0.246, 0.125, 0.635, 0.412, 0.071, 0.368, 0.081, 0.608, 0.193, 0.065, 0.437, 1.000, 0.075, 0.014, 0.072,
    0.121, 0.113, 0.469, 0.562,
];

/// Unit-fading system with 10 dB pilots and the relay at `2K P_S`.
pub fn uniform_point(n: usize, k: usize, ps_db: f64) -> (SystemConfig, PowerAllocation) {
    let cfg = SystemConfig::uniform(n, k, 1.0, db_to_linear(10.0)).expect("valid uniform system");
    let ps = db_to_linear(ps_db);
    (cfg, PowerAllocation::uniform(2 * k, ps, 2.0 * k as f64 * ps))
}

/// Ten pairs on the measured fading with a 23 dB budget.
pub fn measured_budget(n: usize) -> (SystemConfig, PowerBudget) {
    let cfg = SystemConfig::new(n, FADING.to_vec(), db_to_linear(10.0)).expect("valid measured system");
    (cfg, PowerBudget::total_only(db_to_linear(23.0)))
}
