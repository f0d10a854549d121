//! Experiment runner for the two-way relaying simulator: figure presets,
//! sweep specs, CSV output and the moment oracle suite.

pub mod allocate;
pub mod output;
pub mod presets;
pub mod run;
pub mod spec;

pub use allocate::AllocationSpec;
pub use output::{rows_to_csv, write_experiment, COLUMNS};
pub use presets::{preset, PRESETS};
pub use run::{required_user_power_db, run_experiment, Row};
pub use spec::{ExperimentSpec, GridPoint, Metric, PilotSetup, PowerSetup, RelayPolicy, Scenario, Sweep, SweepVar};

/// Worker-count variable read by the `twr` binary.
pub const WORKERS_ENV: &str = "TWR_WORKERS";
