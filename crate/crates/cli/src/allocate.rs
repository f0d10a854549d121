//! Single power-allocation runs.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use twr_core::{
    allocate, db_to_linear, AllocationResult, BeamformerKind, OpaSettings, PowerBudget, Scheme, SystemConfig,
    WishartConvention,
};

use crate::spec::RelayPolicy;

fn coherence() -> usize {
    200
}

fn unit_noise() -> f64 {
    1.0
}

/// One allocation problem, powers in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSpec {
    pub kind: BeamformerKind,
    pub scheme: Scheme,
    pub n_antennas: usize,
    pub large_scale: Vec<f64>,
    pub pilot_power_db: f64,
    pub total_db: f64,
    #[serde(default)]
    pub user_peak_db: Option<f64>,
    #[serde(default)]
    pub relay_peak_db: Option<f64>,
    #[serde(default)]
    pub relay: RelayPolicy,
    #[serde(default = "unit_noise")]
    pub noise_var: f64,
    #[serde(default = "coherence")]
    pub coherence_len: usize,
    #[serde(default)]
    pub convention: WishartConvention,
    #[serde(default)]
    pub opa: OpaSettings,
}

impl AllocationSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid allocation spec")
    }

    pub fn run(&self) -> Result<AllocationResult> {
        if !self.large_scale.len().is_multiple_of(2) {
            bail!("large_scale needs an even number of users");
        }
        let mut cfg = SystemConfig::new(
            self.n_antennas,
            self.large_scale.clone(),
            db_to_linear(self.pilot_power_db),
        )?;
        cfg.noise_var = self.noise_var;
        cfg.coherence_len = self.coherence_len;
        cfg.validate()?;
        let total = db_to_linear(self.total_db);
        let budget = PowerBudget {
            total,
            user_peak: self.user_peak_db.map_or(total, db_to_linear),
            relay_peak: self.relay_peak_db.map_or(total, db_to_linear),
        };
        let mut opa = self.opa;
        if self.relay == RelayPolicy::Half {
            opa.fixed_relay_power = Some(total / 2.0);
        }
        Ok(allocate(self.scheme, self.kind, &cfg, &budget, &opa, self.convention)?)
    }
}
