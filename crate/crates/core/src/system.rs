//! Network configuration, MMSE estimation statistics and power bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of the relay network.
///
/// Users are indexed `0..2K`; users `2l` and `2l + 1` form pair `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Relay antennas `N`.
    pub n_antennas: usize,
    /// Communicating pairs `K`.
    pub n_pairs: usize,
    /// Large-scale fading `sigma_i^2` of every user, length `2K`.
    pub large_scale: Vec<f64>,
    /// Noise variance at the relay and the users.
    #[serde(default = "unit")]
    pub noise_var: f64,
    /// Per-symbol pilot power `p_P` (linear).
    pub pilot_power: f64,
    /// Pilot length `tau` in symbols.
    pub pilot_len: usize,
    /// Coherence interval `T` in symbols.
    #[serde(default = "default_coherence")]
    pub coherence_len: usize,
}

fn unit() -> f64 {
    1.0
}

fn default_coherence() -> usize {
    200
}

impl SystemConfig {
    /// Builds a configuration with unit noise, `tau = 2K` and `T = 200`.
    pub fn new(n_antennas: usize, large_scale: Vec<f64>, pilot_power: f64) -> Result<SystemConfig> {
        let users = large_scale.len();
        let cfg = SystemConfig {
            n_antennas,
            n_pairs: users / 2,
            large_scale,
            noise_var: 1.0,
            pilot_power,
            pilot_len: users,
            coherence_len: default_coherence(),
        };
        if !users.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "need an even number of users, got {users}"
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same network with every user at the same large-scale fading.
    pub fn uniform(n_antennas: usize, n_pairs: usize, sigma2: f64, pilot_power: f64) -> Result<Self> {
        Self::new(n_antennas, vec![sigma2; 2 * n_pairs], pilot_power)
    }

    pub fn n_users(&self) -> usize {
        2 * self.n_pairs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_pairs == 0 {
            return bad("at least one pair is required".into());
        }
        if self.n_antennas <= 2 * self.n_pairs + 3 {
            return bad(format!(
                "N = {} must exceed 2K + 3 = {}",
                self.n_antennas,
                2 * self.n_pairs + 3
            ));
        }
        if self.large_scale.len() != 2 * self.n_pairs {
            return bad(format!(
                "large_scale has {} entries, expected 2K = {}",
                self.large_scale.len(),
                2 * self.n_pairs
            ));
        }
        if let Some(s) = self.large_scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("large-scale fading must be positive, got {s}"));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return bad(format!("noise variance must be positive, got {}", self.noise_var));
        }
        if !(self.pilot_power.is_finite() && self.pilot_power > 0.0) {
            return bad(format!("pilot power must be positive, got {}", self.pilot_power));
        }
        if self.pilot_len < 2 * self.n_pairs {
            return bad(format!(
                "pilot length {} is shorter than the {} users",
                self.pilot_len,
                2 * self.n_pairs
            ));
        }
        if self.coherence_len <= self.pilot_len + 2 {
            return bad(format!(
                "coherence interval {} leaves no data symbols after {} pilots",
                self.coherence_len, self.pilot_len
            ));
        }
        Ok(())
    }

    /// Copy with a different antenna count.
    pub fn with_antennas(&self, n: usize) -> Self {
        SystemConfig {
            n_antennas: n,
            ..self.clone()
        }
    }

    /// Copy with a different pilot power.
    pub fn with_pilot_power(&self, p: f64) -> Self {
        SystemConfig {
            pilot_power: p,
            ..self.clone()
        }
    }
}

/// Index of the partner of user `i`.
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// Per-user variances of the MMSE estimate and of its error.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    /// `hat sigma_i^2`.
    pub est_var: Vec<f64>,
    /// `sigma_xi_i^2 = sigma_i^2 - hat sigma_i^2`.
    pub err_var: Vec<f64>,
}

impl EstimationStats {
    /// `hat Phi`, the sum over pairs of the product of estimate variances.
    pub fn pair_product_sum(&self) -> f64 {
        self.est_var.chunks(2).map(|p| p[0] * p[1]).sum()
    }

    /// Stats of a receiver with perfect CSI.
    pub fn perfect(large_scale: &[f64]) -> Self {
        EstimationStats {
            est_var: large_scale.to_vec(),
            err_var: vec![0.0; large_scale.len()],
        }
    }
}

pub fn estimation_stats(cfg: &SystemConfig) -> EstimationStats {
    let tp = cfg.pilot_len as f64 * cfg.pilot_power;
    let est_var: Vec<f64> = cfg
        .large_scale
        .iter()
        .map(|&s| tp * s * s / (tp * s + cfg.noise_var))
        .collect();
    let err_var = cfg
        .large_scale
        .iter()
        .map(|&s| s * cfg.noise_var / (tp * s + cfg.noise_var))
        .collect();
    EstimationStats { est_var, err_var }
}

/// Fraction of the coherence interval carrying data, `(T - tau - 2) / T`.
pub fn spectral_efficiency_prefactor(cfg: &SystemConfig) -> f64 {
    (cfg.coherence_len as f64 - cfg.pilot_len as f64 - 2.0) / cfg.coherence_len as f64
}

/// User transmit powers and relay power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub user_powers: Vec<f64>,
    pub relay_power: f64,
}

impl PowerAllocation {
    pub fn new(user_powers: Vec<f64>, relay_power: f64) -> Self {
        PowerAllocation {
            user_powers,
            relay_power,
        }
    }

    /// Every user at `user_power`, relay at `relay_power`.
    pub fn uniform(n_users: usize, user_power: f64, relay_power: f64) -> Self {
        PowerAllocation {
            user_powers: vec![user_power; n_users],
            relay_power,
        }
    }

    pub fn total(&self) -> f64 {
        self.user_powers.iter().sum::<f64>() + self.relay_power
    }

    pub fn validate(&self, n_users: usize) -> Result<()> {
        if self.user_powers.len() != n_users {
            return Err(Error::InvalidAllocation(format!(
                "{} user powers for {} users",
                self.user_powers.len(),
                n_users
            )));
        }
        if self.user_powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidAllocation("user powers must be non-negative".into()));
        }
        if !(self.relay_power.is_finite() && self.relay_power > 0.0) {
            return Err(Error::InvalidAllocation("relay power must be positive".into()));
        }
        Ok(())
    }

    /// Checks the budget with a relative slack `tol`.
    pub fn satisfies(&self, budget: &PowerBudget, tol: f64) -> bool {
        let lim = |x: f64, cap: f64| x <= cap * (1.0 + tol);
        lim(self.total(), budget.total)
            && lim(self.relay_power, budget.relay_peak)
            && self.user_powers.iter().all(|&p| lim(p, budget.user_peak))
    }
}

/// Sum-power budget and per-node peak limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBudget {
    /// Total network power `P`.
    pub total: f64,
    /// Per-user peak `P_0`.
    pub user_peak: f64,
    /// Relay peak `P_R,0`.
    pub relay_peak: f64,
}

impl PowerBudget {
    /// A budget whose only active limit is the network total.
    pub fn total_only(total: f64) -> Self {
        PowerBudget {
            total,
            user_peak: total,
            relay_peak: total,
        }
    }
}
