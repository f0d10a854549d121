//! Experiment descriptions read from TOML.
//!
//! Powers are given in dB here and converted to linear values before they
//! reach the simulator.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use twr_core::{
    db_to_linear, BeamformerKind, EstimationMode, Normalization, OpaSettings, Scheme, SystemConfig, WishartConvention,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Closed-form lower bound.
    Bound,
    /// Monte-Carlo ergodic rate.
    Mc,
    /// Allocated user and relay powers.
    Power,
    /// User power in dB that meets the target rate on every link.
    RequiredPs,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Bound => "bound",
            Metric::Mc => "mc",
            Metric::Power => "power",
            Metric::RequiredPs => "required_ps_db",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Relay antennas.
    N,
    /// User pairs.
    K,
    /// Per-user power in dB.
    PsDb,
    /// Relay power in dB.
    PrDb,
    /// Total power budget in dB.
    TotalDb,
    /// Pilot power in dB.
    PilotDb,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::N => "n",
            SweepVar::K => "k",
            SweepVar::PsDb => "ps_db",
            SweepVar::PrDb => "pr_db",
            SweepVar::TotalDb => "total_db",
            SweepVar::PilotDb => "pilot_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayPolicy {
    /// The optimizer chooses the relay power.
    #[default]
    Free,
    /// The relay is held at half the budget.
    Half,
}

/// How user and relay powers are set at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PowerSetup {
    /// Every user at `P_S`, relay at `2K P_S`.
    UserPower {
        #[serde(default)]
        ps_db: Vec<f64>,
    },
    /// Relay at `P_R`, every user at `P_R / 2K`.
    RelayPower {
        #[serde(default)]
        pr_db: Vec<f64>,
    },
    /// Total budget `P` split by the allocation scheme.
    Budget {
        #[serde(default)]
        total_db: Vec<f64>,
        #[serde(default)]
        user_peak_db: Option<f64>,
        #[serde(default)]
        relay_peak_db: Option<f64>,
        #[serde(default)]
        relay: RelayPolicy,
    },
    /// Relay fixed at `P_R`, users share another `P_R`.
    HalfBudget {
        #[serde(default)]
        pr_db: Vec<f64>,
    },
    /// Smallest `P_S` (relay at `2K P_S`) giving every link `rate` bit/s/Hz.
    TargetRate { rate: f64 },
}

impl PowerSetup {
    fn levels(&self) -> Vec<f64> {
        match self {
            PowerSetup::UserPower { ps_db } => ps_db.clone(),
            PowerSetup::RelayPower { pr_db } | PowerSetup::HalfBudget { pr_db } => pr_db.clone(),
            PowerSetup::Budget { total_db, .. } => total_db.clone(),
            PowerSetup::TargetRate { .. } => vec![f64::NAN],
        }
    }

    fn level_var(&self) -> Option<SweepVar> {
        match self {
            PowerSetup::UserPower { .. } => Some(SweepVar::PsDb),
            PowerSetup::RelayPower { .. } | PowerSetup::HalfBudget { .. } => Some(SweepVar::PrDb),
            PowerSetup::Budget { .. } => Some(SweepVar::TotalDb),
            PowerSetup::TargetRate { .. } => None,
        }
    }

    fn allocates(&self) -> bool {
        matches!(self, PowerSetup::Budget { .. } | PowerSetup::HalfBudget { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSetup {
    /// Pilot power `E_P` in dB; omitted means equal to the nominal relay power.
    #[serde(default)]
    pub power_db: Option<f64>,
    /// Pilot power is `E_P / N^exponent`.
    #[serde(default)]
    pub exponent: f64,
}

fn unit_noise() -> f64 {
    1.0
}

fn coherence() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub antennas: Vec<usize>,
    #[serde(default)]
    pub pairs: Vec<usize>,
    /// Large-scale fading; the first `2K` entries are used. Empty means unit
    /// fading.
    #[serde(default)]
    pub large_scale: Vec<f64>,
    /// For MRC, replace the fading by pairs `(s, 1/s)` built from the
    /// even-indexed entries so that every pair has the same product.
    #[serde(default)]
    pub mrc_balanced: bool,
    pub pilots: Vec<PilotSetup>,
    #[serde(default = "unit_noise")]
    pub noise_var: f64,
    #[serde(default = "coherence")]
    pub coherence_len: usize,
}

impl Scenario {
    /// Fading profile seen by beamformer `kind` with `k` pairs.
    pub fn fading(&self, kind: BeamformerKind, k: usize) -> Result<Vec<f64>> {
        if self.large_scale.is_empty() {
            return Ok(vec![1.0; 2 * k]);
        }
        if self.mrc_balanced && kind == BeamformerKind::Mrc {
            let firsts: Vec<f64> = self.large_scale.iter().step_by(2).take(k).copied().collect();
            if firsts.len() < k {
                bail!("large_scale has too few entries for {k} balanced pairs");
            }
            return Ok(firsts.iter().flat_map(|&s| [s, 1.0 / s]).collect());
        }
        if self.large_scale.len() < 2 * k {
            bail!(
                "large_scale has {} entries, {k} pairs need {}",
                self.large_scale.len(),
                2 * k
            );
        }
        Ok(self.large_scale[..2 * k].to_vec())
    }
}

fn default_kinds() -> Vec<BeamformerKind> {
    BeamformerKind::ALL.to_vec()
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Epa]
}

fn default_trials() -> usize {
    2000
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub power: PowerSetup,
    pub sweep: Sweep,
    pub metrics: Vec<Metric>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<BeamformerKind>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub convention: WishartConvention,
    #[serde(default)]
    pub opa: OpaSettings,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub estimation: EstimationMode,
}

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub k: usize,
    pub pilot: PilotSetup,
    /// Power level in dB in the units of the power setup; NaN when the
    /// power is solved for.
    pub level_db: f64,
    pub sweep_value: f64,
}

impl GridPoint {
    /// Nominal relay power, used when the pilot power follows it.
    pub fn nominal_relay_power(&self, power: &PowerSetup) -> f64 {
        let level = db_to_linear(self.level_db);
        match power {
            PowerSetup::UserPower { .. } => 2.0 * self.k as f64 * level,
            PowerSetup::RelayPower { .. } | PowerSetup::HalfBudget { .. } => level,
            PowerSetup::Budget { .. } => level / 2.0,
            PowerSetup::TargetRate { .. } => f64::NAN,
        }
    }

    pub fn pilot_power(&self, power: &PowerSetup) -> f64 {
        let base = match self.pilot.power_db {
            Some(db) => db_to_linear(db),
            None => self.nominal_relay_power(power),
        };
        base / (self.n as f64).powf(self.pilot.exponent)
    }

    pub fn config(&self, spec: &ExperimentSpec, kind: BeamformerKind) -> Result<SystemConfig> {
        let fading = spec.scenario.fading(kind, self.k)?;
        let mut cfg = SystemConfig::new(self.n, fading, self.pilot_power(&spec.power))?;
        cfg.noise_var = spec.scenario.noise_var;
        cfg.coherence_len = spec.scenario.coherence_len;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        bail!("sweep over {what} needs positive integers, got {v}")
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).context("invalid experiment spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("specs serialize")
    }

    /// Grid points in output order; the sweep variable varies fastest.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let s = &self.scenario;
        let var = self.sweep.var;
        let antennas: Vec<usize> = if var == SweepVar::N {
            vec![0]
        } else {
            s.antennas.clone()
        };
        let pairs: Vec<usize> = if var == SweepVar::K { vec![0] } else { s.pairs.clone() };
        let levels = if Some(var) == self.power.level_var() {
            vec![f64::NAN]
        } else {
            self.power.levels()
        };
        let mut out = Vec::new();
        for &n in &antennas {
            for &k in &pairs {
                for pilot in &s.pilots {
                    for &level_db in &levels {
                        for &v in &self.sweep.values {
                            let mut p = GridPoint {
                                n,
                                k,
                                pilot: *pilot,
                                level_db,
                                sweep_value: v,
                            };
                            match var {
                                SweepVar::N => p.n = as_count(v, "antennas")?,
                                SweepVar::K => p.k = as_count(v, "pairs")?,
                                SweepVar::PsDb | SweepVar::PrDb | SweepVar::TotalDb => p.level_db = v,
                                SweepVar::PilotDb => p.pilot.power_db = Some(v),
                            }
                            out.push(p);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        let var = self.sweep.var;
        if self.sweep.values.is_empty() {
            bail!("sweep.values is empty");
        }
        if self.metrics.is_empty() || self.kinds.is_empty() || self.schemes.is_empty() {
            bail!("metrics, kinds and schemes must be nonempty");
        }
        if var != SweepVar::N && s.antennas.is_empty() {
            bail!("scenario.antennas is empty");
        }
        if var != SweepVar::K && s.pairs.is_empty() {
            bail!("scenario.pairs is empty");
        }
        if s.pilots.is_empty() {
            bail!("scenario.pilots is empty");
        }
        if matches!(var, SweepVar::PsDb | SweepVar::PrDb | SweepVar::TotalDb) && Some(var) != self.power.level_var() {
            bail!(
                "sweep over {} does not match the {:?} power setup",
                var.name(),
                self.power
            );
        }
        if self.power.levels().is_empty() && Some(var) != self.power.level_var() {
            bail!("power setup lists no levels");
        }
        let target = matches!(self.power, PowerSetup::TargetRate { .. });
        if target != self.metrics.iter().all(|m| *m == Metric::RequiredPs) || (target && self.metrics.is_empty()) {
            bail!("the required_ps metric goes with, and only with, the target_rate power setup");
        }
        if let PowerSetup::TargetRate { rate } = self.power {
            if rate.is_nan() || rate <= 0.0 {
                bail!("target rate must be positive, got {rate}");
            }
        }
        if !self.power.allocates() && self.schemes.iter().any(|s| *s != Scheme::Epa) {
            bail!("only the equal-power scheme applies without a power budget");
        }
        if self.metrics.contains(&Metric::Mc) && self.trials < 2 {
            bail!("Monte-Carlo needs at least two trials");
        }
        if self.opa.trust <= 1.0 {
            bail!("opa.trust must exceed 1");
        }
        for p in self.grid()? {
            if p.pilot.exponent < 0.0 || p.pilot.exponent >= 1.0 {
                bail!("pilot exponent must lie in [0, 1), got {}", p.pilot.exponent);
            }
            if p.pilot.power_db.is_none() && target {
                bail!("pilot power must be given explicitly with the target_rate setup");
            }
            for &kind in &self.kinds {
                p.config(self, kind)
                    .with_context(|| format!("grid point N={} K={} for {kind}", p.n, p.k))?;
            }
        }
        Ok(())
    }
}
