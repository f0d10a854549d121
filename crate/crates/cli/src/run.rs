//! Grid evaluation.

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use twr_core::{
    allocate, db_to_linear, linear_to_db, monte_carlo_rate, scsi_rate, BeamformerKind, McSettings, OpaSettings,
    PowerAllocation, PowerBudget, RateReport, Scheme, SystemConfig,
};

use crate::spec::{ExperimentSpec, GridPoint, Metric, PowerSetup, RelayPolicy};

/// One CSV record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub preset: String,
    pub kind: BeamformerKind,
    pub scheme: Scheme,
    pub metric: &'static str,
    pub n: usize,
    pub k: usize,
    /// Mean user power.
    pub p_s: f64,
    pub p_s_db: f64,
    /// Relay power; the SNR label of the relay side.
    pub p_r: f64,
    pub p_r_db: f64,
    /// Average per-user SNR label `P_R / 2K`.
    pub user_snr_db: f64,
    pub p_p: f64,
    pub p_p_db: f64,
    pub pilot_exp: f64,
    pub sweep_var: &'static str,
    pub sweep_value: f64,
    /// Link index, `SUM`, or `relay` for power rows.
    pub link: String,
    pub value: f64,
    pub stderr: f64,
}

/// Search interval for the required user power, in dB.
const SEARCH_DB: (f64, f64) = (-60.0, 100.0);

/// Per-link spectral efficiency at `P_S`, relay at `2K P_S`.
fn link_se(kind: BeamformerKind, spec: &ExperimentSpec, cfg: &SystemConfig, ps: f64) -> Result<Vec<f64>> {
    let m = cfg.n_users();
    let r = scsi_rate(
        kind,
        cfg,
        &PowerAllocation::uniform(m, ps, m as f64 * ps),
        spec.convention,
    )?;
    Ok(r.per_link.iter().map(|x| x * r.prefactor).collect())
}

/// Smallest `P_S` in dB at which every link reaches `rate`; infinite when
/// the bound saturates below it.
pub fn required_user_power_db(
    kind: BeamformerKind,
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    rate: f64,
) -> Result<f64> {
    let worst = |db: f64| -> Result<f64> {
        Ok(link_se(kind, spec, cfg, db_to_linear(db))?
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    };
    let (mut lo, mut hi) = SEARCH_DB;
    if worst(hi)? < rate {
        return Ok(f64::INFINITY);
    }
    if worst(lo)? >= rate {
        return Ok(lo);
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if worst(mid)? >= rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

struct PointContext<'a> {
    spec: &'a ExperimentSpec,
    point: GridPoint,
    kind: BeamformerKind,
    scheme: Scheme,
    cfg: SystemConfig,
}

impl PointContext<'_> {
    fn row(&self, metric: Metric, alloc: &PowerAllocation, link: String, value: f64, stderr: f64) -> Row {
        let m = self.cfg.n_users() as f64;
        let (ps, pr) = (alloc.user_powers.iter().sum::<f64>() / m, alloc.relay_power);
        Row {
            preset: self.spec.name.clone(),
            kind: self.kind,
            scheme: self.scheme,
            metric: metric.name(),
            n: self.point.n,
            k: self.point.k,
            p_s: ps,
            p_s_db: linear_to_db(ps),
            p_r: pr,
            p_r_db: linear_to_db(pr),
            user_snr_db: linear_to_db(pr / m),
            p_p: self.cfg.pilot_power,
            p_p_db: linear_to_db(self.cfg.pilot_power),
            pilot_exp: self.point.pilot.exponent,
            sweep_var: self.spec.sweep.var.name(),
            sweep_value: self.point.sweep_value,
            link,
            value,
            stderr,
        }
    }

    fn rate_rows(&self, metric: Metric, alloc: &PowerAllocation, r: &RateReport) -> Vec<Row> {
        let mut rows: Vec<Row> = r
            .per_link
            .iter()
            .zip(&r.per_link_stderr)
            .enumerate()
            .map(|(i, (v, e))| self.row(metric, alloc, i.to_string(), v * r.prefactor, e * r.prefactor))
            .collect();
        rows.push(self.row(metric, alloc, "SUM".into(), r.sum_se(), r.sum_se_stderr()));
        rows
    }

    fn allocation(&self) -> Result<PowerAllocation> {
        let m = self.cfg.n_users();
        let level = db_to_linear(self.point.level_db);
        let spec = self.spec;
        Ok(match &spec.power {
            PowerSetup::UserPower { .. } => PowerAllocation::uniform(m, level, m as f64 * level),
            PowerSetup::RelayPower { .. } => PowerAllocation::uniform(m, level / m as f64, level),
            PowerSetup::Budget {
                user_peak_db,
                relay_peak_db,
                relay,
                ..
            } => {
                let budget = PowerBudget {
                    total: level,
                    user_peak: user_peak_db.map_or(level, db_to_linear),
                    relay_peak: relay_peak_db.map_or(level, db_to_linear),
                };
                let mut opa = spec.opa;
                if *relay == RelayPolicy::Half {
                    opa.fixed_relay_power = Some(level / 2.0);
                }
                allocate(self.scheme, self.kind, &self.cfg, &budget, &opa, spec.convention)?.allocation()
            }
            PowerSetup::HalfBudget { .. } => {
                let budget = PowerBudget::total_only(2.0 * level);
                let opa = OpaSettings {
                    fixed_relay_power: Some(level),
                    ..spec.opa
                };
                allocate(self.scheme, self.kind, &self.cfg, &budget, &opa, spec.convention)?.allocation()
            }
            PowerSetup::TargetRate { .. } => unreachable!("target-rate points are solved, not allocated"),
        })
    }

    fn evaluate(&self) -> Result<Vec<Row>> {
        let spec = self.spec;
        if let PowerSetup::TargetRate { rate } = spec.power {
            let db = required_user_power_db(self.kind, spec, &self.cfg, rate)?;
            let m = self.cfg.n_users();
            let ps = db_to_linear(db);
            let alloc = PowerAllocation::uniform(m, ps, m as f64 * ps);
            return Ok(vec![self.row(Metric::RequiredPs, &alloc, "SUM".into(), db, 0.0)]);
        }
        let alloc = self.allocation()?;
        let mut rows = Vec::new();
        for &metric in &spec.metrics {
            match metric {
                Metric::Bound => {
                    let r = scsi_rate(self.kind, &self.cfg, &alloc, spec.convention)?;
                    rows.extend(self.rate_rows(metric, &alloc, &r));
                }
                Metric::Mc => {
                    let settings = McSettings {
                        trials: spec.trials,
                        seed: spec.seed,
                        normalization: spec.normalization,
                        estimation: spec.estimation,
                    };
                    let r = monte_carlo_rate(self.kind, &self.cfg, &alloc, &settings)?;
                    rows.extend(self.rate_rows(metric, &alloc, &r));
                }
                Metric::Power => {
                    for (i, p) in alloc.user_powers.iter().enumerate() {
                        rows.push(self.row(metric, &alloc, i.to_string(), *p, 0.0));
                    }
                    rows.push(self.row(metric, &alloc, "relay".into(), alloc.relay_power, 0.0));
                }
                Metric::RequiredPs => unreachable!("validated against the power setup"),
            }
        }
        Ok(rows)
    }
}

/// Evaluates every grid point, beamformer and scheme. Rows come back in
/// grid order regardless of how the work was scheduled.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for point in spec.grid()? {
        for &kind in &spec.kinds {
            for &scheme in &spec.schemes {
                jobs.push((point, kind, scheme));
            }
        }
    }
    let parts: Vec<Result<Vec<Row>>> = jobs
        .par_iter()
        .map(|&(point, kind, scheme)| {
            let cfg = point.config(spec, kind)?;
            PointContext {
                spec,
                point,
                kind,
                scheme,
                cfg,
            }
            .evaluate()
            .with_context(|| {
                format!(
                    "{kind}/{scheme} at N={} K={} {}={}",
                    point.n,
                    point.k,
                    spec.sweep.var.name(),
                    point.sweep_value
                )
            })
        })
        .collect();
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}
