//! Power allocation: equal split, the successive-GP optimizer and the
//! asymptotic closed forms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformerKind;
use crate::error::{Error, Result};
use crate::gp::{GpProblem, GpSettings, Monomial, Posynomial};
use crate::moments::WishartConvention;
use crate::rates::{bound_coefficients, BoundCoefficients};
use crate::system::{partner, spectral_efficiency_prefactor, PowerAllocation, PowerBudget, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Equal power: `P_R = P / 2`, users share the rest evenly.
    Epa,
    /// Optimized by successive geometric programming.
    Opa,
    /// Closed-form large-array allocation.
    Aopa,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Epa => "epa",
            Scheme::Opa => "opa",
            Scheme::Aopa => "aopa",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epa" => Ok(Scheme::Epa),
            "opa" => Ok(Scheme::Opa),
            "aopa" => Ok(Scheme::Aopa),
            _ => Err(Error::InvalidConfig(format!("unknown scheme '{s}'"))),
        }
    }
}

/// An allocation with the sum spectral efficiency of the closed-form bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub scheme: Scheme,
    pub powers: Vec<f64>,
    pub relay_power: f64,
    pub sum_se: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl AllocationResult {
    pub fn allocation(&self) -> PowerAllocation {
        PowerAllocation::new(self.powers.clone(), self.relay_power)
    }
}

/// Sum spectral efficiency of `alloc` under the closed-form bound.
pub fn sum_se(coeffs: &BoundCoefficients, prefactor: f64, alloc: &PowerAllocation) -> f64 {
    prefactor * coeffs.rates(alloc).iter().sum::<f64>()
}

/// Equal power allocation for `n_users` users and total power `total`.
pub fn epa(n_users: usize, total: f64) -> PowerAllocation {
    PowerAllocation::uniform(n_users, total / (2.0 * n_users as f64), total / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpaSettings {
    /// Relative SINR change below which the iteration stops.
    pub epsilon: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Trust-region factor on the SINR variables, `> 1`.
    pub trust: f64,
    /// Holds the relay at this power instead of optimizing it.
    pub fixed_relay_power: Option<f64>,
}

impl Default for OpaSettings {
    fn default() -> Self {
        OpaSettings {
            epsilon: 0.01,
            max_iter: 10,
            trust: 1.1,
            fixed_relay_power: None,
        }
    }
}

/// SINRs and sum spectral efficiency after every iteration, the starting
/// point first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpaTrace {
    pub sinr: Vec<Vec<f64>>,
    pub sum_se: Vec<f64>,
}

/// Variable layout of the condensed program: user powers, then the relay
/// power when it is free, then one SINR variable per user.
struct Layout {
    users: usize,
    relay: Option<usize>,
    chi0: usize,
}

impl Layout {
    fn new(users: usize, relay_free: bool) -> Self {
        let relay = relay_free.then_some(users);
        Layout {
            users,
            relay,
            chi0: users + usize::from(relay_free),
        }
    }

    fn n_vars(&self) -> usize {
        self.chi0 + self.users
    }

    fn chi(&self, r: usize) -> usize {
        self.chi0 + r
    }

    fn point(&self, alloc: &PowerAllocation, chi: &[f64]) -> Vec<f64> {
        let mut x = alloc.user_powers.clone();
        if self.relay.is_some() {
            x.push(alloc.relay_power);
        }
        x.extend_from_slice(chi);
        x
    }
}

/// Condensed program around the SINR point `chi_m`: maximize
/// `prod_r kappa_r chi_r^eta_r` subject to `chi_r <= SINR_r(p, P_R)`, the
/// budget, the peak limits and the trust region.
fn condensed_program(
    c: &BoundCoefficients,
    budget: &PowerBudget,
    lay: &Layout,
    chi_m: &[f64],
    trust: f64,
    fixed_relay: Option<f64>,
) -> Result<GpProblem> {
    let m = lay.users;
    let mut objective = Monomial::constant(1.0);
    for r in 0..m {
        let eta = chi_m[r] / (1.0 + chi_m[r]);
        let kappa = chi_m[r].powf(-eta) * (1.0 + chi_m[r]);
        objective = objective.times(&Monomial::new(1.0 / kappa, &[(lay.chi(r), -eta)]));
    }
    // 1 / P_R as a monomial, constant when the relay power is fixed.
    let inv_relay = match (lay.relay, fixed_relay) {
        (Some(j), _) => Monomial::new(1.0, &[(j, -1.0)]),
        (None, Some(pr)) => Monomial::constant(1.0 / pr),
        (None, None) => unreachable!("relay power is either free or fixed"),
    };
    let mut constraints = Vec::new();
    for r in 0..m {
        let scale = Monomial::new(1.0 / c.numerator[r], &[(lay.chi(r), 1.0), (partner(r), -1.0)]);
        let mut den = Posynomial::default();
        let mut add = |coef: f64, mono: Monomial, what: &str| -> Result<()> {
            if coef < 0.0 {
                return Err(Error::NotApplicable(format!(
                    "negative {what} coefficient {coef:.3e} for receiver {r}"
                )));
            }
            if coef > 0.0 {
                den.push(mono.times(&Monomial::constant(coef)));
            }
            Ok(())
        };
        for i in 0..m {
            let lin = if i == r { c.self_coefficient(r) } else { c.linear[r][i] };
            add(lin, Monomial::var(i), "linear")?;
            add(c.relay_linear[r][i], Monomial::var(i).times(&inv_relay), "relay")?;
        }
        add(c.constant[r], Monomial::constant(1.0), "constant")?;
        add(c.relay_constant[r], inv_relay.clone(), "relay constant")?;
        constraints.push(den.times(&scale));
    }
    let user_budget = match fixed_relay {
        Some(pr) => budget.total - pr,
        None => budget.total,
    };
    if user_budget <= 0.0 {
        return Err(Error::InvalidAllocation("relay power exhausts the budget".into()));
    }
    let mut total = Posynomial::new((0..m).map(|i| Monomial::new(1.0 / user_budget, &[(i, 1.0)])).collect());
    if let Some(j) = lay.relay {
        total.push(Monomial::new(1.0 / budget.total, &[(j, 1.0)]));
        constraints.push(Monomial::new(1.0 / budget.relay_peak, &[(j, 1.0)]).into());
    }
    constraints.push(total);
    for i in 0..m {
        constraints.push(Monomial::new(1.0 / budget.user_peak, &[(i, 1.0)]).into());
    }
    for r in 0..m {
        constraints.push(Monomial::new(1.0 / (trust * chi_m[r]), &[(lay.chi(r), 1.0)]).into());
        constraints.push(Monomial::new(chi_m[r] / trust, &[(lay.chi(r), -1.0)]).into());
    }
    Ok(GpProblem::new(lay.n_vars(), objective.into(), constraints))
}

/// Feasible starting point: equal split, clipped to the peak limits.
fn opa_start(m: usize, budget: &PowerBudget, fixed_relay: Option<f64>) -> PowerAllocation {
    let relay = fixed_relay.unwrap_or((budget.total / 2.0).min(budget.relay_peak));
    let user = ((budget.total - relay) / m as f64).min(budget.user_peak);
    PowerAllocation::uniform(m, user, relay)
}

/// Maximizes the closed-form sum spectral efficiency by successive
/// geometric-program condensation, starting from equal power.
pub fn opa(
    c: &BoundCoefficients,
    budget: &PowerBudget,
    prefactor: f64,
    settings: &OpaSettings,
) -> Result<(AllocationResult, OpaTrace)> {
    if settings.trust.is_nan() || settings.trust <= 1.0 {
        return Err(Error::InvalidConfig("trust-region factor must exceed 1".into()));
    }
    let m = c.n_users();
    let lay = Layout::new(m, settings.fixed_relay_power.is_none());
    let mut alloc = opa_start(m, budget, settings.fixed_relay_power);
    let mut chi = c.sinr(&alloc);
    let mut trace = OpaTrace::default();
    trace.sinr.push(chi.clone());
    trace.sum_se.push(sum_se(c, prefactor, &alloc));
    let gp = GpSettings::default();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let problem = condensed_program(c, budget, &lay, &chi, settings.trust, settings.fixed_relay_power)?;
        let hint = lay.point(&alloc, &chi);
        let sol = problem.solve(Some(&hint), &gp)?;
        let next = PowerAllocation::new(
            sol.x[..m].to_vec(),
            lay.relay
                .map_or_else(|| settings.fixed_relay_power.unwrap_or_default(), |j| sol.x[j]),
        );
        let next_chi = c.sinr(&next);
        let se = sum_se(c, prefactor, &next);
        // Each condensed optimum is at least as good as the point it was
        // built around; keep the previous point if rounding says otherwise.
        if se < *trace.sum_se.last().unwrap() {
            converged = true;
            break;
        }
        let change = next_chi
            .iter()
            .zip(&chi)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        alloc = next;
        chi = next_chi;
        trace.sinr.push(chi.clone());
        trace.sum_se.push(se);
        if change < settings.epsilon {
            converged = true;
            break;
        }
    }
    let result = AllocationResult {
        scheme: Scheme::Opa,
        sum_se: *trace.sum_se.last().unwrap(),
        powers: alloc.user_powers,
        relay_power: alloc.relay_power,
        iterations,
        converged,
    };
    Ok((result, trace))
}

/// Large-array MRC/MRT allocation `p_i = (P - P_R) / (sigma_i^2 sum_k 1/sigma_k^2)`.
///
/// Only defined when every pair has the same end-to-end fading product
/// `sigma_i^2 sigma_i'^2`.
pub fn aopa_mrc(large_scale: &[f64], total: f64, relay_power: f64) -> Result<PowerAllocation> {
    let products: Vec<f64> = large_scale.chunks(2).map(|p| p[0] * p[1]).collect();
    let c0 = products[0];
    if products.iter().any(|c| ((c - c0) / c0).abs() > 1e-9) {
        return Err(Error::NotApplicable(
            "closed-form MRC allocation needs equal fading products in every pair".into(),
        ));
    }
    let inv_sum: f64 = large_scale.iter().map(|s| 1.0 / s).sum();
    let users = total - relay_power;
    Ok(PowerAllocation::new(
        large_scale.iter().map(|s| users / (s * inv_sum)).collect(),
        relay_power,
    ))
}

/// Large-array ZFR/ZFT water-filling
/// `p_i = [1/lambda - noise / (q sigma_i^2)]^+` with `sum p_i = P - P_R`.
pub fn aopa_zf(
    cfg: &SystemConfig,
    total: f64,
    relay_power: f64,
    convention: WishartConvention,
) -> Result<PowerAllocation> {
    let m = cfg.n_users();
    if cfg.n_antennas <= m + 1 {
        return Err(Error::NotApplicable("ZF water-filling needs N > 2K + 1".into()));
    }
    let q = match convention {
        WishartConvention::Complex => (cfg.n_antennas - m) as f64,
        WishartConvention::Printed => (cfg.n_antennas - m - 1) as f64,
    };
    let floor: Vec<f64> = cfg.large_scale.iter().map(|s| cfg.noise_var / (q * s)).collect();
    let users = total - relay_power;
    let mut active = vec![true; m];
    loop {
        let n_active = active.iter().filter(|a| **a).count() as f64;
        let level = (users + (0..m).filter(|&i| active[i]).map(|i| floor[i]).sum::<f64>()) / n_active;
        let drop: Vec<usize> = (0..m).filter(|&i| active[i] && floor[i] >= level).collect();
        if drop.is_empty() {
            let p = (0..m).map(|i| if active[i] { level - floor[i] } else { 0.0 }).collect();
            return Ok(PowerAllocation::new(p, relay_power));
        }
        for i in drop {
            active[i] = false;
        }
    }
}

/// Runs `scheme` for beamformer `kind` with the relay at `P / 2` unless the
/// optimizer frees it.
pub fn allocate(
    scheme: Scheme,
    kind: BeamformerKind,
    cfg: &SystemConfig,
    budget: &PowerBudget,
    settings: &OpaSettings,
    convention: WishartConvention,
) -> Result<AllocationResult> {
    let c = bound_coefficients(kind, cfg, convention)?;
    let pre = spectral_efficiency_prefactor(cfg);
    let m = cfg.n_users();
    let finish = |alloc: PowerAllocation| AllocationResult {
        scheme,
        sum_se: sum_se(&c, pre, &alloc),
        powers: alloc.user_powers,
        relay_power: alloc.relay_power,
        iterations: 0,
        converged: true,
    };
    match scheme {
        Scheme::Epa => Ok(finish(epa(m, budget.total))),
        Scheme::Opa => opa(&c, budget, pre, settings).map(|(r, _)| r),
        Scheme::Aopa => {
            let relay = settings.fixed_relay_power.unwrap_or(budget.total / 2.0);
            let alloc = match kind {
                BeamformerKind::Mrc => aopa_mrc(&cfg.large_scale, budget.total, relay)?,
                BeamformerKind::Zf => aopa_zf(cfg, budget.total, relay, convention)?,
            };
            Ok(finish(alloc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db_to_linear;
    use proptest::prelude::*;

    fn pair_cfg(n: usize) -> SystemConfig {
        let mut c = SystemConfig::new(n, vec![1.0, 0.4], 10.0).unwrap();
        c.pilot_len = 2;
        c
    }

    #[test]
    fn epa_splits_half_to_the_relay() {
        let a = epa(20, 200.0);
        assert_eq!(a.relay_power, 100.0);
        assert!(a.user_powers.iter().all(|&p| p == 5.0));
    }

    #[test]
    fn opa_improves_on_equal_power_monotonically() {
        let cfg = pair_cfg(32);
        let budget = PowerBudget {
            total: db_to_linear(23.0),
            user_peak: 10.0,
            relay_peak: db_to_linear(23.0),
        };
        for kind in BeamformerKind::ALL {
            let c = bound_coefficients(kind, &cfg, WishartConvention::Complex).unwrap();
            let pre = spectral_efficiency_prefactor(&cfg);
            let (res, trace) = opa(&c, &budget, pre, &OpaSettings::default()).unwrap();
            for w in trace.sum_se.windows(2) {
                assert!(w[1] >= w[0] - 1e-12);
            }
            // Equal power exceeds the user peak here, so compare with the clipped start.
            assert!(res.sum_se > sum_se(&c, pre, &opa_start(2, &budget, None)));
            assert!(res.allocation().satisfies(&budget, 1e-9));
        }
    }

    #[test]
    fn fixed_relay_power_is_respected() {
        let cfg = pair_cfg(64);
        let c = bound_coefficients(BeamformerKind::Mrc, &cfg, WishartConvention::Complex).unwrap();
        let budget = PowerBudget::total_only(20.0);
        let set = OpaSettings {
            fixed_relay_power: Some(10.0),
            ..Default::default()
        };
        let (res, _) = opa(&c, &budget, 1.0, &set).unwrap();
        assert_eq!(res.relay_power, 10.0);
        assert!(res.powers.iter().sum::<f64>() <= 10.0 * (1.0 + 1e-9));
    }

    #[test]
    fn mrc_closed_form_is_inverse_to_fading() {
        let a = aopa_mrc(&[0.5, 2.0, 0.25, 4.0], 20.0, 10.0).unwrap();
        let inv: f64 = 2.0 + 0.5 + 4.0 + 0.25;
        assert!((a.user_powers[0] - 10.0 / (0.5 * inv)).abs() < 1e-12);
        assert!((a.user_powers.iter().sum::<f64>() - 10.0).abs() < 1e-12);
        assert!(aopa_mrc(&[0.5, 2.0, 0.5, 1.0], 20.0, 10.0).is_err());
    }

    #[test]
    fn zf_water_filling_is_equal_for_equal_fading() {
        let cfg = SystemConfig::uniform(64, 3, 0.7, 10.0).unwrap();
        let a = aopa_zf(&cfg, 30.0, 15.0, WishartConvention::Complex).unwrap();
        assert!(a.user_powers.iter().all(|&p| p == a.user_powers[0]));
        assert!((a.user_powers[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zf_water_filling_switches_off_weak_users() {
        let mut cfg = SystemConfig::new(12, vec![1.0, 1.0, 1e-4, 1.0], 10.0).unwrap();
        cfg.pilot_len = 4;
        let a = aopa_zf(&cfg, 2.0, 1.0, WishartConvention::Complex).unwrap();
        assert_eq!(a.user_powers[2], 0.0);
        assert!((a.user_powers.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn water_filling_spends_the_budget(s in prop::collection::vec(0.01f64..5.0, 4), n in 8usize..200, pu in 0.01f64..100.0) {
            let mut cfg = SystemConfig::new(n, s, 1.0).unwrap();
            cfg.pilot_len = 4;
            let a = aopa_zf(&cfg, 2.0 * pu, pu, WishartConvention::Complex).unwrap();
            prop_assert!(a.user_powers.iter().all(|&p| p >= 0.0));
            prop_assert!((a.user_powers.iter().sum::<f64>() - pu).abs() < 1e-9 * pu);
        }

        #[test]
        fn opa_never_loses_to_its_start(s in prop::collection::vec(0.05f64..2.0, 4), pp in 0.1f64..100.0, total in 1.0f64..1000.0) {
            let mut cfg = SystemConfig::new(32, s, pp).unwrap();
            cfg.pilot_len = 4;
            let budget = PowerBudget { total, user_peak: total / 2.0, relay_peak: total };
            for kind in BeamformerKind::ALL {
                let c = bound_coefficients(kind, &cfg, WishartConvention::Complex).unwrap();
                let start = opa_start(4, &budget, None);
                let (res, _) = opa(&c, &budget, 1.0, &OpaSettings::default()).unwrap();
                prop_assert!(res.sum_se >= sum_se(&c, 1.0, &start) - 1e-12);
                prop_assert!(res.allocation().satisfies(&budget, 1e-9));
            }
        }
    }
}
