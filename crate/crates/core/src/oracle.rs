//! Sampling oracle for the closed-form moments used by the rate bounds.
//!
//! Each check compares an analytic value with a Monte-Carlo mean and passes
//! when the two agree within four standard errors.

use nalgebra::Cholesky;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{swap_matrix, BeamformerKind};
use crate::channel::{cn_matrix, trial_rng};
use crate::error::Result;
use crate::moments::{gaussian, InverseWishart, WishartConvention};
use crate::rates::{bound_coefficients, unnormalized_relay_power};
use crate::system::{estimation_stats, partner, PowerAllocation, SystemConfig};
use crate::{CMatrix, C64};

/// Agreement threshold in standard errors.
pub const Z_LIMIT: f64 = 4.0;
/// Fewer samples than this make a check inconclusive.
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    pub analytic: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
    pub samples: usize,
    pub status: CheckStatus,
}

impl MomentCheck {
    pub fn new(name: String, analytic: f64, estimate: f64, stderr: f64, samples: usize) -> Self {
        let diff = (estimate - analytic).abs();
        let z = diff / stderr;
        let status = if samples < MIN_SAMPLES || !stderr.is_finite() || !estimate.is_finite() {
            CheckStatus::Inconclusive
        } else if diff <= Z_LIMIT * stderr + 1e-12 * analytic.abs() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        MomentCheck {
            name,
            analytic,
            estimate,
            stderr,
            z,
            samples,
            status,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Mean and standard error of every component of `draw` over `samples`
/// independent draws, one random stream per draw.
pub fn sample_means<F>(samples: usize, seed: u64, dim: usize, draw: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    const CHUNK: usize = 256;
    // Welford accumulators per chunk, merged in chunk order.
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut n = 0.0;
            let mut mean = vec![0.0; dim];
            let mut m2 = vec![0.0; dim];
            for t in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let v = draw(&mut trial_rng(seed, t as u64));
                n += 1.0;
                for j in 0..dim {
                    let d = v[j] - mean[j];
                    mean[j] += d / n;
                    m2[j] += d * (v[j] - mean[j]);
                }
            }
            (n, mean, m2)
        })
        .collect();
    let mut n = 0.0;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for (nb, mb, m2b) in parts {
        let tot = n + nb;
        for j in 0..dim {
            let d = mb[j] - mean[j];
            mean[j] += d * nb / tot;
            m2[j] += m2b[j] + d * d * n * nb / tot;
        }
        n = tot;
    }
    let stderr = m2.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect();
    (mean, stderr)
}

fn checks(
    prefix: &str,
    names: &[String],
    analytic: &[f64],
    samples: usize,
    est: (Vec<f64>, Vec<f64>),
) -> Vec<MomentCheck> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| MomentCheck::new(format!("{prefix}/{n}"), analytic[j], est.0[j], est.1[j], samples))
        .collect()
}

/// Second and fourth moments of independent `a ~ CN(0, s_a I_N)` and
/// `b ~ CN(0, s_b I_N)`.
pub fn check_gaussian_fourth_moments(n: usize, s_a: f64, s_b: f64, samples: usize, seed: u64) -> Vec<MomentCheck> {
    let est = sample_means(samples, seed, 4, |rng| {
        let ab = cn_matrix(rng, n, &[s_a, s_b]);
        let na = ab.column(0).norm_squared();
        let inner = ab.column(0).dotc(&ab.column(1)).norm_sqr();
        vec![inner, na * na, inner * inner, na * inner]
    });
    let names = ["inner_second", "norm_fourth", "inner_fourth", "norm_inner"].map(String::from);
    let analytic = [
        gaussian::inner_second(n, s_a, s_b),
        gaussian::norm_fourth(n, s_a),
        gaussian::inner_fourth(n, s_a, s_b),
        gaussian::norm_inner(n, s_a, s_b),
    ];
    checks(
        &format!("gaussian/N={n}/sa={s_a}/sb={s_b}"),
        &names,
        &analytic,
        samples,
        est,
    )
}

/// `(G^H G)^{-1}` through a Cholesky factor of the Gram matrix.
fn gram_inverse(g: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(g.ad_mul(g)).map(|c| c.inverse())
}

/// Moments of `Omega = (hat G^H hat G)^{-1}` with column variances `est_var`.
pub fn check_inverse_wishart(
    n: usize,
    est_var: &[f64],
    samples: usize,
    seed: u64,
    convention: WishartConvention,
) -> Result<Vec<MomentCheck>> {
    let m = est_var.len();
    let w = InverseWishart::new(n, m, convention)?;
    let mut names = Vec::new();
    let mut analytic = Vec::new();
    for (j, &s) in est_var.iter().enumerate() {
        names.push(format!("diag_mean[{j}]"));
        analytic.push(w.diag_mean(s));
    }
    names.push("diag_second[0]".into());
    analytic.push(w.diag_second(est_var[0]));
    names.push("diag_cross[0,1]".into());
    analytic.push(w.diag_cross(est_var[0], est_var[1]));
    names.push("offdiag_second[0,1]".into());
    analytic.push(w.offdiag_second(est_var[0], est_var[1]));
    if m > 2 {
        names.push("offdiag_second[0,2]".into());
        analytic.push(w.offdiag_second(est_var[0], est_var[2]));
    }
    names.push("eta".into());
    analytic.push(w.eta(est_var));
    let t = swap_matrix(m);
    let est = sample_means(samples, seed, names.len(), |rng| {
        let g = cn_matrix(rng, n, est_var);
        let omega = gram_inverse(&g).expect("Gram matrix of a tall Gaussian matrix is positive definite");
        let mut v: Vec<f64> = (0..m).map(|j| omega[(j, j)].re).collect();
        v.push(omega[(0, 0)].re.powi(2));
        v.push(omega[(0, 0)].re * omega[(1, 1)].re);
        v.push(omega[(0, 1)].norm_sqr());
        if m > 2 {
            v.push(omega[(0, 2)].norm_sqr());
        }
        v.push((omega.conjugate() * &t * &omega * &t).trace().re);
        v
    });
    Ok(checks(
        &format!("inverse_wishart/N={n}/2K={m}"),
        &names,
        &analytic,
        samples,
        est,
    ))
}

/// Link statistics of the unnormalized beamformer for receivers 0 and 1,
/// and the expected relay power, against the closed forms behind the rate
/// bounds. The beamformer is built densely here, independently of the
/// factored evaluation used by the simulator.
pub fn check_link_moments(
    kind: BeamformerKind,
    cfg: &SystemConfig,
    alloc: &PowerAllocation,
    samples: usize,
    seed: u64,
    convention: WishartConvention,
) -> Result<Vec<MomentCheck>> {
    let coeffs = bound_coefficients(kind, cfg, convention)?;
    let stats = estimation_stats(cfg);
    let m = cfg.n_users();
    let receivers = [0usize, 1];
    let mut names = Vec::new();
    let mut analytic = Vec::new();
    for &r in &receivers {
        let lm = coeffs.link_moments(r);
        names.extend([
            format!("r{r}/mean"),
            format!("r{r}/variance"),
            format!("r{r}/self_interference"),
        ]);
        analytic.extend([lm.mean, lm.variance, lm.self_interference]);
        for i in (0..m).filter(|&i| i != r && i != partner(r)) {
            names.push(format!("r{r}/interference[{i}]"));
            analytic.push(lm.interference[i]);
        }
        names.push(format!("r{r}/noise_gain"));
        analytic.push(lm.noise_gain);
    }
    names.push("relay_power".into());
    analytic.push(unnormalized_relay_power(kind, cfg, &alloc.user_powers, convention)?);
    let t = swap_matrix(m);
    let noise = cfg.noise_var;
    let est = sample_means(samples, seed, names.len(), |rng| {
        let est = cn_matrix(rng, cfg.n_antennas, &stats.est_var);
        let err = cn_matrix(rng, cfg.n_antennas, &stats.err_var);
        let g = &est - &err;
        let s = match kind {
            BeamformerKind::Mrc => est.clone(),
            BeamformerKind::Zf => &est * gram_inverse(&est).expect("full-rank estimate"),
        };
        let f = s.conjugate() * &t * s.adjoint();
        let gf = g.transpose() * &f;
        let gain = &gf * &g;
        let est_gain = est.transpose() * &f * &est;
        let mut v = Vec::new();
        for &r in &receivers {
            let q = partner(r);
            let desired = gain[(r, q)];
            let mean = coeffs.link_moments(r).mean;
            v.push(desired.re);
            v.push((desired - C64::new(mean, 0.0)).norm_sqr());
            v.push((gain[(r, r)] - est_gain[(r, r)]).norm_sqr());
            for i in (0..m).filter(|&i| i != r && i != q) {
                v.push(gain[(r, i)].norm_sqr());
            }
            v.push(gf.row(r).norm_squared());
        }
        let fg = &f * &g;
        let signal: f64 = (0..m).map(|i| alloc.user_powers[i] * fg.column(i).norm_squared()).sum();
        v.push(signal + noise * f.norm_squared());
        v
    });
    let prefix = format!("{kind}/N={}/2K={m}", cfg.n_antennas);
    Ok(checks(&prefix, &names, &analytic, samples, est))
}

/// Parameter grid for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub antennas: Vec<usize>,
    pub pairs: Vec<usize>,
    /// Scales applied to the fading profile.
    pub fading_scales: Vec<f64>,
    pub pilot_power: f64,
}

/// Relative large-scale fading of users 0..4 before scaling.
const PROFILE: [f64; 4] = [1.0, 0.6, 1.4, 0.8];
/// User powers for the link checks.
const POWERS: [f64; 4] = [1.0, 0.5, 2.0, 0.8];

impl OracleGrid {
    /// Two small networks; about forty checks.
    pub fn standard() -> Self {
        OracleGrid {
            antennas: vec![8, 16],
            pairs: vec![1, 2],
            fading_scales: vec![1.0],
            pilot_power: 1.0,
        }
    }

    /// Every combination of `N in {8, 16, 32}`, `K in {1, 2}` and fading
    /// scales `{0.5, 1, 2}`.
    pub fn full() -> Self {
        OracleGrid {
            antennas: vec![8, 16, 32],
            pairs: vec![1, 2],
            fading_scales: vec![0.5, 1.0, 2.0],
            pilot_power: 1.0,
        }
    }
}

/// Runs every applicable check on the grid. ZF checks need `N > 2K + 3`.
pub fn run_suite(
    grid: &OracleGrid,
    samples: usize,
    seed: u64,
    convention: WishartConvention,
) -> Result<Vec<MomentCheck>> {
    let mut out = Vec::new();
    let mut stream = 0u64;
    let mut next_seed = || {
        stream += 1;
        seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    };
    for &scale in &grid.fading_scales {
        for &n in &grid.antennas {
            out.extend(check_gaussian_fourth_moments(
                n,
                scale,
                PROFILE[1] * scale,
                samples,
                next_seed(),
            ));
            for &k in &grid.pairs {
                let m = 2 * k;
                let fading: Vec<f64> = (0..m).map(|i| scale * PROFILE[i % 4]).collect();
                let mut cfg = SystemConfig::new(n, fading, grid.pilot_power)?;
                cfg.pilot_len = m;
                let alloc = PowerAllocation::new(POWERS[..m].to_vec(), 1.0);
                out.extend(check_link_moments(
                    BeamformerKind::Mrc,
                    &cfg,
                    &alloc,
                    samples,
                    next_seed(),
                    convention,
                )?);
                if n > m + 3 {
                    let stats = estimation_stats(&cfg);
                    out.extend(check_inverse_wishart(
                        n,
                        &stats.est_var,
                        samples,
                        next_seed(),
                        convention,
                    )?);
                    out.extend(check_link_moments(
                        BeamformerKind::Zf,
                        &cfg,
                        &alloc,
                        samples,
                        next_seed(),
                        convention,
                    )?);
                }
            }
        }
    }
    for c in &mut out {
        c.name = format!("{}/{}", c.name, convention_tag(convention));
    }
    Ok(out)
}

fn convention_tag(c: WishartConvention) -> &'static str {
    match c {
        WishartConvention::Complex => "complex",
        WishartConvention::Printed => "printed",
    }
}
