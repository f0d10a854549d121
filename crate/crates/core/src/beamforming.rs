//! Relay beamformers `F = alpha * S^* T S^H`, with `S = hat G` for MRC/MRT
//! and `S = hat G (hat G^H hat G)^{-1}` for ZFR/ZFT.
//!
//! The beamformer is kept in factored form. Every link gain and power the
//! simulator needs is a `2K x 2K` computation on `S^H G`, `S^H S` and
//! `S^H hat G`; the `N x N` matrix is only formed on request for `N <= 512`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, SVD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{cn, ChannelSample};
use crate::error::{Error, Result};
use crate::moments::{InverseWishart, WishartConvention};
use crate::system::{partner, EstimationStats, PowerAllocation, SystemConfig};
use crate::{CMatrix, C64};

/// Largest `cond(hat G^H hat G)` accepted for ZF.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Largest antenna count for which [`RelayBeamformer::dense`] materializes `F`.
pub const MAX_DENSE_ANTENNAS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamformerKind {
    /// Maximum-ratio combining / transmission.
    Mrc,
    /// Zero-forcing reception / transmission.
    Zf,
}

impl BeamformerKind {
    pub const ALL: [BeamformerKind; 2] = [BeamformerKind::Mrc, BeamformerKind::Zf];
}

impl fmt::Display for BeamformerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BeamformerKind::Mrc => "mrc",
            BeamformerKind::Zf => "zf",
        })
    }
}

impl FromStr for BeamformerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrc" => Ok(BeamformerKind::Mrc),
            "zf" => Ok(BeamformerKind::Zf),
            _ => Err(Error::InvalidConfig(format!("unknown beamformer '{s}'"))),
        }
    }
}

/// How the per-realization amplification factor is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Relay power averaged over symbols and noise for the given channel.
    #[default]
    ExpectedPower,
    /// Relay power of one drawn symbol vector and noise vector.
    SamplePath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayBeamformer {
    pub kind: BeamformerKind,
    /// `S`, `N x 2K`.
    pub steering: CMatrix,
    /// `S^H S`.
    pub gram: CMatrix,
    /// `S^H hat G`.
    pub estimate_proj: CMatrix,
    pub alpha: f64,
    /// `cond(hat G^H hat G)` for ZF.
    pub condition: Option<f64>,
}

/// Block-diagonal pair swap `T`.
pub fn swap_matrix(n_users: usize) -> CMatrix {
    CMatrix::from_fn(n_users, n_users, |i, j| {
        if j == partner(i) {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Beamformer with `alpha = 1`.
pub fn build_unnormalized(kind: BeamformerKind, estimate: &CMatrix) -> Result<RelayBeamformer> {
    match kind {
        BeamformerKind::Mrc => {
            let gram = estimate.ad_mul(estimate);
            Ok(RelayBeamformer {
                kind,
                steering: estimate.clone(),
                estimate_proj: gram.clone(),
                gram,
                alpha: 1.0,
                condition: None,
            })
        }
        BeamformerKind::Zf => {
            let (n, users) = estimate.shape();
            if n < users {
                return Err(Error::NotApplicable(format!(
                    "ZF needs at least as many antennas as users (N = {n}, 2K = {users})"
                )));
            }
            let qr = estimate.clone().qr();
            let (q, r) = (qr.q(), qr.r());
            let sv = SVD::new(r.clone(), false, false).singular_values;
            let smax = sv.max();
            let smin = sv.min();
            let condition = if smin > 0.0 {
                (smax / smin).powi(2)
            } else {
                f64::INFINITY
            };
            if condition.is_nan() || condition > MAX_GRAM_CONDITION {
                return Err(Error::IllConditioned(condition));
            }
            // S = Q R^{-H}, so S^H S = R^{-1} R^{-H} = (hat G^H hat G)^{-1}.
            let r_inv_h = r
                .adjoint()
                .solve_lower_triangular(&CMatrix::identity(users, users))
                .ok_or(Error::IllConditioned(condition))?;
            let steering = &q * &r_inv_h;
            Ok(RelayBeamformer {
                kind,
                gram: r_inv_h.ad_mul(&r_inv_h),
                estimate_proj: r_inv_h.ad_mul(&r),
                steering,
                alpha: 1.0,
                condition: Some(condition),
            })
        }
    }
}

impl RelayBeamformer {
    pub fn n_antennas(&self) -> usize {
        self.steering.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.steering.ncols()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// `S^H m`.
    pub fn project(&self, m: &CMatrix) -> CMatrix {
        self.steering.ad_mul(m)
    }

    /// The `N x N` matrix `F`, or `None` above [`MAX_DENSE_ANTENNAS`].
    pub fn dense(&self) -> Option<CMatrix> {
        if self.n_antennas() > MAX_DENSE_ANTENNAS {
            return None;
        }
        let t = swap_matrix(self.n_users());
        Some(self.steering.conjugate() * t * self.steering.adjoint() * C64::from(self.alpha))
    }

    /// `x_a^T F y_b` where `proj_x = S^H X` and `proj_y = S^H Y`.
    #[inline]
    pub fn bilinear(&self, proj_x: &CMatrix, a: usize, proj_y: &CMatrix, b: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..proj_x.nrows() {
            acc += proj_x[(c, a)] * proj_y[(partner(c), b)];
        }
        acc * self.alpha
    }

    /// `||x_a^T F||^2` where `proj = S^H X`.
    pub fn row_norm_sq(&self, proj: &CMatrix, a: usize) -> f64 {
        let m = proj.nrows();
        let u: Vec<C64> = (0..m).map(|c| proj[(partner(c), a)]).collect();
        self.alpha * self.alpha * quad_form(&self.gram, &u, false)
    }

    /// `||F r||^2` where `proj_r = S^H r`.
    pub fn forwarded_power(&self, proj_r: &DVector<C64>) -> f64 {
        let w: Vec<C64> = (0..proj_r.len()).map(|c| proj_r[partner(c)]).collect();
        self.alpha * self.alpha * quad_form(&self.gram, &w, true)
    }

    /// `||F||_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        let l = &self.gram;
        let m = l.nrows();
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                acc += (l[(partner(a), partner(b))] * l[(a, b)]).re;
            }
        }
        self.alpha * self.alpha * acc
    }

    /// `Tr{F (G P G^H + noise I) F^H}` for the channel with `proj = S^H G`.
    pub fn expected_relay_power(&self, proj: &CMatrix, powers: &[f64], noise_var: f64) -> f64 {
        let signal: f64 = powers
            .iter()
            .enumerate()
            .map(|(i, &p)| p * self.forwarded_power(&proj.column(i).into_owned()))
            .sum();
        signal + noise_var * self.frobenius_sq()
    }
}

/// `sum_cd conj(w_c) L_cd w_d`, with `L` conjugated when `conj_gram`, and
/// `sum_cd w_c L_cd conj(w_d)` otherwise.
fn quad_form(l: &CMatrix, w: &[C64], conj_gram: bool) -> f64 {
    let m = w.len();
    let mut acc = C64::new(0.0, 0.0);
    for c in 0..m {
        let mut row = C64::new(0.0, 0.0);
        for d in 0..m {
            if conj_gram {
                row += l[(c, d)].conj() * w[d];
            } else {
                row += l[(c, d)] * w[d].conj();
            }
        }
        acc += if conj_gram { w[c].conj() * row } else { w[c] * row };
    }
    acc.re
}

/// Scales `bf` so that the relay meets `P_R` on average over symbols and
/// noise for this channel realization.
pub fn normalize_instantaneous(
    bf: RelayBeamformer,
    sample: &ChannelSample,
    alloc: &PowerAllocation,
    noise_var: f64,
) -> RelayBeamformer {
    let unit = bf.clone().with_alpha(1.0);
    let proj = unit.project(&sample.channel);
    let power = unit.expected_relay_power(&proj, &alloc.user_powers, noise_var);
    bf.with_alpha((alloc.relay_power / power).sqrt())
}

/// Scales `bf` so that the relay meets `P_R` for one drawn symbol vector and
/// relay noise vector.
pub fn normalize_sample_path<R: Rng + ?Sized>(
    bf: RelayBeamformer,
    sample: &ChannelSample,
    alloc: &PowerAllocation,
    noise_var: f64,
    rng: &mut R,
) -> RelayBeamformer {
    let n = sample.channel.nrows();
    let mut r = DVector::<C64>::zeros(n);
    for (i, &p) in alloc.user_powers.iter().enumerate() {
        let x = cn(rng, 1.0) * p.sqrt();
        r.axpy(x, &sample.channel.column(i), C64::new(1.0, 0.0));
    }
    for z in r.iter_mut() {
        *z += cn(rng, noise_var);
    }
    let unit = bf.clone().with_alpha(1.0);
    let proj_r = unit.steering.ad_mul(&r);
    let power = unit.forwarded_power(&proj_r);
    bf.with_alpha((alloc.relay_power / power).sqrt())
}

/// Statistical MRC/MRT amplification factor: `alpha_1^2 = P_R / E||F_0 r||^2`.
pub fn alpha1_statistical(cfg: &SystemConfig, stats: &EstimationStats, alloc: &PowerAllocation) -> f64 {
    alloc.relay_power.sqrt() / mrc_forwarded_power(cfg, stats, &alloc.user_powers).sqrt()
}

/// `E||hat G^* T hat G^H r||^2` for MRC/MRT.
pub fn mrc_forwarded_power(cfg: &SystemConfig, stats: &EstimationStats, powers: &[f64]) -> f64 {
    let n = cfg.n_antennas as f64;
    let phi = stats.pair_product_sum();
    let sh = &stats.est_var;
    let per_user: f64 = (0..powers.len())
        .map(|i| powers[i] * (2.0 * phi * cfg.large_scale[i] + (n + 1.0) * sh[i] * sh[i] * sh[partner(i)]))
        .sum();
    n * (n + 1.0) * (per_user + 2.0 * cfg.noise_var * phi)
}

/// Statistical ZFR/ZFT amplification factor.
pub fn alpha2_statistical(
    cfg: &SystemConfig,
    stats: &EstimationStats,
    alloc: &PowerAllocation,
    convention: WishartConvention,
) -> Result<f64> {
    let power = zf_forwarded_power(cfg, stats, &alloc.user_powers, convention)?;
    Ok((alloc.relay_power / power).sqrt())
}

/// `E||S^* T S^H r||^2` for ZFR/ZFT.
pub fn zf_forwarded_power(
    cfg: &SystemConfig,
    stats: &EstimationStats,
    powers: &[f64],
    convention: WishartConvention,
) -> Result<f64> {
    let w = InverseWishart::new(cfg.n_antennas, cfg.n_users(), convention)?;
    let signal: f64 = (0..powers.len())
        .map(|i| powers[partner(i)] * w.diag_mean(stats.est_var[i]))
        .sum();
    let leak: f64 = powers.iter().zip(&stats.err_var).map(|(p, e)| p * e).sum();
    Ok(signal + w.eta(&stats.est_var) * (leak + cfg.noise_var))
}
