//! Achievable rates: Monte-Carlo ergodic rates with per-realization
//! normalization, closed-form lower bounds and their large-array limits.
//!
//! Per-link vectors are indexed by the receiving user `r`; entry `r` is the
//! rate of the link `partner(r) -> r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    build_unnormalized, mrc_forwarded_power, normalize_instantaneous, normalize_sample_path, zf_forwarded_power,
    BeamformerKind, Normalization, RelayBeamformer,
};
use crate::channel::{
    draw_channel, draw_channel_sample, estimate_from_training, pilot_matrix, trial_rng, ChannelSample,
};
use crate::error::Result;
use crate::moments::{InverseWishart, WishartConvention};
use crate::system::{
    estimation_stats, partner, spectral_efficiency_prefactor, EstimationStats, PowerAllocation, SystemConfig,
};

/// Rates of every link plus their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `log2(1 + SINR)` per receiving user, bits/s/Hz.
    pub per_link: Vec<f64>,
    /// Standard error of each entry (zero for closed forms).
    pub per_link_stderr: Vec<f64>,
    /// Sum of `per_link`.
    pub sum_rate: f64,
    pub sum_stderr: f64,
    /// Data fraction `(T - tau - 2) / T`.
    pub prefactor: f64,
    /// Average amplification factor over trials, Monte-Carlo only.
    pub mean_alpha: Option<f64>,
}

impl RateReport {
    fn closed_form(per_link: Vec<f64>, prefactor: f64) -> Self {
        let n = per_link.len();
        RateReport {
            sum_rate: per_link.iter().sum(),
            per_link,
            per_link_stderr: vec![0.0; n],
            sum_stderr: 0.0,
            prefactor,
            mean_alpha: None,
        }
    }

    /// Sum spectral efficiency, `prefactor * sum_rate`.
    pub fn sum_se(&self) -> f64 {
        self.prefactor * self.sum_rate
    }

    pub fn sum_se_stderr(&self) -> f64 {
        self.prefactor * self.sum_stderr
    }
}

/// SINR bound of receiver `r` in the shape shared by both beamformers:
///
/// `a_r p_{r'} / (sum_i (b1_ri + b2_ri / P_R) p_i + c_r p_r + d1_r + d2_r / P_R)`
///
/// with `r' = partner(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCoefficients {
    pub kind: BeamformerKind,
    pub numerator: Vec<f64>,
    pub linear: Vec<Vec<f64>>,
    pub relay_linear: Vec<Vec<f64>>,
    pub self_term: Vec<f64>,
    pub constant: Vec<f64>,
    pub relay_constant: Vec<f64>,
    /// Factor relating the coefficients to moments of the unnormalized
    /// beamformer: `N(N+1)` for MRC, `1` for ZF.
    pub moment_scale: f64,
    pub noise_var: f64,
}

/// Expected link statistics of the unnormalized beamformer (`alpha = 1`)
/// seen by receiver `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMoments {
    /// `E[g_r^T F_0 g_{r'}]`.
    pub mean: f64,
    /// `Var[g_r^T F_0 g_{r'}]`.
    pub variance: f64,
    /// `E|g_r^T F_0 g_r - hat g_r^T F_0 hat g_r|^2`.
    pub self_interference: f64,
    /// `E|g_r^T F_0 g_i|^2` for every user, zero at `r` and `r'`.
    pub interference: Vec<f64>,
    /// `E||g_r^T F_0||^2`.
    pub noise_gain: f64,
}

impl BoundCoefficients {
    pub fn n_users(&self) -> usize {
        self.numerator.len()
    }

    /// Coefficient of `p_r` in the denominator once the self term is merged
    /// into the sum; nonnegative for a valid bound. It vanishes with perfect
    /// MRC estimates, so cancellation residue is flushed to zero.
    pub fn self_coefficient(&self, r: usize) -> f64 {
        let v = self.linear[r][r] + self.self_term[r];
        if v.abs() <= 1e-12 * self.linear[r][r].abs() {
            0.0
        } else {
            v
        }
    }

    pub fn denominator(&self, r: usize, alloc: &PowerAllocation) -> f64 {
        let inv_pr = 1.0 / alloc.relay_power;
        let p = &alloc.user_powers;
        let mut acc = self.self_term[r] * p[r] + self.constant[r] + self.relay_constant[r] * inv_pr;
        for (i, &pi) in p.iter().enumerate() {
            acc += (self.linear[r][i] + self.relay_linear[r][i] * inv_pr) * pi;
        }
        acc
    }

    pub fn sinr(&self, alloc: &PowerAllocation) -> Vec<f64> {
        (0..self.n_users())
            .map(|r| self.numerator[r] * alloc.user_powers[partner(r)] / self.denominator(r, alloc))
            .collect()
    }

    pub fn rates(&self, alloc: &PowerAllocation) -> Vec<f64> {
        self.sinr(alloc).into_iter().map(|s| (1.0 + s).log2()).collect()
    }

    pub fn link_moments(&self, r: usize) -> LinkMoments {
        let s = self.moment_scale;
        let q = partner(r);
        let interference = (0..self.n_users())
            .map(|i| if i == r || i == q { 0.0 } else { s * self.linear[r][i] })
            .collect();
        LinkMoments {
            mean: (s * self.numerator[r]).sqrt(),
            variance: s * self.linear[r][q],
            self_interference: s * self.self_coefficient(r),
            interference,
            noise_gain: s * self.constant[r] / self.noise_var,
        }
    }
}

/// Closed-form MRC/MRT coefficients.
pub fn mrc_coefficients(
    cfg: &SystemConfig,
    stats: &EstimationStats,
    convention: WishartConvention,
) -> BoundCoefficients {
    let m = cfg.n_users();
    let n1 = cfg.n_antennas as f64 + 1.0;
    let n = cfg.n_antennas as f64;
    let sn = cfg.noise_var;
    let sig = &cfg.large_scale;
    let sh = &stats.est_var;
    let phi = stats.pair_product_sum();
    let mut c = BoundCoefficients::empty(BeamformerKind::Mrc, m, n * n1, sn);
    for r in 0..m {
        let k = partner(r);
        c.numerator[r] = n * n1 * sh[k].powi(2) * sh[r].powi(2);
        for i in 0..m {
            let ip = partner(i);
            c.linear[r][i] =
                n1 * (sig[i] * sh[r].powi(2) * sh[k] + sig[r] * sh[i].powi(2) * sh[ip]) + 2.0 * sig[i] * sig[r] * phi;
            let fading = match convention {
                WishartConvention::Complex => sig[i],
                WishartConvention::Printed => sig[i] * sig[ip],
            };
            c.relay_linear[r][i] = sn * (2.0 * phi * fading + n1 * sh[i].powi(2) * sh[ip]);
        }
        c.self_term[r] =
            2.0 * (n1 * (sig[r] - 2.0 * sh[r]) * sh[k] * sh[r].powi(2) + (sig[r].powi(2) - 2.0 * sh[r].powi(2)) * phi);
        c.constant[r] = sn * (n1 * sh[k] * sh[r].powi(2) + 2.0 * sig[r] * phi);
        c.relay_constant[r] = 2.0 * sn * sn * phi;
    }
    c
}

/// Closed-form ZFR/ZFT coefficients; needs `N > 2K + 3`.
pub fn zf_coefficients(
    cfg: &SystemConfig,
    stats: &EstimationStats,
    convention: WishartConvention,
) -> Result<BoundCoefficients> {
    let m = cfg.n_users();
    let w = InverseWishart::new(cfg.n_antennas, m, convention)?;
    let sn = cfg.noise_var;
    let sx = &stats.err_var;
    let mu: Vec<f64> = stats.est_var.iter().map(|&s| w.diag_mean(s)).collect();
    let eta = w.eta(&stats.est_var);
    let mut c = BoundCoefficients::empty(BeamformerKind::Zf, m, 1.0, sn);
    for r in 0..m {
        let k = partner(r);
        c.numerator[r] = 1.0;
        for i in 0..m {
            let ip = partner(i);
            c.linear[r][i] = sx[i] * mu[k] + sx[r] * mu[ip] + sx[r] * sx[i] * eta;
            c.relay_linear[r][i] = sn * (mu[ip] + sx[i] * eta);
        }
        c.self_term[r] = match convention {
            WishartConvention::Complex => 2.0 * sx[r] * mu[k] + sx[r] * sx[r] * eta,
            WishartConvention::Printed => sx[r] * sx[r] * eta,
        };
        c.constant[r] = sn * mu[k] + sn * sx[r] * eta;
        c.relay_constant[r] = sn * sn * eta;
    }
    Ok(c)
}

impl BoundCoefficients {
    fn empty(kind: BeamformerKind, m: usize, moment_scale: f64, noise_var: f64) -> Self {
        BoundCoefficients {
            kind,
            numerator: vec![0.0; m],
            linear: vec![vec![0.0; m]; m],
            relay_linear: vec![vec![0.0; m]; m],
            self_term: vec![0.0; m],
            constant: vec![0.0; m],
            relay_constant: vec![0.0; m],
            moment_scale,
            noise_var,
        }
    }
}

pub fn bound_coefficients(
    kind: BeamformerKind,
    cfg: &SystemConfig,
    convention: WishartConvention,
) -> Result<BoundCoefficients> {
    cfg.validate()?;
    let stats = estimation_stats(cfg);
    match kind {
        BeamformerKind::Mrc => Ok(mrc_coefficients(cfg, &stats, convention)),
        BeamformerKind::Zf => zf_coefficients(cfg, &stats, convention),
    }
}

/// Closed-form lower bound on every link rate.
pub fn scsi_rate(
    kind: BeamformerKind,
    cfg: &SystemConfig,
    alloc: &PowerAllocation,
    convention: WishartConvention,
) -> Result<RateReport> {
    alloc.validate(cfg.n_users())?;
    let c = bound_coefficients(kind, cfg, convention)?;
    Ok(RateReport::closed_form(
        c.rates(alloc),
        spectral_efficiency_prefactor(cfg),
    ))
}

/// Expected relay transmit power of the unnormalized beamformer.
pub fn unnormalized_relay_power(
    kind: BeamformerKind,
    cfg: &SystemConfig,
    powers: &[f64],
    convention: WishartConvention,
) -> Result<f64> {
    let stats = estimation_stats(cfg);
    match kind {
        BeamformerKind::Mrc => Ok(mrc_forwarded_power(cfg, &stats, powers)),
        BeamformerKind::Zf => zf_forwarded_power(cfg, &stats, powers, convention),
    }
}

/// How channel estimates are produced in a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    /// Draw estimate and error from their MMSE distributions.
    #[default]
    Direct,
    /// Simulate pilot transmission and MMSE filtering.
    Training,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub estimation: EstimationMode,
}

impl McSettings {
    pub fn new(trials: usize, seed: u64) -> Self {
        McSettings {
            trials,
            seed,
            normalization: Normalization::ExpectedPower,
            estimation: EstimationMode::Direct,
        }
    }
}

/// Per-realization SINR of every link, with self-interference cancelled
/// using the estimated channel.
pub fn instantaneous_sinr(
    bf: &RelayBeamformer,
    sample: &ChannelSample,
    alloc: &PowerAllocation,
    noise_var: f64,
) -> Vec<f64> {
    let proj = bf.project(&sample.channel);
    let est = &bf.estimate_proj;
    let p = &alloc.user_powers;
    let m = p.len();
    (0..m)
        .map(|r| {
            let q = partner(r);
            let signal = bf.bilinear(&proj, r, &proj, q).norm_sqr() * p[q];
            let residual = bf.bilinear(&proj, r, &proj, r) - bf.bilinear(est, r, est, r);
            let mut den = residual.norm_sqr() * p[r];
            for i in (0..m).filter(|&i| i != r && i != q) {
                den += bf.bilinear(&proj, r, &proj, i).norm_sqr() * p[i];
            }
            den += noise_var * bf.row_norm_sq(&proj, r) + noise_var;
            signal / den
        })
        .collect()
}

/// Trials handled per work unit; partial sums are combined in chunk order
/// so results do not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    alpha: f64,
}

impl Moments {
    fn new(m: usize) -> Self {
        Moments {
            sum: vec![0.0; m],
            sum_sq: vec![0.0; m],
            alpha: 0.0,
        }
    }

    fn merge(mut self, o: &Moments) -> Self {
        for j in 0..self.sum.len() {
            self.sum[j] += o.sum[j];
            self.sum_sq[j] += o.sum_sq[j];
        }
        self.alpha += o.alpha;
        self
    }
}

/// Ergodic rates `E[log2(1 + SINR)]` over independent channel realizations.
pub fn monte_carlo_rate(
    kind: BeamformerKind,
    cfg: &SystemConfig,
    alloc: &PowerAllocation,
    settings: &McSettings,
) -> Result<RateReport> {
    cfg.validate()?;
    alloc.validate(cfg.n_users())?;
    let m = cfg.n_users();
    let stats = estimation_stats(cfg);
    let pilots = pilot_matrix(m, cfg.pilot_len)?;
    let trials = settings.trials.max(1);
    let chunks: Vec<usize> = (0..trials.div_ceil(CHUNK)).collect();
    let parts: Vec<Result<Moments>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = Moments::new(m + 1);
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(settings.seed, t as u64);
                let sample = match settings.estimation {
                    EstimationMode::Direct => draw_channel_sample(cfg, &stats, &mut rng),
                    EstimationMode::Training => {
                        let g = draw_channel(cfg, &mut rng);
                        estimate_from_training(cfg, &g, &pilots, &mut rng)
                    }
                };
                let bf = build_unnormalized(kind, &sample.estimate)?;
                let bf = match settings.normalization {
                    Normalization::ExpectedPower => normalize_instantaneous(bf, &sample, alloc, cfg.noise_var),
                    Normalization::SamplePath => normalize_sample_path(bf, &sample, alloc, cfg.noise_var, &mut rng),
                };
                acc.alpha += bf.alpha;
                let mut total = 0.0;
                for (j, s) in instantaneous_sinr(&bf, &sample, alloc, cfg.noise_var)
                    .into_iter()
                    .enumerate()
                {
                    let r = (1.0 + s).log2();
                    total += r;
                    acc.sum[j] += r;
                    acc.sum_sq[j] += r * r;
                }
                acc.sum[m] += total;
                acc.sum_sq[m] += total * total;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Moments::new(m + 1);
    for p in parts {
        total = total.merge(&p?);
    }
    let n = trials as f64;
    let mean: Vec<f64> = total.sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = total
        .sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| {
            if trials < 2 {
                return f64::NAN;
            }
            let var = ((sq - n * mu * mu) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(RateReport {
        per_link: mean[..m].to_vec(),
        per_link_stderr: stderr[..m].to_vec(),
        sum_rate: mean[m],
        sum_stderr: stderr[m],
        prefactor: spectral_efficiency_prefactor(cfg),
        mean_alpha: Some(total.alpha / n),
    })
}

/// Power scaling laws under which the rates approach a finite limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum AsymptoticCase {
    /// Fixed pilot power, `p_i = E_S / N`, `P_R = E_R / N`.
    FixedPilot { e_s: f64, e_r: f64 },
    /// `p_P = E_P / N^s`, `p_i = E_S / N^(1-s)`, `P_R = E_R / N^(1-s)` with
    /// `0 <= s < 1`.
    ScaledPilot {
        e_p: f64,
        e_s: f64,
        e_r: f64,
        exponent: f64,
    },
}

impl AsymptoticCase {
    /// Configuration and powers at `n` antennas.
    pub fn operating_point(&self, cfg: &SystemConfig, n: usize) -> (SystemConfig, PowerAllocation) {
        let nf = n as f64;
        let m = cfg.n_users();
        match *self {
            AsymptoticCase::FixedPilot { e_s, e_r } => {
                (cfg.with_antennas(n), PowerAllocation::uniform(m, e_s / nf, e_r / nf))
            }
            AsymptoticCase::ScaledPilot {
                e_p,
                e_s,
                e_r,
                exponent,
            } => {
                let c = cfg.with_antennas(n).with_pilot_power(e_p / nf.powf(exponent));
                let d = nf.powf(1.0 - exponent);
                (c, PowerAllocation::uniform(m, e_s / d, e_r / d))
            }
        }
    }
}

/// Limit of the closed-form link rates as `N -> infinity`.
pub fn asymptotic_rate(kind: BeamformerKind, cfg: &SystemConfig, case: AsymptoticCase) -> Vec<f64> {
    let m = cfg.n_users();
    let sn = cfg.noise_var;
    let log = |x: f64| (1.0 + x).log2();
    match (kind, case) {
        (BeamformerKind::Mrc, AsymptoticCase::FixedPilot { e_s, e_r }) => {
            let st = estimation_stats(cfg);
            let sh = &st.est_var;
            let phi = st.pair_product_sum();
            let s: f64 = (0..m).map(|i| sh[i].powi(2) * sh[partner(i)]).sum();
            (0..m)
                .map(|r| {
                    let k = partner(r);
                    let num = e_s * e_r * sh[k].powi(2) * sh[r].powi(2);
                    let den = e_s * sn * s + e_r * sn * sh[k] * sh[r].powi(2) + 2.0 * phi * sn * sn;
                    log(num / den)
                })
                .collect()
        }
        (BeamformerKind::Zf, AsymptoticCase::FixedPilot { e_s, e_r }) => {
            let st = estimation_stats(cfg);
            let sh = &st.est_var;
            let s: f64 = (0..m).map(|i| e_s / sh[i] + sn / (sh[i] * sh[partner(i)])).sum();
            (0..m)
                .map(|r| {
                    let k = partner(r);
                    log(e_r * e_s * sh[k] / (e_r * sn + sh[k] * sn * s))
                })
                .collect()
        }
        (BeamformerKind::Mrc, AsymptoticCase::ScaledPilot { e_p, e_s, e_r, .. }) => {
            let sg = &cfg.large_scale;
            let te = cfg.pilot_len as f64 * e_p;
            let s: f64 = (0..m).map(|i| sg[i].powi(4) * sg[partner(i)].powi(2)).sum();
            let pairs: f64 = (0..m / 2).map(|l| (sg[2 * l] * sg[2 * l + 1]).powi(2)).sum();
            (0..m)
                .map(|r| {
                    let k = partner(r);
                    let num = te * te * e_s * e_r * sg[k].powi(4) * sg[r].powi(4);
                    let den = te * sn * sn * (e_s * s + e_r * sg[k].powi(2) * sg[r].powi(4)) + 2.0 * sn.powi(4) * pairs;
                    log(num / den)
                })
                .collect()
        }
        (BeamformerKind::Zf, AsymptoticCase::ScaledPilot { e_p, e_s, e_r, .. }) => {
            let sg = &cfg.large_scale;
            let te = cfg.pilot_len as f64 * e_p;
            let s: f64 = (0..m)
                .map(|i| te * e_s / sg[i].powi(2) + sn * sn / (sg[i] * sg[partner(i)]).powi(2))
                .sum();
            (0..m)
                .map(|r| {
                    let k = partner(r);
                    let num = te * te * e_s * e_r * sg[k].powi(2);
                    log(num / (te * e_r * sn * sn + sg[k].powi(2) * sn * sn * s))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hetero(n: usize) -> SystemConfig {
        let mut c = SystemConfig::new(n, vec![1.0, 0.5, 0.8, 0.3], 10.0).unwrap();
        c.pilot_len = 4;
        c
    }

    #[test]
    fn symmetric_one_pair_mrc_bound_by_hand() {
        // sigma^2 = 1, p_P = 10, tau = 2: hat s = 20/21, xi = 1/21.
        let cfg = SystemConfig::uniform(16, 1, 1.0, 10.0).unwrap();
        let alloc = PowerAllocation::uniform(2, 1.0, 2.0);
        let c = bound_coefficients(BeamformerKind::Mrc, &cfg, WishartConvention::Complex).unwrap();
        let (s, n1): (f64, f64) = (20.0 / 21.0, 17.0);
        let phi = s * s;
        let a = 16.0 * n1 * s.powi(4);
        let b1 = n1 * 2.0 * s.powi(3) + 2.0 * phi;
        let b2 = 2.0 * phi + n1 * s.powi(3);
        let cc = 2.0 * (n1 * (1.0 - 2.0 * s) * s.powi(3) + (1.0 - 2.0 * s * s) * phi);
        let d1 = n1 * s.powi(3) + 2.0 * phi;
        let d2 = 2.0 * phi;
        let den = 2.0 * (b1 + b2 / 2.0) + cc + d1 + d2 / 2.0;
        let want = (1.0 + a / den).log2();
        let got = c.rates(&alloc);
        assert!((got[0] - want).abs() < 1e-12 && (got[1] - want).abs() < 1e-12);
    }

    #[test]
    fn printed_and_complex_mrc_agree_at_unit_fading() {
        let cfg = SystemConfig::uniform(32, 3, 1.0, 5.0).unwrap();
        let alloc = PowerAllocation::uniform(6, 0.7, 4.0);
        let a = scsi_rate(BeamformerKind::Mrc, &cfg, &alloc, WishartConvention::Complex).unwrap();
        let b = scsi_rate(BeamformerKind::Mrc, &cfg, &alloc, WishartConvention::Printed).unwrap();
        assert_eq!(a.per_link, b.per_link);
    }

    #[test]
    fn zf_bound_needs_spare_antennas() {
        assert!(SystemConfig::uniform(7, 2, 1.0, 1.0).is_err());
        let mut cfg = SystemConfig::uniform(8, 2, 1.0, 1.0).unwrap();
        cfg.n_antennas = 7;
        let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
        assert!(scsi_rate(BeamformerKind::Zf, &cfg, &alloc, WishartConvention::Complex).is_err());
    }

    #[test]
    fn regrouped_self_terms_are_positive() {
        for n in [8, 16, 64, 256] {
            for pp in [0.01, 1.0, 100.0] {
                let cfg = hetero(n).with_pilot_power(pp);
                for kind in BeamformerKind::ALL {
                    let c = bound_coefficients(kind, &cfg, WishartConvention::Complex).unwrap();
                    for r in 0..4 {
                        assert!(c.self_coefficient(r) > 0.0, "{kind} N={n} pP={pp}");
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_zf_removes_all_interference() {
        let cfg = SystemConfig::uniform(16, 2, 1.0, 1e12).unwrap();
        let c = bound_coefficients(BeamformerKind::Zf, &cfg, WishartConvention::Complex).unwrap();
        for r in 0..4 {
            for i in 0..4 {
                assert!(c.linear[r][i] < 1e-10);
            }
            assert!(c.self_term[r] < 1e-10);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_respects_the_bound() {
        let cfg = hetero(32);
        let alloc = PowerAllocation::new(vec![1.0, 2.0, 0.5, 1.5], 8.0);
        let set = McSettings::new(400, 99);
        for kind in BeamformerKind::ALL {
            let a = monte_carlo_rate(kind, &cfg, &alloc, &set).unwrap();
            let b = monte_carlo_rate(kind, &cfg, &alloc, &set).unwrap();
            assert_eq!(a, b);
            let bound = scsi_rate(kind, &cfg, &alloc, WishartConvention::Complex).unwrap();
            for r in 0..4 {
                assert!(bound.per_link[r] <= a.per_link[r] + 3.0 * a.per_link_stderr[r]);
            }
        }
    }

    #[test]
    fn training_and_direct_estimation_give_the_same_rates() {
        let cfg = hetero(24);
        let alloc = PowerAllocation::uniform(4, 1.0, 6.0);
        let mut set = McSettings::new(3000, 5);
        let direct = monte_carlo_rate(BeamformerKind::Mrc, &cfg, &alloc, &set).unwrap();
        set.estimation = EstimationMode::Training;
        let trained = monte_carlo_rate(BeamformerKind::Mrc, &cfg, &alloc, &set).unwrap();
        let se = (direct.sum_stderr.powi(2) + trained.sum_stderr.powi(2)).sqrt();
        assert!((direct.sum_rate - trained.sum_rate).abs() < 4.0 * se);
    }

    #[test]
    fn fixed_pilot_limits_are_approached() {
        let cfg = hetero(64);
        let case = AsymptoticCase::FixedPilot { e_s: 10.0, e_r: 30.0 };
        for kind in BeamformerKind::ALL {
            let lim = asymptotic_rate(kind, &cfg, case);
            let (c, a) = case.operating_point(&cfg, 1 << 20);
            let r = scsi_rate(kind, &c, &a, WishartConvention::Complex).unwrap().per_link;
            for j in 0..4 {
                assert!((r[j] / lim[j] - 1.0).abs() < 1e-4, "{kind}: {} vs {}", r[j], lim[j]);
            }
        }
    }

    #[test]
    fn scaled_pilot_limits_are_approached_slowly() {
        let cfg = hetero(64);
        let case = AsymptoticCase::ScaledPilot {
            e_p: 1.0,
            e_s: 10.0,
            e_r: 30.0,
            exponent: 0.5,
        };
        for kind in BeamformerKind::ALL {
            let lim = asymptotic_rate(kind, &cfg, case);
            let mut prev = f64::INFINITY;
            for e in [4, 6, 8, 10, 12] {
                let (c, a) = case.operating_point(&cfg, 10usize.pow(e));
                let r = scsi_rate(kind, &c, &a, WishartConvention::Complex).unwrap().per_link;
                let gap = (0..4).map(|j| (r[j] / lim[j] - 1.0).abs()).fold(0.0, f64::max);
                assert!(gap < prev);
                prev = gap;
            }
            assert!(prev < 1e-3, "{kind}: gap {prev}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bound_is_finite_and_grows_with_antennas(
            s in prop::collection::vec(0.05f64..2.0, 4), pp in 0.1f64..100.0,
            p in 0.1f64..10.0, pr in 0.1f64..100.0, n in 8usize..200
        ) {
            let mut cfg = SystemConfig::new(n, s, pp).unwrap();
            cfg.pilot_len = 4;
            let alloc = PowerAllocation::uniform(4, p, pr);
            for kind in BeamformerKind::ALL {
                let a = scsi_rate(kind, &cfg, &alloc, WishartConvention::Complex).unwrap();
                let b = scsi_rate(kind, &cfg.with_antennas(n + 8), &alloc, WishartConvention::Complex).unwrap();
                for r in 0..4 {
                    prop_assert!(a.per_link[r].is_finite() && a.per_link[r] > 0.0);
                    prop_assert!(b.per_link[r] >= a.per_link[r] - 1e-12);
                }
            }
        }
    }
}
