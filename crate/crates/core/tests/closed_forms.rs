use twr_core::beamforming::swap_matrix;
use twr_core::channel::{cn_matrix, draw_channel, trial_rng};
use twr_core::moments::{gaussian, InverseWishart};
use twr_core::oracle::{check_link_moments, sample_means};
use twr_core::rates::{mrc_coefficients, zf_coefficients};
use twr_core::*;

const CX: WishartConvention = WishartConvention::Complex;

fn cfg(n: usize, fading: Vec<f64>, pilot: f64) -> SystemConfig {
    let m = fading.len();
    let mut c = SystemConfig::new(n, fading, pilot).unwrap();
    c.pilot_len = m;
    c
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(a.abs())
}

#[test]
fn estimation_variances_by_hand() {
    let c = SystemConfig::uniform(128, 10, 1.0, 10.0).unwrap();
    assert!(close(estimation_stats(&c).est_var[0], 200.0 / 201.0, 1e-14));
    let mut weak = c.clone();
    weak.large_scale[3] = 0.014;
    let s = estimation_stats(&weak).est_var[3];
    assert!(close(s, 200.0 * 0.014 * 0.014 / (200.0 * 0.014 + 1.0), 1e-14));
    assert!((s - 0.010316).abs() < 1e-6);
}

#[test]
fn prefactor_edge_cases() {
    let mut c = SystemConfig::uniform(128, 10, 1.0, 10.0).unwrap();
    assert!(close(spectral_efficiency_prefactor(&c), 0.89, 1e-14));
    c.coherence_len = 23;
    assert!(close(spectral_efficiency_prefactor(&c), 1.0 / 23.0, 1e-14));
    let r = scsi_rate(
        BeamformerKind::Mrc,
        &SystemConfig::uniform(128, 10, 1.0, 10.0).unwrap(),
        &PowerAllocation::uniform(20, 1.0, 20.0),
        CX,
    )
    .unwrap();
    assert!(r.sum_se() < r.sum_rate);
    let one_bit = RateReportLike(vec![1.0; 20]);
    assert!(close(one_bit.sum_se(0.89), 17.8, 1e-14));
}

struct RateReportLike(Vec<f64>);

impl RateReportLike {
    fn sum_se(&self, pre: f64) -> f64 {
        pre * self.0.iter().sum::<f64>()
    }
}

#[test]
fn mrc_beamformer_on_a_two_antenna_toy() {
    let (a, b) = (C64::new(0.5, 1.0), C64::new(-2.0, 0.25));
    let mut est = CMatrix::zeros(2, 2);
    est[(0, 0)] = a;
    est[(1, 1)] = b;
    let bf = build_unnormalized(BeamformerKind::Mrc, &est).unwrap();
    let f = bf.dense().unwrap();
    let ab = a.conj() * b.conj();
    assert!((f[(0, 1)] - ab).norm() < 1e-14 && (f[(1, 0)] - ab).norm() < 1e-14);
    assert!(f[(0, 0)].norm() < 1e-14 && f[(1, 1)].norm() < 1e-14);
}

#[test]
fn zf_beamformer_inverts_the_estimate() {
    let c = cfg(12, vec![1.0, 0.5, 0.8, 0.2], 10.0);
    let s = draw_channel_sample(&c, &estimation_stats(&c), &mut trial_rng(1, 0));
    let f = build_unnormalized(BeamformerKind::Zf, &s.estimate)
        .unwrap()
        .dense()
        .unwrap();
    let t = swap_matrix(4);
    assert!((s.estimate.transpose() * f * &s.estimate - t).camax() < 1e-8);
}

#[test]
fn amplification_is_homogeneous_in_relay_power() {
    let c = cfg(32, vec![1.0, 0.5, 0.8, 0.2], 10.0);
    let s = draw_channel_sample(&c, &estimation_stats(&c), &mut trial_rng(2, 0));
    let bf = build_unnormalized(BeamformerKind::Mrc, &s.estimate).unwrap();
    let a1 = normalize_instantaneous(bf.clone(), &s, &PowerAllocation::uniform(4, 1.0, 3.0), 1.0).alpha;
    let a2 = normalize_instantaneous(bf, &s, &PowerAllocation::uniform(4, 1.0, 6.0), 1.0).alpha;
    assert!(close(a2 / a1, 2f64.sqrt(), 1e-14));
}

#[test]
fn statistical_amplification_special_cases() {
    let c = cfg(64, vec![1.0, 0.5, 0.8, 0.2], 10.0);
    let st = estimation_stats(&c);
    let silent = PowerAllocation::uniform(4, 0.0, 4.0);
    let n = 64.0;
    let expect = (4.0 / (2.0 * n * (n + 1.0) * st.pair_product_sum())).sqrt();
    assert!(close(alpha1_statistical(&c, &st, &silent), expect, 1e-14));

    let perfect = EstimationStats::perfect(&c.large_scale);
    let alloc = PowerAllocation::uniform(4, 1.5, 4.0);
    let w = InverseWishart::new(64, 4, CX).unwrap();
    let sum_inv: f64 = c.large_scale.iter().map(|s| w.diag_mean(*s)).sum();
    let expect = (4.0 / (1.5 * sum_inv + w.eta(&c.large_scale))).sqrt();
    assert!(close(
        alpha2_statistical(&c, &perfect, &alloc, CX).unwrap(),
        expect,
        1e-14
    ));
}

#[test]
fn statistical_amplification_scaling_in_antennas() {
    let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
    let a1 = |n| {
        let c = cfg(n, vec![1.0, 0.5, 0.8, 0.2], 10.0);
        alpha1_statistical(&c, &estimation_stats(&c), &alloc)
    };
    // The expected forwarded power is cubic in N.
    assert!((a1(200_000) / a1(100_000) - 0.5f64.powf(1.5)).abs() < 1e-3);
    let a2 = |n| {
        let c = cfg(n, vec![1.0, 0.5, 0.8, 0.2], 10.0);
        alpha2_statistical(&c, &estimation_stats(&c), &alloc, CX).unwrap()
    };
    assert!((a2(400_000) / a2(100_000) - 2.0).abs() < 1e-3);
}

/// Sample mean of the unnormalized relay power, built densely.
fn sampled_relay_power(kind: BeamformerKind, c: &SystemConfig, alloc: &PowerAllocation, samples: usize) -> (f64, f64) {
    let st = estimation_stats(c);
    let t = swap_matrix(c.n_users());
    let (m, se) = sample_means(samples, 17, 1, |rng| {
        let est = cn_matrix(rng, c.n_antennas, &st.est_var);
        let g = &est - cn_matrix(rng, c.n_antennas, &st.err_var);
        let s = match kind {
            BeamformerKind::Mrc => est.clone(),
            BeamformerKind::Zf => &est * est.ad_mul(&est).try_inverse().unwrap(),
        };
        let f = s.conjugate() * &t * s.adjoint();
        let fg = &f * &g;
        let sig: f64 = (0..c.n_users())
            .map(|i| alloc.user_powers[i] * fg.column(i).norm_squared())
            .sum();
        vec![sig + c.noise_var * f.norm_squared()]
    });
    (m[0], se[0])
}

#[test]
fn statistical_mrc_amplification_matches_sampling() {
    let c = cfg(64, vec![1.0; 4], 10.0);
    let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
    let (power, _) = sampled_relay_power(BeamformerKind::Mrc, &c, &alloc, 100_000);
    let a = alpha1_statistical(&c, &estimation_stats(&c), &alloc);
    assert!(close(a, (4.0 / power).sqrt(), 0.01), "{a}");
}

#[test]
fn statistical_zf_amplification_matches_sampling() {
    let c = cfg(16, vec![1.0; 4], 10.0);
    let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
    let (power, _) = sampled_relay_power(BeamformerKind::Zf, &c, &alloc, 100_000);
    let a = alpha2_statistical(&c, &estimation_stats(&c), &alloc, CX).unwrap();
    assert!(close(a, (4.0 / power).sqrt(), 0.02), "{a}");
}

#[test]
fn mean_instantaneous_amplification_is_near_statistical() {
    let c = cfg(64, vec![1.0, 0.5, 0.8, 0.2], 10.0);
    let st = estimation_stats(&c);
    let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
    for kind in BeamformerKind::ALL {
        let r = monte_carlo_rate(kind, &c, &alloc, &McSettings::new(10_000, 5)).unwrap();
        let stat = match kind {
            BeamformerKind::Mrc => alpha1_statistical(&c, &st, &alloc),
            BeamformerKind::Zf => alpha2_statistical(&c, &st, &alloc, CX).unwrap(),
        };
        let mean = r.mean_alpha.unwrap();
        assert!(close(mean, stat, 0.02), "{kind}: {mean} vs {stat}");
    }
}

#[test]
fn instantaneous_sinr_on_a_hand_built_pair() {
    let mut est = CMatrix::zeros(2, 2);
    est[(0, 0)] = C64::new(1.0, 0.0);
    est[(1, 1)] = C64::new(1.0, 0.0);
    let sample = ChannelSample {
        channel: est.clone(),
        estimate: est,
        error: CMatrix::zeros(2, 2),
    };
    let alloc = PowerAllocation::new(vec![1.0, 2.0], 5.0);
    let bf = build_unnormalized(BeamformerKind::Mrc, &sample.estimate).unwrap();
    let bf = normalize_instantaneous(bf, &sample, &alloc, 1.0);
    assert!(close(bf.alpha, 1.0, 1e-14));
    let sinr = rates::instantaneous_sinr(&bf, &sample, &alloc, 1.0);
    assert!(close(sinr[0], 1.0, 1e-14) && close(sinr[1], 0.5, 1e-14), "{sinr:?}");
}

#[test]
fn mrc_numerator_by_hand() {
    let c = cfg(64, vec![1.0, 1.0], 10.0);
    let perfect = EstimationStats::perfect(&c.large_scale);
    let co = mrc_coefficients(&c, &perfect, CX);
    assert!(close(co.numerator[0], 4160.0, 1e-14));
    let doubled = EstimationStats::perfect(&[2.0, 2.0]);
    let c2 = cfg(64, vec![2.0, 2.0], 10.0);
    assert!(close(
        mrc_coefficients(&c2, &doubled, CX).numerator[0],
        16.0 * 4160.0,
        1e-14
    ));
}

#[test]
fn perfect_csi_mrc_self_coefficient() {
    let c = cfg(32, vec![1.0, 0.5, 0.8, 0.3], 10.0);
    let st = EstimationStats::perfect(&c.large_scale);
    let co = mrc_coefficients(&c, &st, CX);
    let (n, phi) = (32.0, st.pair_product_sum());
    for r in 0..4 {
        let (sk, sr) = (st.est_var[partner(r)], st.est_var[r]);
        let expect = 2.0 * (-(n + 1.0) * sk * sr.powi(3) - sr * sr * phi);
        assert!(close(co.self_term[r], expect, 1e-13));
        assert_eq!(co.self_coefficient(r), 0.0);
    }
}

#[test]
fn silent_users_leave_only_noise_terms() {
    let c = cfg(32, vec![1.0, 0.5, 0.8, 0.3], 10.0);
    let quiet = PowerAllocation::uniform(4, 0.0, 3.0);
    for kind in BeamformerKind::ALL {
        let co = bound_coefficients(kind, &c, CX).unwrap();
        for r in 0..4 {
            let d = co.denominator(r, &quiet);
            assert!(close(d, co.constant[r] + co.relay_constant[r] / 3.0, 1e-14));
        }
        assert!(co.rates(&quiet).iter().all(|&x| x == 0.0));
        let one_off = PowerAllocation::new(vec![0.0, 1.0, 1.0, 1.0], 3.0);
        assert_eq!(co.rates(&one_off)[1], 0.0);
        assert!(co.rates(&one_off)[0] > 0.0);
    }
}

#[test]
fn perfect_csi_zf_drops_error_terms() {
    let c = cfg(32, vec![1.0, 0.5, 0.8, 0.3], 10.0);
    let co = zf_coefficients(&c, &EstimationStats::perfect(&c.large_scale), CX).unwrap();
    for r in 0..4 {
        assert_eq!(co.self_term[r], 0.0);
        assert!(co.linear[r].iter().all(|&x| x == 0.0));
        assert!(co.relay_linear[r].iter().all(|&x| x > 0.0));
    }
}

#[test]
fn zf_sinr_grows_linearly_in_antennas() {
    let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
    for pilot in [1.0, 10.0, 1e12] {
        let sinr = |n| {
            let c = cfg(n, vec![1.0, 0.5, 0.8, 0.3], pilot);
            bound_coefficients(BeamformerKind::Zf, &c, CX).unwrap().sinr(&alloc)
        };
        let (a, b) = (sinr(200_000), sinr(400_000));
        for r in 0..4 {
            assert!((b[r] / a[r] - 2.0).abs() < 1e-3, "{} {}", a[r], b[r]);
        }
    }
}

#[test]
fn equal_fading_limits_are_symmetric() {
    let c = cfg(128, vec![0.7; 6], 10.0);
    for kind in BeamformerKind::ALL {
        let r = asymptotic_rate(kind, &c, AsymptoticCase::FixedPilot { e_s: 5.0, e_r: 10.0 });
        assert!(r.iter().all(|x| close(*x, r[0], 1e-14)));
    }
}

#[test]
fn gaussian_moment_values() {
    assert_eq!(gaussian::norm_fourth(1, 1.0), 2.0);
    assert_eq!(gaussian::norm_fourth(8, 1.0), 72.0);
    assert_eq!(gaussian::inner_second(8, 2.0, 0.5), 8.0);
    for c in oracle::check_gaussian_fourth_moments(8, 2.0, 0.5, 100_000, 4) {
        assert!(c.passed(), "{c:?}");
    }
}

#[test]
fn inverse_wishart_scaling() {
    let w = InverseWishart::new(16, 2, CX).unwrap();
    assert!(close(w.diag_mean(2.0), w.diag_mean(1.0) / 2.0, 1e-15));
}

#[test]
fn perfect_csi_zf_link_moments_vanish() {
    let c = cfg(16, vec![1.0, 0.5, 0.8, 0.3], 1e300);
    let alloc = PowerAllocation::uniform(4, 1.0, 1.0);
    let checks = check_link_moments(BeamformerKind::Zf, &c, &alloc, 20_000, 3, CX).unwrap();
    for ch in checks.iter().filter(|c| c.name.contains("interference")) {
        assert!(ch.analytic < 1e-200);
        assert!(ch.estimate < 1e-12, "{ch:?}");
    }
}

fn link_check(kind: BeamformerKind, n: usize, what: &str) -> oracle::MomentCheck {
    let c = cfg(n, vec![1.0; 4], 10.0);
    let alloc = PowerAllocation::uniform(4, 1.0, 4.0);
    check_link_moments(kind, &c, &alloc, 100_000, 21, CX)
        .unwrap()
        .into_iter()
        .find(|c| c.name.ends_with(what))
        .unwrap()
}

#[test]
fn mrc_gain_variance_matches_sampling() {
    let ch = link_check(BeamformerKind::Mrc, 32, "r0/variance");
    assert!(close(ch.estimate, ch.analytic, 0.02), "{ch:?}");
}

#[test]
fn zf_gain_variance_matches_sampling() {
    let ch = link_check(BeamformerKind::Zf, 16, "r0/variance");
    assert!(close(ch.estimate, ch.analytic, 0.02), "{ch:?}");
}

#[test]
fn sampled_channels_have_the_configured_covariance() {
    let c = cfg(8, vec![1.0, 0.5], 10.0);
    // Column 0 covariance entries plus the estimate/error cross moment.
    let (m, se) = sample_means(100_000, 8, 3, |rng| {
        let g = draw_channel(&c, rng);
        let s = draw_channel_sample(&c, &estimation_stats(&c), rng);
        let cross = s.estimate[(0, 0)] * s.error[(0, 0)].conj();
        vec![
            g.column(0).norm_squared() / 8.0,
            (g[(0, 0)] * g[(1, 0)].conj()).re,
            cross.re,
        ]
    });
    assert!((m[0] - 1.0).abs() < 3.0 * se[0]);
    assert!(m[1].abs() < 4.0 * se[1]);
    assert!(m[2].abs() < 4.0 * se[2]);
    let (cov, _) = sample_means(100_000, 9, 128, |rng| {
        let g = draw_channel(&c, rng);
        let col = g.column(0);
        let mut v = Vec::with_capacity(128);
        for i in 0..8 {
            for j in 0..8 {
                let x = col[i] * col[j].conj();
                v.push(x.re);
                v.push(x.im);
            }
        }
        v
    });
    let mut diff = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let target = if i == j { 1.0 } else { 0.0 };
            diff += (cov[2 * (8 * i + j)] - target).powi(2) + cov[2 * (8 * i + j) + 1].powi(2);
        }
    }
    assert!(diff.sqrt() < 0.02 * 8f64.sqrt(), "{}", diff.sqrt());
}

#[test]
fn noiseless_training_recovers_the_channel() {
    let mut c = cfg(8, vec![1.0, 0.5, 0.8, 0.3], 10.0);
    c.noise_var = 1e-30;
    let g = draw_channel(&c, &mut trial_rng(3, 0));
    let s = estimate_from_training(&c, &g, &pilot_matrix(4, 4).unwrap(), &mut trial_rng(3, 1));
    assert!((s.estimate - g).camax() < 1e-10);
}

#[test]
fn training_and_direct_estimates_share_their_norm() {
    let c = cfg(8, vec![1.0, 0.5], 3.0);
    let pilots = pilot_matrix(2, 2).unwrap();
    let st = estimation_stats(&c);
    let (m, se) = sample_means(50_000, 12, 2, |rng| {
        let g = draw_channel(&c, rng);
        let t = estimate_from_training(&c, &g, &pilots, rng);
        let d = draw_channel_sample(&c, &st, rng);
        vec![t.estimate.column(1).norm_squared(), d.estimate.column(1).norm_squared()]
    });
    assert!((m[0] - m[1]).abs() < 3.0 * (se[0].powi(2) + se[1].powi(2)).sqrt());
}
