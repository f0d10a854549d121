use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twr_core::allocation::sum_se;
use twr_core::*;

fn cfg(n: usize, fading: Vec<f64>, pilot: f64) -> SystemConfig {
    let m = fading.len();
    let mut c = SystemConfig::new(n, fading, pilot).unwrap();
    c.pilot_len = m;
    c
}

/// Pairs `(s, 1/s)` so every pair has unit fading product.
fn balanced(first: &[f64]) -> Vec<f64> {
    first.iter().flat_map(|&s| [s, 1.0 / s]).collect()
}

#[test]
fn unit_trust_region_pins_the_first_step() {
    let c = cfg(64, vec![1.0, 0.3, 0.8, 0.5], 10.0);
    let coeffs = bound_coefficients(BeamformerKind::Mrc, &c, WishartConvention::Complex).unwrap();
    let budget = PowerBudget::total_only(100.0);
    let set = OpaSettings {
        trust: 1.0 + 1e-3,
        max_iter: 1,
        ..Default::default()
    };
    let (_, trace) = opa(&coeffs, &budget, 1.0, &set).unwrap();
    let (a, b) = (&trace.sinr[0], trace.sinr.last().unwrap());
    for (x, y) in a.iter().zip(b) {
        assert!(y / x <= 1.0 + 1e-3 + 1e-6 && x / y <= 1.0 + 1e-3 + 1e-6, "{x} {y}");
    }
}

#[test]
fn mrc_closed_form_hand_example() {
    let a = aopa_mrc(&[2.0, 0.5], 10.0, 5.0).unwrap();
    assert!((a.user_powers[0] - 1.0).abs() < 1e-12);
    assert!((a.user_powers[1] - 4.0).abs() < 1e-12);
    let uniform = aopa_mrc(&[1.0; 6], 12.0, 6.0).unwrap();
    assert!(uniform.user_powers.iter().all(|&p| (p - 1.0).abs() < 1e-15));
}

#[test]
fn mrc_closed_form_follows_relabeling() {
    let a = aopa_mrc(&[2.0, 0.5, 4.0, 0.25], 10.0, 5.0).unwrap();
    let b = aopa_mrc(&[0.5, 2.0, 4.0, 0.25], 10.0, 5.0).unwrap();
    assert!((a.user_powers[0] - b.user_powers[1]).abs() < 1e-12);
    assert!((a.user_powers[1] - b.user_powers[0]).abs() < 1e-12);
    assert_eq!(a.user_powers[2..], b.user_powers[2..]);
}

#[test]
fn zf_water_filling_clips_a_deep_fade() {
    let c = cfg(10, vec![1.0, 0.01], 10.0);
    let a = aopa_zf(&c, 0.2, 0.1, WishartConvention::Complex).unwrap();
    assert_eq!(a.user_powers[1], 0.0);
    assert!((a.user_powers[0] - 0.1).abs() < 1e-15);
}

#[test]
fn zf_water_level_matches_the_unclipped_closed_form() {
    let fading = vec![1.0, 0.7, 1.3, 0.9, 0.6, 1.1];
    let (n, total) = (40, 50.0);
    let c = cfg(n, fading.clone(), 10.0);
    let a = aopa_zf(&c, total, total / 2.0, WishartConvention::Printed).unwrap();
    let m = fading.len() as f64;
    let q = (n - fading.len() - 1) as f64;
    let lambda = m / (fading.iter().map(|s| 1.0 / (q * s)).sum::<f64>() + total / 2.0);
    for (p, s) in a.user_powers.iter().zip(&fading) {
        assert!((p - (1.0 / lambda - 1.0 / (q * s))).abs() < 1e-10);
    }
}

#[test]
fn zf_water_filling_tends_to_equal_power() {
    let c = cfg(20_000, vec![1.0, 0.2, 0.6, 1.5], 10.0);
    let a = aopa_zf(&c, 40.0, 20.0, WishartConvention::Complex).unwrap();
    assert!(a.user_powers.iter().all(|p| (p - 5.0).abs() < 5e-3));
}

#[test]
fn mrc_closed_form_dominates_random_allocations_at_scale() {
    let total = db_to_linear(20.0);
    let relay = total / 2.0;
    let c = cfg(512, balanced(&[0.749, 0.246, 0.125, 0.635, 0.257, 0.315]), relay);
    let coeffs = bound_coefficients(BeamformerKind::Mrc, &c, WishartConvention::Complex).unwrap();
    let best = sum_se(&coeffs, 1.0, &aopa_mrc(&c.large_scale, total, relay).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = c.n_users();
    for _ in 0..10_000 {
        let w: Vec<f64> = (0..m).map(|_| -rng.gen::<f64>().ln()).collect();
        let s: f64 = w.iter().sum();
        let alloc = PowerAllocation::new(w.iter().map(|x| x / s * (total - relay)).collect(), relay);
        assert!(sum_se(&coeffs, 1.0, &alloc) <= best, "{alloc:?}");
    }
}

#[test]
fn zf_closed_form_tracks_equal_power_and_trails_opa_at_scale() {
    let total = db_to_linear(30.0);
    let c = cfg(512, vec![0.749, 0.045, 0.246, 0.121, 0.125, 0.142, 0.635, 0.256], 10.0);
    let budget = PowerBudget::total_only(total);
    let set = OpaSettings {
        fixed_relay_power: Some(total / 2.0),
        max_iter: 50,
        epsilon: 1e-4,
        ..Default::default()
    };
    let conv = WishartConvention::Complex;
    let run = |s| allocate(s, BeamformerKind::Zf, &c, &budget, &set, conv).unwrap().sum_se;
    let (epa, opa, aopa) = (run(Scheme::Epa), run(Scheme::Opa), run(Scheme::Aopa));
    assert!((aopa - epa).abs() / epa < 1e-3, "{aopa} {epa}");
    // Heterogeneous fading leaves a few percent for the optimizer.
    assert!(opa > aopa && (opa - aopa) / opa < 0.05, "{opa} {aopa}");
}
