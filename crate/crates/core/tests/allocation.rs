mod common;

use common::{capacity_oracle, random_cmat, random_psd, rng};
use mc_mimo::allocation::{capacity, optimal_allocation, snr_matrix_eigenvalues, waterfill};
use mc_mimo::channel::CMat;
use mc_mimo::Error;
use proptest::prelude::*;
use rand::Rng;

/// Water level by bisection on `sum_s max(0, mu - noise / g_s^2) = P`.
fn bisection_level(sv: &[f64], power: f64, noise: f64) -> f64 {
    let used = |mu: f64| sv.iter().filter(|&&g| g > 0.0).map(|g| (mu - noise / (g * g)).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, power + noise / sv.iter().cloned().fold(0.0, f64::max).powi(2) + 1.0);
    while used(hi) < power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn random_singular_values<R: Rng>(rng: &mut R) -> Vec<f64> {
    let k = rng.random_range(1..=8);
    (0..k).map(|_| rng.random::<f64>().powi(2) * 5.0).collect()
}

#[test]
fn waterfill_matches_bisection_and_kkt() {
    let mut r = rng(31);
    for _ in 0..100 {
        let sv = random_singular_values(&mut r);
        let power = r.random_range(0.1..10.0);
        let noise = r.random_range(0.05..2.0);
        let (p, mu) = waterfill(&sv, power, noise).unwrap();
        assert!((p.iter().sum::<f64>() - power).abs() <= 1e-9);
        assert!((mu - bisection_level(&sv, power, noise)).abs() <= 1e-9);
        for (g, ps) in sv.iter().zip(&p) {
            assert!(*ps >= 0.0);
            let floor = noise / (g * g);
            if *ps > 0.0 {
                // Active channels fill exactly to the water level.
                assert!((floor + ps - mu).abs() <= 1e-9 * mu.max(1.0));
            } else {
                assert!(floor >= mu - 1e-9 * mu.max(1.0));
            }
        }
    }
}

#[test]
fn waterfill_beats_random_covariances() {
    let mut r = rng(32);
    for _ in 0..100 {
        let n = r.random_range(1..5);
        let m = r.random_range(1..5);
        let h = random_cmat(n, m, &mut r);
        let power = r.random_range(0.5..4.0);
        let noise = r.random_range(0.1..1.0);
        let alloc = optimal_allocation(&h, power, noise).unwrap();
        let best = capacity_oracle(&h, &alloc.q, noise);
        assert!((alloc.q.trace().re - power).abs() < 1e-9);
        for _ in 0..100 {
            let q = random_psd(m, power, &mut r);
            assert!(best - capacity_oracle(&h, &q, noise) >= -1e-9);
        }
    }
}

#[test]
fn reciprocity_of_forward_and_reverse_covariances() {
    let mut r = rng(33);
    for _ in 0..50 {
        let n = r.random_range(1..6);
        let m = r.random_range(1..6);
        let h = random_cmat(n, m, &mut r);
        let alloc = optimal_allocation(&h, 1.0, 0.3).unwrap();
        let forward = capacity(&h, &alloc.q, 0.3);
        let reverse = capacity(&h.adjoint(), &alloc.s, 0.3);
        assert!((forward - reverse).abs() <= 1e-9, "{forward} {reverse}");
        assert!((forward - capacity_oracle(&h, &alloc.q, 0.3)).abs() <= 1e-9);
    }
}

#[test]
fn zero_channel_is_reported() {
    let h = CMat::zeros(2, 3);
    assert!(matches!(optimal_allocation(&h, 1.0, 1.0), Err(Error::ZeroChannel)));
}

#[test]
fn rank_deficient_channel_uses_rank_many_modes() {
    let mut r = rng(34);
    let a = random_cmat(4, 1, &mut r);
    let b = random_cmat(1, 4, &mut r);
    let h = &a * &b;
    let alloc = optimal_allocation(&h, 1.0, 0.5).unwrap();
    assert_eq!(alloc.powers.len(), 1);
    assert_eq!(snr_matrix_eigenvalues(&h, &alloc.q, 0.5).len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn capacity_grows_with_power(seed in 0u64..1000, p in 0.01f64..5.0, extra in 0.0f64..5.0) {
        let mut r = rng(seed);
        let h = random_cmat(3, 3, &mut r);
        let c1 = optimal_allocation(&h, p, 0.5).unwrap();
        let c2 = optimal_allocation(&h, p + extra, 0.5).unwrap();
        prop_assert!(capacity(&h, &c2.q, 0.5) >= capacity(&h, &c1.q, 0.5) - 1e-12);
    }

    #[test]
    fn waterfill_powers_are_feasible(sv in proptest::collection::vec(0.0f64..3.0, 1..8), p in 0.01f64..10.0) {
        prop_assume!(sv.iter().any(|&g| g > 1e-6));
        let (powers, _) = waterfill(&sv, p, 1.0).unwrap();
        prop_assert!((powers.iter().sum::<f64>() - p).abs() <= 1e-9);
        prop_assert!(powers.iter().all(|&x| x >= 0.0));
        // Stronger channels never get less power.
        for i in 0..sv.len() {
            for j in 0..sv.len() {
                if sv[i] > sv[j] {
                    prop_assert!(powers[i] >= powers[j] - 1e-12);
                }
            }
        }
    }
}

#[test]
fn rank_deficient_channels_keep_reciprocity() {
    // Low-rank products are where a faulty decomposition shows up.
    let mut r = rng(35);
    for _ in 0..5000 {
        let k = r.random_range(1..=8);
        let h = &random_cmat(8, k, &mut r) * &random_cmat(k, 8, &mut r);
        let alloc = optimal_allocation(&h, 1.0, 0.3).unwrap();
        let forward = capacity_oracle(&h, &alloc.q, 0.3);
        let reverse = capacity_oracle(&h.adjoint(), &alloc.s, 0.3);
        assert!((forward - reverse).abs() <= 1e-9, "rank {k}: {forward} {reverse}");
        let rec = &alloc.left_vecs
            * CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                alloc.singular_values.len(),
                alloc.singular_values.iter().map(|&s| num_complex::Complex64::new(s, 0.0)),
            ))
            * alloc.right_vecs.adjoint();
        assert!((rec - &h).norm() <= 1e-10 * h.norm());
        assert!(alloc.singular_values.len() <= k);
    }
}
