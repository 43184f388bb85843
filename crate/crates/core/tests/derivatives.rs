mod common;

use common::{instance, rng, small_config};
use mc_mimo::allocation::optimal_allocation;
use mc_mimo::channel::{field_response, field_response_derivative, AntennaLayout, ChannelRealization, CMat};
use mc_mimo::coupling::{mc_matrix, mc_matrix_derivative};
use mc_mimo::derivcheck::{central_differences, relative_error, FIRST_STEP, SECOND_STEP};
use mc_mimo::optimizer::{
    rx_objective, rx_objective_derivatives, tx_objective, tx_objective_derivatives, CouplingModel, LinkState,
};
use num_complex::Complex64;
use rand::Rng;

fn cmat_rel(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

#[test]
fn field_response_derivatives_match_differences() {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let pos: Vec<f64> = (0..5).map(|k| k as f64 * 0.7 + r.random::<f64>() * 0.3).collect();
        let angles: Vec<f64> = (0..3).map(|_| r.random_range(0.0..std::f64::consts::PI)).collect();
        for i in 0..pos.len() {
            let at = |x: f64| {
                let mut p = pos.clone();
                p[i] = x;
                field_response(&p, &angles)
            };
            let h = FIRST_STEP;
            let fd1 = (at(pos[i] + h) - at(pos[i] - h)).unscale(2.0 * h);
            let an1 = field_response_derivative(&pos, &angles, i, 1).unwrap();
            worst = worst.max(cmat_rel(&an1, &fd1));
            // Second derivative as a difference of analytic first derivatives.
            let d1 = |x: f64| {
                let mut p = pos.clone();
                p[i] = x;
                field_response_derivative(&p, &angles, i, 1).unwrap()
            };
            let fd2 = (d1(pos[i] + h) - d1(pos[i] - h)).unscale(2.0 * h);
            let an2 = field_response_derivative(&pos, &angles, i, 2).unwrap();
            worst = worst.max(cmat_rel(&an2, &fd2));
        }
    }
    assert!(worst < 1e-6, "worst {worst:e}");
}

#[test]
fn field_response_derivative_rejects_bad_input() {
    assert!(field_response_derivative(&[0.0, 1.0], &[0.2], 2, 1).is_err());
    assert!(field_response_derivative(&[0.0, 1.0], &[0.2], 0, 3).is_err());
}

#[test]
fn coupling_matrix_derivatives_match_differences() {
    let mut r = rng(12);
    for _ in 0..20 {
        let mut pos = vec![0.0];
        for _ in 0..5 {
            let last = *pos.last().unwrap();
            pos.push(last + 0.1 + r.random::<f64>() * 0.5);
        }
        for i in 0..pos.len() {
            let at = |x: f64| {
                let mut p = pos.clone();
                p[i] = x;
                mc_matrix(&p)
            };
            let h = FIRST_STEP;
            let fd1 = (at(pos[i] + h) - at(pos[i] - h)) / (2.0 * h);
            let an1 = mc_matrix_derivative(&pos, i, 1).unwrap();
            assert!((&an1 - &fd1).norm() / fd1.norm() < 1e-6);
            let h2 = SECOND_STEP;
            let fd2 = (at(pos[i] + h2) - at(pos[i]) * 2.0 + at(pos[i] - h2)) / (h2 * h2);
            let an2 = mc_matrix_derivative(&pos, i, 2).unwrap();
            assert!((&an2 - &fd2).norm() / fd2.norm() < 1e-4);
            // Only row and column i move.
            for a in 0..pos.len() {
                for b in 0..pos.len() {
                    if a != i && b != i {
                        assert_eq!(an1[(a, b)], 0.0);
                    }
                }
            }
            assert_eq!(an1[(i, i)], 0.0);
        }
    }
}

#[test]
fn coupling_second_derivative_near_coincident_pair() {
    // Exercises the small-argument branch of the sinc derivatives.
    let pos = [0.0, 1e-5];
    let d2 = mc_matrix_derivative(&pos, 1, 2).unwrap();
    let k = 2.0 * std::f64::consts::PI;
    assert!((d2[(0, 1)] - (-k * k / 3.0)).abs() < 1e-6 * k * k);
    let d1 = mc_matrix_derivative(&[0.0, 0.0], 1, 1).unwrap();
    assert_eq!(d1[(0, 1)], 0.0);
}

fn objective_errors(model: CouplingModel, seed: u64) -> [f64; 4] {
    let cfg = small_config(4, 4);
    let mut r = rng(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..20 {
        let (real, layout) = instance(&cfg, &mut r);
        let state = LinkState::new(&real, &layout, model).unwrap();
        let alloc = optimal_allocation(&state.h, cfg.power_budget, cfg.noise_power).unwrap();
        let noise = cfg.noise_power;
        for m in 0..4 {
            let d = tx_objective_derivatives(&state, &real, &alloc.q, noise, m).unwrap();
            let (f1, f2) = central_differences(
                |x| {
                    let mut l = layout.clone();
                    l.tx[m] = x;
                    Ok(tx_objective(&LinkState::new(&real, &l, model)?, &alloc.q, noise))
                },
                layout.tx[m],
            )
            .unwrap();
            worst[0] = worst[0].max(relative_error(d.first, f1, 1e-6));
            worst[1] = worst[1].max(relative_error(d.second, f2, 1e-6));
            let d = rx_objective_derivatives(&state, &real, &alloc.s, noise, m).unwrap();
            let (f1, f2) = central_differences(
                |x| {
                    let mut l = layout.clone();
                    l.rx[m] = x;
                    Ok(rx_objective(&LinkState::new(&real, &l, model)?, &alloc.s, noise))
                },
                layout.rx[m],
            )
            .unwrap();
            worst[2] = worst[2].max(relative_error(d.first, f1, 1e-6));
            worst[3] = worst[3].max(relative_error(d.second, f2, 1e-6));
        }
    }
    worst
}

#[test]
fn objective_derivatives_with_coupling() {
    let w = objective_errors(CouplingModel::Full, 13);
    assert!(w[0] < 1e-5 && w[2] < 1e-5, "first {w:?}");
    assert!(w[1] < 1e-3 && w[3] < 1e-3, "second {w:?}");
}

#[test]
fn objective_derivatives_without_coupling() {
    let w = objective_errors(CouplingModel::Identity, 14);
    assert!(w[0] < 1e-5 && w[2] < 1e-5, "first {w:?}");
    assert!(w[1] < 1e-3 && w[3] < 1e-3, "second {w:?}");
}

#[test]
fn symmetric_link_has_matching_sides() {
    // Same positions and angles on both ends with a Hermitian path matrix
    // make H^H(r) the same function as H(t), so the receive derivatives
    // under S = Q mirror the transmit ones.
    let mut r = rng(15);
    for _ in 0..5 {
        let angles: Vec<f64> = (0..3).map(|_| r.random_range(0.0..std::f64::consts::PI)).collect();
        let a = common::random_cmat(3, 3, &mut r);
        let sigma = &a + a.adjoint();
        let real = ChannelRealization::new(angles.clone(), angles, sigma).unwrap();
        let pos = vec![0.0, 0.13, 0.5, 0.9];
        let layout = AntennaLayout::new(pos.clone(), pos);
        let state = LinkState::new(&real, &layout, CouplingModel::Full).unwrap();
        assert!((&state.h - state.h.adjoint()).norm() < 1e-10);
        let q = common::random_psd(4, 1.0, &mut r);
        let s = q.clone();
        for m in 0..4 {
            let t = tx_objective_derivatives(&state, &real, &q, 0.5, m).unwrap();
            let rr = rx_objective_derivatives(&state, &real, &s, 0.5, m).unwrap();
            assert!((t.first - rr.first).abs() < 1e-9 * (1.0 + t.first.abs()), "{t:?} {rr:?}");
            assert!((t.second - rr.second).abs() < 1e-9 * (1.0 + t.second.abs()));
        }
    }
}

#[test]
fn zero_covariance_gives_zero_derivatives() {
    let cfg = small_config(3, 3);
    let mut r = rng(16);
    let (real, layout) = instance(&cfg, &mut r);
    let state = LinkState::new(&real, &layout, CouplingModel::Full).unwrap();
    let zero = CMat::from_element(3, 3, Complex64::new(0.0, 0.0));
    let d = tx_objective_derivatives(&state, &real, &zero, 1.0, 1).unwrap();
    assert_eq!((d.first, d.second), (0.0, 0.0));
}
