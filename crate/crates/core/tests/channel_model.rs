mod common;

use common::rng;
use mc_mimo::channel::{
    field_response, raw_channel, sample_realization, steering_vector, AntennaLayout, ChannelRealization, CMat,
};
use mc_mimo::optimizer::{effective_channel, CouplingModel};
use mc_mimo::{PrmModel, SystemConfig};
use num_complex::Complex64;
use proptest::prelude::*;

fn arb_positions(max: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0f64..50.0, 1..max)
}

fn arb_angles(max: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..std::f64::consts::PI, 1..max)
}

fn cgauss(seed: u64, rows: usize, cols: usize) -> CMat {
    common::random_cmat(rows, cols, &mut rng(seed))
}

proptest! {
    #[test]
    fn steering_entries_have_unit_modulus(pos in arb_positions(10), theta in 0.0f64..std::f64::consts::PI) {
        for e in steering_vector(&pos, theta) {
            prop_assert!((e.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_path_shift_keeps_magnitudes(
        tx in arb_positions(6), rx in arb_positions(6),
        aod in 0.0f64..3.14, aoa in 0.0f64..3.14, shift in -5.0f64..5.0, seed in 0u64..100,
    ) {
        let real = ChannelRealization::new(vec![aod], vec![aoa], cgauss(seed, 1, 1)).unwrap();
        let a = raw_channel(&real, &AntennaLayout::new(tx.clone(), rx.clone()));
        let moved: Vec<f64> = tx.iter().map(|x| x + shift).collect();
        let b = raw_channel(&real, &AntennaLayout::new(moved, rx));
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-10);
        }
    }

    #[test]
    fn multipath_shift_is_a_path_phase(
        tx in arb_positions(6), rx in arb_positions(6),
        aod in arb_angles(4), shift in -5.0f64..5.0, seed in 0u64..100,
    ) {
        // Moving every transmit antenna by c multiplies path p by
        // exp(j 2 pi c sin(theta_p)), which can be folded into the path matrix.
        let l = aod.len();
        let aoa = vec![0.4; 2];
        let prm = cgauss(seed, 2, l);
        let real = ChannelRealization::new(aod.clone(), aoa.clone(), prm.clone()).unwrap();
        let moved: Vec<f64> = tx.iter().map(|x| x + shift).collect();
        let b = raw_channel(&real, &AntennaLayout::new(moved, rx.clone()));
        let phase = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            l,
            aod.iter().map(|t| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * shift * t.sin())),
        ));
        let folded = ChannelRealization::new(aod, aoa, prm * phase).unwrap();
        let c = raw_channel(&folded, &AntennaLayout::new(tx, rx));
        prop_assert!((b - c).norm() <= 1e-9);
    }
}

#[test]
fn field_response_rows_are_steering_vectors() {
    let pos = [0.0, 0.3, 1.7];
    let angles = [0.2, 1.0, 2.9];
    let g = field_response(&pos, &angles);
    for (p, &a) in angles.iter().enumerate() {
        let v = steering_vector(&pos, a);
        for k in 0..pos.len() {
            assert_eq!(g[(p, k)], v[k]);
        }
    }
}

#[test]
fn identity_model_is_bit_exact() {
    let cfg = SystemConfig::default();
    let mut r = rng(41);
    let real = sample_realization(&cfg, &mut r).unwrap();
    let layout = AntennaLayout::uniform_grid(8, 8, 16.0, 16.0);
    let h = effective_channel(&real, &layout, CouplingModel::Identity).unwrap();
    assert_eq!(h, raw_channel(&real, &layout));
}

#[test]
fn prm_shapes_and_validation() {
    let mut r = rng(42);
    let cfg = SystemConfig {
        num_tx_paths: 2,
        num_rx_paths: 5,
        prm_model: PrmModel::Full,
        ..SystemConfig::default()
    };
    let real = sample_realization(&cfg, &mut r).unwrap();
    assert_eq!(real.prm().shape(), (5, 2));
    let diag = SystemConfig {
        prm_model: PrmModel::Diagonal,
        ..cfg
    };
    assert!(sample_realization(&diag, &mut r).is_err());
    assert!(ChannelRealization::new(vec![0.1], vec![0.2, 0.3], CMat::zeros(1, 1)).is_err());
}

#[test]
fn angles_stay_in_range_and_layouts_are_feasible() {
    let cfg = SystemConfig::default();
    let mut r = rng(43);
    for _ in 0..200 {
        let real = sample_realization(&cfg, &mut r).unwrap();
        assert!(real.aod().iter().chain(real.aoa()).all(|a| (0.0..std::f64::consts::PI).contains(a)));
        let l = AntennaLayout::random_feasible(8, 8, 16.0, 16.0, 0.1, &mut r);
        assert!(l.check_config(&cfg).is_ok());
    }
    assert!(AntennaLayout::fixed_spacing(8, 8, 0.1).check(16.0, 16.0, 0.1).is_ok());
    assert!(AntennaLayout::new(vec![0.0, 0.05], vec![0.0]).check(1.0, 1.0, 0.1).is_err());
}
