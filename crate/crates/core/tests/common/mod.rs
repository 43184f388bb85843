#![allow(dead_code)]

use mc_mimo::channel::{sample_realization, AntennaLayout, ChannelRealization, CMat};
use mc_mimo::derivcheck::clustered_layout;
use mc_mimo::SystemConfig;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_config(m: usize, n: usize) -> SystemConfig {
    SystemConfig {
        num_tx: m,
        num_rx: n,
        aperture_tx: 2.0 * m as f64,
        aperture_rx: 2.0 * n as f64,
        ..SystemConfig::default()
    }
}

/// A realization and a layout with some near-minimum spacings.
pub fn instance(cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> (ChannelRealization, AntennaLayout) {
    let real = sample_realization(cfg, rng).unwrap();
    let layout = AntennaLayout::new(
        clustered_layout(cfg.num_tx, cfg.min_spacing, rng),
        clustered_layout(cfg.num_rx, cfg.min_spacing, rng),
    );
    (real, layout)
}

pub fn random_cmat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

/// Random PSD matrix scaled to trace `power`.
pub fn random_psd<R: Rng>(dim: usize, power: f64, rng: &mut R) -> CMat {
    let a = random_cmat(dim, rng.random_range(1..=dim), rng);
    let q = &a * a.adjoint();
    let tr = q.trace().re;
    q.unscale(tr / power)
}

/// Brute-force log det via eigenvalues of a Hermitian matrix.
pub fn logdet_eig(m: &CMat) -> f64 {
    let h = (m + m.adjoint()).unscale(2.0);
    h.symmetric_eigenvalues().iter().map(|v| v.ln()).sum()
}

/// `ln det(I + H Q H^H / noise)` computed independently of the library.
pub fn capacity_oracle(h: &CMat, q: &CMat, noise: f64) -> f64 {
    let n = h.nrows();
    let m = CMat::identity(n, n) + (h * q * h.adjoint()).unscale(noise);
    logdet_eig(&m)
}
