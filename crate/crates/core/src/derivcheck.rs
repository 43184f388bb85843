//! Finite-difference audit of the analytic derivatives, used by the
//! `check-derivatives` subcommand.
//!
//! References are built only from objective and matrix-function
//! evaluations at perturbed layouts.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::optimal_allocation;
use crate::channel::{sample_realization, AntennaLayout, RMat};
use crate::config::SystemConfig;
use crate::coupling::{decompose, inv_sqrt_derivatives, mc_matrix, mc_matrix_derivative, sqrt_derivative};
use crate::error::Result;
use crate::optimizer::{
    rx_objective, rx_objective_derivatives, tx_objective, tx_objective_derivatives, CouplingModel, LinkState,
};

pub const FIRST_STEP: f64 = 1e-5;
pub const SECOND_STEP: f64 = 1e-4;

/// `|a - b| / max(|b|, floor)`.
pub fn relative_error(analytic: f64, reference: f64, floor: f64) -> f64 {
    (analytic - reference).abs() / reference.abs().max(floor)
}

pub fn matrix_relative_error(analytic: &RMat, reference: &RMat) -> f64 {
    (analytic - reference).norm() / reference.norm().max(1e-12)
}

/// Layout with some spacings near the minimum so coupling is strong.
pub fn clustered_layout<R: Rng + ?Sized>(count: usize, min_spacing: f64, rng: &mut R) -> Vec<f64> {
    let mut x = rng.random::<f64>();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(x);
        x += min_spacing + 0.6 * rng.random::<f64>();
    }
    out
}

/// Central differences of `f` at `x`: `(first, second)` with the two steps.
pub fn central_differences(f: impl Fn(f64) -> Result<f64>, x: f64) -> Result<(f64, f64)> {
    let h1 = FIRST_STEP;
    let first = (f(x + h1)? - f(x - h1)?) / (2.0 * h1);
    let h2 = SECOND_STEP;
    let second = (f(x + h2)? - 2.0 * f(x)? + f(x - h2)?) / (h2 * h2);
    Ok((first, second))
}

/// Richardson-extrapolated second difference of a matrix function, built
/// from the plain differences at `h` and `h/2`. Small steps lose too many
/// digits when the coupling matrix is close to singular.
pub fn matrix_second_difference(f: impl Fn(f64) -> Result<RMat>, x: f64, h: f64) -> Result<RMat> {
    let f0 = f(x)?;
    let plain = |s: f64| -> Result<RMat> { Ok((f(x + s)? - &f0 * 2.0 + f(x - s)?) / (s * s)) };
    let coarse = plain(h)?;
    let fine = plain(h / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

pub const MATRIX_SECOND_STEP: f64 = 2e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerivativeReport {
    pub trials: usize,
    pub tx_first: f64,
    pub tx_second: f64,
    pub rx_first: f64,
    pub rx_second: f64,
    pub inv_sqrt_first: f64,
    pub inv_sqrt_second: f64,
    pub sqrt_first: f64,
}

impl fmt::Display for DerivativeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials: {}", self.trials)?;
        writeln!(f, "max rel err h'_T       {:.3e}", self.tx_first)?;
        writeln!(f, "max rel err h''_T      {:.3e}", self.tx_second)?;
        writeln!(f, "max rel err h'_R       {:.3e}", self.rx_first)?;
        writeln!(f, "max rel err h''_R      {:.3e}", self.rx_second)?;
        writeln!(f, "max rel err dC^-1/2    {:.3e}", self.inv_sqrt_first)?;
        writeln!(f, "max rel err d2C^-1/2   {:.3e}", self.inv_sqrt_second)?;
        write!(f, "max rel err dC^1/2     {:.3e}", self.sqrt_first)
    }
}

/// Runs `trials` random 4x4 instances with three paths per side and
/// 0.1-wavelength minimum spacing.
pub fn check_derivatives(trials: usize, seed: u64) -> Result<DerivativeReport> {
    let cfg = SystemConfig {
        num_tx: 4,
        num_rx: 4,
        aperture_tx: 8.0,
        aperture_rx: 8.0,
        ..SystemConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = DerivativeReport {
        trials,
        ..Default::default()
    };
    let noise = cfg.noise_power;
    for _ in 0..trials {
        let real = sample_realization(&cfg, &mut rng)?;
        let layout = AntennaLayout::new(
            clustered_layout(4, cfg.min_spacing, &mut rng),
            clustered_layout(4, cfg.min_spacing, &mut rng),
        );
        let state = LinkState::new(&real, &layout, CouplingModel::Full)?;
        let alloc = optimal_allocation(&state.h, cfg.power_budget, noise)?;

        for m in 0..4 {
            let d = tx_objective_derivatives(&state, &real, &alloc.q, noise, m)?;
            let (f1, f2) = central_differences(
                |x| {
                    let mut l = layout.clone();
                    l.tx[m] = x;
                    Ok(tx_objective(&LinkState::new(&real, &l, CouplingModel::Full)?, &alloc.q, noise))
                },
                layout.tx[m],
            )?;
            rep.tx_first = rep.tx_first.max(relative_error(d.first, f1, 1e-6));
            rep.tx_second = rep.tx_second.max(relative_error(d.second, f2, 1e-6));

            let d = rx_objective_derivatives(&state, &real, &alloc.s, noise, m)?;
            let (f1, f2) = central_differences(
                |x| {
                    let mut l = layout.clone();
                    l.rx[m] = x;
                    Ok(rx_objective(&LinkState::new(&real, &l, CouplingModel::Full)?, &alloc.s, noise))
                },
                layout.rx[m],
            )?;
            rep.rx_first = rep.rx_first.max(relative_error(d.first, f1, 1e-6));
            rep.rx_second = rep.rx_second.max(relative_error(d.second, f2, 1e-6));

            let pos = &layout.tx;
            let dec = decompose(&mc_matrix(pos))?;
            let an = inv_sqrt_derivatives(pos, &dec, m)?;
            let s1 = sqrt_derivative(&dec, &mc_matrix_derivative(pos, m, 1)?)?;
            let at = |x: f64| {
                let mut p = pos.clone();
                p[m] = x;
                decompose(&mc_matrix(&p))
            };
            let h1 = FIRST_STEP;
            let (plus, minus) = (at(pos[m] + h1)?, at(pos[m] - h1)?);
            let fd_inv = (&plus.inv_sqrt - &minus.inv_sqrt) / (2.0 * h1);
            let fd_sqrt = (&plus.sqrt - &minus.sqrt) / (2.0 * h1);
            let fd_inv2 = matrix_second_difference(|x| Ok(at(x)?.inv_sqrt), pos[m], MATRIX_SECOND_STEP)?;
            rep.inv_sqrt_first = rep.inv_sqrt_first.max(matrix_relative_error(&an.first, &fd_inv));
            rep.inv_sqrt_second = rep.inv_sqrt_second.max(matrix_relative_error(&an.second, &fd_inv2));
            rep.sqrt_first = rep.sqrt_first.max(matrix_relative_error(&s1, &fd_sqrt));
        }
    }
    Ok(rep)
}
