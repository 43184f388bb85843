//! Per-coordinate position updates.
//!
//! The objective for one transmit position is `ln det(I + H Q H^H / noise)`
//! with `Q` held fixed; for one receive position it is
//! `ln det(I + H^H S H / noise)` with the reverse-link covariance `S` fixed.
//! Analytic first and second derivatives feed a scalar trust-region step.

use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::allocation::{capacity, snr_kernel};
use crate::channel::{field_response_derivative, AntennaLayout, CMat, ChannelRealization, RMat};
use crate::config::SystemConfig;
use crate::coupling::{decompose, inv_sqrt_derivatives, mc_matrix, CouplingDecomposition};
use crate::error::{Error, Result};

/// Whether the effective channel includes the coupling whitening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingModel {
    Full,
    /// Coupling matrices taken as identity, so `H = H~`.
    Identity,
}

pub(crate) fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Effective channel and everything needed to differentiate it at one layout.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub model: CouplingModel,
    pub layout: AntennaLayout,
    /// `G(t)`, `L_T x M`.
    pub g: CMat,
    /// `F(r)`, `L_R x N`.
    pub f: CMat,
    pub tx: CouplingDecomposition,
    pub rx: CouplingDecomposition,
    pub raw: CMat,
    /// `C_R^{-1/2} H~ C_T^{-1/2}`.
    pub h: CMat,
}

impl LinkState {
    pub fn new(realization: &ChannelRealization, layout: &AntennaLayout, model: CouplingModel) -> Result<Self> {
        let g = realization.tx_frm(&layout.tx);
        let f = realization.rx_frm(&layout.rx);
        let raw = f.adjoint() * realization.prm() * &g;
        let (tx, rx, h) = match model {
            CouplingModel::Identity => (
                CouplingDecomposition::identity(layout.tx.len()),
                CouplingDecomposition::identity(layout.rx.len()),
                raw.clone(),
            ),
            CouplingModel::Full => {
                let tx = decompose(&mc_matrix(&layout.tx))?;
                let rx = decompose(&mc_matrix(&layout.rx))?;
                let h = to_complex(&rx.inv_sqrt) * &raw * to_complex(&tx.inv_sqrt);
                (tx, rx, h)
            }
        };
        Ok(Self {
            model,
            layout: layout.clone(),
            g,
            f,
            tx,
            rx,
            raw,
            h,
        })
    }
}

pub fn effective_channel(
    realization: &ChannelRealization,
    layout: &AntennaLayout,
    model: CouplingModel,
) -> Result<CMat> {
    Ok(LinkState::new(realization, layout, model)?.h)
}

/// First and second derivative of a scalar objective along one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativePair {
    pub first: f64,
    pub second: f64,
}

/// Derivatives of `ln det(I + H Q H^H / noise)` given the first and second
/// derivatives of `H` along one direction, `Q` fixed.
pub fn logdet_derivatives(h: &CMat, dh: &CMat, d2h: &CMat, q: &CMat, noise_power: f64) -> DerivativePair {
    let kernel = snr_kernel(h, q, noise_power);
    let phi = Cholesky::new(kernel.clone())
        .map(|c| c.inverse())
        .or_else(|| kernel.try_inverse())
        .expect("I + H Q H^H is positive definite");
    let hq_h = q * h.adjoint();
    let dq_h = q * dh.adjoint();
    let phi_b = &phi * (dh * &hq_h);
    let first = 2.0 / noise_power * phi_b.trace().re;

    let curvature = &phi * (d2h * &hq_h + dh * &dq_h);
    let cross = &phi_b * &phi_b;
    let mixed = &phi_b * &phi * (h * &dq_h);
    let second = 2.0 / noise_power * (curvature.trace().re - (cross.trace().re + mixed.trace().re) / noise_power);
    DerivativePair { first, second }
}

/// `(dC^{-1/2}, d2C^{-1/2})` for one position, zero under identity coupling.
fn whitening_derivatives(
    model: CouplingModel,
    positions: &[f64],
    dec: &CouplingDecomposition,
    index: usize,
) -> Result<(CMat, CMat)> {
    let n = positions.len();
    match model {
        CouplingModel::Identity => Ok((CMat::zeros(n, n), CMat::zeros(n, n))),
        CouplingModel::Full => {
            let d = inv_sqrt_derivatives(positions, dec, index)?;
            Ok((to_complex(&d.first), to_complex(&d.second)))
        }
    }
}

/// `(dH, d2H)` with respect to transmit position `m`.
pub fn tx_channel_derivatives(state: &LinkState, realization: &ChannelRealization, m: usize) -> Result<(CMat, CMat)> {
    let t = &state.layout.tx;
    let dg = field_response_derivative(t, realization.aod(), m, 1)?;
    let d2g = field_response_derivative(t, realization.aod(), m, 2)?;
    let y = to_complex(&state.tx.inv_sqrt);
    let (dy, d2y) = whitening_derivatives(state.model, t, &state.tx, m)?;
    let left = to_complex(&state.rx.inv_sqrt) * state.f.adjoint() * realization.prm();
    let dh = &left * (&dg * &y + &state.g * &dy);
    let d2h = &left * (&d2g * &y + (&dg * &dy).scale(2.0) + &state.g * &d2y);
    Ok((dh, d2h))
}

/// `(dH, d2H)` with respect to receive position `n`.
pub fn rx_channel_derivatives(state: &LinkState, realization: &ChannelRealization, n: usize) -> Result<(CMat, CMat)> {
    let r = &state.layout.rx;
    let dfh = field_response_derivative(r, realization.aoa(), n, 1)?.adjoint();
    let d2fh = field_response_derivative(r, realization.aoa(), n, 2)?.adjoint();
    let y = to_complex(&state.rx.inv_sqrt);
    let (dy, d2y) = whitening_derivatives(state.model, r, &state.rx, n)?;
    let fh = state.f.adjoint();
    let right = realization.prm() * &state.g * to_complex(&state.tx.inv_sqrt);
    let dh = (&dy * &fh + &y * &dfh) * &right;
    let d2h = (&d2y * &fh + (&dy * &dfh).scale(2.0) + &y * &d2fh) * &right;
    Ok((dh, d2h))
}

/// Derivatives of the transmit-side objective in `t_m`.
pub fn tx_objective_derivatives(
    state: &LinkState,
    realization: &ChannelRealization,
    q: &CMat,
    noise_power: f64,
    m: usize,
) -> Result<DerivativePair> {
    let (dh, d2h) = tx_channel_derivatives(state, realization, m)?;
    Ok(logdet_derivatives(&state.h, &dh, &d2h, q, noise_power))
}

/// Derivatives of the receive-side objective `ln det(I + H^H S H / noise)` in
/// `r_n`.
pub fn rx_objective_derivatives(
    state: &LinkState,
    realization: &ChannelRealization,
    s: &CMat,
    noise_power: f64,
    n: usize,
) -> Result<DerivativePair> {
    let (dh, d2h) = rx_channel_derivatives(state, realization, n)?;
    Ok(logdet_derivatives(
        &state.h.adjoint(),
        &dh.adjoint(),
        &d2h.adjoint(),
        s,
        noise_power,
    ))
}

/// Transmit-side objective with `Q` fixed.
pub fn tx_objective(state: &LinkState, q: &CMat, noise_power: f64) -> f64 {
    capacity(&state.h, q, noise_power)
}

/// Receive-side objective with `S` fixed.
pub fn rx_objective(state: &LinkState, s: &CMat, noise_power: f64) -> f64 {
    capacity(&state.h.adjoint(), s, noise_power)
}

/// Interval allowed for `positions[index]` by the aperture and the spacing
/// to its current neighbours.
pub fn coordinate_bounds(positions: &[f64], index: usize, aperture: f64, min_spacing: f64) -> (f64, f64) {
    let lo = if index == 0 {
        0.0
    } else {
        let prev = positions[index - 1];
        let mut lo = prev + min_spacing;
        while lo - prev < min_spacing {
            lo = lo.next_up();
        }
        lo
    };
    let hi = if index + 1 == positions.len() {
        aperture
    } else {
        let next = positions[index + 1];
        let mut hi = next - min_spacing;
        while next - hi < min_spacing {
            hi = hi.next_down();
        }
        hi
    };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrmParams {
    pub rho1: f64,
    pub rho2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub delta0: f64,
    pub radius_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
}

impl From<&SystemConfig> for TrmParams {
    fn from(cfg: &SystemConfig) -> Self {
        Self {
            rho1: cfg.trm_rho1,
            rho2: cfg.trm_rho2,
            nu1: cfg.trm_nu1,
            nu2: cfg.trm_nu2,
            delta0: cfg.trm_delta0,
            radius_tol: cfg.trm_radius_tol,
            step_tol: cfg.trm_step_tol,
            max_iters: cfg.max_inner_iters,
        }
    }
}

/// Trust region around the current coordinate, clipped to the constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrmState {
    pub radius: f64,
    pub coordinate_value: f64,
    pub feasible_lo: f64,
    pub feasible_hi: f64,
}

impl TrmState {
    pub fn new(value: f64, radius: f64, bounds: (f64, f64)) -> Self {
        Self {
            radius,
            coordinate_value: value,
            feasible_lo: (value - radius).max(bounds.0),
            feasible_hi: (value + radius).min(bounds.1),
        }
    }

    /// Value of the local quadratic model relative to the expansion point.
    fn model_gain(d: DerivativePair, step: f64) -> f64 {
        d.first * step + 0.5 * d.second * step * step
    }

    /// Maximizer of the quadratic model over the feasible interval.
    pub fn model_maximizer(&self, d: DerivativePair) -> f64 {
        let x = self.coordinate_value;
        if d.second < 0.0 {
            (x - d.first / d.second).clamp(self.feasible_lo, self.feasible_hi)
        } else {
            let lo = Self::model_gain(d, self.feasible_lo - x);
            let hi = Self::model_gain(d, self.feasible_hi - x);
            if lo > hi {
                self.feasible_lo
            } else {
                self.feasible_hi
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrmStep {
    pub from: f64,
    pub candidate: f64,
    pub rho: f64,
    pub accepted: bool,
    /// Radius after the acceptance rule ran.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrmOutcome {
    pub value: f64,
    pub objective: f64,
    pub radius: f64,
    pub trace: Vec<TrmStep>,
}

impl TrmOutcome {
    pub fn accepted(&self) -> usize {
        self.trace.iter().filter(|s| s.accepted).count()
    }

    pub fn rejected(&self) -> usize {
        self.trace.len() - self.accepted()
    }
}

/// Maximizes a scalar objective over `bounds` starting from `start` with a
/// bounded number of trust-region steps. The returned objective is never
/// below the starting one.
///
/// An objective evaluation failing with [`Error::NotPositiveDefinite`] counts
/// as a rejected candidate.
pub fn trm_update_coordinate<F, D>(
    mut objective: F,
    mut derivs: D,
    start: f64,
    bounds: (f64, f64),
    params: &TrmParams,
) -> Result<TrmOutcome>
where
    F: FnMut(f64) -> Result<f64>,
    D: FnMut(f64) -> Result<DerivativePair>,
{
    let mut x = start;
    let mut hx = objective(x)?;
    let mut radius = params.delta0;
    let mut trace = Vec::new();
    if bounds.0 >= bounds.1 {
        return Ok(TrmOutcome {
            value: x,
            objective: hx,
            radius,
            trace,
        });
    }
    let mut d = derivs(x)?;
    for _ in 0..params.max_iters {
        if radius < params.radius_tol {
            break;
        }
        let state = TrmState::new(x, radius, bounds);
        if state.feasible_hi <= state.feasible_lo {
            break;
        }
        let candidate = state.model_maximizer(d);
        let step = candidate - x;
        if step.abs() < params.step_tol {
            break;
        }
        let predicted = TrmState::model_gain(d, step);
        if !(predicted > 0.0) {
            // Stationary for the model: nothing left to gain.
            break;
        }
        let h_candidate = match objective(candidate) {
            Ok(v) => v,
            Err(Error::NotPositiveDefinite { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        let rho = (h_candidate - hx) / predicted;
        let accepted = rho > params.rho1;
        if accepted {
            if rho > params.rho2 && step.abs() >= radius * (1.0 - 1e-12) {
                radius *= params.nu1;
            }
            x = candidate;
            hx = h_candidate;
        } else {
            radius /= params.nu2;
        }
        trace.push(TrmStep {
            from: state.coordinate_value,
            candidate,
            rho,
            accepted,
            radius,
        });
        if accepted {
            d = derivs(x)?;
        }
    }
    Ok(TrmOutcome {
        value: x,
        objective: hx,
        radius,
        trace,
    })
}
