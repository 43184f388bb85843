//! Far-field multipath channel between two linear movable-antenna arrays.
//!
//! All positions are in wavelengths, so the phase of a path at position `x`
//! and angle `theta` is `2 pi x sin(theta)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{PrmModel, SystemConfig};
use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

/// Angles and path gains of one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    aod: Vec<f64>,
    aoa: Vec<f64>,
    /// Rows index receive paths, columns index transmit paths.
    prm: CMat,
}

impl ChannelRealization {
    pub fn new(aod: Vec<f64>, aoa: Vec<f64>, prm: CMat) -> Result<Self> {
        if prm.nrows() != aoa.len() || prm.ncols() != aod.len() {
            return Err(Error::ShapeMismatch(format!(
                "path response matrix is {}x{}, expected {}x{} (receive paths x transmit paths)",
                prm.nrows(),
                prm.ncols(),
                aoa.len(),
                aod.len()
            )));
        }
        if aod.is_empty() || aoa.is_empty() {
            return Err(Error::ShapeMismatch("at least one path per side required".into()));
        }
        Ok(Self { aod, aoa, prm })
    }

    pub fn aod(&self) -> &[f64] {
        &self.aod
    }

    pub fn aoa(&self) -> &[f64] {
        &self.aoa
    }

    pub fn prm(&self) -> &CMat {
        &self.prm
    }

    /// Transmit field response matrix `G(t)`, `L_T x M`.
    pub fn tx_frm(&self, tx: &[f64]) -> CMat {
        field_response(tx, &self.aod)
    }

    /// Receive field response matrix `F(r)`, `L_R x N`.
    pub fn rx_frm(&self, rx: &[f64]) -> CMat {
        field_response(rx, &self.aoa)
    }
}

/// Transmit and receive antenna positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaLayout {
    pub tx: Vec<f64>,
    pub rx: Vec<f64>,
}

impl AntennaLayout {
    pub fn new(tx: Vec<f64>, rx: Vec<f64>) -> Self {
        Self { tx, rx }
    }

    /// Evenly spread over each aperture, end to end. A single antenna sits at
    /// the aperture center.
    pub fn uniform_grid(num_tx: usize, num_rx: usize, aperture_tx: f64, aperture_rx: f64) -> Self {
        Self {
            tx: grid(num_tx, aperture_tx),
            rx: grid(num_rx, aperture_rx),
        }
    }

    /// Fixed array with constant spacing starting at the origin.
    pub fn fixed_spacing(num_tx: usize, num_rx: usize, spacing: f64) -> Self {
        Self {
            tx: spaced(num_tx, spacing),
            rx: spaced(num_rx, spacing),
        }
    }

    /// Draws a layout uniformly among those satisfying the aperture and
    /// spacing constraints (sorted uniform gaps on the slack).
    pub fn random_feasible<R: Rng + ?Sized>(
        num_tx: usize,
        num_rx: usize,
        aperture_tx: f64,
        aperture_rx: f64,
        min_spacing: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            tx: random_positions(num_tx, aperture_tx, min_spacing, rng),
            rx: random_positions(num_rx, aperture_rx, min_spacing, rng),
        }
    }

    /// Checks ordering, spacing and aperture constraints with no tolerance.
    pub fn check(&self, aperture_tx: f64, aperture_rx: f64, min_spacing: f64) -> std::result::Result<(), String> {
        check_positions("transmit", &self.tx, aperture_tx, min_spacing)?;
        check_positions("receive", &self.rx, aperture_rx, min_spacing)
    }

    pub fn check_config(&self, cfg: &SystemConfig) -> std::result::Result<(), String> {
        if self.tx.len() != cfg.num_tx || self.rx.len() != cfg.num_rx {
            return Err(format!(
                "layout has {}x{} antennas, config expects {}x{}",
                self.tx.len(),
                self.rx.len(),
                cfg.num_tx,
                cfg.num_rx
            ));
        }
        self.check(cfg.aperture_tx, cfg.aperture_rx, cfg.min_spacing)
    }
}

// k * spacing, nudged up so every gap is at least `spacing` in floating point.
fn spaced(count: usize, spacing: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(count);
    for k in 0..count {
        let mut x = k as f64 * spacing;
        if let Some(&prev) = out.last() {
            while x - prev < spacing {
                x = x.next_up();
            }
        }
        out.push(x);
    }
    out
}

fn grid(count: usize, aperture: f64) -> Vec<f64> {
    if count == 1 {
        return vec![aperture / 2.0];
    }
    let step = aperture / (count - 1) as f64;
    let mut out: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
    out[count - 1] = aperture;
    out
}

fn random_positions<R: Rng + ?Sized>(count: usize, aperture: f64, min_spacing: f64, rng: &mut R) -> Vec<f64> {
    let slack = (aperture - (count - 1) as f64 * min_spacing).max(0.0);
    let mut offsets: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(count);
    for (k, off) in offsets.into_iter().enumerate() {
        let mut x = off + k as f64 * min_spacing;
        if let Some(&prev) = out.last() {
            // Rounding in the sum can land one ulp short of the spacing.
            while x - prev < min_spacing {
                x = x.next_up();
            }
        }
        out.push(x.min(aperture));
    }
    out
}

fn check_positions(side: &str, pos: &[f64], aperture: f64, min_spacing: f64) -> std::result::Result<(), String> {
    for (k, &x) in pos.iter().enumerate() {
        if !(0.0..=aperture).contains(&x) {
            return Err(format!("{side} antenna {k} at {x} outside [0, {aperture}]"));
        }
    }
    for (k, w) in pos.windows(2).enumerate() {
        if w[1] - w[0] < min_spacing {
            return Err(format!(
                "{side} antennas {k} and {} spaced {} < {min_spacing}",
                k + 1,
                w[1] - w[0]
            ));
        }
    }
    Ok(())
}

#[inline]
fn phase_term(x: f64, sin_theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x * sin_theta)
}

/// `[exp(j 2 pi x_k sin(theta))]_k`.
pub fn steering_vector(positions: &[f64], theta: f64) -> Vec<Complex64> {
    let s = theta.sin();
    positions.iter().map(|&x| phase_term(x, s)).collect()
}

/// Stacks `steering_vector(positions, angles[p])` as row `p`.
pub fn field_response(positions: &[f64], angles: &[f64]) -> CMat {
    let sines: Vec<f64> = angles.iter().map(|a| a.sin()).collect();
    CMat::from_fn(angles.len(), positions.len(), |p, k| phase_term(positions[k], sines[p]))
}

/// First or second derivative of [`field_response`] with respect to the
/// position of antenna `index`. Only column `index` is nonzero.
pub fn field_response_derivative(positions: &[f64], angles: &[f64], index: usize, order: u8) -> Result<CMat> {
    if index >= positions.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: positions.len(),
        });
    }
    let x = positions[index];
    let mut out = CMat::zeros(angles.len(), positions.len());
    for (p, a) in angles.iter().enumerate() {
        let s = a.sin();
        let k = 2.0 * PI * s;
        let e = phase_term(x, s);
        out[(p, index)] = match order {
            1 => Complex64::new(0.0, k) * e,
            2 => -(k * k) * e,
            o => return Err(Error::UnsupportedOrder(o)),
        };
    }
    Ok(out)
}

/// `H~ = F^H Sigma G`, `N x M`.
pub fn raw_channel(realization: &ChannelRealization, layout: &AntennaLayout) -> CMat {
    let g = realization.tx_frm(&layout.tx);
    let f = realization.rx_frm(&layout.rx);
    f.adjoint() * realization.prm() * g
}

fn cscg<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sd, im * sd)
}

/// Angles i.i.d. uniform on `[0, pi)`; path gains per `cfg.prm_model`.
pub fn sample_realization<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    let (lt, lr) = (cfg.num_tx_paths, cfg.num_rx_paths);
    let aod: Vec<f64> = (0..lt).map(|_| rng.random_range(0.0..PI)).collect();
    let aoa: Vec<f64> = (0..lr).map(|_| rng.random_range(0.0..PI)).collect();
    let prm = match cfg.prm_model {
        PrmModel::Diagonal => {
            if lt != lr {
                return Err(Error::InvalidConfig(
                    "diagonal path response model requires num_tx_paths == num_rx_paths".into(),
                ));
            }
            let var = 1.0 / lt as f64;
            let mut m = CMat::zeros(lr, lt);
            for q in 0..lt {
                m[(q, q)] = cscg(rng, var);
            }
            m
        }
        PrmModel::Full => {
            let var = 1.0 / (lt * lr) as f64;
            let mut m = CMat::zeros(lr, lt);
            for q in 0..lr {
                for p in 0..lt {
                    m[(q, p)] = cscg(rng, var);
                }
            }
            m
        }
    };
    ChannelRealization::new(aod, aoa, prm)
}
