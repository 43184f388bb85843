//! Capacity and water-filling over the eigenchannels of the effective channel.
//!
//! Capacities are natural-log (nats); divide by `ln 2` for bits.

use nalgebra::{Cholesky, DVector};
use num_complex::Complex64;

use crate::channel::CMat;
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// `ln det(M)` of a Hermitian positive-definite matrix.
pub(crate) fn hermitian_logdet(m: &CMat) -> f64 {
    match Cholesky::new(m.clone()) {
        Some(ch) => {
            2.0 * ch
                .l_dirty()
                .diagonal()
                .iter()
                .map(|z| z.re.ln())
                .sum::<f64>()
        }
        // Only reachable through rounding on a barely-PD argument.
        None => m.clone().determinant().re.ln(),
    }
}

/// `I + H Q H^H / noise`.
pub(crate) fn snr_kernel(h: &CMat, q: &CMat, noise_power: f64) -> CMat {
    let n = h.nrows();
    let mut k = h * q * h.adjoint();
    k.unscale_mut(noise_power);
    for i in 0..n {
        k[(i, i)] += Complex64::new(1.0, 0.0);
    }
    // Hermitian part only.
    (&k + k.adjoint()).scale(0.5)
}

/// `ln det(I_N + H Q H^H / noise)` in nats.
pub fn capacity(h: &CMat, q: &CMat, noise_power: f64) -> f64 {
    hermitian_logdet(&snr_kernel(h, q, noise_power))
}

/// Exact water-filling over channels with gains `singular_values^2 / noise`.
///
/// Returns per-channel powers (same order as the input) and the water level.
pub fn waterfill(singular_values: &[f64], power_budget: f64, noise_power: f64) -> Result<(Vec<f64>, f64)> {
    let mut active: Vec<(usize, f64)> = singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(i, &s)| (i, noise_power / (s * s)))
        .collect();
    if active.is_empty() {
        return Err(Error::AllChannelsZero);
    }
    active.sort_by(|a, b| a.1.total_cmp(&b.1));

    // Largest k whose level clears the k-th inverse gain.
    let mut level = 0.0;
    let mut prefix = 0.0;
    for (k, &(_, inv_gain)) in active.iter().enumerate() {
        prefix += inv_gain;
        let mu = (power_budget + prefix) / (k + 1) as f64;
        if mu > inv_gain {
            level = mu;
        } else {
            break;
        }
    }
    let mut powers = vec![0.0; singular_values.len()];
    for &(i, inv_gain) in &active {
        powers[i] = (level - inv_gain).max(0.0);
    }
    Ok((powers, level))
}

/// Water-filling solution for one effective channel.
#[derive(Debug, Clone)]
pub struct PowerAllocation {
    /// Descending, rank-truncated.
    pub singular_values: Vec<f64>,
    pub left_vecs: CMat,
    pub right_vecs: CMat,
    pub powers: Vec<f64>,
    pub water_level: f64,
    /// Transmit covariance `V diag(P) V^H`.
    pub q: CMat,
    /// Reverse-link covariance `U diag(P) U^H`.
    pub s: CMat,
}

impl PowerAllocation {
    /// Allocation that transmits nothing; used when the channel vanishes.
    pub fn silent(num_tx: usize, num_rx: usize) -> Self {
        Self {
            singular_values: Vec::new(),
            left_vecs: CMat::zeros(num_rx, 0),
            right_vecs: CMat::zeros(num_tx, 0),
            powers: Vec::new(),
            water_level: 0.0,
            q: CMat::zeros(num_tx, num_tx),
            s: CMat::zeros(num_rx, num_rx),
        }
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

fn weighted_gram(vecs: &CMat, powers: &[f64]) -> CMat {
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new(powers[j], 0.0);
    }
    let g = scaled * vecs.adjoint();
    (&g + g.adjoint()).scale(0.5)
}

pub fn optimal_allocation(h: &CMat, power_budget: f64, noise_power: f64) -> Result<PowerAllocation> {
    let (n, m) = h.shape();
    // nalgebra's complex SVD occasionally returns a wrong factorization for
    // rank-deficient inputs, which these channels always are when L < M, N.
    let svd = faer::Mat::<Complex64>::from_fn(n, m, |i, j| h[(i, j)])
        .thin_svd()
        .map_err(|_| Error::SvdNoConvergence)?;
    let (u, v, sv) = (svd.U(), svd.V(), svd.S().column_vector());
    let mut order: Vec<usize> = (0..sv.nrows()).collect();
    order.sort_by(|&a, &b| sv[b].re.total_cmp(&sv[a].re));
    let largest = order.first().map_or(0.0, |&i| sv[i].re);
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Error::ZeroChannel);
    }
    let kept: Vec<usize> = order.into_iter().filter(|&i| sv[i].re > RANK_CUTOFF * largest).collect();
    let singular_values: Vec<f64> = kept.iter().map(|&i| sv[i].re).collect();
    let left_vecs = CMat::from_fn(n, kept.len(), |r, c| u[(r, kept[c])]);
    let right_vecs = CMat::from_fn(m, kept.len(), |r, c| v[(r, kept[c])]);
    let (powers, water_level) = waterfill(&singular_values, power_budget, noise_power)?;
    let q = weighted_gram(&right_vecs, &powers);
    let s = weighted_gram(&left_vecs, &powers);
    Ok(PowerAllocation {
        singular_values,
        left_vecs,
        right_vecs,
        powers,
        water_level,
        q,
        s,
    })
}

/// Eigenvalues of `H Q H^H / noise`, descending, with values below
/// `1e-10` of the largest dropped.
pub fn snr_matrix_eigenvalues(h: &CMat, q: &CMat, noise_power: f64) -> Vec<f64> {
    let g = (h * q * h.adjoint()).unscale(noise_power);
    let g = (&g + g.adjoint()).scale(0.5);
    let eig: DVector<f64> = g.symmetric_eigenvalues();
    let mut vals: Vec<f64> = eig.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let max = vals.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Vec::new();
    }
    vals.retain(|&x| x >= 1e-10 * max);
    vals
}
