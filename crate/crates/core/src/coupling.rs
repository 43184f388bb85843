//! Mutual-coupling matrices of isotropic elements and the derivatives of
//! their square roots.
//!
//! The coupling matrix of positions `p` is `C[a][b] = sinc(2 pi (p_a - p_b))`.
//! Derivatives of `C^{1/2}` and `C^{-1/2}` with respect to one position are
//! obtained from Sylvester equations whose coefficient is `C^{1/2}`; since
//! every coefficient shares the eigenbasis of `C`, each solve is an
//! elementwise division in that basis.

use std::f64::consts::PI;

use nalgebra::{DVector, SymmetricEigen};

use crate::channel::RMat;
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which [`decompose`] refuses to invert.
pub const PD_FLOOR: f64 = 1e-13;

/// Below this argument the sinc family switches to Taylor series.
const SMALL_ARG: f64 = 1e-3;

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn sinc_d1(x: f64) -> f64 {
    if x.abs() < SMALL_ARG {
        let x2 = x * x;
        -x / 3.0 + x * x2 / 30.0
    } else {
        x.cos() / x - x.sin() / (x * x)
    }
}

fn sinc_d2(x: f64) -> f64 {
    if x.abs() < SMALL_ARG {
        -1.0 / 3.0 + x * x / 10.0
    } else {
        let (s, c) = x.sin_cos();
        -s / x - 2.0 * c / (x * x) + 2.0 * s / (x * x * x)
    }
}

/// Coupling matrix of a linear array.
pub fn mc_matrix(positions: &[f64]) -> RMat {
    let n = positions.len();
    RMat::from_fn(n, n, |a, b| {
        if a == b {
            1.0
        } else {
            sinc(2.0 * PI * (positions[a] - positions[b]))
        }
    })
}

/// Elementwise derivative of [`mc_matrix`] with respect to `positions[index]`.
///
/// Only row and column `index` are nonzero, and the diagonal entry is zero.
pub fn mc_matrix_derivative(positions: &[f64], index: usize, order: u8) -> Result<RMat> {
    let n = positions.len();
    if index >= n {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    let k = 2.0 * PI;
    let deriv: fn(f64) -> f64 = match order {
        1 => |x| 2.0 * PI * sinc_d1(x),
        2 => |x| 4.0 * PI * PI * sinc_d2(x),
        o => return Err(Error::UnsupportedOrder(o)),
    };
    let mut out = RMat::zeros(n, n);
    for b in 0..n {
        if b == index {
            continue;
        }
        // d/dp_m sinc(k (p_m - p_b)) = k sinc'(k (p_m - p_b)); the (b, m) entry
        // is the same because sinc is even.
        let v = deriv(k * (positions[index] - positions[b]));
        out[(index, b)] = v;
        out[(b, index)] = v;
    }
    Ok(out)
}

/// Symmetric eigen-factorization of a coupling matrix with its square root
/// and inverse square root.
#[derive(Debug, Clone)]
pub struct CouplingDecomposition {
    pub c: RMat,
    pub eigvals: DVector<f64>,
    pub eigvecs: RMat,
    pub sqrt: RMat,
    pub inv_sqrt: RMat,
}

impl CouplingDecomposition {
    pub fn identity(n: usize) -> Self {
        Self {
            c: RMat::identity(n, n),
            eigvals: DVector::from_element(n, 1.0),
            eigvecs: RMat::identity(n, n),
            sqrt: RMat::identity(n, n),
            inv_sqrt: RMat::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }
}

fn eigen_function(vecs: &RMat, vals: &DVector<f64>, f: impl Fn(f64) -> f64) -> RMat {
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(vals[j]);
    }
    let out = scaled * vecs.transpose();
    // Symmetrize away rounding.
    (&out + out.transpose()) * 0.5
}

pub fn decompose(c: &RMat) -> Result<CouplingDecomposition> {
    if !c.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "coupling matrix is {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let floor = PD_FLOOR * max.max(0.0);
    if !(min > floor) {
        return Err(Error::NotPositiveDefinite { min_eig: min, floor });
    }
    let sqrt = eigen_function(&eig.eigenvectors, &eig.eigenvalues, f64::sqrt);
    let inv_sqrt = eigen_function(&eig.eigenvectors, &eig.eigenvalues, |l| 1.0 / l.sqrt());
    Ok(CouplingDecomposition {
        c: c.clone(),
        eigvals: eig.eigenvalues,
        eigvecs: eig.eigenvectors,
        sqrt,
        inv_sqrt,
    })
}

/// Solves `X A + A X = B` given `A = V diag(coeffs) V^T`.
fn solve_in_eigenbasis(vecs: &RMat, coeffs: &DVector<f64>, b: &RMat) -> Result<RMat> {
    let n = coeffs.len();
    if b.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "right-hand side is {}x{}, expected {n}x{n}",
            b.nrows(),
            b.ncols()
        )));
    }
    let max = coeffs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let min_sum = 2.0 * coeffs.min();
    if !(min_sum > f64::EPSILON * max) {
        return Err(Error::SingularPencil(min_sum));
    }
    let mut bt = vecs.transpose() * b * vecs;
    for i in 0..n {
        for j in 0..n {
            bt[(i, j)] /= coeffs[i] + coeffs[j];
        }
    }
    Ok(vecs * bt * vecs.transpose())
}

/// Solves the Lyapunov-type Sylvester equation `X A + A X = B` for symmetric
/// positive-definite `A`.
pub fn solve_lyapunov(a: &RMat, b: &RMat) -> Result<RMat> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!("coefficient is {}x{}", a.nrows(), a.ncols())));
    }
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    solve_in_eigenbasis(&eig.eigenvectors, &eig.eigenvalues, b)
}

fn sqrt_eigs(dec: &CouplingDecomposition) -> DVector<f64> {
    dec.eigvals.map(f64::sqrt)
}

/// Derivative of `C^{-1/2}` along a direction with `dC = d_c`:
/// `X' C^{1/2} + C^{1/2} X' = -C^{-1/2} dC C^{-1/2}`.
pub fn inv_sqrt_derivative(dec: &CouplingDecomposition, d_c: &RMat) -> Result<RMat> {
    let rhs = -(&dec.inv_sqrt * d_c * &dec.inv_sqrt);
    solve_in_eigenbasis(&dec.eigvecs, &sqrt_eigs(dec), &rhs)
}

/// Derivative of `C^{1/2}`: `S' C^{1/2} + C^{1/2} S' = dC`.
pub fn sqrt_derivative(dec: &CouplingDecomposition, d_c: &RMat) -> Result<RMat> {
    solve_in_eigenbasis(&dec.eigvecs, &sqrt_eigs(dec), d_c)
}

/// Second derivative of `C^{-1/2}` along one direction, from differentiating
/// the first-order equation once more. The coefficient stays `C^{1/2}`.
pub fn inv_sqrt_second_derivative(
    dec: &CouplingDecomposition,
    d_c: &RMat,
    d2_c: &RMat,
    d_inv_sqrt: &RMat,
    d_sqrt: &RMat,
) -> Result<RMat> {
    let y = &dec.inv_sqrt;
    let rhs = -(y * d2_c * y)
        - y * d_c * d_inv_sqrt
        - d_inv_sqrt * d_c * y
        - d_sqrt * d_inv_sqrt
        - d_inv_sqrt * d_sqrt;
    solve_in_eigenbasis(&dec.eigvecs, &sqrt_eigs(dec), &rhs)
}

/// First and second derivatives of `C^{-1/2}` with respect to one position.
#[derive(Debug, Clone)]
pub struct InvSqrtDerivatives {
    pub first: RMat,
    pub second: RMat,
}

pub fn inv_sqrt_derivatives(
    positions: &[f64],
    dec: &CouplingDecomposition,
    index: usize,
) -> Result<InvSqrtDerivatives> {
    let d_c = mc_matrix_derivative(positions, index, 1)?;
    let d2_c = mc_matrix_derivative(positions, index, 2)?;
    let first = inv_sqrt_derivative(dec, &d_c)?;
    let d_sqrt = sqrt_derivative(dec, &d_c)?;
    let second = inv_sqrt_second_derivative(dec, &d_c, &d2_c, &first, &d_sqrt)?;
    Ok(InvSqrtDerivatives { first, second })
}
