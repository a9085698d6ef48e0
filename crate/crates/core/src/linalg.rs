//! Dense linear algebra helpers on `f64` matrices.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{NgcError, Result};

// Above this many companion states the Lyapunov equation is solved by doubling.
const VECTORIZED_LYAPUNOV_MAX: usize = 24;

/// Companion matrix of a VAR with lag matrices `a[0] = A^1, …, a[d−1] = A^d`.
pub fn companion(a: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = a.len();
    let p = a[0].nrows();
    let mut f = DMatrix::zeros(p * d, p * d);
    for (l, al) in a.iter().enumerate() {
        f.view_mut((0, l * p), (p, p)).copy_from(al);
    }
    for k in 0..(d - 1) * p {
        f[(p + k, k)] = 1.0;
    }
    f
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    let s = (sym + sym.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    let s = (sym + sym.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn spectral_norm_complex(m: &DMatrix<Complex64>) -> f64 {
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let cond = condition_number(&sym);
    if !cond.is_finite() || cond > 1e12 {
        return Err(NgcError::Singular { condition: cond });
    }
    Cholesky::new(sym).map(|c| c.inverse()).ok_or(NgcError::Singular { condition: cond })
}

/// Solves `S = F S F' + Q` for a stable `F`.
pub fn discrete_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let radius = spectral_radius(f);
    if radius >= 1.0 {
        return Err(NgcError::Unstable { radius });
    }
    let m = f.nrows();
    let s = if m <= VECTORIZED_LYAPUNOV_MAX { lyapunov_vectorized(f, q)? } else { lyapunov_doubling(f, q) };
    Ok((&s + s.transpose()) * 0.5)
}

/// `(I − F⊗F) vec(S) = vec(Q)`.
fn lyapunov_vectorized(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = f.nrows();
    let kron = f.kronecker(f);
    let system = DMatrix::identity(m * m, m * m) - kron;
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or(NgcError::Singular { condition: f64::INFINITY })?;
    Ok(DMatrix::from_column_slice(m, m, sol.as_slice()))
}

/// Smith doubling: `S ← S + A S A'`, `A ← A²`.
fn lyapunov_doubling(f: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = q.clone();
    let mut a = f.clone();
    for _ in 0..64 {
        let inc = &a * &s * a.transpose();
        let done = inc.norm() <= 1e-16 * s.norm();
        s += inc;
        if done {
            break;
        }
        a = &a * &a;
    }
    s
}
