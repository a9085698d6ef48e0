use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{NgcError, Result};
use crate::linalg;
use crate::varsim::VarModel;

/// Stationary autocovariances `Γ(ℓ) = E[X^t (X^{t−ℓ})']` for `ℓ = 0..=max_lag`.
///
/// The first `d` lags come from the Lyapunov solution for the companion
/// state; later lags follow `Γ(ℓ) = Σ_t A^t Γ(ℓ−t)`.
pub fn autocovariances(model: &VarModel, max_lag: usize) -> Result<Vec<DMatrix<f64>>> {
    let (p, d) = (model.p(), model.d());
    let f = linalg::companion(&model.a);
    let mut q = DMatrix::zeros(p * d, p * d);
    q.view_mut((0, 0), (p, p)).fill_diagonal(model.sigma * model.sigma);
    let state = linalg::discrete_lyapunov(&f, &q)?;
    let mut gamma: Vec<DMatrix<f64>> = Vec::with_capacity(max_lag + 1);
    for l in 0..=max_lag {
        if l < d {
            gamma.push(state.view((0, l * p), (p, p)).into_owned());
        } else {
            let mut g = DMatrix::zeros(p, p);
            for t in 1..=d {
                g += &model.a[t - 1] * &gamma[l - t];
            }
            gamma.push(g);
        }
    }
    Ok(gamma)
}

/// `Γ(ℓ)` for any sign of `ℓ`, using `Γ(−k) = Γ(k)'`.
fn gamma_at(gamma: &[DMatrix<f64>], lag: isize) -> DMatrix<f64> {
    if lag >= 0 {
        gamma[lag as usize].clone()
    } else {
        gamma[(-lag) as usize].transpose()
    }
}

/// `Var(X^{1:T})`: block `(i, j)` is `Γ(i − j)`.
pub fn block_toeplitz(gamma: &[DMatrix<f64>], t_len: usize) -> DMatrix<f64> {
    let p = gamma[0].nrows();
    let mut sigma = DMatrix::zeros(p * t_len, p * t_len);
    for i in 0..t_len {
        for j in 0..t_len {
            let block = gamma_at(gamma, i as isize - j as isize);
            sigma.view_mut((i * p, j * p), (p, p)).copy_from(&block);
        }
    }
    sigma
}

/// `A(e^{−iθ}) = I − Σ_t A^t e^{−itθ}`.
pub fn characteristic_polynomial(a: &[DMatrix<f64>], theta: f64) -> DMatrix<Complex64> {
    let p = a[0].nrows();
    let mut m = DMatrix::<Complex64>::identity(p, p);
    for (l, at) in a.iter().enumerate() {
        let z = Complex64::from_polar(1.0, -((l + 1) as f64) * theta);
        m -= at.map(|v| Complex64::new(v, 0.0)) * z;
    }
    m
}

/// Uniform grid on `[0, 2π)` followed by the same number of golden-ratio points.
pub fn theta_grid(size: usize) -> Vec<f64> {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let tau = std::f64::consts::TAU;
    let uniform = (0..size).map(|k| tau * k as f64 / size as f64);
    let offsets = (1..=size).map(|k| tau * (k as f64 * golden).fract());
    uniform.chain(offsets).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub t_len: usize,
    pub sigma: f64,
    #[serde(skip)]
    pub gamma: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub sigma_matrix: DMatrix<f64>,
    pub lambda_min_sigma: f64,
    /// Largest `‖A(e^{−iθ})‖` over the θ grid.
    pub m_est: f64,
    pub theta_points: usize,
    /// `Λ_min(Σ) ≥ 1/M − 1e−8`.
    pub bound_holds: bool,
    /// `σ²/M²`: twice π times the smallest spectral density eigenvalue.
    pub density_bound: f64,
    pub density_bound_holds: bool,
    pub v_in: f64,
    pub v_out: f64,
    /// `max_t ‖A^t‖`.
    pub m: f64,
}

/// Checks the lower bound on `Λ_min(Var(X^{1:T}))` against the sup of `‖A(e^{−iθ})‖`.
pub fn spectral_check(model: &VarModel, t_len: usize, theta_grid_size: usize) -> Result<SpectralReport> {
    if theta_grid_size < 64 {
        return Err(NgcError::InvalidArgument("theta grid needs at least 64 points".into()));
    }
    if t_len == 0 {
        return Err(NgcError::InvalidArgument("T must be positive".into()));
    }
    let gamma = autocovariances(model, t_len - 1)?;
    let sigma_matrix = block_toeplitz(&gamma, t_len);
    let lambda_min_sigma = linalg::min_eigenvalue(&sigma_matrix);
    let grid = theta_grid(theta_grid_size);
    let m_est = grid
        .iter()
        .map(|&th| linalg::spectral_norm_complex(&characteristic_polynomial(&model.a, th)))
        .fold(0.0, f64::max);
    let density_bound = model.sigma * model.sigma / (m_est * m_est);
    let p = model.p();
    let v_in = (0..p)
        .map(|i| model.a.iter().map(|at| at.row(i).iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>())
        .fold(0.0, f64::max);
    let v_out = (0..p)
        .map(|j| model.a.iter().map(|at| at.column(j).iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>())
        .fold(0.0, f64::max);
    let m = model.a.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
    Ok(SpectralReport {
        t_len,
        sigma: model.sigma,
        lambda_min_sigma,
        m_est,
        theta_points: grid.len(),
        bound_holds: lambda_min_sigma >= 1.0 / m_est - 1e-8,
        density_bound,
        density_bound_holds: lambda_min_sigma >= density_bound - 1e-8,
        v_in,
        v_out,
        m,
        gamma,
        sigma_matrix,
    })
}
