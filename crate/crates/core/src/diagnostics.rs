//! One-call bundle of the condition checks for a VAR model.
//!
//! Diagnostics use the population Gram of the stacked lag design at the
//! last time point, so they describe the model rather than a sample.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditions::{
    autocovariances, block_toeplitz, check_irrep_implies_compatibility, gram_blocks, irrep_report, sampled_phi,
    spectral_check, CompatibilityBound, IrrepReport, PhiMode, PhiReport, SpectralReport,
};
use crate::error::{NgcError, Result};
use crate::varsim::VarModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub cone_l: f64,
    pub num_samples: usize,
    pub theta_grid: usize,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { cone_l: 3.0, num_samples: 2000, theta_grid: 512, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseDiagnostics {
    pub response: usize,
    /// Expanded group indices `(lag−1)·G + g` of the true support.
    pub support: Vec<usize>,
    pub irrep: IrrepReport,
    pub phi_compatibility: PhiReport,
    pub phi_re: PhiReport,
    /// Present when the uniform slack `η` makes the bound applicable.
    pub compatibility_bound: Option<CompatibilityBound>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticFlags {
    pub spectral_bound: bool,
    pub density_bound: bool,
    pub weak_irrep: bool,
    pub uniform_irrep: bool,
    pub compatibility_positive: bool,
    pub re_positive: bool,
    pub irrep_implies_compatibility: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsBundle {
    pub t_len: usize,
    pub lags: usize,
    pub config: DiagnosticsConfig,
    pub spectral: SpectralReport,
    /// Responses with an empty true support are omitted; their checks hold trivially.
    pub responses: Vec<ResponseDiagnostics>,
    pub flags: DiagnosticFlags,
}

impl DiagnosticsBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Input of the `diagnose` verb: a saved model or a design to draw one from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default)]
    pub model: Option<std::path::PathBuf>,
    #[serde(default)]
    pub design: Option<crate::varsim::SimDesign>,
    /// Panel length; defaults to the design's `T`.
    #[serde(rename = "T", default)]
    pub t_len: Option<usize>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl DiagnoseConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NgcError::io(path, e))?;
        let mut c: Self = serde_json::from_str(&text)?;
        if let (Some(m), Some(dir)) = (c.model.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(c)
    }

    /// Resolves the model and panel length.
    pub fn resolve(&self) -> Result<(VarModel, usize)> {
        let model = match (&self.model, &self.design) {
            (Some(path), None) => VarModel::load(path)?,
            (None, Some(design)) => crate::varsim::generate_model(design)?,
            _ => return Err(NgcError::InvalidArgument("exactly one of model and design must be given".into())),
        };
        let t_len = self
            .t_len
            .or(self.design.as_ref().map(|d| d.t_len))
            .ok_or_else(|| NgcError::InvalidArgument("T is required with a model file".into()))?;
        Ok((model, t_len))
    }
}

/// Population covariance of the lag-major regressors `(X^{T−1}, …, X^1)`.
pub fn population_lag_gram(model: &VarModel, lags: usize) -> Result<DMatrix<f64>> {
    let p = model.p();
    let gamma = autocovariances(model, lags.saturating_sub(1))?;
    let ascending = block_toeplitz(&gamma, lags);
    // reverse the block order so lag 1 comes first
    let mut out = DMatrix::zeros(p * lags, p * lags);
    for a in 0..lags {
        for b in 0..lags {
            let src = ascending.view(((lags - 1 - a) * p, (lags - 1 - b) * p), (p, p));
            out.view_mut((a * p, b * p), (p, p)).copy_from(&src);
        }
    }
    Ok(out)
}

/// A square design with `X'X/n` equal to `gram`.
fn design_for(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = gram.nrows();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| NgcError::Singular { condition: f64::INFINITY })?;
    Ok(chol.l().transpose() * (dim as f64).sqrt())
}

/// Spectral, irrepresentable and compatibility/RE checks for `model` at `t_len`.
pub fn run_diagnostics(model: &VarModel, t_len: usize, config: &DiagnosticsConfig) -> Result<DiagnosticsBundle> {
    if t_len < 2 {
        return Err(NgcError::InvalidArgument("t_len must be at least 2".into()));
    }
    if model.d() > t_len - 1 {
        return Err(NgcError::InvalidArgument(format!("order {} exceeds T−1={}", model.d(), t_len - 1)));
    }
    if !(config.cone_l > 0.0) || config.num_samples == 0 {
        return Err(NgcError::InvalidArgument("cone_l and num_samples must be positive".into()));
    }
    let lags = t_len - 1;
    let spectral = spectral_check(model, t_len, config.theta_grid)?;
    let gram = population_lag_gram(model, lags)?;
    let x = design_for(&gram)?;
    let partition = model.groups.expand(lags);
    let weights: Vec<f64> = partition.sizes().iter().map(|&k| (k as f64).sqrt()).collect();

    let mut responses = Vec::new();
    for i in 0..model.p() {
        let beta0 = model.row_coefficients(i, lags);
        let support: Vec<usize> =
            (0..partition.len()).filter(|&g| partition.block_norm(&beta0, g) > 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let seed = config.seed.wrapping_add(i as u64);
        let blocks = gram_blocks(&x, &partition, &support)?;
        let irrep = if blocks.off_support.is_empty() {
            IrrepReport {
                off_groups: Vec::new(),
                weak_lhs: Vec::new(),
                weak_satisfied: true,
                uniform_upper: Vec::new(),
                uniform_sampled_max: Vec::new(),
                num_samples: 0,
                eta_estimate: 1.0,
            }
        } else {
            irrep_report(&blocks, &beta0, &weights, config.num_samples, seed)?
        };
        let phi_compatibility = sampled_phi(
            &x, &partition, &support, config.cone_l, &weights, config.num_samples, PhiMode::Compatibility, seed,
        )?;
        let phi_re = sampled_phi(&x, &partition, &support, config.cone_l, &weights, config.num_samples, PhiMode::Re, seed)?;
        let eta = irrep.eta_estimate.min(1.0);
        let compatibility_bound = if eta > 0.0 && (1.0 - eta) * config.cone_l < 1.0 {
            Some(check_irrep_implies_compatibility(&blocks, eta, config.cone_l, &phi_compatibility)?)
        } else {
            None
        };
        responses.push(ResponseDiagnostics { response: i, support, irrep, phi_compatibility, phi_re, compatibility_bound });
    }
    let flags = DiagnosticFlags {
        spectral_bound: spectral.bound_holds,
        density_bound: spectral.density_bound_holds,
        weak_irrep: responses.iter().all(|r| r.irrep.weak_satisfied),
        uniform_irrep: responses.iter().all(|r| r.irrep.eta_estimate > 0.0),
        compatibility_positive: responses.iter().all(|r| r.phi_compatibility.sampled_min > 1e-8),
        re_positive: responses.iter().all(|r| r.phi_re.sampled_min > 1e-8),
        irrep_implies_compatibility: responses.iter().all(|r| r.compatibility_bound.as_ref().is_none_or(|b| b.holds)),
    };
    Ok(DiagnosticsBundle { t_len, lags, config: *config, spectral, responses, flags })
}

/// Weak irrepresentable margin from an explicit Gram, for constructed fixtures.
pub fn weak_irrep_from_gram(
    gram: &DMatrix<f64>,
    partition: &crate::grplasso::GroupPartition,
    beta0: &DVector<f64>,
) -> Result<bool> {
    let x = design_for(gram)?;
    let support: Vec<usize> = (0..partition.len()).filter(|&g| partition.block_norm(beta0, g) > 0.0).collect();
    let blocks = gram_blocks(&x, partition, &support)?;
    let w: Vec<f64> = partition.sizes().iter().map(|&k| (k as f64).sqrt()).collect();
    Ok(crate::conditions::weak_irrep_margin(&blocks, beta0, &w)?.satisfied)
}
