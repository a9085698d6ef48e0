//! Tuning by replicate-level sample splitting, and out-of-sample prediction error.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NgcError, Result};
use crate::grplasso::SolverConfig;
use crate::metrics::mean_sd;
use crate::ngc::{threshold_estimate, NetworkDesign, NgcEstimate, ThresholdSpec, Variant, WeightScheme};
use crate::panel::{make_stacked_design, GroupStructure, PanelData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `λ_e = sqrt(2 log Ḡ / n)` over the `(T−1)·G` design groups.
    Group,
    /// `λ_e = sqrt(2 log p̄ / n)` over the `(T−1)·p` design columns.
    Lasso,
}

/// Log-spaced grid on `[c1·λ_e, c2·λ_e]`, visited in descending order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_c1() -> f64 {
    0.05
}
fn default_c2() -> f64 {
    2.0
}
fn default_count() -> usize {
    50
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self { c1: default_c1(), c2: default_c2(), count: default_count() }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2.is_finite()) {
            return Err(NgcError::InvalidArgument("grid needs 0 < c1 < c2".into()));
        }
        if self.count < 1 {
            return Err(NgcError::InvalidArgument("grid needs at least one point".into()));
        }
        Ok(())
    }

    /// `sqrt(2 log m / n)` with `m` clamped to at least 2.
    pub fn lambda_e(count_effective: usize, n: usize) -> f64 {
        (2.0 * (count_effective.max(2) as f64).ln() / n as f64).sqrt()
    }

    /// Reference scale for a design with `lags` lags, `n` training rows.
    pub fn reference(mode: GridMode, groups: &GroupStructure, lags: usize, n: usize) -> f64 {
        let m = match mode {
            GridMode::Group => lags * groups.num_groups(),
            GridMode::Lasso => lags * groups.p(),
        };
        Self::lambda_e(m, n)
    }

    /// Strictly descending points from `c2·λ_e` to `c1·λ_e`.
    pub fn points(&self, lambda_e: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if !(lambda_e > 0.0 && lambda_e.is_finite()) {
            return Err(NgcError::InvalidArgument("reference scale must be positive".into()));
        }
        let (hi, lo) = ((self.c2 * lambda_e).ln(), (self.c1 * lambda_e).ln());
        if self.count == 1 {
            return Ok(vec![self.c2 * lambda_e]);
        }
        Ok((0..self.count).map(|k| (hi + (lo - hi) * k as f64 / (self.count - 1) as f64).exp()).collect())
    }
}

/// Replicate-level split with a `train_fraction` share (rounded up) for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    pub seed: u64,
}

fn default_fraction() -> f64 {
    19.0 / 20.0
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self { train_fraction: default_fraction(), seed }
    }

    /// Training size `⌈fraction·n⌉`.
    pub fn train_size(&self, n: usize) -> usize {
        // guard against 0.95·20 landing a hair above 19
        ((self.train_fraction * n as f64) - 1e-9).ceil() as usize
    }
}

/// Splits replicates at random (seeded) into training and validation panels.
pub fn split_panel(data: &PanelData, spec: &SplitSpec) -> Result<(PanelData, PanelData)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(NgcError::InvalidArgument("train fraction must lie in (0, 1)".into()));
    }
    let n = data.n();
    let train = spec.train_size(n);
    if train < 2 || train >= n {
        return Err(NgcError::InvalidArgument(format!(
            "n={n} too small for a {:.3} split",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (a, b) = idx.split_at(train);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Ok((data.select_replicates(&a)?, data.select_replicates(&b)?))
}

/// `X̂^t = Σ_s Â^s X^{t−s}` for every replicate (`t` is a 0-based time index).
pub fn predict(estimate: &NgcEstimate, data: &PanelData, t: usize) -> Result<DMatrix<f64>> {
    if data.p() != estimate.p() {
        return Err(NgcError::Dimension("panel and estimate disagree on p".into()));
    }
    if t >= data.t_len() {
        return Err(NgcError::Dimension(format!("time index {t} out of range")));
    }
    if estimate.d_hat > t {
        return Err(NgcError::InvalidArgument(format!(
            "predicting time index {t} needs {} earlier time points",
            estimate.d_hat
        )));
    }
    let mut out = DMatrix::zeros(data.n(), data.p());
    for s in 1..=estimate.d_hat {
        out += data.time_matrix(t - s) * estimate.a_hat[s - 1].transpose();
    }
    Ok(out)
}

/// Mean and sd over replicates, variables and the given times of the squared
/// one-step-ahead error.
pub fn pmse(estimate: &NgcEstimate, holdout: &PanelData, horizon_times: &[usize]) -> Result<(f64, f64)> {
    holdout.require_complete()?;
    if horizon_times.is_empty() {
        return Err(NgcError::InvalidArgument("no prediction times given".into()));
    }
    let mut errors = Vec::new();
    for &t in horizon_times {
        let pred = predict(estimate, holdout, t)?;
        let obs = holdout.time_matrix(t);
        errors.extend((obs - pred).iter().map(|e| e * e));
    }
    Ok(mean_sd(&errors))
}

/// How each grid point is turned into a scored network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuneVariant {
    Regular(WeightScheme),
    /// Second stage at `λ` with weights from the regular fit at the same `λ`.
    Adaptive(WeightScheme),
    /// Regular fit thresholded by a rule of `(λ, σ̂, n)`.
    Thresholded(WeightScheme, ThresholdRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Fixed(ThresholdSpec),
    /// `δ_grp = 0.7·λ·σ̂` with `σ̂` the training residual sd; `δ_misspec = n^{−0.2}`.
    Recommended,
    /// Group threshold as in `Recommended`, within-group threshold fixed.
    GroupScaled { delta_misspec: f64 },
    /// `4λ` and `2δ_n`.
    Theory { delta_n: f64 },
}

impl ThresholdRule {
    pub fn resolve(&self, lambda: f64, sigma_hat: f64, n: usize) -> Result<ThresholdSpec> {
        match self {
            Self::Fixed(spec) => Ok(*spec),
            Self::Recommended => ThresholdSpec::recommended(lambda, sigma_hat, n),
            Self::GroupScaled { delta_misspec } => {
                ThresholdSpec::new(ThresholdSpec::recommended(lambda, sigma_hat, n)?.delta_grp, *delta_misspec)
            }
            Self::Theory { delta_n } => {
                if !(*delta_n > 0.0 && *delta_n < 0.5) {
                    return Err(NgcError::InvalidArgument("delta_n must lie in (0, 1/2)".into()));
                }
                ThresholdSpec::new(4.0 * lambda, 2.0 * delta_n)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub lambda: f64,
    pub val_error: f64,
    pub active_groups: usize,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best_lambda: f64,
    pub best_index: usize,
    pub trace: Vec<TracePoint>,
    /// Per-response choice, when requested.
    pub per_response_lambda: Option<Vec<f64>>,
    /// Final training-data estimate at the selected point.
    pub estimate: NgcEstimate,
}

/// Fits every grid point on `train` (warm-started down the path) and scores
/// the squared one-step error at the last time on `validate`.
///
/// The error is pooled over validation replicates and responses. Ties go to
/// the larger `λ`. With `per_response`, each response also gets its own
/// minimizer, scored on its own column.
pub fn tune_lambda(
    train: &PanelData,
    validate: &PanelData,
    groups: &GroupStructure,
    grid: &[f64],
    variant: TuneVariant,
    config: &SolverConfig,
    per_response: bool,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(NgcError::InvalidArgument("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] > w[1])) || grid.iter().any(|&l| !(l > 0.0)) {
        return Err(NgcError::InvalidArgument("grid must be positive and strictly descending".into()));
    }
    if train.t_len() != validate.t_len() || train.p() != validate.p() {
        return Err(NgcError::Dimension("train and validation panels differ in shape".into()));
    }
    let stacked = make_stacked_design(train, groups)?;
    let net = NetworkDesign::new(&stacked, groups)?;
    let p = net.p();
    let last = validate.t_len() - 1;
    let observed = validate.time_matrix(last);

    let scheme = match variant {
        TuneVariant::Regular(s) | TuneVariant::Adaptive(s) | TuneVariant::Thresholded(s, _) => s,
    };
    let base = net.base_weights(scheme)?;
    let mut warm: Option<NgcEstimate> = None;
    let mut warm_adaptive: Option<NgcEstimate> = None;
    let mut trace = Vec::with_capacity(grid.len());
    let mut per_col: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    let mut fits = Vec::with_capacity(grid.len());
    let mut failures = 0;
    let mut last_error = None;
    for &lam in grid {
        let attempt = (|| -> Result<NgcEstimate> {
            let fit = net.fit(&vec![lam; p], &vec![base.clone(); p], config, warm.as_ref())?;
            let regular = net.assemble(fit, Variant::Regular, scheme, lam);
            warm = Some(regular.clone());
            Ok(match variant {
                TuneVariant::Regular(_) => regular,
                TuneVariant::Adaptive(_) => {
                    let w = net.adaptive_weights(&regular)?;
                    let fit = net.fit(&vec![lam; p], &w, config, warm_adaptive.as_ref())?;
                    let est = net.assemble(fit, Variant::Adaptive, WeightScheme::Adaptive, lam);
                    warm_adaptive = Some(est.clone());
                    est
                }
                TuneVariant::Thresholded(_, rule) => {
                    let spec = rule.resolve(lam, net.residual_sd(&regular), net.n())?;
                    threshold_estimate(&regular, &spec)
                }
            })
        })();
        match attempt {
            Ok(est) => {
                let pred = predict(&est, validate, last)?;
                let sq = (&observed - pred).map(|e| e * e);
                let cols: Vec<f64> = (0..p).map(|j| sq.column(j).mean()).collect();
                trace.push(TracePoint { lambda: lam, val_error: sq.mean(), active_groups: est.active_blocks().len() });
                per_col.push(cols);
                fits.push(Some(est));
            }
            Err(e) => {
                failures += 1;
                last_error = Some(e);
                trace.push(TracePoint { lambda: lam, val_error: f64::NAN, active_groups: 0 });
                per_col.push(vec![f64::NAN; p]);
                fits.push(None);
            }
        }
    }
    if failures == grid.len() {
        return Err(last_error.expect("at least one failure recorded"));
    }
    let best_index = argmin_first(trace.iter().map(|t| t.val_error));
    let per_response_lambda = per_response.then(|| {
        (0..p).map(|j| grid[argmin_first(per_col.iter().map(|c| c[j]))]).collect::<Vec<f64>>()
    });
    let estimate = match &per_response_lambda {
        None => fits[best_index].take().expect("best point was fitted"),
        Some(lams) => {
            let regular_fit = net.fit(lams, &vec![base.clone(); p], config, None)?;
            let regular = net.assemble(regular_fit, Variant::Regular, scheme, grid[best_index]);
            match variant {
                TuneVariant::Regular(_) => regular,
                TuneVariant::Adaptive(_) => {
                    let w = net.adaptive_weights(&regular)?;
                    let fit = net.fit(lams, &w, config, None)?;
                    net.assemble(fit, Variant::Adaptive, WeightScheme::Adaptive, grid[best_index])
                }
                TuneVariant::Thresholded(_, rule) => {
                    let spec = rule.resolve(grid[best_index], net.residual_sd(&regular), net.n())?;
                    threshold_estimate(&regular, &spec)
                }
            }
        }
    };
    Ok(TuneResult { best_lambda: grid[best_index], best_index, trace, per_response_lambda, estimate })
}

/// First index of the smallest non-NaN value (0 if all are NaN).
fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.enumerate() {
        if !v.is_nan() && best.is_none_or(|(_, b)| v < b) {
            best = Some((k, v));
        }
    }
    best.map_or(0, |b| b.0)
}

pub fn write_trace<W: Write>(trace: &[TracePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in trace {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| NgcError::io("<trace>", e))?;
    Ok(())
}

pub fn write_trace_csv(trace: &[TracePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| NgcError::io(path, e))?;
    write_trace(trace, file)
}
