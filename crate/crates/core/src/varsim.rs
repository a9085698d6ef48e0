//! Group-sparse VAR(d) generation and panel simulation.
//!
//! Signal-to-noise ratio here is the average over responses of the variance
//! of the regression mean `Σ_t A^t X^{T−t}` divided by the innovation
//! variance. For a stationary VAR both scale with `σ²`, so the ratio is a
//! property of the coefficients alone: the generator reaches a target SNR by
//! shrinking the coefficients, and `σ` only fixes the units.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NgcError, Result};
use crate::linalg;
use crate::panel::{GroupStructure, PanelData};

/// Companion spectral radius enforced on generated models.
pub const STABILITY_MARGIN: f64 = 0.95;
pub const DEFAULT_BURN_IN: usize = 300;
pub const SNR_DEFINITION: &str =
    "mean over responses of Var(sum_t A^t X^(T-t))_i divided by sigma^2 (stationary, exact)";

/// One nonzero coefficient `A^lag[i][j]`, `lag` 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub lag: usize,
    pub i: usize,
    pub j: usize,
}

/// VAR(d) data-generating model `X^T = Σ_t A^t X^{T−t} + ε`, `ε ~ N(0, σ²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    /// `a[t−1] = A^t`; `A^t[i][j]` is the effect of `X_j^{T−t}` on `X_i^T`.
    pub a: Vec<DMatrix<f64>>,
    pub sigma: f64,
    pub groups: GroupStructure,
    /// Nonzero coefficients, sorted.
    pub support: Vec<Edge>,
}

impl VarModel {
    /// Builds a model and derives its support from the nonzero entries.
    pub fn new(a: Vec<DMatrix<f64>>, sigma: f64, groups: GroupStructure) -> Result<Self> {
        if a.is_empty() {
            return Err(NgcError::InvalidArgument("VAR order must be at least 1".into()));
        }
        let p = a[0].nrows();
        if a.iter().any(|m| m.nrows() != p || m.ncols() != p) {
            return Err(NgcError::Dimension("adjacency matrices must all be p x p".into()));
        }
        if groups.p() != p {
            return Err(NgcError::Dimension(format!("groups cover {} variables, model has {p}", groups.p())));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(NgcError::InvalidArgument("sigma must be finite and non-negative".into()));
        }
        let support = support_of(&a);
        Ok(Self { a, sigma, groups, support })
    }

    pub fn p(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn num_edges(&self) -> usize {
        self.support.len()
    }

    /// Coefficients of response `i` in the stacked-design layout with `lags`
    /// lag blocks; lags beyond `d` are zero.
    pub fn row_coefficients(&self, i: usize, lags: usize) -> DVector<f64> {
        let p = self.p();
        DVector::from_fn(lags * p, |c, _| {
            let (lag, j) = (c / p + 1, c % p);
            if lag <= self.d() {
                self.a[lag - 1][(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Adjacency matrices padded with zeros to `lags` matrices.
    pub fn embedded(&self, lags: usize) -> Vec<DMatrix<f64>> {
        (0..lags)
            .map(|l| self.a.get(l).cloned().unwrap_or_else(|| DMatrix::zeros(self.p(), self.p())))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let a = self.a.iter().map(|m| m * factor).collect();
        let mut out = Self { a, ..self.clone() };
        if factor == 0.0 {
            out.support.clear();
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelJson::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: ModelJson = serde_json::from_str(text)?;
        json.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| NgcError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NgcError::io(path, e))?;
        Self::from_json(&text)
    }
}

fn support_of(a: &[DMatrix<f64>]) -> Vec<Edge> {
    let mut out = Vec::new();
    for (l, m) in a.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    out.push(Edge { lag: l + 1, i, j });
                }
            }
        }
    }
    out
}

/// Serialized model: `A` is a list of row-major `p × p` matrices.
#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    p: usize,
    d: usize,
    sigma: f64,
    groups: GroupStructure,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    support: Vec<[usize; 3]>,
    #[serde(default)]
    snr: Option<f64>,
    #[serde(default)]
    snr_definition: Option<String>,
}

impl ModelJson {
    fn from_model(m: &VarModel) -> Self {
        Self {
            p: m.p(),
            d: m.d(),
            sigma: m.sigma,
            groups: m.groups.clone(),
            a: m.a.iter().map(matrix_rows).collect(),
            support: m.support.iter().map(|e| [e.lag, e.i, e.j]).collect(),
            snr: signal_to_noise(m).ok(),
            snr_definition: Some(SNR_DEFINITION.to_string()),
        }
    }

    fn into_model(self) -> Result<VarModel> {
        let a: Vec<DMatrix<f64>> = self.a.iter().map(|rows| rows_matrix(rows, self.p)).collect::<Result<_>>()?;
        if a.len() != self.d {
            return Err(NgcError::Dimension(format!("d={} but {} matrices given", self.d, a.len())));
        }
        let model = VarModel::new(a, self.sigma, self.groups)?;
        let declared: Vec<Edge> = {
            let mut v: Vec<Edge> = self.support.iter().map(|s| Edge { lag: s[0], i: s[1], j: s[2] }).collect();
            v.sort();
            v
        };
        if declared != model.support {
            return Err(NgcError::InvalidArgument("declared support does not match nonzero coefficients".into()));
        }
        Ok(model)
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn rows_matrix(rows: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(NgcError::Dimension(format!("expected a {p} x {p} matrix")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// Simulation design for [`generate_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub p: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub n: usize,
    pub d: usize,
    pub group_sizes: Vec<usize>,
    /// Groups in the support of each row of `[A^1 : … : A^d]`.
    pub s_per_row: usize,
    #[serde(default)]
    pub misspecification_rate: f64,
    pub snr_target: f64,
    #[serde(default = "default_magnitudes")]
    pub coefficient_magnitude_range: (f64, f64),
    pub seed: u64,
}

fn default_magnitudes() -> (f64, f64) {
    (0.5, 1.0)
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NgcError::InvalidArgument(m));
        if self.p == 0 || self.n == 0 || self.d == 0 || self.t_len < 2 {
            return bad("p, n, d must be positive and T >= 2".into());
        }
        if self.d > self.t_len - 1 {
            return bad(format!("d={} exceeds T-1={}", self.d, self.t_len - 1));
        }
        if self.group_sizes.iter().sum::<usize>() != self.p || self.group_sizes.contains(&0) {
            return bad("group sizes must be positive and sum to p".into());
        }
        if !(0.0..1.0).contains(&self.misspecification_rate) {
            return bad("misspecification rate must lie in [0, 1)".into());
        }
        if !(self.snr_target > 0.0) {
            return bad("snr target must be positive".into());
        }
        let (lo, hi) = self.coefficient_magnitude_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("magnitude range must satisfy 0 < lo <= hi".into());
        }
        Ok(())
    }

    pub fn groups(&self) -> Result<GroupStructure> {
        GroupStructure::contiguous(&self.group_sizes)
    }
}

/// Balanced reference design used by the probes and diagnostics examples:
/// twelve variables in four groups of three, one parent group per row.
pub fn canonical_design() -> SimDesign {
    SimDesign {
        p: 12,
        t_len: 3,
        n: 200,
        d: 1,
        group_sizes: vec![3; 4],
        s_per_row: 1,
        misspecification_rate: 0.0,
        snr_target: 1.0,
        coefficient_magnitude_range: (0.5, 1.0),
        seed: 1,
    }
}

/// Zeros per selected group: `round_half_up(k·rate)`, capped at `k − 1`.
pub fn misspecified_zero_count(k: usize, rate: f64) -> usize {
    let z = (k as f64 * rate + 0.5).floor() as usize;
    z.min(k - 1)
}

/// Draws a stable group-sparse VAR(d) at the design's SNR.
///
/// Each row picks `s_per_row` of the `d·G` (lag, group) blocks uniformly,
/// zeroes a misspecification share inside each, and fills the rest with
/// magnitudes uniform on `[lo, hi]` and random signs. The coefficients are
/// then scaled by the largest factor in `(0, 1]` keeping the companion
/// spectral radius at most 0.95, and shrunk further until the SNR matches.
pub fn generate_model(design: &SimDesign) -> Result<VarModel> {
    design.validate()?;
    let groups = design.groups()?;
    let g_count = groups.num_groups();
    let candidates = design.d * g_count;
    if design.s_per_row > candidates {
        return Err(NgcError::InfeasibleDesign(format!(
            "{} groups per row requested but only {candidates} (lag, group) blocks exist",
            design.s_per_row
        )));
    }
    let p = design.p;
    let (lo, hi) = design.coefficient_magnitude_range;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut a = vec![DMatrix::zeros(p, p); design.d];
    for i in 0..p {
        for block in sample(&mut rng, candidates, design.s_per_row).into_vec() {
            let (lag, g) = (block / g_count, block % g_count);
            let members = groups.members(g);
            let k = members.len();
            let zeros = misspecified_zero_count(k, design.misspecification_rate);
            let mut dropped = vec![false; k];
            for z in sample(&mut rng, k, zeros).into_vec() {
                dropped[z] = true;
            }
            for (m, &j) in members.iter().enumerate() {
                if dropped[m] {
                    continue;
                }
                let mag = rng.random_range(lo..=hi);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                a[lag][(i, j)] = sign * mag;
            }
        }
    }
    let raw = VarModel::new(a, 1.0, groups)?;
    let stable = raw.scaled(stability_factor(&raw, STABILITY_MARGIN));
    calibrate_snr(&stable, design.snr_target)
}

/// Largest factor `c ∈ (0, 1]` (by bisection) with radius of `c·A` at most `margin`.
fn stability_factor(model: &VarModel, margin: f64) -> f64 {
    if check_stability(model) <= margin {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if check_stability(&model.scaled(mid)) <= margin {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Shrinks the coefficients so the SNR equals `target` (within 0.1%).
fn calibrate_snr(model: &VarModel, target: f64) -> Result<VarModel> {
    let top = signal_to_noise(model)?;
    if top < target * (1.0 - 1e-3) {
        return Err(NgcError::InfeasibleSnr { target, achieved: top });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let snr = signal_to_noise(&model.scaled(mid)).unwrap_or(0.0);
        if snr < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (snr - target).abs() <= 1e-4 * target {
            return Ok(model.scaled(mid));
        }
    }
    Ok(model.scaled(hi))
}

/// Spectral radius of the companion matrix; the model is stable iff it is below 1.
pub fn check_stability(model: &VarModel) -> f64 {
    linalg::spectral_radius(&linalg::companion(&model.a))
}

/// Stationary signal-to-noise ratio (see module docs).
pub fn signal_to_noise(model: &VarModel) -> Result<f64> {
    if model.support.is_empty() {
        return Err(NgcError::NoSignal);
    }
    let unit = VarModel { sigma: 1.0, ..model.clone() };
    let gamma0 = crate::conditions::autocovariances(&unit, 0)?.remove(0);
    let p = model.p();
    Ok((0..p).map(|i| gamma0[(i, i)] - 1.0).sum::<f64>() / p as f64)
}

/// Innovation scale for a target SNR.
///
/// The ratio does not depend on `σ`, so this verifies that the model's SNR
/// is within 1% of the target and returns the model's current `σ`;
/// otherwise it reports the SNR the coefficients fix.
pub fn calibrate_noise(model: &VarModel, snr_target: f64) -> Result<f64> {
    if !(snr_target > 0.0) {
        return Err(NgcError::InvalidArgument("snr target must be positive".into()));
    }
    let achieved = signal_to_noise(model)?;
    if (achieved - snr_target).abs() > 0.01 * snr_target {
        return Err(NgcError::InfeasibleSnr { target: snr_target, achieved });
    }
    Ok(model.sigma)
}

/// Simulates `n` independent trajectories of length `t_len` from a zero
/// initial state after `burn_in` discarded steps.
///
/// Replicate `r` draws from the ChaCha stream `(seed, r)`, so the output
/// does not depend on how replicates are scheduled across threads.
pub fn simulate_panel(model: &VarModel, n: usize, t_len: usize, burn_in: usize, seed: u64) -> Result<PanelData> {
    let radius = check_stability(model);
    if radius >= 1.0 {
        return Err(NgcError::Unstable { radius });
    }
    let p = model.p();
    let trajectories: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|r| simulate_trajectory(model, t_len, burn_in, seed, r as u64)).collect();
    PanelData::new(n, t_len, p, trajectories.concat())
}

fn simulate_trajectory(model: &VarModel, t_len: usize, burn_in: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (p, d) = (model.p(), model.d());
    let total = burn_in + t_len;
    // history[s] is the state at step s; steps before 0 are zero
    let mut history: Vec<DVector<f64>> = Vec::with_capacity(total);
    let mut out = Vec::with_capacity(t_len * p);
    for step in 0..total {
        let mut x = DVector::from_fn(p, |_, _| {
            let e: f64 = rng.sample(StandardNormal);
            model.sigma * e
        });
        for lag in 1..=d.min(step) {
            x.gemv(1.0, &model.a[lag - 1], &history[step - lag], 1.0);
        }
        if step >= burn_in {
            out.extend(x.iter());
        }
        history.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(a: f64, sigma: f64) -> VarModel {
        VarModel::new(vec![DMatrix::from_element(1, 1, a)], sigma, GroupStructure::singletons(1)).unwrap()
    }

    fn design(rate: f64) -> SimDesign {
        SimDesign {
            p: 12,
            t_len: 5,
            n: 50,
            d: 2,
            group_sizes: vec![3; 4],
            s_per_row: 2,
            misspecification_rate: rate,
            snr_target: 1.0,
            coefficient_magnitude_range: (0.5, 1.0),
            seed: 7,
        }
    }

    #[test]
    fn scalar_radius() {
        assert!((check_stability(&scalar_model(0.5, 1.0)) - 0.5).abs() < 1e-14);
        assert_eq!(check_stability(&scalar_model(0.0, 1.0)), 0.0);
    }

    #[test]
    fn noiseless_panel_is_zero() {
        let panel = simulate_panel(&scalar_model(0.7, 0.0), 4, 6, 10, 1).unwrap();
        assert!(panel.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unstable_model_rejected() {
        assert!(matches!(simulate_panel(&scalar_model(1.2, 1.0), 2, 3, 0, 1), Err(NgcError::Unstable { .. })));
    }

    #[test]
    fn zero_count_rounding() {
        assert_eq!(misspecified_zero_count(3, 0.3), 1);
        assert_eq!(misspecified_zero_count(6, 0.3), 2);
        assert_eq!(misspecified_zero_count(5, 0.3), 2);
        assert_eq!(misspecified_zero_count(1, 0.9), 0);
        assert_eq!(misspecified_zero_count(4, 0.0), 0);
    }

    #[test]
    fn dense_groups_without_misspecification() {
        let m = generate_model(&design(0.0)).unwrap();
        let g = &m.groups;
        for e in &m.support {
            for &j in g.members(g.group_of(e.j)) {
                assert_ne!(m.a[e.lag - 1][(e.i, j)], 0.0);
            }
        }
        assert_eq!(m.support.len(), 12 * 2 * 3);
    }

    #[test]
    fn misspecified_groups_drop_one_of_three() {
        let m = generate_model(&design(0.3)).unwrap();
        assert_eq!(m.support.len(), 12 * 2 * 2);
    }

    #[test]
    fn generated_model_is_stable_and_calibrated() {
        let m = generate_model(&design(0.0)).unwrap();
        assert!(check_stability(&m) <= STABILITY_MARGIN + 1e-10);
        assert!((signal_to_noise(&m).unwrap() - 1.0).abs() < 1e-3);
        assert_eq!(calibrate_noise(&m, 1.0).unwrap(), m.sigma);
    }

    #[test]
    fn infeasible_support_size() {
        let mut d = design(0.0);
        d.s_per_row = 9;
        assert!(matches!(generate_model(&d), Err(NgcError::InfeasibleDesign(_))));
    }

    #[test]
    fn scalar_ar1_snr_is_fixed() {
        // a^2 / (1 − a^2) = 1/3 whatever sigma is
        for sigma in [0.5, 1.0, 3.0] {
            let m = scalar_model(0.5, sigma);
            assert!((signal_to_noise(&m).unwrap() - 1.0 / 3.0).abs() < 1e-12);
            assert!(matches!(calibrate_noise(&m, 1.0), Err(NgcError::InfeasibleSnr { .. })));
            assert_eq!(calibrate_noise(&m, 1.0 / 3.0).unwrap(), sigma);
        }
    }

    #[test]
    fn zero_model_has_no_signal() {
        assert!(matches!(calibrate_noise(&scalar_model(0.0, 1.0), 1.0), Err(NgcError::NoSignal)));
    }

    #[test]
    fn json_round_trip() {
        let m = generate_model(&design(0.3)).unwrap();
        let back = VarModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
