//! Network Granger causality estimators.
//!
//! Every response `i` is its own group-lasso problem on the shared stacked
//! design, so a network fit is `p` independent solves whose solutions become
//! the rows of `Â^1, …, Â^{T−1}`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::GramBlocks;
use crate::error::{NgcError, Result};
use crate::grplasso::{solve_bcd, Design, GroupLassoProblem, SolverConfig};
use crate::linalg;
use crate::panel::{GroupStructure, StackedDesign};
use crate::varsim::{matrix_rows, rows_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Regular,
    Adaptive,
    Thresholded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Unit,
    SqrtGroupSize,
    Adaptive,
}

/// Estimated network: `a_hat[t−1] = Â^t` for `t = 1..T−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgcEstimate {
    pub a_hat: Vec<DMatrix<f64>>,
    pub d_hat: usize,
    pub variant: Variant,
    pub weight_scheme: WeightScheme,
    pub lambda_used: f64,
    /// KKT residual of each response's final solve (before any thresholding).
    pub per_response_kkt: Vec<f64>,
    pub groups: GroupStructure,
}

impl NgcEstimate {
    pub fn p(&self) -> usize {
        self.groups.p()
    }

    pub fn lags(&self) -> usize {
        self.a_hat.len()
    }

    /// Row `i` of `[Â^1 : … : Â^{T−1}]` in stacked-design column order.
    pub fn row(&self, i: usize) -> DVector<f64> {
        let p = self.p();
        DVector::from_fn(self.lags() * p, |c, _| self.a_hat[c / p][(i, c % p)])
    }

    /// `‖Â^t_{i,[g]}‖`.
    pub fn block_norm(&self, lag: usize, i: usize, g: usize) -> f64 {
        self.groups.members(g).iter().map(|&j| self.a_hat[lag - 1][(i, j)].powi(2)).sum::<f64>().sqrt()
    }

    pub fn num_nonzero(&self) -> usize {
        self.a_hat.iter().map(|m| m.iter().filter(|v| **v != 0.0).count()).sum()
    }

    /// Nonzero `(lag, i, g)` blocks.
    pub fn active_blocks(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for lag in 1..=self.lags() {
            for i in 0..self.p() {
                for g in 0..self.groups.num_groups() {
                    if self.groups.members(g).iter().any(|&j| self.a_hat[lag - 1][(i, j)] != 0.0) {
                        out.push((lag, i, g));
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let json = EstimateJson {
            p: self.p(),
            lags: self.lags(),
            d_hat: self.d_hat,
            groups: self.groups.clone(),
            a: self.a_hat.iter().map(matrix_rows).collect(),
            variant: self.variant,
            weight_scheme: self.weight_scheme,
            lambda_used: self.lambda_used,
            kkt: self.per_response_kkt.clone(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: EstimateJson = serde_json::from_str(text)?;
        let a_hat: Vec<DMatrix<f64>> = j.a.iter().map(|m| rows_matrix(m, j.p)).collect::<Result<_>>()?;
        if a_hat.len() != j.lags || j.groups.p() != j.p || j.kkt.len() != j.p {
            return Err(NgcError::Dimension("estimate fields disagree on p or the lag count".into()));
        }
        let d_hat = estimate_order(&a_hat);
        if d_hat != j.d_hat {
            return Err(NgcError::InvalidArgument(format!("d_hat={} but matrices give {d_hat}", j.d_hat)));
        }
        Ok(Self {
            a_hat,
            d_hat,
            variant: j.variant,
            weight_scheme: j.weight_scheme,
            lambda_used: j.lambda_used,
            per_response_kkt: j.kkt,
            groups: j.groups,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| NgcError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| NgcError::io(path, e))?)
    }
}

#[derive(Serialize, Deserialize)]
struct EstimateJson {
    p: usize,
    lags: usize,
    d_hat: usize,
    groups: GroupStructure,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    variant: Variant,
    weight_scheme: WeightScheme,
    lambda_used: f64,
    kkt: Vec<f64>,
}

/// `max{t : Â^t ≠ 0}`, or 0. Any exactly nonzero entry counts.
pub fn estimate_order(a_hat: &[DMatrix<f64>]) -> usize {
    a_hat.iter().rposition(|m| m.iter().any(|v| *v != 0.0)).map_or(0, |i| i + 1)
}

/// A stacked design prepared once for repeated network fits.
#[derive(Debug, Clone)]
pub struct NetworkDesign {
    pub design: Arc<Design<f64>>,
    pub y: DMatrix<f64>,
    pub groups: GroupStructure,
    pub lags: usize,
}

impl NetworkDesign {
    pub fn new(stacked: &StackedDesign, groups: &GroupStructure) -> Result<Self> {
        if groups.p() != stacked.p {
            return Err(NgcError::Dimension(format!("groups cover {} variables, design has {}", groups.p(), stacked.p)));
        }
        let design = Design::new(stacked.x.clone(), groups.expand(stacked.lags))?;
        Ok(Self { design: Arc::new(design), y: stacked.y.clone(), groups: groups.clone(), lags: stacked.lags })
    }

    pub fn p(&self) -> usize {
        self.groups.p()
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    /// Base weight of every expanded group under a non-adaptive scheme.
    pub fn base_weights(&self, scheme: WeightScheme) -> Result<Vec<f64>> {
        let sizes = self.design.groups().sizes();
        match scheme {
            WeightScheme::Unit => Ok(vec![1.0; sizes.len()]),
            WeightScheme::SqrtGroupSize => Ok(sizes.iter().map(|&k| (k as f64).sqrt()).collect()),
            WeightScheme::Adaptive => {
                Err(NgcError::InvalidArgument("adaptive weights need a first-stage estimate".into()))
            }
        }
    }

    /// Solves every response with penalties `lambda[i]·weights[i][g]`,
    /// optionally warm-started from an earlier estimate on the same design.
    pub fn fit(
        &self,
        lambda: &[f64],
        weights: &[Vec<f64>],
        config: &SolverConfig,
        warm: Option<&NgcEstimate>,
    ) -> Result<(Vec<DMatrix<f64>>, Vec<f64>)> {
        let p = self.p();
        if lambda.len() != p || weights.len() != p {
            return Err(NgcError::Dimension("need one penalty level and weight vector per response".into()));
        }
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(NgcError::InvalidArgument("lambda must be positive".into()));
        }
        if let Some(w) = warm {
            if w.p() != p || w.lags() != self.lags {
                return Err(NgcError::Dimension("warm start has a different shape".into()));
            }
        }
        let rows: Vec<(DVector<f64>, f64)> = (0..p)
            .into_par_iter()
            .map(|i| {
                let y = self.y.column(i).into_owned();
                let pen: Vec<f64> = weights[i].iter().map(|w| w * lambda[i]).collect();
                let problem = GroupLassoProblem::with_design(self.design.clone(), y, pen)?;
                let start = warm.map(|w| w.row(i));
                let sol = solve_bcd(&problem, config, start.as_ref())?;
                Ok((sol.beta_hat, sol.kkt_residual))
            })
            .enumerate()
            .map(|(i, r): (usize, Result<_>)| {
                r.map_err(|e| NgcError::ResponseFailure { response: i, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        let mut a_hat = vec![DMatrix::zeros(p, p); self.lags];
        let mut kkt = Vec::with_capacity(p);
        for (i, (beta, r)) in rows.into_iter().enumerate() {
            for (c, v) in beta.iter().enumerate() {
                a_hat[c / p][(i, c % p)] = *v;
            }
            kkt.push(r);
        }
        Ok((a_hat, kkt))
    }

    pub(crate) fn assemble(
        &self,
        (a_hat, kkt): (Vec<DMatrix<f64>>, Vec<f64>),
        variant: Variant,
        weight_scheme: WeightScheme,
        lambda: f64,
    ) -> NgcEstimate {
        NgcEstimate {
            d_hat: estimate_order(&a_hat),
            a_hat,
            variant,
            weight_scheme,
            lambda_used: lambda,
            per_response_kkt: kkt,
            groups: self.groups.clone(),
        }
    }

    /// Regular estimate with a common `λ` and fixed weights.
    pub fn regular(&self, lambda: f64, scheme: WeightScheme, config: &SolverConfig) -> Result<NgcEstimate> {
        let w = self.base_weights(scheme)?;
        let fit = self.fit(&vec![lambda; self.p()], &vec![w; self.p()], config, None)?;
        Ok(self.assemble(fit, Variant::Regular, scheme, lambda))
    }

    /// Adaptive weights `min{1, ‖Ã^t_{i,[g]}‖⁻¹}` from a first-stage estimate
    /// (weight 1 where the first stage is zero).
    pub fn adaptive_weights(&self, first_stage: &NgcEstimate) -> Result<Vec<Vec<f64>>> {
        if first_stage.p() != self.p() || first_stage.lags() != self.lags || first_stage.groups != self.groups {
            return Err(NgcError::Dimension("first-stage estimate does not match the design".into()));
        }
        let g_count = self.groups.num_groups();
        Ok((0..self.p())
            .map(|i| {
                (0..self.lags * g_count)
                    .map(|e| {
                        let norm = first_stage.block_norm(e / g_count + 1, i, e % g_count);
                        if norm > 0.0 {
                            (1.0 / norm).min(1.0)
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect())
    }

    pub fn adaptive(&self, lambda: f64, first_stage: &NgcEstimate, config: &SolverConfig) -> Result<NgcEstimate> {
        let w = self.adaptive_weights(first_stage)?;
        let fit = self.fit(&vec![lambda; self.p()], &w, config, None)?;
        Ok(self.assemble(fit, Variant::Adaptive, WeightScheme::Adaptive, lambda))
    }

    /// Residual sd of an estimate on this design, pooled over responses.
    pub fn residual_sd(&self, estimate: &NgcEstimate) -> f64 {
        let n = self.n();
        let mut ss = 0.0;
        for i in 0..self.p() {
            let fitted = self.design.x() * estimate.row(i);
            ss += (self.y.column(i) - fitted).norm_squared();
        }
        (ss / (n * self.p()) as f64).sqrt()
    }
}

/// Regular estimate: `p` group-lasso solves with `λ_g = λ·w_g`.
pub fn estimate_regular(
    design: &StackedDesign,
    groups: &GroupStructure,
    lambda: f64,
    scheme: WeightScheme,
    config: &SolverConfig,
) -> Result<NgcEstimate> {
    NetworkDesign::new(design, groups)?.regular(lambda, scheme, config)
}

/// Second-stage fit with adaptive weights from `first_stage`.
pub fn estimate_adaptive(
    design: &StackedDesign,
    groups: &GroupStructure,
    lambda: f64,
    first_stage: &NgcEstimate,
    config: &SolverConfig,
) -> Result<NgcEstimate> {
    NetworkDesign::new(design, groups)?.adaptive(lambda, first_stage, config)
}

/// Bi-level thresholds: group level `δ_grp`, within-group share `δ_misspec`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub delta_grp: f64,
    pub delta_misspec: f64,
}

impl ThresholdSpec {
    pub fn new(delta_grp: f64, delta_misspec: f64) -> Result<Self> {
        if !(delta_grp >= 0.0 && delta_grp.is_finite()) {
            return Err(NgcError::InvalidArgument("delta_grp must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&delta_misspec) {
            return Err(NgcError::InvalidArgument("delta_misspec must lie in [0, 1)".into()));
        }
        Ok(Self { delta_grp, delta_misspec })
    }

    /// `δ_grp = 0.7·λ·σ̂`, `δ_misspec = n^{−0.2}`.
    pub fn recommended(lambda: f64, sigma_hat: f64, n: usize) -> Result<Self> {
        Self::new(0.7 * lambda * sigma_hat, (n as f64).powf(-0.2))
    }
}

/// Bi-level thresholding.
///
/// A block `Ã^t_{i,[g]}` survives only if its norm exceeds `δ_grp`; inside a
/// surviving block an entry survives only if `|Ã^t_ij|` exceeds
/// `δ_misspec·‖Ã^t_{i,[g]}‖`. Both comparisons are strict.
pub fn threshold_estimate(estimate: &NgcEstimate, spec: &ThresholdSpec) -> NgcEstimate {
    let mut a_hat = estimate.a_hat.clone();
    let groups = &estimate.groups;
    for (l, m) in a_hat.iter_mut().enumerate() {
        for i in 0..m.nrows() {
            for g in 0..groups.num_groups() {
                let norm = estimate.block_norm(l + 1, i, g);
                let keep_group = norm > spec.delta_grp;
                let cut = spec.delta_misspec * norm;
                for &j in groups.members(g) {
                    if !keep_group || !(m[(i, j)].abs() > cut) {
                        m[(i, j)] = 0.0;
                    }
                }
            }
        }
    }
    NgcEstimate { d_hat: estimate_order(&a_hat), a_hat, variant: Variant::Thresholded, ..estimate.clone() }
}

/// Thresholds `4λ` (group) and `2δ_n` (within group).
pub fn threshold_by_theory(estimate: &NgcEstimate, lambda: f64, delta_n: f64) -> Result<NgcEstimate> {
    if !(lambda > 0.0) {
        return Err(NgcError::InvalidArgument("lambda must be positive".into()));
    }
    if !(delta_n > 0.0 && delta_n < 0.5) {
        return Err(NgcError::InvalidArgument("delta_n must lie in (0, 1/2)".into()));
    }
    Ok(threshold_estimate(estimate, &ThresholdSpec::new(4.0 * lambda, 2.0 * delta_n)?))
}

/// Constants of the theoretical tuning rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub alpha: f64,
    pub eta: f64,
    pub sigma: f64,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) {
            return Err(NgcError::InvalidArgument("alpha must exceed 1".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(NgcError::InvalidArgument("eta must lie in (0, 1)".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(NgcError::InvalidArgument("sigma must be positive".into()));
        }
        Ok(())
    }
}

fn log_g(g_count: usize) -> f64 {
    (g_count.max(1) as f64).ln()
}

/// `λ_g = (2σ/√n)·sqrt(‖C_[g][g]‖)·(√k_g + (π/√2)·sqrt(α log G))`.
pub fn theoretical_lambda(
    block_norms: &[f64],
    group_sizes: &[usize],
    g_count: usize,
    n: usize,
    theory: &TheoryConfig,
) -> Result<Vec<f64>> {
    if !(theory.sigma > 0.0) {
        return Err(NgcError::InvalidArgument("sigma must be positive".into()));
    }
    if block_norms.len() != group_sizes.len() {
        return Err(NgcError::Dimension("one block norm per group size".into()));
    }
    if n == 0 {
        return Err(NgcError::InvalidArgument("n must be positive".into()));
    }
    let tail = std::f64::consts::PI / 2f64.sqrt() * (theory.alpha * log_g(g_count)).sqrt();
    let scale = 2.0 * theory.sigma / (n as f64).sqrt();
    Ok(block_norms.iter().zip(group_sizes).map(|(&c, &k)| scale * c.sqrt() * ((k as f64).sqrt() + tail)).collect())
}

/// Smallest `λ` admitted by the selection-consistency rule:
/// `max_{g∉S} (1/η)(σ/√n)·sqrt(‖(C22)_[g][g]‖)·(√k_g + (π/√2)·sqrt(α log G))`.
pub fn selection_lambda(blocks: &GramBlocks, n: usize, theory: &TheoryConfig) -> Result<f64> {
    theory.validate()?;
    let g_count = blocks.groups.len();
    let tail = std::f64::consts::PI / 2f64.sqrt() * (theory.alpha * log_g(g_count)).sqrt();
    let mut at = 0;
    let mut best: f64 = 0.0;
    for &g in &blocks.off_support {
        let k = blocks.groups.group(g).len();
        let norm = linalg::spectral_norm(&blocks.c22.view((at, at), (k, k)).into_owned());
        at += k;
        best = best.max(theory.sigma / (theory.eta * (n as f64).sqrt()) * norm.sqrt() * ((k as f64).sqrt() + tail));
    }
    Ok(best)
}

/// `δ_n = max_{g∈S} (1/‖β⁰_[g]‖)·(λ√s‖C11⁻¹‖ + σ·sqrt(‖(C11⁻¹)_[g][g]‖)·(√k_g + sqrt(α log G))/√n)`.
///
/// `beta0_norms` is indexed by group; only support groups are read.
pub fn theoretical_delta(
    blocks: &GramBlocks,
    beta0_norms: &[f64],
    lambda: f64,
    n: usize,
    theory: &TheoryConfig,
) -> Result<f64> {
    if blocks.support.is_empty() {
        return Err(NgcError::InvalidArgument("support must be non-empty".into()));
    }
    if beta0_norms.len() != blocks.groups.len() {
        return Err(NgcError::Dimension("one coefficient norm per group".into()));
    }
    let inv = linalg::spd_inverse(&blocks.c11)?;
    let inv_norm = linalg::spectral_norm(&inv);
    let s = blocks.support.len() as f64;
    let root_log = (theory.alpha * log_g(blocks.groups.len())).sqrt();
    let mut at = 0;
    let mut best: f64 = 0.0;
    for &g in &blocks.support {
        let k = blocks.groups.group(g).len();
        let local = linalg::spectral_norm(&inv.view((at, at), (k, k)).into_owned());
        at += k;
        let b = beta0_norms[g];
        if !(b > 0.0) {
            return Err(NgcError::Precondition(format!("support group {g} has zero coefficients")));
        }
        let v = (lambda * s.sqrt() * inv_norm + theory.sigma * local.sqrt() * ((k as f64).sqrt() + root_log) / (n as f64).sqrt()) / b;
        best = best.max(v);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkFormat {
    Dot,
    Graphml,
}

impl std::str::FromStr for NetworkFormat {
    type Err = NgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "graphml" => Ok(Self::Graphml),
            other => Err(NgcError::UnknownFormat(other.to_string())),
        }
    }
}

/// Network of an estimate as DOT or GraphML text.
///
/// Nodes are `v1..vp`. Aggregated: edge `vj -> vi` iff some `Â^t_ij ≠ 0`,
/// weighted by `Σ_t |Â^t_ij|`. Otherwise one edge per nonzero lag entry.
pub fn export_network(estimate: &NgcEstimate, format: NetworkFormat, aggregate: bool) -> String {
    let p = estimate.p();
    let mut edges: Vec<(usize, usize, Option<usize>, f64)> = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if aggregate {
                let w: f64 = estimate.a_hat.iter().map(|m| m[(i, j)].abs()).sum();
                if estimate.a_hat.iter().any(|m| m[(i, j)] != 0.0) {
                    edges.push((j, i, None, w));
                }
            } else {
                for (l, m) in estimate.a_hat.iter().enumerate() {
                    if m[(i, j)] != 0.0 {
                        edges.push((j, i, Some(l + 1), m[(i, j)]));
                    }
                }
            }
        }
    }
    match format {
        NetworkFormat::Dot => {
            let mut s = String::from("digraph ngc {\n");
            for k in 1..=p {
                s += &format!("  v{k};\n");
            }
            for (from, to, lag, w) in edges {
                match lag {
                    None => s += &format!("  v{} -> v{} [weight={}];\n", from + 1, to + 1, w),
                    Some(l) => s += &format!("  v{} -> v{} [lag={}, weight={}];\n", from + 1, to + 1, l, w),
                }
            }
            s + "}\n"
        }
        NetworkFormat::Graphml => {
            let mut s = String::from(concat!(
                "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
                "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
                "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n",
                "  <key id=\"lag\" for=\"edge\" attr.name=\"lag\" attr.type=\"int\"/>\n",
                "  <graph id=\"ngc\" edgedefault=\"directed\">\n",
            ));
            for k in 1..=p {
                s += &format!("    <node id=\"v{k}\"/>\n");
            }
            for (from, to, lag, w) in edges {
                s += &format!("    <edge source=\"v{}\" target=\"v{}\">\n", from + 1, to + 1);
                if let Some(l) = lag {
                    s += &format!("      <data key=\"lag\">{l}</data>\n");
                }
                s += &format!("      <data key=\"weight\">{w}</data>\n    </edge>\n");
            }
            s + "  </graph>\n</graphml>\n"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::make_stacked_design;
    use crate::varsim::{generate_model, simulate_panel, SimDesign};

    fn estimate(a_hat: Vec<DMatrix<f64>>, groups: GroupStructure) -> NgcEstimate {
        NgcEstimate {
            d_hat: estimate_order(&a_hat),
            per_response_kkt: vec![0.0; groups.p()],
            a_hat,
            variant: Variant::Regular,
            weight_scheme: WeightScheme::Unit,
            lambda_used: 1.0,
            groups,
        }
    }

    fn fixture(seed: u64) -> (StackedDesign, GroupStructure, crate::varsim::VarModel) {
        let design = SimDesign {
            p: 12,
            t_len: 5,
            n: 200,
            d: 2,
            group_sizes: vec![3; 4],
            s_per_row: 1,
            misspecification_rate: 0.0,
            snr_target: 1.5,
            coefficient_magnitude_range: (0.5, 1.0),
            seed,
        };
        let model = generate_model(&design).unwrap();
        let panel = simulate_panel(&model, design.n, design.t_len, 300, seed + 1).unwrap();
        let groups = design.groups().unwrap();
        (make_stacked_design(&panel, &groups).unwrap(), groups, model)
    }

    #[test]
    fn order_definition() {
        let z = DMatrix::zeros(2, 2);
        assert_eq!(estimate_order(&[z.clone(), z.clone()]), 0);
        let mut one = z.clone();
        one[(1, 0)] = 0.1;
        assert_eq!(estimate_order(&[one.clone(), z.clone()]), 1);
        assert_eq!(estimate_order(&[z.clone(), z.clone(), one, z]), 3);
    }

    #[test]
    fn threshold_rules() {
        let g = GroupStructure::contiguous(&[2]).unwrap();
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 0.3;
        m[(0, 1)] = 0.4;
        m[(1, 0)] = 3.0;
        m[(1, 1)] = 4.0;
        let e = estimate(vec![m], g);
        let same = threshold_estimate(&e, &ThresholdSpec::new(0.0, 0.0).unwrap());
        assert_eq!(same.a_hat, e.a_hat);
        let cut = threshold_estimate(&e, &ThresholdSpec::new(0.6, 0.0).unwrap());
        assert_eq!(cut.a_hat[0][(0, 0)], 0.0);
        assert_eq!(cut.a_hat[0][(0, 1)], 0.0);
        let kept = threshold_estimate(&e, &ThresholdSpec::new(0.4, 0.0).unwrap());
        assert_eq!(kept.a_hat[0][(0, 1)], 0.4);
        let within = threshold_estimate(&e, &ThresholdSpec::new(0.0, 0.7).unwrap());
        assert_eq!(within.a_hat[0][(1, 0)], 0.0);
        assert_eq!(within.a_hat[0][(1, 1)], 4.0);
        // a norm of exactly 4λ is dropped
        let theory = threshold_by_theory(&e, 1.25, 0.01).unwrap();
        assert_eq!(theory.a_hat[0].row(1).iter().filter(|v| **v != 0.0).count(), 0);
        assert_eq!(theory.variant, Variant::Thresholded);
    }

    #[test]
    fn theory_formulas() {
        let t = TheoryConfig { alpha: 2.0, eta: 0.5, sigma: 1.0 };
        assert!((theoretical_lambda(&[1.0], &[1], 1, 4, &t).unwrap()[0] - 1.0).abs() < 1e-15);
        let l = theoretical_lambda(&[1.0, 1.0], &[4, 1], 1, 4, &t).unwrap();
        assert!((l[0] / l[1] - 2.0).abs() < 1e-14);
        let t2 = TheoryConfig { sigma: 2.0, ..t };
        assert!((theoretical_lambda(&[0.7], &[3], 5, 9, &t2).unwrap()[0]
            - 2.0 * theoretical_lambda(&[0.7], &[3], 5, 9, &t).unwrap()[0])
            .abs()
            < 1e-14);
        assert!(theoretical_lambda(&[1.0], &[1], 1, 4, &TheoryConfig { sigma: 0.0, ..t }).is_err());

        let g = crate::grplasso::GroupPartition::singletons(1);
        let b = GramBlocks::from_gram(DMatrix::identity(1, 1), &g, &[0]).unwrap();
        let d = theoretical_delta(&b, &[1.0], 0.1, 25, &t).unwrap();
        assert!((d - (0.1 + 0.2)).abs() < 1e-14);
        let half = theoretical_delta(&b, &[2.0], 0.1, 25, &t).unwrap();
        assert!((half - d / 2.0).abs() < 1e-14);
    }

    #[test]
    fn null_model_above_lambda_max() {
        let (stacked, groups, _) = fixture(3);
        let e = estimate_regular(&stacked, &groups, 1e6, WeightScheme::Unit, &SolverConfig::default()).unwrap();
        assert_eq!(e.d_hat, 0);
        assert_eq!(e.num_nonzero(), 0);
    }

    #[test]
    fn rows_are_independent() {
        let (stacked, groups, _) = fixture(4);
        let cfg = SolverConfig::default();
        let full = estimate_regular(&stacked, &groups, 0.1, WeightScheme::SqrtGroupSize, &cfg).unwrap();
        assert!(full.per_response_kkt.iter().all(|&r| r <= cfg.tol));
        let design = NetworkDesign::new(&stacked, &groups).unwrap();
        let w = design.base_weights(WeightScheme::SqrtGroupSize).unwrap();
        let pen: Vec<f64> = w.iter().map(|v| v * 0.1).collect();
        let problem = GroupLassoProblem::with_design(design.design.clone(), stacked.y.column(5).into_owned(), pen).unwrap();
        let sol = solve_bcd(&problem, &cfg, None).unwrap();
        assert_eq!(sol.beta_hat, full.row(5));
    }

    #[test]
    fn adaptive_degenerates_to_regular() {
        let (stacked, groups, _) = fixture(5);
        let cfg = SolverConfig::default();
        let zero = estimate(vec![DMatrix::zeros(12, 12); 4], groups.clone());
        let a = estimate_adaptive(&stacked, &groups, 0.1, &zero, &cfg).unwrap();
        let r = estimate_regular(&stacked, &groups, 0.1, WeightScheme::Unit, &cfg).unwrap();
        assert_eq!(a.a_hat, r.a_hat);
        let mut big = zero.clone();
        big.a_hat[0][(0, 0)] = 4.0;
        let w = NetworkDesign::new(&stacked, &groups).unwrap().adaptive_weights(&big).unwrap();
        assert_eq!(w[0][0], 0.25);
        assert_eq!(w[0][1], 1.0);
    }

    #[test]
    fn strong_signal_recovery() {
        let (stacked, groups, model) = fixture(6);
        let cfg = SolverConfig::default();
        let mut best: f64 = 0.0;
        for lam in [0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0] {
            let e = estimate_regular(&stacked, &groups, lam, WeightScheme::Unit, &cfg).unwrap();
            let c = crate::metrics::confusion(&e, &model).unwrap();
            let f1 = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64;
            best = best.max(f1);
        }
        assert!(best >= 0.9, "best F1 {best}");
    }

    #[test]
    fn network_export() {
        let g = GroupStructure::singletons(3);
        let mut m = DMatrix::zeros(3, 3);
        let empty = estimate(vec![m.clone()], g.clone());
        let dot = export_network(&empty, NetworkFormat::Dot, true);
        assert_eq!(dot.matches("->").count(), 0);
        assert_eq!(dot.matches(";\n").count(), 3);
        m[(1, 0)] = 0.5;
        let one = estimate(vec![m], g);
        let dot = export_network(&one, NetworkFormat::Dot, true);
        assert_eq!(dot.matches("->").count(), 1);
        assert!(dot.contains("v1 -> v2"));
        let xml = export_network(&one, NetworkFormat::Graphml, false);
        assert!(xml.contains("source=\"v1\" target=\"v2\""));
        assert!("svg".parse::<NetworkFormat>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = GroupStructure::contiguous(&[1, 2]).unwrap();
        let mut m = DMatrix::zeros(3, 3);
        m[(2, 1)] = -0.25;
        let e = estimate(vec![DMatrix::zeros(3, 3), m], g);
        let back = NgcEstimate::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
