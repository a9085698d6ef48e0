//! Numerical diagnostics for the selection and estimation conditions.
//!
//! Suprema over non-convex sets are never computed exactly here. The uniform
//! irrepresentable quantity comes with a certified upper bound and a sampled
//! lower bound, and compatibility constants are sampled, which makes every
//! sampled minimum an upper bound on the true constant. Checks built on them
//! are necessary conditions only.

mod direction;
mod probe;
mod spectral;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{NgcError, Result};
use crate::grplasso::GroupPartition;
use crate::linalg;

pub use direction::{direction, direction_perturbation_check};
pub use probe::{direction_consistency_probe, ProbeFixture, ProbeLambda, ProbeReport};
pub use spectral::{autocovariances, block_toeplitz, characteristic_polynomial, spectral_check, theta_grid, SpectralReport};

/// `C = X'X/n` partitioned by a support set of groups.
#[derive(Debug, Clone)]
pub struct GramBlocks {
    pub c: DMatrix<f64>,
    pub groups: GroupPartition,
    /// Support groups, ascending.
    pub support: Vec<usize>,
    /// Groups outside the support, ascending.
    pub off_support: Vec<usize>,
    /// Columns of the support groups, in support order.
    pub support_cols: Vec<usize>,
    pub off_cols: Vec<usize>,
    pub c11: DMatrix<f64>,
    pub c12: DMatrix<f64>,
    pub c21: DMatrix<f64>,
    pub c22: DMatrix<f64>,
    /// Block diagonal with `√k_g I_{k_g}` for `g ∈ S`.
    pub k0: DMatrix<f64>,
}

impl GramBlocks {
    /// Partitions a precomputed Gram matrix.
    pub fn from_gram(c: DMatrix<f64>, groups: &GroupPartition, support: &[usize]) -> Result<Self> {
        if c.nrows() != groups.dim() || c.ncols() != groups.dim() {
            return Err(NgcError::Dimension("Gram matrix does not match the group partition".into()));
        }
        let mut s: Vec<usize> = support.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() {
            return Err(NgcError::InvalidArgument("support must be non-empty".into()));
        }
        if s.iter().any(|&g| g >= groups.len()) {
            return Err(NgcError::InvalidArgument("support group out of range".into()));
        }
        let off: Vec<usize> = (0..groups.len()).filter(|g| s.binary_search(g).is_err()).collect();
        let cols = |gs: &[usize]| gs.iter().flat_map(|&g| groups.group(g).iter().copied()).collect::<Vec<_>>();
        let (sc, oc) = (cols(&s), cols(&off));
        let pick = |r: &[usize], k: &[usize]| DMatrix::from_fn(r.len(), k.len(), |i, j| c[(r[i], k[j])]);
        let q = sc.len();
        let mut k0 = DMatrix::zeros(q, q);
        let mut at = 0;
        for &g in &s {
            let k = groups.group(g).len();
            for _ in 0..k {
                k0[(at, at)] = (k as f64).sqrt();
                at += 1;
            }
        }
        Ok(Self {
            c11: pick(&sc, &sc),
            c12: pick(&sc, &oc),
            c21: pick(&oc, &sc),
            c22: pick(&oc, &oc),
            k0,
            support_cols: sc,
            off_cols: oc,
            support: s,
            off_support: off,
            groups: groups.clone(),
            c,
        })
    }

    pub fn q(&self) -> usize {
        self.support_cols.len()
    }

    /// Rebuilds `C` in the original column order from the four blocks.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let dim = self.groups.dim();
        let mut c = DMatrix::zeros(dim, dim);
        let parts = [
            (&self.support_cols, &self.support_cols, &self.c11),
            (&self.support_cols, &self.off_cols, &self.c12),
            (&self.off_cols, &self.support_cols, &self.c21),
            (&self.off_cols, &self.off_cols, &self.c22),
        ];
        for (rows, cols, block) in parts {
            for (i, &r) in rows.iter().enumerate() {
                for (j, &k) in cols.iter().enumerate() {
                    c[(r, k)] = block[(i, j)];
                }
            }
        }
        c
    }

    /// Row ranges of each off-support group inside `C21`.
    fn off_ranges(&self) -> Vec<(usize, usize)> {
        ranges(&self.groups, &self.off_support)
    }

    fn support_ranges(&self) -> Vec<(usize, usize)> {
        ranges(&self.groups, &self.support)
    }

    /// `C21 C11⁻¹ K` with `K = diag(λ_h I)` over the support.
    fn leverage(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        self.check_lambda(lambda)?;
        let inv = linalg::spd_inverse(&self.c11)?;
        let mut m = &self.c21 * inv;
        for (&h, &(start, len)) in self.support.iter().zip(&self.support_ranges()) {
            m.columns_mut(start, len).scale_mut(lambda[h]);
        }
        Ok(m)
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.groups.len() {
            return Err(NgcError::Dimension(format!("{} penalties for {} groups", lambda.len(), self.groups.len())));
        }
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(NgcError::InvalidArgument("penalties must be positive".into()));
        }
        Ok(())
    }
}

fn ranges(groups: &GroupPartition, set: &[usize]) -> Vec<(usize, usize)> {
    let mut at = 0;
    set.iter()
        .map(|&g| {
            let k = groups.group(g).len();
            at += k;
            (at - k, k)
        })
        .collect()
}

/// Partitions `X'X/n` by the support `S`.
pub fn gram_blocks(x: &DMatrix<f64>, groups: &GroupPartition, support: &[usize]) -> Result<GramBlocks> {
    if x.nrows() == 0 {
        return Err(NgcError::Dimension("design has no rows".into()));
    }
    let c = x.tr_mul(x) / x.nrows() as f64;
    GramBlocks::from_gram(c, groups, support)
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakIrrep {
    pub off_groups: Vec<usize>,
    /// `(1/λ_g)‖[C21 C11⁻¹ K D̃(β⁰)]_[g]‖` per off-support group.
    pub lhs: Vec<f64>,
    pub satisfied: bool,
}

/// Weak irrepresentable margins at the true direction `D̃(β⁰)`.
///
/// `beta0` has the full design length; every support group must be nonzero.
pub fn weak_irrep_margin(blocks: &GramBlocks, beta0: &DVector<f64>, lambda: &[f64]) -> Result<WeakIrrep> {
    let tau = true_direction(blocks, beta0)?;
    let m = blocks.leverage(lambda)?;
    let lhs = off_norms(blocks, &(m * tau), lambda);
    let satisfied = lhs.iter().all(|&v| v <= 1.0);
    Ok(WeakIrrep { off_groups: blocks.off_support.clone(), lhs, satisfied })
}

fn true_direction(blocks: &GramBlocks, beta0: &DVector<f64>) -> Result<DVector<f64>> {
    if beta0.len() != blocks.groups.dim() {
        return Err(NgcError::Dimension("beta0 length does not match the design".into()));
    }
    let mut tau = DVector::zeros(blocks.q());
    for (&g, &(start, len)) in blocks.support.iter().zip(&blocks.support_ranges()) {
        let b = blocks.groups.block(beta0, g);
        if b.norm() == 0.0 {
            return Err(NgcError::Precondition(format!("support group {g} has zero coefficients")));
        }
        tau.rows_mut(start, len).copy_from(&direction(&b));
    }
    Ok(tau)
}

fn off_norms(blocks: &GramBlocks, v: &DVector<f64>, lambda: &[f64]) -> Vec<f64> {
    blocks
        .off_support
        .iter()
        .zip(blocks.off_ranges())
        .map(|(&g, (start, len))| v.rows(start, len).norm() / lambda[g])
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformIrrep {
    pub off_groups: Vec<usize>,
    /// `Σ_{h∈S} ‖[C21 C11⁻¹ K]_{[g],[h]}‖ / λ_g`, valid since `‖τ_[h]‖ ≤ 1`.
    pub upper: Vec<f64>,
    /// Best value over the sampled and candidate `τ`: a lower bound on the supremum.
    pub sampled_max: Vec<f64>,
    pub num_samples: usize,
}

/// Bounds on the uniform irrepresentable supremum per off-support group.
///
/// Besides `num_samples` draws of `τ` with each block uniform on its unit
/// sphere, the per-block top right singular vectors and any `candidates`
/// (length `q`, rescaled blockwise onto the spheres) are evaluated.
pub fn uniform_irrep_bound(
    blocks: &GramBlocks,
    lambda: &[f64],
    num_samples: usize,
    seed: u64,
    candidates: &[DVector<f64>],
) -> Result<UniformIrrep> {
    let m = blocks.leverage(lambda)?;
    let off = blocks.off_ranges();
    let sup = blocks.support_ranges();
    let upper: Vec<f64> = blocks
        .off_support
        .iter()
        .zip(&off)
        .map(|(&g, &(r0, rl))| {
            sup.iter().map(|&(c0, cl)| linalg::spectral_norm(&m.view((r0, c0), (rl, cl)).into_owned())).sum::<f64>()
                / lambda[g]
        })
        .collect();
    let mut best = vec![0.0f64; off.len()];
    let mut consider = |tau: &DVector<f64>| {
        for (b, v) in best.iter_mut().zip(off_norms(blocks, &(&m * tau), lambda)) {
            *b = b.max(v);
        }
    };
    for cand in candidates {
        if cand.len() != blocks.q() {
            return Err(NgcError::Dimension("candidate direction has wrong length".into()));
        }
        consider(&onto_spheres(cand, &sup));
    }
    // aligned singular directions, one per (g, h) block
    for &(r0, rl) in &off {
        for &(c0, cl) in &sup {
            let svd = m.view((r0, c0), (rl, cl)).into_owned().svd(false, true);
            let Some(vt) = svd.v_t else { continue };
            let top: DVector<f64> = vt.row(svd.singular_values.imax()).transpose();
            let mut tau = DVector::zeros(blocks.q());
            tau.rows_mut(c0, cl).copy_from(&top);
            consider(&tau);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..num_samples {
        let raw = DVector::from_fn(blocks.q(), |_, _| rng.sample::<f64, _>(StandardNormal));
        consider(&onto_spheres(&raw, &sup));
    }
    Ok(UniformIrrep { off_groups: blocks.off_support.clone(), upper, sampled_max: best, num_samples })
}

fn onto_spheres(v: &DVector<f64>, ranges: &[(usize, usize)]) -> DVector<f64> {
    let mut out = v.clone();
    for &(s, l) in ranges {
        let block = direction(&v.rows(s, l).into_owned());
        out.rows_mut(s, l).copy_from(&block);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct IrrepReport {
    pub off_groups: Vec<usize>,
    pub weak_lhs: Vec<f64>,
    pub weak_satisfied: bool,
    pub uniform_upper: Vec<f64>,
    pub uniform_sampled_max: Vec<f64>,
    pub num_samples: usize,
    /// `1 − max_g uniform_upper`: certified, possibly negative.
    pub eta_estimate: f64,
}

/// Weak and uniform irrepresentable diagnostics; `D̃(β⁰)` is among the
/// uniform candidates so the sandwich `weak ≤ sampled ≤ upper` holds.
pub fn irrep_report(
    blocks: &GramBlocks,
    beta0: &DVector<f64>,
    lambda: &[f64],
    num_samples: usize,
    seed: u64,
) -> Result<IrrepReport> {
    let weak = weak_irrep_margin(blocks, beta0, lambda)?;
    let tau = true_direction(blocks, beta0)?;
    let uni = uniform_irrep_bound(blocks, lambda, num_samples, seed, &[tau])?;
    let eta_estimate = 1.0 - uni.upper.iter().copied().fold(0.0, f64::max);
    Ok(IrrepReport {
        off_groups: weak.off_groups,
        weak_lhs: weak.lhs,
        weak_satisfied: weak.satisfied,
        uniform_upper: uni.upper,
        uniform_sampled_max: uni.sampled_max,
        num_samples,
        eta_estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// Group compatibility over the support `S`.
    Compatibility,
    /// Restricted eigenvalue with the worst `|J| ≤ s` among a few candidate sets.
    Re,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiReport {
    pub mode: PhiMode,
    pub cone_l: f64,
    pub phi_samples: Vec<f64>,
    /// An upper bound on the true constant.
    pub sampled_min: f64,
    /// `L Σ_{g∈S} λ_g‖Δ_g‖ − Σ_{g∉S} λ_g‖Δ_g‖` per sample; nonnegative in the cone.
    pub cone_slack: Vec<f64>,
    #[serde(skip)]
    pub deltas: Vec<DVector<f64>>,
}

const MAX_DEGENERATE_DRAWS: usize = 100;

/// Samples the compatibility or restricted-eigenvalue ratio over the cone
/// `Σ_{g∉S} λ_g‖Δ_g‖ ≤ L Σ_{g∈S} λ_g‖Δ_g‖`.
///
/// Draws are Gaussian with the off-support part shrunk onto the cone when
/// outside it. The eigenvectors of `C` (smallest first) are evaluated too,
/// after the same projection. Draws whose support part vanishes are redrawn.
#[allow(clippy::too_many_arguments)]
pub fn sampled_phi(
    x: &DMatrix<f64>,
    groups: &GroupPartition,
    support: &[usize],
    cone_l: f64,
    lambda: &[f64],
    num_samples: usize,
    mode: PhiMode,
    seed: u64,
) -> Result<PhiReport> {
    if num_samples == 0 {
        return Err(NgcError::InvalidArgument("need at least one sample".into()));
    }
    if !(cone_l > 0.0 && cone_l.is_finite()) {
        return Err(NgcError::InvalidArgument("cone constant must be positive".into()));
    }
    let blocks = gram_blocks(x, groups, support)?;
    blocks.check_lambda(lambda)?;
    let c = &blocks.c;
    let sup = &blocks.support;
    let in_s: Vec<bool> = (0..groups.len()).map(|g| sup.binary_search(&g).is_ok()).collect();
    let weighted = |d: &DVector<f64>| -> (f64, f64) {
        let mut on = 0.0;
        let mut offs = 0.0;
        for g in 0..groups.len() {
            let v = lambda[g] * groups.block_norm(d, g);
            if in_s[g] {
                on += v;
            } else {
                offs += v;
            }
        }
        (on, offs)
    };
    let project = |mut d: DVector<f64>| -> Option<DVector<f64>> {
        let (on, offs) = weighted(&d);
        if on == 0.0 {
            return None;
        }
        if offs > cone_l * on {
            let shrink = cone_l * on / offs;
            for g in 0..groups.len() {
                if !in_s[g] {
                    for &j in groups.group(g) {
                        d[j] *= shrink;
                    }
                }
            }
        }
        Some(d)
    };
    let s = sup.len();
    let lam_s = sup.iter().map(|&g| lambda[g] * lambda[g]).sum::<f64>().sqrt();
    let ratio = |d: &DVector<f64>| -> f64 {
        let quad = d.dot(&(c * d)).max(0.0);
        let fit = quad.sqrt();
        match mode {
            PhiMode::Compatibility => {
                let (on, _) = weighted(d);
                lam_s * fit / on
            }
            PhiMode::Re => re_ratio(d, groups, lambda, sup, s, cone_l, fit),
        }
    };

    let mut deltas = Vec::with_capacity(num_samples + groups.dim());
    let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    for k in order {
        if let Some(d) = project(eig.eigenvectors.column(k).into_owned()) {
            deltas.push(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..num_samples {
        let mut failures = 0;
        loop {
            let raw = DVector::from_fn(groups.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Some(d) = project(raw) {
                deltas.push(d);
                break;
            }
            failures += 1;
            if failures >= MAX_DEGENERATE_DRAWS {
                return Err(NgcError::Precondition("support part of every draw vanished".into()));
            }
        }
    }
    let phi_samples: Vec<f64> = deltas.iter().map(&ratio).collect();
    let cone_slack: Vec<f64> = deltas
        .iter()
        .map(|d| {
            let (on, offs) = weighted(d);
            cone_l * on - offs
        })
        .collect();
    let sampled_min = phi_samples.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PhiReport { mode, cone_l, phi_samples, sampled_min, cone_slack, deltas })
}

/// `‖XΔ‖/(√n ‖Δ_J‖)` minimized over candidate sets `J` (the support, the `s`
/// largest blocks, the `s` largest weighted blocks) that keep `Δ` in their cone.
fn re_ratio(
    d: &DVector<f64>,
    groups: &GroupPartition,
    lambda: &[f64],
    support: &[usize],
    s: usize,
    cone_l: f64,
    fit: f64,
) -> f64 {
    let norms: Vec<f64> = (0..groups.len()).map(|g| groups.block_norm(d, g)).collect();
    let top = |key: &dyn Fn(usize) -> f64| {
        let mut idx: Vec<usize> = (0..groups.len()).collect();
        idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        idx.truncate(s);
        idx
    };
    let sets = [support.to_vec(), top(&|g| norms[g]), top(&|g| lambda[g] * norms[g])];
    let mut best = f64::INFINITY;
    for j in &sets {
        let on: f64 = j.iter().map(|&g| lambda[g] * norms[g]).sum();
        let total: f64 = (0..groups.len()).map(|g| lambda[g] * norms[g]).sum();
        if total - on > cone_l * on * (1.0 + 1e-12) {
            continue;
        }
        let dj = j.iter().map(|&g| norms[g] * norms[g]).sum::<f64>().sqrt();
        if dj > 0.0 {
            best = best.min(fit / dj);
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityBound {
    /// `sqrt(Λ_min(C11))·(1 − (1−η)L)`.
    pub bound: f64,
    pub sampled_min: f64,
    pub holds: bool,
}

/// Tests the compatibility lower bound implied by a uniform irrepresentable
/// slack `η`: a failure means the sampled ratios contradict the bound.
pub fn check_irrep_implies_compatibility(
    blocks: &GramBlocks,
    eta: f64,
    cone_l: f64,
    phi: &PhiReport,
) -> Result<CompatibilityBound> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(NgcError::Precondition(format!("eta={eta} must lie in (0, 1]")));
    }
    if !(cone_l > 0.0) || (1.0 - eta) * cone_l >= 1.0 {
        return Err(NgcError::Precondition(format!("L={cone_l} must be below 1/(1-eta)")));
    }
    if phi.mode != PhiMode::Compatibility {
        return Err(NgcError::Precondition("bound applies to the compatibility constant".into()));
    }
    let lmin = linalg::min_eigenvalue(&blocks.c11).max(0.0);
    let bound = lmin.sqrt() * (1.0 - (1.0 - eta) * cone_l);
    Ok(CompatibilityBound { bound, sampled_min: phi.sampled_min, holds: phi.sampled_min >= bound - 1e-9 })
}
