//! Weighted group lasso
//!
//! Minimizes `(1/2n)‖Y − Xβ‖² + Σ_g λ_g ‖β_[g]‖` over β by block coordinate
//! descent. Each block update is solved exactly: in closed form when the block
//! Gram matrix is a scaled identity, otherwise through a scalar root find on
//! the block norm in the block's eigenbasis. Convergence is declared on the
//! KKT residual, which doubles as an optimality certificate.

mod path;
mod prox;
mod solver;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{NgcError, Result};
use crate::scalar::Real;

pub use path::{lambda_max, solve_path};
pub use prox::prox_group;
pub use solver::{kkt_residual, objective, solve_bcd};

/// A partition of `0..dim` into non-overlapping, non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(NgcError::InvalidArgument(format!("group {g} is empty")));
            }
            for &j in members {
                if j >= dim {
                    return Err(NgcError::InvalidArgument(format!(
                        "group {g} references index {j} outside 0..{dim}"
                    )));
                }
                if seen[j] {
                    return Err(NgcError::InvalidArgument(format!("index {j} appears in two groups")));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(NgcError::InvalidArgument(format!("index {j} is not covered by any group")));
        }
        Ok(Self { groups, dim })
    }

    /// Consecutive groups of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&k| {
                let g: Vec<usize> = (start..start + k).collect();
                start += k;
                g
            })
            .collect();
        Self::new(groups, start)
    }

    pub fn singletons(dim: usize) -> Self {
        Self { groups: (0..dim).map(|j| vec![j]).collect(), dim }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Euclidean norm of the coordinates of `v` in group `g`.
    pub fn block_norm<T: Real>(&self, v: &DVector<T>, g: usize) -> T {
        self.groups[g].iter().fold(T::zero(), |acc, &j| acc + v[j] * v[j]).sqrt()
    }

    pub fn block<T: Real>(&self, v: &DVector<T>, g: usize) -> DVector<T> {
        DVector::from_iterator(self.groups[g].len(), self.groups[g].iter().map(|&j| v[j]))
    }
}

/// Eigendecomposition of one diagonal Gram block.
#[derive(Debug, Clone)]
pub(crate) struct BlockSystem<T: Real> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
    /// `Some(a)` when the block Gram equals `a·I`.
    pub scaled_identity: Option<T>,
}

/// Design matrix with the Gram quantities every solve on it reuses.
///
/// One `Design` is shared (through `Arc`) by all responses of a network fit
/// and by every point of a regularization path.
#[derive(Debug, Clone)]
pub struct Design<T: Real> {
    x: DMatrix<T>,
    groups: GroupPartition,
    gram: DMatrix<T>,
    blocks: Vec<BlockSystem<T>>,
}

impl<T: Real> Design<T> {
    pub fn new(x: DMatrix<T>, groups: GroupPartition) -> Result<Self> {
        if x.ncols() != groups.dim() {
            return Err(NgcError::Dimension(format!(
                "design has {} columns but the partition covers {}",
                x.ncols(),
                groups.dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(NgcError::Dimension("design has no rows".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NgcError::InvalidArgument("design contains non-finite entries".into()));
        }
        let n = T::from_usize(x.nrows()).unwrap();
        let gram = (x.transpose() * &x) / n;
        let blocks = groups
            .groups()
            .iter()
            .map(|members| block_system(&gram, members))
            .collect();
        Ok(Self { x, groups, gram, blocks })
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn groups(&self) -> &GroupPartition {
        &self.groups
    }

    /// `X'X / n`.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Spectral norm of the diagonal Gram block of each group.
    pub fn block_spectral_norms(&self) -> Vec<T> {
        self.blocks
            .iter()
            .map(|b| b.values.iter().fold(T::zero(), |m, &v| m.max(v.abs())))
            .collect()
    }

    pub(crate) fn block_system(&self, g: usize) -> &BlockSystem<T> {
        &self.blocks[g]
    }

    /// `X'y / n`.
    pub fn correlate(&self, y: &DVector<T>) -> DVector<T> {
        self.x.tr_mul(y) / T::from_usize(self.n()).unwrap()
    }
}

fn block_system<T: Real>(gram: &DMatrix<T>, members: &[usize]) -> BlockSystem<T> {
    let k = members.len();
    let block = DMatrix::from_fn(k, k, |a, b| gram[(members[a], members[b])]);
    let diag0 = block[(0, 0)];
    let scale = (0..k).fold(T::zero(), |m, a| m.max(block[(a, a)].abs()));
    let tol = T::lit(1e-14) * scale.max(T::one());
    let is_scaled_identity = (0..k).all(|a| {
        (0..k).all(|b| {
            let target = if a == b { diag0 } else { T::zero() };
            (block[(a, b)] - target).abs() <= tol
        })
    });
    if is_scaled_identity {
        return BlockSystem {
            values: DVector::from_element(k, diag0),
            vectors: DMatrix::identity(k, k),
            scaled_identity: Some(diag0),
        };
    }
    let eig = SymmetricEigen::new(block);
    let values = eig.eigenvalues.map(|v| if v < T::zero() { T::zero() } else { v });
    BlockSystem { values, vectors: eig.eigenvectors, scaled_identity: None }
}

/// One weighted group-lasso instance.
#[derive(Debug, Clone)]
pub struct GroupLassoProblem<T: Real> {
    design: Arc<Design<T>>,
    y: DVector<T>,
    xty: DVector<T>,
    yty: T,
    lambda: Vec<T>,
}

impl<T: Real> GroupLassoProblem<T> {
    /// Builds a problem with its own design.
    pub fn new(x: DMatrix<T>, y: DVector<T>, groups: GroupPartition, lambda: Vec<T>) -> Result<Self> {
        Self::with_design(Arc::new(Design::new(x, groups)?), y, lambda)
    }

    /// Builds a problem on a shared design.
    pub fn with_design(design: Arc<Design<T>>, y: DVector<T>, lambda: Vec<T>) -> Result<Self> {
        if y.len() != design.n() {
            return Err(NgcError::Dimension(format!(
                "response has length {} but design has {} rows",
                y.len(),
                design.n()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NgcError::InvalidArgument("response contains non-finite entries".into()));
        }
        validate_lambda(&lambda, design.groups().len())?;
        let xty = design.correlate(&y);
        let yty = y.dot(&y);
        Ok(Self { design, y, xty, yty, lambda })
    }

    /// Same data with a different penalty vector.
    pub fn with_lambda(&self, lambda: Vec<T>) -> Result<Self> {
        validate_lambda(&lambda, self.design.groups().len())?;
        Ok(Self { lambda, ..self.clone() })
    }

    pub fn design(&self) -> &Arc<Design<T>> {
        &self.design
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<T> {
        self.design.x()
    }

    pub fn groups(&self) -> &GroupPartition {
        self.design.groups()
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    /// `X'Y / n`.
    pub fn xty(&self) -> &DVector<T> {
        &self.xty
    }

    pub(crate) fn yty(&self) -> T {
        self.yty
    }
}

fn validate_lambda<T: Real>(lambda: &[T], groups: usize) -> Result<()> {
    if lambda.len() != groups {
        return Err(NgcError::Dimension(format!(
            "{} penalty levels for {} groups",
            lambda.len(),
            groups
        )));
    }
    if let Some(g) = lambda.iter().position(|l| !(l.is_finite() && *l >= T::zero())) {
        return Err(NgcError::InvalidArgument(format!("penalty of group {g} must be finite and >= 0")));
    }
    Ok(())
}

/// Block coordinate descent settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// KKT tolerance.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Iterate on the active groups between full sweeps.
    pub active_set_cycling: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_sweeps: 10_000, active_set_cycling: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(NgcError::InvalidArgument("solver tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(NgcError::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroupLassoSolution<T: Real> {
    pub beta_hat: DVector<T>,
    pub objective: T,
    pub kkt_residual: T,
    pub active_groups: Vec<usize>,
    pub sweeps_used: usize,
    /// Objective after every full sweep.
    pub objective_trace: Vec<T>,
}
