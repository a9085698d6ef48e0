use super::{solve_bcd, GroupLassoProblem, GroupLassoSolution, SolverConfig};
use crate::error::{NgcError, Result};
use crate::scalar::Real;

/// Smallest common level `λ` for which `λ_g = λ·w_g` yields `β̂ = 0`:
/// `max_g ‖(1/n)[X'Y]_[g]‖ / w_g`.
pub fn lambda_max<T: Real>(problem: &GroupLassoProblem<T>, weights: &[T]) -> Result<T> {
    let groups = problem.groups();
    if weights.len() != groups.len() {
        return Err(NgcError::Dimension(format!("{} weights for {} groups", weights.len(), groups.len())));
    }
    if let Some(g) = weights.iter().position(|w| !(*w > T::zero())) {
        return Err(NgcError::InvalidArgument(format!(
            "weight of group {g} is not positive; no finite penalty zeroes it"
        )));
    }
    Ok((0..groups.len()).fold(T::zero(), |m, g| m.max(groups.block_norm(problem.xty(), g) / weights[g])))
}

/// Solves along a strictly descending grid of common levels, `λ_g = λ·w_g`,
/// warm-starting each point from the previous solution.
pub fn solve_path<T: Real>(
    problem: &GroupLassoProblem<T>,
    weights: &[T],
    grid: &[T],
    config: &SolverConfig,
) -> Result<Vec<GroupLassoSolution<T>>> {
    if grid.is_empty() {
        return Err(NgcError::InvalidArgument("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l > T::zero())) {
        return Err(NgcError::InvalidArgument("lambda grid must be positive".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(NgcError::InvalidArgument("lambda grid must be strictly descending".into()));
    }
    let mut out: Vec<GroupLassoSolution<T>> = Vec::with_capacity(grid.len());
    for (index, &level) in grid.iter().enumerate() {
        let at = problem.with_lambda(weights.iter().map(|&w| w * level).collect())?;
        let warm = out.last().map(|s| &s.beta_hat);
        let sol = solve_bcd(&at, config, warm)
            .map_err(|e| NgcError::PathFailure { index, source: Box::new(e) })?;
        out.push(sol);
    }
    Ok(out)
}
