use nalgebra::DVector;

use super::{BlockSystem, GroupLassoProblem, GroupLassoSolution, SolverConfig};
use crate::error::{NgcError, Result};
use crate::scalar::Real;

const ROOT_TOL: f64 = 1e-12;
const MAX_ACTIVE_PASSES: usize = 200;
// The maintained gradient is rebuilt from scratch this often.
const REFRESH_EVERY: usize = 64;

/// `(1/2n)‖Y − Xβ‖² + Σ_g λ_g ‖β_[g]‖`, evaluated from the raw data.
pub fn objective<T: Real>(problem: &GroupLassoProblem<T>, beta: &DVector<T>) -> T {
    let n = T::from_usize(problem.y().len()).unwrap();
    let resid = problem.y() - problem.x() * beta;
    let fit = resid.norm_squared() / (n + n);
    fit + penalty(problem, beta)
}

fn penalty<T: Real>(problem: &GroupLassoProblem<T>, beta: &DVector<T>) -> T {
    let groups = problem.groups();
    (0..groups.len()).fold(T::zero(), |acc, g| acc + problem.lambda()[g] * groups.block_norm(beta, g))
}

/// Largest violation of the group-lasso optimality conditions at `beta`.
///
/// With `z = (1/n) X'(Y − Xβ)`: active groups contribute
/// `‖z_[g] − λ_g β_[g]/‖β_[g]‖‖`, inactive groups `(‖z_[g]‖ − λ_g)₊`.
/// Computed directly from `X`, independently of the solver's cached Gram.
pub fn kkt_residual<T: Real>(problem: &GroupLassoProblem<T>, beta: &DVector<T>) -> T {
    let n = T::from_usize(problem.y().len()).unwrap();
    let resid = problem.y() - problem.x() * beta;
    let z = problem.x().tr_mul(&resid) / n;
    kkt_from_gradient(problem, beta, &z, None)
}

fn kkt_from_gradient<T: Real>(
    problem: &GroupLassoProblem<T>,
    beta: &DVector<T>,
    z: &DVector<T>,
    only: Option<&[usize]>,
) -> T {
    let groups = problem.groups();
    let mut worst = T::zero();
    let mut visit = |g: usize| {
        let members = groups.group(g);
        let lambda = problem.lambda()[g];
        let bnorm = groups.block_norm(beta, g);
        let v = if bnorm > T::zero() {
            members
                .iter()
                .fold(T::zero(), |acc, &j| {
                    let d = z[j] - lambda * beta[j] / bnorm;
                    acc + d * d
                })
                .sqrt()
        } else {
            let znorm = members.iter().fold(T::zero(), |acc, &j| acc + z[j] * z[j]).sqrt();
            (znorm - lambda).max(T::zero())
        };
        worst = worst.max(v);
    };
    match only {
        Some(set) => set.iter().copied().for_each(&mut visit),
        None => (0..groups.len()).for_each(&mut visit),
    }
    worst
}

struct State<T: Real> {
    beta: DVector<T>,
    /// `X'(Y − Xβ)/n`, kept in sync through the Gram matrix.
    grad: DVector<T>,
}

impl<T: Real> State<T> {
    fn refresh(&mut self, problem: &GroupLassoProblem<T>) {
        self.grad = problem.xty() - problem.design().gram() * &self.beta;
    }

    /// Objective via the cached gradient: `Y'Y/2n − β'(X'Y/n + grad)/2 + penalty`.
    fn objective(&self, problem: &GroupLassoProblem<T>) -> T {
        let n = T::from_usize(problem.y().len()).unwrap();
        let two = T::lit(2.0);
        problem.yty() / (two * n) - self.beta.dot(&(problem.xty() + &self.grad)) / two
            + penalty(problem, &self.beta)
    }
}

/// Solves the group lasso by cyclic block coordinate descent.
///
/// Terminates once the KKT residual, recomputed from the raw design, is at
/// most `config.tol`. Failing that within `config.max_sweeps`, returns
/// [`NgcError::NotConverged`] carrying the last iterate.
pub fn solve_bcd<T: Real>(
    problem: &GroupLassoProblem<T>,
    config: &SolverConfig,
    warm_start: Option<&DVector<T>>,
) -> Result<GroupLassoSolution<T>> {
    config.validate()?;
    let dim = problem.design().ncols();
    let beta = match warm_start {
        Some(w) if w.len() != dim => {
            return Err(NgcError::Dimension(format!("warm start has length {} for {} coefficients", w.len(), dim)))
        }
        Some(w) => w.clone(),
        None => DVector::zeros(dim),
    };
    let tol = T::lit(config.tol);
    let ngroups = problem.groups().len();
    let mut state = State { beta, grad: DVector::zeros(dim) };
    state.refresh(problem);

    let mut trace = Vec::new();
    let mut sweeps = 0;
    loop {
        for g in 0..ngroups {
            update_group(problem, &mut state, g);
        }
        sweeps += 1;
        if sweeps % REFRESH_EVERY == 0 {
            state.refresh(problem);
        }
        trace.push(state.objective(problem));

        let approx = kkt_from_gradient(problem, &state.beta, &state.grad, None);
        if approx <= tol {
            state.refresh(problem);
            let exact = kkt_residual(problem, &state.beta);
            if exact <= tol {
                return Ok(finish(problem, state, exact, sweeps, trace));
            }
        }
        if sweeps >= config.max_sweeps {
            let residual = kkt_residual(problem, &state.beta);
            return Err(NgcError::NotConverged {
                sweeps,
                residual: residual.as_f64(),
                best: state.beta.iter().map(|v| v.as_f64()).collect(),
            });
        }

        if config.active_set_cycling {
            let active: Vec<usize> = (0..ngroups)
                .filter(|&g| problem.groups().group(g).iter().any(|&j| state.beta[j] != T::zero()))
                .collect();
            if active.len() < ngroups {
                let inner_tol = tol * T::lit(0.25);
                for _ in 0..MAX_ACTIVE_PASSES {
                    if kkt_from_gradient(problem, &state.beta, &state.grad, Some(&active)) <= inner_tol {
                        break;
                    }
                    for &g in &active {
                        update_group(problem, &mut state, g);
                    }
                }
            }
        }
    }
}

fn finish<T: Real>(
    problem: &GroupLassoProblem<T>,
    state: State<T>,
    kkt: T,
    sweeps: usize,
    trace: Vec<T>,
) -> GroupLassoSolution<T> {
    let groups = problem.groups();
    let active_groups = (0..groups.len())
        .filter(|&g| groups.group(g).iter().any(|&j| state.beta[j] != T::zero()))
        .collect();
    GroupLassoSolution {
        objective: objective(problem, &state.beta),
        beta_hat: state.beta,
        kkt_residual: kkt,
        active_groups,
        sweeps_used: sweeps,
        objective_trace: trace,
    }
}

fn update_group<T: Real>(problem: &GroupLassoProblem<T>, state: &mut State<T>, g: usize) {
    let design = problem.design();
    let members = design.groups().group(g);
    let gram = design.gram();
    let k = members.len();

    // s = partial correlation with group g removed from the fit
    let mut s = DVector::zeros(k);
    for (a, &ja) in members.iter().enumerate() {
        let mut acc = state.grad[ja];
        for &jb in members {
            acc += gram[(ja, jb)] * state.beta[jb];
        }
        s[a] = acc;
    }
    let new = block_minimizer(design.block_system(g), &s, problem.lambda()[g]);

    for (a, &j) in members.iter().enumerate() {
        let delta = new[a] - state.beta[j];
        if delta != T::zero() {
            let col = gram.column(j);
            state.grad.axpy(-delta, &col, T::one());
            state.beta[j] = new[a];
        }
    }
}

/// Minimizer of `½ b'Hb − s'b + λ‖b‖` for the block Gram `H`.
pub(crate) fn block_minimizer<T: Real>(sys: &BlockSystem<T>, s: &DVector<T>, lambda: T) -> DVector<T> {
    let k = s.len();
    if let Some(a) = sys.scaled_identity {
        if a <= T::zero() {
            return DVector::zeros(k);
        }
        return super::prox_group(s, lambda) / a;
    }

    let vmax = sys.values.iter().fold(T::zero(), |m, &v| m.max(v));
    if vmax <= T::zero() {
        return DVector::zeros(k);
    }
    let null_tol = vmax * T::lit(1e-12);
    // Components along null directions of H vanish in exact arithmetic.
    let mut st: DVector<T> = sys.vectors.tr_mul(s);
    for i in 0..k {
        if sys.values[i] <= null_tol {
            st[i] = T::zero();
        }
    }
    if st.norm() <= lambda {
        return DVector::zeros(k);
    }
    let coords = if lambda == T::zero() {
        DVector::from_fn(k, |i, _| if sys.values[i] > null_tol { st[i] / sys.values[i] } else { T::zero() })
    } else {
        let rho = solve_block_norm(&sys.values, &st, lambda);
        DVector::from_fn(k, |i, _| st[i] * rho / (sys.values[i] * rho + lambda))
    };
    &sys.vectors * coords
}

/// Root of `F(ρ) = Σ s_i² / (v_i ρ + λ)² − 1` on `ρ > 0`.
///
/// `F` is convex and decreasing with `F(0) > 0`, so Newton's method started
/// at zero increases monotonically to the root.
fn solve_block_norm<T: Real>(values: &DVector<T>, st: &DVector<T>, lambda: T) -> T {
    let two = T::lit(2.0);
    let tol = T::lit(ROOT_TOL).max(T::eps() * T::lit(16.0));
    let mut rho = T::zero();
    for _ in 0..200 {
        let mut f = -T::one();
        let mut df = T::zero();
        for i in 0..values.len() {
            let den = values[i] * rho + lambda;
            let s2 = st[i] * st[i];
            f += s2 / (den * den);
            df -= two * s2 * values[i] / (den * den * den);
        }
        if df >= T::zero() {
            break;
        }
        let step = -f / df;
        rho += step;
        if step.abs() <= tol * rho.max(T::eps()) {
            break;
        }
    }
    rho
}
