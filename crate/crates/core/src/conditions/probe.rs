use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::direction;
use crate::error::{NgcError, Result};
use crate::grplasso::{solve_bcd, Design, GroupLassoProblem, GroupPartition, SolverConfig};
use crate::ngc::{theoretical_lambda, TheoryConfig};
use crate::panel::make_stacked_design;
use crate::varsim::{simulate_panel, VarModel, DEFAULT_BURN_IN};

/// Data-generating fixture for the probe.
#[derive(Debug, Clone)]
pub enum ProbeFixture {
    /// Panels of `t_len` time points from a VAR; every response is scored.
    Var { model: VarModel, t_len: usize },
    /// `y = Xβ⁰ + σε` with rows of `X` drawn from `N(0, cov)`.
    Regression { beta0: DVector<f64>, groups: GroupPartition, cov: DMatrix<f64>, sigma: f64 },
}

/// Penalty rule, evaluated per problem on the sampled design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeLambda {
    /// The norm-consistency rule with the fixture's true `σ`.
    Theoretical { alpha: f64 },
    /// `λ_g = c·√k_g/√n`.
    Scaled(f64),
    /// `λ_g = λ·√k_g`, independent of `n`.
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub n_list: Vec<usize>,
    pub seeds: usize,
    /// `errors[k][s]`: max over support groups of `‖D(β̂_[g]) − D(β⁰_[g])‖`.
    pub errors: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    /// Share of seeds with any off-support group selected.
    pub off_support_frequency: Vec<f64>,
    /// Sign agreement over coordinates with `|β̂_j| > sign_share·‖β̂_[g]‖`.
    pub sign_agreement: Vec<f64>,
    pub sign_share: f64,
}

struct Problem {
    design: Arc<Design<f64>>,
    y: DVector<f64>,
    beta0: DVector<f64>,
    sigma: f64,
}

/// Monte Carlo direction errors of the regular estimator across sample sizes.
///
/// Seed `s` at size index `k` uses the ChaCha stream `(base_seed + s, k)`,
/// so results do not depend on thread scheduling.
pub fn direction_consistency_probe(
    fixture: &ProbeFixture,
    n_list: &[usize],
    seeds: usize,
    rule: ProbeLambda,
    sign_share: f64,
    base_seed: u64,
) -> Result<ProbeReport> {
    if n_list.is_empty() || seeds == 0 {
        return Err(NgcError::InvalidArgument("need sample sizes and seeds".into()));
    }
    if let ProbeFixture::Var { model, .. } = fixture {
        let radius = crate::varsim::check_stability(model);
        if radius >= 1.0 {
            return Err(NgcError::Unstable { radius });
        }
    }
    let config = SolverConfig::default();
    let mut errors = Vec::new();
    let mut medians = Vec::new();
    let mut off_freq = Vec::new();
    let mut signs = Vec::new();
    for (k, &n) in n_list.iter().enumerate() {
        let runs: Vec<(f64, bool, usize, usize)> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(s as u64));
                rng.set_stream(k as u64);
                let problems = draw(fixture, n, &mut rng)?;
                let mut worst: f64 = 0.0;
                let mut off = false;
                let (mut agree, mut total) = (0, 0);
                for pr in problems {
                    let groups = pr.design.groups().clone();
                    let lambda = penalties(&pr, rule, n)?;
                    let problem = GroupLassoProblem::with_design(pr.design.clone(), pr.y.clone(), lambda)?;
                    let sol = solve_bcd(&problem, &config, None)?;
                    for g in 0..groups.len() {
                        let b0 = groups.block(&pr.beta0, g);
                        let bh = groups.block(&sol.beta_hat, g);
                        if b0.norm() == 0.0 {
                            off |= bh.norm() > 0.0;
                            continue;
                        }
                        worst = worst.max((direction(&bh) - direction(&b0)).norm());
                        let nb = bh.norm();
                        for (a, b) in bh.iter().zip(b0.iter()) {
                            if nb > 0.0 && a.abs() > sign_share * nb {
                                total += 1;
                                if a.signum() == b.signum() {
                                    agree += 1;
                                }
                            }
                        }
                    }
                }
                Ok((worst, off, agree, total))
            })
            .collect::<Result<_>>()?;
        let errs: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let mut sorted = errs.clone();
        medians.push(crate::panel::median(&mut sorted));
        off_freq.push(runs.iter().filter(|r| r.1).count() as f64 / seeds as f64);
        let (agree, total) = runs.iter().fold((0, 0), |(a, t), r| (a + r.2, t + r.3));
        signs.push(if total == 0 { f64::NAN } else { agree as f64 / total as f64 });
        errors.push(errs);
    }
    Ok(ProbeReport {
        n_list: n_list.to_vec(),
        seeds,
        errors,
        medians,
        off_support_frequency: off_freq,
        sign_agreement: signs,
        sign_share,
    })
}

fn penalties(pr: &Problem, rule: ProbeLambda, n: usize) -> Result<Vec<f64>> {
    let sizes = pr.design.groups().sizes();
    let root = |k: usize| (k as f64).sqrt();
    match rule {
        ProbeLambda::Theoretical { alpha } => {
            let theory = TheoryConfig { alpha, eta: 0.5, sigma: pr.sigma };
            let norms = pr.design.block_spectral_norms();
            theoretical_lambda(&norms, &sizes, sizes.len(), n, &theory)
        }
        ProbeLambda::Scaled(c) => Ok(sizes.iter().map(|&k| c * root(k) / (n as f64).sqrt()).collect()),
        ProbeLambda::Fixed(l) => Ok(sizes.iter().map(|&k| l * root(k)).collect()),
    }
}

fn draw(fixture: &ProbeFixture, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Problem>> {
    match fixture {
        ProbeFixture::Var { model, t_len } => {
            let seed: u64 = rng.random();
            let panel = simulate_panel(model, n, *t_len, DEFAULT_BURN_IN, seed)?;
            let stacked = make_stacked_design(&panel, &model.groups)?;
            let design = Arc::new(Design::new(stacked.x, stacked.expanded_groups)?);
            Ok((0..model.p())
                .map(|i| Problem {
                    design: design.clone(),
                    y: stacked.y.column(i).into_owned(),
                    beta0: model.row_coefficients(i, stacked.lags),
                    sigma: model.sigma,
                })
                .collect())
        }
        ProbeFixture::Regression { beta0, groups, cov, sigma } => {
            let dim = groups.dim();
            if beta0.len() != dim || cov.nrows() != dim || cov.ncols() != dim {
                return Err(NgcError::Dimension("fixture dimensions disagree".into()));
            }
            let chol = nalgebra::Cholesky::new(cov.clone())
                .ok_or_else(|| NgcError::InvalidArgument("covariance must be positive definite".into()))?;
            let z = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = z * chol.l().transpose();
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &x * beta0 + noise * *sigma;
            let design = Arc::new(Design::new(x, groups.clone())?);
            Ok(vec![Problem { design, y, beta0: beta0.clone(), sigma: *sigma }])
        }
    }
}
