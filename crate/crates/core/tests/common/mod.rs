#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Accelerated proximal gradient for `(1/2n)‖y − Xβ‖² + Σ λ_g‖β_g‖`, with
/// gradient restarts. Written from scratch so it shares nothing with the
/// coordinate-descent solver.
pub fn proximal_gradient(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[Vec<usize>], lambda: &[f64]) -> DVector<f64> {
    let n = x.nrows() as f64;
    let gram = x.tr_mul(x) / n;
    let xty = x.tr_mul(y) / n;
    let lip = gram.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lip;
    let prox = |v: &DVector<f64>| {
        let mut out = v.clone();
        for (g, members) in groups.iter().enumerate() {
            let norm = members.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt();
            let shrink = if norm > step * lambda[g] { 1.0 - step * lambda[g] / norm } else { 0.0 };
            for &j in members {
                out[j] = v[j] * shrink;
            }
        }
        out
    };
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut z = beta.clone();
    let mut t = 1.0f64;
    for _ in 0..400_000 {
        let grad = &gram * &z - &xty;
        let next = prox(&(&z - step * grad));
        let change = (&next - &beta).amax();
        // restart when the momentum points uphill
        let uphill = (&z - &next).dot(&(&next - &beta)) > 0.0;
        let t_next = if uphill { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        z = if uphill { next.clone() } else { &next + (&next - &beta) * ((t - 1.0) / t_next) };
        t = t_next;
        beta = next;
        if change < 1e-14 {
            break;
        }
    }
    beta
}

pub struct RandomProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub groups: Vec<Vec<usize>>,
    pub lambda: Vec<f64>,
}

/// Gaussian design with mixed group sizes, a sparse truth and penalties a
/// random fraction of the null-model threshold.
pub fn random_problem(seed: u64, max_n: usize, max_p: usize) -> RandomProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = Vec::new();
    let target = rng.random_range(4..=max_p);
    while sizes.iter().sum::<usize>() < target {
        let k = rng.random_range(1..=5usize).min(target - sizes.iter().sum::<usize>());
        sizes.push(k);
    }
    let p: usize = sizes.iter().sum();
    let n = rng.random_range((p + 10).min(max_n)..=max_n);
    let mut groups = Vec::new();
    let mut at = 0;
    for k in &sizes {
        groups.push((at..at + k).collect::<Vec<_>>());
        at += k;
    }
    let corr: f64 = rng.random_range(0.0..0.6);
    let base = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let common = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(n, p, |i, j| (1.0 - corr).sqrt() * base[(i, j)] + corr.sqrt() * common[i]);
    let mut beta = DVector::zeros(p);
    for members in &groups {
        if rng.random_bool(0.3) {
            for &j in members {
                beta[j] = rng.random_range(-2.0..2.0);
            }
        }
    }
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + noise;
    let weights: Vec<f64> = sizes.iter().map(|&k| (k as f64).sqrt()).collect();
    let z = x.tr_mul(&y) / n as f64;
    let lmax = groups
        .iter()
        .zip(&weights)
        .map(|(m, w)| m.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt() / w)
        .fold(0.0, f64::max);
    let frac = rng.random_range(0.05..0.8);
    let lambda = weights.iter().map(|w| frac * lmax * w).collect();
    RandomProblem { x, y, groups, lambda }
}
