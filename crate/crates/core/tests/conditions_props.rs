use nalgebra::{DMatrix, DVector};
use ngc_core::conditions::{
    direction, direction_perturbation_check, gram_blocks, irrep_report, sampled_phi, spectral_check, PhiMode,
};
use ngc_core::grplasso::GroupPartition;
use ngc_core::metrics::{mcc, precision, recall, ConfusionCounts};
use ngc_core::panel::GroupStructure;
use ngc_core::varsim::{generate_model, SimDesign};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn direction_is_unit_or_zero(v in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let v = DVector::from_vec(v);
        let d = direction(&v);
        if v.norm() == 0.0 {
            prop_assert!(d.iter().all(|&x| x == 0.0));
        } else {
            prop_assert!((d.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_bound_holds(
        beta in prop::collection::vec(-5.0f64..5.0, 1..6),
        dir in prop::collection::vec(-1.0f64..1.0, 6),
        delta in 0.001f64..1.0,
        frac in 0.0f64..0.999,
    ) {
        let beta = DVector::from_vec(beta);
        prop_assume!(beta.norm() > 1e-6);
        let u = DVector::from_iterator(beta.len(), dir.into_iter().take(beta.len()));
        prop_assume!(u.norm() > 1e-9);
        let u = u.normalize() * (frac * delta * beta.norm());
        prop_assert!(direction_perturbation_check(&beta, &u, delta).unwrap());
    }

    #[test]
    fn irrep_sandwich(seed in 0u64..5000) {
        let partition = GroupPartition::contiguous(&[2, 3, 2, 2]).unwrap();
        let x = gaussian(40, 9, seed);
        let blocks = gram_blocks(&x, &partition, &[0, 2]).unwrap();
        let beta0 = DVector::from_vec(vec![1.0, -0.5, 0.0, 0.0, 0.0, 0.3, 0.7, 0.0, 0.0]);
        let lambda = vec![1.0, 1.2, 0.8, 1.0];
        let r = irrep_report(&blocks, &beta0, &lambda, 64, seed).unwrap();
        for k in 0..r.off_groups.len() {
            prop_assert!(r.weak_lhs[k] <= r.uniform_sampled_max[k] + 1e-12);
            prop_assert!(r.uniform_sampled_max[k] <= r.uniform_upper[k] + 1e-12);
        }
    }

    #[test]
    fn phi_samples_lie_in_the_cone(seed in 0u64..5000) {
        let partition = GroupPartition::contiguous(&[2, 2, 2]).unwrap();
        let x = gaussian(30, 6, seed);
        let lambda = vec![1.0; 3];
        for mode in [PhiMode::Compatibility, PhiMode::Re] {
            let r = sampled_phi(&x, &partition, &[1], 3.0, &lambda, 32, mode, seed).unwrap();
            prop_assert!(r.cone_slack.iter().all(|&s| s >= -1e-9));
            prop_assert!(r.phi_samples.iter().all(|&v| v >= 0.0));
            prop_assert!(r.sampled_min <= r.phi_samples.iter().copied().fold(f64::INFINITY, f64::min) + 1e-15);
        }
    }

    #[test]
    fn metric_ranges(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..500) {
        let c = ConfusionCounts { tp, fp, fn_, tn };
        let m = mcc(&c);
        prop_assert!((-1.0..=1.0).contains(&m));
        prop_assert!((0.0..=1.0).contains(&precision(&c)));
        prop_assert!((0.0..=1.0).contains(&recall(&c)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The spectral-density bound `σ²/M²` is a valid lower bound on `Λ_min(Σ)`.
    #[test]
    fn density_bound_holds(seed in 0u64..1000, t_len in 2usize..6) {
        let design = SimDesign {
            p: 6,
            t_len,
            n: 10,
            d: 1,
            group_sizes: vec![2, 2, 2],
            s_per_row: 1,
            misspecification_rate: 0.0,
            snr_target: 0.3,
            coefficient_magnitude_range: (0.5, 1.0),
            seed,
        };
        let model = match generate_model(&design) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        let r = spectral_check(&model, t_len, 256).unwrap();
        prop_assert!(r.density_bound_holds, "lambda_min {} bound {}", r.lambda_min_sigma, r.density_bound);
    }
}

#[test]
fn reassembly_is_exact_for_grouped_structures() {
    let groups = GroupStructure::contiguous(&[3, 3]).unwrap();
    let partition = groups.expand(2);
    let x = gaussian(50, 12, 2);
    let blocks = gram_blocks(&x, &partition, &[1, 2]).unwrap();
    assert_eq!(blocks.reassemble(), blocks.c);
}
