use std::path::PathBuf;

use ngc_core::experiment::{run_experiment, DataSpec, ExperimentConfig, Method};
use ngc_core::panel::*;
use proptest::prelude::*;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/bank_panel.csv")
}

#[test]
fn fixture_has_three_missing_cells() {
    let data = load_panel_csv(fixture(), &LongSchema::default()).unwrap();
    assert_eq!((data.n(), data.t_len(), data.p()), (50, 9, 21));
    assert_eq!(data.missing_count(), 3);
    assert!(data.is_missing(4, 3, 7) && data.is_missing(31, 8, 0) && data.is_missing(17, 5, 20));
}

#[test]
fn imputation_completes_and_is_idempotent() {
    let data = load_panel_csv(fixture(), &LongSchema::default()).unwrap();
    let once = impute_knn_median(&data, 5, 1).unwrap();
    assert!(once.values().iter().all(|v| v.is_finite()));
    let twice = impute_knn_median(&once, 5, 1).unwrap();
    assert_eq!(once.values(), twice.values());
}

#[test]
fn standardization_inverts_to_relative_precision() {
    let data = impute_knn_median(&load_panel_csv(fixture(), &LongSchema::default()).unwrap(), 5, 1).unwrap();
    for log_first in [false, true] {
        let (scaled, report) = standardize(&data, log_first).unwrap();
        assert!(report.scale.iter().all(|&s| s > 0.0));
        let back = report.invert(&scaled).unwrap();
        for (a, b) in back.values().iter().zip(data.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0) * 10.0, "{a} vs {b}");
        }
    }
}

#[test]
fn stacked_design_matches_tensor() {
    let data = impute_knn_median(&load_panel_csv(fixture(), &LongSchema::default()).unwrap(), 5, 1).unwrap();
    let groups = GroupStructure::contiguous(&[7, 7, 7]).unwrap();
    let sd = make_stacked_design(&data, &groups).unwrap();
    assert_eq!(sd.x.ncols(), 8 * 21);
    for r in [0, 13, 49] {
        for lag in 1..=8 {
            for j in [0, 10, 20] {
                assert_eq!(sd.x[(r, sd.column(lag, j))], data.get(r, 9 - 1 - lag, j));
            }
        }
    }
    for g in 0..sd.expanded_groups.len() {
        let lags: std::collections::BTreeSet<_> = sd.expanded_groups.group(g).iter().map(|&c| sd.lag_of_column[c]).collect();
        assert_eq!(lags.len(), 1);
    }
}

#[test]
fn data_run_writes_pmse_and_networks() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = (1..=21).map(|j| format!("x{j:02}")).collect();
    let config = ExperimentConfig {
        name: "bank".into(),
        design: None,
        data: Some(DataSpec {
            path: fixture(),
            groups: names.chunks(7).map(|c| c.to_vec()).collect(),
            fit_times: 6,
            log_transform: true,
            impute_k: 5,
            ranking_variable: Some("x02".into()),
            delta_misspec: 0.0,
        }),
        methods: vec![Method::Lasso, Method::Grp, Method::Agrp, Method::Thgrp],
        grid: ngc_core::selection::TuningGrid { count: 10, ..Default::default() },
        thresholds: ngc_core::selection::ThresholdRule::Recommended,
        replications: 1,
        seed: 3,
        standardize: true,
        burn_in: 300,
        solver: Default::default(),
        weight_scheme: ngc_core::ngc::WeightScheme::SqrtGroupSize,
        per_response_tuning: false,
        output_dir: None,
    };
    let summary = run_experiment(&config, dir.path()).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    let pmse = std::fs::read_to_string(dir.path().join("pmse.csv")).unwrap();
    // four methods × times 6..=9
    assert_eq!(pmse.lines().count(), 1 + 4 * 4);
    let dot = std::fs::read_to_string(dir.path().join("network_grp.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
}

fn small_panel() -> impl Strategy<Value = PanelData> {
    (2usize..6, 2usize..5, 1usize..4).prop_flat_map(|(n, t, p)| {
        prop::collection::vec(-1e6f64..1e6, n * t * p).prop_map(move |v| PanelData::new(n, t, p, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(data in small_panel()) {
        let mut buf = Vec::new();
        write_panel(&data, &mut buf).unwrap();
        let back = read_panel_csv(buf.as_slice(), &LongSchema::default()).unwrap();
        prop_assert_eq!(back.values(), data.values());
    }

    #[test]
    fn group_partitions_are_exact(sizes in prop::collection::vec(1usize..5, 1..8)) {
        let g = GroupStructure::contiguous(&sizes).unwrap();
        let p: usize = sizes.iter().sum();
        prop_assert_eq!(g.p(), p);
        let mut seen = vec![0; p];
        for m in g.all_members() {
            for &j in m {
                seen[j] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(g.k_max(), *sizes.iter().max().unwrap());
    }

    #[test]
    fn design_lookup_is_exact(data in small_panel()) {
        let groups = GroupStructure::singletons(data.p());
        let sd = make_stacked_design(&data, &groups).unwrap();
        let t = data.t_len();
        for r in 0..data.n() {
            for lag in 1..t {
                for j in 0..data.p() {
                    prop_assert_eq!(sd.x[(r, sd.column(lag, j))], data.get(r, t - 1 - lag, j));
                }
            }
        }
    }
}
