//! Configuration-driven simulation and real-data runs.
//!
//! A simulation run repeats, per replication: draw a model, simulate a
//! panel, tune each method on a replicate split, refit on the full panel at
//! the chosen `λ`, and score the support against the truth. Replications run
//! in parallel; all artifacts are written afterwards by one thread in a
//! fixed order, so equal configs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NgcError, Result};
use crate::grplasso::SolverConfig;
use crate::metrics::{mean_sd, metrics_report, write_metrics_csv, MetricsReport, MetricsRow};
use crate::ngc::{export_network, threshold_estimate, NetworkDesign, NetworkFormat, NgcEstimate, WeightScheme};
use crate::panel::{
    impute_knn_median, load_panel_csv, make_stacked_design, standardize, GroupStructure, LongSchema, PanelData,
};
use crate::selection::{
    pmse, split_panel, tune_lambda, write_trace_csv, GridMode, SplitSpec, ThresholdRule, TracePoint, TuneVariant,
    TuningGrid,
};
use crate::varsim::{generate_model, simulate_panel, SimDesign, VarModel, DEFAULT_BURN_IN, SNR_DEFINITION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Regular estimator with singleton groups.
    Lasso,
    /// Regular group estimator.
    Grp,
    /// Adaptive group estimator.
    Agrp,
    /// Bi-level thresholded group estimator.
    Thgrp,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lasso => "lasso",
            Self::Grp => "grp",
            Self::Agrp => "agrp",
            Self::Thgrp => "thgrp",
        }
    }
}

/// Real-data source: a long CSV plus preprocessing choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub path: PathBuf,
    /// Groups as lists of variable names.
    pub groups: Vec<Vec<String>>,
    /// Leading time points used for fitting; later ones are predicted.
    pub fit_times: usize,
    #[serde(default)]
    pub log_transform: bool,
    #[serde(default = "default_impute_k")]
    pub impute_k: usize,
    /// Variable ranking replicates for imputation; defaults to the first.
    #[serde(default)]
    pub ranking_variable: Option<String>,
    /// Within-group threshold for the thresholded method.
    #[serde(default)]
    pub delta_misspec: f64,
}

fn default_impute_k() -> usize {
    5
}

fn default_replications() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_scheme() -> WeightScheme {
    WeightScheme::SqrtGroupSize
}

fn default_thresholds() -> ThresholdRule {
    ThresholdRule::Recommended
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub design: Option<SimDesign>,
    #[serde(default)]
    pub data: Option<DataSpec>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub grid: TuningGrid,
    /// Thresholds of the thresholded method. With `recommended` the
    /// within-group threshold is used only for misspecified designs; a data
    /// run takes it from `data.delta_misspec`.
    #[serde(default = "default_thresholds")]
    pub thresholds: ThresholdRule,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Base seed; replication `r` derives its seeds from `(seed, r)`.
    #[serde(default)]
    pub seed: u64,
    /// Scale every (time, variable) column of simulated panels to unit variance.
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Weights of the group methods (the lasso always uses unit weights).
    #[serde(default = "default_scheme")]
    pub weight_scheme: WeightScheme,
    #[serde(default)]
    pub per_response_tuning: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NgcError::io(path, e))?;
        let mut c = Self::from_json(&text)?;
        if let (Some(data), Some(dir)) = (c.data.as_mut(), path.parent()) {
            if data.path.is_relative() {
                data.path = dir.join(&data.path);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NgcError::InvalidArgument(m.to_string()));
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        match (&self.design, &self.data) {
            (Some(d), None) => d.validate()?,
            (None, Some(d)) => {
                if d.fit_times < 2 {
                    return bad("fit_times must be at least 2");
                }
                if !(0.0..1.0).contains(&d.delta_misspec) {
                    return bad("delta_misspec must lie in [0, 1)");
                }
            }
            _ => return bad("exactly one of design and data must be given"),
        }
        if self.replications == 0 {
            return bad("replications must be positive");
        }
        if self.weight_scheme == WeightScheme::Adaptive {
            return bad("adaptive weights are selected through the agrp method");
        }
        self.grid.validate()?;
        self.solver.validate()
    }
}

impl ExperimentConfig {
    /// The threshold rule actually applied; see [`ExperimentConfig::thresholds`].
    pub fn effective_thresholds(&self) -> ThresholdRule {
        match (self.thresholds, &self.design, &self.data) {
            (ThresholdRule::Recommended, _, Some(data)) => ThresholdRule::GroupScaled { delta_misspec: data.delta_misspec },
            (ThresholdRule::Recommended, Some(d), _) if d.misspecification_rate == 0.0 => {
                ThresholdRule::GroupScaled { delta_misspec: 0.0 }
            }
            (rule, _, _) => rule,
        }
    }
}

/// Seeds of replication `r`: model, panel, split.
pub fn replication_seeds(base: u64, r: usize) -> [u64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(r as u64);
    [rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub replication: Option<usize>,
    pub method: Option<Method>,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub lambda: f64,
    pub metrics: MetricsReport,
    pub estimate: NgcEstimate,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub model: VarModel,
    pub methods: Vec<MethodOutcome>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<MetricsRow>,
    pub replications: Vec<ReplicationOutcome>,
    pub failures: Vec<Failure>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    /// Mean of a metric for one method, if present.
    pub fn mean(&self, method: Method, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == method.name() && r.metric == metric).map(|r| r.mean)
    }
}

/// Tunes on a split of `panel`, then refits on all of it at the chosen `λ`.
pub fn tune_and_refit(
    method: Method,
    panel: &PanelData,
    groups: &GroupStructure,
    config: &ExperimentConfig,
    split_seed: u64,
    thresholds: &ThresholdRule,
) -> Result<(f64, NgcEstimate, Vec<TracePoint>)> {
    let (train, validate) = split_panel(panel, &SplitSpec::new(split_seed))?;
    let singletons = GroupStructure::singletons(groups.p());
    let (groups_used, mode, scheme) = match method {
        Method::Lasso => (&singletons, GridMode::Lasso, WeightScheme::Unit),
        _ => (groups, GridMode::Group, config.weight_scheme),
    };
    let lags = panel.t_len() - 1;
    let points = config.grid.points(TuningGrid::reference(mode, groups_used, lags, train.n()))?;
    let variant = match method {
        Method::Agrp => TuneVariant::Adaptive(scheme),
        Method::Thgrp => TuneVariant::Thresholded(scheme, *thresholds),
        _ => TuneVariant::Regular(scheme),
    };
    let tuned = tune_lambda(&train, &validate, groups_used, &points, variant, &config.solver, config.per_response_tuning)?;
    let stacked = make_stacked_design(panel, groups_used)?;
    let net = NetworkDesign::new(&stacked, groups_used)?;
    let p = groups.p();
    let lambdas = tuned.per_response_lambda.clone().unwrap_or_else(|| vec![tuned.best_lambda; p]);
    let base = net.base_weights(scheme)?;
    let fit = net.fit(&lambdas, &vec![base; p], &config.solver, None)?;
    let regular = net.assemble(fit, crate::ngc::Variant::Regular, scheme, tuned.best_lambda);
    let mut estimate = match method {
        Method::Lasso | Method::Grp => regular,
        Method::Agrp => {
            let w = net.adaptive_weights(&regular)?;
            let fit = net.fit(&lambdas, &w, &config.solver, None)?;
            net.assemble(fit, crate::ngc::Variant::Adaptive, WeightScheme::Adaptive, tuned.best_lambda)
        }
        Method::Thgrp => {
            threshold_estimate(&regular, &thresholds.resolve(tuned.best_lambda, net.residual_sd(&regular), net.n())?)
        }
    };
    // report against the caller's grouping even for the lasso
    estimate.groups = groups.clone();
    Ok((tuned.best_lambda, estimate, tuned.trace))
}

fn simulate_replication(config: &ExperimentConfig, design: &SimDesign, r: usize) -> ReplicationOutcome {
    let [model_seed, panel_seed, split_seed] = replication_seeds(config.seed, r);
    let mut failures = Vec::new();
    let fail = |stage: &str, method: Option<Method>, e: NgcError| Failure {
        replication: Some(r),
        method,
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let model = match draw_model(design, model_seed) {
        Ok(m) => m,
        Err(e) => {
            let empty = VarModel {
                a: vec![nalgebra::DMatrix::zeros(design.p, design.p); design.d],
                sigma: 0.0,
                groups: GroupStructure::singletons(design.p),
                support: Vec::new(),
            };
            return ReplicationOutcome { replication: r, model: empty, methods: Vec::new(), failures: vec![fail("model", None, e)] };
        }
    };
    let panel = simulate_panel(&model, design.n, design.t_len, config.burn_in, panel_seed).and_then(|p| {
        if config.standardize {
            standardize(&p, false).map(|(s, _)| s)
        } else {
            Ok(p)
        }
    });
    let panel = match panel {
        Ok(p) => p,
        Err(e) => {
            return ReplicationOutcome { replication: r, model, methods: Vec::new(), failures: vec![fail("simulate", None, e)] };
        }
    };
    let mut methods = Vec::new();
    for &method in &config.methods {
        let outcome = tune_and_refit(method, &panel, &model.groups, config, split_seed, &config.effective_thresholds())
            .and_then(|(lambda, estimate, trace)| {
                let metrics = metrics_report(&estimate, &model)?;
                Ok(MethodOutcome { method, lambda, metrics, estimate, trace })
            });
        match outcome {
            Ok(o) => methods.push(o),
            Err(e) => failures.push(fail("fit", Some(method), e)),
        }
    }
    ReplicationOutcome { replication: r, model, methods, failures }
}

/// Fits one method on all of `panel` at a fixed `λ`.
pub fn fit_at(
    method: Method,
    panel: &PanelData,
    groups: &GroupStructure,
    lambda: f64,
    config: &ExperimentConfig,
) -> Result<NgcEstimate> {
    let singletons = GroupStructure::singletons(groups.p());
    let (groups_used, scheme) = match method {
        Method::Lasso => (&singletons, WeightScheme::Unit),
        _ => (groups, config.weight_scheme),
    };
    let net = NetworkDesign::new(&make_stacked_design(panel, groups_used)?, groups_used)?;
    let regular = net.regular(lambda, scheme, &config.solver)?;
    let mut estimate = match method {
        Method::Lasso | Method::Grp => regular,
        Method::Agrp => net.adaptive(lambda, &regular, &config.solver)?,
        Method::Thgrp => {
            threshold_estimate(&regular, &config.effective_thresholds().resolve(lambda, net.residual_sd(&regular), net.n())?)
        }
    };
    estimate.groups = groups.clone();
    Ok(estimate)
}

/// The panel a config describes: the preprocessed data set, or a
/// standardized simulation from replication 0 (with its true model).
pub fn config_panel(config: &ExperimentConfig) -> Result<(PanelData, GroupStructure, Option<VarModel>)> {
    config.validate()?;
    if let Some(spec) = &config.data {
        let (panel, groups) = prepare_data(spec)?;
        return Ok((panel.truncate_times(spec.fit_times)?, groups, None));
    }
    let design = config.design.as_ref().expect("validated");
    let [model_seed, panel_seed, _] = replication_seeds(config.seed, 0);
    let model = draw_model(design, model_seed)?;
    let mut panel = simulate_panel(&model, design.n, design.t_len, config.burn_in, panel_seed)?;
    if config.standardize {
        panel = standardize(&panel, false)?.0;
    }
    Ok((panel, model.groups.clone(), Some(model)))
}

/// Redraws allowed when a drawn support cannot reach the SNR target.
pub const MAX_MODEL_DRAWS: u64 = 20;

/// Draws a model, redrawing (seeds `seed, seed+1, …`) while the SNR target is
/// out of reach for the drawn support.
pub fn draw_model(design: &SimDesign, seed: u64) -> Result<VarModel> {
    let mut last = None;
    for k in 0..MAX_MODEL_DRAWS {
        match generate_model(&SimDesign { seed: seed.wrapping_add(k), ..design.clone() }) {
            Err(e @ NgcError::InfeasibleSnr { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one draw"))
}

pub const METRIC_NAMES: [&str; 6] = ["precision", "recall", "mcc", "err_lag", "d_hat", "order_correct"];

fn aggregate(config: &ExperimentConfig, design: &SimDesign, reps: &[ReplicationOutcome]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for &method in &config.methods {
        let outs: Vec<(&MethodOutcome, usize)> = reps
            .iter()
            .flat_map(|r| r.methods.iter().filter(|m| m.method == method).map(move |m| (m, r.model.d())))
            .collect();
        if outs.is_empty() {
            continue;
        }
        for metric in METRIC_NAMES {
            let vals: Vec<f64> = outs
                .iter()
                .map(|(o, d)| match metric {
                    "precision" => o.metrics.precision,
                    "recall" => o.metrics.recall,
                    "mcc" => o.metrics.mcc,
                    "err_lag" => o.metrics.err_lag,
                    "d_hat" => o.estimate.d_hat as f64,
                    _ => f64::from(u8::from(o.estimate.d_hat == *d)),
                })
                .collect();
            let (mean, sd) = mean_sd(&vals);
            rows.push(MetricsRow {
                setting: config.name.clone(),
                variant: method.name().to_string(),
                n: design.n,
                p: design.p,
                metric: metric.to_string(),
                mean,
                sd,
            });
        }
    }
    rows
}

fn write_file(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| NgcError::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| NgcError::io(path, e))
}

/// Runs a configuration and writes its artifacts under `out_dir`.
///
/// Stage failures are collected rather than fatal; they are written to
/// `failures.json` and returned in the summary.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    if config.data.is_some() {
        return run_data_experiment(config, out_dir);
    }
    let design = config.design.as_ref().expect("validated");
    create_dir(out_dir)?;
    let reps: Vec<ReplicationOutcome> =
        (0..config.replications).into_par_iter().map(|r| simulate_replication(config, design, r)).collect();
    let rows = aggregate(config, design, &reps);
    let failures: Vec<Failure> = reps.iter().flat_map(|r| r.failures.iter().cloned()).collect();

    let mut files = Vec::new();
    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_csv(&rows, &metrics_path, false)?;
    files.push(metrics_path);

    let mut per_rep = csv::Writer::from_writer(Vec::new());
    per_rep.write_record(["replication", "method", "lambda", "precision", "recall", "mcc", "err_lag", "d_hat", "true_edges"])?;
    for rep in &reps {
        for m in &rep.methods {
            per_rep.write_record([
                rep.replication.to_string(),
                m.method.name().to_string(),
                m.lambda.to_string(),
                m.metrics.precision.to_string(),
                m.metrics.recall.to_string(),
                m.metrics.mcc.to_string(),
                m.metrics.err_lag.to_string(),
                m.estimate.d_hat.to_string(),
                rep.model.num_edges().to_string(),
            ])?;
        }
    }
    let bytes = per_rep.into_inner().map_err(|e| NgcError::InvalidArgument(e.to_string()))?;
    write_file(&out_dir.join("replicates.csv"), &String::from_utf8_lossy(&bytes), &mut files)?;

    let traces = out_dir.join("traces");
    create_dir(&traces)?;
    for rep in &reps {
        for m in &rep.methods {
            let path = traces.join(format!("rep{}_{}.csv", rep.replication, m.method.name()));
            write_trace_csv(&m.trace, &path)?;
            files.push(path);
        }
    }
    if let Some(first) = reps.first() {
        let est_dir = out_dir.join("estimates");
        create_dir(&est_dir)?;
        if !first.model.support.is_empty() {
            write_file(&est_dir.join("model_rep0.json"), &first.model.to_json()?, &mut files)?;
        }
        for m in &first.methods {
            write_file(&est_dir.join(format!("rep0_{}.json", m.method.name())), &m.estimate.to_json()?, &mut files)?;
            let dot = export_network(&m.estimate, NetworkFormat::Dot, true);
            write_file(&est_dir.join(format!("rep0_{}.dot", m.method.name())), &dot, &mut files)?;
        }
    }
    let summary = summary_table(config, design, &reps, &rows);
    write_file(&out_dir.join("summary.txt"), &summary, &mut files)?;
    if !failures.is_empty() {
        write_file(&out_dir.join("failures.json"), &serde_json::to_string_pretty(&failures)?, &mut files)?;
    }
    Ok(RunSummary { rows, replications: reps, failures, files })
}

fn summary_table(config: &ExperimentConfig, design: &SimDesign, reps: &[ReplicationOutcome], rows: &[MetricsRow]) -> String {
    let edges: Vec<f64> = reps.iter().filter(|r| !r.model.support.is_empty()).map(|r| r.model.num_edges() as f64).collect();
    let (e_mean, _) = mean_sd(&edges);
    let mut s = String::new();
    let _ = writeln!(s, "setting: {}", config.name);
    let _ = writeln!(
        s,
        "p={} T={} n={} d={} replications={} mean |E|={:.1} SNR={} ({})",
        design.p, design.t_len, design.n, design.d, config.replications, e_mean, design.snr_target, SNR_DEFINITION
    );
    let _ = writeln!(s, "values are mean (sd) in percent; d_hat in lags");
    let _ = writeln!(s, "{:<8}{:>18}{:>18}{:>18}{:>18}{:>16}", "method", "precision", "recall", "mcc", "err_lag", "d_hat");
    for &method in &config.methods {
        let cell = |metric: &str, scale: f64| {
            rows.iter()
                .find(|r| r.variant == method.name() && r.metric == metric)
                .map_or("-".to_string(), |r| format!("{:.2} ({:.2})", r.mean * scale, r.sd * scale))
        };
        let _ = writeln!(
            s,
            "{:<8}{:>18}{:>18}{:>18}{:>18}{:>16}",
            method.name(),
            cell("precision", 100.0),
            cell("recall", 100.0),
            cell("mcc", 100.0),
            cell("err_lag", 100.0),
            cell("d_hat", 1.0)
        );
    }
    s
}

/// Preprocessed real panel: imputed, optionally log-transformed, standardized.
pub fn prepare_data(spec: &DataSpec) -> Result<(PanelData, GroupStructure)> {
    let raw = load_panel_csv(&spec.path, &LongSchema::default())?;
    let index_of = |name: &str| {
        raw.variable_names()
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| NgcError::InvalidArgument(format!("unknown variable {name}")))
    };
    let members: Vec<Vec<usize>> =
        spec.groups.iter().map(|g| g.iter().map(|v| index_of(v)).collect::<Result<_>>()).collect::<Result<_>>()?;
    let groups = GroupStructure::from_members(members, raw.p())?;
    let ranking = match &spec.ranking_variable {
        Some(name) => index_of(name)?,
        None => 0,
    };
    let imputed = if raw.is_complete() { raw } else { impute_knn_median(&raw, spec.impute_k, ranking)? };
    let (scaled, _) = standardize(&imputed, spec.log_transform)?;
    if spec.fit_times > scaled.t_len() {
        return Err(NgcError::InvalidArgument(format!("fit_times {} exceeds T={}", spec.fit_times, scaled.t_len())));
    }
    Ok((scaled, groups))
}

fn run_data_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let spec = config.data.as_ref().expect("validated");
    create_dir(out_dir)?;
    let (panel, groups) = prepare_data(spec)?;
    let fit_panel = panel.truncate_times(spec.fit_times)?;
    let [_, _, split_seed] = replication_seeds(config.seed, 0);
    let thresholds = config.effective_thresholds();
    let horizon: Vec<usize> = (spec.fit_times - 1..panel.t_len()).collect();
    let mut files = Vec::new();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut pmse_csv = csv::Writer::from_writer(Vec::new());
    pmse_csv.write_record(["method", "time", "mean", "sd"])?;
    for &method in &config.methods {
        let result = tune_and_refit(method, &fit_panel, &groups, config, split_seed, &thresholds);
        let (_, est, trace) = match result {
            Ok(v) => v,
            Err(e) => {
                failures.push(Failure { replication: None, method: Some(method), stage: "fit".into(), message: e.to_string() });
                continue;
            }
        };
        for &t in &horizon {
            let (mean, sd) = pmse(&est, &panel, &[t])?;
            pmse_csv.write_record([method.name().to_string(), panel.time_labels()[t].to_string(), mean.to_string(), sd.to_string()])?;
            rows.push(MetricsRow {
                setting: config.name.clone(),
                variant: method.name().to_string(),
                n: panel.n(),
                p: panel.p(),
                metric: format!("pmse_t{}", panel.time_labels()[t]),
                mean,
                sd,
            });
        }
        write_file(&out_dir.join(format!("estimate_{}.json", method.name())), &est.to_json()?, &mut files)?;
        write_file(&out_dir.join(format!("network_{}.dot", method.name())), &export_network(&est, NetworkFormat::Dot, true), &mut files)?;
        let tp = out_dir.join(format!("trace_{}.csv", method.name()));
        write_trace_csv(&trace, &tp)?;
        files.push(tp);
    }
    let bytes = pmse_csv.into_inner().map_err(|e| NgcError::InvalidArgument(e.to_string()))?;
    write_file(&out_dir.join("pmse.csv"), &String::from_utf8_lossy(&bytes), &mut files)?;
    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_csv(&rows, &metrics_path, false)?;
    files.push(metrics_path);
    if !failures.is_empty() {
        write_file(&out_dir.join("failures.json"), &serde_json::to_string_pretty(&failures)?, &mut files)?;
    }
    Ok(RunSummary { rows, replications: Vec::new(), failures, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "name": "tiny",
                "design": {"p": 6, "T": 3, "n": 40, "d": 1, "group_sizes": [2, 2, 2], "s_per_row": 1,
                           "snr_target": 1.0, "seed": 0},
                "methods": ["lasso", "grp", "agrp", "thgrp"],
                "grid": {"count": 8},
                "replications": 2,
                "seed": 7
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn smoke_run_emits_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let start = std::time::Instant::now();
        let s = run_experiment(&tiny(), dir.path()).unwrap();
        assert!(start.elapsed().as_secs() < 10);
        assert!(s.failures.is_empty(), "{:?}", s.failures);
        for f in ["metrics.csv", "replicates.csv", "summary.txt", "estimates/rep0_grp.json", "traces/rep1_thgrp.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(s.rows.len(), 4 * METRIC_NAMES.len());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&tiny(), a.path()).unwrap();
        run_experiment(&tiny(), b.path()).unwrap();
        for f in ["metrics.csv", "replicates.csv", "summary.txt"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn config_needs_one_source_and_a_method() {
        let mut c = tiny();
        c.methods.clear();
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.data = Some(DataSpec {
            path: "x.csv".into(),
            groups: vec![],
            fit_times: 3,
            log_transform: false,
            impute_k: 5,
            ranking_variable: None,
            delta_misspec: 0.0,
        });
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"name":"x","methods":["grp"],"bogus":1}"#).is_err());
    }

    #[test]
    fn replication_seeds_differ() {
        assert_ne!(replication_seeds(1, 0), replication_seeds(1, 1));
        assert_eq!(replication_seeds(1, 3), replication_seeds(1, 3));
    }

    #[test]
    fn recommended_rule_depends_on_design() {
        let mut c = tiny();
        assert_eq!(c.effective_thresholds(), ThresholdRule::GroupScaled { delta_misspec: 0.0 });
        c.design.as_mut().unwrap().misspecification_rate = 0.3;
        assert_eq!(c.effective_thresholds(), ThresholdRule::Recommended);
        c.thresholds = ThresholdRule::Theory { delta_n: 0.1 };
        assert_eq!(c.effective_thresholds(), ThresholdRule::Theory { delta_n: 0.1 });
    }
}
