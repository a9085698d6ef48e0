//! Panel data: `n` replicate trajectories of a `p`-variate series over `T`
//! time points, plus the group structure on the variables and the stacked
//! regression design shared by the `p` per-node problems.
//!
//! Time indices are 0-based in code: time `t` in `0..T` is the `(t+1)`-th
//! observation. Missing cells are stored as `NaN`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NgcError, Result};
use crate::grplasso::GroupPartition;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    values: Vec<f64>,
    n: usize,
    t_len: usize,
    p: usize,
    variable_names: Vec<String>,
    replicate_labels: Vec<String>,
    time_labels: Vec<i64>,
}

impl PanelData {
    /// Builds a panel from values laid out as `[(r·T + t)·p + j]`.
    ///
    /// `NaN` entries mark missing cells; infinities are rejected.
    pub fn new(n: usize, t_len: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        let names = (1..=p).map(|j| format!("v{j}")).collect();
        let reps = (1..=n).map(|r| r.to_string()).collect();
        let times = (1..=t_len as i64).collect();
        Self::with_labels(values, names, reps, times)
    }

    pub fn with_labels(
        values: Vec<f64>,
        variable_names: Vec<String>,
        replicate_labels: Vec<String>,
        time_labels: Vec<i64>,
    ) -> Result<Self> {
        let (n, t_len, p) = (replicate_labels.len(), time_labels.len(), variable_names.len());
        if n < 2 || t_len < 2 || p < 1 {
            return Err(NgcError::Dimension(format!(
                "panel needs n >= 2, T >= 2, p >= 1 (got n={n}, T={t_len}, p={p})"
            )));
        }
        if values.len() != n * t_len * p {
            return Err(NgcError::Dimension(format!(
                "expected {} values for n={n}, T={t_len}, p={p}, got {}",
                n * t_len * p,
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(NgcError::InvalidArgument("panel contains infinite values".into()));
        }
        Ok(Self { values, n, t_len, p, variable_names, replicate_labels, time_labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time points `T`.
    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn replicate_labels(&self) -> &[String] {
        &self.replicate_labels
    }

    pub fn time_labels(&self) -> &[i64] {
        &self.time_labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn idx(&self, r: usize, t: usize, j: usize) -> usize {
        (r * self.t_len + t) * self.p + j
    }

    #[inline]
    pub fn get(&self, r: usize, t: usize, j: usize) -> f64 {
        self.values[self.idx(r, t, j)]
    }

    pub fn set(&mut self, r: usize, t: usize, j: usize, v: f64) {
        let i = self.idx(r, t, j);
        self.values[i] = v;
    }

    pub fn is_missing(&self, r: usize, t: usize, j: usize) -> bool {
        self.get(r, t, j).is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    pub(crate) fn require_complete(&self) -> Result<()> {
        match self.missing_count() {
            0 => Ok(()),
            m => Err(NgcError::MissingValues(m)),
        }
    }

    /// Observation vector of replicate `r` at time `t`.
    pub fn observation(&self, r: usize, t: usize) -> &[f64] {
        let start = self.idx(r, t, 0);
        &self.values[start..start + self.p]
    }

    /// The `n × p` observation matrix at time `t`.
    pub fn time_matrix(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p, |r, j| self.get(r, t, j))
    }

    /// Panel restricted to the given replicates, in the given order.
    ///
    /// A single replicate is allowed here so that small holdout sets can be
    /// represented; such panels cannot be standardized.
    pub fn select_replicates(&self, replicates: &[usize]) -> Result<Self> {
        if replicates.is_empty() {
            return Err(NgcError::Dimension("no replicates selected".into()));
        }
        let mut values = Vec::with_capacity(replicates.len() * self.t_len * self.p);
        for &r in replicates {
            if r >= self.n {
                return Err(NgcError::Dimension(format!("replicate {r} out of range")));
            }
            let start = self.idx(r, 0, 0);
            values.extend_from_slice(&self.values[start..start + self.t_len * self.p]);
        }
        Ok(Self {
            values,
            n: replicates.len(),
            t_len: self.t_len,
            p: self.p,
            variable_names: self.variable_names.clone(),
            replicate_labels: replicates.iter().map(|&r| self.replicate_labels[r].clone()).collect(),
            time_labels: self.time_labels.clone(),
        })
    }

    /// Panel restricted to times `0..t_len`.
    pub fn truncate_times(&self, t_len: usize) -> Result<Self> {
        if t_len > self.t_len {
            return Err(NgcError::Dimension(format!("cannot keep {t_len} of {} time points", self.t_len)));
        }
        let mut values = Vec::with_capacity(self.n * t_len * self.p);
        for r in 0..self.n {
            let start = self.idx(r, 0, 0);
            values.extend_from_slice(&self.values[start..start + t_len * self.p]);
        }
        Self::with_labels(
            values,
            self.variable_names.clone(),
            self.replicate_labels.clone(),
            self.time_labels[..t_len].to_vec(),
        )
    }
}

/// Partition of the `p` variables into `G` non-overlapping groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStructure {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl GroupStructure {
    /// From a variable → group id map; ids must be exactly `0..G`.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(NgcError::InvalidArgument("empty group assignment".into()));
        }
        let g_count = assignment.iter().max().unwrap() + 1;
        let mut members = vec![Vec::new(); g_count];
        for (j, &g) in assignment.iter().enumerate() {
            members[g].push(j);
        }
        if let Some(g) = members.iter().position(Vec::is_empty) {
            return Err(NgcError::InvalidArgument(format!("group id {g} has no members")));
        }
        Ok(Self { assignment, members })
    }

    pub fn from_members(members: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let part = GroupPartition::new(members, p)?;
        let mut assignment = vec![0; p];
        for (g, m) in part.groups().iter().enumerate() {
            for &j in m {
                assignment[j] = g;
            }
        }
        let members = part.groups().iter().map(|m| {
            let mut m = m.clone();
            m.sort_unstable();
            m
        });
        Ok(Self { assignment, members: members.collect() })
    }

    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        if sizes.iter().any(|&k| k == 0) {
            return Err(NgcError::InvalidArgument("group sizes must be positive".into()));
        }
        let assignment = sizes.iter().enumerate().flat_map(|(g, &k)| std::iter::repeat(g).take(k)).collect();
        Self::from_assignment(assignment)
    }

    /// Every variable in its own group (plain lasso).
    pub fn singletons(p: usize) -> Self {
        Self { assignment: (0..p).collect(), members: (0..p).map(|j| vec![j]).collect() }
    }

    pub fn p(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.assignment[j]
    }

    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    pub fn all_members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn k_max(&self) -> usize {
        self.members.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Replicates the partition inside each of `lags` lag blocks of width `p`,
    /// lag-major: expanded group `(lag−1)·G + g`.
    pub fn expand(&self, lags: usize) -> GroupPartition {
        let p = self.p();
        let groups = (0..lags)
            .flat_map(|l| self.members.iter().map(move |m| m.iter().map(|&j| l * p + j).collect()))
            .collect();
        GroupPartition::new(groups, lags * p).expect("expansion of a valid partition")
    }
}

impl Serialize for GroupStructure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.members.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupStructure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let members: Vec<Vec<usize>> = Vec::deserialize(d)?;
        let p = members.iter().map(Vec::len).sum();
        GroupStructure::from_members(members, p).map_err(serde::de::Error::custom)
    }
}

/// Per-(time, variable) affine map applied by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationReport {
    /// Laid out `[t·p + j]`.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub log_transform_applied: bool,
    pub centered: bool,
}

impl StandardizationReport {
    /// Maps standardized data back to the original scale.
    pub fn invert(&self, data: &PanelData) -> Result<PanelData> {
        let (t_len, p) = (data.t_len(), data.p());
        if self.center.len() != t_len * p {
            return Err(NgcError::Dimension("report does not match panel shape".into()));
        }
        let mut out = data.clone();
        for r in 0..data.n() {
            for t in 0..t_len {
                for j in 0..p {
                    let k = t * p + j;
                    let mut v = data.get(r, t, j) * self.scale[k] + self.center[k];
                    if self.log_transform_applied {
                        v = v.exp();
                    }
                    out.set(r, t, j, v);
                }
            }
        }
        Ok(out)
    }
}

/// Stacked regression design for the network problem.
///
/// Row `r` of `x` is `[X^{T−1}_r : X^{T−2}_r : … : X^1_r]`; column
/// `(lag−1)·p + j` holds variable `j` at lag `lag`. `y` holds time `T`.
#[derive(Debug, Clone)]
pub struct StackedDesign {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub lag_of_column: Vec<usize>,
    pub expanded_groups: GroupPartition,
    pub p: usize,
    pub lags: usize,
}

impl StackedDesign {
    pub fn column(&self, lag: usize, j: usize) -> usize {
        (lag - 1) * self.p + j
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// Column names of the long CSV layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongSchema {
    pub replicate: String,
    pub time: String,
    pub variable: String,
    pub value: String,
}

impl Default for LongSchema {
    fn default() -> Self {
        Self {
            replicate: "replicate".into(),
            time: "time".into(),
            variable: "variable".into(),
            value: "value".into(),
        }
    }
}

/// Reads a long-format panel (`replicate,time,variable,value`).
///
/// Replicates are ordered numerically when every label is an integer and
/// lexicographically otherwise; times ascend; variables keep their order of
/// first appearance. Empty values and absent rows become missing cells.
pub fn load_panel_csv(path: impl AsRef<Path>, schema: &LongSchema) -> Result<PanelData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| NgcError::io(path, e))?;
    read_panel_csv(file, schema)
}

pub fn read_panel_csv<R: std::io::Read>(reader: R, schema: &LongSchema) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| NgcError::MissingColumn(name.to_string()))
    };
    let (ci, ct, cv, cx) = (col(&schema.replicate)?, col(&schema.time)?, col(&schema.variable)?, col(&schema.value)?);

    struct Row {
        rep: String,
        time: i64,
        var: String,
        value: Option<f64>,
    }
    let mut rows = Vec::new();
    let mut seen: HashMap<(String, i64, String), usize> = HashMap::new();
    let mut var_order: Vec<String> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |c: usize| record.get(c).unwrap_or("").to_string();
        let rep = field(ci);
        let time_s = field(ct);
        let time: i64 = time_s
            .parse()
            .map_err(|_| NgcError::NonNumeric { field: "time", value: time_s.clone(), row: line })?;
        let var = field(cv);
        let value_s = field(cx);
        let value = if value_s.is_empty() {
            None
        } else {
            match value_s.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => return Err(NgcError::NonNumeric { field: "value", value: value_s, row: line }),
            }
        };
        let key = (rep.clone(), time, var.clone());
        if let Some(&first_row) = seen.get(&key) {
            return Err(NgcError::DuplicateKey { replicate: rep, time, variable: var, first_row, second_row: line });
        }
        seen.insert(key, line);
        if !var_index.contains_key(&var) {
            var_index.insert(var.clone(), var_order.len());
            var_order.push(var.clone());
        }
        rows.push(Row { rep, time, var, value });
    }

    let reps: BTreeSet<&str> = rows.iter().map(|r| r.rep.as_str()).collect();
    let mut rep_order: Vec<String> = reps.into_iter().map(str::to_string).collect();
    if rep_order.iter().all(|r| r.parse::<i64>().is_ok()) {
        rep_order.sort_by_key(|r| r.parse::<i64>().unwrap());
    }
    let times: BTreeSet<i64> = rows.iter().map(|r| r.time).collect();
    let time_order: Vec<i64> = times.into_iter().collect();
    let rep_index: HashMap<&str, usize> = rep_order.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let time_index: HashMap<i64, usize> = time_order.iter().enumerate().map(|(i, &t)| (t, i)).collect();

    let (n, t_len, p) = (rep_order.len(), time_order.len(), var_order.len());
    let mut values = vec![f64::NAN; n * t_len * p];
    let mut present = vec![false; n * t_len];
    for row in &rows {
        let (r, t, j) = (rep_index[row.rep.as_str()], time_index[&row.time], var_index[&row.var]);
        present[r * t_len + t] = true;
        if let Some(v) = row.value {
            values[(r * t_len + t) * p + j] = v;
        }
    }
    if let Some(k) = present.iter().position(|&x| !x) {
        return Err(NgcError::RaggedPanel { replicate: rep_order[k / t_len].clone(), time: time_order[k % t_len] });
    }
    PanelData::with_labels(values, var_order, rep_order, time_order)
}

/// Writes the panel in long format sorted by (replicate, time, variable).
pub fn write_panel_csv(data: &PanelData, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| NgcError::io(path, e))?;
    write_panel(data, file)
}

pub fn write_panel<W: std::io::Write>(data: &PanelData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "time", "variable", "value"])?;
    for r in 0..data.n() {
        for t in 0..data.t_len() {
            for j in 0..data.p() {
                let v = data.get(r, t, j);
                let value = if v.is_nan() { String::new() } else { format!("{v}") };
                w.write_record([
                    data.replicate_labels[r].as_str(),
                    &data.time_labels[t].to_string(),
                    data.variable_names[j].as_str(),
                    &value,
                ])?;
            }
        }
    }
    w.flush().map_err(|e| NgcError::io("<panel writer>", e))?;
    Ok(())
}

/// Fills every missing cell with the median of that (time, variable) cell over
/// the `k` replicates closest in `ranking_variable` at the latest time.
///
/// Neighbors lacking the cell themselves are skipped in favour of the next
/// closest. Ties in distance go to the lower replicate index.
pub fn impute_knn_median(data: &PanelData, k: usize, ranking_variable: usize) -> Result<PanelData> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(NgcError::InvalidArgument(format!("k must satisfy 0 < k < n (k={k}, n={n})")));
    }
    if ranking_variable >= data.p() {
        return Err(NgcError::InvalidArgument(format!("ranking variable {ranking_variable} out of range")));
    }
    let last = data.t_len() - 1;
    let ranks: Vec<f64> = (0..n).map(|r| data.get(r, last, ranking_variable)).collect();
    if let Some(r) = ranks.iter().position(|v| v.is_nan()) {
        return Err(NgcError::MissingRanking { variable: ranking_variable, replicate: r });
    }
    let mut out = data.clone();
    for r in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&o| o != r).collect();
        order.sort_by(|&a, &b| {
            let (da, db) = ((ranks[a] - ranks[r]).abs(), (ranks[b] - ranks[r]).abs());
            da.total_cmp(&db).then(a.cmp(&b))
        });
        for t in 0..data.t_len() {
            for j in 0..data.p() {
                if !data.is_missing(r, t, j) {
                    continue;
                }
                let mut vals: Vec<f64> =
                    order.iter().map(|&o| data.get(o, t, j)).filter(|v| !v.is_nan()).take(k).collect();
                if vals.is_empty() {
                    return Err(NgcError::InvalidArgument(format!(
                        "no observed neighbor for time {t}, variable {j}"
                    )));
                }
                out.set(r, t, j, median(&mut vals));
            }
        }
    }
    Ok(out)
}

pub(crate) fn median(vals: &mut [f64]) -> f64 {
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    }
}

/// Centers each (time, variable) column of replicates at its mean and scales
/// it to unit sample standard deviation (divisor `n − 1`), optionally after a
/// natural log transform.
pub fn standardize(data: &PanelData, log_first: bool) -> Result<(PanelData, StandardizationReport)> {
    data.require_complete()?;
    let (n, t_len, p) = (data.n(), data.t_len(), data.p());
    if n < 2 {
        return Err(NgcError::Dimension("standardizing needs at least two replicates".into()));
    }
    let mut work = data.clone();
    if log_first {
        for r in 0..n {
            for t in 0..t_len {
                for j in 0..p {
                    let v = data.get(r, t, j);
                    if v <= 0.0 {
                        return Err(NgcError::NonPositive { replicate: r, time: t, variable: j, value: v });
                    }
                    work.set(r, t, j, v.ln());
                }
            }
        }
    }
    let mut center = vec![0.0; t_len * p];
    let mut scale = vec![0.0; t_len * p];
    for t in 0..t_len {
        for j in 0..p {
            let mean = (0..n).map(|r| work.get(r, t, j)).sum::<f64>() / n as f64;
            let ss: f64 = (0..n).map(|r| (work.get(r, t, j) - mean).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            let spread = (0..n).map(|r| work.get(r, t, j).abs()).fold(0.0, f64::max);
            if !(sd > 1e-14 * spread.max(f64::MIN_POSITIVE)) {
                return Err(NgcError::ZeroVariance {
                    variable: data.variable_names[j].clone(),
                    time: data.time_labels[t],
                });
            }
            center[t * p + j] = mean;
            scale[t * p + j] = sd;
        }
    }
    let mut out = work.clone();
    for r in 0..n {
        for t in 0..t_len {
            for j in 0..p {
                let k = t * p + j;
                out.set(r, t, j, (work.get(r, t, j) - center[k]) / scale[k]);
            }
        }
    }
    Ok((out, StandardizationReport { center, scale, log_transform_applied: log_first, centered: true }))
}

/// Builds the stacked design regressing time `T` on times `T−1, …, 1`.
pub fn make_stacked_design(data: &PanelData, groups: &GroupStructure) -> Result<StackedDesign> {
    data.require_complete()?;
    if groups.p() != data.p() {
        return Err(NgcError::Dimension(format!(
            "group structure covers {} variables, panel has {}",
            groups.p(),
            data.p()
        )));
    }
    let (n, t_len, p) = (data.n(), data.t_len(), data.p());
    let lags = t_len - 1;
    let last = t_len - 1;
    let x = DMatrix::from_fn(n, lags * p, |r, c| {
        let (lag, j) = (c / p + 1, c % p);
        data.get(r, last - lag, j)
    });
    let y = data.time_matrix(last);
    let lag_of_column = (0..lags * p).map(|c| c / p + 1).collect();
    Ok(StackedDesign { x, y, lag_of_column, expanded_groups: groups.expand(lags), p, lags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_panel(text: &str) -> Result<PanelData> {
        read_panel_csv(text.as_bytes(), &LongSchema::default())
    }

    #[test]
    fn minimal_complete_panel() {
        let d = csv_panel("replicate,time,variable,value\n1,1,a,0.5\n1,2,a,1\n2,1,a,2\n2,2,a,3\n").unwrap();
        assert_eq!((d.n(), d.t_len(), d.p()), (2, 2, 1));
        assert_eq!(d.get(1, 1, 0), 3.0);
        assert!(d.is_complete());
    }

    #[test]
    fn duplicate_key_rejected_with_rows() {
        let err = csv_panel("replicate,time,variable,value\n1,1,a,0.5\n1,1,a,1\n2,1,a,2\n").unwrap_err();
        match err {
            NgcError::DuplicateKey { first_row, second_row, .. } => {
                assert_eq!((first_row, second_row), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_value_rejected() {
        let err = csv_panel("replicate,time,variable,value\n1,1,a,x\n").unwrap_err();
        assert!(matches!(err, NgcError::NonNumeric { field: "value", .. }));
    }

    #[test]
    fn ragged_panel_rejected() {
        let text = "replicate,time,variable,value\n1,1,a,1\n1,2,a,1\n2,1,a,2\n";
        assert!(matches!(csv_panel(text).unwrap_err(), NgcError::RaggedPanel { .. }));
    }

    #[test]
    fn absent_and_empty_cells_are_missing() {
        let text = "replicate,time,variable,value\n1,1,a,1\n1,1,b,\n1,2,a,1\n1,2,b,2\n2,1,a,2\n2,1,b,1\n2,2,b,4\n";
        let d = csv_panel(text).unwrap();
        assert_eq!(d.missing_count(), 2);
        assert!(d.is_missing(0, 0, 1));
        assert!(d.is_missing(1, 1, 0));
    }

    #[test]
    fn knn_constant_neighborhood() {
        // ranking variable 0; replicate 0 missing variable 1 at time 0
        let mut vals = vec![];
        for r in 0..5 {
            vals.extend([r as f64, 7.0, r as f64, 7.0]);
        }
        let mut d = PanelData::new(5, 2, 2, vals).unwrap();
        d.set(0, 0, 1, f64::NAN);
        let out = impute_knn_median(&d, 3, 0).unwrap();
        assert_eq!(out.get(0, 0, 1), 7.0);
    }

    #[test]
    fn knn_median_of_five() {
        let vals = [0.0, 1.0, 2.0, 3.0, 4.0, 100.0];
        let mut data = Vec::new();
        for r in 0..6 {
            // time 0: (rank, value); time 1: (rank, value)
            data.extend([r as f64, vals[r], r as f64, 0.0]);
        }
        let mut d = PanelData::new(6, 2, 2, data).unwrap();
        // replicate 0 is missing; neighbors 1..5 hold 1,2,3,4,100
        d.set(0, 0, 1, f64::NAN);
        let out = impute_knn_median(&d, 5, 0).unwrap();
        assert_eq!(out.get(0, 0, 1), 3.0);
    }

    #[test]
    fn knn_identity_without_missing() {
        let d = PanelData::new(3, 2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(impute_knn_median(&d, 2, 0).unwrap(), d);
    }

    #[test]
    fn knn_errors() {
        let mut d = PanelData::new(3, 2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(impute_knn_median(&d, 3, 0).is_err());
        d.set(1, 1, 0, f64::NAN);
        assert!(matches!(impute_knn_median(&d, 1, 0), Err(NgcError::MissingRanking { .. })));
    }

    #[test]
    fn standardize_degenerate_column() {
        let d = PanelData::new(3, 2, 1, vec![2.0, 1.0, 2.0, 5.0, 2.0, 3.0]).unwrap();
        assert!(matches!(standardize(&d, false), Err(NgcError::ZeroVariance { time: 1, .. })));
    }

    #[test]
    fn standardize_two_point_column() {
        let d = PanelData::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let (_, rep) = standardize(&d, false).unwrap();
        assert!((rep.scale[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn standardize_unit_variance_fixed_point() {
        // mean 0, sample variance 1
        let col = [-1.0, 0.0, 1.0];
        let d = PanelData::new(3, 2, 1, col.iter().flat_map(|&v| [v, v]).collect()).unwrap();
        let (z, rep) = standardize(&d, false).unwrap();
        assert!(rep.scale.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert_eq!(z, d);
    }

    #[test]
    fn standardize_rejects_nonpositive_log() {
        let d = PanelData::new(2, 2, 1, vec![1.0, 2.0, 0.0, 3.0]).unwrap();
        assert!(matches!(standardize(&d, true), Err(NgcError::NonPositive { .. })));
    }

    #[test]
    fn stacked_design_layout() {
        let (n, t_len, p) = (2, 2, 3);
        let d = PanelData::new(n, t_len, p, (0..12).map(f64::from).collect()).unwrap();
        let s = make_stacked_design(&d, &GroupStructure::singletons(p)).unwrap();
        assert_eq!(s.x.ncols(), p);
        assert_eq!(s.y[(1, 2)], d.get(1, 1, 2));
        assert_eq!(s.x[(1, 2)], d.get(1, 0, 2));
    }

    #[test]
    fn expanded_groups_per_lag() {
        let d = PanelData::new(2, 5, 3, vec![0.5; 30]).unwrap();
        let s = make_stacked_design(&d, &GroupStructure::contiguous(&[3]).unwrap()).unwrap();
        assert_eq!(s.expanded_groups.len(), 4);
        assert!(s.expanded_groups.sizes().iter().all(|&k| k == 3));
        for g in 0..4 {
            let lag = s.lag_of_column[s.expanded_groups.group(g)[0]];
            assert!(s.expanded_groups.group(g).iter().all(|&c| s.lag_of_column[c] == lag));
        }
    }

    #[test]
    fn group_structure_rejects_gaps() {
        assert!(GroupStructure::from_assignment(vec![0, 2, 2]).is_err());
        assert!(GroupStructure::from_members(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        let g = GroupStructure::from_members(vec![vec![2, 0], vec![1]], 3).unwrap();
        assert_eq!(g.group_of(2), 0);
        assert_eq!(g.k_max(), 2);
    }
}
