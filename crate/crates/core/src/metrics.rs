//! Structure recovery metrics over the `(T−1)·p²` candidate edges `(lag, i, j)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NgcError, Result};
use crate::ngc::NgcEstimate;
use crate::varsim::VarModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Entrywise support comparison; truth lags beyond `d` count as zero.
pub fn confusion(estimate: &NgcEstimate, truth: &VarModel) -> Result<ConfusionCounts> {
    let p = truth.p();
    if estimate.p() != p {
        return Err(NgcError::Dimension(format!("estimate has p={}, truth p={p}", estimate.p())));
    }
    if truth.d() > estimate.lags() {
        return Err(NgcError::Dimension(format!(
            "true order {} exceeds the {} estimated lags",
            truth.d(),
            estimate.lags()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (l, est) in estimate.a_hat.iter().enumerate() {
        for i in 0..p {
            for j in 0..p {
                let t = truth.a.get(l).is_some_and(|m| m[(i, j)] != 0.0);
                match (est[(i, j)] != 0.0, t) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
    }
    Ok(c)
}

/// Matthews correlation; 0 when any marginal count is 0.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// `tp/(tp+fp)`, 0 without predicted edges.
pub fn precision(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    }
}

/// `tp/|E|`, 0 without true edges.
pub fn recall(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    }
}

/// Nonzero entries of `Â^t` with `t > d`, divided by `|E|`.
pub fn err_lag(estimate: &NgcEstimate, d: usize, num_true_edges: usize) -> Result<f64> {
    if num_true_edges == 0 {
        return Err(NgcError::InvalidArgument("truth has no edges".into()));
    }
    let spurious: usize = estimate.a_hat.iter().skip(d).map(|m| m.iter().filter(|v| **v != 0.0).count()).sum();
    Ok(spurious as f64 / num_true_edges as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub mcc: f64,
    pub err_lag: f64,
    pub counts: ConfusionCounts,
}

pub fn metrics_report(estimate: &NgcEstimate, truth: &VarModel) -> Result<MetricsReport> {
    let counts = confusion(estimate, truth)?;
    Ok(MetricsReport {
        precision: precision(&counts),
        recall: recall(&counts),
        mcc: mcc(&counts),
        err_lag: err_lag(estimate, truth.d(), truth.num_edges())?,
        counts,
    })
}

/// Mean and sample sd (divisor `m − 1`; 0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, var.sqrt())
}

/// One line of the aggregated metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub setting: String,
    pub variant: String,
    pub n: usize,
    pub p: usize,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| NgcError::io("<metrics>", e))?;
    Ok(())
}

/// Writes the table, appending (without a second header) when the file exists.
pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>, append: bool) -> Result<()> {
    let path = path.as_ref();
    let exists = append && path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| NgcError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| NgcError::io(path, e))?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(NgcError::from)).collect()
}
