//! Binary classification metrics with hate (label 1) as the positive class.
//!
//! Any ratio whose denominator is zero is reported as 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("label {0} outside {{0, 1}}")]
    BadLabel(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionCounts, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(MetricsError::BadLabel(p.max(y))),
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean of the two class recalls.
    pub acc: f64,
    /// Mean of the two class F1 scores.
    pub m_f1: f64,
    pub f1_h: f64,
    pub p_h: f64,
    pub r_h: f64,
    /// Macro precision.
    pub p_m: f64,
    /// Macro recall.
    pub r_m: f64,
}

/// Column names in table order.
pub const METRIC_NAMES: [&str; 7] = ["ACC", "M-F1", "F1(H)", "P(H)", "R(H)", "P(M)", "R(M)"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 7] {
        [self.acc, self.m_f1, self.f1_h, self.p_h, self.r_h, self.p_m, self.r_m]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            acc: v[0],
            m_f1: v[1],
            f1_h: v[2],
            p_h: v[3],
            r_h: v[4],
            p_m: v[5],
            r_m: v[6],
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_report(c: &ConfusionCounts) -> MetricsReport {
    let p_h = ratio(c.tp, c.tp + c.fp);
    let r_h = ratio(c.tp, c.tp + c.fn_);
    let p_n = ratio(c.tn, c.tn + c.fn_);
    let r_n = ratio(c.tn, c.tn + c.fp);
    let f1_h = f1(p_h, r_h);
    let f1_n = f1(p_n, r_n);
    MetricsReport {
        acc: (r_h + r_n) / 2.0,
        m_f1: (f1_h + f1_n) / 2.0,
        f1_h,
        p_h,
        r_h,
        p_m: (p_h + p_n) / 2.0,
        r_m: (r_h + r_n) / 2.0,
    }
}

/// Per-metric mean and sample standard deviation over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<Aggregate, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = reports.len() as f64;
    let mut mean = [0.0; 7];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(r.values()) {
            *m += v / n;
        }
    }
    let mut std = [0.0; 7];
    if reports.len() > 1 {
        for r in reports {
            for ((s, v), m) in std.iter_mut().zip(r.values()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
    }
    Ok(Aggregate {
        runs: reports.len(),
        mean: MetricsReport::from_values(mean),
        std: MetricsReport::from_values(std),
    })
}

/// Three decimals without the leading zero: `0.874` → `.874`.
pub fn format_ratio(x: f64) -> String {
    let s = format!("{x:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => match s.strip_prefix("-0.") {
            Some(rest) => format!("-.{rest}"),
            None => s,
        },
    }
}

/// `mean (std)` cell such as `.874 (.009)`.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{} ({})", format_ratio(mean), format_ratio(std))
}

impl Aggregate {
    pub fn cells(&self) -> [String; 7] {
        let (m, s) = (self.mean.values(), self.std.values());
        std::array::from_fn(|i| format_cell(m[i], s[i]))
    }
}
