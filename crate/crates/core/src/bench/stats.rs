use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl StatSummary {
    /// Sample standard deviation; zero for fewer than two values. An empty
    /// series summarizes to all zeros.
    pub fn of(metric: impl Into<String>, values: &[f64]) -> Self {
        let metric = metric.into();
        if values.is_empty() {
            return Self { metric, count: 0, mean: 0.0, std: 0.0, min: 0.0, p25: 0.0, p50: 0.0, p75: 0.0, max: 0.0 };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        // keep the order statistics consistent with min/max under rounding
        let clamp = |v: f64| v.clamp(sorted[0], sorted[n - 1]);
        Self {
            metric,
            count: n,
            mean: clamp(mean),
            std,
            min: sorted[0],
            p25: clamp(quantile(&sorted, 0.25)),
            p50: clamp(quantile(&sorted, 0.5)),
            p75: clamp(quantile(&sorted, 0.75)),
            max: sorted[n - 1],
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.min <= self.p25 && self.p25 <= self.p50 && self.p50 <= self.p75 && self.p75 <= self.max && self.std >= 0.0
    }
}

/// Fixed-width text table; `reference` adds a column of published means.
pub fn render_table(rows: &[StatSummary], reference: &[(&str, f64)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<28}{:>14}{:>14}{:>14}{:>14}{:>14}{:>14}{:>14}", "metric", "mean", "std", "min", "25%", "50%", "75%", "max");
    if !reference.is_empty() {
        let _ = write!(out, "{:>16}", "reference mean");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{:<28}{:>14.5}{:>14.5}{:>14.5}{:>14.5}{:>14.5}{:>14.5}{:>14.5}",
            r.metric, r.mean, r.std, r.min, r.p25, r.p50, r.p75, r.max
        );
        if let Some((_, v)) = reference.iter().find(|(m, _)| *m == r.metric) {
            let _ = write!(out, "{v:>16.5}");
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[StatSummary]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "count", "mean", "std", "min", "p25", "p50", "p75", "max"]).expect("in-memory write");
    for r in rows {
        w.serialize((&r.metric, r.count, r.mean, r.std, r.min, r.p25, r.p50, r.p75, r.max)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
