//! Report serialization: JSON, CSV tables, condition summaries, and
//! score histograms.
//!
//! Machine outputs (JSON, CSV) carry full `f64` precision; the human-readable
//! text table rounds percentages to two decimals. All emitters produce
//! deterministic bytes for identical inputs.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{ImageScore, MetricReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot build a condition table from an empty report set")]
    EmptyConditionSet,
    #[error("histogram bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Pretty JSON with a trailing newline.
pub fn report_to_json(report: &MetricReport) -> Result<String, ReportError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

/// CSV with classes as columns: a `metric` key column, one column per class,
/// and a trailing `mean` column. Absent classes print empty cells, mirroring
/// the dashes of benchmark tables.
pub fn report_to_csv(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "metric");
    for class in &report.per_class {
        let _ = write!(out, ",{}", csv_field(&report_class_header(class.index, &class.id)));
    }
    let _ = writeln!(out, ",mean");

    let _ = write!(out, "iou");
    for class in &report.per_class {
        match class.iou {
            Some(v) => {
                let _ = write!(out, ",{v}");
            }
            None => out.push(','),
        }
    }
    let _ = writeln!(out, ",{}", report.miou);

    let _ = write!(out, "safe_iou");
    for class in &report.per_class {
        match class.safe_iou {
            Some(v) => {
                let _ = write!(out, ",{v}");
            }
            None => out.push(','),
        }
    }
    let _ = writeln!(out, ",{}", report.smiou);
    out
}

fn report_class_header(index: usize, id: &str) -> String {
    format!("{index}:{id}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// Condition tables
// ---------------------------------------------------------------------------

/// One row of a per-condition summary: plain mean IoU plus the safe mean at
/// two important-class levels (traffic participants, and the full safe set).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    pub condition: String,
    pub miou: f64,
    pub smiou_tp: f64,
    pub smiou: f64,
}

/// Per-condition rows plus a merged `All` row.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionTable {
    pub rows: Vec<ConditionRow>,
    pub all: ConditionRow,
}

impl ConditionTable {
    /// Rows sorted by condition name; `all` computed by the caller from the
    /// merged confusion matrix.
    pub fn new(mut rows: Vec<ConditionRow>, all: ConditionRow) -> Result<Self, ReportError> {
        if rows.is_empty() {
            return Err(ReportError::EmptyConditionSet);
        }
        rows.sort_by(|a, b| a.condition.cmp(&b.condition));
        Ok(ConditionTable { rows, all })
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Full-precision CSV: `condition,miou,smiou_tp,smiou`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,miou,smiou_tp,smiou\n");
        for row in self.rows.iter().chain(std::iter::once(&self.all)) {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&row.condition),
                row.miou,
                row.smiou_tp,
                row.smiou
            );
        }
        out
    }

    /// Human-readable table; percentages rounded to two decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.condition.len())
            .chain(std::iter::once("condition".len()))
            .chain(std::iter::once(self.all.condition.len()))
            .max()
            .unwrap_or(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:width$}  {:>9}  {:>9}  {:>9}",
            "condition", "mIoU%", "SmIoU(tp)%", "SmIoU%"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.all)) {
            let _ = writeln!(
                out,
                "{:width$}  {:>9.2}  {:>9.2}  {:>9.2}",
                row.condition,
                row.miou * 100.0,
                row.smiou_tp * 100.0,
                row.smiou * 100.0
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

/// One histogram bin over percentage scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
}

/// Bin percentage values (`-100..=100`) at `bin_width` percentage points.
///
/// Bins are `[lower, upper)` except the topmost, which is closed so that an
/// exact 100% lands in the last bin. Only nonempty bins are emitted, in
/// ascending order.
pub fn histogram(values_percent: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>, ReportError> {
    if !(bin_width > 0.0) {
        return Err(ReportError::BadBinWidth(bin_width));
    }
    let mut counts: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
    let top = (100.0 / bin_width).ceil() as i64 - 1;
    for &v in values_percent {
        let mut bin = (v / bin_width).floor() as i64;
        if bin > top {
            bin = top;
        }
        *counts.entry(bin).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(bin, count)| HistogramBin {
            lower: bin as f64 * bin_width,
            upper: (bin + 1) as f64 * bin_width,
            count,
        })
        .collect())
}

/// Histogram CSV for the per-image miou/smiou distributions of a report:
/// `metric,bin_lower,bin_upper,count` rows.
pub fn histogram_csv(per_image: &[ImageScore], bin_width: f64) -> Result<String, ReportError> {
    let mut out = String::from("metric,bin_lower,bin_upper,count\n");
    let mious: Vec<f64> = per_image.iter().map(|s| s.miou * 100.0).collect();
    let smious: Vec<f64> = per_image.iter().map(|s| s.smiou * 100.0).collect();
    for (name, values) in [("miou", mious), ("smiou", smious)] {
        for bin in histogram(&values, bin_width)? {
            let _ = writeln!(out, "{},{},{},{}", name, bin.lower, bin.upper, bin.count);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins_boundaries() {
        let bins = histogram(&[0.0, 4.9, 5.0, 100.0, -2.0], 5.0).unwrap();
        assert_eq!(
            bins,
            vec![
                HistogramBin { lower: -5.0, upper: 0.0, count: 1 },
                HistogramBin { lower: 0.0, upper: 5.0, count: 2 },
                HistogramBin { lower: 5.0, upper: 10.0, count: 1 },
                HistogramBin { lower: 95.0, upper: 100.0, count: 1 },
            ]
        );
    }

    #[test]
    fn histogram_rejects_bad_width() {
        assert!(matches!(
            histogram(&[1.0], 0.0),
            Err(ReportError::BadBinWidth(_))
        ));
    }

    #[test]
    fn condition_table_sorts_and_formats() {
        let table = ConditionTable::new(
            vec![
                ConditionRow { condition: "snow".into(), miou: 0.53, smiou_tp: 0.43, smiou: 0.28 },
                ConditionRow { condition: "rain".into(), miou: 0.64, smiou_tp: 0.58, smiou: 0.48 },
            ],
            ConditionRow { condition: "all".into(), miou: 0.6, smiou_tp: 0.5, smiou: 0.4 },
        )
        .unwrap();
        assert_eq!(table.rows[0].condition, "rain");
        let csv = table.to_csv();
        assert!(csv.starts_with("condition,miou,smiou_tp,smiou\n"));
        assert!(csv.contains("rain,0.64,0.58,0.48"));
        let text = table.to_text();
        assert!(text.contains("64.00"));
    }

    #[test]
    fn empty_condition_table_is_rejected() {
        let all = ConditionRow { condition: "all".into(), miou: 0.0, smiou_tp: 0.0, smiou: 0.0 };
        assert!(matches!(
            ConditionTable::new(vec![], all),
            Err(ReportError::EmptyConditionSet)
        ));
    }
}
