//! Plain and safety-weighted intersection-over-union scores.
//!
//! For a confusion matrix `cm` write `union(c) = |gt_c ∪ pred_c| =
//! rowsum(c) + colsum(c) − cm(c,c)`. The per-class scores are
//!
//! ```text
//! iou(c)        = cm(c,c) / union(c)
//! cross(c, s)   = cm(c,s) / union(c)                    for s ≠ c
//! safe_iou(c)   = iou(c) − Σ_s (d(c,s)/n) · cross(c,s)
//! ```
//!
//! where the penalty sum runs over every other class when `c` is important,
//! and over the important classes only when it is not. The mean of IoUs is the
//! familiar mIoU; the mean of safe IoUs is the safe mIoU. With an empty
//! important set the penalty vanishes and both means agree exactly. Because
//! `d(c,s)/n ≤ 1` and the cross terms sum to at most 1, every safe IoU —
//! and therefore the safe mean — lies in `[−1, 1]`.
//!
//! Means run over "present" classes. Under the default
//! [`PresencePolicy::ExcludeAbsent`], a class is present when it has
//! ground-truth pixels, matching benchmark tables that print a dash for
//! classes a condition never shows. [`PresencePolicy::IncludeAbsentAsZero`]
//! counts every class, scoring absent ones as zero.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::confusion::{accumulate, decode_label_map_auto, ConfusionMatrix};
use crate::hierarchy::{DistanceMatrix, ImportantClassSet, LabelHierarchy};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no classes present in the evaluated pixels")]
    NoClassesPresent,
    #[error("confusion matrix has {cm} classes but the distance matrix has {dm}")]
    ClassCountMismatch { cm: usize, dm: usize },
    #[error("important set covers {important} classes but the matrix has {cm}")]
    ImportantSetMismatch { important: usize, cm: usize },
    #[error("gt root {0} is not a directory")]
    BadGtRoot(PathBuf),
    #[error("pred root {0} is not a directory")]
    BadPredRoot(PathBuf),
    #[error("no label maps found under {0}")]
    EmptyPairSet(PathBuf),
    #[error(transparent)]
    Confusion(#[from] crate::confusion::ConfusionError),
}

/// How absent classes participate in the means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresencePolicy {
    /// Average only classes with ground-truth pixels.
    ExcludeAbsent,
    /// Average all K classes, counting absent ones as zero.
    IncludeAbsentAsZero,
}

/// Whether scores are computed on one merged matrix or averaged per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// One confusion matrix over the whole dataset (the default for
    /// benchmark-table numbers).
    DatasetLevel,
    /// Score every image separately and average; also yields the per-image
    /// score list used for distribution plots.
    PerImageMean,
}

/// Metric evaluation settings.
#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub important: ImportantClassSet,
    pub presence: PresencePolicy,
    pub aggregation: Aggregation,
}

impl MetricConfig {
    pub fn new(important: ImportantClassSet) -> Self {
        MetricConfig {
            important,
            presence: PresencePolicy::ExcludeAbsent,
            aggregation: Aggregation::DatasetLevel,
        }
    }
}

fn union(cm: &ConfusionMatrix, c: usize) -> u64 {
    cm.row_sum(c) + cm.col_sum(c) - cm.count(c, c)
}

/// Per-class IoU; `None` when the class appears in neither ground truth nor
/// prediction (empty union).
pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.num_classes())
        .map(|c| {
            let u = union(cm, c);
            (u > 0).then(|| cm.count(c, c) as f64 / u as f64)
        })
        .collect()
}

/// Cross-class ratio `cm(c,s) / union(c)`: the fraction of class `c`'s union
/// that ground-truth `c` pixels leak into prediction `s`.
///
/// `None` when class `c` has an empty union (the caller must treat `c` as
/// absent).
pub fn cross_iou(cm: &ConfusionMatrix, c: usize, s: usize) -> Option<f64> {
    let u = union(cm, c);
    (u > 0).then(|| cm.count(c, s) as f64 / u as f64)
}

/// Safe IoU of one class: its IoU minus distance-weighted cross terms.
///
/// `None` when the class has an empty union.
pub fn safe_iou_class(
    cm: &ConfusionMatrix,
    dm: &DistanceMatrix,
    c: usize,
    important: &ImportantClassSet,
) -> Option<f64> {
    let u = union(cm, c);
    if u == 0 {
        return None;
    }
    let u = u as f64;
    let k = cm.num_classes();
    let mut penalty = 0.0;
    if important.contains(c) {
        for s in 0..k {
            if s != c {
                penalty += dm.weight(c, s) * (cm.count(c, s) as f64 / u);
            }
        }
    } else {
        for s in important.indices() {
            penalty += dm.weight(c, s) * (cm.count(c, s) as f64 / u);
        }
    }
    Some(cm.count(c, c) as f64 / u - penalty)
}

/// Safe IoU for every class, `None` for empty unions.
pub fn safe_iou_per_class(
    cm: &ConfusionMatrix,
    dm: &DistanceMatrix,
    important: &ImportantClassSet,
) -> Vec<Option<f64>> {
    (0..cm.num_classes())
        .map(|c| safe_iou_class(cm, dm, c, important))
        .collect()
}

/// Classes participating in the means under `policy`.
pub fn mean_classes(cm: &ConfusionMatrix, policy: PresencePolicy) -> Vec<usize> {
    match policy {
        PresencePolicy::ExcludeAbsent => (0..cm.num_classes())
            .filter(|&c| cm.row_sum(c) > 0)
            .collect(),
        PresencePolicy::IncludeAbsentAsZero => (0..cm.num_classes()).collect(),
    }
}

fn mean_over(values: &[Option<f64>], classes: &[usize]) -> Result<f64, MetricsError> {
    if classes.is_empty() {
        return Err(MetricsError::NoClassesPresent);
    }
    let sum: f64 = classes.iter().map(|&c| values[c].unwrap_or(0.0)).sum();
    Ok(sum / classes.len() as f64)
}

/// Mean IoU over present classes.
pub fn mean_iou(cm: &ConfusionMatrix, policy: PresencePolicy) -> Result<f64, MetricsError> {
    check_nonempty(cm, policy)?;
    mean_over(&iou_per_class(cm), &mean_classes(cm, policy))
}

/// Safe mean IoU over present classes.
pub fn safe_mean_iou(
    cm: &ConfusionMatrix,
    dm: &DistanceMatrix,
    important: &ImportantClassSet,
    policy: PresencePolicy,
) -> Result<f64, MetricsError> {
    check_compat(cm, dm, important)?;
    check_nonempty(cm, policy)?;
    mean_over(
        &safe_iou_per_class(cm, dm, important),
        &mean_classes(cm, policy),
    )
}

fn check_nonempty(cm: &ConfusionMatrix, policy: PresencePolicy) -> Result<(), MetricsError> {
    let empty = match policy {
        PresencePolicy::ExcludeAbsent => mean_classes(cm, policy).is_empty(),
        PresencePolicy::IncludeAbsentAsZero => cm.total() == 0,
    };
    if empty {
        Err(MetricsError::NoClassesPresent)
    } else {
        Ok(())
    }
}

fn check_compat(
    cm: &ConfusionMatrix,
    dm: &DistanceMatrix,
    important: &ImportantClassSet,
) -> Result<(), MetricsError> {
    if cm.num_classes() != dm.num_classes() {
        return Err(MetricsError::ClassCountMismatch {
            cm: cm.num_classes(),
            dm: dm.num_classes(),
        });
    }
    if important.num_classes() != cm.num_classes() {
        return Err(MetricsError::ImportantSetMismatch {
            important: important.num_classes(),
            cm: cm.num_classes(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Scores for one class in a [`MetricReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ClassScore {
    pub index: usize,
    pub id: String,
    pub display: String,
    pub iou: Option<f64>,
    pub safe_iou: Option<f64>,
    /// Whether this class participates in the reported means.
    pub in_mean: bool,
}

/// Scores of a single image in per-image aggregation.
#[derive(Debug, Clone, Serialize)]
pub struct ImageScore {
    pub path: String,
    pub miou: f64,
    pub smiou: f64,
    pub present_classes: usize,
}

/// A per-file problem encountered while evaluating a directory pair.
#[derive(Debug, Clone, Serialize)]
pub struct FileIssue {
    pub path: String,
    pub message: String,
}

/// Full evaluation output: per-class scores, means, and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub hierarchy: String,
    pub classes: usize,
    pub n_levels: u32,
    pub important: Vec<usize>,
    pub presence: PresencePolicy,
    pub aggregation: Aggregation,
    pub per_class: Vec<ClassScore>,
    pub miou: f64,
    pub smiou: f64,
    pub evaluated_classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_image: Option<Vec<ImageScore>>,
    pub pairs_evaluated: usize,
    pub issues: Vec<FileIssue>,
}

/// Score one confusion matrix into a report.
///
/// Per-class values are reported whenever the class union is nonempty; the
/// means run over the presence-policy classes. Under per-image aggregation
/// the caller supplies the per-image scores and the means are their averages.
pub fn compute_report(
    cm: &ConfusionMatrix,
    dm: &DistanceMatrix,
    hierarchy: &LabelHierarchy,
    cfg: &MetricConfig,
) -> Result<MetricReport, MetricsError> {
    check_compat(cm, dm, &cfg.important)?;
    check_nonempty(cm, cfg.presence)?;
    let ious = iou_per_class(cm);
    let safes = safe_iou_per_class(cm, dm, &cfg.important);
    let classes = mean_classes(cm, cfg.presence);
    let miou = mean_over(&ious, &classes)?;
    let smiou = mean_over(&safes, &classes)?;
    let per_class = (0..cm.num_classes())
        .map(|c| ClassScore {
            index: c,
            id: hierarchy.class_id(c).to_string(),
            display: hierarchy.class_display(c).to_string(),
            iou: ious[c],
            safe_iou: safes[c],
            in_mean: classes.contains(&c),
        })
        .collect();
    Ok(MetricReport {
        hierarchy: hierarchy.name().to_string(),
        classes: cm.num_classes(),
        n_levels: dm.n_levels(),
        important: cfg.important.indices(),
        presence: cfg.presence,
        aggregation: cfg.aggregation,
        per_class,
        miou,
        smiou,
        evaluated_classes: classes.len(),
        per_image: None,
        pairs_evaluated: 0,
        issues: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Directory evaluation
// ---------------------------------------------------------------------------

/// Settings for evaluating matched label-map trees.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub metric: MetricConfig,
    pub ignore: u16,
    /// Worker threads for decoding and accumulation; results are identical
    /// at any value.
    pub jobs: usize,
}

impl EvalOptions {
    pub fn new(metric: MetricConfig) -> Self {
        EvalOptions {
            metric,
            ignore: 255,
            jobs: 1,
        }
    }
}

/// Outcome of a directory-pair evaluation.
#[derive(Debug)]
pub struct PairsetOutcome {
    pub report: MetricReport,
    /// The merged dataset-level confusion matrix.
    pub confusion: ConfusionMatrix,
}

/// Label maps under `root`, as sorted root-relative paths.
pub fn list_label_maps(root: &Path) -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().is_file())
        .filter_map(|entry| {
            let rel = entry.path().strip_prefix(root).ok()?.to_path_buf();
            let ext = rel.extension()?.to_str()?.to_ascii_lowercase();
            matches!(ext.as_str(), "png" | "raw" | "bin").then_some(rel)
        })
        .collect();
    paths.sort();
    paths
}

/// Evaluate every ground-truth/prediction pair matched by identical relative
/// path under the two roots.
///
/// Decode failures and unmatched files are collected as issues and the run
/// continues; the caller decides whether issues make the run fail. Image
/// pairs are processed concurrently (`opts.jobs`) and reduced by matrix
/// merging, so the merged counts are exact and independent of scheduling.
pub fn evaluate_pairset(
    gt_root: &Path,
    pred_root: &Path,
    hierarchy: &LabelHierarchy,
    dm: &DistanceMatrix,
    opts: &EvalOptions,
) -> Result<PairsetOutcome, MetricsError> {
    if !gt_root.is_dir() {
        return Err(MetricsError::BadGtRoot(gt_root.to_path_buf()));
    }
    if !pred_root.is_dir() {
        return Err(MetricsError::BadPredRoot(pred_root.to_path_buf()));
    }

    let gt_files = list_label_maps(gt_root);
    if gt_files.is_empty() {
        return Err(MetricsError::EmptyPairSet(gt_root.to_path_buf()));
    }
    let pred_files = list_label_maps(pred_root);

    let mut issues: Vec<FileIssue> = Vec::new();
    let gt_set: std::collections::BTreeSet<_> = gt_files.iter().cloned().collect();
    for extra in pred_files.iter().filter(|p| !gt_set.contains(*p)) {
        issues.push(FileIssue {
            path: display_path(extra),
            message: "prediction file has no ground-truth counterpart".to_string(),
        });
    }

    let k = hierarchy.num_classes();
    let per_image_mode = opts.metric.aggregation == Aggregation::PerImageMean;

    struct PairResult {
        rel: PathBuf,
        cm: Option<ConfusionMatrix>,
        issue: Option<String>,
    }

    let eval_one = |rel: &PathBuf| -> PairResult {
        let gt_path = gt_root.join(rel);
        let pred_path = pred_root.join(rel);
        if !pred_path.is_file() {
            return PairResult {
                rel: rel.clone(),
                cm: None,
                issue: Some("ground-truth file has no prediction counterpart".to_string()),
            };
        }
        let gt = match decode_label_map_auto(&gt_path) {
            Ok(map) => map,
            Err(e) => {
                return PairResult {
                    rel: rel.clone(),
                    cm: None,
                    issue: Some(e.to_string()),
                }
            }
        };
        let pred = match decode_label_map_auto(&pred_path) {
            Ok(map) => map,
            Err(e) => {
                return PairResult {
                    rel: rel.clone(),
                    cm: None,
                    issue: Some(e.to_string()),
                }
            }
        };
        match accumulate(&gt, &pred, k, opts.ignore) {
            Ok(cm) => PairResult {
                rel: rel.clone(),
                cm: Some(cm),
                issue: None,
            },
            Err(e) => PairResult {
                rel: rel.clone(),
                cm: None,
                issue: Some(e.to_string()),
            },
        }
    };

    let results: Vec<PairResult> = if opts.jobs <= 1 {
        gt_files.iter().map(eval_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .expect("thread pool construction");
        pool.install(|| gt_files.par_iter().map(eval_one).collect())
    };

    let mut merged = ConfusionMatrix::zero(k);
    let mut per_image: Vec<ImageScore> = Vec::new();
    let mut pairs = 0usize;
    for result in &results {
        match (&result.cm, &result.issue) {
            (Some(cm), None) => {
                pairs += 1;
                merged.merge_from(cm)?;
                if per_image_mode {
                    let classes = mean_classes(cm, opts.metric.presence);
                    if classes.is_empty() || cm.total() == 0 {
                        issues.push(FileIssue {
                            path: display_path(&result.rel),
                            message: "image has no evaluated pixels; skipped in per-image means"
                                .to_string(),
                        });
                        continue;
                    }
                    let miou = mean_over(&iou_per_class(cm), &classes)?;
                    let smiou =
                        mean_over(&safe_iou_per_class(cm, dm, &opts.metric.important), &classes)?;
                    per_image.push(ImageScore {
                        path: display_path(&result.rel),
                        miou,
                        smiou,
                        present_classes: classes.len(),
                    });
                }
            }
            (_, Some(message)) => issues.push(FileIssue {
                path: display_path(&result.rel),
                message: message.clone(),
            }),
            (None, None) => unreachable!("every pair yields a matrix or an issue"),
        }
    }

    let mut report = compute_report(&merged, dm, hierarchy, &opts.metric)?;
    if per_image_mode {
        per_image.sort_by(|a, b| a.path.cmp(&b.path));
        if per_image.is_empty() {
            return Err(MetricsError::NoClassesPresent);
        }
        report.miou = per_image.iter().map(|s| s.miou).sum::<f64>() / per_image.len() as f64;
        report.smiou = per_image.iter().map(|s| s.smiou).sum::<f64>() / per_image.len() as f64;
        report.per_image = Some(per_image);
    }
    issues.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.message.cmp(&b.message)));
    report.pairs_evaluated = pairs;
    report.issues = issues;
    Ok(PairsetOutcome {
        report,
        confusion: merged,
    })
}

fn display_path(path: &Path) -> String {
    // Forward slashes keep reports byte-identical across platforms.
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
