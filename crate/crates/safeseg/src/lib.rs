//! Safety-aware semantic-segmentation evaluation.
//!
//! Standard mIoU treats every misprediction alike, but in drive scenes some
//! confusions are far more dangerous than others: a truck scored as a bus is
//! a nuisance, a person scored as road is not. This crate scores
//! segmentations against a label hierarchy so that each confusion is
//! penalized by how far apart the two labels sit in the taxonomy, yielding a
//! *safe mIoU* alongside the plain mean. It also ships the supporting
//! tooling that the same evaluation pipelines need:
//!
//! * [`hierarchy`] — label taxonomies, tree distances, the built-in IDD
//!   30-class configuration, and important-class presets.
//! * [`confusion`] — label-map decoding and exact, mergeable K×K pixel
//!   confusion counts (parallel map, monoid reduce).
//! * [`metrics`] — per-class IoU and safe IoU, dataset-level and per-image
//!   means, and directory-pair evaluation.
//! * [`splits`] — train/test split constraint validation and seeded
//!   randomized split search over drive sequences.
//! * [`pairing`] — repetitive-frame filtering and RGB/NIR timestamp pairing.
//! * [`report`] — JSON/CSV emitters, per-condition tables, and score
//!   histograms.
//!
//! ```
//! use safeseg::hierarchy::{DistanceMatrix, LabelHierarchy};
//! use safeseg::metrics::{safe_mean_iou, PresencePolicy};
//! use safeseg::confusion::{accumulate, LabelMap};
//!
//! let hierarchy = LabelHierarchy::idd();
//! let distances = DistanceMatrix::from_hierarchy(hierarchy);
//! assert_eq!(distances.get(hierarchy.class_index("truck")?, hierarchy.class_index("bus")?), 1);
//!
//! // A 2x2 image, ground truth all "road" (class 0), prediction half wrong.
//! let gt = LabelMap::new(2, 2, vec![0, 0, 0, 0])?;
//! let pred = LabelMap::new(2, 2, vec![0, 0, 3, 3])?;
//! let cm = accumulate(&gt, &pred, hierarchy.num_classes(), 255)?;
//! let smiou = safe_mean_iou(&cm, &distances, &hierarchy.important_default(),
//!                           PresencePolicy::ExcludeAbsent)?;
//! assert!(smiou < 0.5);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod confusion;
pub mod hierarchy;
pub mod metrics;
pub mod pairing;
pub mod report;
pub mod splits;

pub use confusion::{accumulate, decode_label_map, ConfusionMatrix, LabelMap, LabelMapFormat};
pub use hierarchy::{DistanceMatrix, ImportantClassSet, LabelHierarchy};
pub use metrics::{
    evaluate_pairset, mean_iou, safe_mean_iou, Aggregation, EvalOptions, MetricConfig,
    MetricReport, PresencePolicy,
};
pub use pairing::{dedup_frames, match_pairs, FrameLog, PairManifest};
pub use splits::{propose_split, validate_split, DatasetManifest, SplitAssignment, SplitOptions};
