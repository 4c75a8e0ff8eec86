//! Train/test split validation and seeded split search.
//!
//! A [`DatasetManifest`] lists drive sequences (the atomic unit of
//! assignment: a sequence is entirely train or entirely test), each tagged
//! with a weather condition and carrying per-frame per-class pixel and
//! instance counts. [`validate_split`] checks an assignment against the
//! constraint windows, all boundaries inclusive:
//!
//! * **C1** — per condition, test sequences / total sequences in `[0.18, 0.22]`.
//! * **C2** — average frames per test sequence / average frames per sequence
//!   in `[0.9, 1.2]`.
//! * **C3** — per class, average instances per test image / average instances
//!   per image overall in `[0.8, 1.2]`.
//! * **C4** — per class, the analogous pixel ratio; at least 18 classes must
//!   land in `[0.8, 1.2]` and at least 22 in `[0.7, 1.3]`.
//!
//! C2–C4 are global by default and can be scoped per condition. Classes with
//! no pixels (or instances) anywhere cannot form a ratio; they are skipped
//! and reported. [`propose_split`] searches for a passing assignment with
//! seeded random restarts and first-improvement hill climbing over
//! single-sequence swaps; results are deterministic for a fixed seed.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("frame id `{0}` appears more than once")]
    DuplicateFrame(String),
    #[error("sequence `{0}` appears with two different conditions")]
    InconsistentCondition(String),
    #[error("row for frame `{frame}` has {actual} class statistics, manifest uses {expected}")]
    ClassCountMismatch {
        frame: String,
        actual: usize,
        expected: usize,
    },
    #[error("assignment is missing sequence `{0}`")]
    MissingSequence(String),
    #[error("assignment references unknown sequence `{0}`")]
    UnknownSequence(String),
    #[error("unknown condition `{0}` (expected rain, fog, lowlight, or snow)")]
    UnknownCondition(String),
    #[error("unknown split side `{0}` (expected train or test)")]
    UnknownSide(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four captured weather conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Rain,
    Fog,
    Lowlight,
    Snow,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Rain,
        Condition::Fog,
        Condition::Lowlight,
        Condition::Snow,
    ];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Condition::Rain => "rain",
            Condition::Fog => "fog",
            Condition::Lowlight => "lowlight",
            Condition::Snow => "snow",
        };
        f.write_str(name)
    }
}

impl FromStr for Condition {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rain" => Ok(Condition::Rain),
            "fog" => Ok(Condition::Fog),
            "lowlight" => Ok(Condition::Lowlight),
            "snow" => Ok(Condition::Snow),
            other => Err(SplitError::UnknownCondition(other.to_string())),
        }
    }
}

/// Per-frame statistics: pixel and instance counts for each class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameStats {
    pub id: String,
    pub pixels: Vec<u64>,
    pub instances: Vec<u64>,
}

/// One drive sequence: the atomic unit of train/test assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sequence {
    pub id: String,
    pub condition: Condition,
    pub frames: Vec<FrameStats>,
}

/// Sequences with per-frame per-class statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: usize,
    pub sequences: Vec<Sequence>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.sequences.is_empty() {
            return Err(SplitError::EmptyManifest);
        }
        let mut seen_frames = std::collections::BTreeSet::new();
        let mut seen_sequences = std::collections::BTreeSet::new();
        for sequence in &self.sequences {
            if !seen_sequences.insert(&sequence.id) {
                return Err(SplitError::InconsistentCondition(sequence.id.clone()));
            }
            for frame in &sequence.frames {
                if !seen_frames.insert(&frame.id) {
                    return Err(SplitError::DuplicateFrame(frame.id.clone()));
                }
                for stats in [&frame.pixels, &frame.instances] {
                    if stats.len() != self.classes {
                        return Err(SplitError::ClassCountMismatch {
                            frame: frame.id.clone(),
                            actual: stats.len(),
                            expected: self.classes,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Parse from JSON (`{"classes": K, "sequences": [...]}`).
    pub fn from_json(reader: impl Read) -> Result<Self, SplitError> {
        let manifest: DatasetManifest = serde_json::from_reader(reader)?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Parse from CSV with one row per frame and the columns
    /// `sequence_id,condition,frame_id,pixel_count_0..,instance_count_0..`.
    ///
    /// The class count K is inferred from the header; sequences are emitted
    /// in order of first appearance.
    pub fn from_csv(reader: impl Read) -> Result<Self, SplitError> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv.headers()?.clone();
        let mut pixel_cols = Vec::new();
        let mut instance_cols = Vec::new();
        let mut seq_col = None;
        let mut cond_col = None;
        let mut frame_col = None;
        for (i, name) in headers.iter().enumerate() {
            match name {
                "sequence_id" => seq_col = Some(i),
                "condition" => cond_col = Some(i),
                "frame_id" => frame_col = Some(i),
                _ => {
                    if let Some(idx) = name.strip_prefix("pixel_count_") {
                        let idx: usize = idx
                            .parse()
                            .map_err(|_| SplitError::Parse(format!("bad column `{name}`")))?;
                        pixel_cols.push((idx, i));
                    } else if let Some(idx) = name.strip_prefix("instance_count_") {
                        let idx: usize = idx
                            .parse()
                            .map_err(|_| SplitError::Parse(format!("bad column `{name}`")))?;
                        instance_cols.push((idx, i));
                    } else {
                        return Err(SplitError::Parse(format!("unknown column `{name}`")));
                    }
                }
            }
        }
        let (seq_col, cond_col, frame_col) = match (seq_col, cond_col, frame_col) {
            (Some(s), Some(c), Some(f)) => (s, c, f),
            _ => {
                return Err(SplitError::Parse(
                    "missing one of sequence_id, condition, frame_id columns".to_string(),
                ))
            }
        };
        pixel_cols.sort_unstable();
        instance_cols.sort_unstable();
        let classes = pixel_cols.len();
        let contiguous = |cols: &[(usize, usize)]| cols.iter().enumerate().all(|(i, &(k, _))| i == k);
        if classes == 0
            || instance_cols.len() != classes
            || !contiguous(&pixel_cols)
            || !contiguous(&instance_cols)
        {
            return Err(SplitError::Parse(
                "pixel_count_k/instance_count_k columns must cover 0..K for the same K".to_string(),
            ));
        }

        let mut order: Vec<String> = Vec::new();
        let mut by_seq: BTreeMap<String, Sequence> = BTreeMap::new();
        for row in csv.records() {
            let row = row?;
            let get = |col: usize| -> Result<&str, SplitError> {
                row.get(col)
                    .ok_or_else(|| SplitError::Parse("short row".to_string()))
            };
            let seq_id = get(seq_col)?.to_string();
            let condition: Condition = get(cond_col)?.parse()?;
            let frame_id = get(frame_col)?.to_string();
            let parse_counts = |cols: &[(usize, usize)]| -> Result<Vec<u64>, SplitError> {
                cols.iter()
                    .map(|&(_, col)| {
                        get(col)?.parse::<u64>().map_err(|_| {
                            SplitError::Parse(format!(
                                "frame `{frame_id}`: invalid count `{}`",
                                row.get(col).unwrap_or("")
                            ))
                        })
                    })
                    .collect()
            };
            let pixels = parse_counts(&pixel_cols)?;
            let instances = parse_counts(&instance_cols)?;
            let frame = FrameStats {
                id: frame_id,
                pixels,
                instances,
            };
            match by_seq.get_mut(&seq_id) {
                Some(sequence) => {
                    if sequence.condition != condition {
                        return Err(SplitError::InconsistentCondition(seq_id));
                    }
                    sequence.frames.push(frame);
                }
                None => {
                    order.push(seq_id.clone());
                    by_seq.insert(
                        seq_id.clone(),
                        Sequence {
                            id: seq_id,
                            condition,
                            frames: vec![frame],
                        },
                    );
                }
            }
        }
        let sequences = order
            .into_iter()
            .map(|id| by_seq.remove(&id).expect("sequence recorded"))
            .collect();
        let manifest = DatasetManifest { classes, sequences };
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Which side of the split a sequence lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSide {
    Train,
    Test,
}

impl fmt::Display for SplitSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitSide::Train => "train",
            SplitSide::Test => "test",
        })
    }
}

impl FromStr for SplitSide {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitSide::Train),
            "test" => Ok(SplitSide::Test),
            other => Err(SplitError::UnknownSide(other.to_string())),
        }
    }
}

/// A total assignment of sequences to train or test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    sides: BTreeMap<String, SplitSide>,
}

impl SplitAssignment {
    pub fn new(sides: impl IntoIterator<Item = (String, SplitSide)>) -> Self {
        SplitAssignment {
            sides: sides.into_iter().collect(),
        }
    }

    pub fn side(&self, sequence_id: &str) -> Option<SplitSide> {
        self.sides.get(sequence_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SplitSide)> {
        self.sides.iter().map(|(id, &side)| (id.as_str(), side))
    }

    /// Two-column CSV: `sequence_id,split`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence_id,split\n");
        for (id, side) in self.iter() {
            out.push_str(id);
            out.push(',');
            out.push_str(&side.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(reader: impl Read) -> Result<Self, SplitError> {
        let mut csv = csv::Reader::from_reader(reader);
        let mut sides = BTreeMap::new();
        for row in csv.records() {
            let row = row?;
            let id = row
                .get(0)
                .ok_or_else(|| SplitError::Parse("short row".to_string()))?;
            let side: SplitSide = row
                .get(1)
                .ok_or_else(|| SplitError::Parse("short row".to_string()))?
                .parse()?;
            sides.insert(id.to_string(), side);
        }
        Ok(SplitAssignment { sides })
    }
}

/// Options controlling constraint scope and thresholds.
#[derive(Debug, Clone)]
pub struct SplitOptions {
    /// Evaluate C2–C4 within each condition instead of globally.
    pub per_condition: bool,
    /// Evaluate C3 on total instances across classes instead of per class.
    pub c3_aggregate: bool,
    /// Minimum classes whose pixel ratio must sit in `[0.8, 1.2]`.
    pub c4_strict_min: usize,
    /// Minimum classes whose pixel ratio must sit in `[0.7, 1.3]`.
    pub c4_loose_min: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            per_condition: false,
            c3_aggregate: false,
            c4_strict_min: 18,
            c4_loose_min: 22,
        }
    }
}

pub const C1_WINDOW: (f64, f64) = (0.18, 0.22);
pub const C2_WINDOW: (f64, f64) = (0.9, 1.2);
pub const C3_WINDOW: (f64, f64) = (0.8, 1.2);
pub const C4_STRICT_WINDOW: (f64, f64) = (0.8, 1.2);
pub const C4_LOOSE_WINDOW: (f64, f64) = (0.7, 1.3);

/// One evaluated constraint.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintResult {
    pub name: String,
    pub scope: String,
    pub measured: f64,
    pub window: (f64, f64),
    pub pass: bool,
    /// Informational entries do not affect the overall verdict.
    pub required: bool,
}

/// Outcome of validating one assignment.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    pub constraints: Vec<ConstraintResult>,
    /// Classes with no pixels or instances anywhere: no ratio can be formed.
    pub skipped_classes: Vec<usize>,
    pub pass: bool,
}

impl ConstraintReport {
    pub fn to_json(&self) -> Result<String, SplitError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

fn in_window(v: f64, window: (f64, f64)) -> bool {
    v >= window.0 && v <= window.1
}

/// Evaluate every constraint window for `assignment` over `manifest`.
pub fn validate_split(
    manifest: &DatasetManifest,
    assignment: &SplitAssignment,
    opts: &SplitOptions,
) -> Result<ConstraintReport, SplitError> {
    manifest.validate()?;
    for sequence in &manifest.sequences {
        if assignment.side(&sequence.id).is_none() {
            return Err(SplitError::MissingSequence(sequence.id.clone()));
        }
    }
    for (id, _) in assignment.iter() {
        if !manifest.sequences.iter().any(|s| s.id == id) {
            return Err(SplitError::UnknownSequence(id.to_string()));
        }
    }

    let mut constraints = Vec::new();

    // C1: per-condition test-sequence share.
    for condition in Condition::ALL {
        let total = manifest
            .sequences
            .iter()
            .filter(|s| s.condition == condition)
            .count();
        if total == 0 {
            continue;
        }
        let test = manifest
            .sequences
            .iter()
            .filter(|s| {
                s.condition == condition && assignment.side(&s.id) == Some(SplitSide::Test)
            })
            .count();
        let measured = test as f64 / total as f64;
        constraints.push(ConstraintResult {
            name: "C1_test_sequence_share".to_string(),
            scope: format!("condition:{condition}"),
            measured,
            window: C1_WINDOW,
            pass: in_window(measured, C1_WINDOW),
            required: true,
        });
    }

    let mut skipped = std::collections::BTreeSet::new();
    if opts.per_condition {
        for condition in Condition::ALL {
            let scope: Vec<&Sequence> = manifest
                .sequences
                .iter()
                .filter(|s| s.condition == condition)
                .collect();
            if scope.is_empty() {
                continue;
            }
            scoped_constraints(
                &scope,
                assignment,
                manifest.classes,
                &format!("condition:{condition}"),
                opts,
                &mut constraints,
                &mut skipped,
            );
        }
    } else {
        let scope: Vec<&Sequence> = manifest.sequences.iter().collect();
        scoped_constraints(
            &scope,
            assignment,
            manifest.classes,
            "global",
            opts,
            &mut constraints,
            &mut skipped,
        );
    }

    let pass = constraints.iter().all(|c| !c.required || c.pass);
    Ok(ConstraintReport {
        constraints,
        skipped_classes: skipped.into_iter().collect(),
        pass,
    })
}

fn scoped_constraints(
    sequences: &[&Sequence],
    assignment: &SplitAssignment,
    classes: usize,
    scope: &str,
    opts: &SplitOptions,
    constraints: &mut Vec<ConstraintResult>,
    skipped: &mut std::collections::BTreeSet<usize>,
) {
    let test: Vec<&&Sequence> = sequences
        .iter()
        .filter(|s| assignment.side(&s.id) == Some(SplitSide::Test))
        .collect();

    // C2: frames per test sequence vs frames per sequence overall.
    let all_frames: usize = sequences.iter().map(|s| s.frames.len()).sum();
    let test_frames: usize = test.iter().map(|s| s.frames.len()).sum();
    if !test.is_empty() && !sequences.is_empty() && all_frames > 0 {
        let avg_all = all_frames as f64 / sequences.len() as f64;
        let avg_test = test_frames as f64 / test.len() as f64;
        let measured = avg_test / avg_all;
        constraints.push(ConstraintResult {
            name: "C2_frames_per_sequence_ratio".to_string(),
            scope: scope.to_string(),
            measured,
            window: C2_WINDOW,
            pass: in_window(measured, C2_WINDOW),
            required: true,
        });
    } else {
        constraints.push(ConstraintResult {
            name: "C2_frames_per_sequence_ratio".to_string(),
            scope: scope.to_string(),
            measured: f64::NAN,
            window: C2_WINDOW,
            pass: false,
            required: true,
        });
    }

    let sum_class =
        |seqs: &[&&Sequence], pick: fn(&FrameStats) -> &Vec<u64>, class: usize| -> u64 {
            seqs.iter()
                .flat_map(|s| s.frames.iter())
                .map(|f| pick(f)[class])
                .sum()
        };
    let all_refs: Vec<&&Sequence> = sequences.iter().collect();

    // C3: average instances per image, test vs overall.
    if opts.c3_aggregate {
        let overall: u64 = (0..classes)
            .map(|k| sum_class(&all_refs, |f| &f.instances, k))
            .sum();
        let test_total: u64 = (0..classes)
            .map(|k| sum_class(&test, |f| &f.instances, k))
            .sum();
        push_ratio_constraint(
            constraints,
            "C3_instances_per_image_ratio",
            scope.to_string(),
            test_total,
            test_frames,
            overall,
            all_frames,
            C3_WINDOW,
        );
    } else {
        for class in 0..classes {
            let overall = sum_class(&all_refs, |f| &f.instances, class);
            if overall == 0 {
                skipped.insert(class);
                continue;
            }
            let test_total = sum_class(&test, |f| &f.instances, class);
            push_ratio_constraint(
                constraints,
                "C3_instances_per_image_ratio",
                format!("{scope}/class:{class}"),
                test_total,
                test_frames,
                overall,
                all_frames,
                C3_WINDOW,
            );
        }
    }

    // C4: per-class pixel ratio, counted against the two windows.
    let mut strict = 0usize;
    let mut loose = 0usize;
    for class in 0..classes {
        let overall = sum_class(&all_refs, |f| &f.pixels, class);
        if overall == 0 {
            skipped.insert(class);
            continue;
        }
        let test_total = sum_class(&test, |f| &f.pixels, class);
        let measured = ratio(test_total, test_frames, overall, all_frames);
        let strict_ok = in_window(measured, C4_STRICT_WINDOW);
        let loose_ok = in_window(measured, C4_LOOSE_WINDOW);
        strict += usize::from(strict_ok);
        loose += usize::from(loose_ok);
        constraints.push(ConstraintResult {
            name: "C4_pixels_per_image_ratio".to_string(),
            scope: format!("{scope}/class:{class}"),
            measured,
            window: C4_LOOSE_WINDOW,
            pass: loose_ok,
            required: false,
        });
    }
    constraints.push(ConstraintResult {
        name: "C4_classes_within_strict_window".to_string(),
        scope: scope.to_string(),
        measured: strict as f64,
        window: (opts.c4_strict_min as f64, f64::INFINITY),
        pass: strict >= opts.c4_strict_min,
        required: true,
    });
    constraints.push(ConstraintResult {
        name: "C4_classes_within_loose_window".to_string(),
        scope: scope.to_string(),
        measured: loose as f64,
        window: (opts.c4_loose_min as f64, f64::INFINITY),
        pass: loose >= opts.c4_loose_min,
        required: true,
    });
}

fn ratio(test_total: u64, test_frames: usize, overall: u64, all_frames: usize) -> f64 {
    if test_frames == 0 || all_frames == 0 || overall == 0 {
        return f64::NAN;
    }
    let avg_test = test_total as f64 / test_frames as f64;
    let avg_all = overall as f64 / all_frames as f64;
    avg_test / avg_all
}

#[allow(clippy::too_many_arguments)]
fn push_ratio_constraint(
    constraints: &mut Vec<ConstraintResult>,
    name: &str,
    scope: String,
    test_total: u64,
    test_frames: usize,
    overall: u64,
    all_frames: usize,
    window: (f64, f64),
) {
    let measured = ratio(test_total, test_frames, overall, all_frames);
    constraints.push(ConstraintResult {
        name: name.to_string(),
        scope,
        measured,
        window,
        pass: measured.is_finite() && in_window(measured, window),
        required: true,
    });
}

// ---------------------------------------------------------------------------
// Split search
// ---------------------------------------------------------------------------

/// Total violation distance of the required constraints; zero means passing.
fn violation_score(report: &ConstraintReport) -> f64 {
    report
        .constraints
        .iter()
        .filter(|c| c.required)
        .map(|c| {
            if c.measured.is_nan() {
                return 1.0;
            }
            if c.window.1.is_infinite() {
                // count constraint: normalized shortfall
                return (c.window.0 - c.measured).max(0.0) / c.window.0.max(1.0);
            }
            (c.window.0 - c.measured).max(0.0) + (c.measured - c.window.1).max(0.0)
        })
        .sum()
}

/// Feasible per-condition test-set sizes under C1; falls back to the closest
/// count when the window holds no integer (fewer than 5 sequences).
fn test_count_range(total: usize) -> (usize, usize, bool) {
    let lo = (C1_WINDOW.0 * total as f64).ceil() as usize;
    let hi = (C1_WINDOW.1 * total as f64).floor() as usize;
    if lo <= hi && hi >= 1 {
        (lo.max(1), hi, true)
    } else {
        // no integer count satisfies C1; aim for the nearest share
        let nearest = ((0.2 * total as f64).round() as usize).clamp(1, total.saturating_sub(1).max(1));
        (nearest, nearest, false)
    }
}

/// Search outcome: the best assignment found and its validation report.
#[derive(Debug)]
pub struct ProposedSplit {
    pub assignment: SplitAssignment,
    pub report: ConstraintReport,
    /// Conditions whose sequence count makes C1 unsatisfiable.
    pub infeasible_conditions: Vec<Condition>,
    pub iterations_used: usize,
    pub restarts: usize,
}

/// Seeded randomized-restart search for a constraint-satisfying assignment.
///
/// Each restart samples per-condition test sets within the C1 counts and hill
/// climbs by single-sequence swaps (and occasional resizes within the C1
/// window), scored by total window violation. Returns the best assignment
/// found even when no passing one exists, flagged by the report.
pub fn propose_split(
    manifest: &DatasetManifest,
    seed: u64,
    max_iterations: usize,
    opts: &SplitOptions,
) -> Result<ProposedSplit, SplitError> {
    manifest.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);

    // Sequence indices per condition, in manifest order.
    let mut per_condition: BTreeMap<Condition, Vec<usize>> = BTreeMap::new();
    for (i, sequence) in manifest.sequences.iter().enumerate() {
        per_condition.entry(sequence.condition).or_default().push(i);
    }
    let infeasible_conditions: Vec<Condition> = per_condition
        .iter()
        .filter(|(_, seqs)| !test_count_range(seqs.len()).2)
        .map(|(&c, _)| c)
        .collect();

    let assignment_of = |test_flags: &[bool]| -> SplitAssignment {
        SplitAssignment::new(manifest.sequences.iter().enumerate().map(|(i, s)| {
            let side = if test_flags[i] {
                SplitSide::Test
            } else {
                SplitSide::Train
            };
            (s.id.clone(), side)
        }))
    };
    let score_of = |test_flags: &[bool]| -> Result<f64, SplitError> {
        let report = validate_split(manifest, &assignment_of(test_flags), opts)?;
        Ok(violation_score(&report))
    };

    let sample = |rng: &mut StdRng| -> Vec<bool> {
        let mut flags = vec![false; manifest.sequences.len()];
        for seqs in per_condition.values() {
            let (lo, hi, _) = test_count_range(seqs.len());
            let count = if lo >= hi { lo } else { rng.random_range(lo..=hi) }.min(seqs.len());
            let mut pool = seqs.clone();
            pool.shuffle(rng);
            for &i in pool.iter().take(count) {
                flags[i] = true;
            }
        }
        flags
    };

    let mut iterations = 0usize;
    let mut restarts = 0usize;
    let mut best_flags: Option<Vec<bool>> = None;
    let mut best_score = f64::INFINITY;

    'search: while iterations < max_iterations {
        restarts += 1;
        let mut flags = sample(&mut rng);
        iterations += 1;
        let mut score = score_of(&flags)?;
        if score < best_score {
            best_score = score;
            best_flags = Some(flags.clone());
            if score == 0.0 {
                break 'search;
            }
        }

        // First-improvement hill climbing over single-sequence swaps.
        let stall_limit = 64 * per_condition.len().max(1);
        let mut stalled = 0usize;
        while stalled < stall_limit && iterations < max_iterations {
            let conditions: Vec<&Vec<usize>> = per_condition.values().collect();
            let seqs = conditions[rng.random_range(0..conditions.len())];
            let test: Vec<usize> = seqs.iter().copied().filter(|&i| flags[i]).collect();
            let train: Vec<usize> = seqs.iter().copied().filter(|&i| !flags[i]).collect();
            if test.is_empty() || train.is_empty() {
                stalled += 1;
                continue;
            }
            let out = test[rng.random_range(0..test.len())];
            let inn = train[rng.random_range(0..train.len())];
            flags[out] = false;
            flags[inn] = true;
            iterations += 1;
            let candidate = score_of(&flags)?;
            if candidate < score {
                score = candidate;
                stalled = 0;
                if score < best_score {
                    best_score = score;
                    best_flags = Some(flags.clone());
                    if score == 0.0 {
                        break 'search;
                    }
                }
            } else {
                flags[out] = true;
                flags[inn] = false;
                stalled += 1;
            }
        }
    }

    let flags = best_flags.expect("at least one restart sampled");
    let assignment = assignment_of(&flags);
    let report = validate_split(manifest, &assignment, opts)?;
    Ok(ProposedSplit {
        assignment,
        report,
        infeasible_conditions,
        iterations_used: iterations,
        restarts,
    })
}
