//! Frame curation: repetitive-frame filtering and RGB/NIR timestamp pairing.
//!
//! [`dedup_frames`] keeps a frame when at least `threshold` seconds have
//! passed since the *last kept* frame of the same stream (the first frame is
//! always kept, the threshold is inclusive). [`match_pairs`] walks two sorted
//! logs once and pairs each reference frame with its nearest-by-timestamp
//! unconsumed candidate, bounded by a maximum skew; equidistant candidates
//! resolve to the earlier one. Unmatched frames are reported, not dropped
//! silently.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("frame log is not sorted: `{frame}` at {timestamp}s precedes the previous {stream} frame")]
    Unsorted {
        frame: String,
        timestamp: f64,
        stream: Stream,
    },
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
    #[error("max skew must be non-negative, got {0}")]
    NegativeSkew(f64),
    #[error("frame log parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which sensor stream a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Rgb,
    Nir,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stream::Rgb => "rgb",
            Stream::Nir => "nir",
        })
    }
}

impl FromStr for Stream {
    type Err = PairingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rgb" => Ok(Stream::Rgb),
            "nir" => Ok(Stream::Nir),
            other => Err(PairingError::Parse(format!("unknown stream `{other}`"))),
        }
    }
}

/// One captured frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub timestamp: f64,
    pub stream: Stream,
}

/// An ordered capture log; timestamps must be non-decreasing per stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameLog {
    pub frames: Vec<FrameRecord>,
}

impl FrameLog {
    pub fn new(frames: Vec<FrameRecord>) -> Self {
        FrameLog { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames of one stream, in log order.
    pub fn stream(&self, stream: Stream) -> FrameLog {
        FrameLog {
            frames: self
                .frames
                .iter()
                .filter(|f| f.stream == stream)
                .cloned()
                .collect(),
        }
    }

    fn check_sorted_per_stream(&self) -> Result<(), PairingError> {
        let mut last: [Option<f64>; 2] = [None, None];
        for frame in &self.frames {
            let slot = frame.stream as usize;
            if let Some(prev) = last[slot] {
                if frame.timestamp < prev {
                    return Err(PairingError::Unsorted {
                        frame: frame.id.clone(),
                        timestamp: frame.timestamp,
                        stream: frame.stream,
                    });
                }
            }
            last[slot] = Some(frame.timestamp);
        }
        Ok(())
    }

    /// Parse CSV with columns `frame_id,unix_timestamp_seconds,stream`.
    pub fn from_csv(reader: impl Read) -> Result<Self, PairingError> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv.headers()?.clone();
        let col = |name: &str| -> Result<usize, PairingError> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| PairingError::Parse(format!("missing column `{name}`")))
        };
        let id_col = col("frame_id")?;
        let ts_col = col("unix_timestamp_seconds")?;
        let stream_col = col("stream")?;
        let mut frames = Vec::new();
        for row in csv.records() {
            let row = row?;
            let get = |c: usize| -> Result<&str, PairingError> {
                row.get(c)
                    .ok_or_else(|| PairingError::Parse("short row".to_string()))
            };
            let id = get(id_col)?.to_string();
            let timestamp: f64 = get(ts_col)?
                .parse()
                .map_err(|_| PairingError::Parse(format!("frame `{id}`: bad timestamp")))?;
            let stream: Stream = get(stream_col)?.parse()?;
            frames.push(FrameRecord {
                id,
                timestamp,
                stream,
            });
        }
        Ok(FrameLog { frames })
    }

    /// CSV with the same columns accepted by [`FrameLog::from_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_id,unix_timestamp_seconds,stream\n");
        for frame in &self.frames {
            out.push_str(&format!(
                "{},{},{}\n",
                frame.id, frame.timestamp, frame.stream
            ));
        }
        out
    }
}

/// Greedy repetitive-frame filter.
///
/// Scans each stream in order and keeps a frame exactly when at least
/// `threshold` seconds (inclusive) have elapsed since the last kept frame of
/// that stream; the first frame of each stream is always kept. Idempotent:
/// filtering an already-filtered log changes nothing.
pub fn dedup_frames(log: &FrameLog, threshold: f64) -> Result<FrameLog, PairingError> {
    if threshold < 0.0 || threshold.is_nan() {
        return Err(PairingError::NegativeThreshold(threshold));
    }
    log.check_sorted_per_stream()?;
    let mut last_kept: [Option<f64>; 2] = [None, None];
    let mut kept = Vec::new();
    for frame in &log.frames {
        let slot = frame.stream as usize;
        let keep = match last_kept[slot] {
            None => true,
            Some(prev) => frame.timestamp - prev >= threshold,
        };
        if keep {
            last_kept[slot] = Some(frame.timestamp);
            kept.push(frame.clone());
        }
    }
    Ok(FrameLog { frames: kept })
}

/// One matched RGB/NIR pair; `skew` is `nir_timestamp - rgb_timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePair {
    pub rgb_id: String,
    pub nir_id: String,
    pub skew: f64,
}

/// Matched pairs plus the frames that found no partner.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PairManifest {
    pub pairs: Vec<FramePair>,
    pub unmatched_rgb: Vec<String>,
    pub unmatched_nir: Vec<String>,
}

impl PairManifest {
    /// CSV with columns `rgb_frame_id,nir_frame_id,skew_seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rgb_frame_id,nir_frame_id,skew_seconds\n");
        for pair in &self.pairs {
            out.push_str(&format!("{},{},{}\n", pair.rgb_id, pair.nir_id, pair.skew));
        }
        out
    }

    /// CSV of unmatched frames: `frame_id,stream`.
    pub fn unmatched_csv(&self) -> String {
        let mut out = String::from("frame_id,stream\n");
        for id in &self.unmatched_rgb {
            out.push_str(&format!("{id},rgb\n"));
        }
        for id in &self.unmatched_nir {
            out.push_str(&format!("{id},nir\n"));
        }
        out
    }
}

/// One-to-one nearest-timestamp matching between two sorted logs.
///
/// A single forward scan pairs each frame of `rgb` with the nearest
/// unconsumed frame of `nir` whose absolute skew is at most `max_skew`.
/// When two candidates are equally close, the earlier NIR frame wins.
pub fn match_pairs(
    rgb: &FrameLog,
    nir: &FrameLog,
    max_skew: f64,
) -> Result<PairManifest, PairingError> {
    if max_skew < 0.0 || max_skew.is_nan() {
        return Err(PairingError::NegativeSkew(max_skew));
    }
    rgb.check_sorted_per_stream()?;
    nir.check_sorted_per_stream()?;

    let nirs = &nir.frames;
    let mut used = vec![false; nirs.len()];
    let mut manifest = PairManifest::default();
    let mut start = 0usize;

    for frame in &rgb.frames {
        // Candidates older than (t - max_skew) can never match this or any
        // later reference frame.
        while start < nirs.len()
            && (used[start] || nirs[start].timestamp < frame.timestamp - max_skew)
        {
            start += 1;
        }
        let mut below: Option<usize> = None;
        let mut k = start;
        while k < nirs.len() && nirs[k].timestamp <= frame.timestamp {
            if !used[k] {
                below = Some(k);
            }
            k += 1;
        }
        let above = (k..nirs.len()).find(|&i| !used[i]);
        let chosen = match (below, above) {
            (Some(b), Some(a)) => {
                let db = frame.timestamp - nirs[b].timestamp;
                let da = nirs[a].timestamp - frame.timestamp;
                // tie resolves to the earlier candidate
                if db <= da {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (Some(b), None) => Some(b),
            (None, Some(a)) => Some(a),
            (None, None) => None,
        };
        match chosen {
            Some(i) if (nirs[i].timestamp - frame.timestamp).abs() <= max_skew => {
                used[i] = true;
                manifest.pairs.push(FramePair {
                    rgb_id: frame.id.clone(),
                    nir_id: nirs[i].id.clone(),
                    skew: nirs[i].timestamp - frame.timestamp,
                });
            }
            _ => manifest.unmatched_rgb.push(frame.id.clone()),
        }
    }
    manifest.unmatched_nir = nirs
        .iter()
        .zip(&used)
        .filter_map(|(f, &u)| (!u).then(|| f.id.clone()))
        .collect();
    Ok(manifest)
}
