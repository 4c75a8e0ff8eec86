//! Exact pixel confusion counts over ground-truth/prediction label maps.
//!
//! [`accumulate`] turns one image pair into a K×K [`ConfusionMatrix`] of
//! unsigned 64-bit pixel counts; [`ConfusionMatrix::merge`] combines matrices
//! entrywise. Merging is associative and commutative with the zero matrix as
//! identity, so a dataset can be processed as "parallel map over image pairs,
//! monoid reduce" and the result is identical at any parallelism degree.
//!
//! A pixel is excluded exactly when its *ground-truth* value equals the ignore
//! value; a prediction equal to the ignore value on a counted pixel is an
//! input error rather than a silent skip.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors from confusion accumulation and merging.
#[derive(Debug, Error)]
pub enum ConfusionError {
    #[error("label map dimensions differ: gt {gt_width}x{gt_height}, pred {pred_width}x{pred_height}")]
    DimensionMismatch {
        gt_width: u32,
        gt_height: u32,
        pred_width: u32,
        pred_height: u32,
    },
    #[error("ground-truth value {value} at pixel {pixel} is outside 0..{k} and is not the ignore value")]
    GtValueOutOfRange { value: u16, pixel: usize, k: usize },
    #[error("prediction value {value} at pixel {pixel} is outside 0..{k} and is not the ignore value")]
    PredValueOutOfRange { value: u16, pixel: usize, k: usize },
    #[error("prediction at pixel {pixel} equals the ignore value {ignore} on a counted pixel")]
    PredIsIgnore { pixel: usize, ignore: u16 },
    #[error("cannot merge confusion matrices with {left} and {right} classes")]
    ClassCountMismatch { left: usize, right: usize },
}

/// Errors from reading a label-map file.
#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Png {
        path: PathBuf,
        #[source]
        source: png::DecodingError,
    },
    #[error("{path}: color type {color:?} is not a single-channel class-index encoding (declare a color table or re-encode as grayscale/indexed)")]
    UnsupportedColorType { path: PathBuf, color: png::ColorType },
    #[error("{path}: unsupported bit depth {depth:?} (expected 8 or 16)")]
    UnsupportedBitDepth { path: PathBuf, depth: png::BitDepth },
    #[error("{path}: raw file holds {actual} bytes, expected {expected8} (8-bit) or {expected16} (16-bit little endian) for {width}x{height}")]
    BadRawSize {
        path: PathBuf,
        actual: u64,
        expected8: u64,
        expected16: u64,
        width: u32,
        height: u32,
    },
    #[error("{path}: missing or invalid sidecar dimensions file `{dims}` (expected a line `WIDTH HEIGHT`)")]
    BadSidecar { path: PathBuf, dims: PathBuf },
    #[error("{path}: image dimensions do not fit in memory")]
    ImageTooLarge { path: PathBuf },
    #[error("label map has zero width or height")]
    EmptyImage,
}

/// A decoded per-pixel class-index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    values: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, values: Vec<u16>) -> Result<Self, DecodeError> {
        if width == 0 || height == 0 {
            return Err(DecodeError::EmptyImage);
        }
        assert_eq!(
            values.len(),
            width as usize * height as usize,
            "value buffer must match dimensions"
        );
        Ok(LabelMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    /// Rows `rows.start..rows.end` as an independent map, used for tiled
    /// processing.
    pub fn row_slice(&self, rows: std::ops::Range<u32>) -> LabelMap {
        let start = rows.start.min(self.height) as usize * self.width as usize;
        let end = rows.end.min(self.height) as usize * self.width as usize;
        LabelMap {
            width: self.width,
            height: rows.end.min(self.height) - rows.start.min(self.height),
            values: self.values[start..end].to_vec(),
        }
    }
}

/// Declared on-disk encoding of a label map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelMapFormat {
    /// Single-channel PNG: grayscale 8/16 bit, or 8-bit palette indices
    /// (the palette index *is* the class index).
    Png,
    /// Headerless binary, row major, `width * height` values; one byte per
    /// pixel, or two bytes little endian when the file is twice that size.
    Raw { width: u32, height: u32 },
}

/// Read and decode one label map.
pub fn decode_label_map(path: &Path, format: &LabelMapFormat) -> Result<LabelMap, DecodeError> {
    match format {
        LabelMapFormat::Png => decode_png(path),
        LabelMapFormat::Raw { width, height } => decode_raw(path, *width, *height),
    }
}

/// Decode a label map, inferring the format from the file extension.
///
/// `.png` decodes as PNG; `.raw`/`.bin` require a sidecar text file at
/// `<file>.dims` holding `WIDTH HEIGHT`.
pub fn decode_label_map_auto(path: &Path) -> Result<LabelMap, DecodeError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => decode_png(path),
        _ => {
            let dims = sidecar_dims_path(path);
            let (width, height) = read_sidecar_dims(&dims).ok_or_else(|| DecodeError::BadSidecar {
                path: path.to_path_buf(),
                dims: dims.clone(),
            })?;
            decode_raw(path, width, height)
        }
    }
}

/// Sidecar dimensions path for a raw label map: `<file>.dims`.
pub fn sidecar_dims_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".dims");
    PathBuf::from(os)
}

fn read_sidecar_dims(dims: &Path) -> Option<(u32, u32)> {
    let text = std::fs::read_to_string(dims).ok()?;
    let mut words = text.split_whitespace();
    let width = words.next()?.parse().ok()?;
    let height = words.next()?.parse().ok()?;
    words.next().is_none().then_some((width, height))
}

fn decode_png(path: &Path) -> Result<LabelMap, DecodeError> {
    let io_err = |source| DecodeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let png_err = |source| DecodeError::Png {
        path: path.to_path_buf(),
        source,
    };

    let file = File::open(path).map_err(io_err)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    // Keep palette indices and 16-bit samples untouched; class maps must be
    // read back exactly as written.
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();

    match info.color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => {}
        other => {
            return Err(DecodeError::UnsupportedColorType {
                path: path.to_path_buf(),
                color: other,
            })
        }
    }
    let bit_depth = info.bit_depth;
    match bit_depth {
        png::BitDepth::Eight | png::BitDepth::Sixteen => {}
        other => {
            return Err(DecodeError::UnsupportedBitDepth {
                path: path.to_path_buf(),
                depth: other,
            })
        }
    }

    let buf_size = reader
        .output_buffer_size()
        .ok_or_else(|| DecodeError::ImageTooLarge {
            path: path.to_path_buf(),
        })?;
    let mut buf = vec![0u8; buf_size];
    let out = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (out.width, out.height);
    let pixels = width as usize * height as usize;

    let values = match bit_depth {
        png::BitDepth::Eight => buf[..pixels].iter().map(|&b| u16::from(b)).collect(),
        png::BitDepth::Sixteen => buf[..pixels * 2]
            .chunks_exact(2)
            .map(|pair| u16::from_be_bytes([pair[0], pair[1]]))
            .collect(),
        _ => unreachable!("bit depth validated above"),
    };
    LabelMap::new(width, height, values)
}

fn decode_raw(path: &Path, width: u32, height: u32) -> Result<LabelMap, DecodeError> {
    let io_err = |source| DecodeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let pixels = width as u64 * height as u64;
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    let actual = bytes.len() as u64;
    let values: Vec<u16> = if actual == pixels {
        bytes.iter().map(|&b| u16::from(b)).collect()
    } else if actual == pixels * 2 {
        bytes
            .chunks_exact(2)
            .map(|pair| u16::from_le_bytes([pair[0], pair[1]]))
            .collect()
    } else {
        return Err(DecodeError::BadRawSize {
            path: path.to_path_buf(),
            actual,
            expected8: pixels,
            expected16: pixels * 2,
            width,
            height,
        });
    };
    LabelMap::new(width, height, values)
}

/// K×K ground-truth × prediction pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    /// The additive identity: all counts zero.
    pub fn zero(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
            total: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    /// Count of pixels with ground truth `c` predicted as `s`.
    pub fn count(&self, c: usize, s: usize) -> u64 {
        self.counts[c * self.k + s]
    }

    /// Total ground-truth pixels of class `c` (`|gt_c|`).
    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c * self.k..(c + 1) * self.k].iter().sum()
    }

    /// Total predicted pixels of class `s` (`|pred_s|`).
    pub fn col_sum(&self, s: usize) -> u64 {
        (0..self.k).map(|c| self.counts[c * self.k + s]).sum()
    }

    /// Total evaluated (non-ignored) pixels.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k).all(|c| (0..self.k).all(|s| c == s || self.count(c, s) == 0))
    }

    /// Entrywise sum of two matrices over the same class set.
    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix, ConfusionError> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &ConfusionMatrix) -> Result<(), ConfusionError> {
        if self.k != other.k {
            return Err(ConfusionError::ClassCountMismatch {
                left: self.k,
                right: other.k,
            });
        }
        for (dst, src) in self.counts.iter_mut().zip(&other.counts) {
            *dst += src;
        }
        self.total += other.total;
        Ok(())
    }

    /// Direct constructor from row-major counts, used by tests and fixtures.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), k * k);
        let total = counts.iter().sum();
        ConfusionMatrix { k, counts, total }
    }
}

/// Count every non-ignored pixel of one image pair into a fresh matrix.
pub fn accumulate(
    gt: &LabelMap,
    pred: &LabelMap,
    k: usize,
    ignore: u16,
) -> Result<ConfusionMatrix, ConfusionError> {
    if gt.width != pred.width || gt.height != pred.height {
        return Err(ConfusionError::DimensionMismatch {
            gt_width: gt.width,
            gt_height: gt.height,
            pred_width: pred.width,
            pred_height: pred.height,
        });
    }
    let mut cm = ConfusionMatrix::zero(k);
    for (pixel, (&g, &p)) in gt.values.iter().zip(&pred.values).enumerate() {
        if g == ignore {
            continue;
        }
        let g = g as usize;
        if g >= k {
            return Err(ConfusionError::GtValueOutOfRange {
                value: g as u16,
                pixel,
                k,
            });
        }
        if p == ignore {
            return Err(ConfusionError::PredIsIgnore { pixel, ignore });
        }
        let p = p as usize;
        if p >= k {
            return Err(ConfusionError::PredValueOutOfRange {
                value: p as u16,
                pixel,
                k,
            });
        }
        cm.counts[g * k + p] += 1;
        cm.total += 1;
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(width: u32, height: u32, values: &[u16]) -> LabelMap {
        LabelMap::new(width, height, values.to_vec()).unwrap()
    }

    #[test]
    fn accumulates_worked_fixture() {
        // classes: a=0 b=1 c=2 d=3
        let gt = map(4, 1, &[0, 0, 2, 2]);
        let pred = map(4, 1, &[0, 1, 2, 0]);
        let cm = accumulate(&gt, &pred, 4, 255).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.count(2, 2), 1);
        assert_eq!(cm.count(2, 0), 1);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.row_sum(0), 2);
        assert_eq!(cm.col_sum(0), 2);
        assert_eq!(cm.col_sum(1), 1);
    }

    #[test]
    fn identical_maps_are_diagonal() {
        let gt = map(3, 2, &[0, 1, 2, 2, 1, 0]);
        let cm = accumulate(&gt, &gt, 3, 255).unwrap();
        assert!(cm.is_diagonal());
        assert_eq!(cm.count(2, 2), 2);
        assert_eq!(cm.row_sum(1), 2);
    }

    #[test]
    fn all_ignored_is_zero() {
        let gt = map(2, 2, &[255, 255, 255, 255]);
        let pred = map(2, 2, &[0, 1, 2, 0]);
        let cm = accumulate(&gt, &pred, 3, 255).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm, ConfusionMatrix::zero(3));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let gt = map(2, 2, &[0, 0, 0, 0]);
        let pred = map(4, 1, &[0, 0, 0, 0]);
        assert!(matches!(
            accumulate(&gt, &pred, 2, 255),
            Err(ConfusionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_and_ignored_pred() {
        let gt = map(2, 1, &[0, 1]);
        let bad_gt = map(2, 1, &[7, 0]);
        let pred = map(2, 1, &[0, 1]);
        assert!(matches!(
            accumulate(&bad_gt, &pred, 2, 255),
            Err(ConfusionError::GtValueOutOfRange { value: 7, .. })
        ));
        let bad_pred = map(2, 1, &[0, 9]);
        assert!(matches!(
            accumulate(&gt, &bad_pred, 2, 255),
            Err(ConfusionError::PredValueOutOfRange { value: 9, .. })
        ));
        let ignored_pred = map(2, 1, &[255, 0]);
        assert!(matches!(
            accumulate(&gt, &ignored_pred, 2, 255),
            Err(ConfusionError::PredIsIgnore { pixel: 0, .. })
        ));
    }

    #[test]
    fn merge_rejects_class_mismatch() {
        let a = ConfusionMatrix::zero(3);
        let b = ConfusionMatrix::zero(4);
        assert!(matches!(
            a.merge(&b),
            Err(ConfusionError::ClassCountMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn vertical_concat_equals_merge() {
        let top_gt = map(4, 1, &[0, 1, 2, 3]);
        let top_pred = map(4, 1, &[0, 0, 2, 2]);
        let bot_gt = map(4, 1, &[3, 3, 255, 1]);
        let bot_pred = map(4, 1, &[3, 0, 1, 1]);

        let mut whole_gt = top_gt.values().to_vec();
        whole_gt.extend_from_slice(bot_gt.values());
        let mut whole_pred = top_pred.values().to_vec();
        whole_pred.extend_from_slice(bot_pred.values());
        let whole = accumulate(
            &map(4, 2, &whole_gt),
            &map(4, 2, &whole_pred),
            4,
            255,
        )
        .unwrap();

        let merged = accumulate(&top_gt, &top_pred, 4, 255)
            .unwrap()
            .merge(&accumulate(&bot_gt, &bot_pred, 4, 255).unwrap())
            .unwrap();
        assert_eq!(whole, merged);
    }

    fn arb_matrix(k: usize) -> impl Strategy<Value = ConfusionMatrix> {
        proptest::collection::vec(0u64..50, k * k)
            .prop_map(move |counts| ConfusionMatrix::from_counts(k, counts))
    }

    proptest! {
        #[test]
        fn merge_is_commutative_monoid(
            a in arb_matrix(4),
            b in arb_matrix(4),
            c in arb_matrix(4),
        ) {
            let zero = ConfusionMatrix::zero(4);
            prop_assert_eq!(a.merge(&zero).unwrap(), a.clone());
            prop_assert_eq!(zero.merge(&a).unwrap(), a.clone());
            prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
            prop_assert_eq!(
                a.merge(&b).unwrap().merge(&c).unwrap(),
                a.merge(&b.merge(&c).unwrap()).unwrap()
            );
        }

        #[test]
        fn row_col_sums_cover_total(m in arb_matrix(5)) {
            let rows: u64 = (0..5).map(|c| m.row_sum(c)).sum();
            let cols: u64 = (0..5).map(|s| m.col_sum(s)).sum();
            prop_assert_eq!(rows, m.total());
            prop_assert_eq!(cols, m.total());
        }

        #[test]
        fn tile_partition_equals_whole(
            values in proptest::collection::vec((0u16..4, 0u16..4), 64),
            split in 1u32..7,
        ) {
            let gt: Vec<u16> = values.iter().map(|&(g, _)| g).collect();
            let pred: Vec<u16> = values.iter().map(|&(_, p)| p).collect();
            let gt = LabelMap::new(8, 8, gt).unwrap();
            let pred = LabelMap::new(8, 8, pred).unwrap();

            let whole = accumulate(&gt, &pred, 4, 255).unwrap();
            let top = accumulate(&gt.row_slice(0..split), &pred.row_slice(0..split), 4, 255).unwrap();
            let bottom = accumulate(&gt.row_slice(split..8), &pred.row_slice(split..8), 4, 255).unwrap();
            prop_assert_eq!(whole, top.merge(&bottom).unwrap());
        }
    }
}
