//! Grounding-sample data model and annotation/image I/O.
//!
//! Annotation files are UTF-8 JSON:
//!
//! ```text
//! {
//!   "box_format": "xyxy",            // optional, "xyxy" (default) or "xywh"
//!   "samples": [
//!     {"image_id": "...", "file_name": "...", "width": 640, "height": 480,
//!      "caption": "a red hat",
//!      "annotations": [{"spans": [[2, 5]], "boxes": [[x1, y1, x2, y2]]}]}
//!   ]
//! }
//! ```
//!
//! Spans are half-open **byte** offsets into the caption and must fall on
//! UTF-8 character boundaries. Boxes are held in memory as absolute-pixel
//! `[x_min, y_min, x_max, y_max]` regardless of the on-disk format.
//!
//! Box coordinates are clamped to the image and snapped to a 1/256 pixel
//! grid on ingestion. On that grid `width - x` is exact in `f64`, which is
//! what makes horizontal flipping an exact involution on boxes.

use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Sub-pixel grid that ingested box coordinates are snapped to.
pub const BOX_GRID: f64 = 1.0 / 256.0;

/// Axis-aligned box in absolute pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox::new(x, y, x + w, y + h)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Area, zero for inverted boxes.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Finite with strictly positive width and height.
    pub fn is_proper(&self) -> bool {
        self.is_finite() && self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= f64::from(width)
            && self.y_max <= f64::from(height)
    }

    pub fn clamp_to(&self, width: u32, height: u32) -> BBox {
        let (w, h) = (f64::from(width), f64::from(height));
        BBox::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
        )
    }

    pub fn snapped(&self) -> BBox {
        let snap = |v: f64| (v / BOX_GRID).round() * BOX_GRID;
        BBox::new(
            snap(self.x_min),
            snap(self.y_min),
            snap(self.x_max),
            snap(self.y_max),
        )
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x_min.min(other.x_min),
            self.y_min.min(other.y_min),
            self.x_max.max(other.x_max),
            self.y_max.max(other.y_max),
        )
    }
}

/// Half-open byte range `[start, end)` into a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl From<[usize; 2]> for CharSpan {
    fn from(v: [usize; 2]) -> Self {
        CharSpan::new(v[0], v[1])
    }
}

impl From<CharSpan> for [usize; 2] {
    fn from(s: CharSpan) -> Self {
        [s.start, s.end]
    }
}

impl CharSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn intersects(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The substring covered by this span, if it is a valid span of `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        if self.start < self.end {
            text.get(self.start..self.end)
        } else {
            None
        }
    }

    fn check(&self, text: &str) -> std::result::Result<(), ViolationKind> {
        if self.start >= self.end || self.end > text.len() {
            return Err(ViolationKind::SpanOutOfRange);
        }
        if !text.is_char_boundary(self.start) || !text.is_char_boundary(self.end) {
            return Err(ViolationKind::SpanNotOnCharBoundary);
        }
        if text[self.start..self.end].trim().is_empty() {
            return Err(ViolationKind::BlankSpan);
        }
        Ok(())
    }
}

/// One phrase linked to one or more image regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseAnnotation {
    pub spans: Vec<CharSpan>,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSample {
    pub image_id: String,
    /// Image path relative to the dataset's image directory.
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub caption: String,
    pub annotations: Vec<PhraseAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    ZeroDimension,
    DimensionMismatch,
    MissingSpans,
    MissingBoxes,
    SpanOutOfRange,
    SpanNotOnCharBoundary,
    BlankSpan,
    NonFiniteBox,
    DegenerateBox,
    BoxOutOfBounds,
}

impl ViolationKind {
    pub fn describe(self) -> &'static str {
        match self {
            ViolationKind::ZeroDimension => "zero image dimension",
            ViolationKind::DimensionMismatch => "dimension mismatch",
            ViolationKind::MissingSpans => "annotation without spans",
            ViolationKind::MissingBoxes => "annotation without boxes",
            ViolationKind::SpanOutOfRange => "span out of range",
            ViolationKind::SpanNotOnCharBoundary => "span splits a character",
            ViolationKind::BlankSpan => "blank span",
            ViolationKind::NonFiniteBox => "non-finite box",
            ViolationKind::DegenerateBox => "degenerate box",
            ViolationKind::BoxOutOfBounds => "box out of bounds",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

/// A broken invariant, with enough context to find it in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub image_id: String,
    pub kind: ViolationKind,
    pub location: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} at {}", self.image_id, self.kind, self.location)
    }
}

impl GroundingSample {
    pub fn image_path(&self, images_dir: &Path) -> PathBuf {
        images_dir.join(&self.file_name)
    }

    /// Every invariant this sample breaks, in annotation order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |kind, location: String| {
            out.push(Violation {
                image_id: self.image_id.clone(),
                kind,
                location,
            })
        };
        if self.width == 0 || self.height == 0 {
            push(
                ViolationKind::ZeroDimension,
                format!("{}x{}", self.width, self.height),
            );
        }
        for (a, ann) in self.annotations.iter().enumerate() {
            if ann.spans.is_empty() {
                push(ViolationKind::MissingSpans, format!("annotations[{a}]"));
            }
            if ann.boxes.is_empty() {
                push(ViolationKind::MissingBoxes, format!("annotations[{a}]"));
            }
            for (s, span) in ann.spans.iter().enumerate() {
                if let Err(kind) = span.check(&self.caption) {
                    push(
                        kind,
                        format!(
                            "annotations[{a}].spans[{s}] [{}, {}) (caption length {})",
                            span.start,
                            span.end,
                            self.caption.len()
                        ),
                    );
                }
            }
            for (b, bbox) in ann.boxes.iter().enumerate() {
                let loc = || format!("annotations[{a}].boxes[{b}] {:?}", bbox.to_array());
                if !bbox.is_finite() {
                    push(ViolationKind::NonFiniteBox, loc());
                } else if !bbox.is_proper() {
                    push(ViolationKind::DegenerateBox, loc());
                } else if !bbox.within(self.width, self.height) {
                    push(ViolationKind::BoxOutOfBounds, loc());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::Validation {
                image_id: v.image_id,
                message: format!("{} at {}", v.kind, v.location),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxFormat {
    #[default]
    Xyxy,
    Xywh,
}

#[derive(Deserialize)]
struct RawSample {
    image_id: String,
    file_name: String,
    width: u32,
    height: u32,
    caption: String,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    spans: Vec<[usize; 2]>,
    boxes: Vec<[f64; 4]>,
}

#[derive(Serialize)]
struct FileOut<'a> {
    box_format: BoxFormat,
    samples: &'a [GroundingSample],
}

/// Parses an annotation document without enforcing sample invariants.
///
/// Boxes are converted to xyxy, clamped and snapped; anything still broken
/// afterwards is left for [`GroundingSample::violations`] to report.
pub fn parse_annotations_unchecked(text: &str, origin: &str) -> Result<Vec<GroundingSample>> {
    let parse_err = |location: String, message: String| Error::Parse { location, message };
    let doc: Value =
        serde_json::from_str(text).map_err(|e| parse_err(origin.to_string(), e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| parse_err(origin.to_string(), "top level is not an object".into()))?;

    let format: BoxFormat = match obj.get("box_format") {
        None => BoxFormat::Xyxy,
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| parse_err(format!("{origin}: box_format"), e.to_string()))?,
    };
    let records = obj
        .get("samples")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(origin.to_string(), "missing \"samples\" array".into()))?;

    let mut samples = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let raw: RawSample = serde_json::from_value(record.clone()).map_err(|e| {
            let id = record
                .get("image_id")
                .and_then(Value::as_str)
                .map(|s| format!(" (image_id '{s}')"))
                .unwrap_or_default();
            parse_err(format!("{origin}: samples[{i}]{id}"), e.to_string())
        })?;
        samples.push(raw.into_sample(format));
    }
    Ok(samples)
}

impl RawSample {
    fn into_sample(self, format: BoxFormat) -> GroundingSample {
        let (w, h) = (self.width, self.height);
        let annotations = self
            .annotations
            .into_iter()
            .map(|a| PhraseAnnotation {
                spans: a.spans.into_iter().map(CharSpan::from).collect(),
                boxes: a
                    .boxes
                    .into_iter()
                    .map(|v| {
                        let b = match format {
                            BoxFormat::Xyxy => BBox::from(v),
                            BoxFormat::Xywh => BBox::from_xywh(v[0], v[1], v[2], v[3]),
                        };
                        if b.is_finite() {
                            b.clamp_to(w, h).snapped()
                        } else {
                            b
                        }
                    })
                    .collect(),
            })
            .collect();
        GroundingSample {
            image_id: self.image_id,
            file_name: self.file_name,
            width: w,
            height: h,
            caption: self.caption,
            annotations,
        }
    }
}

/// Parses and validates an annotation document.
pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<GroundingSample>> {
    let samples = parse_annotations_unchecked(text, origin)?;
    for s in &samples {
        s.validate()?;
    }
    Ok(samples)
}

pub fn load_annotations(path: &Path) -> Result<Vec<GroundingSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn annotations_to_json(samples: &[GroundingSample]) -> String {
    let doc = FileOut {
        box_format: BoxFormat::Xyxy,
        samples,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("sample serialization is infallible");
    s.push('\n');
    s
}

pub fn save_annotations(samples: &[GroundingSample], path: &Path) -> Result<()> {
    fs::write(path, annotations_to_json(samples)).map_err(|e| Error::io(path, e))
}

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::Contract(format!(
                "image data has {} bytes, expected {expected} for {width}x{height} RGB",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        ImageBuffer {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Per-channel mean, rounded to the nearest sample value.
    pub fn channel_mean(&self) -> [u8; 3] {
        let n = self.pixel_count().max(1) as f64;
        let mut sums = [0u64; 3];
        for p in self.data.chunks_exact(3) {
            for c in 0..3 {
                sums[c] += u64::from(p[c]);
            }
        }
        sums.map(|s| (s as f64 / n).round() as u8)
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let img = RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .expect("PNG encoding into memory does not fail");
        out.into_inner()
    }

    pub fn encode_jpeg(&self, quality: u8) -> Vec<u8> {
        let img = RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        let mut out = Vec::new();
        image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality)
            .encode_image(&img)
            .expect("JPEG encoding into memory does not fail");
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode_png()).map_err(|e| Error::io(path, e))
    }
}

/// Decodes PNG or JPEG bytes to RGB. Gray is replicated, alpha dropped.
pub fn decode_image(bytes: &[u8], origin: &Path) -> Result<ImageBuffer> {
    let decode_err = |message: String| Error::Decode {
        path: origin.to_path_buf(),
        message,
    };
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => return Err(decode_err(format!("unsupported format {other:?}"))),
    }
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(w, h, rgb.into_raw())
}

pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

/// Reads only the header to get `(width, height)`.
pub fn image_dimensions(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}
