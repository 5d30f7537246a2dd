//! Pixel and geometry transforms on [`ImageBuffer`]s.
//!
//! Everything here is a pure function of its inputs; randomized transforms
//! take the RNG explicitly so callers control the stream.

use rand::distributions::{Bernoulli, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BBox, ImageBuffer};
use crate::error::{Error, Result};

/// Mirrors the image left-right and maps every box through the same mirror.
pub fn hflip(img: &ImageBuffer, boxes: &[BBox]) -> (ImageBuffer, Vec<BBox>) {
    let w = img.width() as usize;
    let mut out = img.clone();
    if w > 0 {
        for (src, dst) in img
            .data()
            .chunks_exact(w * 3)
            .zip(out.data_mut().chunks_exact_mut(w * 3))
        {
            for x in 0..w {
                let (s, d) = (x * 3, (w - 1 - x) * 3);
                dst[d..d + 3].copy_from_slice(&src[s..s + 3]);
            }
        }
    }
    let width = f64::from(img.width());
    let boxes = boxes
        .iter()
        .map(|b| BBox::new(width - b.x_max, b.y_min, width - b.x_min, b.y_max))
        .collect();
    (out, boxes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Fraction of the hue circle, in `[-0.5, 0.5]`.
    pub hue_shift: f64,
}

impl JitterParams {
    pub const IDENTITY: JitterParams = JitterParams {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue_shift: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} factor {v} must be >= 0")));
            }
        }
        if !(-0.5..=0.5).contains(&self.hue_shift) {
            return Err(Error::Parameter(format!(
                "hue shift {} outside [-0.5, 0.5]",
                self.hue_shift
            )));
        }
        Ok(())
    }
}

fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn blend(v: f64, other: f64, factor: f64) -> f64 {
    (factor * v + (1.0 - factor) * other).clamp(0.0, 255.0)
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let h = if chroma == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / chroma).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / chroma + 2.0) / 6.0
    } else {
        ((r - g) / chroma + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { chroma / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h * 6.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Brightness, contrast, saturation, then hue, each clamped to `[0, 255]`.
///
/// Contrast blends toward the mean luma of the image, saturation toward the
/// per-pixel luma (0.299 R + 0.587 G + 0.114 B). Neutral factors are skipped
/// so identity parameters return the input unchanged.
pub fn color_jitter(img: &ImageBuffer, params: &JitterParams) -> ImageBuffer {
    let mut px: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| p.map(f64::from))
        .collect();

    if params.brightness != 1.0 {
        for p in &mut px {
            *p = p.map(|v| (v * params.brightness).clamp(0.0, 255.0));
        }
    }
    if params.contrast != 1.0 && !px.is_empty() {
        let mean = px.iter().map(|&p| luma(p)).sum::<f64>() / px.len() as f64;
        for p in &mut px {
            *p = p.map(|v| blend(v, mean, params.contrast));
        }
    }
    if params.saturation != 1.0 {
        for p in &mut px {
            let gray = luma(*p);
            *p = p.map(|v| blend(v, gray, params.saturation));
        }
    }
    if params.hue_shift != 0.0 {
        for p in &mut px {
            let [h, s, v] = rgb_to_hsv(*p);
            let shifted = [(h + params.hue_shift).rem_euclid(1.0), s, v];
            *p = hsv_to_rgb(shifted).map(|c| c.clamp(0.0, 255.0));
        }
    }

    let data = px
        .into_iter()
        .flat_map(|p| p.map(|v| v.round() as u8))
        .collect();
    ImageBuffer::new(img.width(), img.height(), data).expect("dimensions unchanged")
}

/// Normalized 1-D kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Blur before quantization: interleaved RGB as `f64`, same layout as the input.
pub fn gaussian_blur_unquantized(img: &ImageBuffer, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Parameter(format!("blur sigma {sigma} must be >= 0")));
    }
    let src = img.data();
    if sigma == 0.0 || img.pixel_count() == 0 {
        return Ok(src.iter().map(|&v| f64::from(v)).collect());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let idx = |x: i64, y: i64| ((y * w + x) * 3) as usize;

    let mut horiz = vec![0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            let o = idx(x, y);
            for (k, weight) in kernel.iter().enumerate() {
                let s = idx((x + k as i64 - radius).clamp(0, w - 1), y);
                for c in 0..3 {
                    horiz[o + c] += weight * f64::from(src[s + c]);
                }
            }
        }
    }
    let mut out = vec![0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            let o = idx(x, y);
            for (k, weight) in kernel.iter().enumerate() {
                let s = idx(x, (y + k as i64 - radius).clamp(0, h - 1));
                for c in 0..3 {
                    out[o + c] += weight * horiz[s + c];
                }
            }
        }
    }
    Ok(out)
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma == 0` is a no-op.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let data = gaussian_blur_unquantized(img, sigma)?
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer::new(img.width(), img.height(), data)
}

/// Replaces each pixel with `(fill, fill, fill)` independently with probability `p`.
pub fn pixel_mask<R: Rng + ?Sized>(
    img: &ImageBuffer,
    p: f64,
    fill: u8,
    rng: &mut R,
) -> Result<ImageBuffer> {
    let coin = Bernoulli::new(p)
        .map_err(|_| Error::Parameter(format!("mask probability {p} outside [0, 1]")))?;
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        if coin.sample(rng) {
            px.fill(fill);
        }
    }
    Ok(out)
}

/// What an erased block is filled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill {
    Value(u8),
    /// Per-channel mean of the input image.
    ChannelMean,
}

impl Fill {
    pub fn resolve(self, img: &ImageBuffer) -> [u8; 3] {
        match self {
            Fill::Value(v) => [v; 3],
            Fill::ChannelMean => img.channel_mean(),
        }
    }
}

impl Serialize for Fill {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Fill::Value(v) => s.serialize_u8(*v),
            Fill::ChannelMean => s.serialize_str("mean"),
        }
    }
}

impl<'de> Deserialize<'de> for Fill {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Fill::Value(v)),
            Raw::Text(s) if s == "mean" => Ok(Fill::ChannelMean),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "fill must be 0-255 or \"mean\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    pub pixel_mask_prob: f64,
    /// Block area as a fraction of the image area.
    pub block_area_range: (f64, f64),
    /// Block width / height.
    pub block_aspect_range: (f64, f64),
    pub fill: Fill,
}

impl Default for MaskParams {
    fn default() -> Self {
        MaskParams {
            pixel_mask_prob: 0.75,
            block_area_range: (0.02, 0.33),
            block_aspect_range: (0.3, 3.3),
            fill: Fill::ChannelMean,
        }
    }
}

pub(crate) fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} range ({lo}, {hi}) must satisfy 0 < min <= max"
        )))
    }
}

impl MaskParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pixel_mask_prob) {
            return Err(Error::Parameter(format!(
                "pixel mask probability {} outside [0, 1]",
                self.pixel_mask_prob
            )));
        }
        check_range("block area", self.block_area_range)?;
        check_range("block aspect", self.block_aspect_range)
    }
}

/// An erased rectangle in integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

pub const BLOCK_ATTEMPTS: usize = 10;

/// Draws a block placement, or `None` if ten draws all fail to fit.
pub fn draw_block<R: Rng + ?Sized>(
    width: u32,
    height: u32,
    params: &MaskParams,
    rng: &mut R,
) -> Option<BlockRect> {
    let area = f64::from(width) * f64::from(height);
    let (a_lo, a_hi) = params.block_area_range;
    let (r_lo, r_hi) = (
        params.block_aspect_range.0.ln(),
        params.block_aspect_range.1.ln(),
    );
    for _ in 0..BLOCK_ATTEMPTS {
        let target = area * rng.gen_range(a_lo..=a_hi);
        let aspect = rng.gen_range(r_lo..=r_hi).exp();
        let bw = (target * aspect).sqrt().round();
        let bh = (target / aspect).sqrt().round();
        if bw >= 1.0 && bh >= 1.0 && bw <= f64::from(width) && bh <= f64::from(height) {
            let (bw, bh) = (bw as u32, bh as u32);
            let x = rng.gen_range(0..=width - bw);
            let y = rng.gen_range(0..=height - bh);
            return Some(BlockRect {
                x,
                y,
                width: bw,
                height: bh,
            });
        }
    }
    None
}

pub fn fill_block(img: &mut ImageBuffer, rect: BlockRect, rgb: [u8; 3]) {
    for y in rect.y..rect.y + rect.height {
        for x in rect.x..rect.x + rect.width {
            img.set_pixel(x, y, rgb);
        }
    }
}

/// Erases one random block. Returns the placement, if any fit.
pub fn block_mask<R: Rng + ?Sized>(
    img: &ImageBuffer,
    params: &MaskParams,
    rng: &mut R,
) -> Result<(ImageBuffer, Option<BlockRect>)> {
    params.validate()?;
    let mut out = img.clone();
    let rect = draw_block(img.width(), img.height(), params, rng);
    if let Some(rect) = rect {
        let rgb = params.fill.resolve(img);
        fill_block(&mut out, rect, rgb);
    }
    Ok((out, rect))
}
