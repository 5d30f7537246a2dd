//! Per-sample augmentation with text-conditioned gating.
//!
//! Every sample gets its own seed from [`derive_seed`], and every
//! augmentation draws from its own ChaCha stream of that seed. Changing one
//! augmentation's parameters therefore never shifts another's draws.
//!
//! Application order is fixed: flip, color jitter, blur, pixel mask, block
//! mask. Flip has to come first so it sees the original box coordinates.

use std::collections::BTreeMap;
use std::sync::mpsc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GroundingSample, ImageBuffer, Violation, ViolationKind};
use crate::error::{Error, Result};
use crate::image_ops::{
    self, check_range, BlockRect, Fill, JitterParams, MaskParams,
};
use crate::text::{
    classify_flippability, contains_color_words, rewrite_caption, Flippability, Lexicons,
    RewriteResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    Off,
    /// Flip only captions without positional words.
    Thflip,
    /// Also flip captions whose positional words can be swapped.
    ThflipPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipPolicy {
    pub enabled: bool,
    pub mode: FlipMode,
    pub prob: f64,
}

impl Default for FlipPolicy {
    fn default() -> Self {
        FlipPolicy {
            enabled: true,
            mode: FlipMode::ThflipPlus,
            prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorPolicy {
    pub enabled: bool,
    pub prob: f64,
    pub brightness: [f64; 2],
    pub contrast: [f64; 2],
    pub saturation: [f64; 2],
    pub hue: [f64; 2],
}

impl Default for ColorPolicy {
    fn default() -> Self {
        ColorPolicy {
            enabled: true,
            prob: 0.5,
            brightness: [0.6, 1.4],
            contrast: [0.6, 1.4],
            saturation: [0.6, 1.4],
            hue: [-0.05, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurPolicy {
    pub enabled: bool,
    pub prob: f64,
    pub sigma: [f64; 2],
}

impl Default for BlurPolicy {
    fn default() -> Self {
        BlurPolicy {
            enabled: true,
            prob: 0.5,
            sigma: [0.1, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PixelMaskPolicy {
    pub enabled: bool,
    pub prob: f64,
    /// Per-pixel masking probability.
    pub p: f64,
    pub fill: u8,
}

impl Default for PixelMaskPolicy {
    fn default() -> Self {
        PixelMaskPolicy {
            enabled: true,
            prob: 0.5,
            p: 0.75,
            fill: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockMaskPolicy {
    pub enabled: bool,
    pub prob: f64,
    pub area: [f64; 2],
    pub aspect: [f64; 2],
    pub fill: Fill,
}

impl Default for BlockMaskPolicy {
    fn default() -> Self {
        let d = MaskParams::default();
        BlockMaskPolicy {
            enabled: true,
            prob: 0.5,
            area: [d.block_area_range.0, d.block_area_range.1],
            aspect: [d.block_aspect_range.0, d.block_aspect_range.1],
            fill: d.fill,
        }
    }
}

impl BlockMaskPolicy {
    fn mask_params(&self) -> MaskParams {
        MaskParams {
            pixel_mask_prob: 0.0,
            block_area_range: (self.area[0], self.area[1]),
            block_aspect_range: (self.aspect[0], self.aspect[1]),
            fill: self.fill,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedPolicy {
    pub global: u64,
}

/// Which augmentations may fire, how often, and with what parameter ranges.
///
/// Maps one-to-one onto the policy TOML:
///
/// ```toml
/// [flip]
/// mode = "thflip_plus"   # off | thflip | thflip_plus
/// prob = 0.5
/// [color]
/// prob = 0.5
/// brightness = [0.6, 1.4]
/// [blur]
/// sigma = [0.1, 2.0]
/// [pixel_mask]
/// p = 0.75
/// fill = 0
/// [block_mask]
/// area = [0.02, 0.33]
/// aspect = [0.3, 3.3]
/// fill = "mean"
/// [seed]
/// global = 42
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugPolicy {
    pub flip: FlipPolicy,
    pub color: ColorPolicy,
    pub blur: BlurPolicy,
    pub pixel_mask: PixelMaskPolicy,
    pub block_mask: BlockMaskPolicy,
    pub seed: SeedPolicy,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} {p} outside [0, 1]")))
    }
}

fn check_interval(name: &str, [lo, hi]: [f64; 2], min: f64, max: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi && hi <= max {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} range [{lo}, {hi}] must be ordered and within [{min}, {max}]"
        )))
    }
}

impl AugPolicy {
    /// Every augmentation at probability zero.
    pub fn disabled() -> Self {
        let mut p = AugPolicy::default();
        p.flip.prob = 0.0;
        p.color.prob = 0.0;
        p.blur.prob = 0.0;
        p.pixel_mask.prob = 0.0;
        p.block_mask.prob = 0.0;
        p
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("flip.prob", self.flip.prob)?;
        check_prob("color.prob", self.color.prob)?;
        check_prob("blur.prob", self.blur.prob)?;
        check_prob("pixel_mask.prob", self.pixel_mask.prob)?;
        check_prob("pixel_mask.p", self.pixel_mask.p)?;
        check_prob("block_mask.prob", self.block_mask.prob)?;
        let inf = f64::INFINITY;
        check_interval("color.brightness", self.color.brightness, 0.0, inf)?;
        check_interval("color.contrast", self.color.contrast, 0.0, inf)?;
        check_interval("color.saturation", self.color.saturation, 0.0, inf)?;
        check_interval("color.hue", self.color.hue, -0.5, 0.5)?;
        check_interval("blur.sigma", self.blur.sigma, 0.0, inf)?;
        check_range("block_mask.area", (self.block_mask.area[0], self.block_mask.area[1]))?;
        check_range(
            "block_mask.aspect",
            (self.block_mask.aspect[0], self.block_mask.aspect[1]),
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let policy: AugPolicy = toml::from_str(text).map_err(|e| Error::Parse {
            location: "policy".into(),
            message: e.to_string(),
        })?;
        policy.validate()?;
        Ok(policy)
    }

    /// Same schema as the TOML file, as a JSON value.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let policy: AugPolicy = serde_json::from_value(value).map_err(|e| Error::Parse {
            location: "policy".into(),
            message: e.to_string(),
        })?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("policy serializes to TOML")
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-sample seed.
///
/// FNV-1a (64-bit) over `global_seed` (8 bytes LE), `epoch` (8 bytes LE),
/// the id length (8 bytes LE) and the UTF-8 id bytes, followed by the
/// SplitMix64 finalizer.
pub fn derive_seed(global_seed: u64, image_id: &str, epoch: u64) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&global_seed.to_le_bytes());
    feed(&epoch.to_le_bytes());
    feed(&(image_id.len() as u64).to_le_bytes());
    feed(image_id.as_bytes());
    splitmix64_finalize(h)
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Flip = 1,
    Color = 2,
    Blur = 3,
    PixelMask = 4,
    BlockMask = 5,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// The caption names a color.
    ColorWords,
    /// Non-rewriting flip mode and the caption has positional words.
    PositionalWords,
    /// A token carries left/right in a form the lexicon does not know.
    UnknownPositionalForm,
}

/// One augmentation that was drawn for a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugEvent {
    Flip {
        classification: String,
        rewrite: Option<RewriteResult>,
    },
    FlipSkipped {
        classification: String,
        reason: SkipReason,
    },
    ColorJitter {
        params: JitterParams,
    },
    ColorJitterSkipped {
        reason: SkipReason,
    },
    Blur {
        sigma: f64,
    },
    PixelMask {
        p: f64,
        fill: u8,
    },
    BlockMask {
        rect: Option<BlockRect>,
        fill: [u8; 3],
    },
}

/// What happened to one sample, sufficient to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugReport {
    pub image_id: String,
    pub epoch: u64,
    pub seed: u64,
    pub events: Vec<AugEvent>,
}

impl AugReport {
    pub fn color_jitter_fired(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e, AugEvent::ColorJitter { .. }))
    }

    pub fn flipped(&self) -> bool {
        self.events.iter().any(|e| matches!(e, AugEvent::Flip { .. }))
    }

    pub fn rewrite(&self) -> Option<&RewriteResult> {
        self.events.iter().find_map(|e| match e {
            AugEvent::Flip { rewrite, .. } => rewrite.as_ref(),
            _ => None,
        })
    }

    /// Re-applies the recorded events without consulting the policy.
    pub fn replay(
        &self,
        sample: &GroundingSample,
        img: &ImageBuffer,
    ) -> Result<(GroundingSample, ImageBuffer)> {
        let mut sample = sample.clone();
        let mut img = img.clone();
        for event in &self.events {
            match event {
                AugEvent::Flip { rewrite, .. } => {
                    img = apply_flip(&mut sample, &img, rewrite.clone());
                }
                AugEvent::ColorJitter { params } => img = image_ops::color_jitter(&img, params),
                AugEvent::Blur { sigma } => img = image_ops::gaussian_blur(&img, *sigma)?,
                AugEvent::PixelMask { p, fill } => {
                    let mut rng = stream(self.seed, Stream::PixelMask);
                    let _fired: f64 = rng.gen();
                    img = image_ops::pixel_mask(&img, *p, *fill, &mut rng)?;
                }
                AugEvent::BlockMask { rect, fill } => {
                    if let Some(rect) = rect {
                        image_ops::fill_block(&mut img, *rect, *fill);
                    }
                }
                AugEvent::FlipSkipped { .. } | AugEvent::ColorJitterSkipped { .. } => {}
            }
        }
        Ok((sample, img))
    }
}

fn apply_flip(
    sample: &mut GroundingSample,
    img: &ImageBuffer,
    rewrite: Option<RewriteResult>,
) -> ImageBuffer {
    let mut flipped_img = None;
    for ann in &mut sample.annotations {
        let (out, boxes) = image_ops::hflip(img, &ann.boxes);
        ann.boxes = boxes;
        flipped_img.get_or_insert(out);
    }
    let flipped_img = flipped_img.unwrap_or_else(|| image_ops::hflip(img, &[]).0);
    if let Some(r) = rewrite {
        for ann in &mut sample.annotations {
            for span in &mut ann.spans {
                *span = r.remap_span(*span);
            }
        }
        sample.caption = r.new_caption;
    }
    flipped_img
}

/// Empty iff spans, boxes and image dimensions are all consistent.
pub fn validate_consistency(sample: &GroundingSample, img: &ImageBuffer) -> Vec<Violation> {
    let mut v = Vec::new();
    if (sample.width, sample.height) != (img.width(), img.height()) {
        v.push(Violation {
            image_id: sample.image_id.clone(),
            kind: ViolationKind::DimensionMismatch,
            location: format!(
                "annotation {}x{} vs image {}x{}",
                sample.width,
                sample.height,
                img.width(),
                img.height()
            ),
        });
    }
    v.extend(sample.violations());
    v
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// A policy bound to its lexicons.
#[derive(Debug, Clone, Default)]
pub struct Augmenter {
    pub policy: AugPolicy,
    pub lexicons: Lexicons,
}

impl Augmenter {
    pub fn new(policy: AugPolicy, lexicons: Lexicons) -> Result<Self> {
        policy.validate()?;
        Ok(Augmenter { policy, lexicons })
    }

    pub fn augment(
        &self,
        sample: &GroundingSample,
        img: &ImageBuffer,
        epoch: u64,
    ) -> Result<(GroundingSample, ImageBuffer, AugReport)> {
        if (sample.width, sample.height) != (img.width(), img.height()) {
            return Err(Error::Contract(format!(
                "sample '{}' declares {}x{} but the image is {}x{}",
                sample.image_id,
                sample.width,
                sample.height,
                img.width(),
                img.height()
            )));
        }
        let policy = &self.policy;
        let seed = derive_seed(policy.seed.global, &sample.image_id, epoch);
        let mut out_sample = sample.clone();
        let mut out_img = img.clone();
        let mut events = Vec::new();

        if policy.flip.enabled && policy.flip.mode != FlipMode::Off {
            let mut rng = stream(seed, Stream::Flip);
            if rng.gen_bool(policy.flip.prob) {
                let class = classify_flippability(&sample.caption, &self.lexicons.positional);
                let label = class.label().to_string();
                let decision = match (policy.flip.mode, class) {
                    (_, Flippability::FreelyFlippable) => Ok(None),
                    (FlipMode::ThflipPlus, Flippability::RewritableFlip { matches }) => {
                        Ok(Some(rewrite_caption(&sample.caption, &matches)?))
                    }
                    (_, Flippability::NotFlippable { .. }) => {
                        Err(SkipReason::UnknownPositionalForm)
                    }
                    (_, Flippability::RewritableFlip { .. }) => Err(SkipReason::PositionalWords),
                };
                match decision {
                    Ok(rewrite) => {
                        out_img = apply_flip(&mut out_sample, &out_img, rewrite.clone());
                        events.push(AugEvent::Flip {
                            classification: label,
                            rewrite,
                        });
                    }
                    Err(reason) => events.push(AugEvent::FlipSkipped {
                        classification: label,
                        reason,
                    }),
                }
            }
        }

        if policy.color.enabled {
            let mut rng = stream(seed, Stream::Color);
            if rng.gen_bool(policy.color.prob) {
                if contains_color_words(&sample.caption, &self.lexicons.color) {
                    events.push(AugEvent::ColorJitterSkipped {
                        reason: SkipReason::ColorWords,
                    });
                } else {
                    let c = &policy.color;
                    let params = JitterParams {
                        brightness: uniform(&mut rng, c.brightness),
                        contrast: uniform(&mut rng, c.contrast),
                        saturation: uniform(&mut rng, c.saturation),
                        hue_shift: uniform(&mut rng, c.hue),
                    };
                    out_img = image_ops::color_jitter(&out_img, &params);
                    events.push(AugEvent::ColorJitter { params });
                }
            }
        }

        if policy.blur.enabled {
            let mut rng = stream(seed, Stream::Blur);
            if rng.gen_bool(policy.blur.prob) {
                let sigma = uniform(&mut rng, policy.blur.sigma);
                out_img = image_ops::gaussian_blur(&out_img, sigma)?;
                events.push(AugEvent::Blur { sigma });
            }
        }

        if policy.pixel_mask.enabled {
            let mut rng = stream(seed, Stream::PixelMask);
            // Drawn as a raw f64 so replay can skip it without knowing prob.
            let u: f64 = rng.gen();
            if u < policy.pixel_mask.prob {
                let pm = &policy.pixel_mask;
                out_img = image_ops::pixel_mask(&out_img, pm.p, pm.fill, &mut rng)?;
                events.push(AugEvent::PixelMask {
                    p: pm.p,
                    fill: pm.fill,
                });
            }
        }

        if policy.block_mask.enabled {
            let mut rng = stream(seed, Stream::BlockMask);
            if rng.gen_bool(policy.block_mask.prob) {
                let params = policy.block_mask.mask_params();
                let fill = params.fill.resolve(&out_img);
                let rect = image_ops::draw_block(out_img.width(), out_img.height(), &params, &mut rng);
                if let Some(rect) = rect {
                    image_ops::fill_block(&mut out_img, rect, fill);
                }
                events.push(AugEvent::BlockMask { rect, fill });
            }
        }

        let violations = validate_consistency(&out_sample, &out_img);
        if let Some(v) = violations.first() {
            return Err(Error::Contract(format!("augmentation broke an invariant: {v}")));
        }
        let report = AugReport {
            image_id: sample.image_id.clone(),
            epoch,
            seed,
            events,
        };
        Ok((out_sample, out_img, report))
    }
}

/// [`Augmenter::augment`] with the default lexicons.
pub fn augment_sample(
    sample: &GroundingSample,
    img: &ImageBuffer,
    policy: &AugPolicy,
    epoch: u64,
) -> Result<(GroundingSample, ImageBuffer, AugReport)> {
    Augmenter::new(policy.clone(), Lexicons::default())?.augment(sample, img, epoch)
}

/// Runs `work` on a pool of `jobs` threads and hands results to `sink` in
/// input order, from the calling thread.
pub fn for_each_ordered<I, O, W, S>(inputs: Vec<I>, jobs: usize, work: W, mut sink: S)
where
    I: Send,
    O: Send,
    W: Fn(usize, I) -> O + Sync,
    S: FnMut(usize, O),
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let (tx, rx) = mpsc::channel::<(usize, O)>();
    let work = &work;
    pool.in_place_scope(|scope| {
        for (i, item) in inputs.into_iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move |_| {
                let _ = tx.send((i, work(i, item)));
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut next = 0usize;
        for (i, out) in rx {
            pending.insert(i, out);
            while let Some(out) = pending.remove(&next) {
                sink(next, out);
                next += 1;
            }
        }
    });
}
