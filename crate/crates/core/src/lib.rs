//! Deterministic augmentation for phrase-grounding datasets.
//!
//! Image transforms that could contradict a caption are gated on the
//! caption: color jitter is skipped when the caption names a color, and
//! horizontal flips either skip captions with left/right wording or rewrite
//! that wording and remap every annotation span. Text-independent occlusion
//! (pixel and block masking) and blur are applied freely.
//!
//! The crate also carries reference evaluations of the grounding losses and
//! the AP / Recall@K metrics for checking training and evaluation code.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod image_ops;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod text;

pub use dataset::{BBox, CharSpan, GroundingSample, ImageBuffer, PhraseAnnotation};
pub use error::{Error, Result};
pub use pipeline::{augment_sample, derive_seed, validate_consistency, AugPolicy, AugReport, Augmenter};
