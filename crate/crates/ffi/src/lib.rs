//! C ABI for pairaug.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` /
//! `*_from_*` function and released by the matching `*_free`. Every function
//! returns a [`PairaugStatus`]; on failure the message is available from
//! [`pairaug_last_error`] on the same thread. Strings returned to the caller
//! are owned by the caller and released with [`pairaug_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::Array2;
use pairaug::dataset::{load_image, parse_annotations};
use pairaug::losses::{
    box_loss, contrastive_alignment_loss, giou, soft_token_loss, AlignmentSets, BoxRegressionBatch,
    EmbeddingBatch, SoftTokenBatch,
};
use pairaug::metrics::evaluate_files;
use pairaug::text::{classify_flippability, contains_color_words, Lexicons};
use pairaug::{AugPolicy, AugReport, Augmenter, BBox, Error, GroundingSample, ImageBuffer};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairaugStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Decode = 6,
    Parameter = 7,
    Contract = 8,
    UnknownQuery = 9,
    Panic = 10,
}

impl From<&Error> for PairaugStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => PairaugStatus::Io,
            Error::Parse { .. } => PairaugStatus::Parse,
            Error::Validation { .. } => PairaugStatus::Validation,
            Error::Decode { .. } => PairaugStatus::Decode,
            Error::Parameter(_) => PairaugStatus::Parameter,
            Error::Contract(_) => PairaugStatus::Contract,
            Error::UnknownQuery(_) => PairaugStatus::UnknownQuery,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairaugFlippability {
    FreelyFlippable = 0,
    RewritableFlip = 1,
    NotFlippable = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairaugMetrics {
    pub queries: usize,
    pub ap: f64,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
}

/// An augmentation policy together with the lexicons it gates on.
pub struct PairaugPolicy(Augmenter);

pub struct PairaugSample(GroundingSample);

/// Packed RGB, row-major, 3 bytes per pixel.
pub struct PairaugImage(ImageBuffer);

pub struct PairaugReport(AugReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(PairaugStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PairaugStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null_arg(name: &str) -> Failure {
    Failure(PairaugStatus::NullArgument, format!("{name} is null"))
}

/// Runs `f`, turning errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> PairaugStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PairaugStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            PairaugStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null_arg(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PairaugStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null_arg(name))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_arg(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null_arg(name));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(PairaugStatus::Contract, e.to_string()))
}

fn matrix(data: &[f64], rows: usize, cols: usize, name: &str) -> FfiResult<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data.to_vec())
        .map_err(|e| Failure(PairaugStatus::Contract, format!("{name}: {e}")))
}

fn bbox_array(data: &[f64]) -> Vec<BBox> {
    data.chunks_exact(4)
        .map(|c| BBox::new(c[0], c[1], c[2], c[3]))
        .collect()
}

/// Message for the last failing call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pairaug_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pairaug_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn pairaug_policy_default(out: *mut *mut PairaugPolicy) -> PairaugStatus {
    guard(|| {
        let aug = Augmenter::new(AugPolicy::default(), Lexicons::default())?;
        write_out(out, boxed(PairaugPolicy(aug)), "out")
    })
}

/// Parses a policy in TOML. `lexicons_json` may be null for the default lexicons.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_policy_from_toml(
    toml: *const c_char,
    lexicons_json: *const c_char,
    out: *mut *mut PairaugPolicy,
) -> PairaugStatus {
    guard(|| {
        let policy = AugPolicy::from_toml_str(str_arg(toml, "toml")?)?;
        let lexicons = lexicons_arg(lexicons_json)?;
        write_out(out, boxed(PairaugPolicy(Augmenter::new(policy, lexicons)?)), "out")
    })
}

/// Same as [`pairaug_policy_from_toml`] with the keys given as a JSON object.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_policy_from_json(
    json: *const c_char,
    lexicons_json: *const c_char,
    out: *mut *mut PairaugPolicy,
) -> PairaugStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: "policy".into(),
            message: e.to_string(),
        })?;
        let policy = AugPolicy::from_json_value(value)?;
        let lexicons = lexicons_arg(lexicons_json)?;
        write_out(out, boxed(PairaugPolicy(Augmenter::new(policy, lexicons)?)), "out")
    })
}

unsafe fn lexicons_arg(p: *const c_char) -> FfiResult<Lexicons> {
    if p.is_null() {
        Ok(Lexicons::default())
    } else {
        Ok(Lexicons::from_json(str_arg(p, "lexicons_json")?, "lexicons")?)
    }
}

/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pairaug_policy_set_seed(policy: *mut PairaugPolicy, global_seed: u64) -> PairaugStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null_arg("policy"))?;
        p.0.policy.seed.global = global_seed;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pairaug_policy_free(policy: *mut PairaugPolicy) {
    free(policy);
}

/// Parses one sample object (the same shape as an entry of an annotation
/// file's `samples` array, boxes in xyxy) and validates it.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_sample_from_json(json: *const c_char, out: *mut *mut PairaugSample) -> PairaugStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: "sample".into(),
            message: e.to_string(),
        })?;
        let doc = serde_json::json!({ "samples": [value] }).to_string();
        let mut samples = parse_annotations(&doc, "sample")?;
        write_out(out, boxed(PairaugSample(samples.remove(0))), "out")
    })
}

/// # Safety
/// `sample` must be a live handle; `out` must be writable. Free the string
/// with [`pairaug_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pairaug_sample_to_json(sample: *const PairaugSample, out: *mut *mut c_char) -> PairaugStatus {
    guard(|| {
        let s = ref_arg(sample, "sample")?;
        let json = serde_json::to_string(&s.0).map_err(|e| Failure(PairaugStatus::Contract, e.to_string()))?;
        write_out(out, to_c_string(json)?, "out")
    })
}

/// # Safety
/// `sample` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pairaug_sample_free(sample: *mut PairaugSample) {
    free(sample);
}

/// Copies `width * height * 3` bytes of packed RGB into a new image.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_image_new(
    width: u32,
    height: u32,
    data: *const u8,
    len: usize,
    out: *mut *mut PairaugImage,
) -> PairaugStatus {
    guard(|| {
        let bytes = slice_arg(data, len, "data")?;
        let img = ImageBuffer::new(width, height, bytes.to_vec())?;
        write_out(out, boxed(PairaugImage(img)), "out")
    })
}

/// Decodes a PNG or JPEG file to RGB.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_image_load(path: *const c_char, out: *mut *mut PairaugImage) -> PairaugStatus {
    guard(|| {
        let img = load_image(Path::new(str_arg(path, "path")?))?;
        write_out(out, boxed(PairaugImage(img)), "out")
    })
}

/// # Safety
/// `image` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pairaug_image_save_png(image: *const PairaugImage, path: *const c_char) -> PairaugStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        img.0.save_png(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Borrowed view of the pixel bytes; valid while `image` is alive.
///
/// # Safety
/// `image` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_image_data(
    image: *const PairaugImage,
    width: *mut u32,
    height: *mut u32,
    data: *mut *const u8,
    len: *mut usize,
) -> PairaugStatus {
    guard(|| {
        let img = &ref_arg(image, "image")?.0;
        write_out(width, img.width(), "width")?;
        write_out(height, img.height(), "height")?;
        write_out(data, img.data().as_ptr(), "data")?;
        write_out(len, img.data().len(), "len")
    })
}

/// # Safety
/// `image` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pairaug_image_free(image: *mut PairaugImage) {
    free(image);
}

/// Augments one sample. All three outputs are new handles owned by the caller.
///
/// # Safety
/// Input handles must be live; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_augment(
    policy: *const PairaugPolicy,
    sample: *const PairaugSample,
    image: *const PairaugImage,
    epoch: u64,
    out_sample: *mut *mut PairaugSample,
    out_image: *mut *mut PairaugImage,
    out_report: *mut *mut PairaugReport,
) -> PairaugStatus {
    guard(|| {
        let aug = &ref_arg(policy, "policy")?.0;
        let s = &ref_arg(sample, "sample")?.0;
        let img = &ref_arg(image, "image")?.0;
        if out_sample.is_null() || out_image.is_null() || out_report.is_null() {
            return Err(null_arg("output pointer"));
        }
        let (s2, img2, report) = aug.augment(s, img, epoch)?;
        write_out(out_sample, boxed(PairaugSample(s2)), "out_sample")?;
        write_out(out_image, boxed(PairaugImage(img2)), "out_image")?;
        write_out(out_report, boxed(PairaugReport(report)), "out_report")
    })
}

/// # Safety
/// `report` must be a live handle; `out` must be writable. Free the string
/// with [`pairaug_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pairaug_report_to_json(report: *const PairaugReport, out: *mut *mut c_char) -> PairaugStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let json = serde_json::to_string(&r.0).map_err(|e| Failure(PairaugStatus::Contract, e.to_string()))?;
        write_out(out, to_c_string(json)?, "out")
    })
}

/// # Safety
/// `report` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pairaug_report_free(report: *mut PairaugReport) {
    free(report);
}

/// Color-word check against the policy's lexicon, or the default one when
/// `policy` is null.
///
/// # Safety
/// `policy` must be null or live; `caption` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_contains_color_words(
    policy: *const PairaugPolicy,
    caption: *const c_char,
    out: *mut bool,
) -> PairaugStatus {
    guard(|| {
        let caption = str_arg(caption, "caption")?;
        let found = match policy.as_ref() {
            Some(p) => contains_color_words(caption, &p.0.lexicons.color),
            None => contains_color_words(caption, &Lexicons::default().color),
        };
        write_out(out, found, "out")
    })
}

/// # Safety
/// `policy` must be null or live; `caption` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_classify_flippability(
    policy: *const PairaugPolicy,
    caption: *const c_char,
    out: *mut PairaugFlippability,
) -> PairaugStatus {
    guard(|| {
        let caption = str_arg(caption, "caption")?;
        let class = match policy.as_ref() {
            Some(p) => classify_flippability(caption, &p.0.lexicons.positional),
            None => classify_flippability(caption, &Lexicons::default().positional),
        };
        let c = match class.label() {
            "freely_flippable" => PairaugFlippability::FreelyFlippable,
            "rewritable_flip" => PairaugFlippability::RewritableFlip,
            _ => PairaugFlippability::NotFlippable,
        };
        write_out(out, c, "out")
    })
}

/// # Safety
/// `image_id` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_derive_seed(
    global_seed: u64,
    image_id: *const c_char,
    epoch: u64,
    out: *mut u64,
) -> PairaugStatus {
    guard(|| {
        let id = str_arg(image_id, "image_id")?;
        write_out(out, pairaug::derive_seed(global_seed, id, epoch), "out")
    })
}

/// GIoU of two xyxy boxes.
///
/// # Safety
/// `a` and `b` must each point to 4 doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_giou(a: *const f64, b: *const f64, out: *mut f64) -> PairaugStatus {
    guard(|| {
        let a = bbox_array(slice_arg(a, 4, "a")?);
        let b = bbox_array(slice_arg(b, 4, "b")?);
        write_out(out, giou(&a[0], &b[0]), "out")
    })
}

/// Mean over `n` matched pairs of L1 plus (1 - GIoU). Boxes are `n * 4`
/// doubles, xyxy. `no_matches` may be null.
///
/// # Safety
/// `predicted` and `target` must point to `n * 4` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_box_loss(
    predicted: *const f64,
    target: *const f64,
    n: usize,
    out: *mut f64,
    no_matches: *mut bool,
) -> PairaugStatus {
    guard(|| {
        let p = bbox_array(slice_arg(predicted, n * 4, "predicted")?);
        let t = bbox_array(slice_arg(target, n * 4, "target")?);
        let v = box_loss(&BoxRegressionBatch::new(p, t)?);
        if !no_matches.is_null() {
            no_matches.write(v.no_matches);
        }
        write_out(out, v.value, "out")
    })
}

/// Object/token contrastive alignment loss.
///
/// `objects` is `num_objects * dim`, `tokens` is `num_tokens * dim`, both
/// row-major. `pairs` holds `num_pairs` (object, token) index pairs,
/// flattened.
///
/// # Safety
/// Array arguments must point to the stated number of elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_contrastive_loss(
    objects: *const f64,
    num_objects: usize,
    tokens: *const f64,
    num_tokens: usize,
    dim: usize,
    pairs: *const usize,
    num_pairs: usize,
    temperature: f64,
    out: *mut f64,
) -> PairaugStatus {
    guard(|| {
        let z = matrix(slice_arg(objects, num_objects * dim, "objects")?, num_objects, dim, "objects")?;
        let t = matrix(slice_arg(tokens, num_tokens * dim, "tokens")?, num_tokens, dim, "tokens")?;
        let flat = slice_arg(pairs, num_pairs * 2, "pairs")?;
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let sets = AlignmentSets::from_pairs(num_objects, num_tokens, &pairs)?;
        let v = contrastive_alignment_loss(&EmbeddingBatch::new(z, t)?, &sets, temperature)?;
        write_out(out, v, "out")
    })
}

/// Soft-token cross-entropy. `logits` is `rows * cols`; `positives` is a
/// `rows * cols` 0/1 mask marking each row's target tokens. Rows without
/// positives do not contribute.
///
/// # Safety
/// `logits` and `positives` must point to `rows * cols` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_soft_token_loss(
    logits: *const f64,
    positives: *const u8,
    rows: usize,
    cols: usize,
    out: *mut f64,
    no_matches: *mut bool,
) -> PairaugStatus {
    guard(|| {
        let l = matrix(slice_arg(logits, rows * cols, "logits")?, rows, cols, "logits")?;
        let mask = slice_arg(positives, rows * cols, "positives")?;
        let sets: Vec<Vec<usize>> = (0..rows)
            .map(|r| (0..cols).filter(|&c| mask[r * cols + c] != 0).collect())
            .collect();
        let batch = SoftTokenBatch::from_positive_sets(l, &sets)?;
        let v = soft_token_loss(&batch, batch.matched_rows());
        if !no_matches.is_null() {
            no_matches.write(v.no_matches);
        }
        write_out(out, v.value, "out")
    })
}

/// Evaluates a prediction file against an annotation file.
///
/// # Safety
/// Paths must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pairaug_eval_files(
    annotations: *const c_char,
    predictions: *const c_char,
    out: *mut PairaugMetrics,
) -> PairaugStatus {
    guard(|| {
        let a = Path::new(str_arg(annotations, "annotations")?);
        let p = Path::new(str_arg(predictions, "predictions")?);
        let s = evaluate_files(a, p)?;
        write_out(
            out,
            PairaugMetrics {
                queries: s.queries,
                ap: s.ap,
                r1: s.r1,
                r5: s.r5,
                r10: s.r10,
            },
            "out",
        )
    })
}
