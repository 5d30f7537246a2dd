//! `pairaug` command line: augment, validate, inspect, eval.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    annotations_to_json, image_dimensions, load_annotations, load_image, parse_annotations_unchecked,
    GroundingSample, ImageBuffer, Violation, ViolationKind,
};
use crate::error::Error;
use crate::metrics::{build_records, evaluate, PredictionFile};
use crate::pipeline::{for_each_ordered, AugPolicy, AugReport, Augmenter, FlipMode};
use crate::render;
use crate::text::Lexicons;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const LOG_ENV: &str = "PAIRAUG_LOG";

#[derive(Debug, Parser)]
#[command(name = "pairaug", version, about = "Correspondence-preserving augmentation for phrase-grounding data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment every sample and write images, annotations and a manifest.
    Augment(AugmentArgs),
    /// Check annotation invariants, optionally against the image files.
    Validate(ValidateArgs),
    /// Render one sample next to its augmented variants.
    Inspect(InspectArgs),
    /// Score predictions with AP and Recall@{1,5,10}.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Policy TOML; defaults apply when omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Overrides `[seed] global` from the policy.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Compute everything but write only the manifest.
    #[arg(long)]
    pub dry_run: bool,
    /// Lexicon override JSON.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Write JPEG (quality 95) instead of PNG. Not bit-exact across encoder versions.
    #[arg(long)]
    pub jpeg: bool,
    /// Write wall-clock and throughput statistics here.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Cross-check declared dimensions against image headers.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectAug {
    Thflip,
    #[value(alias = "thflip_plus")]
    ThflipPlus,
    Color,
    Blur,
    #[value(alias = "pixel_mask")]
    PixelMask,
    #[value(alias = "block_mask")]
    BlockMask,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub id: String,
    /// Augmentations to show, each forced on in its own panel.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub aug: Vec<InspectAug>,
    /// Composite PNG path. Captions go next to it as `<out>.txt`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Annotation file holding the ground truth.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Decode { .. } => EXIT_IO,
        Error::Parameter(_) => EXIT_USAGE,
        Error::Parse { .. } | Error::Validation { .. } | Error::Contract(_) | Error::UnknownQuery(_) => {
            EXIT_VALIDATION
        }
    }
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code_for(err)
}

fn load_policy(path: Option<&Path>, seed: Option<u64>) -> Result<AugPolicy, Error> {
    let mut policy = match path {
        None => AugPolicy::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            AugPolicy::from_toml_str(&text).map_err(|e| Error::Parameter(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(s) = seed {
        policy.seed.global = s;
    }
    Ok(policy)
}

fn load_lexicons(path: Option<&Path>) -> Result<Lexicons, Error> {
    match path {
        None => Ok(Lexicons::default()),
        Some(p) => Lexicons::load(p).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::Parameter(other.to_string()),
        }),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-sample line of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDigest {
    pub image_id: String,
    pub output_file: String,
    pub image_sha256: String,
    pub report_sha256: String,
}

/// Everything needed to rerun an `augment` invocation bit-for-bit.
///
/// `digest` covers the policy, seed, epoch, lexicon file contents and every
/// per-sample digest, and is independent of the paths involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub policy: AugPolicy,
    pub global_seed: u64,
    pub epoch: u64,
    pub input: String,
    pub images: String,
    pub output: String,
    pub lexicon: Option<String>,
    pub lexicon_sha256: Option<String>,
    pub image_format: String,
    pub samples_processed: usize,
    pub samples: Vec<SampleDigest>,
    pub digest: String,
}

impl RunManifest {
    fn compute_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.version.as_bytes());
        h.update(self.policy.to_toml_string().as_bytes());
        h.update(self.global_seed.to_le_bytes());
        h.update(self.epoch.to_le_bytes());
        h.update(self.lexicon_sha256.as_deref().unwrap_or("").as_bytes());
        h.update(self.image_format.as_bytes());
        for s in &self.samples {
            for field in [&s.image_id, &s.output_file, &s.image_sha256, &s.report_sha256] {
                h.update((field.len() as u64).to_le_bytes());
                h.update(field.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Timing for one run. Kept out of the manifest so outputs stay reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub samples_processed: usize,
    pub wall_clock_secs: f64,
    pub samples_per_sec: f64,
}

/// Output annotation name: `<input stem>-aug-e<epoch>.json`.
pub fn augmented_annotation_name(input: &Path, epoch: u64) -> String {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "annotations".into());
    format!("{stem}-aug-e{epoch}.json")
}

fn output_file_name(file_name: &str, jpeg: bool) -> String {
    let ext = if jpeg { "jpg" } else { "png" };
    Path::new(file_name)
        .with_extension(ext)
        .to_string_lossy()
        .into_owned()
}

struct SampleOutput {
    sample: GroundingSample,
    encoded: Vec<u8>,
    report: AugReport,
}

pub fn cmd_augment(args: &AugmentArgs) -> i32 {
    let started = Instant::now();
    let policy = match load_policy(args.policy.as_deref(), args.seed) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let lexicons = match load_lexicons(args.lexicon.as_deref()) {
        Ok(l) => l,
        Err(e) => return fail(&e),
    };
    let lexicon_sha256 = match &args.lexicon {
        None => None,
        Some(p) => match fs::read(p) {
            Ok(bytes) => Some(sha256_hex(&bytes)),
            Err(e) => return fail(&Error::io(p, e)),
        },
    };
    let augmenter = match Augmenter::new(policy.clone(), lexicons) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let samples = match load_annotations(&args.input) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let image_dir = args.out.join("images");
    let mkdir = |dir: &Path| fs::create_dir_all(dir).map_err(|e| Error::io(dir, e));
    let prepared = if args.dry_run {
        mkdir(&args.out)
    } else {
        mkdir(&image_dir)
    };
    if let Err(e) = prepared {
        return fail(&e);
    }
    info!(
        "augmenting {} samples with {} worker(s), epoch {}",
        samples.len(),
        args.jobs,
        args.epoch
    );

    let total = samples.len();
    let mut outputs: Vec<GroundingSample> = Vec::with_capacity(total);
    let mut reports: Vec<AugReport> = Vec::with_capacity(total);
    let mut digests: Vec<SampleDigest> = Vec::with_capacity(total);
    let mut failures: Vec<(String, Error)> = Vec::new();
    let epoch = args.epoch;
    let jpeg = args.jpeg;
    let images_in = args.images.clone();

    for_each_ordered(
        samples,
        args.jobs,
        |_, sample: GroundingSample| -> Result<SampleOutput, (String, Error)> {
            let id = sample.image_id.clone();
            let img = load_image(&sample.image_path(&images_in)).map_err(|e| (id.clone(), e))?;
            let (mut out, out_img, report) = augmenter
                .augment(&sample, &img, epoch)
                .map_err(|e| (id.clone(), e))?;
            out.file_name = output_file_name(&sample.file_name, jpeg);
            let encoded = if jpeg {
                out_img.encode_jpeg(95)
            } else {
                out_img.encode_png()
            };
            Ok(SampleOutput {
                sample: out,
                encoded,
                report,
            })
        },
        |i, result| match result {
            Err(f) => failures.push(f),
            Ok(o) => {
                if !args.dry_run {
                    let path = image_dir.join(&o.sample.file_name);
                    let written = path
                        .parent()
                        .map_or(Ok(()), fs::create_dir_all)
                        .and_then(|_| fs::write(&path, &o.encoded));
                    if let Err(e) = written {
                        failures.push((o.sample.image_id.clone(), Error::io(path, e)));
                        return;
                    }
                }
                let report_json = serde_json::to_vec(&o.report).expect("report serializes");
                digests.push(SampleDigest {
                    image_id: o.sample.image_id.clone(),
                    output_file: o.sample.file_name.clone(),
                    image_sha256: sha256_hex(&o.encoded),
                    report_sha256: sha256_hex(&report_json),
                });
                debug!("[{}/{}] {}", i + 1, total, o.sample.image_id);
                outputs.push(o.sample);
                reports.push(o.report);
            }
        },
    );

    if !failures.is_empty() {
        let mut code = EXIT_VALIDATION;
        for (id, err) in &failures {
            eprintln!("error: sample '{id}': {err}");
            if exit_code_for(err) == EXIT_IO {
                code = EXIT_IO;
            }
        }
        return code;
    }

    let mut manifest = RunManifest {
        tool: "pairaug".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        policy: policy.clone(),
        global_seed: policy.seed.global,
        epoch,
        input: args.input.display().to_string(),
        images: args.images.display().to_string(),
        output: args.out.display().to_string(),
        lexicon: args.lexicon.as_ref().map(|p| p.display().to_string()),
        lexicon_sha256,
        image_format: if jpeg { "jpeg".into() } else { "png".into() },
        samples_processed: outputs.len(),
        samples: digests,
        digest: String::new(),
    };
    manifest.digest = manifest.compute_digest();

    let mut writes: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    if !args.dry_run {
        writes.push((
            args.out.join(augmented_annotation_name(&args.input, epoch)),
            annotations_to_json(&outputs).into_bytes(),
        ));
        let mut jsonl = Vec::new();
        for r in &reports {
            serde_json::to_writer(&mut jsonl, r).expect("report serializes");
            jsonl.push(b'\n');
        }
        writes.push((args.out.join(format!("reports-e{epoch}.jsonl")), jsonl));
    }
    let mut manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_json.push(b'\n');
    writes.push((args.out.join("manifest.json"), manifest_json));
    for (path, bytes) in writes {
        if let Err(e) = fs::write(&path, bytes) {
            return fail(&Error::io(path, e));
        }
    }

    let secs = started.elapsed().as_secs_f64();
    let stats = RunStats {
        samples_processed: manifest.samples_processed,
        wall_clock_secs: secs,
        samples_per_sec: if secs > 0.0 {
            manifest.samples_processed as f64 / secs
        } else {
            0.0
        },
    };
    if let Some(p) = &args.stats {
        let json = serde_json::to_vec_pretty(&stats).expect("stats serialize");
        if let Err(e) = fs::write(p, json) {
            return fail(&Error::io(p, e));
        }
    }
    match args.format {
        Format::Text => println!(
            "augmented {} samples in {:.3}s ({:.1}/s), digest {}",
            stats.samples_processed, stats.wall_clock_secs, stats.samples_per_sec, manifest.digest
        ),
        Format::Json => println!(
            "{}",
            serde_json::json!({"stats": stats, "digest": manifest.digest})
        ),
    }
    EXIT_OK
}

#[derive(Debug, Serialize)]
struct ValidationReport<'a> {
    samples: usize,
    violations: &'a [Violation],
}

pub fn cmd_validate(args: &ValidateArgs) -> i32 {
    let text = match fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => return fail(&Error::io(&args.input, e)),
    };
    let samples = match parse_annotations_unchecked(&text, &args.input.display().to_string()) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let mut violations = Vec::new();
    for s in &samples {
        violations.extend(s.violations());
        if let Some(dir) = &args.images {
            match image_dimensions(&s.image_path(dir)) {
                Ok((w, h)) if (w, h) != (s.width, s.height) => violations.push(Violation {
                    image_id: s.image_id.clone(),
                    kind: ViolationKind::DimensionMismatch,
                    location: format!("annotation {}x{} vs image {w}x{h}", s.width, s.height),
                }),
                Ok(_) => {}
                Err(e) => return fail(&e),
            }
        }
    }
    match args.format {
        Format::Text => {
            for v in &violations {
                println!("{v}");
            }
            println!("{} samples, {} violations", samples.len(), violations.len());
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&ValidationReport {
                samples: samples.len(),
                violations: &violations,
            })
            .expect("report serializes")
        ),
    }
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

fn forced_policy(base: &AugPolicy, aug: InspectAug) -> AugPolicy {
    let mut p = base.clone();
    p.flip.prob = 0.0;
    p.color.prob = 0.0;
    p.blur.prob = 0.0;
    p.pixel_mask.prob = 0.0;
    p.block_mask.prob = 0.0;
    match aug {
        InspectAug::Thflip | InspectAug::ThflipPlus => {
            p.flip.enabled = true;
            p.flip.prob = 1.0;
            p.flip.mode = if aug == InspectAug::Thflip {
                FlipMode::Thflip
            } else {
                FlipMode::ThflipPlus
            };
        }
        InspectAug::Color => {
            p.color.enabled = true;
            p.color.prob = 1.0;
        }
        InspectAug::Blur => {
            p.blur.enabled = true;
            p.blur.prob = 1.0;
        }
        InspectAug::PixelMask => {
            p.pixel_mask.enabled = true;
            p.pixel_mask.prob = 1.0;
        }
        InspectAug::BlockMask => {
            p.block_mask.enabled = true;
            p.block_mask.prob = 1.0;
        }
    }
    p
}

fn annotated(sample: &GroundingSample, img: &ImageBuffer) -> ImageBuffer {
    let mut panel = img.clone();
    for (k, ann) in sample.annotations.iter().enumerate() {
        for b in &ann.boxes {
            render::draw_box(&mut panel, b, render::palette_color(k), 2);
        }
    }
    panel
}

fn aug_label(aug: InspectAug) -> &'static str {
    match aug {
        InspectAug::Thflip => "thflip",
        InspectAug::ThflipPlus => "thflip_plus",
        InspectAug::Color => "color",
        InspectAug::Blur => "blur",
        InspectAug::PixelMask => "pixel_mask",
        InspectAug::BlockMask => "block_mask",
    }
}

pub fn cmd_inspect(args: &InspectArgs) -> i32 {
    let base = match load_policy(args.policy.as_deref(), args.seed) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let lexicons = match load_lexicons(args.lexicon.as_deref()) {
        Ok(l) => l,
        Err(e) => return fail(&e),
    };
    let samples = match load_annotations(&args.input) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let Some(sample) = samples.iter().find(|s| s.image_id == args.id) else {
        eprintln!("error: no sample with image_id '{}'", args.id);
        return EXIT_VALIDATION;
    };
    let img = match load_image(&sample.image_path(&args.images)) {
        Ok(i) => i,
        Err(e) => return fail(&e),
    };

    let mut panels = vec![annotated(sample, &img)];
    let mut captions = vec![format!("[original] {}", sample.caption)];
    for &aug in &args.aug {
        let augmenter = match Augmenter::new(forced_policy(&base, aug), lexicons.clone()) {
            Ok(a) => a,
            Err(e) => return fail(&e),
        };
        let (out, out_img, report) = match augmenter.augment(sample, &img, args.epoch) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        let events: Vec<String> = report
            .events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes"))
            .collect();
        captions.push(format!(
            "[{}] {}  {}",
            aug_label(aug),
            out.caption,
            events.join(" ")
        ));
        panels.push(annotated(&out, &out_img));
    }

    let composite = render::side_by_side(&panels, 8);
    if let Err(e) = composite.save_png(&args.out) {
        return fail(&e);
    }
    let mut caption_path = args.out.clone().into_os_string();
    caption_path.push(".txt");
    let caption_text = captions.join("\n") + "\n";
    if let Err(e) = fs::write(&caption_path, &caption_text) {
        return fail(&Error::io(PathBuf::from(caption_path), e));
    }
    print!("{caption_text}");
    EXIT_OK
}

pub fn cmd_eval(args: &EvalArgs) -> i32 {
    let samples = match load_annotations(&args.input) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let preds = match PredictionFile::load(&args.predictions) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let records = match build_records(&samples, &preds) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let summary = evaluate(&records);
    match args.format {
        Format::Text => {
            println!("queries {}", summary.queries);
            println!("AP   {:.4}", summary.ap);
            println!("R@1  {:.4}", summary.r1);
            println!("R@5  {:.4}", summary.r5);
            println!("R@10 {:.4}", summary.r10);
        }
        Format::Json => println!("{}", serde_json::to_string(&summary).expect("summary serializes")),
    }
    EXIT_OK
}

pub fn run(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Augment(a) => cmd_augment(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
}
