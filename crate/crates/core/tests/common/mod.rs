#![allow(dead_code, clippy::needless_range_loop)]

pub mod loss_oracle;
pub mod metric_oracle;

use std::path::Path;

use pairaug::dataset::{BBox, CharSpan, GroundingSample, ImageBuffer, PhraseAnnotation, BOX_GRID};
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "a", "the", "man", "woman", "dog", "cat", "cup", "table", "on", "of", "near", "with", "red",
    "blue", "shirt", "hat", "window", "chair", "lamp", "left", "right", "Left", "Right",
    "leftmost", "rightmost", "upper-left", "bottom-right", "far-left", "left-hand", "right-side",
    "bright", "copyright", "upright", "leftover", "righteous", "sitting", "standing", "big",
    "small", "grey", "greenish", "café", "naïve", "two", "three",
];

pub const PUNCT: &[&str] = &["", "", "", ",", ".", "!", ";"];

/// Caption of whole tokens plus the byte span of each token (punctuation excluded).
pub fn random_caption<R: Rng>(rng: &mut R) -> (String, Vec<CharSpan>) {
    let n = rng.gen_range(2..10);
    let mut caption = String::new();
    let mut spans = Vec::new();
    for i in 0..n {
        if i > 0 {
            caption.push(' ');
        }
        let w = WORDS.choose(rng).unwrap();
        let start = caption.len();
        caption.push_str(w);
        spans.push(CharSpan::new(start, caption.len()));
        caption.push_str(PUNCT.choose(rng).unwrap());
    }
    (caption, spans)
}

pub fn grid_coord<R: Rng>(rng: &mut R, max: u32) -> f64 {
    let steps = (f64::from(max) / BOX_GRID) as u64;
    rng.gen_range(0..=steps) as f64 * BOX_GRID
}

pub fn random_box<R: Rng>(rng: &mut R, w: u32, h: u32) -> BBox {
    loop {
        let (a, b) = (grid_coord(rng, w), grid_coord(rng, w));
        let (c, d) = (grid_coord(rng, h), grid_coord(rng, h));
        let b = BBox::new(a.min(b), c.min(d), a.max(b), c.max(d));
        if b.is_proper() {
            return b;
        }
    }
}

pub fn random_image<R: Rng>(rng: &mut R, w: u32, h: u32) -> ImageBuffer {
    let data = (0..w * h * 3).map(|_| rng.gen()).collect();
    ImageBuffer::new(w, h, data).unwrap()
}

/// A valid sample whose spans cover whole tokens or runs of tokens.
pub fn random_sample<R: Rng>(rng: &mut R, id: usize) -> GroundingSample {
    let (w, h) = (rng.gen_range(4..48), rng.gen_range(4..48));
    let (caption, tokens) = random_caption(rng);
    let n_ann = rng.gen_range(0..4);
    let annotations = (0..n_ann)
        .map(|_| {
            let n_spans = rng.gen_range(1..3);
            let spans = (0..n_spans)
                .map(|_| {
                    let a = rng.gen_range(0..tokens.len());
                    let b = rng.gen_range(a..tokens.len());
                    CharSpan::new(tokens[a].start, tokens[b].end)
                })
                .collect();
            let boxes = (0..rng.gen_range(1..4)).map(|_| random_box(rng, w, h)).collect();
            PhraseAnnotation { spans, boxes }
        })
        .collect();
    GroundingSample {
        image_id: format!("img-{id:05}"),
        file_name: format!("img-{id:05}.png"),
        width: w,
        height: h,
        caption,
        annotations,
    }
}

pub fn write_png(path: &Path, img: &ImageBuffer) {
    img.save_png(path).unwrap();
}

/// Every left/right form the default lexicon should know, written out by hand
/// from its prefix and suffix lists.
pub fn expected_positional_forms() -> Vec<String> {
    let prefixes = ["upper", "top", "bottom", "far", "lower", "center", "middle"];
    let suffixes = ["most", "side", "iest", "middle", "hand"];
    let mut out = Vec::new();
    for stem in ["left", "right"] {
        out.push(stem.to_string());
        for p in prefixes {
            out.push(format!("{p}-{stem}"));
            out.push(format!("{p}{stem}"));
        }
        for s in suffixes {
            out.push(format!("{stem}{s}"));
            out.push(format!("{stem}-{s}"));
        }
        for p in prefixes {
            for s in suffixes {
                for head in [format!("{p}-"), p.to_string()] {
                    out.push(format!("{head}{stem}{s}"));
                    out.push(format!("{head}{stem}-{s}"));
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

pub const ADVERSARIAL: &[&str] = &[
    "bright", "brightly", "brighter", "brightest", "brightness", "copyright", "copyrighted",
    "upright", "uprights", "forthright", "downright", "outright", "alright", "playwright",
    "wright", "birthright", "overleft", "cleft", "bereft", "theft", "deft", "heft", "weft",
    "fright", "frightened", "wrights",
];

/// Swaps `left`/`right` in a lowercase form the slow way: find the stem by
/// trying both names at every offset after a prefix boundary.
pub fn oracle_swap(form: &str) -> String {
    for (i, _) in form.char_indices() {
        let at_boundary = i == 0 || form.as_bytes()[i - 1] == b'-' || {
            let head = &form[..i];
            ["upper", "top", "bottom", "far", "lower", "center", "middle"].contains(&head)
        };
        if !at_boundary {
            continue;
        }
        if let Some(rest) = form[i..].strip_prefix("left") {
            return format!("{}right{rest}", &form[..i]);
        }
        if let Some(rest) = form[i..].strip_prefix("right") {
            return format!("{}left{rest}", &form[..i]);
        }
    }
    panic!("{form} has no stem");
}

/// Writes `n` random samples and their PNGs under `dir`; returns the
/// annotation path and the image directory.
pub fn write_dataset(dir: &Path, n: usize, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let samples: Vec<_> = (0..n).map(|i| random_sample(&mut rng, i)).collect();
    for s in &samples {
        write_png(&s.image_path(&images), &random_image(&mut rng, s.width, s.height));
    }
    let ann = dir.join("ann.json");
    pairaug::dataset::save_annotations(&samples, &ann).unwrap();
    (ann, images)
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
