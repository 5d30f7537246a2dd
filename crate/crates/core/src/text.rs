//! Caption analysis: color-word detection and left/right rewriting.
//!
//! Positional matching works on whitespace tokens with leading and trailing
//! ASCII punctuation trimmed, so `"upper-left,"` yields the token
//! `upper-left`. A token *bears a stem* when it is a lexicon form or when
//! one of its hyphen-separated segments starts with `left` or `right`.
//! That rule keeps `bright`, `copyright` and `upright` out, while unknown
//! constructions such as `leftover` still block rewriting.
//!
//! Rewrites only replace the stem bytes inside a matched token, so spans
//! covering `upper` in `upper-left` are unaffected by the edit.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::CharSpan;
use crate::error::{Error, Result};

pub const DEFAULT_COLORS: &[&str] = &[
    "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown", "black", "white",
    "gray", "grey", "tan", "beige", "gold", "golden", "silver", "maroon", "navy", "teal",
    "violet", "crimson", "turquoise", "olive",
];
pub const DEFAULT_COLOR_SUFFIXES: &[&str] = &["-ish"];
pub const DEFAULT_POSITIONAL_PREFIXES: &[&str] = &[
    "upper-", "top-", "bottom-", "far-", "lower-", "center-", "middle-",
];
pub const DEFAULT_POSITIONAL_SUFFIXES: &[&str] = &["-most", "-side", "-iest", "-middle", "-hand"];
pub const DEFAULT_CLOSED_FORMS: &[&str] = &["leftmost", "rightmost"];

fn normalize_affix(raw: &str) -> Result<String> {
    let s = raw.trim().trim_matches('-').to_string();
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
        return Err(Error::Parameter(format!(
            "lexicon entry '{raw}' must be non-empty lowercase without whitespace"
        )));
    }
    Ok(s)
}

/// Color vocabulary used to gate color jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorLexicon {
    terms: BTreeSet<String>,
    suffixes: BTreeSet<String>,
}

impl Default for ColorLexicon {
    fn default() -> Self {
        ColorLexicon::new(DEFAULT_COLORS.iter().copied(), DEFAULT_COLOR_SUFFIXES.iter().copied())
            .expect("default color lexicon is valid")
    }
}

impl ColorLexicon {
    pub fn new<'a>(
        terms: impl IntoIterator<Item = &'a str>,
        suffixes: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let terms = terms
            .into_iter()
            .map(normalize_affix)
            .collect::<Result<BTreeSet<_>>>()?;
        if terms.is_empty() {
            return Err(Error::Parameter("color lexicon is empty".into()));
        }
        let suffixes = suffixes
            .into_iter()
            .map(normalize_affix)
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(ColorLexicon { terms, suffixes })
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn suffixes(&self) -> impl Iterator<Item = &str> {
        self.suffixes.iter().map(String::as_str)
    }

    /// `word` must already be lowercase.
    pub fn matches_word(&self, word: &str) -> bool {
        if self.terms.contains(word) {
            return true;
        }
        self.suffixes.iter().any(|suffix| {
            let Some(stem) = word.strip_suffix(suffix.as_str()) else {
                return false;
            };
            if stem.is_empty() {
                return false;
            }
            if self.terms.contains(stem) {
                return true;
            }
            // reddish: doubled final consonant
            let mut chars = stem.chars();
            let last = chars.next_back();
            let undoubled = chars.as_str();
            if last.is_some() && undoubled.chars().next_back() == last && self.terms.contains(undoubled)
            {
                return true;
            }
            // bluish, whitish: dropped final 'e'
            self.terms.contains(&format!("{stem}e"))
        })
    }
}

/// True iff some word of `caption` is a color term or a suffixed variant.
pub fn contains_color_words(caption: &str, lex: &ColorLexicon) -> bool {
    caption
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .any(|w| lex.matches_word(&w.to_lowercase()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FormEntry {
    stem_offset: usize,
    side: Side,
    swapped: String,
}

/// Left/right keyword list with its prefix and suffix variants.
#[derive(Debug, Clone)]
pub struct PositionalLexicon {
    prefixes: BTreeSet<String>,
    suffixes: BTreeSet<String>,
    closed_forms: BTreeSet<String>,
    forms: HashMap<String, FormEntry>,
}

impl Default for PositionalLexicon {
    fn default() -> Self {
        PositionalLexicon::new(
            DEFAULT_POSITIONAL_PREFIXES.iter().copied(),
            DEFAULT_POSITIONAL_SUFFIXES.iter().copied(),
            DEFAULT_CLOSED_FORMS.iter().copied(),
        )
        .expect("default positional lexicon is valid")
    }
}

fn swap_at(form: &str, stem_offset: usize, side: Side) -> String {
    let stem_end = stem_offset + side.as_str().len();
    format!(
        "{}{}{}",
        &form[..stem_offset],
        side.opposite().as_str(),
        &form[stem_end..]
    )
}

impl PositionalLexicon {
    pub fn new<'a>(
        prefixes: impl IntoIterator<Item = &'a str>,
        suffixes: impl IntoIterator<Item = &'a str>,
        closed_forms: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let prefixes = prefixes
            .into_iter()
            .map(normalize_affix)
            .collect::<Result<BTreeSet<_>>>()?;
        let suffixes = suffixes
            .into_iter()
            .map(normalize_affix)
            .collect::<Result<BTreeSet<_>>>()?;
        let closed_forms = closed_forms
            .into_iter()
            .map(normalize_affix)
            .collect::<Result<BTreeSet<_>>>()?;

        let mut forms: HashMap<String, FormEntry> = HashMap::new();
        let mut add = |form: String, stem_offset: usize, side: Side| -> Result<()> {
            let swapped = swap_at(&form, stem_offset, side);
            for (f, s, off) in [(form, side, stem_offset), (swapped, side.opposite(), stem_offset)] {
                let entry = FormEntry {
                    stem_offset: off,
                    side: s,
                    swapped: swap_at(&f, off, s),
                };
                if let Some(existing) = forms.get(&f) {
                    if *existing != entry {
                        return Err(Error::Parameter(format!(
                            "positional form '{f}' is ambiguous"
                        )));
                    }
                } else {
                    forms.insert(f, entry);
                }
            }
            Ok(())
        };

        for side in Side::BOTH {
            let stem = side.as_str();
            let mut heads = vec![(String::new(), 0usize)];
            for p in &prefixes {
                heads.push((format!("{p}-"), p.len() + 1));
                heads.push((p.clone(), p.len()));
            }
            let mut tails = vec![String::new()];
            for s in &suffixes {
                tails.push(s.clone());
                tails.push(format!("-{s}"));
            }
            for (head, offset) in &heads {
                for tail in &tails {
                    add(format!("{head}{stem}{tail}"), *offset, side)?;
                }
            }
        }
        for form in &closed_forms {
            let found = Side::BOTH
                .iter()
                .filter_map(|&s| form.find(s.as_str()).map(|i| (i, s)))
                .min();
            let Some((offset, side)) = found else {
                return Err(Error::Parameter(format!(
                    "closed form '{form}' contains neither 'left' nor 'right'"
                )));
            };
            add(form.clone(), offset, side)?;
        }

        let lex = PositionalLexicon {
            prefixes,
            suffixes,
            closed_forms,
            forms,
        };
        for (form, entry) in &lex.forms {
            if lex.swap(&entry.swapped).as_deref() != Some(form.as_str()) {
                return Err(Error::Parameter(format!(
                    "positional form '{form}' does not swap back to itself"
                )));
            }
        }
        Ok(lex)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &str> {
        self.prefixes.iter().map(String::as_str)
    }

    pub fn suffixes(&self) -> impl Iterator<Item = &str> {
        self.suffixes.iter().map(String::as_str)
    }

    pub fn closed_forms(&self) -> impl Iterator<Item = &str> {
        self.closed_forms.iter().map(String::as_str)
    }

    /// All registered forms, sorted.
    pub fn forms(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.forms.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, form: &str) -> bool {
        self.forms.contains_key(form)
    }

    /// The mirrored form of a lowercase lexicon word.
    pub fn swap(&self, form: &str) -> Option<String> {
        self.forms.get(form).map(|e| e.swapped.clone())
    }
}

/// One positional keyword found in a caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    /// The whole token.
    pub span: CharSpan,
    /// The `left`/`right` bytes inside the token.
    pub stem: CharSpan,
    /// Lowercase lexicon form equal to the token.
    pub matched_form: String,
    /// Lowercase lexicon form the token becomes.
    pub replacement: String,
}

/// Whitespace tokens with outer ASCII punctuation trimmed, as byte spans.
fn tokens(caption: &str) -> impl Iterator<Item = CharSpan> + '_ {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in caption.char_indices().chain(std::iter::once((caption.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(CharSpan::new(s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    spans.into_iter().filter_map(move |span| {
        let raw = &caption[span.start..span.end];
        let trimmed_start = raw.trim_start_matches(|c: char| c.is_ascii_punctuation());
        let trimmed = trimmed_start.trim_end_matches(|c: char| c.is_ascii_punctuation());
        if trimmed.is_empty() {
            return None;
        }
        let start = span.start + (raw.len() - trimmed_start.len());
        Some(CharSpan::new(start, start + trimmed.len()))
    })
}

fn match_token(caption: &str, token: CharSpan, lex: &PositionalLexicon) -> Option<TermMatch> {
    let lower = caption[token.start..token.end].to_ascii_lowercase();
    let entry = lex.forms.get(&lower)?;
    let stem_start = token.start + entry.stem_offset;
    Some(TermMatch {
        span: token,
        stem: CharSpan::new(stem_start, stem_start + entry.side.as_str().len()),
        matched_form: lower,
        replacement: entry.swapped.clone(),
    })
}

fn bears_stem(lower_token: &str) -> bool {
    lower_token
        .split('-')
        .any(|seg| seg.starts_with("left") || seg.starts_with("right"))
}

/// Lexicon forms occurring as whole tokens, left to right.
pub fn find_positional_terms(caption: &str, lex: &PositionalLexicon) -> Vec<TermMatch> {
    tokens(caption)
        .filter_map(|t| match_token(caption, t, lex))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Flippability {
    /// No positional wording; the image may be mirrored as-is.
    FreelyFlippable,
    /// Every positional token is a known form and can be swapped.
    RewritableFlip { matches: Vec<TermMatch> },
    /// Some token carries a stem in a construction the lexicon does not know.
    NotFlippable { token: String },
}

impl Flippability {
    pub fn label(&self) -> &'static str {
        match self {
            Flippability::FreelyFlippable => "freely_flippable",
            Flippability::RewritableFlip { .. } => "rewritable_flip",
            Flippability::NotFlippable { .. } => "not_flippable",
        }
    }
}

pub fn classify_flippability(caption: &str, lex: &PositionalLexicon) -> Flippability {
    let mut matches = Vec::new();
    for token in tokens(caption) {
        if let Some(m) = match_token(caption, token, lex) {
            matches.push(m);
        } else if bears_stem(&caption[token.start..token.end].to_ascii_lowercase()) {
            return Flippability::NotFlippable {
                token: caption[token.start..token.end].to_string(),
            };
        }
    }
    if matches.is_empty() {
        Flippability::FreelyFlippable
    } else {
        Flippability::RewritableFlip { matches }
    }
}

/// One replaced byte range, in both old and new coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub old_start: usize,
    pub old_end: usize,
    pub new_start: usize,
    pub new_end: usize,
}

impl Edit {
    pub fn delta(&self) -> isize {
        (self.new_end - self.new_start) as isize - (self.old_end - self.old_start) as isize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub new_caption: String,
    /// Sorted, non-overlapping.
    pub edits: Vec<Edit>,
}

impl RewriteResult {
    fn shift(o: usize, delta: isize) -> usize {
        (o as isize + delta) as usize
    }

    /// Maps a span start. Offsets inside an edit snap to the edit's new start.
    pub fn remap_start(&self, offset: usize) -> usize {
        let mut delta = 0isize;
        for e in &self.edits {
            if offset <= e.old_start {
                break;
            }
            if offset < e.old_end {
                return e.new_start;
            }
            delta += e.delta();
        }
        Self::shift(offset, delta)
    }

    /// Maps a span end. Offsets inside an edit snap to the edit's new end.
    pub fn remap_end(&self, offset: usize) -> usize {
        let mut delta = 0isize;
        for e in &self.edits {
            if offset <= e.old_start {
                break;
            }
            if offset < e.old_end {
                return e.new_end;
            }
            delta += e.delta();
        }
        Self::shift(offset, delta)
    }

    pub fn remap_span(&self, span: CharSpan) -> CharSpan {
        CharSpan::new(self.remap_start(span.start), self.remap_end(span.end))
    }
}

fn swapped_stem(original: &str) -> String {
    let side = if original.eq_ignore_ascii_case("left") {
        Side::Left
    } else {
        Side::Right
    };
    let mut out = side.opposite().as_str().to_string();
    if original.starts_with(|c: char| c.is_ascii_uppercase()) {
        out[..1].make_ascii_uppercase();
    }
    out
}

/// Swaps the stem of every match and records the byte edits.
pub fn rewrite_caption(caption: &str, matches: &[TermMatch]) -> Result<RewriteResult> {
    let mut prev_end = 0usize;
    for (i, m) in matches.iter().enumerate() {
        if i > 0 && m.span.start < prev_end {
            return Err(Error::Contract(format!(
                "positional matches overlap or are unsorted at [{}, {})",
                m.span.start, m.span.end
            )));
        }
        prev_end = m.span.end;
        let token = m.span.slice(caption).ok_or_else(|| {
            Error::Contract(format!(
                "match [{}, {}) is not a valid span of the caption",
                m.span.start, m.span.end
            ))
        })?;
        if !token.eq_ignore_ascii_case(&m.matched_form) {
            return Err(Error::Contract(format!(
                "caption text '{token}' does not match form '{}'",
                m.matched_form
            )));
        }
        let stem_ok = m.stem.start >= m.span.start
            && m.stem.end <= m.span.end
            && m.stem
                .slice(caption)
                .is_some_and(|s| s.eq_ignore_ascii_case("left") || s.eq_ignore_ascii_case("right"));
        if !stem_ok {
            return Err(Error::Contract(format!(
                "stem [{}, {}) is not a left/right stem inside its token",
                m.stem.start, m.stem.end
            )));
        }
    }

    let mut new_caption = String::with_capacity(caption.len() + matches.len());
    let mut edits = Vec::with_capacity(matches.len());
    let mut cursor = 0usize;
    for m in matches {
        new_caption.push_str(&caption[cursor..m.stem.start]);
        let new_start = new_caption.len();
        new_caption.push_str(&swapped_stem(&caption[m.stem.start..m.stem.end]));
        edits.push(Edit {
            old_start: m.stem.start,
            old_end: m.stem.end,
            new_start,
            new_end: new_caption.len(),
        });
        cursor = m.stem.end;
    }
    new_caption.push_str(&caption[cursor..]);
    Ok(RewriteResult { new_caption, edits })
}

/// Lexicon override file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconOverrides {
    pub colors: Vec<String>,
    pub color_suffixes: Vec<String>,
    pub positional_prefixes: Vec<String>,
    pub positional_suffixes: Vec<String>,
    pub positional_closed_forms: Vec<String>,
    /// Replace the defaults instead of extending them.
    pub replace: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Lexicons {
    pub color: ColorLexicon,
    pub positional: PositionalLexicon,
}

impl Lexicons {
    pub fn with_overrides(o: &LexiconOverrides) -> Result<Self> {
        let merge = |defaults: &[&'static str], extra: &[String]| -> Vec<String> {
            let mut v: Vec<String> = if o.replace {
                Vec::new()
            } else {
                defaults.iter().map(|s| s.to_string()).collect()
            };
            v.extend(extra.iter().cloned());
            v
        };
        let colors = merge(DEFAULT_COLORS, &o.colors);
        let color_suffixes = merge(DEFAULT_COLOR_SUFFIXES, &o.color_suffixes);
        let prefixes = merge(DEFAULT_POSITIONAL_PREFIXES, &o.positional_prefixes);
        let suffixes = merge(DEFAULT_POSITIONAL_SUFFIXES, &o.positional_suffixes);
        let closed = merge(DEFAULT_CLOSED_FORMS, &o.positional_closed_forms);
        Ok(Lexicons {
            color: ColorLexicon::new(
                colors.iter().map(String::as_str),
                color_suffixes.iter().map(String::as_str),
            )?,
            positional: PositionalLexicon::new(
                prefixes.iter().map(String::as_str),
                suffixes.iter().map(String::as_str),
                closed.iter().map(String::as_str),
            )?,
        })
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let o: LexiconOverrides = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: origin.to_string(),
            message: e.to_string(),
        })?;
        Self::with_overrides(&o)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos() -> PositionalLexicon {
        PositionalLexicon::default()
    }

    #[test]
    fn color_examples() {
        let lex = ColorLexicon::default();
        assert!(contains_color_words("a man in a red shirt", &lex));
        assert!(contains_color_words("A man in a Red shirt.", &lex));
        assert!(!contains_color_words("two dogs running", &lex));
        assert!(contains_color_words("a reddish sunset", &lex));
        assert!(contains_color_words("a bluish glow", &lex));
        assert!(contains_color_words("the red-haired girl", &lex));
        assert!(!contains_color_words("a redwood forest", &lex));
    }

    #[test]
    fn man_on_the_left() {
        let m = find_positional_terms("the man on the left", &pos());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].span, CharSpan::new(15, 19));
        assert_eq!(m[0].replacement, "right");
    }

    #[test]
    fn substrings_do_not_match() {
        assert!(find_positional_terms("a bright copyright sign", &pos()).is_empty());
        assert_eq!(
            classify_flippability("a bright copyright sign", &pos()),
            Flippability::FreelyFlippable
        );
    }

    #[test]
    fn variants_match() {
        let m = find_positional_terms("the leftmost of two upper-right windows", &pos());
        let got: Vec<(&str, &str)> = m
            .iter()
            .map(|t| (t.matched_form.as_str(), t.replacement.as_str()))
            .collect();
        assert_eq!(got, vec![("leftmost", "rightmost"), ("upper-right", "upper-left")]);
    }

    #[test]
    fn classification_table() {
        let lex = pos();
        let cases: &[(&str, &str)] = &[
            ("a dog chasing a ball", "freely_flippable"),
            ("girl on the right side", "rewritable_flip"),
            ("he has the right answer", "rewritable_flip"),
            ("leftover pizza on a plate", "not_flippable"),
            ("the rightly famous tower", "not_flippable"),
            ("far-left chair, bottom-right lamp", "rewritable_flip"),
            ("the left-hand door", "rewritable_flip"),
            ("an upright piano", "freely_flippable"),
            ("turn left-ish here", "not_flippable"),
        ];
        for (caption, want) in cases {
            assert_eq!(classify_flippability(caption, &lex).label(), *want, "{caption}");
        }
    }

    #[test]
    fn rewrite_simple_and_capitalized() {
        let lex = pos();
        let c = "the man on the left";
        let r = rewrite_caption(c, &find_positional_terms(c, &lex)).unwrap();
        assert_eq!(r.new_caption, "the man on the right");
        assert_eq!(r.remap_span(CharSpan::new(4, 7)), CharSpan::new(4, 7));
        assert_eq!(r.remap_span(CharSpan::new(15, 19)), CharSpan::new(15, 20));

        let c = "Left dog, right cat";
        let r = rewrite_caption(c, &find_positional_terms(c, &lex)).unwrap();
        assert_eq!(r.new_caption, "Right dog, left cat");
    }

    #[test]
    fn remap_snaps_partial_spans() {
        let r = rewrite_caption("on the left side", &find_positional_terms("on the left side", &pos()))
            .unwrap();
        // [8, 10) is "ft", inside the edited stem
        assert_eq!(r.remap_span(CharSpan::new(8, 10)), CharSpan::new(7, 12));
        assert_eq!(r.remap_span(CharSpan::new(12, 16)), CharSpan::new(13, 17));
    }

    #[test]
    fn overlapping_matches_rejected() {
        let lex = pos();
        let mut m = find_positional_terms("left right", &lex);
        m.swap(0, 1);
        assert!(matches!(rewrite_caption("left right", &m), Err(Error::Contract(_))));
    }

    #[test]
    fn swap_is_involution() {
        let lex = pos();
        for f in lex.forms() {
            let s = lex.swap(f).unwrap();
            assert_eq!(lex.swap(&s).as_deref(), Some(f));
            assert_ne!(s, f);
        }
    }

    #[test]
    fn overrides_extend_or_replace() {
        let ext = Lexicons::from_json(r#"{"colors": ["magenta"]}"#, "mem").unwrap();
        assert!(contains_color_words("magenta scarf", &ext.color));
        assert!(contains_color_words("red scarf", &ext.color));
        let rep = Lexicons::from_json(r#"{"colors": ["magenta"], "replace": true}"#, "mem").unwrap();
        assert!(!contains_color_words("red scarf", &rep.color));
        assert!(!rep.positional.contains("leftmost"));
        assert!(rep.positional.contains("left"));
        assert!(Lexicons::from_json(r#"{"colours": []}"#, "mem").is_err());
        assert!(Lexicons::from_json(r#"{"positional_closed_forms": ["middle"]}"#, "mem").is_err());
    }
}
