//! Reference evaluations of the grounding training losses.
//!
//! These are plain numeric evaluations for checking a training stack
//! against, not differentiable operators. Indices are zero-based.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, Axis};

use crate::dataset::BBox;
use crate::error::{Error, Result};

/// Temperature used by the contrastive alignment loss in MDETR-style training.
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

/// A loss value plus a flag for batches without any matched object, which
/// evaluate to zero by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub no_matches: bool,
}

/// Object query embeddings (L x D) and caption token embeddings (E x D).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    objects: Array2<f64>,
    tokens: Array2<f64>,
}

impl EmbeddingBatch {
    pub fn new(objects: Array2<f64>, tokens: Array2<f64>) -> Result<Self> {
        let (l, d) = objects.dim();
        let (e, d2) = tokens.dim();
        if l == 0 || e == 0 || d == 0 {
            return Err(Error::Contract(format!(
                "embedding batch needs L, E, D >= 1, got L={l} E={e} D={d}"
            )));
        }
        if d != d2 {
            return Err(Error::Contract(format!(
                "object embeddings have length {d}, token embeddings {d2}"
            )));
        }
        if !objects.iter().chain(tokens.iter()).all(|v| v.is_finite()) {
            return Err(Error::Contract("embeddings must be finite".into()));
        }
        Ok(EmbeddingBatch { objects, tokens })
    }

    pub fn num_objects(&self) -> usize {
        self.objects.nrows()
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn objects(&self) -> &Array2<f64> {
        &self.objects
    }

    pub fn tokens(&self) -> &Array2<f64> {
        &self.tokens
    }
}

/// Positive object/token pairs, indexed both ways.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentSets {
    object_tokens: Vec<BTreeSet<usize>>,
    token_objects: Vec<BTreeSet<usize>>,
}

impl AlignmentSets {
    /// Builds both views from `(object, token)` pairs. Duplicates are merged.
    pub fn from_pairs(num_objects: usize, num_tokens: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut object_tokens = vec![BTreeSet::new(); num_objects];
        let mut token_objects = vec![BTreeSet::new(); num_tokens];
        for &(i, j) in pairs {
            if i >= num_objects || j >= num_tokens {
                return Err(Error::Contract(format!(
                    "pair ({i}, {j}) outside {num_objects} objects x {num_tokens} tokens"
                )));
            }
            object_tokens[i].insert(j);
            token_objects[j].insert(i);
        }
        Ok(AlignmentSets {
            object_tokens,
            token_objects,
        })
    }

    pub fn tokens_of(&self, object: usize) -> &BTreeSet<usize> {
        &self.object_tokens[object]
    }

    pub fn objects_of(&self, token: usize) -> &BTreeSet<usize> {
        &self.token_objects[token]
    }

    /// Objects with at least one positive token.
    pub fn n_plus(&self) -> usize {
        self.object_tokens.iter().filter(|s| !s.is_empty()).count()
    }
}

/// `-ln softmax(v)[j]` for every `j`.
///
/// Shifted by the maximum and summed with `ln_1p`, so a dominant entry
/// still gets its tiny loss instead of cancelling to zero.
fn neg_log_softmax(v: ArrayView1<'_, f64>) -> Vec<f64> {
    let (arg, max) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(a, m), (k, &x)| if x > m { (k, x) } else { (a, m) });
    let rest: f64 = v
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != arg)
        .map(|(_, &x)| (x - max).exp())
        .sum();
    let tail = rest.ln_1p();
    v.iter().map(|&x| (max - x) + tail).collect()
}

/// Symmetric object/token InfoNCE, `(L_o + L_t) / 2`.
///
/// Objects with no positive token (and tokens with no positive object)
/// contribute nothing.
pub fn contrastive_alignment_loss(
    batch: &EmbeddingBatch,
    sets: &AlignmentSets,
    tau: f64,
) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Parameter(format!("temperature {tau} must be > 0")));
    }
    let (l, e) = (batch.num_objects(), batch.num_tokens());
    if sets.object_tokens.len() != l || sets.token_objects.len() != e {
        return Err(Error::Contract(format!(
            "alignment sets sized {}x{} for a {l}x{e} batch",
            sets.object_tokens.len(),
            sets.token_objects.len()
        )));
    }
    let logits = batch.objects.dot(&batch.tokens.t()) / tau;

    let mut object_term = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let positives = &sets.object_tokens[i];
        if positives.is_empty() {
            continue;
        }
        let nls = neg_log_softmax(row);
        let sum: f64 = positives.iter().map(|&j| nls[j]).sum();
        object_term += sum / positives.len() as f64;
    }

    let mut token_term = 0.0;
    for (j, col) in logits.axis_iter(Axis(1)).enumerate() {
        let positives = &sets.token_objects[j];
        if positives.is_empty() {
            continue;
        }
        let nls = neg_log_softmax(col);
        let sum: f64 = positives.iter().map(|&i| nls[i]).sum();
        token_term += sum / positives.len() as f64;
    }

    Ok((object_term + token_term) / 2.0)
}

/// Per-object token logits (L x E) and target distributions.
///
/// A target row is either all zeros (unmatched object, excluded) or uniform
/// over that object's positive tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTokenBatch {
    logits: Array2<f64>,
    targets: Array2<f64>,
}

impl SoftTokenBatch {
    pub fn new(logits: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if logits.dim() != targets.dim() {
            return Err(Error::Contract(format!(
                "logits {:?} and targets {:?} differ in shape",
                logits.dim(),
                targets.dim()
            )));
        }
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::Contract("logits must be finite".into()));
        }
        for (i, row) in targets.axis_iter(Axis(0)).enumerate() {
            let support: Vec<f64> = row.iter().copied().filter(|&v| v != 0.0).collect();
            if support.is_empty() {
                continue;
            }
            let expected = 1.0 / support.len() as f64;
            if support.iter().any(|&v| (v - expected).abs() > 1e-12) {
                return Err(Error::Contract(format!(
                    "target row {i} is not uniform over its positive tokens"
                )));
            }
        }
        Ok(SoftTokenBatch { logits, targets })
    }

    /// Targets uniform over `positives[i]` for each object `i`.
    pub fn from_positive_sets(logits: Array2<f64>, positives: &[Vec<usize>]) -> Result<Self> {
        let (l, e) = logits.dim();
        if positives.len() != l {
            return Err(Error::Contract(format!(
                "{} positive sets for {l} objects",
                positives.len()
            )));
        }
        let mut targets = Array2::zeros((l, e));
        for (i, set) in positives.iter().enumerate() {
            let set: BTreeSet<usize> = set.iter().copied().collect();
            if let Some(&j) = set.iter().find(|&&j| j >= e) {
                return Err(Error::Contract(format!("token {j} outside {e} tokens")));
            }
            for &j in &set {
                targets[[i, j]] = 1.0 / set.len() as f64;
            }
        }
        SoftTokenBatch::new(logits, targets)
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    /// Rows with a non-empty target.
    pub fn matched_rows(&self) -> usize {
        self.targets
            .axis_iter(Axis(0))
            .filter(|r| r.iter().any(|&v| v != 0.0))
            .count()
    }
}

/// Cross entropy of the soft token predictions, summed over matched rows
/// and divided by `n_plus`.
pub fn soft_token_loss(batch: &SoftTokenBatch, n_plus: usize) -> LossValue {
    if n_plus == 0 {
        return LossValue {
            value: 0.0,
            no_matches: true,
        };
    }
    let mut total = 0.0;
    for (row, target) in batch
        .logits
        .axis_iter(Axis(0))
        .zip(batch.targets.axis_iter(Axis(0)))
    {
        if target.iter().all(|&v| v == 0.0) {
            continue;
        }
        total += neg_log_softmax(row)
            .iter()
            .zip(target.iter())
            .filter(|(_, &t)| t != 0.0)
            .map(|(&nls, &t)| t * nls)
            .sum::<f64>();
    }
    LossValue {
        value: total / n_plus as f64,
        no_matches: false,
    }
}

/// Generalized IoU: IoU minus the hull's share not covered by the union.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    if hull > 0.0 {
        iou - (hull - union) / hull
    } else {
        iou
    }
}

/// Matched prediction/target box pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegressionBatch {
    predicted: Vec<BBox>,
    target: Vec<BBox>,
}

impl BoxRegressionBatch {
    pub fn new(predicted: Vec<BBox>, target: Vec<BBox>) -> Result<Self> {
        if predicted.len() != target.len() {
            return Err(Error::Contract(format!(
                "{} predicted boxes for {} targets",
                predicted.len(),
                target.len()
            )));
        }
        if let Some(b) = predicted.iter().chain(&target).find(|b| !b.is_proper()) {
            return Err(Error::Contract(format!("invalid box {:?}", b.to_array())));
        }
        Ok(BoxRegressionBatch { predicted, target })
    }

    pub fn n_plus(&self) -> usize {
        self.predicted.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&BBox, &BBox)> {
        self.predicted.iter().zip(&self.target)
    }
}

fn l1(a: &BBox, b: &BBox) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .sum()
}

/// Mean over matched pairs of `L1 + (1 - GIoU)`.
pub fn box_loss(batch: &BoxRegressionBatch) -> LossValue {
    let n = batch.n_plus();
    if n == 0 {
        return LossValue {
            value: 0.0,
            no_matches: true,
        };
    }
    let total: f64 = batch.pairs().map(|(c, t)| l1(c, t) + (1.0 - giou(c, t))).sum();
    LossValue {
        value: total / n as f64,
        no_matches: false,
    }
}
