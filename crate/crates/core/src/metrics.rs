//! Phrase-grounding evaluation: AP over IoU thresholds and Recall@K.
//!
//! AP pools predictions from every query into one ranking (dataset-level
//! pooling, not a per-phrase average). Equal scores keep input order:
//! records in order, predictions within a record in order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_annotations, BBox, GroundingSample};
use crate::error::{Error, Result};

pub const DEFAULT_RECALL_IOU: f64 = 0.5;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn default_ap_thresholds() -> Vec<f64> {
    (0..10).map(|k| f64::from(50 + 5 * k) / 100.0).collect()
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub score: f64,
}

/// Ground truth and scored predictions for one query phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub query_id: String,
    pub gt_boxes: Vec<BBox>,
    pub predictions: Vec<ScoredBox>,
}

impl EvalRecord {
    pub fn new(query_id: impl Into<String>, gt_boxes: Vec<BBox>, predictions: Vec<ScoredBox>) -> Result<Self> {
        let query_id = query_id.into();
        if gt_boxes.is_empty() {
            return Err(Error::Contract(format!("query '{query_id}' has no ground truth")));
        }
        if predictions.iter().any(|p| !p.score.is_finite()) {
            return Err(Error::Contract(format!("query '{query_id}' has a non-finite score")));
        }
        Ok(EvalRecord {
            query_id,
            gt_boxes,
            predictions,
        })
    }

    /// Prediction indices by descending score, stable on ties.
    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.predictions.len()).collect();
        idx.sort_by(|&a, &b| {
            self.predictions[b]
                .score
                .total_cmp(&self.predictions[a].score)
        });
        idx
    }
}

/// AP at one IoU threshold.
pub fn average_precision_at(records: &[EvalRecord], threshold: f64) -> f64 {
    let total_gt: usize = records.iter().map(|r| r.gt_boxes.len()).sum();
    if total_gt == 0 {
        return 0.0;
    }
    let mut pooled: Vec<(usize, usize)> = records
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.predictions.len()).map(move |p| (r, p)))
        .collect();
    pooled.sort_by(|&(ra, pa), &(rb, pb)| {
        records[rb].predictions[pb]
            .score
            .total_cmp(&records[ra].predictions[pa].score)
    });

    let mut taken: Vec<Vec<bool>> = records.iter().map(|r| vec![false; r.gt_boxes.len()]).collect();
    let mut hits = Vec::with_capacity(pooled.len());
    for &(r, p) in &pooled {
        let pred = &records[r].predictions[p].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in records[r].gt_boxes.iter().enumerate() {
            if taken[r][g] {
                continue;
            }
            let v = iou(pred, gt);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[r][g] = true;
        }
        hits.push(best.is_some());
    }

    let mut tp = 0usize;
    let mut points = Vec::with_capacity(hits.len());
    for (k, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope, right to left
    let mut envelope = 0.0f64;
    for pt in points.iter_mut().rev() {
        envelope = envelope.max(pt.1);
        pt.1 = envelope;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Mean AP over `thresholds`.
pub fn average_precision(records: &[EvalRecord], thresholds: &[f64]) -> f64 {
    if thresholds.is_empty() {
        return 0.0;
    }
    thresholds
        .iter()
        .map(|&t| average_precision_at(records, t))
        .sum::<f64>()
        / thresholds.len() as f64
}

/// Fraction of queries with a hit among their top `k` predictions.
pub fn recall_at_k(records: &[EvalRecord], k: usize, iou_threshold: f64) -> f64 {
    if records.is_empty() || k == 0 {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|rec| {
            rec.ranked().into_iter().take(k).any(|p| {
                let pred = &rec.predictions[p].bbox;
                rec.gt_boxes.iter().any(|gt| iou(pred, gt) >= iou_threshold)
            })
        })
        .count();
    hits as f64 / records.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub queries: usize,
    pub ap: f64,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
}

pub fn evaluate(records: &[EvalRecord]) -> EvalSummary {
    EvalSummary {
        queries: records.len(),
        ap: average_precision(records, &default_ap_thresholds()),
        r1: recall_at_k(records, 1, DEFAULT_RECALL_IOU),
        r5: recall_at_k(records, 5, DEFAULT_RECALL_IOU),
        r10: recall_at_k(records, 10, DEFAULT_RECALL_IOU),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub query_id: String,
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PredictionFile {
    pub predictions: Vec<PredictionEntry>,
}

impl PredictionFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Query id of annotation `index` of a sample: `"{image_id}#{index}"`.
/// A sample with a single annotation also answers to its bare image id.
pub fn query_id(image_id: &str, index: usize) -> String {
    format!("{image_id}#{index}")
}

/// One record per annotation, in file order, with predictions joined in.
pub fn build_records(samples: &[GroundingSample], predictions: &PredictionFile) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    for s in samples {
        for (k, ann) in s.annotations.iter().enumerate() {
            let id = query_id(&s.image_id, k);
            lookup.insert(id.clone(), records.len());
            if s.annotations.len() == 1 {
                lookup.entry(s.image_id.clone()).or_insert(records.len());
            }
            records.push(EvalRecord {
                query_id: id,
                gt_boxes: ann.boxes.clone(),
                predictions: Vec::new(),
            });
        }
    }
    for entry in &predictions.predictions {
        let &r = lookup
            .get(&entry.query_id)
            .ok_or_else(|| Error::UnknownQuery(entry.query_id.clone()))?;
        if entry.boxes.len() != entry.scores.len() {
            return Err(Error::Parse {
                location: format!("predictions for '{}'", entry.query_id),
                message: format!("{} boxes but {} scores", entry.boxes.len(), entry.scores.len()),
            });
        }
        for (b, &score) in entry.boxes.iter().zip(&entry.scores) {
            if !score.is_finite() {
                return Err(Error::Parse {
                    location: format!("predictions for '{}'", entry.query_id),
                    message: "non-finite score".into(),
                });
            }
            records[r].predictions.push(ScoredBox {
                bbox: BBox::from(*b),
                score,
            });
        }
    }
    Ok(records)
}

pub fn evaluate_files(annotations: &Path, predictions: &Path) -> Result<EvalSummary> {
    let samples = load_annotations(annotations)?;
    let preds = PredictionFile::load(predictions)?;
    Ok(evaluate(&build_records(&samples, &preds)?))
}
