//! Reference AP and Recall@K, written for clarity over speed: every cutoff of
//! the ranking is re-matched from scratch.

use pairaug::dataset::BBox;
use pairaug::metrics::{EvalRecord, ScoredBox};
use rand::Rng;

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let area = |r: &BBox| (r.x_max - r.x_min) * (r.y_max - r.y_min);
    inter / (area(a) + area(b) - inter)
}

/// (record, prediction) pairs by descending score; ties by record then position.
fn ranking(records: &[EvalRecord]) -> Vec<(usize, usize)> {
    let mut all = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        for p in 0..rec.predictions.len() {
            all.push((r, p));
        }
    }
    // Selection sort keeps the tie rule explicit.
    let mut out = Vec::new();
    while !all.is_empty() {
        let mut best = 0;
        for i in 1..all.len() {
            let (r, p) = all[i];
            let (br, bp) = all[best];
            if records[r].predictions[p].score > records[br].predictions[bp].score {
                best = i;
            }
        }
        out.push(all.remove(best));
    }
    out
}

fn true_positives(records: &[EvalRecord], prefix: &[(usize, usize)], thr: f64) -> usize {
    let mut taken: Vec<Vec<bool>> = records.iter().map(|r| vec![false; r.gt_boxes.len()]).collect();
    let mut tp = 0;
    for &(r, p) in prefix {
        let pred = records[r].predictions[p].bbox;
        let mut pick = None;
        let mut pick_iou = -1.0;
        for g in 0..records[r].gt_boxes.len() {
            let v = overlap(&pred, &records[r].gt_boxes[g]);
            if !taken[r][g] && v >= thr && v > pick_iou {
                pick = Some(g);
                pick_iou = v;
            }
        }
        if let Some(g) = pick {
            taken[r][g] = true;
            tp += 1;
        }
    }
    tp
}

pub fn reference_ap_at(records: &[EvalRecord], thr: f64) -> f64 {
    let total: usize = records.iter().map(|r| r.gt_boxes.len()).sum();
    let order = ranking(records);
    let mut curve = Vec::new();
    for k in 1..=order.len() {
        let tp = true_positives(records, &order[..k], thr) as f64;
        curve.push((tp / total as f64, tp / k as f64));
    }
    let mut levels: Vec<f64> = curve.iter().map(|c| c.0).filter(|&r| r > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let best = curve
            .iter()
            .filter(|c| c.0 >= r)
            .map(|c| c.1)
            .fold(0.0, f64::max);
        ap += (r - prev) * best;
        prev = r;
    }
    ap
}

pub fn reference_ap(records: &[EvalRecord], thresholds: &[f64]) -> f64 {
    thresholds.iter().map(|&t| reference_ap_at(records, t)).sum::<f64>() / thresholds.len() as f64
}

pub fn reference_recall(records: &[EvalRecord], k: usize, thr: f64) -> f64 {
    let mut hits = 0;
    for rec in records {
        let mut preds = rec.predictions.clone();
        preds.sort_by(|a, b| b.score.total_cmp(&a.score));
        if preds
            .iter()
            .take(k)
            .any(|p| rec.gt_boxes.iter().any(|g| overlap(&p.bbox, g) >= thr))
        {
            hits += 1;
        }
    }
    hits as f64 / records.len() as f64
}

fn grid_box<R: Rng>(rng: &mut R) -> BBox {
    let x = f64::from(rng.gen_range(0..6u32));
    let y = f64::from(rng.gen_range(0..6u32));
    BBox::new(x, y, x + f64::from(rng.gen_range(1..5u32)), y + f64::from(rng.gen_range(1..5u32)))
}

/// Up to 4 queries with up to 5 predictions each. Boxes sit on a coarse grid
/// and scores on multiples of 1/8 so both overlaps and ties are common.
pub fn micro_instance<R: Rng>(rng: &mut R) -> Vec<EvalRecord> {
    (0..rng.gen_range(1..=4))
        .map(|q| {
            let gt: Vec<BBox> = (0..rng.gen_range(1..=3)).map(|_| grid_box(rng)).collect();
            let preds = (0..rng.gen_range(0..=5))
                .map(|_| {
                    let bbox = if rng.gen_bool(0.4) {
                        gt[rng.gen_range(0..gt.len())]
                    } else {
                        grid_box(rng)
                    };
                    ScoredBox {
                        bbox,
                        score: f64::from(rng.gen_range(0..8u32)) / 8.0,
                    }
                })
                .collect();
            EvalRecord::new(format!("q{q}"), gt, preds).unwrap()
        })
        .collect()
}

pub fn shift_scores(records: &[EvalRecord], by: f64) -> Vec<EvalRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for p in &mut r.predictions {
                p.score += by;
            }
            r
        })
        .collect()
}
