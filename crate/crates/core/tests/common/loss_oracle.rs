//! Naive loss evaluator on plain nested vectors, kept apart from the
//! library's ndarray code.

use rand::Rng;

/// `-ln(e^x[j] / sum_k e^x[k])`, summing every ratio to `x[j]` explicitly.
pub fn naive_nls(x: &[f64], j: usize) -> f64 {
    let mut others = 0.0;
    for (k, &v) in x.iter().enumerate() {
        if k != j {
            others += (v - x[j]).exp();
        }
    }
    others.ln_1p()
}

pub fn naive_contrastive(z: &[Vec<f64>], t: &[Vec<f64>], pairs: &[(usize, usize)], tau: f64) -> f64 {
    let (l, e) = (z.len(), t.len());
    let mut s = vec![vec![0.0; e]; l];
    for i in 0..l {
        for j in 0..e {
            for d in 0..z[i].len() {
                s[i][j] += z[i][d] * t[j][d];
            }
            s[i][j] /= tau;
        }
    }
    let mut lo = 0.0;
    for i in 0..l {
        let pos: Vec<usize> = (0..e).filter(|&j| pairs.contains(&(i, j))).collect();
        if pos.is_empty() {
            continue;
        }
        let mut acc = 0.0;
        for &j in &pos {
            acc += naive_nls(&s[i], j);
        }
        lo += acc / pos.len() as f64;
    }
    let mut lt = 0.0;
    for j in 0..e {
        let column: Vec<f64> = (0..l).map(|i| s[i][j]).collect();
        let pos: Vec<usize> = (0..l).filter(|&i| pairs.contains(&(i, j))).collect();
        if pos.is_empty() {
            continue;
        }
        let mut acc = 0.0;
        for &i in &pos {
            acc += naive_nls(&column, i);
        }
        lt += acc / pos.len() as f64;
    }
    (lo + lt) / 2.0
}

pub fn naive_soft_token(logits: &[Vec<f64>], positives: &[Vec<usize>]) -> f64 {
    let matched = positives.iter().filter(|p| !p.is_empty()).count();
    if matched == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (row, pos) in logits.iter().zip(positives) {
        for &j in pos {
            total += naive_nls(row, j) / pos.len() as f64;
        }
    }
    total / matched as f64
}

pub fn naive_giou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    let hull = area([a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]);
    inter / union - (hull - union) / hull
}

pub fn naive_box_loss(pairs: &[([f64; 4], [f64; 4])]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (c, t) in pairs {
        for k in 0..4 {
            total += (c[k] - t[k]).abs();
        }
        total += 1.0 - naive_giou(*c, *t);
    }
    total / pairs.len() as f64
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-scale..=scale)).collect())
        .collect()
}

pub fn random_box<R: Rng>(rng: &mut R) -> [f64; 4] {
    let x = rng.gen_range(0.0..10.0);
    let y = rng.gen_range(0.0..10.0);
    [x, y, x + rng.gen_range(0.1..5.0), y + rng.gen_range(0.1..5.0)]
}

/// One random micro-batch: L, E <= 8, D <= 4.
pub struct MicroBatch {
    pub z: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub logits: Vec<Vec<f64>>,
    pub positives: Vec<Vec<usize>>,
    pub boxes: Vec<([f64; 4], [f64; 4])>,
}

pub fn micro_batch<R: Rng>(rng: &mut R) -> MicroBatch {
    let l = rng.gen_range(1..=8);
    let e = rng.gen_range(1..=8);
    let d = rng.gen_range(1..=4);
    let z = random_matrix(rng, l, d, 1.0);
    let t = random_matrix(rng, e, d, 1.0);
    let density = rng.gen_range(0.05..0.6);
    let mut pairs = Vec::new();
    for i in 0..l {
        for j in 0..e {
            if rng.gen_bool(density) {
                pairs.push((i, j));
            }
        }
    }
    let logits = random_matrix(rng, l, e, 8.0);
    let positives = (0..l)
        .map(|_| (0..e).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    let boxes = (0..rng.gen_range(0..=8))
        .map(|_| (random_box(rng), random_box(rng)))
        .collect();
    MicroBatch {
        z,
        t,
        pairs,
        logits,
        positives,
        boxes,
    }
}
