//! Brute-force reference implementations, written independently of the
//! library code paths they check.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// (start, end) pair in seconds.
pub type Span = (f64, f64);

#[derive(Debug, Clone, Copy)]
pub struct OracleDet {
    pub video: usize,
    pub span: Span,
    pub class: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleGt {
    pub video: usize,
    pub span: Span,
    pub class: usize,
}

/// Overlap over hull, valid whenever the spans intersect.
pub fn iou(a: Span, b: Span) -> f64 {
    let inter = a.1.min(b.1) - a.0.max(b.0);
    if inter <= 0.0 {
        0.0
    } else {
        inter / (a.1.max(b.1) - a.0.min(b.0))
    }
}

/// Sorts detections the way the ranking contract prescribes: score
/// descending, start ascending, class ascending, end ascending, then video,
/// then input position.
fn ranked(dets: &[OracleDet]) -> Vec<OracleDet> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&dets[a], &dets[b]);
        y.score
            .partial_cmp(&x.score)
            .unwrap()
            .then(x.span.0.partial_cmp(&y.span.0).unwrap())
            .then(x.class.cmp(&y.class))
            .then(x.span.1.partial_cmp(&y.span.1).unwrap())
            .then(x.video.cmp(&y.video))
            .then(a.cmp(&b))
    });
    idx.into_iter().map(|i| dets[i]).collect()
}

/// Number of true positives among `prefix`, matching from scratch.
fn count_tp(prefix: &[OracleDet], gts: &[OracleGt], alpha: f64) -> usize {
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for d in prefix {
        let mut best: Option<usize> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.video != d.video || gt.class != d.class {
                continue;
            }
            let v = iou(d.span, gt.span);
            if v < alpha {
                continue;
            }
            // highest IoU, earliest start among equals
            match best {
                Some(b) if (iou(d.span, gts[b].span), -gts[b].span.0) >= (v, -gt.span.0) => {}
                _ => best = Some(g),
            }
        }
        if let Some(g) = best {
            used[g] = true;
            tp += 1;
        }
    }
    tp
}

/// AP for one class by enumerating every operating point of the ranked
/// list: at cutoff k recompute TP(k) from scratch, then integrate recall
/// steps against the best precision at any cutoff with at least that recall.
pub fn class_ap(dets: &[OracleDet], gts: &[OracleGt], alpha: f64) -> f64 {
    let n_gt = gts.len();
    assert!(n_gt > 0);
    let ranked = ranked(dets);
    let points: Vec<(f64, f64)> = (1..=ranked.len())
        .map(|k| {
            let tp = count_tp(&ranked[..k], gts, alpha) as f64;
            (tp / n_gt as f64, tp / k as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(recall, _)) in points.iter().enumerate() {
        if recall > prev_recall {
            let best_precision = points[k..]
                .iter()
                .filter(|(r, _)| *r >= recall)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            ap += (recall - prev_recall) * best_precision;
            prev_recall = recall;
        }
    }
    ap
}

pub fn class_ar(dets: &[OracleDet], gts: &[OracleGt], alpha: f64) -> f64 {
    let ranked = ranked(dets);
    count_tp(&ranked, gts, alpha) as f64 / gts.len() as f64
}

/// Unweighted mean over classes having ground truth, in percent.
pub fn mean_ap_ar(dets: &[OracleDet], gts: &[OracleGt], alpha: f64) -> (f64, f64) {
    let mut classes: BTreeMap<usize, (Vec<OracleDet>, Vec<OracleGt>)> = BTreeMap::new();
    for g in gts {
        classes.entry(g.class).or_default().1.push(*g);
    }
    for d in dets {
        if let Some(entry) = classes.get_mut(&d.class) {
            entry.0.push(*d);
        }
    }
    let n = classes.len() as f64;
    let (ap, ar) = classes.values().fold((0.0, 0.0), |(ap, ar), (d, g)| {
        (ap + class_ap(d, g, alpha), ar + class_ar(d, g, alpha))
    });
    (100.0 * ap / n, 100.0 * ar / n)
}
