//! Localization and segmentation metrics.
//!
//! Step localization is scored per step class: detections are ranked by
//! score, greedily matched one-to-one to ground truth at an IoU threshold
//! `alpha`, and summarized by average precision (all-point interpolation)
//! and recall. Class results are averaged without weighting into mAP / mAR,
//! skipping classes that have no ground truth. Action segmentation is scored
//! by frame accuracy.

mod report;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::annotation::{FrameLabelSequence, Interval, Segment, VideoAnnotation, BACKGROUND};
use crate::consistency::{rank_order, Detection, VideoDetections};
use crate::lexicon::Lexicon;
use crate::scalar::Scalar;

pub use report::{
    parse_text_table, AlphaResult, ClassResult, EvalCounts, EvalReport, TableRow, REPORT_FORMAT,
};

pub const DEFAULT_ALPHAS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("class has no ground truth")]
    NoGroundTruth,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("detections reference unknown video {0:?}")]
    UnknownVideo(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

/// `|a ∩ b| / |a ∪ b|`; zero for disjoint or touching intervals.
pub fn temporal_iou<T: Scalar>(a: &Interval<T>, b: &Interval<T>) -> T {
    let inter = a.intersection(b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.length() + b.length() - inter;
    inter / union
}

/// IoU thresholds and optional detection cap.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub alphas: Vec<f64>,
    /// When set, only each video's best `n` detections (over all classes)
    /// count towards recall.
    pub max_detections_per_video: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
            max_detections_per_video: None,
        }
    }
}

impl EvalConfig {
    pub fn with_alphas(alphas: Vec<f64>) -> Result<Self, MetricsError> {
        let cfg = Self {
            alphas,
            max_detections_per_video: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.alphas.is_empty() {
            return Err(MetricsError::InvalidConfig("no IoU thresholds".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(MetricsError::InvalidConfig(format!("threshold {a} outside (0, 1]")));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::InvalidConfig("thresholds must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Outcome for one detection, listed in rank order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedMatch {
    /// Index into the caller's detection slice.
    pub detection: usize,
    pub matched_gt: Option<usize>,
}

impl RankedMatch {
    pub fn is_tp(&self) -> bool {
        self.matched_gt.is_some()
    }
}

/// Greedy one-to-one matching in rank order. A detection is a true positive
/// when an unmatched ground truth of its class has IoU `>= alpha`; the
/// highest-IoU candidate is taken (earliest start on ties).
pub fn match_detections<T: Scalar>(
    detections: &[Detection<T>],
    gts: &[Segment<T>],
    alpha: f64,
) -> Vec<RankedMatch> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| rank_order(&detections[a], &detections[b]).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let d = &detections[i];
            let matched_gt = best_gt(&d.interval, d.step_id, gts, &taken, alpha);
            if let Some(g) = matched_gt {
                taken[g] = true;
            }
            RankedMatch {
                detection: i,
                matched_gt,
            }
        })
        .collect()
}

fn best_gt<T: Scalar>(
    interval: &Interval<T>,
    step_id: usize,
    gts: &[Segment<T>],
    taken: &[bool],
    alpha: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        if taken[g] || gt.step_id != step_id {
            continue;
        }
        let iou = temporal_iou(interval, &gt.interval).as_f64();
        if iou < alpha {
            continue;
        }
        let better = best.is_none_or(|(b, b_iou)| {
            iou > b_iou || (iou == b_iou && gt.interval.start() < gts[b].interval.start())
        });
        if better {
            best = Some((g, iou));
        }
    }
    best.map(|(g, _)| g)
}

/// All-point interpolated AP from TP flags in rank order.
pub fn ap_from_flags(flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 || flags.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope, right to left
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let step = 1.0 / num_gt as f64;
    flags
        .iter()
        .zip(&precision)
        .filter(|(f, _)| **f)
        .map(|(_, p)| step * p)
        .sum()
}

/// Average precision of one class's detections against that class's ground truth.
pub fn average_precision<T: Scalar>(
    detections: &[Detection<T>],
    gts: &[Segment<T>],
    alpha: f64,
) -> Result<f64, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let flags: Vec<bool> = match_detections(detections, gts, alpha)
        .iter()
        .map(RankedMatch::is_tp)
        .collect();
    Ok(ap_from_flags(&flags, gts.len()))
}

/// Fraction of one class's ground truth matched by the detections.
pub fn average_recall<T: Scalar>(
    detections: &[Detection<T>],
    gts: &[Segment<T>],
    alpha: f64,
) -> Result<f64, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let matched = match_detections(detections, gts, alpha)
        .iter()
        .filter(|m| m.is_tp())
        .count();
    Ok(matched as f64 / gts.len() as f64)
}

/// Which ground-truth frames count towards frame accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FrameScope {
    /// Every frame, background included.
    #[default]
    All,
    /// Only frames whose ground truth is a step.
    StepsOnly,
}

/// Frame accuracy of one video, background frames included.
pub fn frame_accuracy<T: Scalar>(
    pred: &FrameLabelSequence<T>,
    gt: &FrameLabelSequence<T>,
) -> Result<f64, MetricsError> {
    let (correct, total) = frame_hits(pred, gt, FrameScope::All)?;
    if total == 0 {
        return Err(MetricsError::LengthMismatch(format!(
            "video {:?} has no frames",
            gt.video_id
        )));
    }
    Ok(correct as f64 / total as f64)
}

fn frame_hits<T: Scalar>(
    pred: &FrameLabelSequence<T>,
    gt: &FrameLabelSequence<T>,
    scope: FrameScope,
) -> Result<(usize, usize), MetricsError> {
    if pred.labels.len() != gt.labels.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "video {:?}: {} predicted frames vs {} ground-truth frames",
            gt.video_id,
            pred.labels.len(),
            gt.labels.len()
        )));
    }
    if pred.fps != gt.fps {
        return Err(MetricsError::LengthMismatch(format!(
            "video {:?}: predicted fps {} vs ground-truth fps {}",
            gt.video_id, pred.fps, gt.fps
        )));
    }
    let counted = |g: &&i32| scope == FrameScope::All || **g != BACKGROUND;
    let correct = pred
        .labels
        .iter()
        .zip(&gt.labels)
        .filter(|(p, g)| counted(g) && p == g)
        .count();
    Ok((correct, gt.labels.iter().filter(counted).count()))
}

/// Frame accuracy pooled over all frames of all videos. Every ground-truth
/// video needs a prediction and vice versa.
pub fn corpus_frame_accuracy<T: Scalar>(
    preds: &[FrameLabelSequence<T>],
    gts: &[FrameLabelSequence<T>],
) -> Result<f64, MetricsError> {
    corpus_frame_accuracy_in(preds, gts, FrameScope::All).map(|(acc, _)| acc)
}

/// Pooled frame accuracy restricted to `scope`, with the number of frames
/// that were scored.
pub fn corpus_frame_accuracy_in<T: Scalar>(
    preds: &[FrameLabelSequence<T>],
    gts: &[FrameLabelSequence<T>],
    scope: FrameScope,
) -> Result<(f64, usize), MetricsError> {
    let by_id: HashMap<&str, &FrameLabelSequence<T>> =
        preds.iter().map(|p| (p.video_id.as_str(), p)).collect();
    if let Some(extra) = preds
        .iter()
        .find(|p| !gts.iter().any(|g| g.video_id == p.video_id))
    {
        return Err(MetricsError::UnknownVideo(extra.video_id.clone()));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for gt in gts {
        let pred = by_id.get(gt.video_id.as_str()).ok_or_else(|| {
            MetricsError::LengthMismatch(format!("no prediction for video {:?}", gt.video_id))
        })?;
        let (c, t) = frame_hits(pred, gt, scope)?;
        correct += c;
        total += t;
    }
    if total == 0 {
        return Err(MetricsError::LengthMismatch("no frames to evaluate".into()));
    }
    Ok((correct as f64 / total as f64, total))
}

// ---------------------------------------------------------------------------
// Corpus-level localization

/// A class's detections and ground truth, pooled over videos.
struct ClassPool<T> {
    /// Ground truth per video slot.
    gts: BTreeMap<usize, Vec<Segment<T>>>,
    /// (video slot, detection, rank within its video) in global rank order.
    dets: Vec<(usize, Detection<T>, usize)>,
}

fn match_pool<T: Scalar>(pool: &ClassPool<T>, alpha: f64, rank_cap: Option<usize>) -> (Vec<bool>, usize) {
    let mut taken: BTreeMap<usize, Vec<bool>> =
        pool.gts.iter().map(|(&v, g)| (v, vec![false; g.len()])).collect();
    let mut flags = Vec::with_capacity(pool.dets.len());
    let mut matched = 0;
    for (video, det, video_rank) in &pool.dets {
        if rank_cap.is_some_and(|cap| *video_rank >= cap) {
            continue;
        }
        let hit = match (pool.gts.get(video), taken.get_mut(video)) {
            (Some(gts), Some(taken)) => {
                let g = best_gt(&det.interval, det.step_id, gts, taken, alpha);
                if let Some(g) = g {
                    taken[g] = true;
                }
                g.is_some()
            }
            _ => false,
        };
        matched += usize::from(hit);
        flags.push(hit);
    }
    (flags, matched)
}

/// Scores detections against ground truth for every IoU threshold in
/// `config`. Classes are pooled over videos; per-task and per-domain means
/// cover only their own classes with ground truth.
pub fn evaluate_localization<T: Scalar>(
    detections: &[VideoDetections<T>],
    gts: &[VideoAnnotation<T>],
    lexicon: &Lexicon,
    config: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    config.validate()?;
    let k = lexicon.num_steps();

    let mut gt_slots: Vec<&VideoAnnotation<T>> = gts.iter().collect();
    gt_slots.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    if let Some(w) = gt_slots.windows(2).find(|w| w[0].video_id == w[1].video_id) {
        return Err(MetricsError::DimensionMismatch(format!(
            "duplicate ground-truth video {:?}",
            w[0].video_id
        )));
    }
    let slot_of: HashMap<&str, usize> = gt_slots
        .iter()
        .enumerate()
        .map(|(i, v)| (v.video_id.as_str(), i))
        .collect();

    let mut pools: Vec<ClassPool<T>> = (0..k)
        .map(|_| ClassPool {
            gts: BTreeMap::new(),
            dets: Vec::new(),
        })
        .collect();
    let mut gt_count = 0;
    for (slot, v) in gt_slots.iter().enumerate() {
        for seg in &v.segments {
            let pool = pools.get_mut(seg.step_id).ok_or_else(|| {
                MetricsError::DimensionMismatch(format!(
                    "video {:?}: ground-truth step {} outside 0..{k}",
                    v.video_id, seg.step_id
                ))
            })?;
            pool.gts.entry(slot).or_default().push(*seg);
            gt_count += 1;
        }
    }

    let mut det_count = 0;
    let mut seen_det_videos = std::collections::HashSet::new();
    for vd in detections {
        let slot = *slot_of
            .get(vd.video_id.as_str())
            .ok_or_else(|| MetricsError::UnknownVideo(vd.video_id.clone()))?;
        if !seen_det_videos.insert(slot) {
            return Err(MetricsError::DimensionMismatch(format!(
                "duplicate detection entry for video {:?}",
                vd.video_id
            )));
        }
        let mut ranked: Vec<&Detection<T>> = vd.detections.iter().collect();
        ranked.sort_by(|a, b| rank_order(a, b));
        for (rank, d) in ranked.into_iter().enumerate() {
            let pool = pools.get_mut(d.step_id).ok_or_else(|| {
                MetricsError::DimensionMismatch(format!(
                    "video {:?}: detected step {} outside 0..{k}",
                    vd.video_id, d.step_id
                ))
            })?;
            pool.dets.push((slot, *d, rank));
            det_count += 1;
        }
    }
    for pool in &mut pools {
        pool.dets
            .sort_by(|a, b| rank_order(&a.1, &b.1).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    }

    let cap = config.max_detections_per_video;
    let per_alpha = config
        .alphas
        .iter()
        .map(|&alpha| {
            let per_class: BTreeMap<usize, ClassResult> = pools
                .par_iter()
                .enumerate()
                .filter(|(_, p)| !p.gts.is_empty())
                .map(|(class, pool)| {
                    let num_gt: usize = pool.gts.values().map(Vec::len).sum();
                    let (flags, _) = match_pool(pool, alpha, None);
                    let ap = ap_from_flags(&flags, num_gt);
                    let matched = match cap {
                        None => flags.iter().filter(|f| **f).count(),
                        Some(_) => match_pool(pool, alpha, cap).1,
                    };
                    let result = ClassResult {
                        ap: 100.0 * ap,
                        ar: 100.0 * matched as f64 / num_gt as f64,
                        num_gt,
                        num_detections: pool.dets.len(),
                    };
                    (class, result)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect();
            AlphaResult::from_classes(alpha, per_class, lexicon)
        })
        .collect();

    Ok(EvalReport {
        format: REPORT_FORMAT.to_owned(),
        alphas: config.alphas.clone(),
        counts: EvalCounts {
            videos: gt_slots.len(),
            gt_segments: gt_count,
            detections: det_count,
        },
        per_alpha,
    })
}
