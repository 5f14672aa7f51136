//! Task-consistency refinement of proposal scores.
//!
//! Bottom-up: proposal score vectors are summed into a video-level step score
//! `s_v`, projected onto tasks through the incidence matrix (`s_t = s_v W`),
//! and the arg-max task `L` is taken as the video's task. Top-down: every
//! proposal's scores are multiplied element-wise by the mask
//! `v_r = v + gamma (1 - v)`, where `v` is the indicator of task `L`'s steps,
//! so off-task steps are attenuated by `gamma`. Labelled candidates are then
//! extracted per proposal and filtered with per-class NMS.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{Interval, ProposalSet};
use crate::lexicon::StepTaskMatrix;
use crate::metrics::temporal_iou;
use crate::scalar::{cmp_scalar, Scalar};

pub const DETECTION_FORMAT: &str = "stepcoin-det-v1";

/// Default attenuation coefficient, `e^-2`.
pub fn default_gamma<T: Scalar>() -> T {
    T::of(-2.0).exp()
}

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.4;
pub const DEFAULT_TOP_C: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("video {0:?} has no proposals")]
    EmptyProposalSet(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown task {task_id} (matrix has {num_tasks} tasks)")]
    UnknownTask { task_id: usize, num_tasks: usize },
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("top_c must be at least 1")]
    InvalidTopC,
    #[error("NMS threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Video-level step scores `s_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore<T> {
    pub values: Vec<T>,
}

/// Task scores `s_t` and their arg-max.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore<T> {
    pub values: Vec<T>,
    pub predicted_task: usize,
}

/// Per-step multiplier: 1 for steps of the predicted task, `gamma` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMask<T> {
    pub values: Vec<T>,
    pub gamma: T,
}

/// Proposals after the Hadamard re-scoring. Same shape as the input set.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedProposalSet<T>(pub ProposalSet<T>);

impl<T> RefinedProposalSet<T> {
    pub fn proposals(&self) -> &ProposalSet<T> {
        &self.0
    }

    pub fn into_inner(self) -> ProposalSet<T> {
        self.0
    }
}

/// A localized step: interval, step class and confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Detection<T> {
    pub interval: Interval<T>,
    pub step_id: usize,
    pub score: T,
}

pub type DetectionList<T> = Vec<Detection<T>>;

/// Ranking order: score descending, then earlier start, then lower step id,
/// then earlier end.
pub fn rank_order<T: Scalar>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    cmp_scalar(b.score, a.score)
        .then_with(|| cmp_scalar(a.interval.start(), b.interval.start()))
        .then_with(|| a.step_id.cmp(&b.step_id))
        .then_with(|| cmp_scalar(a.interval.end(), b.interval.end()))
}

/// `s_v = sum_n s_p^n`.
pub fn aggregate_scores<T: Scalar>(proposals: &ProposalSet<T>) -> Result<VideoScore<T>, ConsistencyError> {
    let first = proposals
        .proposals
        .first()
        .ok_or_else(|| ConsistencyError::EmptyProposalSet(proposals.video_id.clone()))?;
    let k = first.scores.len();
    let mut values = vec![T::zero(); k];
    for p in &proposals.proposals {
        if p.scores.len() != k {
            return Err(ConsistencyError::DimensionMismatch {
                expected: k,
                found: p.scores.len(),
            });
        }
        for (acc, &s) in values.iter_mut().zip(&p.scores) {
            *acc = *acc + s;
        }
    }
    Ok(VideoScore { values })
}

/// `s_t = s_v W`; the predicted task is the arg-max, lowest index on ties.
pub fn predict_task<T: Scalar>(
    video_score: &VideoScore<T>,
    matrix: &StepTaskMatrix,
) -> Result<TaskScore<T>, ConsistencyError> {
    if video_score.values.len() != matrix.num_steps() {
        return Err(ConsistencyError::DimensionMismatch {
            expected: matrix.num_steps(),
            found: video_score.values.len(),
        });
    }
    // W has exactly one 1 per row, so the product only touches that entry.
    let mut values = vec![T::zero(); matrix.num_tasks()];
    for (step, &s) in video_score.values.iter().enumerate() {
        let task = matrix.task_of(step);
        values[task] = values[task] + s;
    }
    let mut predicted_task = 0;
    for (j, &v) in values.iter().enumerate() {
        if v > values[predicted_task] {
            predicted_task = j;
        }
    }
    Ok(TaskScore { values, predicted_task })
}

/// `v_r = v + gamma (1 - v)` with `v` the indicator column of `task`.
pub fn refine_mask<T: Scalar>(
    matrix: &StepTaskMatrix,
    task: usize,
    gamma: T,
) -> Result<RefinedMask<T>, ConsistencyError> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(ConsistencyError::InvalidGamma(gamma.as_f64()));
    }
    if task >= matrix.num_tasks() {
        return Err(ConsistencyError::UnknownTask {
            task_id: task,
            num_tasks: matrix.num_tasks(),
        });
    }
    let values = matrix
        .column(task)
        .into_iter()
        .map(|e| {
            let v = T::from_u8(e).unwrap();
            v + gamma * (T::one() - v)
        })
        .collect();
    Ok(RefinedMask { values, gamma })
}

/// `s_r^n = s_p^n ⊙ v_r` for every proposal; intervals are untouched.
pub fn refine_scores<T: Scalar>(
    proposals: &ProposalSet<T>,
    mask: &RefinedMask<T>,
) -> Result<RefinedProposalSet<T>, ConsistencyError> {
    let mut out = proposals.clone();
    for p in &mut out.proposals {
        if p.scores.len() != mask.values.len() {
            return Err(ConsistencyError::DimensionMismatch {
                expected: mask.values.len(),
                found: p.scores.len(),
            });
        }
        for (s, &m) in p.scores.iter_mut().zip(&mask.values) {
            *s = *s * m;
        }
    }
    Ok(RefinedProposalSet(out))
}

/// Emits each proposal's `top_c` best (step, score) pairs as detections.
/// Score ties go to the lower step id.
pub fn proposals_to_detections<T: Scalar>(proposals: &ProposalSet<T>, top_c: usize) -> DetectionList<T> {
    let mut out = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    for p in &proposals.proposals {
        order.clear();
        order.extend(0..p.scores.len());
        order.sort_by(|&a, &b| cmp_scalar(p.scores[b], p.scores[a]).then(a.cmp(&b)));
        out.extend(order.iter().take(top_c).map(|&k| Detection {
            interval: p.interval,
            step_id: k,
            score: p.scores[k],
        }));
    }
    out
}

/// Per-class greedy non-maximum suppression.
///
/// Within each step class the best-ranked detection is kept and every other
/// detection of that class with IoU strictly above `iou_threshold` against
/// it is dropped; repeat. The result is in [`rank_order`].
pub fn nms<T: Scalar>(detections: &[Detection<T>], iou_threshold: T) -> DetectionList<T> {
    let mut by_class: BTreeMap<usize, Vec<Detection<T>>> = BTreeMap::new();
    for d in detections {
        by_class.entry(d.step_id).or_default().push(*d);
    }
    let mut kept = Vec::with_capacity(detections.len());
    for (_, mut dets) in by_class {
        dets.sort_by(rank_order);
        let mut class_kept: Vec<Detection<T>> = Vec::new();
        for d in dets {
            if class_kept
                .iter()
                .all(|k| temporal_iou(&k.interval, &d.interval) <= iou_threshold)
            {
                class_kept.push(d);
            }
        }
        kept.extend(class_kept);
    }
    kept.sort_by(rank_order);
    kept
}

/// Parameters of the refinement pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TcConfig<T> {
    pub gamma: T,
    pub top_c: usize,
    pub nms_threshold: T,
}

impl<T: Scalar> Default for TcConfig<T> {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            top_c: DEFAULT_TOP_C,
            nms_threshold: T::of(DEFAULT_NMS_THRESHOLD),
        }
    }
}

impl<T: Scalar> TcConfig<T> {
    pub fn validate(&self) -> Result<(), ConsistencyError> {
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(ConsistencyError::InvalidGamma(self.gamma.as_f64()));
        }
        if self.top_c == 0 {
            return Err(ConsistencyError::InvalidTopC);
        }
        if !(self.nms_threshold >= T::zero() && self.nms_threshold <= T::one()) {
            return Err(ConsistencyError::InvalidThreshold(self.nms_threshold.as_f64()));
        }
        Ok(())
    }
}

/// Output of [`localize_steps`].
#[derive(Debug, Clone, PartialEq)]
pub struct Localization<T> {
    pub task: TaskScore<T>,
    pub detections: DetectionList<T>,
}

/// The full pipeline: aggregate, predict the task, mask, extract top-c, NMS.
pub fn localize_steps<T: Scalar>(
    proposals: &ProposalSet<T>,
    matrix: &StepTaskMatrix,
    config: &TcConfig<T>,
) -> Result<Localization<T>, ConsistencyError> {
    config.validate()?;
    let video_score = aggregate_scores(proposals)?;
    let task = predict_task(&video_score, matrix)?;
    let mask = refine_mask(matrix, task.predicted_task, config.gamma)?;
    let refined = refine_scores(proposals, &mask)?;
    let candidates = proposals_to_detections(refined.proposals(), config.top_c);
    Ok(Localization {
        task,
        detections: nms(&candidates, config.nms_threshold),
    })
}

/// Top-c extraction and NMS on the raw scores, with no task refinement.
pub fn detect_unrefined<T: Scalar>(
    proposals: &ProposalSet<T>,
    top_c: usize,
    nms_threshold: T,
) -> DetectionList<T> {
    nms(&proposals_to_detections(proposals, top_c), nms_threshold)
}

/// Detections for one video as produced by [`localize_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDetections<T> {
    pub video_id: String,
    /// Predicted task, present when refinement ran.
    pub task_id: Option<usize>,
    pub detections: DetectionList<T>,
}

/// Runs the pipeline over many videos in parallel. Videos with no proposals
/// yield an empty detection list. Output is sorted by video id.
pub fn localize_all<T: Scalar>(
    sets: &[ProposalSet<T>],
    matrix: &StepTaskMatrix,
    config: &TcConfig<T>,
    with_tc: bool,
) -> Result<Vec<VideoDetections<T>>, ConsistencyError> {
    config.validate()?;
    for set in sets {
        for p in &set.proposals {
            if p.scores.len() != matrix.num_steps() {
                return Err(ConsistencyError::DimensionMismatch {
                    expected: matrix.num_steps(),
                    found: p.scores.len(),
                });
            }
        }
    }
    let mut out: Vec<VideoDetections<T>> = sets
        .par_iter()
        .map(|set| {
            if set.is_empty() {
                return Ok(VideoDetections {
                    video_id: set.video_id.clone(),
                    task_id: None,
                    detections: Vec::new(),
                });
            }
            if with_tc {
                let loc = localize_steps(set, matrix, config)?;
                Ok(VideoDetections {
                    video_id: set.video_id.clone(),
                    task_id: Some(loc.task.predicted_task),
                    detections: loc.detections,
                })
            } else {
                Ok(VideoDetections {
                    video_id: set.video_id.clone(),
                    task_id: None,
                    detections: detect_unrefined(set, config.top_c, config.nms_threshold),
                })
            }
        })
        .collect::<Result<_, ConsistencyError>>()?;
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Detection file

#[derive(Debug, Error)]
pub enum DetectionFileError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format tag {0:?} (expected \"stepcoin-det-v1\")")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct DetectionRecord<T> {
    start: T,
    end: T,
    step_id: usize,
    score: T,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct VideoDetectionRecord<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_id: Option<usize>,
    detections: Vec<DetectionRecord<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct DetectionFile<T> {
    format: String,
    videos: BTreeMap<String, VideoDetectionRecord<T>>,
}

pub fn write_detections<T: Scalar, W: Write>(
    videos: &[VideoDetections<T>],
    mut sink: W,
) -> Result<(), DetectionFileError> {
    let mut map = BTreeMap::new();
    for v in videos {
        let rec = VideoDetectionRecord {
            task_id: v.task_id,
            detections: v
                .detections
                .iter()
                .map(|d| DetectionRecord {
                    start: d.interval.start(),
                    end: d.interval.end(),
                    step_id: d.step_id,
                    score: d.score,
                })
                .collect(),
        };
        if map.insert(v.video_id.clone(), rec).is_some() {
            return Err(DetectionFileError::Validation(format!("duplicate video {:?}", v.video_id)));
        }
    }
    let file = DetectionFile {
        format: DETECTION_FORMAT.to_owned(),
        videos: map,
    };
    serde_json::to_writer_pretty(&mut sink, &file)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Parses a detection file. Step ids are checked against `num_steps`.
pub fn load_detections<T: Scalar, R: Read>(
    source: R,
    num_steps: usize,
) -> Result<Vec<VideoDetections<T>>, DetectionFileError> {
    let file: DetectionFile<T> = serde_json::from_reader(source)?;
    if file.format != DETECTION_FORMAT {
        return Err(DetectionFileError::Format(file.format));
    }
    file.videos
        .into_iter()
        .map(|(video_id, rec)| {
            let detections = rec
                .detections
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let bad = |msg: String| DetectionFileError::Validation(format!("video {video_id:?}, detection {i}: {msg}"));
                    let interval = Interval::new(r.start, r.end).map_err(|e| bad(e.to_string()))?;
                    if r.step_id >= num_steps {
                        return Err(bad(format!("step_id {} outside 0..{num_steps}", r.step_id)));
                    }
                    if !(r.score.is_finite() && r.score >= T::zero()) {
                        return Err(bad("score must be finite and non-negative".into()));
                    }
                    Ok(Detection {
                        interval,
                        step_id: r.step_id,
                        score: r.score,
                    })
                })
                .collect::<Result<_, _>>()?;
            Ok(VideoDetections {
                video_id,
                task_id: rec.task_id,
                detections,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Proposal;
    use crate::lexicon::load_lexicon_str;

    fn matrix(tasks_of_steps: &[usize]) -> StepTaskMatrix {
        let m = tasks_of_steps.iter().max().unwrap() + 1;
        let tasks: Vec<String> = (0..m)
            .map(|j| format!(r#"{{"id":{j},"domain_id":0,"name":"t{j}"}}"#))
            .collect();
        let steps: Vec<String> = tasks_of_steps
            .iter()
            .enumerate()
            .map(|(i, t)| format!(r#"{{"id":{i},"task_id":{t},"phrase":"s{i}"}}"#))
            .collect();
        load_lexicon_str(&format!(
            r#"{{"version":"t","domains":[{{"id":0,"name":"d"}}],"tasks":[{}],"steps":[{}]}}"#,
            tasks.join(","),
            steps.join(",")
        ))
        .unwrap()
        .incidence_matrix()
    }

    fn set(props: &[(f64, f64, &[f64])]) -> ProposalSet<f64> {
        ProposalSet::new(
            "v",
            props
                .iter()
                .map(|(s, e, sc)| Proposal {
                    interval: Interval::new(*s, *e).unwrap(),
                    scores: sc.to_vec(),
                })
                .collect(),
        )
    }

    fn det(start: f64, end: f64, step_id: usize, score: f64) -> Detection<f64> {
        Detection {
            interval: Interval::new(start, end).unwrap(),
            step_id,
            score,
        }
    }

    #[test]
    fn aggregate() {
        assert_eq!(aggregate_scores(&set(&[(0.0, 1.0, &[0.2, 0.8])])).unwrap().values, vec![0.2, 0.8]);
        assert_eq!(
            aggregate_scores(&set(&[(0.0, 1.0, &[1.0, 0.0]), (1.0, 2.0, &[0.0, 1.0])])).unwrap().values,
            vec![1.0, 1.0]
        );
        assert_eq!(
            aggregate_scores(&set(&[])),
            Err(ConsistencyError::EmptyProposalSet("v".into()))
        );
    }

    #[test]
    fn predict_task_by_hand() {
        let w = matrix(&[0, 0, 1]);
        let ts = predict_task(&VideoScore { values: vec![0.2f64, 0.7, 0.5] }, &w).unwrap();
        assert!((ts.values[0] - 0.9).abs() < 1e-15 && ts.values[1] == 0.5);
        assert_eq!(ts.predicted_task, 0);

        let ts = predict_task(&VideoScore { values: vec![0.0f64; 3] }, &w).unwrap();
        assert_eq!(ts.values, vec![0.0, 0.0]);
        assert_eq!(ts.predicted_task, 0);

        assert!(matches!(
            predict_task(&VideoScore { values: vec![0.0f64; 2] }, &w),
            Err(ConsistencyError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn mask_values() {
        let w = matrix(&[0, 0, 1]);
        let gamma = default_gamma::<f64>();
        let mask = refine_mask(&w, 0, gamma).unwrap();
        assert_eq!(mask.values[..2], [1.0, 1.0]);
        assert!((mask.values[2] - 0.1353352832).abs() < 1e-10);

        let single = matrix(&[0, 0]);
        assert_eq!(refine_mask(&single, 0, gamma).unwrap().values, vec![1.0, 1.0]);

        let w2 = matrix(&[1, 0]);
        assert_eq!(refine_mask(&w2, 0, 0.5).unwrap().values, vec![0.5, 1.0]);

        assert!(matches!(refine_mask(&w, 2, gamma), Err(ConsistencyError::UnknownTask { .. })));
        for bad in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(refine_mask(&w, 0, bad), Err(ConsistencyError::InvalidGamma(_))));
        }
    }

    #[test]
    fn hadamard_rescoring() {
        let gamma = default_gamma::<f64>();
        let mask = RefinedMask { values: vec![1.0, gamma], gamma };
        let out = refine_scores(&set(&[(0.0, 1.0, &[0.8, 0.4])]), &mask).unwrap();
        let s = &out.proposals().proposals[0].scores;
        assert_eq!(s[0], 0.8);
        assert!((s[1] - 0.0541341133).abs() < 1e-10);

        let ones = RefinedMask { values: vec![1.0, 1.0], gamma };
        let input = set(&[(0.0, 1.0, &[0.3, 0.6])]);
        assert_eq!(refine_scores(&input, &ones).unwrap().into_inner(), input);

        let zero = set(&[(0.0, 1.0, &[0.0, 0.0])]);
        assert_eq!(refine_scores(&zero, &mask).unwrap().into_inner(), zero);

        let wrong = RefinedMask { values: vec![1.0], gamma };
        assert!(refine_scores(&input, &wrong).is_err());
    }

    #[test]
    fn nms_by_hand() {
        // IoU([0,10],[1,11]) = 9/11
        let kept = nms(&[det(1.0, 11.0, 2, 0.7), det(0.0, 10.0, 2, 0.9)], 0.4);
        assert_eq!(kept, vec![det(0.0, 10.0, 2, 0.9)]);
        // at a threshold above 9/11 both survive
        assert_eq!(nms(&[det(1.0, 11.0, 2, 0.7), det(0.0, 10.0, 2, 0.9)], 0.82).len(), 2);

        let kept = nms(&[det(0.0, 10.0, 1, 0.9), det(1.0, 11.0, 2, 0.7)], 0.4);
        assert_eq!(kept.len(), 2);

        let kept = nms(&[det(0.0, 5.0, 1, 0.5), det(5.0, 10.0, 1, 0.9)], 0.0);
        assert_eq!(kept, vec![det(5.0, 10.0, 1, 0.9), det(0.0, 5.0, 1, 0.5)]);
    }

    #[test]
    fn nms_tie_breaks() {
        let kept = nms(&[det(3.0, 4.0, 1, 0.5), det(1.0, 2.0, 1, 0.5), det(1.0, 2.0, 0, 0.5)], 0.4);
        assert_eq!(kept, vec![det(1.0, 2.0, 0, 0.5), det(1.0, 2.0, 1, 0.5), det(3.0, 4.0, 1, 0.5)]);
    }

    #[test]
    fn top_c_extraction() {
        let s = set(&[(0.0, 1.0, &[0.1, 0.9, 0.3])]);
        assert_eq!(proposals_to_detections(&s, 1), vec![det(0.0, 1.0, 1, 0.9)]);
        assert_eq!(proposals_to_detections(&s, 3).len(), 3);
        assert_eq!(proposals_to_detections(&s, 10).len(), 3);
        let two = set(&[(0.0, 1.0, &[0.1, 0.9, 0.3]), (2.0, 3.0, &[0.5, 0.2, 0.3])]);
        assert_eq!(proposals_to_detections(&two, 2).len(), 4);
    }

    #[test]
    fn pipeline_keeps_single_task_input() {
        let w = matrix(&[0, 0, 1, 1]);
        let s = set(&[(0.0, 4.0, &[0.0, 0.0, 0.7, 0.1]), (5.0, 9.0, &[0.0, 0.0, 0.2, 0.6])]);
        let loc = localize_steps(&s, &w, &TcConfig::default()).unwrap();
        assert_eq!(loc.task.predicted_task, 1);
        assert!(loc.detections.iter().all(|d| d.step_id >= 2));
        assert_eq!(
            localize_steps(&set(&[]), &w, &TcConfig::default()),
            Err(ConsistencyError::EmptyProposalSet("v".into()))
        );
    }

    #[test]
    fn contaminant_threshold_both_sides() {
        // Task 0 = steps {0, 1}, task 1 = step {2}. The proposal under test
        // has the off-task step 2 ranked first with score c; the in-task
        // competitor (step 1) wins the top-1 slot iff its score x > gamma * c.
        let w = matrix(&[0, 0, 1]);
        let gamma = default_gamma::<f64>();
        let c = 0.9;
        let threshold = gamma * c;
        for (x, in_task_wins) in [(threshold * 1.01, true), (threshold * 0.99, false)] {
            let s = set(&[
                (0.0, 5.0, &[0.0, x, c]),
                (10.0, 15.0, &[1.0, 0.0, 0.0]),
                (20.0, 25.0, &[0.0, 1.0, 0.0]),
            ]);
            let loc = localize_steps(&s, &w, &TcConfig::default()).unwrap();
            assert_eq!(loc.task.predicted_task, 0);
            let first = loc
                .detections
                .iter()
                .find(|d| d.interval.start() == 0.0)
                .unwrap();
            assert_eq!(first.step_id == 1, in_task_wins, "x = {x}");
            if !in_task_wins {
                assert_eq!(first.step_id, 2);
                assert_eq!(first.score, c * gamma);
            }
        }
    }

    #[test]
    fn detection_file_round_trip() {
        let videos = vec![VideoDetections {
            video_id: "a".into(),
            task_id: Some(3),
            detections: vec![det(0.5, 2.25, 4, 0.125)],
        }];
        let mut buf = Vec::new();
        write_detections(&videos, &mut buf).unwrap();
        assert_eq!(load_detections::<f64, _>(&buf[..], 5).unwrap(), videos);
        assert!(load_detections::<f64, _>(&buf[..], 4).is_err());
    }
}
