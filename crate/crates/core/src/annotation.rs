//! Ground-truth annotations, detector proposals and frame-level label sequences.
//!
//! Intervals are half-open `[start, end)` in seconds. Frame `t` sits at time
//! `t / fps`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::scalar::Scalar;

pub const ANNOTATION_FORMAT: &str = "stepcoin-ann-v1";
pub const PROPOSAL_FORMAT: &str = "stepcoin-prop-v1";
pub const FRAME_LABEL_FORMAT: &str = "stepcoin-frames-v1";

/// Frame label for frames outside every step segment.
pub const BACKGROUND: i32 = -1;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format tag {found:?} (expected {expected:?})")]
    Format { expected: &'static str, found: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(video_id: &str, segment: Option<usize>, msg: impl std::fmt::Display) -> AnnotationError {
    match segment {
        Some(i) => AnnotationError::Validation(format!("video {video_id:?}, segment {i}: {msg}")),
        None => AnnotationError::Validation(format!("video {video_id:?}: {msg}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IntervalError {
    #[error("non-finite interval bound")]
    NonFinite,
    #[error("negative start")]
    NegativeStart,
    #[error("empty interval")]
    Empty,
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawInterval<T>")]
pub struct Interval<T> {
    start: T,
    end: T,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawInterval<T> {
    start: T,
    end: T,
}

impl<T: Scalar> TryFrom<RawInterval<T>> for Interval<T> {
    type Error = IntervalError;

    fn try_from(raw: RawInterval<T>) -> Result<Self, Self::Error> {
        Interval::new(raw.start, raw.end)
    }
}

impl<T: Scalar> Interval<T> {
    pub fn new(start: T, end: T) -> Result<Self, IntervalError> {
        if !start.is_finite() || !end.is_finite() {
            return Err(IntervalError::NonFinite);
        }
        if start < T::zero() {
            return Err(IntervalError::NegativeStart);
        }
        if start >= end {
            return Err(IntervalError::Empty);
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn end(&self) -> T {
        self.end
    }

    pub fn length(&self) -> T {
        self.end - self.start
    }

    /// Length of the overlap with `other`; zero when they only touch.
    pub fn intersection(&self, other: &Self) -> T {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        (hi - lo).max(T::zero())
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains_time(&self, t: T) -> bool {
        self.start <= t && t < self.end
    }

    pub fn cast<U: Scalar>(&self) -> Interval<U> {
        Interval {
            start: U::of(self.start.as_f64()),
            end: U::of(self.end.as_f64()),
        }
    }
}

/// A labelled step occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Segment<T> {
    pub interval: Interval<T>,
    pub step_id: usize,
}

impl<T: Scalar> Segment<T> {
    pub fn new(start: T, end: T, step_id: usize) -> Result<Self, IntervalError> {
        Ok(Self {
            interval: Interval::new(start, end)?,
            step_id,
        })
    }
}

/// One video's task label and its ground-truth step segments.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotation<T> {
    pub video_id: String,
    pub task_id: usize,
    pub duration: T,
    pub segments: Vec<Segment<T>>,
}

impl<T: Scalar> VideoAnnotation<T> {
    /// Checks everything that does not need a lexicon: positive duration,
    /// segments inside `[0, duration]` and pairwise disjoint.
    pub fn validate_structure(&self) -> Result<(), AnnotationError> {
        let id = self.video_id.as_str();
        if id.is_empty() {
            return Err(AnnotationError::Validation("empty video_id".into()));
        }
        if !(self.duration.is_finite() && self.duration > T::zero()) {
            return Err(invalid(id, None, "duration must be positive and finite"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.interval.end() > self.duration {
                return Err(invalid(id, Some(i), "segment out of range (ends after duration)"));
            }
        }
        check_disjoint(id, self.segments.iter().map(|s| &s.interval))
    }

    /// Full validation, including task-consistency against the lexicon.
    pub fn validate(&self, lexicon: &Lexicon) -> Result<(), AnnotationError> {
        self.validate_structure()?;
        let id = self.video_id.as_str();
        if self.task_id >= lexicon.num_tasks() {
            return Err(invalid(id, None, format!("unknown task_id {}", self.task_id)));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            match lexicon.task_of_step(seg.step_id) {
                None => return Err(invalid(id, Some(i), format!("unknown step_id {}", seg.step_id))),
                Some(task) if task != self.task_id => {
                    return Err(invalid(
                        id,
                        Some(i),
                        format!(
                            "task-consistency violated: step {} belongs to task {task}, video is task {}",
                            seg.step_id, self.task_id
                        ),
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

fn check_disjoint<'a, T: Scalar>(
    video_id: &str,
    intervals: impl Iterator<Item = &'a Interval<T>>,
) -> Result<(), AnnotationError> {
    let mut order: Vec<(usize, &Interval<T>)> = intervals.enumerate().collect();
    order.sort_by(|a, b| crate::scalar::cmp_scalar(a.1.start(), b.1.start()).then(a.0.cmp(&b.0)));
    for pair in order.windows(2) {
        let ((i, a), (j, b)) = (pair[0], pair[1]);
        if a.overlaps(b) {
            return Err(invalid(
                video_id,
                Some(i.max(j)),
                format!("overlapping segments ({} and {})", i.min(j), i.max(j)),
            ));
        }
    }
    Ok(())
}

/// One detector proposal: an interval plus a K-dimensional step-score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    pub interval: Interval<T>,
    pub scores: Vec<T>,
}

/// A detector's proposals for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet<T> {
    pub video_id: String,
    pub proposals: Vec<Proposal<T>>,
}

impl<T: Scalar> ProposalSet<T> {
    pub fn new(video_id: impl Into<String>, proposals: Vec<Proposal<T>>) -> Self {
        Self {
            video_id: video_id.into(),
            proposals,
        }
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    /// Checks that every score vector has length `num_steps` and holds
    /// finite non-negative values.
    pub fn validate(&self, num_steps: usize) -> Result<(), AnnotationError> {
        for (n, p) in self.proposals.iter().enumerate() {
            if p.scores.len() != num_steps {
                return Err(AnnotationError::DimensionMismatch(format!(
                    "video {:?}, proposal {n}: {} scores, expected K = {num_steps}",
                    self.video_id,
                    p.scores.len()
                )));
            }
            if p.scores.iter().any(|s| !s.is_finite() || *s < T::zero()) {
                return Err(invalid(
                    &self.video_id,
                    Some(n),
                    "scores must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// Per-frame labels: a step id, or [`BACKGROUND`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabelSequence<T> {
    pub video_id: String,
    pub fps: T,
    pub labels: Vec<i32>,
}

impl<T: Scalar> FrameLabelSequence<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self, num_steps: usize) -> Result<(), AnnotationError> {
        if !(self.fps.is_finite() && self.fps > T::zero()) {
            return Err(invalid(&self.video_id, None, "fps must be positive"));
        }
        match self
            .labels
            .iter()
            .position(|&l| l != BACKGROUND && (l < 0 || l as usize >= num_steps))
        {
            Some(t) => Err(invalid(
                &self.video_id,
                None,
                format!("frame {t}: label {} outside 0..{num_steps}", self.labels[t]),
            )),
            None => Ok(()),
        }
    }
}

/// Rounds `x` to the nearest integer when it is within floating-point noise of it.
fn snap<T: Scalar>(x: T) -> T {
    let r = x.round();
    let tol = T::epsilon() * T::of(64.0) * x.abs().max(T::one());
    if (x - r).abs() <= tol {
        r
    } else {
        x
    }
}

/// Number of sampled frames in a video: `floor(duration * fps)`.
pub fn frame_count<T: Scalar>(duration: T, fps: T) -> usize {
    snap(duration * fps).floor().max(T::zero()).to_usize().unwrap_or(0)
}

/// First frame index whose timestamp is `>= time`.
fn first_frame_at_or_after<T: Scalar>(time: T, fps: T) -> usize {
    snap(time * fps).ceil().max(T::zero()).to_usize().unwrap_or(0)
}

/// Samples the annotation at `fps`; each frame takes the step of the segment
/// containing its timestamp, else [`BACKGROUND`].
pub fn segments_to_frame_labels<T: Scalar>(
    annotation: &VideoAnnotation<T>,
    fps: T,
) -> FrameLabelSequence<T> {
    let n = frame_count(annotation.duration, fps);
    let mut labels = vec![BACKGROUND; n];
    for seg in &annotation.segments {
        let first = first_frame_at_or_after(seg.interval.start(), fps).min(n);
        let last = first_frame_at_or_after(seg.interval.end(), fps).min(n);
        for label in &mut labels[first..last.max(first)] {
            *label = seg.step_id as i32;
        }
    }
    FrameLabelSequence {
        video_id: annotation.video_id.clone(),
        fps,
        labels,
    }
}

/// Collapses maximal runs of equal non-background labels into segments
/// `[first / fps, (last + 1) / fps)`.
pub fn frame_labels_to_segments<T: Scalar>(seq: &FrameLabelSequence<T>) -> Vec<Segment<T>> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < seq.labels.len() {
        let label = seq.labels[t];
        let run_end = seq.labels[t..]
            .iter()
            .position(|&l| l != label)
            .map_or(seq.labels.len(), |off| t + off);
        if label != BACKGROUND {
            let start = T::from_usize(t).unwrap() / seq.fps;
            let end = T::from_usize(run_end).unwrap() / seq.fps;
            out.push(Segment {
                interval: Interval::new(start, end).expect("non-empty run"),
                step_id: label as usize,
            });
        }
        t = run_end;
    }
    out
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct SegmentRecord<T> {
    start: T,
    end: T,
    step_id: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct VideoRecord<T> {
    task_id: usize,
    duration: T,
    segments: Vec<SegmentRecord<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct AnnotationFile<T> {
    format: String,
    videos: BTreeMap<String, VideoRecord<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ProposalRecord<T> {
    start: T,
    end: T,
    scores: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ProposalFile<T> {
    format: String,
    num_steps: usize,
    videos: BTreeMap<String, Vec<ProposalRecord<T>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct FrameLabelFile<T> {
    format: String,
    fps: T,
    videos: BTreeMap<String, Vec<i32>>,
}

fn check_format(expected: &'static str, found: &str) -> Result<(), AnnotationError> {
    if found == expected {
        Ok(())
    } else {
        Err(AnnotationError::Format {
            expected,
            found: found.to_owned(),
        })
    }
}

fn unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), AnnotationError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(invalid(id, None, "duplicate video_id"));
        }
    }
    Ok(())
}

/// Parses an annotation file and runs the lexicon-free checks. Videos come
/// back sorted by id; segments keep file order.
pub fn parse_annotations<T: Scalar, R: Read>(
    source: R,
) -> Result<Vec<VideoAnnotation<T>>, AnnotationError> {
    let file: AnnotationFile<T> = serde_json::from_reader(source)?;
    check_format(ANNOTATION_FORMAT, &file.format)?;
    let mut out = Vec::with_capacity(file.videos.len());
    for (video_id, rec) in file.videos {
        let mut segments = Vec::with_capacity(rec.segments.len());
        for (i, s) in rec.segments.into_iter().enumerate() {
            let seg = Segment::new(s.start, s.end, s.step_id).map_err(|e| invalid(&video_id, Some(i), e))?;
            segments.push(seg);
        }
        let ann = VideoAnnotation {
            video_id,
            task_id: rec.task_id,
            duration: rec.duration,
            segments,
        };
        ann.validate_structure()?;
        out.push(ann);
    }
    Ok(out)
}

/// Parses an annotation file and validates every video against `lexicon`.
pub fn load_annotations<T: Scalar, R: Read>(
    source: R,
    lexicon: &Lexicon,
) -> Result<Vec<VideoAnnotation<T>>, AnnotationError> {
    let videos = parse_annotations(source)?;
    for v in &videos {
        v.validate(lexicon)?;
    }
    Ok(videos)
}

/// Outcome of checking an annotation file video by video.
#[derive(Debug)]
pub struct AnnotationAudit {
    pub videos: usize,
    pub segments: usize,
    /// At most one violation per video, in video id order.
    pub violations: Vec<AnnotationError>,
}

impl AnnotationAudit {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Like [`load_annotations`], but keeps going after a bad video so every
/// offending video is reported. Only unreadable or mis-formatted files fail.
pub fn audit_annotations<T: Scalar, R: Read>(
    source: R,
    lexicon: &Lexicon,
) -> Result<AnnotationAudit, AnnotationError> {
    let file: AnnotationFile<T> = serde_json::from_reader(source)?;
    check_format(ANNOTATION_FORMAT, &file.format)?;
    let mut audit = AnnotationAudit {
        videos: file.videos.len(),
        segments: 0,
        violations: Vec::new(),
    };
    for (video_id, rec) in file.videos {
        audit.segments += rec.segments.len();
        let segments: Result<Vec<_>, _> = rec
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| Segment::new(s.start, s.end, s.step_id).map_err(|e| invalid(&video_id, Some(i), e)))
            .collect();
        let checked = segments.and_then(|segments| {
            VideoAnnotation {
                video_id: video_id.clone(),
                task_id: rec.task_id,
                duration: rec.duration,
                segments,
            }
            .validate(lexicon)
        });
        if let Err(e) = checked {
            audit.violations.push(e);
        }
    }
    Ok(audit)
}

pub fn write_annotations<T: Scalar, W: Write>(
    videos: &[VideoAnnotation<T>],
    mut sink: W,
) -> Result<(), AnnotationError> {
    unique_ids(videos.iter().map(|v| v.video_id.as_str()))?;
    let file = AnnotationFile {
        format: ANNOTATION_FORMAT.to_owned(),
        videos: videos
            .iter()
            .map(|v| {
                let rec = VideoRecord {
                    task_id: v.task_id,
                    duration: v.duration,
                    segments: v
                        .segments
                        .iter()
                        .map(|s| SegmentRecord {
                            start: s.interval.start(),
                            end: s.interval.end(),
                            step_id: s.step_id,
                        })
                        .collect(),
                };
                (v.video_id.clone(), rec)
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut sink, &file)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Parses a proposal file without a K expectation; returns the declared K.
pub fn parse_proposals<T: Scalar, R: Read>(
    source: R,
) -> Result<(usize, Vec<ProposalSet<T>>), AnnotationError> {
    let file: ProposalFile<T> = serde_json::from_reader(source)?;
    check_format(PROPOSAL_FORMAT, &file.format)?;
    let k = file.num_steps;
    let mut out = Vec::with_capacity(file.videos.len());
    for (video_id, recs) in file.videos {
        let mut proposals = Vec::with_capacity(recs.len());
        for (n, r) in recs.into_iter().enumerate() {
            let interval = Interval::new(r.start, r.end).map_err(|e| invalid(&video_id, Some(n), e))?;
            proposals.push(Proposal {
                interval,
                scores: r.scores,
            });
        }
        let set = ProposalSet { video_id, proposals };
        set.validate(k)?;
        out.push(set);
    }
    Ok((k, out))
}

/// Parses a proposal file whose declared K must equal `num_steps`.
pub fn load_proposals<T: Scalar, R: Read>(
    source: R,
    num_steps: usize,
) -> Result<Vec<ProposalSet<T>>, AnnotationError> {
    let (declared, sets) = parse_proposals(source)?;
    if declared != num_steps {
        return Err(AnnotationError::DimensionMismatch(format!(
            "proposal file declares K = {declared}, lexicon has K = {num_steps}"
        )));
    }
    Ok(sets)
}

pub fn write_proposals<T: Scalar, W: Write>(
    sets: &[ProposalSet<T>],
    num_steps: usize,
    mut sink: W,
) -> Result<(), AnnotationError> {
    unique_ids(sets.iter().map(|s| s.video_id.as_str()))?;
    for s in sets {
        s.validate(num_steps)?;
    }
    let file = ProposalFile {
        format: PROPOSAL_FORMAT.to_owned(),
        num_steps,
        videos: sets
            .iter()
            .map(|s| {
                let recs = s
                    .proposals
                    .iter()
                    .map(|p| ProposalRecord {
                        start: p.interval.start(),
                        end: p.interval.end(),
                        scores: p.scores.clone(),
                    })
                    .collect();
                (s.video_id.clone(), recs)
            })
            .collect(),
    };
    serde_json::to_writer(&mut sink, &file)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Parses a frame-label file (all videos share one fps).
pub fn load_frame_labels<T: Scalar, R: Read>(
    source: R,
) -> Result<Vec<FrameLabelSequence<T>>, AnnotationError> {
    let file: FrameLabelFile<T> = serde_json::from_reader(source)?;
    check_format(FRAME_LABEL_FORMAT, &file.format)?;
    if !(file.fps.is_finite() && file.fps > T::zero()) {
        return Err(AnnotationError::Validation("fps must be positive".into()));
    }
    Ok(file
        .videos
        .into_iter()
        .map(|(video_id, labels)| FrameLabelSequence {
            video_id,
            fps: file.fps,
            labels,
        })
        .collect())
}

pub fn write_frame_labels<T: Scalar, W: Write>(
    seqs: &[FrameLabelSequence<T>],
    fps: T,
    mut sink: W,
) -> Result<(), AnnotationError> {
    unique_ids(seqs.iter().map(|s| s.video_id.as_str()))?;
    if let Some(s) = seqs.iter().find(|s| s.fps != fps) {
        return Err(invalid(&s.video_id, None, "fps differs from file fps"));
    }
    let file = FrameLabelFile {
        format: FRAME_LABEL_FORMAT.to_owned(),
        fps,
        videos: seqs.iter().map(|s| (s.video_id.clone(), s.labels.clone())).collect(),
    };
    serde_json::to_writer(&mut sink, &file)?;
    sink.write_all(b"\n")?;
    Ok(())
}
