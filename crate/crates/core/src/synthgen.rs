//! Seeded synthetic corpora and proposals calibrated to COIN's published
//! statistics (2.36 min per video, 3.91 segments per video, 14.91 s per
//! segment).
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`, with one stream per generated item selected by
//! `set_stream`. Streams are independent, so generating videos in any order
//! or in parallel yields the same corpus.
//!
//! | stream                 | use                            |
//! |------------------------|--------------------------------|
//! | `0`                    | lexicon                        |
//! | `CORPUS_STREAM + i`    | ground truth of video `i`      |
//! | `PROPOSAL_STREAM + i`  | proposals of video `i`         |
//! | `SEGMENTATION_STREAM + i` | random frame labels of video `i` |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    frame_count, FrameLabelSequence, Interval, Proposal, ProposalSet, Segment, VideoAnnotation,
};
use crate::lexicon::{Domain, Lexicon, Step, Task};

const LEXICON_STREAM: u64 = 0;
const CORPUS_STREAM: u64 = 1 << 32;
const PROPOSAL_STREAM: u64 = 2 << 32;
const SEGMENTATION_STREAM: u64 = 3 << 32;

/// Log-space standard deviation of segment and background durations.
pub const DURATION_LOG_SD: f64 = 0.6;

/// A contaminating off-task step receives this multiple of the proposal's
/// top score. Must lie in `(1, e^2)` so the contaminant outranks the true
/// step before refinement and falls below it after `e^-2` attenuation.
pub const CONTAMINATION_GAIN: f64 = 2.0;

/// The twelve COIN domains.
pub const COIN_DOMAINS: [&str; 12] = [
    "nursing & caring",
    "vehicles",
    "leisure & performance",
    "gadgets",
    "electric appliances",
    "household items",
    "science & craft",
    "plants & fruits",
    "snacks & drinks",
    "dishes",
    "sports",
    "housework",
];
pub const COIN_TASKS: usize = 180;
pub const COIN_STEPS: usize = 778;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconShape {
    pub domains: usize,
    /// Inclusive range.
    pub tasks_per_domain: (usize, usize),
    /// Inclusive range.
    pub steps_per_task: (usize, usize),
}

impl Default for LexiconShape {
    fn default() -> Self {
        Self {
            domains: 4,
            tasks_per_domain: (3, 5),
            steps_per_task: (3, 6),
        }
    }
}

/// Corruption applied when turning ground truth into proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub boundary_jitter_sd: f64,
    pub score_noise_sd: f64,
    pub contamination_rate: f64,
    pub dropout_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::NONE
    }
}

impl NoiseModel {
    pub const NONE: Self = Self {
        boundary_jitter_sd: 0.0,
        score_noise_sd: 0.0,
        contamination_rate: 0.0,
        dropout_rate: 0.0,
    };

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("boundary_jitter_sd", self.boundary_jitter_sd),
            ("score_noise_sd", self.score_noise_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("contamination_rate", self.contamination_rate),
            ("dropout_rate", self.dropout_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_videos: usize,
    pub lexicon_shape: LexiconShape,
    /// Seconds.
    pub mean_video_duration: f64,
    pub mean_segments_per_video: f64,
    /// Seconds.
    pub mean_segment_duration: f64,
    pub noise: NoiseModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_videos: 100,
            lexicon_shape: LexiconShape::default(),
            mean_video_duration: 141.6,
            mean_segments_per_video: 3.91,
            mean_segment_duration: 14.91,
            noise: NoiseModel::NONE,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.num_videos == 0 {
            return bad("num_videos must be >= 1".into());
        }
        for (name, v) in [
            ("mean_video_duration", self.mean_video_duration),
            ("mean_segment_duration", self.mean_segment_duration),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.mean_segments_per_video.is_finite() && self.mean_segments_per_video >= 1.0) {
            return bad(format!(
                "mean_segments_per_video must be >= 1, got {}",
                self.mean_segments_per_video
            ));
        }
        let s = &self.lexicon_shape;
        if s.domains == 0 {
            return bad("lexicon_shape.domains must be >= 1".into());
        }
        for (name, (lo, hi)) in [("tasks_per_domain", s.tasks_per_domain), ("steps_per_task", s.steps_per_task)] {
            if lo == 0 || lo > hi {
                return bad(format!("lexicon_shape.{name} must be a range 1 <= lo <= hi, got ({lo}, {hi})"));
            }
        }
        self.noise.validate()?;
        let busy = self.mean_segments_per_video * self.mean_segment_duration;
        if busy > self.mean_video_duration {
            return Err(SynthError::InfeasibleConfig(format!(
                "{} segments x {} s = {busy:.2} s of steps exceeds the mean video duration {} s",
                self.mean_segments_per_video, self.mean_segment_duration, self.mean_video_duration
            )));
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Log-normal with the given mean and [`DURATION_LOG_SD`].
fn lognormal_with_mean(mean: f64) -> LogNormal<f64> {
    let mu = mean.ln() - DURATION_LOG_SD * DURATION_LOG_SD / 2.0;
    LogNormal::new(mu, DURATION_LOG_SD).expect("valid log-normal parameters")
}

fn placeholder_lexicon(version: &str, domain_names: &[String], steps_per_task: &[(usize, usize)]) -> Lexicon {
    // steps_per_task: (domain_id, step count) for each task in id order
    let domains = domain_names
        .iter()
        .enumerate()
        .map(|(id, name)| Domain { id, name: name.clone() })
        .collect();
    let mut tasks = Vec::new();
    let mut steps = Vec::new();
    for (task_id, &(domain_id, n)) in steps_per_task.iter().enumerate() {
        tasks.push(Task {
            id: task_id,
            domain_id,
            name: format!("task {task_id}"),
        });
        for k in 0..n {
            steps.push(Step {
                id: steps.len(),
                task_id,
                phrase: format!("step {} of task {task_id}", k + 1),
            });
        }
    }
    Lexicon::new(version, domains, tasks, steps).expect("generated lexicon is valid")
}

/// Random lexicon of the given shape.
pub fn generate_lexicon(shape: &LexiconShape, seed: u64) -> Lexicon {
    let mut rng = stream(seed, LEXICON_STREAM);
    let names: Vec<String> = (0..shape.domains).map(|d| format!("domain {d}")).collect();
    let mut layout = Vec::new();
    for d in 0..shape.domains {
        let tasks = rng.random_range(shape.tasks_per_domain.0..=shape.tasks_per_domain.1);
        for _ in 0..tasks {
            layout.push((d, rng.random_range(shape.steps_per_task.0..=shape.steps_per_task.1)));
        }
    }
    placeholder_lexicon(&format!("synth-{seed}"), &names, &layout)
}

/// COIN-shaped lexicon: 12 named domains, 15 tasks each (180), 778 steps
/// (the first 58 tasks have 5 steps, the rest 4). Phrases are placeholders.
pub fn coin_lexicon() -> Lexicon {
    let names: Vec<String> = COIN_DOMAINS.iter().map(|s| s.to_string()).collect();
    let per_domain = COIN_TASKS / COIN_DOMAINS.len();
    let five_step_tasks = COIN_STEPS - 4 * COIN_TASKS;
    let layout: Vec<(usize, usize)> = (0..COIN_TASKS)
        .map(|t| (t / per_domain, if t < five_step_tasks { 5 } else { 4 }))
        .collect();
    placeholder_lexicon("coin-shaped-v1", &names, &layout)
}

/// A generated lexicon and its ground-truth videos.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub lexicon: Lexicon,
    pub videos: Vec<VideoAnnotation<f64>>,
}

pub fn video_id(index: usize) -> String {
    format!("synth-{index:06}")
}

/// Generates a lexicon from `config.lexicon_shape` and a corpus over it.
pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let lexicon = generate_lexicon(&config.lexicon_shape, config.seed);
    generate_corpus_with_lexicon(config, lexicon)
}

/// Generates a corpus over a given lexicon; `config.lexicon_shape` is ignored.
pub fn generate_corpus_with_lexicon(config: &SynthConfig, lexicon: Lexicon) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let background_mean =
        config.mean_video_duration - config.mean_segments_per_video * config.mean_segment_duration;
    let count_extra = config.mean_segments_per_video - 1.0;
    let videos = (0..config.num_videos)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, CORPUS_STREAM + i as u64);
            generate_video(&mut rng, i, &lexicon, config.mean_segment_duration, count_extra, background_mean)
        })
        .collect();
    Ok(SynthCorpus { lexicon, videos })
}

fn generate_video(
    rng: &mut ChaCha8Rng,
    index: usize,
    lexicon: &Lexicon,
    mean_segment_duration: f64,
    count_extra: f64,
    background_mean: f64,
) -> VideoAnnotation<f64> {
    let task_id = rng.random_range(0..lexicon.num_tasks());
    let task_steps = lexicon.steps_of_task(task_id).expect("task in range");
    let extra = if count_extra > 0.0 {
        Poisson::new(count_extra).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    let n = 1 + extra;
    let mut steps: Vec<usize> = (0..n).map(|_| task_steps[rng.random_range(0..task_steps.len())]).collect();
    steps.sort_unstable();

    let seg_dist = lognormal_with_mean(mean_segment_duration);
    let lengths: Vec<f64> = (0..n).map(|_| seg_dist.sample(rng)).collect();
    let background = if background_mean > 0.0 {
        lognormal_with_mean(background_mean).sample(rng)
    } else {
        0.0
    };
    let weights: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
    let total_weight: f64 = weights.iter().sum();
    let gaps: Vec<f64> = weights.iter().map(|w| background * w / total_weight).collect();

    let mut t = gaps[0];
    let mut segments = Vec::with_capacity(n);
    for ((&step_id, &len), &gap) in steps.iter().zip(&lengths).zip(&gaps[1..]) {
        segments.push(Segment::new(t, t + len, step_id).expect("positive segment length"));
        t = t + len + gap;
    }
    VideoAnnotation {
        video_id: video_id(index),
        task_id,
        duration: t,
        segments,
    }
}

/// Turns ground truth into detector-like proposals: one per surviving
/// segment, boundaries jittered, scores one-hot on the true step plus
/// zero-truncated Gaussian noise, optionally contaminated by an off-task step.
pub fn generate_proposals(
    gts: &[VideoAnnotation<f64>],
    lexicon: &Lexicon,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<ProposalSet<f64>>, SynthError> {
    noise.validate()?;
    let k = lexicon.num_steps();
    let jitter = Normal::new(0.0, noise.boundary_jitter_sd).expect("validated sd");
    let score_noise = Normal::new(0.0, noise.score_noise_sd).expect("validated sd");
    Ok(gts
        .par_iter()
        .enumerate()
        .map(|(i, video)| {
            let mut rng = stream(seed, PROPOSAL_STREAM + i as u64);
            let task_steps = lexicon.steps_of_task(video.task_id).unwrap_or(&[]);
            let off_task = k - task_steps.len();
            let mut proposals = Vec::with_capacity(video.segments.len());
            for seg in &video.segments {
                let dropped = rng.random::<f64>() < noise.dropout_rate;
                let start = seg.interval.start() + jitter.sample(&mut rng);
                let end = seg.interval.end() + jitter.sample(&mut rng);
                let mut scores = vec![0.0; k];
                scores[seg.step_id] = 1.0;
                if noise.score_noise_sd > 0.0 {
                    for s in &mut scores {
                        *s = (*s + score_noise.sample(&mut rng)).max(0.0);
                    }
                }
                let contaminate = rng.random::<f64>() < noise.contamination_rate;
                let pick = rng.random_range(0..off_task.max(1));
                if dropped {
                    continue;
                }
                if contaminate && off_task > 0 {
                    // pick-th step outside the video's task
                    let contaminant = (0..k)
                        .filter(|s| task_steps.binary_search(s).is_err())
                        .nth(pick)
                        .expect("pick < off_task");
                    let top = scores.iter().copied().fold(0.0, f64::max);
                    scores[contaminant] = CONTAMINATION_GAIN * top;
                }
                let (start, end) = (start.clamp(0.0, video.duration), end.clamp(0.0, video.duration));
                let interval = Interval::new(start, end).unwrap_or(seg.interval);
                proposals.push(Proposal { interval, scores });
            }
            ProposalSet::new(video.video_id.clone(), proposals)
        })
        .collect())
}

/// Uniform random frame labels over the `num_steps` step classes, sampled
/// at `fps` over each video's duration.
pub fn random_frame_labels(
    gts: &[VideoAnnotation<f64>],
    num_steps: usize,
    fps: f64,
    seed: u64,
) -> Vec<FrameLabelSequence<f64>> {
    gts.par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = stream(seed, SEGMENTATION_STREAM + i as u64);
            let labels = (0..frame_count(v.duration, fps))
                .map(|_| rng.random_range(0..num_steps) as i32)
                .collect();
            FrameLabelSequence {
                video_id: v.video_id.clone(),
                fps,
                labels,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin_shape() {
        let lex = coin_lexicon();
        assert_eq!((lex.domains().len(), lex.num_tasks(), lex.num_steps()), (12, 180, 778));
        assert!(lex.domains().iter().all(|d| !d.name.is_empty()));
    }

    #[test]
    fn infeasible_config() {
        let cfg = SynthConfig {
            mean_segment_duration: 60.0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_corpus(&cfg), Err(SynthError::InfeasibleConfig(_))));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SynthConfig { num_videos: 0, ..SynthConfig::default() },
            SynthConfig { mean_segments_per_video: 0.5, ..SynthConfig::default() },
            SynthConfig {
                lexicon_shape: LexiconShape { steps_per_task: (3, 2), ..LexiconShape::default() },
                ..SynthConfig::default()
            },
            SynthConfig {
                noise: NoiseModel { dropout_rate: 1.5, ..NoiseModel::NONE },
                ..SynthConfig::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(SynthError::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn single_video_single_task() {
        let cfg = SynthConfig {
            num_videos: 1,
            lexicon_shape: LexiconShape {
                domains: 1,
                tasks_per_domain: (1, 1),
                steps_per_task: (3, 3),
            },
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.videos.len(), 1);
        corpus.videos[0].validate(&corpus.lexicon).unwrap();
    }

    #[test]
    fn exactly_one_segment_when_mean_is_one() {
        let cfg = SynthConfig {
            num_videos: 20,
            mean_segments_per_video: 1.0,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(corpus.videos.iter().all(|v| v.segments.len() == 1));
    }

    #[test]
    fn dropout_everything() {
        let corpus = generate_corpus(&SynthConfig { num_videos: 10, ..SynthConfig::default() }).unwrap();
        let noise = NoiseModel { dropout_rate: 1.0, ..NoiseModel::NONE };
        let sets = generate_proposals(&corpus.videos, &corpus.lexicon, &noise, 3).unwrap();
        assert_eq!(sets.len(), 10);
        assert!(sets.iter().all(ProposalSet::is_empty));
    }

    #[test]
    fn zero_noise_proposals_equal_ground_truth() {
        let corpus = generate_corpus(&SynthConfig { num_videos: 10, ..SynthConfig::default() }).unwrap();
        let sets = generate_proposals(&corpus.videos, &corpus.lexicon, &NoiseModel::NONE, 3).unwrap();
        for (v, s) in corpus.videos.iter().zip(&sets) {
            assert_eq!(v.segments.len(), s.len());
            for (seg, p) in v.segments.iter().zip(&s.proposals) {
                assert_eq!(seg.interval, p.interval);
                assert_eq!(p.scores.iter().sum::<f64>(), 1.0);
                assert_eq!(p.scores[seg.step_id], 1.0);
            }
        }
    }

    #[test]
    fn contamination_targets_other_tasks() {
        let corpus = generate_corpus(&SynthConfig { num_videos: 20, ..SynthConfig::default() }).unwrap();
        let noise = NoiseModel { contamination_rate: 1.0, ..NoiseModel::NONE };
        let sets = generate_proposals(&corpus.videos, &corpus.lexicon, &noise, 9).unwrap();
        for (v, s) in corpus.videos.iter().zip(&sets) {
            for (seg, p) in v.segments.iter().zip(&s.proposals) {
                let (top, &score) = p
                    .scores
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                assert_eq!(score, CONTAMINATION_GAIN);
                assert_ne!(corpus.lexicon.task_of_step(top), Some(v.task_id));
                assert_eq!(p.scores[seg.step_id], 1.0);
            }
        }
    }

    #[test]
    fn random_labels_cover_duration() {
        let corpus = generate_corpus(&SynthConfig { num_videos: 3, ..SynthConfig::default() }).unwrap();
        let k = corpus.lexicon.num_steps();
        let preds = random_frame_labels(&corpus.videos, k, 10.0, 1);
        for (v, p) in corpus.videos.iter().zip(&preds) {
            assert_eq!(p.len(), frame_count(v.duration, 10.0));
            assert!(p.labels.iter().all(|&l| l >= 0 && (l as usize) < k));
        }
    }
}
