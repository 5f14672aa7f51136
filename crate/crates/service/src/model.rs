use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stepcoin_core::annotation::{Segment, VideoAnnotation};
use stepcoin_core::lexicon::Lexicon;

use crate::error::ServiceError;

/// Three annotation passes, then a terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WorkflowState {
    Pass1,
    Pass2,
    Pass3,
    Done,
}

impl WorkflowState {
    /// Pass number whose author may write in this state; `None` once DONE.
    pub fn pass(self) -> Option<u8> {
        match self {
            Self::Pass1 => Some(1),
            Self::Pass2 => Some(2),
            Self::Pass3 => Some(3),
            Self::Done => None,
        }
    }

    pub fn next(self) -> Option<Self> {
        match self {
            Self::Pass1 => Some(Self::Pass2),
            Self::Pass2 => Some(Self::Pass3),
            Self::Pass3 => Some(Self::Done),
            Self::Done => None,
        }
    }
}

impl fmt::Display for WorkflowState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass1 => "PASS1",
            Self::Pass2 => "PASS2",
            Self::Pass3 => "PASS3",
            Self::Done => "DONE",
        })
    }
}

/// Wire form of a draft segment; checked when the draft is validated so a
/// reversed interval comes back as a ValidationError, not a parse error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraftSegment {
    pub start: f64,
    pub end: f64,
    pub step_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraftAnnotation {
    pub video_id: String,
    pub segments: Vec<DraftSegment>,
    pub author_pass: u8,
    /// Free-form worker label; there are no accounts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<String>,
    /// Milliseconds since the Unix epoch, stamped by the server on save.
    #[serde(default)]
    pub saved_at: u64,
}

impl DraftAnnotation {
    /// Structural checks only: steps must exist and segments must lie in
    /// `[0, duration]` without overlapping. Task-consistency waits for export.
    pub fn validate(&self, duration: f64, lexicon: &Lexicon) -> Result<(), ServiceError> {
        if !(1..=3).contains(&self.author_pass) {
            return Err(ServiceError::Validation(format!(
                "author_pass must be 1, 2 or 3, got {}",
                self.author_pass
            )));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.step_id >= lexicon.num_steps() {
                return Err(ServiceError::Validation(format!(
                    "video '{}' segment {i}: unknown step_id {}",
                    self.video_id, s.step_id
                )));
            }
        }
        self.to_annotation(0, duration)?
            .validate_structure()
            .map_err(|e| ServiceError::Validation(e.to_string()))
    }

    pub fn to_annotation(&self, task_id: usize, duration: f64) -> Result<VideoAnnotation<f64>, ServiceError> {
        let segments = self
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Segment::new(s.start, s.end, s.step_id).map_err(|e| {
                    ServiceError::Validation(format!("video '{}' segment {i}: {e}", self.video_id))
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(VideoAnnotation {
            video_id: self.video_id.clone(),
            task_id,
            duration,
            segments,
        })
    }
}

/// Mutable per-video state kept in the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub workflow_state: WorkflowState,
    pub revision: u64,
    pub draft: Option<DraftAnnotation>,
}

impl Default for VideoRecord {
    fn default() -> Self {
        Self {
            workflow_state: WorkflowState::Pass1,
            revision: 0,
            draft: None,
        }
    }
}

/// Static description of one video, from the project file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoConfig {
    pub video_id: String,
    pub duration: f64,
    /// Directory (relative to the project directory) holding one
    /// sub-directory per extraction rate.
    pub frame_dir: PathBuf,
    pub native_fps_available: Vec<f64>,
    /// Original video for verification mode, if present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_file: Option<PathBuf>,
    /// Task used at export; inferred from the first segment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<usize>,
}

fn default_store() -> PathBuf {
    PathBuf::from("store.json")
}

fn default_frame_ext() -> String {
    "jpg".to_owned()
}

/// Contents of `project.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub project_id: String,
    /// Lexicon file, relative to the project directory.
    pub lexicon: PathBuf,
    #[serde(default = "default_store")]
    pub store: PathBuf,
    #[serde(default = "default_frame_ext")]
    pub frame_ext: String,
    #[serde(default)]
    pub videos: Vec<VideoConfig>,
}

/// Ids end up in URLs and file names, so they are restricted to a safe set.
pub(crate) fn check_id(kind: &str, id: &str) -> Result<(), ServiceError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Config(format!(
            "{kind} id '{id}' must be non-empty, use only [A-Za-z0-9._-] and not start with '.'"
        )))
    }
}

/// Label used for a rate in frame URLs and directory names: `2`, `10`, `7.5`.
pub fn rate_label(rate: f64) -> String {
    if rate.fract() == 0.0 && rate.abs() < 1e15 {
        format!("{}", rate as i64)
    } else {
        format!("{rate}")
    }
}
