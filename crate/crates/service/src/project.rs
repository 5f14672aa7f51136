use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use stepcoin_core::annotation::{write_annotations, VideoAnnotation};
use stepcoin_core::lexicon::{load_lexicon, Lexicon};

use crate::error::ServiceError;
use crate::model::{check_id, rate_label, DraftAnnotation, ProjectConfig, VideoConfig, VideoRecord, WorkflowState};
use crate::store::{read_store, write_store};

pub const PROJECT_FILE: &str = "project.json";

type Snapshot = Arc<BTreeMap<String, VideoRecord>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub duration: f64,
    pub workflow_state: WorkflowState,
    pub revision: u64,
    pub native_fps_available: Vec<f64>,
    pub has_video: bool,
    pub task_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: usize,
    /// Seconds, `index / fps`.
    pub timestamp: f64,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameList {
    pub video_id: String,
    pub fps: f64,
    /// Extraction rate the frames are taken from.
    pub source_fps: f64,
    pub frames: Vec<FrameRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationView {
    pub video_id: String,
    pub workflow_state: WorkflowState,
    pub revision: u64,
    pub draft: Option<DraftAnnotation>,
}

/// Returned once a write is durable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteAck {
    pub revision: u64,
    pub workflow_state: WorkflowState,
}

/// One annotation project: immutable configuration plus the committed store
/// snapshot. Readers clone the snapshot pointer and never wait on writers;
/// writers are serialized and publish a new snapshot only after the store
/// file has been durably replaced.
#[derive(Debug)]
pub struct Project {
    dir: PathBuf,
    config: ProjectConfig,
    videos: BTreeMap<String, VideoConfig>,
    lexicon: Lexicon,
    snapshot: RwLock<Snapshot>,
    writer: Mutex<()>,
}

impl Project {
    /// Loads `dir/project.json`, its lexicon and its store.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        let cfg_path = dir.join(PROJECT_FILE);
        let bytes = fs::read(&cfg_path)?;
        let config: ProjectConfig = serde_json::from_slice(&bytes)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", cfg_path.display())))?;
        let lexicon_path = dir.join(&config.lexicon);
        let lexicon = load_lexicon(fs::File::open(&lexicon_path)?)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", lexicon_path.display())))?;
        Self::from_parts(dir, config, lexicon)
    }

    pub fn from_parts(dir: PathBuf, config: ProjectConfig, lexicon: Lexicon) -> Result<Self, ServiceError> {
        check_id("project", &config.project_id)?;
        let mut videos = BTreeMap::new();
        for v in &config.videos {
            check_id("video", &v.video_id)?;
            if !(v.duration.is_finite() && v.duration > 0.0) {
                return Err(ServiceError::Config(format!("video '{}': duration must be positive", v.video_id)));
            }
            if v.native_fps_available.is_empty()
                || v.native_fps_available.iter().any(|r| !(r.is_finite() && *r > 0.0))
            {
                return Err(ServiceError::Config(format!(
                    "video '{}': native_fps_available must be non-empty positive rates",
                    v.video_id
                )));
            }
            if let Some(t) = v.task_id {
                if t >= lexicon.num_tasks() {
                    return Err(ServiceError::Config(format!("video '{}': unknown task_id {t}", v.video_id)));
                }
            }
            if videos.insert(v.video_id.clone(), v.clone()).is_some() {
                return Err(ServiceError::Config(format!("duplicate video id '{}'", v.video_id)));
            }
        }

        let stored = read_store(&dir.join(&config.store))?.map(|s| s.videos).unwrap_or_default();
        if let Some(stray) = stored.keys().find(|id| !videos.contains_key(*id)) {
            return Err(ServiceError::Config(format!("store has video '{stray}' not listed in the project")));
        }
        let records = videos
            .keys()
            .map(|id| (id.clone(), stored.get(id).cloned().unwrap_or_default()))
            .collect();
        Ok(Self {
            dir,
            config,
            videos,
            lexicon,
            snapshot: RwLock::new(Arc::new(records)),
            writer: Mutex::new(()),
        })
    }

    pub fn id(&self) -> &str {
        &self.config.project_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn store_path(&self) -> PathBuf {
        self.dir.join(&self.config.store)
    }

    fn snapshot(&self) -> Snapshot {
        self.snapshot.read().clone()
    }

    fn video(&self, video_id: &str) -> Result<&VideoConfig, ServiceError> {
        self.videos.get(video_id).ok_or_else(|| ServiceError::UnknownVideo {
            project: self.id().to_owned(),
            video: video_id.to_owned(),
        })
    }

    /// All videos ordered by id.
    pub fn list_videos(&self) -> Vec<VideoSummary> {
        let snap = self.snapshot();
        self.videos
            .values()
            .map(|v| {
                let rec = &snap[&v.video_id];
                VideoSummary {
                    video_id: v.video_id.clone(),
                    duration: v.duration,
                    workflow_state: rec.workflow_state,
                    revision: rec.revision,
                    native_fps_available: v.native_fps_available.clone(),
                    has_video: self.video_path(v).is_some(),
                    task_id: v.task_id,
                }
            })
            .collect()
    }

    fn video_path(&self, v: &VideoConfig) -> Option<PathBuf> {
        let p = self.dir.join(v.video_file.as_ref()?);
        p.is_file().then_some(p)
    }

    /// Source file for verification mode.
    pub fn video_file(&self, video_id: &str) -> Result<PathBuf, ServiceError> {
        let v = self.video(video_id)?;
        self.video_path(v).ok_or_else(|| ServiceError::NoVideoFile(video_id.to_owned()))
    }

    /// Frames at `t / fps` covering `[0, duration)`, drawn from the lowest
    /// native rate that `fps` divides.
    pub fn frames(&self, video_id: &str, fps: f64) -> Result<FrameList, ServiceError> {
        let v = self.video(video_id)?;
        let unsupported = || ServiceError::UnsupportedRate {
            fps,
            available: v.native_fps_available.clone(),
        };
        if !(fps.is_finite() && fps > 0.0) {
            return Err(unsupported());
        }
        let (source, step) = v
            .native_fps_available
            .iter()
            .filter_map(|&r| subsample_step(r, fps).map(|k| (r, k)))
            .min_by_key(|&(_, k)| k)
            .ok_or_else(unsupported)?;
        let label = rate_label(source);
        let frames = (0..frames_covering(v.duration, fps))
            .map(|i| FrameRef {
                index: i,
                timestamp: i as f64 / fps,
                url: format!(
                    "/frames/{}/{}/{label}/{:06}.{}",
                    self.id(),
                    v.video_id,
                    i * step,
                    self.config.frame_ext
                ),
            })
            .collect();
        Ok(FrameList {
            video_id: v.video_id.clone(),
            fps,
            source_fps: source,
            frames,
        })
    }

    /// Resolves a frame URL tail to a file path, or `None` if it does not
    /// name a frame of a configured rate.
    pub fn frame_path(&self, video_id: &str, rate: &str, file: &str) -> Option<PathBuf> {
        let v = self.videos.get(video_id)?;
        if !v.native_fps_available.iter().any(|&r| rate_label(r) == rate) {
            return None;
        }
        let (stem, ext) = file.rsplit_once('.')?;
        if ext != self.config.frame_ext || stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some(self.dir.join(&v.frame_dir).join(rate).join(file))
    }

    pub fn annotation(&self, video_id: &str) -> Result<AnnotationView, ServiceError> {
        self.video(video_id)?;
        let rec = self.snapshot()[video_id].clone();
        Ok(AnnotationView {
            video_id: video_id.to_owned(),
            workflow_state: rec.workflow_state,
            revision: rec.revision,
            draft: rec.draft,
        })
    }

    /// Saves a draft for the current pass; with `complete` the video moves to
    /// the next stage in the same write.
    pub fn submit(
        &self,
        video_id: &str,
        mut draft: DraftAnnotation,
        expected_revision: u64,
        complete: bool,
    ) -> Result<WriteAck, ServiceError> {
        let v = self.video(video_id)?;
        if draft.video_id != video_id {
            return Err(ServiceError::Validation(format!(
                "draft is for video '{}' but was posted to '{video_id}'",
                draft.video_id
            )));
        }
        self.write(video_id, expected_revision, draft.author_pass, |rec| {
            draft.validate(v.duration, &self.lexicon)?;
            draft.saved_at = now_millis();
            rec.draft = Some(draft);
            if complete {
                rec.workflow_state = rec.workflow_state.next().expect("DONE has no pass");
            }
            Ok(())
        })
    }

    /// Marks the current pass complete without changing the draft.
    pub fn advance(&self, video_id: &str, author_pass: u8, expected_revision: u64) -> Result<WriteAck, ServiceError> {
        self.video(video_id)?;
        self.write(video_id, expected_revision, author_pass, |rec| {
            if rec.draft.is_none() {
                return Err(ServiceError::NoDraft(video_id.to_owned()));
            }
            rec.workflow_state = rec.workflow_state.next().expect("DONE has no pass");
            Ok(())
        })
    }

    /// Common write path: revision check, pass check, mutation, durable
    /// store replacement, then publication of the new snapshot.
    fn write(
        &self,
        video_id: &str,
        expected_revision: u64,
        author_pass: u8,
        apply: impl FnOnce(&mut VideoRecord) -> Result<(), ServiceError>,
    ) -> Result<WriteAck, ServiceError> {
        let _guard = self.writer.lock();
        let current = self.snapshot();
        let mut rec = current[video_id].clone();
        if rec.revision != expected_revision {
            return Err(ServiceError::RevisionConflict {
                expected: expected_revision,
                current: rec.revision,
            });
        }
        if rec.workflow_state.pass() != Some(author_pass) {
            return Err(ServiceError::WrongPass {
                state: rec.workflow_state.to_string(),
                found: author_pass,
            });
        }
        apply(&mut rec)?;
        rec.revision += 1;
        let ack = WriteAck {
            revision: rec.revision,
            workflow_state: rec.workflow_state,
        };
        let mut next = (*current).clone();
        next.insert(video_id.to_owned(), rec);
        write_store(&self.store_path(), &next)?;
        *self.snapshot.write() = Arc::new(next);
        tracing::debug!(project = self.id(), video = video_id, revision = ack.revision, state = %ack.workflow_state, "committed");
        Ok(ack)
    }

    /// Final annotations for a fully DONE project, validated against the
    /// lexicon including task-consistency.
    pub fn export(&self) -> Result<Vec<VideoAnnotation<f64>>, ServiceError> {
        let snap = self.snapshot();
        let pending: Vec<String> = snap
            .iter()
            .filter(|(_, r)| r.workflow_state != WorkflowState::Done)
            .map(|(id, _)| id.clone())
            .collect();
        if !pending.is_empty() {
            return Err(ServiceError::IncompleteProject(pending));
        }
        self.videos
            .values()
            .map(|v| {
                let draft = snap[&v.video_id]
                    .draft
                    .as_ref()
                    .ok_or_else(|| ServiceError::NoDraft(v.video_id.clone()))?;
                let task_id = match v.task_id {
                    Some(t) => t,
                    None => self.infer_task(draft)?,
                };
                let ann = draft.to_annotation(task_id, v.duration)?;
                ann.validate(&self.lexicon)
                    .map_err(|e| ServiceError::Validation(e.to_string()))?;
                Ok(ann)
            })
            .collect()
    }

    /// Task of the earliest segment, used when the project does not assign one.
    fn infer_task(&self, draft: &DraftAnnotation) -> Result<usize, ServiceError> {
        draft
            .segments
            .iter()
            .min_by(|a, b| a.start.total_cmp(&b.start))
            .and_then(|s| self.lexicon.task_of_step(s.step_id))
            .ok_or_else(|| {
                ServiceError::Validation(format!(
                    "video '{}': no task_id assigned and no segments to infer it from",
                    draft.video_id
                ))
            })
    }

    pub fn export_bytes(&self) -> Result<Vec<u8>, ServiceError> {
        let videos = self.export()?;
        let mut out = Vec::new();
        write_annotations(&videos, &mut out).map_err(|e| ServiceError::Validation(e.to_string()))?;
        Ok(out)
    }
}

/// Integer `k` with `native / k == fps`, if any.
fn subsample_step(native: f64, fps: f64) -> Option<usize> {
    let k = native / fps;
    let r = k.round();
    (r >= 1.0 && (k - r).abs() <= 1e-9 * r).then_some(r as usize)
}

/// `ceil(duration * fps)`, treating products within rounding error of an
/// integer as that integer.
fn frames_covering(duration: f64, fps: f64) -> usize {
    let x = duration * fps;
    let r = x.round();
    if (x - r).abs() <= 64.0 * f64::EPSILON * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// All projects under a data directory, one per sub-directory holding a
/// `project.json`.
#[derive(Debug, Default)]
pub struct ProjectRegistry {
    projects: BTreeMap<String, Arc<Project>>,
}

impl ProjectRegistry {
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let mut dirs: BTreeSet<PathBuf> = BTreeSet::new();
        for entry in fs::read_dir(data_dir.as_ref())? {
            let path = entry?.path();
            if path.join(PROJECT_FILE).is_file() {
                dirs.insert(path);
            }
        }
        let mut reg = Self::default();
        for dir in dirs {
            reg.insert(Project::open(&dir)?)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, project: Project) -> Result<(), ServiceError> {
        let id = project.id().to_owned();
        if self.projects.contains_key(&id) {
            return Err(ServiceError::Config(format!("duplicate project id '{id}'")));
        }
        self.projects.insert(id, Arc::new(project));
        Ok(())
    }

    pub fn get(&self, project_id: &str) -> Result<Arc<Project>, ServiceError> {
        self.projects
            .get(project_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownProject(project_id.to_owned()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.projects.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.projects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projects.is_empty()
    }
}
