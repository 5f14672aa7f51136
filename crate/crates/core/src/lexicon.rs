//! Three-level taxonomy (domain → task → step) and the step–task incidence matrix.
//!
//! Task ids are dense `0..M` and step ids dense `0..K`. Background is not a
//! step; it only exists as a frame label (see [`crate::annotation::BACKGROUND`]).

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown task {task_id} (lexicon has {num_tasks} tasks)")]
    UnknownTask { task_id: usize, num_tasks: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> LexiconError {
    LexiconError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub domain_id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub id: usize,
    pub task_id: usize,
    pub phrase: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLexicon {
    version: String,
    domains: Vec<Domain>,
    tasks: Vec<Task>,
    steps: Vec<Step>,
}

/// A validated taxonomy. Immutable once built; entries are stored in id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lexicon {
    version: String,
    domains: Vec<Domain>,
    tasks: Vec<Task>,
    steps: Vec<Step>,
    #[serde(skip)]
    steps_by_task: Vec<Vec<usize>>,
    #[serde(skip)]
    domain_index: BTreeMap<usize, usize>,
}

impl Lexicon {
    /// Validates the parts and assembles a lexicon. The first violated
    /// invariant is reported.
    pub fn new(
        version: impl Into<String>,
        mut domains: Vec<Domain>,
        mut tasks: Vec<Task>,
        mut steps: Vec<Step>,
    ) -> Result<Self, LexiconError> {
        let mut domain_index = BTreeMap::new();
        for (pos, d) in domains.iter().enumerate() {
            if d.name.trim().is_empty() {
                return Err(invalid(format!("domain {}: empty name", d.id)));
            }
            if domain_index.insert(d.id, pos).is_some() {
                return Err(invalid(format!("duplicate domain id {}", d.id)));
            }
        }
        domains.sort_by_key(|d| d.id);
        let domain_index = domains.iter().enumerate().map(|(pos, d)| (d.id, pos)).collect::<BTreeMap<_, _>>();

        tasks.sort_by_key(|t| t.id);
        for (expected, t) in tasks.iter().enumerate() {
            if t.id != expected {
                return Err(if t.id < expected {
                    invalid(format!("duplicate task id {}", t.id))
                } else {
                    invalid(format!("task ids not dense: missing task id {expected}"))
                });
            }
            if t.name.trim().is_empty() {
                return Err(invalid(format!("task {}: empty name", t.id)));
            }
            if !domain_index.contains_key(&t.domain_id) {
                return Err(invalid(format!(
                    "task {}: unresolvable domain_id {}",
                    t.id, t.domain_id
                )));
            }
        }

        steps.sort_by_key(|s| s.id);
        let mut steps_by_task = vec![Vec::new(); tasks.len()];
        let mut phrases = HashSet::new();
        for (expected, s) in steps.iter().enumerate() {
            if s.id != expected {
                return Err(if s.id < expected {
                    invalid(format!("duplicate step id {}", s.id))
                } else {
                    invalid(format!("step ids not dense: missing step id {expected}"))
                });
            }
            if s.phrase.trim().is_empty() {
                return Err(invalid(format!("step {}: empty phrase", s.id)));
            }
            let Some(bucket) = steps_by_task.get_mut(s.task_id) else {
                return Err(invalid(format!(
                    "step {}: unresolvable task_id {}",
                    s.id, s.task_id
                )));
            };
            if !phrases.insert((s.task_id, s.phrase.as_str())) {
                return Err(invalid(format!(
                    "step {}: duplicate phrase {:?} within task {}",
                    s.id, s.phrase, s.task_id
                )));
            }
            bucket.push(s.id);
        }
        if let Some(empty) = steps_by_task.iter().position(Vec::is_empty) {
            return Err(invalid(format!("task {empty} has no steps")));
        }

        Ok(Self {
            version: version.into(),
            domains,
            tasks,
            steps,
            steps_by_task,
            domain_index,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// K, the number of steps.
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// M, the number of tasks.
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn step(&self, step_id: usize) -> Option<&Step> {
        self.steps.get(step_id)
    }

    pub fn task(&self, task_id: usize) -> Option<&Task> {
        self.tasks.get(task_id)
    }

    pub fn domain(&self, domain_id: usize) -> Option<&Domain> {
        self.domain_index.get(&domain_id).map(|&pos| &self.domains[pos])
    }

    /// Task owning `step_id`, if the step exists.
    pub fn task_of_step(&self, step_id: usize) -> Option<usize> {
        self.steps.get(step_id).map(|s| s.task_id)
    }

    /// Domain owning `step_id`, if the step exists.
    pub fn domain_of_step(&self, step_id: usize) -> Option<usize> {
        self.task_of_step(step_id).map(|t| self.tasks[t].domain_id)
    }

    /// Steps of `task_id` in ascending id order.
    pub fn steps_of_task(&self, task_id: usize) -> Result<&[usize], LexiconError> {
        self.steps_by_task
            .get(task_id)
            .map(Vec::as_slice)
            .ok_or(LexiconError::UnknownTask {
                task_id,
                num_tasks: self.num_tasks(),
            })
    }

    /// Builds the K×M incidence matrix.
    pub fn incidence_matrix(&self) -> StepTaskMatrix {
        StepTaskMatrix::from_lexicon(self)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<(), LexiconError> {
        serde_json::to_writer_pretty(&mut sink, self)?;
        sink.write_all(b"\n")?;
        Ok(())
    }
}

/// Parses and validates a lexicon file.
pub fn load_lexicon<R: Read>(source: R) -> Result<Lexicon, LexiconError> {
    let raw: RawLexicon = serde_json::from_reader(source)?;
    Lexicon::new(raw.version, raw.domains, raw.tasks, raw.steps)
}

pub fn load_lexicon_str(source: &str) -> Result<Lexicon, LexiconError> {
    load_lexicon(source.as_bytes())
}

/// Binary K×M matrix with `entries[i][j] = 1` iff step `i` belongs to task `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTaskMatrix {
    num_steps: usize,
    num_tasks: usize,
    // row-major, K rows of M entries
    entries: Vec<u8>,
    task_of_step: Vec<usize>,
}

impl StepTaskMatrix {
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        let (k, m) = (lexicon.num_steps(), lexicon.num_tasks());
        let mut entries = vec![0u8; k * m];
        let task_of_step: Vec<usize> = lexicon.steps().iter().map(|s| s.task_id).collect();
        for (i, &j) in task_of_step.iter().enumerate() {
            entries[i * m + j] = 1;
        }
        Self {
            num_steps: k,
            num_tasks: m,
            entries,
            task_of_step,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn get(&self, step: usize, task: usize) -> u8 {
        assert!(step < self.num_steps && task < self.num_tasks, "index out of bounds");
        self.entries[step * self.num_tasks + task]
    }

    pub fn row(&self, step: usize) -> &[u8] {
        &self.entries[step * self.num_tasks..(step + 1) * self.num_tasks]
    }

    /// Column `task` as a K-dimensional indicator vector.
    pub fn column(&self, task: usize) -> Vec<u8> {
        assert!(task < self.num_tasks, "task index out of bounds");
        (0..self.num_steps).map(|i| self.get(i, task)).collect()
    }

    /// The single task a step belongs to (the position of the 1 in its row).
    pub fn task_of(&self, step: usize) -> usize {
        self.task_of_step[step]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.num_steps)
            .map(|i| self.row(i).iter().map(|&e| usize::from(e)).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.num_tasks];
        for row in self.entries.chunks(self.num_tasks.max(1)) {
            for (s, &e) in sums.iter_mut().zip(row) {
                *s += usize::from(e);
            }
        }
        sums
    }

    /// Raw row-major entries.
    pub fn as_bytes(&self) -> &[u8] {
        &self.entries
    }
}
