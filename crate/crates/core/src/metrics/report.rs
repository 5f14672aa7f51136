use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicon;

pub const REPORT_FORMAT: &str = "stepcoin-report-v1";

/// Per-class AP and AR, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub ap: f64,
    pub ar: f64,
    pub num_gt: usize,
    pub num_detections: usize,
}

/// Results at one IoU threshold. All values are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub map: f64,
    pub mar: f64,
    pub per_class: BTreeMap<usize, ClassResult>,
    pub per_task: BTreeMap<usize, f64>,
    pub per_domain: BTreeMap<usize, f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl AlphaResult {
    /// Aggregates class results (classes with ground truth only).
    pub fn from_classes(alpha: f64, per_class: BTreeMap<usize, ClassResult>, lexicon: &Lexicon) -> Self {
        let mut by_task: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut by_domain: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&class, r) in &per_class {
            if let Some(task) = lexicon.task_of_step(class) {
                by_task.entry(task).or_default().push(r.ap);
                by_domain.entry(lexicon.tasks()[task].domain_id).or_default().push(r.ap);
            }
        }
        Self {
            alpha,
            map: mean(per_class.values().map(|r| r.ap)),
            mar: mean(per_class.values().map(|r| r.ar)),
            per_task: by_task.into_iter().map(|(t, aps)| (t, mean(aps))).collect(),
            per_domain: by_domain.into_iter().map(|(d, aps)| (d, mean(aps))).collect(),
            per_class,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub videos: usize,
    pub gt_segments: usize,
    pub detections: usize,
}

/// Step-localization report, serialized as `stepcoin-report-v1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub alphas: Vec<f64>,
    pub counts: EvalCounts,
    pub per_alpha: Vec<AlphaResult>,
}

impl EvalReport {
    pub fn alpha(&self, alpha: f64) -> Option<&AlphaResult> {
        self.per_alpha.iter().find(|r| r.alpha == alpha)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        sink.write_all(self.to_json_string().as_bytes())
    }

    pub fn from_json<R: Read>(source: R) -> Result<Self, serde_json::Error> {
        let report: Self = serde_json::from_reader(source)?;
        if report.format != REPORT_FORMAT {
            return Err(serde::de::Error::custom(format!(
                "unsupported report format {:?}",
                report.format
            )));
        }
        Ok(report)
    }

    /// Aligned table with one mAP row and one mAR row, one column per
    /// threshold, values to two decimals. When a lexicon is given, a
    /// per-domain mAP block follows.
    pub fn to_text(&self, lexicon: Option<&Lexicon>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "videos: {}  ground-truth segments: {}  detections: {}",
            self.counts.videos, self.counts.gt_segments, self.counts.detections
        );
        let _ = write!(out, "{:<8}", "alpha");
        for r in &self.per_alpha {
            let _ = write!(out, "{:>8}", format!("{}", r.alpha));
        }
        out.push('\n');
        for (label, pick) in [("mAP", 0), ("mAR", 1)] {
            let _ = write!(out, "{label:<8}");
            for r in &self.per_alpha {
                let v = if pick == 0 { r.map } else { r.mar };
                let _ = write!(out, "{v:>8.2}");
            }
            out.push('\n');
        }
        if let Some(lexicon) = lexicon {
            out.push_str("\nper-domain mAP\n");
            let domains: std::collections::BTreeSet<usize> = self
                .per_alpha
                .iter()
                .flat_map(|r| r.per_domain.keys().copied())
                .collect();
            for d in domains {
                let name = lexicon.domain(d).map_or("?", |d| d.name.as_str());
                let _ = write!(out, "{:<28}", truncate(name, 27));
                for r in &self.per_alpha {
                    match r.per_domain.get(&d) {
                        Some(v) => {
                            let _ = write!(out, "{v:>8.2}");
                        }
                        None => {
                            let _ = write!(out, "{:>8}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// One column of the text table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub alpha: f64,
    pub map: f64,
    pub mar: f64,
}

/// Reads the alpha / mAP / mAR rows back out of [`EvalReport::to_text`].
pub fn parse_text_table(text: &str) -> Option<Vec<TableRow>> {
    let row = |label: &str| -> Option<Vec<f64>> {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(label))?;
        line.split_whitespace().skip(1).map(|t| t.parse().ok()).collect()
    };
    let (alphas, maps, mars) = (row("alpha")?, row("mAP")?, row("mAR")?);
    if alphas.len() != maps.len() || alphas.len() != mars.len() {
        return None;
    }
    Some(
        alphas
            .into_iter()
            .zip(maps)
            .zip(mars)
            .map(|((alpha, map), mar)| TableRow { alpha, map, mar })
            .collect(),
    )
}
