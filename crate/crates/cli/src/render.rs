//! Timeline rendering: one lane per source, one coloured block per segment
//! or detection, a legend of step phrases, and a character-grid twin of the
//! same picture for terminals.

use std::collections::BTreeSet;
use std::fmt::Write;

use stepcoin_core::annotation::VideoAnnotation;
use stepcoin_core::consistency::Detection;
use stepcoin_core::lexicon::Lexicon;

const LABEL_W: f64 = 120.0;
const PLOT_W: f64 = 720.0;
const MARGIN: f64 = 10.0;
const LANE_H: f64 = 26.0;
const BLOCK_H: f64 = 18.0;
const AXIS_H: f64 = 24.0;
const LEGEND_ROW: f64 = 18.0;

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f",
    "#bab0ac", "#1f77b4", "#17becf",
];
const GLYPHS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Clone, Copy)]
struct Block {
    start: f64,
    end: f64,
    step: usize,
    score: Option<f64>,
}

struct Lane {
    name: String,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct Timeline {
    pub svg: String,
    pub ascii: String,
    pub lanes: usize,
    pub blocks: usize,
}

/// Renders `gt` and every non-empty detection run. `width` is the number of
/// character cells across the text timeline.
pub fn render_timeline(
    gt: &VideoAnnotation<f64>,
    runs: &[(String, Vec<Detection<f64>>)],
    lexicon: Option<&Lexicon>,
    width: usize,
) -> Timeline {
    let mut lanes = vec![Lane {
        name: "GT".into(),
        blocks: gt
            .segments
            .iter()
            .map(|s| Block {
                start: s.interval.start(),
                end: s.interval.end(),
                step: s.step_id,
                score: None,
            })
            .collect(),
    }];
    for (name, dets) in runs.iter().filter(|(_, d)| !d.is_empty()) {
        lanes.push(Lane {
            name: name.clone(),
            blocks: dets
                .iter()
                .map(|d| Block {
                    start: d.interval.start(),
                    end: d.interval.end(),
                    step: d.step_id,
                    score: Some(d.score),
                })
                .collect(),
        });
    }
    let legend: Vec<usize> = lanes
        .iter()
        .flat_map(|l| l.blocks.iter().map(|b| b.step))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let phrase = |step: usize| match lexicon.and_then(|l| l.step(step)) {
        Some(s) => format!("{step}: {}", s.phrase),
        None => format!("step {step}"),
    };
    // Detections may run past the annotated duration; widen the axis to fit.
    let duration = lanes
        .iter()
        .flat_map(|l| l.blocks.iter().map(|b| b.end))
        .fold(gt.duration, f64::max);

    Timeline {
        svg: svg(&gt.video_id, duration, &lanes, &legend, &phrase),
        ascii: ascii(&gt.video_id, duration, &lanes, &legend, &phrase, width),
        lanes: lanes.len(),
        blocks: lanes.iter().map(|l| l.blocks.len()).sum(),
    }
}

fn colour(legend: &[usize], step: usize) -> &'static str {
    let i = legend.binary_search(&step).unwrap_or(0);
    PALETTE[i % PALETTE.len()]
}

fn glyph(legend: &[usize], step: usize) -> char {
    let i = legend.binary_search(&step).unwrap_or(0);
    GLYPHS.get(i).map_or('#', |&b| b as char)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick spacing of 1, 2 or 5 times a power of ten, giving at most ~8 ticks.
fn tick_step(duration: f64) -> f64 {
    let raw = duration / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag)
}

fn svg(video: &str, duration: f64, lanes: &[Lane], legend: &[usize], phrase: &dyn Fn(usize) -> String) -> String {
    let x = |t: f64| LABEL_W + t / duration * PLOT_W;
    let width = LABEL_W + PLOT_W + MARGIN;
    let axis_y = MARGIN + lanes.len() as f64 * LANE_H;
    let height = axis_y + AXIS_H + legend.len() as f64 * LEGEND_ROW + MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(video));
    for (i, lane) in lanes.iter().enumerate() {
        let y = MARGIN + i as f64 * LANE_H;
        let _ = writeln!(s, r#"<g class="lane" data-source="{}">"#, escape(&lane.name));
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN:.0}" y="{:.2}">{}</text>"#,
            y + BLOCK_H - 5.0,
            escape(&lane.name)
        );
        let _ = writeln!(
            s,
            r##"<rect class="track" x="{LABEL_W:.2}" y="{y:.2}" width="{PLOT_W:.2}" height="{BLOCK_H:.2}" fill="#f2f2f2"/>"##
        );
        for b in &lane.blocks {
            let score = b.score.map(|v| format!(" score {v:.3}")).unwrap_or_default();
            let _ = writeln!(
                s,
                r#"<rect class="block" data-step="{}" x="{:.2}" y="{y:.2}" width="{:.2}" height="{BLOCK_H:.2}" fill="{}"><title>{} [{:.2}, {:.2}){score}</title></rect>"#,
                b.step,
                x(b.start),
                x(b.end) - x(b.start),
                colour(legend, b.step),
                escape(&phrase(b.step)),
                b.start,
                b.end,
            );
        }
        s.push_str("</g>\n");
    }
    let _ = writeln!(s, r#"<g class="axis">"#);
    let _ = writeln!(
        s,
        r##"<line x1="{LABEL_W:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="#333"/>"##,
        LABEL_W + PLOT_W
    );
    let step = tick_step(duration);
    let ticks = (duration / step + 1e-9).floor() as usize;
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    for k in 0..=ticks {
        let t = k as f64 * step;
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{axis_y:.2}" x2="{0:.2}" y2="{1:.2}" stroke="#333"/><text x="{0:.2}" y="{2:.2}" text-anchor="middle">{t:.decimals$}s</text>"##,
            x(t),
            axis_y + 4.0,
            axis_y + 16.0,
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, &step) in legend.iter().enumerate() {
        let y = axis_y + AXIS_H + i as f64 * LEGEND_ROW;
        let _ = writeln!(
            s,
            r#"<rect class="swatch" x="{LABEL_W:.2}" y="{y:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            colour(legend, step),
            LABEL_W + 18.0,
            y + 10.0,
            escape(&phrase(step)),
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn ascii(
    video: &str,
    duration: f64,
    lanes: &[Lane],
    legend: &[usize],
    phrase: &dyn Fn(usize) -> String,
    width: usize,
) -> String {
    let label_w = lanes.iter().map(|l| l.name.chars().count()).max().unwrap_or(2).min(16) + 2;
    let mut s = String::new();
    let _ = writeln!(s, "{video}  ({duration:.2} s)");
    for lane in lanes {
        let name: String = lane.name.chars().take(label_w - 2).collect();
        let _ = write!(s, "{name:<label_w$}|");
        for cell in 0..width {
            let t = (cell as f64 + 0.5) * duration / width as f64;
            // On overlap the higher-scoring block wins the cell.
            let hit = lane
                .blocks
                .iter()
                .filter(|b| b.start <= t && t < b.end)
                .max_by(|a, b| a.score.unwrap_or(0.0).total_cmp(&b.score.unwrap_or(0.0)));
            s.push(hit.map_or('.', |b| glyph(legend, b.step)));
        }
        s.push_str("|\n");
    }
    let end = format!("{duration:.2}s");
    let pad = (width + 1).saturating_sub(1 + end.len());
    let _ = writeln!(s, "{:label_w$}0{:pad$}{end}", "", "");
    for &step in legend {
        let _ = writeln!(s, "  {}  {}", glyph(legend, step), phrase(step));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepcoin_core::annotation::{Interval, Segment};

    fn gt() -> VideoAnnotation<f64> {
        VideoAnnotation {
            video_id: "v".into(),
            task_id: 0,
            duration: 30.0,
            segments: vec![
                Segment::new(2.0, 8.0, 0).unwrap(),
                Segment::new(10.0, 18.0, 1).unwrap(),
                Segment::new(21.0, 27.0, 2).unwrap(),
            ],
        }
    }

    fn as_dets(v: &VideoAnnotation<f64>) -> Vec<Detection<f64>> {
        v.segments
            .iter()
            .map(|s| Detection {
                interval: s.interval,
                step_id: s.step_id,
                score: 1.0,
            })
            .collect()
    }

    fn rects(svg: &str, lane: &str) -> Vec<String> {
        let start = svg.find(&format!(r#"data-source="{lane}""#)).unwrap();
        let body = &svg[start..start + svg[start..].find("</g>").unwrap()];
        body.lines()
            .filter(|l| l.contains(r#"class="block""#))
            .map(|l| {
                // drop the lane's vertical offset, keep everything else
                l[..l.find("<title>").unwrap()]
                    .split(' ')
                    .filter(|attr| !attr.starts_with("y="))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    #[test]
    fn no_detections_gives_gt_lane_only() {
        let t = render_timeline(&gt(), &[("run".into(), vec![])], None, 60);
        assert_eq!((t.lanes, t.blocks), (1, 3));
        assert_eq!(t.svg.matches(r#"class="lane""#).count(), 1);
        assert_eq!(t.ascii.lines().filter(|l| l.ends_with('|')).count(), 1);
    }

    #[test]
    fn identical_detections_draw_identical_lanes() {
        let g = gt();
        let t = render_timeline(&g, &[("same".into(), as_dets(&g))], None, 60);
        assert_eq!(t.lanes, 2);
        assert_eq!(rects(&t.svg, "GT"), rects(&t.svg, "same"));
        let rows: Vec<&str> = t.ascii.lines().filter(|l| l.ends_with('|')).collect();
        assert_eq!(rows[0].split_once('|').unwrap().1, rows[1].split_once('|').unwrap().1);
    }

    #[test]
    fn ascii_columns_align_with_time() {
        let t = render_timeline(&gt(), &[], None, 30);
        let row = t.ascii.lines().nth(1).unwrap();
        let cells = row.split_once('|').unwrap().1;
        // one cell per second: [2, 8) is step 0 -> 'a'
        assert_eq!(&cells[..10], "..aaaaaa..");
        assert_eq!(&cells[21..27], "cccccc");
    }

    #[test]
    fn detections_past_duration_widen_the_axis() {
        let g = gt();
        let late = vec![Detection {
            interval: Interval::new(25.0, 40.0).unwrap(),
            step_id: 2,
            score: 0.5,
        }];
        let t = render_timeline(&g, &[("late".into(), late)], None, 40);
        assert!(t.ascii.starts_with("v  (40.00 s)"));
    }

    #[test]
    fn phrases_are_escaped() {
        let lex = Lexicon::new(
            "t",
            vec![stepcoin_core::lexicon::Domain { id: 0, name: "d".into() }],
            vec![stepcoin_core::lexicon::Task { id: 0, domain_id: 0, name: "t".into() }],
            (0..3)
                .map(|id| stepcoin_core::lexicon::Step {
                    id,
                    task_id: 0,
                    phrase: format!("salt & <pepper> {id}"),
                })
                .collect(),
        )
        .unwrap();
        let t = render_timeline(&gt(), &[], Some(&lex), 60);
        assert!(t.svg.contains("salt &amp; &lt;pepper&gt; 1"));
        assert!(!t.svg.contains("<pepper>"));
        assert!(t.ascii.contains("b  1: salt & <pepper> 1"));
    }

    #[test]
    fn tick_spacing() {
        assert_eq!(tick_step(30.0), 5.0);
        assert_eq!(tick_step(141.6), 20.0);
        assert_eq!(tick_step(8.0), 1.0);
    }
}
