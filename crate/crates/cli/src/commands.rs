use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;

use stepcoin_core::annotation::{
    audit_annotations, load_annotations, load_frame_labels, load_proposals, parse_annotations,
    segments_to_frame_labels, write_annotations, write_frame_labels, write_proposals, VideoAnnotation,
};
use stepcoin_core::consistency::{default_gamma, load_detections, localize_all, write_detections, TcConfig};
use stepcoin_core::lexicon::{load_lexicon, Lexicon};
use stepcoin_core::metrics::{corpus_frame_accuracy_in, evaluate_localization, EvalConfig, FrameScope};
use stepcoin_core::synthgen::{
    coin_lexicon, generate_corpus, generate_corpus_with_lexicon, generate_proposals, random_frame_labels,
    SynthConfig, SynthError,
};

use crate::render::render_timeline;
use crate::{
    Cli, CliError, Command, EvalLocArgs, EvalSegArgs, PipelineArgs, RefineArgs, RenderArgs, ServeArgs, SynthArgs,
    ValidateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Validate(a) => validate(a, out),
        Command::EvalLoc(a) => eval_loc(a, out),
        Command::EvalSeg(a) => eval_seg(a, out),
        Command::Refine(a) => refine(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Render(a) => render(a, out),
        Command::Serve(a) => serve(a, out),
    }
}

/// Opens an input file; a missing file is a usage error.
fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::Usage(format!("{}: file not found", path.display()))
        } else {
            CliError::Failed(format!("{}: {e}", path.display()))
        }
    })
}

fn failed(path: &Path, e: impl Display) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| failed(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| failed(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| failed(path, e))
}

fn say(out: &mut dyn Write, msg: impl Display) -> Result<()> {
    writeln!(out, "{msg}").map_err(|e| CliError::Failed(format!("stdout: {e}")))
}

fn read_lexicon(path: &Path) -> Result<Lexicon> {
    load_lexicon(open(path)?).map_err(|e| failed(path, e))
}

fn read_gt(path: &Path, lexicon: &Lexicon) -> Result<Vec<VideoAnnotation<f64>>> {
    load_annotations(open(path)?, lexicon).map_err(|e| failed(path, e))
}

fn tc_config(p: &PipelineArgs) -> Result<TcConfig<f64>> {
    let cfg = TcConfig {
        gamma: p.gamma.unwrap_or_else(default_gamma),
        top_c: p.top_c,
        nms_threshold: p.nms,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let lexicon = match load_lexicon(open(&a.lexicon)?) {
        Ok(l) => l,
        Err(e) => {
            say(out, format!("lexicon {}: FAIL\n  {e}", a.lexicon.display()))?;
            return Err(CliError::Failed("validation failed".into()));
        }
    };
    say(
        out,
        format!(
            "lexicon {}: OK ({} domains, {} tasks, {} steps)",
            a.lexicon.display(),
            lexicon.domains().len(),
            lexicon.num_tasks(),
            lexicon.num_steps()
        ),
    )?;
    let mut ok = true;

    if let Some(path) = &a.annotations {
        match audit_annotations::<f64, _>(open(path)?, &lexicon) {
            Ok(audit) if audit.is_ok() => say(
                out,
                format!("annotations {}: OK ({} videos, {} segments)", path.display(), audit.videos, audit.segments),
            )?,
            Ok(audit) => {
                ok = false;
                say(
                    out,
                    format!(
                        "annotations {}: FAIL ({} of {} videos)",
                        path.display(),
                        audit.violations.len(),
                        audit.videos
                    ),
                )?;
                for v in audit.violations.iter().take(a.max_violations) {
                    say(out, format!("  {v}"))?;
                }
                if audit.violations.len() > a.max_violations {
                    say(out, format!("  ... {} more", audit.violations.len() - a.max_violations))?;
                }
            }
            Err(e) => {
                ok = false;
                say(out, format!("annotations {}: FAIL\n  {e}", path.display()))?;
            }
        }
    }
    if let Some(path) = &a.proposals {
        match load_proposals::<f64, _>(open(path)?, lexicon.num_steps()) {
            Ok(sets) => say(
                out,
                format!(
                    "proposals {}: OK ({} videos, {} proposals)",
                    path.display(),
                    sets.len(),
                    sets.iter().map(|s| s.len()).sum::<usize>()
                ),
            )?,
            Err(e) => {
                ok = false;
                say(out, format!("proposals {}: FAIL\n  {e}", path.display()))?;
            }
        }
    }
    if let Some(path) = &a.detections {
        match load_detections::<f64, _>(open(path)?, lexicon.num_steps()) {
            Ok(v) => say(
                out,
                format!(
                    "detections {}: OK ({} videos, {} detections)",
                    path.display(),
                    v.len(),
                    v.iter().map(|d| d.detections.len()).sum::<usize>()
                ),
            )?,
            Err(e) => {
                ok = false;
                say(out, format!("detections {}: FAIL\n  {e}", path.display()))?;
            }
        }
    }
    if ok {
        say(out, "OK")
    } else {
        say(out, "FAIL")?;
        Err(CliError::Failed("validation failed".into()))
    }
}

fn eval_loc(a: EvalLocArgs, out: &mut dyn Write) -> Result<()> {
    let mut eval = EvalConfig::with_alphas(a.alphas.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    eval.max_detections_per_video = a.max_per_video;
    let tc = tc_config(&a.pipeline)?;
    let lexicon = read_lexicon(&a.lexicon)?;
    let gts = read_gt(&a.gt, &lexicon)?;
    let k = lexicon.num_steps();

    let detections = match (&a.proposals, &a.detections) {
        (Some(path), _) => {
            let sets = load_proposals(open(path)?, k).map_err(|e| failed(path, e))?;
            localize_all(&sets, &lexicon.incidence_matrix(), &tc, a.with_tc).map_err(|e| failed(path, e))?
        }
        (None, Some(path)) => load_detections(open(path)?, k).map_err(|e| failed(path, e))?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let report = evaluate_localization(&detections, &gts, &lexicon, &eval)
        .map_err(|e| CliError::Failed(e.to_string()))?;

    fs::create_dir_all(&a.out).map_err(|e| failed(&a.out, e))?;
    let json_path = a.out.join("report.json");
    let mut w = create(&json_path)?;
    report.write_json(&mut w).map_err(|e| failed(&json_path, e))?;
    finish(w, &json_path)?;
    let text = report.to_text(Some(&lexicon));
    let text_path = a.out.join("report.txt");
    fs::write(&text_path, &text).map_err(|e| failed(&text_path, e))?;
    write!(out, "{text}").map_err(|e| CliError::Failed(e.to_string()))
}

fn eval_seg(a: EvalSegArgs, out: &mut dyn Write) -> Result<()> {
    if !(a.fps.is_finite() && a.fps > 0.0) {
        return Err(CliError::Usage(format!("--fps must be positive, got {}", a.fps)));
    }
    let gts = match &a.lexicon {
        Some(l) => read_gt(&a.gt, &read_lexicon(l)?)?,
        None => parse_annotations(open(&a.gt)?).map_err(|e| failed(&a.gt, e))?,
    };
    let preds = load_frame_labels::<f64, _>(open(&a.pred)?).map_err(|e| failed(&a.pred, e))?;
    if let Some(p) = preds.iter().find(|p| p.fps != a.fps) {
        return Err(failed(
            &a.pred,
            format!("length mismatch: predictions sampled at {} fps, evaluating at {} fps", p.fps, a.fps),
        ));
    }
    let gt_frames: Vec<_> = gts.iter().map(|g| segments_to_frame_labels(g, a.fps)).collect();
    let scope = if a.steps_only { FrameScope::StepsOnly } else { FrameScope::All };
    let (acc, frames) =
        corpus_frame_accuracy_in(&preds, &gt_frames, scope).map_err(|e| CliError::Failed(e.to_string()))?;
    say(out, format!("frame accuracy: {:.2}% ({frames} frames)", 100.0 * acc))
}

fn refine(a: RefineArgs, out: &mut dyn Write) -> Result<()> {
    let tc = tc_config(&a.pipeline)?;
    let lexicon = read_lexicon(&a.lexicon)?;
    let sets = load_proposals(open(&a.proposals)?, lexicon.num_steps()).map_err(|e| failed(&a.proposals, e))?;
    let dets = localize_all(&sets, &lexicon.incidence_matrix(), &tc, !a.no_tc).map_err(|e| failed(&a.proposals, e))?;
    let mut w = create(&a.out)?;
    write_detections(&dets, &mut w).map_err(|e| failed(&a.out, e))?;
    finish(w, &a.out)?;
    say(
        out,
        format!(
            "wrote {} detections for {} videos to {}",
            dets.iter().map(|d| d.detections.len()).sum::<usize>(),
            dets.len(),
            a.out.display()
        ),
    )
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => serde_json::from_reader(open(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.videos {
        cfg.num_videos = n;
    }
    for (flag, slot) in [
        (a.jitter, &mut cfg.noise.boundary_jitter_sd),
        (a.score_noise, &mut cfg.noise.score_noise_sd),
        (a.contamination, &mut cfg.noise.contamination_rate),
        (a.dropout, &mut cfg.noise.dropout_rate),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    let synth_err = |e: SynthError| CliError::Failed(e.to_string());
    let corpus = if a.coin_lexicon {
        generate_corpus_with_lexicon(&cfg, coin_lexicon())
    } else {
        generate_corpus(&cfg)
    }
    .map_err(synth_err)?;
    let proposals = generate_proposals(&corpus.videos, &corpus.lexicon, &cfg.noise, cfg.seed).map_err(synth_err)?;

    fs::create_dir_all(&a.out).map_err(|e| failed(&a.out, e))?;
    let path = a.out.join("lexicon.json");
    let mut w = create(&path)?;
    corpus.lexicon.write_json(&mut w).map_err(|e| failed(&path, e))?;
    finish(w, &path)?;

    let path = a.out.join("annotations.json");
    let mut w = create(&path)?;
    write_annotations(&corpus.videos, &mut w).map_err(|e| failed(&path, e))?;
    finish(w, &path)?;

    let path = a.out.join("proposals.json");
    let mut w = create(&path)?;
    write_proposals(&proposals, corpus.lexicon.num_steps(), &mut w).map_err(|e| failed(&path, e))?;
    finish(w, &path)?;

    let path = a.out.join("config.json");
    let mut text = serde_json::to_string_pretty(&cfg).map_err(|e| failed(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| failed(&path, e))?;

    if a.random_frames {
        if !(a.fps.is_finite() && a.fps > 0.0) {
            return Err(CliError::Usage(format!("--fps must be positive, got {}", a.fps)));
        }
        let frames = random_frame_labels(&corpus.videos, corpus.lexicon.num_steps(), a.fps, cfg.seed);
        let path = a.out.join("random_frames.json");
        let mut w = create(&path)?;
        write_frame_labels(&frames, a.fps, &mut w).map_err(|e| failed(&path, e))?;
        finish(w, &path)?;
    }
    say(
        out,
        format!(
            "wrote {} videos ({} segments, {} steps) to {}",
            corpus.videos.len(),
            corpus.videos.iter().map(|v| v.segments.len()).sum::<usize>(),
            corpus.lexicon.num_steps(),
            a.out.display()
        ),
    )
}

fn render(a: RenderArgs, out: &mut dyn Write) -> Result<()> {
    if a.width < 10 {
        return Err(CliError::Usage("--width must be at least 10".into()));
    }
    let lexicon = a.lexicon.as_deref().map(read_lexicon).transpose()?;
    let gts = match &lexicon {
        Some(l) => read_gt(&a.gt, l)?,
        None => parse_annotations(open(&a.gt)?).map_err(|e| failed(&a.gt, e))?,
    };
    let gt = gts
        .into_iter()
        .find(|g| g.video_id == a.video)
        .ok_or_else(|| failed(&a.gt, format!("unknown video {:?}", a.video)))?;
    let num_steps = lexicon.as_ref().map_or(usize::MAX, |l| l.num_steps());
    let mut runs = Vec::new();
    for path in &a.detections {
        let videos = load_detections::<f64, _>(open(path)?, num_steps).map_err(|e| failed(path, e))?;
        let video = videos
            .into_iter()
            .find(|v| v.video_id == a.video)
            .ok_or_else(|| failed(path, format!("unknown video {:?}", a.video)))?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        runs.push((name, video.detections));
    }
    let timeline = render_timeline(&gt, &runs, lexicon.as_ref(), a.width);
    let mut w = create(&a.out)?;
    w.write_all(timeline.svg.as_bytes()).map_err(|e| failed(&a.out, e))?;
    finish(w, &a.out)?;
    if let Some(p) = &a.text {
        let mut w = create(p)?;
        w.write_all(timeline.ascii.as_bytes()).map_err(|e| failed(p, e))?;
        finish(w, p)?;
    }
    write!(out, "{}", timeline.ascii).map_err(|e| CliError::Failed(e.to_string()))
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> Result<()> {
    if !a.data.is_dir() {
        return Err(CliError::Usage(format!("{}: not a directory", a.data.display())));
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    let addr = SocketAddr::new(a.bind, a.port);
    runtime
        .block_on(stepcoin_service::serve(
            addr,
            &a.data,
            |bound| {
                let _ = writeln!(out, "listening on http://{bound}");
                let _ = out.flush();
            },
            async {
                let _ = tokio::signal::ctrl_c().await;
            },
        ))
        .map_err(|e| CliError::Failed(e.to_string()))
}
