use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use stepcoin_core::metrics::{parse_text_table, EvalReport};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/timeline").join(name)
}

fn stepcoin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepcoin"))
        .args(args)
        .env_remove("STEPCOIN_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Runs `synth` into `dir` with extra flags and returns the directory.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", p(dir)];
    args.extend_from_slice(extra);
    let o = stepcoin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.to_path_buf()
}

fn eval_loc(corpus: &Path, out: &Path, extra: &[&str]) -> Output {
    let (gt, props, lex) = (corpus.join("annotations.json"), corpus.join("proposals.json"), corpus.join("lexicon.json"));
    let mut args = vec!["eval-loc", "--gt", p(&gt), "--proposals", p(&props), "--lexicon", p(&lex), "--out", p(out)];
    args.extend_from_slice(extra);
    stepcoin(&args)
}

fn read_report(dir: &Path) -> EvalReport {
    EvalReport::from_json(fs::File::open(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn validate_good_pair() {
    let o = stepcoin(&["validate", p(&fixture("lexicon.json")), p(&fixture("gt.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().last(), Some("OK"));
}

#[test]
fn validate_reports_overlap() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    let text = fs::read_to_string(fixture("gt.json")).unwrap().replace("\"start\": 18.0", "\"start\": 12.0");
    fs::write(&bad, text).unwrap();
    let o = stepcoin(&["validate", p(&fixture("lexicon.json")), p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL") && out.contains("overlapping segments") && out.contains("tire01"), "{out}");
}

#[test]
fn validate_missing_file_is_usage_error() {
    let o = stepcoin(&["validate", p(&fixture("lexicon.json")), "/nonexistent/ann.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(stepcoin(&["eval-loc", "--bogus"]).status.code(), Some(2));
    assert_eq!(stepcoin(&["frobnicate"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--videos", "3"]);
    let o = eval_loc(&corpus, tmp.path(), &["--gamma", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = eval_loc(&corpus, tmp.path(), &["--alphas", "0.5,0.1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stepcoin(&["--help"]).status.success());
}

#[test]
fn threads_env_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_stepcoin"))
        .args(["validate", p(&fixture("lexicon.json"))])
        .env("STEPCOIN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("STEPCOIN_THREADS"));
}

#[test]
fn zero_noise_corpus_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(&tmp.path().join("c"), &["--seed", "7", "--videos", "40"]);
    for extra in [&[][..], &["--with-tc"][..]] {
        let out = tmp.path().join(format!("r{}", extra.len()));
        let o = eval_loc(&corpus, &out, extra);
        assert!(o.status.success(), "{}", stderr(&o));
        let map_row = stdout(&o).lines().find(|l| l.starts_with("mAP")).unwrap().to_owned();
        assert_eq!(map_row.split_whitespace().skip(1).collect::<Vec<_>>(), ["100.00"; 5]);
        assert!(out.join("report.txt").is_file());
    }
}

#[test]
fn text_and_json_reports_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(&tmp.path().join("c"), &["--seed", "3", "--videos", "30", "--jitter", "2", "--score-noise", "0.2", "--contamination", "0.3"]);
    let out = tmp.path().join("r");
    let o = eval_loc(&corpus, &out, &["--with-tc", "--alphas", "0.1,0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_report(&out);
    let rows = parse_text_table(&fs::read_to_string(out.join("report.txt")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(report.alphas, [0.1, 0.5]);
    for (row, r) in rows.iter().zip(&report.per_alpha) {
        assert_eq!(row.alpha, r.alpha);
        assert_eq!(format!("{:.2}", row.map), format!("{:.2}", r.map));
        assert_eq!(format!("{:.2}", row.mar), format!("{:.2}", r.mar));
    }
}

#[test]
fn dimension_mismatch_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(&tmp.path().join("a"), &["--seed", "1", "--videos", "5"]);
    let b = synth(&tmp.path().join("b"), &["--seed", "1", "--videos", "5", "--coin-lexicon"]);
    let (gt, lex) = (a.join("annotations.json"), a.join("lexicon.json"));
    let props = b.join("proposals.json");
    let o = stepcoin(&["eval-loc", "--gt", p(&gt), "--proposals", p(&props), "--lexicon", p(&lex), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("K = 778"), "{}", stderr(&o));
}

#[test]
fn refinement_helps_on_contaminated_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(&tmp.path().join("c"), &["--seed", "11", "--videos", "100", "--contamination", "0.5", "--score-noise", "0.1", "--jitter", "1"]);
    let (raw, tc) = (tmp.path().join("raw"), tmp.path().join("tc"));
    assert!(eval_loc(&corpus, &raw, &[]).status.success());
    assert!(eval_loc(&corpus, &tc, &["--with-tc"]).status.success());
    let at = |dir: &Path| read_report(dir).alpha(0.5).unwrap().map;
    assert!(at(&tc) >= at(&raw), "with TC {} < without {}", at(&tc), at(&raw));
}

#[test]
fn refine_then_evaluate_matches_direct_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(&tmp.path().join("c"), &["--seed", "5", "--videos", "20", "--contamination", "0.3", "--jitter", "1"]);
    let dets = tmp.path().join("dets.json");
    let o = stepcoin(&["refine", "--proposals", p(&corpus.join("proposals.json")), "--lexicon", p(&corpus.join("lexicon.json")), "--out", p(&dets)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = stepcoin(&["validate", p(&corpus.join("lexicon.json")), "--detections", p(&dets)]);
    assert!(o.status.success(), "{}", stdout(&o));

    let (direct, via) = (tmp.path().join("direct"), tmp.path().join("via"));
    assert!(eval_loc(&corpus, &direct, &["--with-tc"]).status.success());
    let o = stepcoin(&["eval-loc", "--gt", p(&corpus.join("annotations.json")), "--detections", p(&dets), "--lexicon", p(&corpus.join("lexicon.json")), "--out", p(&via)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(direct.join("report.json")).unwrap(), fs::read(via.join("report.json")).unwrap());
}

fn write(path: &Path, text: &str) -> String {
    fs::write(path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn eval_seg_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = write(
        &tmp.path().join("gt.json"),
        r#"{"format":"stepcoin-ann-v1","videos":{"v":{"task_id":0,"duration":10.0,"segments":[{"start":0.0,"end":5.0,"step_id":1}]}}}"#,
    );
    let frames = |labels: &str| format!(r#"{{"format":"stepcoin-frames-v1","fps":10.0,"videos":{{"v":{labels}}}}}"#);
    let exact: Vec<String> = (0..100).map(|i| if i < 50 { "1" } else { "-1" }.to_owned()).collect();
    let same = write(&tmp.path().join("same.json"), &frames(&format!("[{}]", exact.join(","))));
    let background = write(&tmp.path().join("bg.json"), &frames(&format!("[{}]", vec!["-1"; 100].join(","))));
    let short = write(&tmp.path().join("short.json"), &frames("[1,1,1]"));

    let o = stepcoin(&["eval-seg", "--gt", &gt, "--pred", &same]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("frame accuracy: 100.00%"), "{}", stdout(&o));

    let o = stepcoin(&["eval-seg", "--gt", &gt, "--pred", &background]);
    assert!(stdout(&o).starts_with("frame accuracy: 50.00% (100 frames)"), "{}", stdout(&o));
    let o = stepcoin(&["eval-seg", "--gt", &gt, "--pred", &background, "--steps-only"]);
    assert!(stdout(&o).starts_with("frame accuracy: 0.00% (50 frames)"), "{}", stdout(&o));

    let o = stepcoin(&["eval-seg", "--gt", &gt, "--pred", &short]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("length mismatch"));
    let o = stepcoin(&["eval-seg", "--gt", &gt, "--pred", &same, "--fps", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--seed", "42", "--videos", "25", "--contamination", "0.2", "--jitter", "1", "--random-frames"];
    let a = tree(&synth(&tmp.path().join("a"), &args));
    let b = tree(&synth(&tmp.path().join("b"), &args));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["annotations.json", "config.json", "lexicon.json", "proposals.json", "random_frames.json"]);
    assert_eq!(a, b);

    // The written config regenerates the same corpus.
    let cfg = tmp.path().join("a/config.json");
    let c = tree(&synth(&tmp.path().join("c"), &["--config", p(&cfg), "--random-frames"]));
    assert_eq!(a, c);
}

#[test]
fn synth_rejects_infeasible_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        &tmp.path().join("cfg.json"),
        r#"{"mean_video_duration": 20.0, "mean_segments_per_video": 4.0, "mean_segment_duration": 10.0}"#,
    );
    let o = stepcoin(&["synth", "--config", &cfg, "--out", p(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn render_timeline_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let svg = tmp.path().join("t.svg");
    let txt = tmp.path().join("t.txt");
    let o = stepcoin(&[
        "render",
        "--gt", p(&fixture("gt.json")),
        "--detections", p(&fixture("detections.json")),
        "--lexicon", p(&fixture("lexicon.json")),
        "--video", "tire01",
        "--out", p(&svg),
        "--text", p(&txt),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches(r#"class="lane""#).count(), 2);
    assert_eq!(text.matches(r#"class="block""#).count(), 8);
    assert!(text.contains("jack up the car") && text.contains("tighten the screws"));
    assert_eq!(fs::read_to_string(&txt).unwrap(), stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with('|')).count(), 2);

    // Same inputs, same bytes.
    let again = tmp.path().join("again.svg");
    stepcoin(&["render", "--gt", p(&fixture("gt.json")), "--detections", p(&fixture("detections.json")), "--lexicon", p(&fixture("lexicon.json")), "--video", "tire01", "--out", p(&again)]);
    assert_eq!(fs::read(&svg).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn render_empty_run_and_unknown_video() {
    let tmp = tempfile::tempdir().unwrap();
    let svg = tmp.path().join("t.svg");
    let o = stepcoin(&["render", "--gt", p(&fixture("gt.json")), "--detections", p(&fixture("empty_detections.json")), "--video", "tire01", "--out", p(&svg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches(r#"class="lane""#).count(), 1);
    assert_eq!(text.matches(r#"class="block""#).count(), 3);

    let o = stepcoin(&["render", "--gt", p(&fixture("gt.json")), "--video", "nope", "--out", p(&svg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown video"));
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_answers_health_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_stepcoin"))
        .args(["serve", "--data", p(tmp.path()), "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let _server = Server(child);
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}"));

    let mut conn = TcpStream::connect(addr).unwrap();
    write!(conn, "GET /healthz HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    conn.read_to_string(&mut response).unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains(r#"{"status":"ok"}"#), "{response}");
}

#[test]
fn serve_rejects_missing_data_dir() {
    let o = stepcoin(&["serve", "--data", "/nonexistent/data", "--port", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
