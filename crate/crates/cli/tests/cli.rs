use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use refloc::eval::{match_reflections, EvalReport};
use refloc::pipeline::Estimator;
use refloc::room_sim::{ArrayRecording, ReflectionList};
use refloc::scene::shipped_scenario;
use tempfile::TempDir;

fn refloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refloc")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    refloc(args).status.code().unwrap()
}

fn ok(args: &[&str]) {
    let out = refloc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_params(dir: &Path, volume: f64) -> std::path::PathBuf {
    let p = dir.join("params.json");
    let json = format!(r#"{{"volume": {volume}, "t60": 0.424, "drr_db": -11.5, "direct_doa_deg": [90.0, -42.2]}}"#);
    fs::write(&p, json).unwrap();
    p
}

#[test]
fn simulation_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--room", "4", "--seed", "3", "--out", s(&a)]);
    ok(&["simulate", "--room", "4", "--seed", "3", "--out", s(&b)]);
    for f in ["recording.wav", "truth.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("manifest.json").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    // usage errors
    assert_eq!(code(&["simulate", "--out", s(&out)]), 2);
    assert_eq!(code(&["reproduce", "--table", "3", "--out", s(&out)]), 2);
    assert_eq!(code(&["reproduce", "--table", "1", "--room", "9", "--out", s(&out)]), 2);
    let bad = write_params(dir.path(), -5.0);
    assert_eq!(code(&["synth", "--params", s(&bad), "--out", s(&out)]), 2);
    // I/O failure
    let missing = dir.path().join("missing.wav");
    assert_eq!(code(&["estimate", "--input", s(&missing), "--out", s(&out)]), 1);
    assert_eq!(code(&["reproduce", "--table", "1", "--room", "2", "--out", s(&out)]), 0);
    assert!(out.join("table1.csv").exists());
}

#[test]
fn pipeline_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let (sim, est, ev) = (dir.path().join("sim"), dir.path().join("est"), dir.path().join("eval"));
    ok(&["simulate", "--room", "3", "--out", s(&sim)]);
    ok(&["estimate", "--input", s(&sim.join("recording.wav")), "--room", "3", "--out", s(&est)]);
    ok(&[
        "eval",
        "--estimates",
        s(&est.join("estimates.csv")),
        "--truth",
        s(&sim.join("truth.csv")),
        "--out",
        s(&ev),
    ]);

    let (sc, cfg) = shipped_scenario(3).unwrap();
    let recording = ArrayRecording::read_wav(sim.join("recording.wav")).unwrap();
    let e = Estimator::new(&sc.array, &cfg, sc.fs).unwrap().estimate(&recording).unwrap();
    let lib_csv = dir.path().join("lib.csv");
    e.reflections.write_csv(&lib_csv).unwrap();
    assert_eq!(fs::read(&lib_csv).unwrap(), fs::read(est.join("estimates.csv")).unwrap());

    let truth = ReflectionList::read_csv(sim.join("truth.csv")).unwrap();
    let want = match_reflections(&e.reflections, &truth, 5e-4, 15f64.to_radians()).unwrap();
    let got = EvalReport::read_json(ev.join("report.json")).unwrap();
    assert_eq!(got.counts, want.counts);
    assert_eq!((got.pd, got.pfa), (want.pd, want.pfa));
}

#[test]
fn synth_without_estimates_writes_only_the_anchor() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let params = write_params(dir.path(), 192.0);
    ok(&["synth", "--params", s(&params), "--seed", "2", "--out", s(&out)]);
    assert!(out.join("anchor.wav").exists());
    assert!(out.join("anchor_reflections.csv").exists());
    assert!(!out.join("hybrid.wav").exists());
    assert!(!out.join("hybrid_reflections.csv").exists());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.get("hybrid_energy").is_none());
    assert!((summary["t60_schroeder"].as_f64().unwrap() - 0.424).abs() <= 0.05 * 0.424);
}

#[test]
fn synth_with_its_own_early_part_keeps_the_energy() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let params = write_params(dir.path(), 192.0);
    ok(&["synth", "--params", s(&params), "--out", s(&a)]);
    ok(&[
        "synth",
        "--params",
        s(&params),
        "--estimates",
        s(&a.join("anchor_reflections.csv")),
        "--out",
        s(&b),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("summary.json")).unwrap()).unwrap();
    let (e, h) = (summary["energy"].as_f64().unwrap(), summary["hybrid_energy"].as_f64().unwrap());
    assert!((e - h).abs() <= 1e-6 * e, "{e} vs {h}");
}
