use std::fs;
use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_smooth-learn"))
        .args(args)
        .output()
        .expect("binary runs");
    let text =
        String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const LININT_GREEDY: &str = r#"{"p": 2, "q": 2, "rounds": 500,
  "learner": {"kind": "linint"},
  "adversary": {"kind": "greedy", "query_policy": {"kind": "widest-gap-midpoint"}, "budget": 1.0},
  "seed": 3}"#;

#[test]
fn simulate_writes_transcript_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", LININT_GREEDY);
    let out = dir.path().join("out");
    let (code, _) = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["counted_total"].as_f64().unwrap() <= 1.0 + 1e-9);
    assert!(summary["tool_version"].is_string());
    assert_eq!(summary["config"]["rounds"], 500);
    let csv = fs::read_to_string(out.join("transcript.csv")).unwrap();
    assert!(csv.starts_with("t,x,prediction,revealed,true_value,lie,raw_error,p_power,counted"));
    assert_eq!(csv.lines().count(), 501);
}

#[test]
fn staged_vs_noisy_lb_forces_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "n.json",
        r#"{"p": 2, "q": 2, "eta": 2, "rounds": 100,
            "learner": {"kind": "staged"}, "adversary": {"kind": "noisy-lb"}}"#,
    );
    let out = dir.path().join("out");
    let (code, _) = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["counted_total"].as_f64().unwrap() >= 5.0 - 1e-9);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"p\": 2,");
    assert_eq!(run(&["simulate", "--config", &bad, "--out", out]).0, 1);
    let unknown = write(
        dir.path(),
        "u.json",
        &LININT_GREEDY.replace("\"seed\"", "\"colour\": 1, \"seed\""),
    );
    assert_eq!(run(&["simulate", "--config", &unknown, "--out", out]).0, 1);
    assert_eq!(run(&["simulate", "--out", out]).0, 1);
    let grid = write(dir.path(), "e.json", r#"{"eps": [1.5]}"#);
    assert_eq!(
        run(&["sweep-epsilon", "--config", &grid, "--out", out]).0,
        1
    );
}

#[test]
fn illegal_adversary_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"p": 2, "q": 2, "rounds": 2, "learner": {"kind": "linint"},
            "adversary": {"kind": "script", "steps": [[0.0, 0.0], [0.1, 5.0]]}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).0,
        2
    );
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.json",
        r#"{"eps": [0.5], "rounds": 200, "seeds": 2}"#,
    );
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let (code, _) = run(&[
            "sweep-epsilon",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        assert_eq!(code, 0);
        outputs.push(fs::read(out.join("sweep-epsilon.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(String::from_utf8_lossy(&outputs[0]).starts_with('#'));
}

#[test]
fn poly_build_emits_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"points": [[0, 0], [0.5, 0.2], [1, 0]], "q": 2}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "poly-build",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap()
        ])
        .0,
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("poly.json")).unwrap()).unwrap();
    assert_eq!(v["holds"], true);
    assert!(v["certificate"]["bernstein"].is_array());
    assert!(v["certificate"]["q_action"].as_f64().unwrap() < 1.0);
    let steep = write(
        dir.path(),
        "s.json",
        r#"{"points": [[0, 0], [0.5, 2]], "q": 2}"#,
    );
    assert_eq!(
        run(&[
            "poly-build",
            "--config",
            &steep,
            "--out",
            out.to_str().unwrap()
        ])
        .0,
        1
    );
}

#[test]
fn report_aggregates_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    fs::create_dir_all(&out).unwrap();
    assert_eq!(run(&["report", "--out", out_s]).0, 1);
    assert_eq!(
        run(&[
            "report",
            "--out",
            dir.path().join("missing").to_str().unwrap()
        ])
        .0,
        1
    );

    let cfg = write(dir.path(), "g.json", LININT_GREEDY);
    assert_eq!(run(&["simulate", "--config", &cfg, "--out", out_s]).0, 0);
    let (code, text) = run(&["report", "--out", out_s]);
    assert_eq!(code, 0);
    assert!(text.contains("violations: 0"));

    fs::write(
        out.join("sweep-eta.csv"),
        "# header\neta,lb_linint,lb_staged,lb_bound,ub_observed,ub_bound,max_resets,games,holds\n1,3,3,3,19,18,0,1,false\n",
    )
    .unwrap();
    let (code, text) = run(&["report", "--out", out_s]);
    assert_eq!(code, 3);
    assert!(text.contains("violations: 1"));
}
