use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sketchmor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchmor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const PIPELINE: &str = r#"{
  "dir": "out",
  "seed": 5,
  "pipeline": [
    {"stage": "generate", "family": "coercive-diffusion", "n": 300, "p": 2, "m_a": 3},
    {"stage": "greedy-rb", "k": 256, "r_max": 6, "train": 60},
    {"stage": "solve", "count": 12, "k_prime": 40},
    {"stage": "certify"},
    {"stage": "qoi", "p": 2},
    {"stage": "report"}
  ]
}"#;

#[test]
fn pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PIPELINE);
    let o = sketchmor(&["--workers", "2", "run", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    for f in ["solutions.json", "certificates.json", "qoi.csv", "report/summary.json", "run.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let first: Vec<String> = ["solutions.json", "certificates.json", "qoi.csv", "report/summary.json"]
        .iter()
        .map(|f| fs::read_to_string(out.join(f)).unwrap())
        .collect();

    let again = tmp.path().join("again");
    let o = sketchmor(&["run", "--config", &cfg, "--dir", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for (i, f) in ["solutions.json", "certificates.json", "qoi.csv", "report/summary.json"].iter().enumerate() {
        assert_eq!(fs::read_to_string(again.join(f)).unwrap(), first[i], "{f} differs");
    }
}

#[test]
fn minimal_config_solves_one_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    assert_eq!(
        code(&sketchmor(&[
            "gen", "--dir", sys.to_str().unwrap(), "--family", "noncoercive-shifted", "--n", "128", "--seed", "2"
        ])),
        0
    );
    let system = sys.join("system");
    fs::write(tmp.path().join("mu.json"), "[[1.0, 0.5]]").unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"dir": "w", "pipeline": [
                {{"stage": "load", "path": "{}"}},
                {{"stage": "greedy-rb", "k": 64, "r_max": 4, "train": 30, "seed": 1}},
                {{"stage": "solve", "params": "mu.json"}}
            ]}}"#,
            system.display()
        ),
    );
    let o = sketchmor(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sols: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("w/solutions.json")).unwrap()).unwrap();
    assert_eq!(sols.as_array().unwrap().len(), 1);
    assert_eq!(sols[0]["mu"], serde_json::json!([1.0, 0.5]));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    assert_eq!(code(&sketchmor(&["solve", "--dir", d])), 2);
    assert_eq!(code(&sketchmor(&["gen", "--dir", d, "--family", "nope", "--n", "10"])), 2);
    let cfg = write_config(tmp.path(), r#"{"dir": "x", "pipeline": [{"stage": "fit"}]}"#);
    assert_eq!(code(&sketchmor(&["run", "--config", &cfg])), 2);
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("x/run.json")).unwrap()).unwrap();
    assert_eq!(run[0]["status"], "failed");
}

#[test]
fn failed_stage_keeps_partial_artifacts_and_skips_the_rest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"dir": "out", "seed": 1, "pipeline": [
            {"stage": "generate", "family": "coercive-diffusion", "n": 200},
            {"stage": "greedy-rb", "k": 64, "r_max": 3, "train": 20},
            {"stage": "solve", "count": 4},
            {"stage": "certify", "max_omega": 1e-9},
            {"stage": "report"}
        ]}"#,
    );
    let o = sketchmor(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 4);
    let out = tmp.path().join("out");
    assert!(out.join("certificates.json").exists());
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run[3]["exit_code"], 4);
    assert_eq!(run[4]["status"], "skipped");
}

#[test]
fn dictionary_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    assert_eq!(
        code(&sketchmor(&["gen", "--dir", d, "--family", "superposition-transport", "--n", "256"])),
        0
    );
    let o = sketchmor(&["greedy-dict", "--dir", d, "--k", "256", "--k-max", "8", "--r", "3", "--train", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&sketchmor(&["solve", "--dir", d, "--count", "6", "--k-prime", "40"])), 0);
    assert_eq!(code(&sketchmor(&["certify", "--dir", d])), 0);
    let sols: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("solutions.json")).unwrap()).unwrap();
    for s in sols.as_array().unwrap() {
        let support = s["support"].as_array().unwrap();
        assert!(!support.is_empty() && support.len() <= 3);
    }
}

#[test]
fn help_lists_every_subcommand() {
    let o = sketchmor(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for c in ["gen", "sketch", "greedy-rb", "greedy-dict", "solve", "certify", "qoi", "report", "run"] {
        assert!(text.contains(c), "{c} missing from help");
    }
}
