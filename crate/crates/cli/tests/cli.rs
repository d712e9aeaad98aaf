use std::path::Path;
use std::process::Command;

fn survsl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_survsl")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CONFIG: &str = r#"
method = "statelearner"
horizon = 8.0
seed = 3

[continuous]
grid_points = 30

[[event_learners]]
label = "km"
family = "kaplan-meier"

[[event_learners]]
label = "cox"
family = "cox"

[[censoring_learners]]
label = "km"
family = "kaplan-meier"
"#;

#[test]
fn simulate_fit_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (sub, seed) in [("train", "1"), ("test", "2")] {
        let out = survsl(&["simulate", "--n", "150", "--seed", seed, "--out", p(&d.join(sub))]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let train = d.join("train/data.csv");
    let test = d.join("test/data.csv");

    let out = survsl(&["fit", "--config", p(&d.join("run.toml")), "--data", p(&train), "--test", p(&test), "--out", p(&d.join("fit"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("fit/report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["method"], "statelearner");
    assert!(report["metrics"]["brier"].is_number());

    let out = survsl(&[
        "predict", "--bundle", p(&d.join("fit/model.bundle")), "--covariates", p(&test),
        "--times", "1,4,8", "--id-column", "id", "--out", p(&d.join("pred.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().count(), 1 + 150 * 3);

    let out = survsl(&["evaluate", "--bundle", p(&d.join("fit/model.bundle")), "--test", p(&test)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics, report["metrics"]);
}

#[test]
fn exit_codes_follow_the_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "method = \"statelearner\"\nhorizon = -2.0\nevent_learners = []\n").unwrap();
    let out = survsl(&["fit", "--config", p(&d.join("bad.toml")), "--out", p(d)]);
    assert_eq!(out.status.code(), Some(2));

    let out = survsl(&["fit", "--config", p(&d.join("missing.toml")), "--out", p(d)]);
    assert_eq!(out.status.code(), Some(4));

    let out = survsl(&["simulate", "--n", "0", "--out", p(&d.join("sim"))]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(d.join("junk.bundle"), "not a bundle").unwrap();
    let out = survsl(&["evaluate", "--bundle", p(&d.join("junk.bundle")), "--test", p(&d.join("bad.toml")), "--horizon", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
