use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivotmatch"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, f: &str) -> String {
    dir.join(f).to_string_lossy().into_owned()
}

fn gen(dir: &Path, seed: &str) {
    ok(&["gen", "--out", &p(dir, ""), "--seed", seed, "--mock-out", &p(dir, "mock.json")]);
}

fn tables(dir: &Path) -> Vec<String> {
    [
        ("--source", "source.csv"),
        ("--target", "target.csv"),
        ("--source-desc", "source.desc.json"),
        ("--target-desc", "target.desc.json"),
    ]
    .iter()
    .flat_map(|(flag, f)| [flag.to_string(), p(dir, f)])
    .collect()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

#[test]
fn gen_is_seeded() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen(a.path(), "3");
    gen(b.path(), "3");
    gen(c.path(), "4");
    let read = |d: &Path| std::fs::read(d.join("source.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
    let gt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(gt["unpivot_set"].as_array().unwrap().len(), 4);
}

#[test]
fn match_then_eval_is_perfect_with_truthful_mock() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "1");
    let t = tables(d.path());
    let mock = p(d.path(), "mock.json");
    let result = p(d.path(), "result.json");
    ok(&with(&["match", "--mock", &mock, "--workers", "2", "--iterations", "1", "--out", &result], &t));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(doc["reward"], 1.0);
    assert_eq!(doc["unpivot"]["var_name"], "Indicator");

    let gt = p(d.path(), "ground_truth.json");
    let metrics = ok(&with(&["eval", "--ground-truth", &gt, "--result", &result], &t));
    assert!(metrics.contains("\"acc_e2e\": 100.00,"), "{metrics}");
    assert!(metrics.contains("\"acc_per_attr\": 100.00,"), "{metrics}");
}

#[test]
fn zero_iterations_makes_fewer_calls() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "2");
    let t = tables(d.path());
    let mock = p(d.path(), "mock.json");
    let calls = |iterations: &str| -> u64 {
        let out = ok(&with(&["match", "--mock", &mock, "--iterations", iterations, "--epsilon", "0"], &t));
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        v["stats"]["llm_calls"].as_u64().unwrap()
    };
    // init + naming only
    assert_eq!(calls("0"), 2);
    assert!(calls("1") > 2);
}

#[test]
fn sim_diagonal_is_one_for_identical_tables() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "5");
    let target = p(d.path(), "target.csv");
    let desc = p(d.path(), "target.desc.json");
    let csv = ok(&[
        "sim", "--source", &target, "--target", &target, "--source-desc", &desc, "--target-desc", &desc,
    ]);
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    for (i, row) in rows.iter().enumerate() {
        let v: f64 = row[i + 1].parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "row {i}: {v}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "6");
    let cfg = d.path().join("pivotmatch.toml");
    std::fs::write(
        &cfg,
        format!(
            "[search]\niterations = 0\n[gateway]\nmock = {:?}\n[paths]\nsource = {:?}\ntarget = {:?}\n",
            p(d.path(), "mock.json"),
            p(d.path(), "source.csv"),
            p(d.path(), "target.csv"),
        ),
    )
    .unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let calls = |extra: &[&str]| -> u64 {
        let mut args = vec!["--config", &cfg, "match", "--epsilon", "0"];
        args.extend_from_slice(extra);
        let v: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
        v["stats"]["llm_calls"].as_u64().unwrap()
    };
    assert_eq!(calls(&[]), 2);
    assert!(calls(&["--iterations", "1"]) > 2);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "7");
    let code = |args: &[&str]| run(args).status.code().unwrap();

    // missing required path
    assert_eq!(code(&["match", "--target", &p(d.path(), "target.csv")]), 2);
    // unreadable input
    assert_eq!(
        code(&["match", "--source", &p(d.path(), "nope.csv"), "--target", &p(d.path(), "target.csv")]),
        3
    );
    // invalid search parameter
    let t = tables(d.path());
    assert_eq!(code(&with(&["match", "--mock", &p(d.path(), "mock.json"), "--epsilon", "2"], &t)), 2);
    // unknown config keys
    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, "[search]\niteratons = 1\n").unwrap();
    assert_eq!(code(&["--config", &bad.to_string_lossy(), "gen", "--out", &p(d.path(), "x")]), 2);
    // every model call fails
    let failing = d.path().join("fail.json");
    std::fs::write(&failing, r#"{"rules": {}, "init": [{"error": "down"}]}"#).unwrap();
    assert_eq!(code(&with(&["match", "--mock", &failing.to_string_lossy()], &t)), 4);
}
