use std::path::PathBuf;

use pivotmatch::gateway::prompts::{
    render_feedback_prompt, render_init_prompt, render_refine_prompt, sample_rows, transcript,
};
use pivotmatch::{load_table, Table};

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn football() -> (Table, Table) {
    let s = load_table(&golden("source.csv"), Some(&golden("source.desc.json")), "source").unwrap();
    let t = load_table(&golden("target.csv"), None, "target").unwrap();
    (s, t)
}

fn assert_same(name: &str, got: &str) {
    let want = golden(name);
    if got != want {
        for (i, (g, w)) in got.lines().zip(want.lines()).enumerate() {
            assert_eq!(g, w, "{name}: first difference at line {}", i + 1);
        }
        assert_eq!(got.len(), want.len(), "{name}: length differs");
    }
}

#[test]
fn init_prompt_matches_golden() {
    let (s, t) = football();
    assert_same("init.txt", &transcript(&render_init_prompt(&s, &t)));
}

#[test]
fn feedback_prompt_matches_golden() {
    let (s, t) = football();
    let set: Vec<String> = ["HS", "AS", "HST", "AST"].map(String::from).to_vec();
    let msgs = render_feedback_prompt(&s, &t, &set, &sample_rows(&s), &sample_rows(&t));
    assert_same("feedback.txt", &transcript(&msgs));
}

#[test]
fn refine_prompt_matches_golden() {
    let (s, t) = football();
    let msgs = render_refine_prompt(
        &render_init_prompt(&s, &t),
        r#"{"unpivot_columns": ["HS", "AS", "HST", "AST"]}"#,
        "HST and AST are shots on target, which the target table does not fold into Metric. Reduce the selection to [HS, AS].",
    );
    assert_same("refine.txt", &transcript(&msgs));
}
