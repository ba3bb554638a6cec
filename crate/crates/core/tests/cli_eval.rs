mod common;

use std::fs;
use std::path::Path;

use align_forge::evalkit::{choice_letter, mc_context, mc_continuation, EvalReport};
use align_forge::llm::{FixtureLine, MockMatch, MockReply, TokenTable};
use common::*;

/// Ten two-choice items; the mock favours gold on the first `correct`.
fn write_task(d: &Path, correct: usize) {
    let mut data = String::new();
    let mut table = TokenTable::constant(-2.0);
    let mut fixtures = String::new();
    for i in 0..10 {
        let q = format!("Question {i}: is ice colder than steam?");
        let choices = ["yes", "no"];
        let rec = serde_json::json!({
            "id": format!("q{i}"),
            "question": q,
            "choices": {"text": choices, "label": ["A", "B"]},
            "answerKey": "A",
        });
        data.push_str(&rec.to_string());
        data.push('\n');
        let pick = if i < correct { 0 } else { 1 };
        table = table.with_override(Some(&mc_context(&q)), &mc_continuation(choices[pick]), -0.1);
        let line = FixtureLine {
            matcher: MockMatch {
                digest: None,
                contains: Some(format!("Question: {q}\n")),
            },
            response: MockReply::text(format!("{}. {}", choice_letter(pick), choices[pick])),
        };
        fixtures.push_str(&serde_json::to_string(&line).unwrap());
        fixtures.push('\n');
    }
    fs::write(d.join("arc.jsonl"), data).unwrap();
    fs::write(d.join("table.json"), serde_json::to_string(&table).unwrap()).unwrap();
    fs::write(d.join("fixtures.jsonl"), fixtures).unwrap();
}

fn read_report(path: &Path) -> EvalReport {
    EvalReport::from_json(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn eval_modes_and_baseline_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_task(d, 6);
    let mock = ["--mock", "fixtures.jsonl", "--mock-logprobs", "table.json"];

    let mut args = mock.to_vec();
    args.extend(["eval", "--task", "arc-challenge", "--data", "arc.jsonl"]);
    assert_ok(&run_cli(d, &args));
    let ll = read_report(&d.join("out/eval/arc_challenge.loglikelihood_mc.baseline.json"));
    assert_eq!(ll.aggregates.accuracy, Some(0.6));
    let csv = fs::read_to_string(d.join("out/eval/arc_challenge.loglikelihood_mc.baseline.csv")).unwrap();
    assert!(csv.starts_with("task,mode,system_prompt,model,metric,value\n"));

    let base = "out/eval/arc_challenge.generate_until.baseline.json";
    let mut args = mock.to_vec();
    args.extend(["eval", "--task", "arc-challenge", "--data", "arc.jsonl", "--mode", "generate-until"]);
    assert_ok(&run_cli(d, &args));
    assert_eq!(read_report(&d.join(base)).aggregates.accuracy, Some(0.6));

    write_task(d, 9);
    let mut args = mock.to_vec();
    args.extend([
        "eval", "--task", "arc-challenge", "--data", "arc.jsonl", "--mode", "generate-until",
        "--system-prompt", "ai_principles_v1", "--baseline-report", base,
    ]);
    let out = run_cli(d, &args);
    assert_ok(&out);
    let v1 = read_report(&d.join("out/eval/arc_challenge.generate_until.ai_principles_v1.json"));
    assert_eq!(v1.aggregates.accuracy, Some(0.9));
    assert!(v1.system_prompt.as_deref().unwrap().starts_with("You are a helpful assistant working for ABC Australia"));
    let delta = v1.baseline_deltas.iter().find(|b| b.metric == "accuracy").unwrap();
    assert_eq!(delta.relative_improvement_pct, 50.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("50.00%"));

    let out = run_cli(
        d,
        &[
            "report",
            "--input", "out/eval/arc_challenge.loglikelihood_mc.baseline.json",
            "--input", "out/eval/arc_challenge.generate_until.ai_principles_v1.json",
            "--baseline", base,
        ],
    );
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("multiple choice (loglikelihood)"));
    assert!(stdout.contains("in-context alignment (generate_until)"));
    assert!(d.join("out/report.csv").exists());
}

#[test]
fn mixing_report_families_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_task(d, 5);
    assert_ok(&run_cli(
        d,
        &["--mock-logprobs", "table.json", "eval", "--task", "arc-challenge", "--data", "arc.jsonl"],
    ));
    let out = run_cli(
        d,
        &[
            "--mock", "fixtures.jsonl", "eval", "--task", "arc-challenge", "--data", "arc.jsonl",
            "--mode", "generate-until", "--baseline-report",
            "out/eval/arc_challenge.loglikelihood_mc.baseline.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_dry_run_writes_requests_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_task(d, 5);
    assert_ok(&run_cli(
        d,
        &["--dry-run", "eval", "--task", "arc-challenge", "--data", "arc.jsonl", "--mode", "generate-until", "--limit", "3"],
    ));
    let reqs = fs::read_to_string(d.join("out/requests/eval.arc_challenge.generate_until.baseline.requests.jsonl")).unwrap();
    assert_eq!(reqs.lines().count(), 3);
    assert!(reqs.contains("You are a helpful AI Assistant"));
    assert!(!d.join("out/eval").exists());
}

#[test]
fn missing_data_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run_cli(d, &["eval", "--task", "arc-challenge", "--data", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_cli(d, &["eval", "--task", "not-a-task", "--data", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_cli(d, &["--version"]);
    assert_eq!(out.status.code(), Some(0));
}
