mod common;

use std::fs;

use align_forge::distill::{Dataset, PoSample, Sample, SftSample};
use common::*;

#[test]
fn forge_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    forge_pipeline(a.path(), DOCS);
    forge_pipeline(b.path(), DOCS);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(
        sa.iter().map(|f| &f.0).collect::<Vec<_>>(),
        sb.iter().map(|f| &f.0).collect::<Vec<_>>()
    );
    for ((name, x), (_, y)) in sa.iter().zip(&sb) {
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn forged_samples_have_valid_shapes() {
    let dir = tempfile::tempdir().unwrap();
    forge_pipeline(dir.path(), DOCS);
    let sft: Dataset<SftSample> = Dataset::read(&dir.path().join("out/sft.jsonl")).unwrap();
    let po: Dataset<PoSample> = Dataset::read(&dir.path().join("out/po.jsonl")).unwrap();
    assert_eq!(sft.len(), DOCS);
    assert_eq!(po.len(), DOCS);
    for s in &sft.samples {
        s.check_shape().unwrap();
        assert_eq!(s.messages.len(), 2);
    }
    for p in &po.samples {
        p.check_shape().unwrap();
        assert_eq!(p.chosen[0].content, p.rejected[0].content);
        assert_ne!(p.chosen[1].content, p.rejected[1].content);
    }
}

#[test]
fn missing_replies_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(&d.join("articles.jsonl"), DOCS);
    write_fixtures(&d.join("fixtures.jsonl"), DOCS - 1);
    assert_ok(&run_cli(d, &["ingest", "--input", "articles.jsonl"]));
    let out = run_cli(d, &["--mock", "fixtures.jsonl", "forge", "sft"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("produced 24 / requested 25 (skipped 1)"), "{stdout}");
    let sft: Dataset<SftSample> = Dataset::read(&d.join("out/sft.jsonl")).unwrap();
    assert_eq!(sft.manifest.skipped, 1);
    assert_eq!(sft.manifest.skips[0].source_doc_id.as_deref(), Some("a024"));
}

#[test]
fn low_yield_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(&d.join("articles.jsonl"), DOCS);
    write_fixtures(&d.join("fixtures.jsonl"), DOCS - 3);
    assert_ok(&run_cli(d, &["ingest", "--input", "articles.jsonl"]));
    let out = run_cli(d, &["--mock", "fixtures.jsonl", "forge", "sft"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(d.join("out/sft.jsonl").exists());
}

#[test]
fn dry_run_plans_without_calls() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(&d.join("articles.jsonl"), 4);
    fs::write(d.join("empty.jsonl"), "").unwrap();
    assert_ok(&run_cli(d, &["ingest", "--input", "articles.jsonl"]));
    assert_ok(&run_cli(d, &["--mock", "empty.jsonl", "--dry-run", "forge", "sft"]));
    let plan = fs::read_to_string(d.join("out/requests/sft.requests.jsonl")).unwrap();
    assert_eq!(plan.lines().count(), 4);
    assert!(plan.contains("Deduce any reasoning or logical problems from this article:"));
    assert!(!d.join("out/sft.jsonl").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("out/manifests/forge-sft.json")).unwrap()).unwrap();
    assert_eq!(manifest["dry_run"], true);
}

#[test]
fn po_without_sft_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &["--mock", "x.jsonl", "forge", "po"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("forge sft"));
}

#[test]
fn control_subset_and_export_from_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    forge_pipeline(d, DOCS);
    assert_ok(&run_cli(d, &["--seed", "5", "sample-control", "--input", "out/sft.jsonl", "-n", "10"]));
    let ctl: Dataset<SftSample> = Dataset::read(&d.join("out/control.jsonl")).unwrap();
    assert_eq!(ctl.len(), 10);
    assert_eq!(ctl.manifest.subset.as_ref().unwrap().seed, 5);

    assert_ok(&run_cli(d, &["export-train", "orpo", "--input", "out/po.jsonl"]));
    let recipe: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("out/train/orpo.recipe.json")).unwrap()).unwrap();
    assert_eq!(recipe["epochs"], 10);
    let mismatch = run_cli(d, &["export-train", "sft", "--input", "out/po.jsonl"]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn analyze_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    forge_pipeline(d, DOCS);
    let out = run_cli(d, &["analyze", "entropy", "--input", "out/sft.jsonl", "--input", "out/po.jsonl"]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("| Dataset | Avg. Shannon Entropy | Std Dev. |"));
    assert!(d.join("out/metrics/entropy.sft.json").exists());

    assert_ok(&run_cli(d, &["analyze", "mi", "--a", "out/corpus.jsonl", "--b", "out/sft.jsonl"]));
    let mi: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("out/metrics/mi.corpus.sft.json")).unwrap()).unwrap();
    assert_eq!(mi["detail"]["pairing"], "source_doc_id");
    let v = mi["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&v));

    assert_ok(&run_cli(d, &["analyze", "kl", "--p", "out/sft.jsonl", "--q", "out/corpus.jsonl"]));
    let kl: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("out/metrics/kl.sft.corpus.json")).unwrap()).unwrap();
    assert_eq!(kl["params"]["alpha"], 0.5);
    assert!(kl["raw_value"].as_f64().unwrap() > 0.0);
}

#[test]
fn ppl_without_logprobs_is_a_capability_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    forge_pipeline(d, 3);
    fs::write(d.join("table.json"), r#"{"default_logprob": -1.0, "supports_logprobs": false}"#).unwrap();
    let out = run_cli(d, &["--mock-logprobs", "table.json", "analyze", "ppl", "--input", "out/sft.jsonl"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(d.join("table.json"), r#"{"default_logprob": 0.0}"#).unwrap();
    let out = run_cli(d, &["--mock-logprobs", "table.json", "analyze", "ppl", "--input", "out/sft.jsonl"]);
    assert_ok(&out);
    let rep: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("out/metrics/ppl.sft.messages.json")).unwrap()).unwrap();
    assert!((rep["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}
