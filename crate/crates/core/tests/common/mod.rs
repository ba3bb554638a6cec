#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use align_forge::llm::{FixtureLine, MockMatch, MockReply};

pub const DOCS: usize = 25;

pub fn doc_tag(i: usize) -> String {
    format!("[doc-{i:02}]")
}

/// A JSONL corpus of `n` distinct articles.
pub fn write_corpus(path: &Path, n: usize) {
    let mut out = String::new();
    for i in 0..n {
        let body = format!(
            "{} The river town of Site {i} recorded {} millimetres of rain in March.\n\nCouncil crews cleared {} drains before the second storm arrived.",
            doc_tag(i),
            40 + i * 3,
            i + 2
        );
        let rec = serde_json::json!({
            "id": format!("a{i:03}"),
            "title": format!("Storm report {i}"),
            "body": body,
            "source_uri": format!("fixture://{i}"),
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

/// Chat fixtures answering every SFT prompt of `write_corpus` and both
/// polarities of the follow-up rewrite prompts.
pub fn write_fixtures(path: &Path, n: usize) {
    let mut lines = Vec::new();
    for i in 0..n {
        lines.push(FixtureLine {
            matcher: MockMatch {
                digest: None,
                contains: Some(doc_tag(i)),
            },
            response: MockReply::text(format!(
                "Question: If rain at site {i} rose by a third, how many drains would crews need?\nAnswer: Start from the {} drains cleared, scale by four thirds, and round up.",
                i + 2
            )),
        });
    }
    lines.push(FixtureLine {
        matcher: MockMatch {
            digest: None,
            contains: Some("to better align with these principles".into()),
        },
        response: MockReply::text("Scale the cleared drains by four thirds and round up, noting the estimate's limits."),
    });
    lines.push(FixtureLine {
        matcher: MockMatch {
            digest: None,
            contains: Some("to be unaligned with these principles".into()),
        },
        response: MockReply::text("Just guess a big number, nobody checks."),
    });
    let body: String = lines
        .iter()
        .map(|l| serde_json::to_string(l).unwrap() + "\n")
        .collect();
    fs::write(path, body).unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_align-forge"))
}

pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Ingest, forge sft and forge po in `dir` against the mock fixtures.
pub fn forge_pipeline(dir: &Path, n: usize) {
    write_corpus(&dir.join("articles.jsonl"), n);
    write_fixtures(&dir.join("fixtures.jsonl"), n);
    assert_ok(&run_cli(dir, &["ingest", "--input", "articles.jsonl"]));
    assert_ok(&run_cli(dir, &["--mock", "fixtures.jsonl", "--seed", "11", "forge", "sft"]));
    assert_ok(&run_cli(dir, &["--mock", "fixtures.jsonl", "--seed", "11", "forge", "po"]));
}

/// Every file under `dir`, as (relative path, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(d: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, base, out);
            } else {
                out.push((p.strip_prefix(base).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
