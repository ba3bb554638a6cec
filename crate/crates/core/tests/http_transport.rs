mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use align_forge::llm::{ChatRequest, Client, EndpointConfig, HttpBackend, LlmError};
use common::*;

struct Captured {
    path: String,
    headers: Vec<String>,
    body: String,
}

fn read_request(stream: &mut TcpStream) -> Option<Captured> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_owned();
    let mut headers = Vec::new();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end().to_owned();
        if h.is_empty() {
            break;
        }
        if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().ok()?;
        }
        headers.push(h);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Captured {
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

/// Serves `script` responses in order, one per connection, then 500s.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let Some(req) = read_request(&mut stream) else { continue };
            log.lock().unwrap().push(req);
            let (status, body) = script.next().unwrap_or((500, "{}".into()));
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (url, seen)
}

fn chat_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5}
    })
    .to_string()
}

fn endpoint(url: &str, key_env: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: url.into(),
        model_id: "test-model".into(),
        api_key_ref: key_env.into(),
        backoff_base_ms: 1,
        backoff_max_ms: 5,
        ..EndpointConfig::default()
    }
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (url, seen) = serve(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, chat_body("hello")),
    ]);
    let cfg = endpoint(&url, "AF_TEST_KEY_RETRY");
    let backend = HttpBackend::new(&cfg).unwrap();
    let client = Client::new(cfg, Arc::new(backend)).unwrap();
    let resp = client.chat_complete(&ChatRequest::user("hi")).unwrap();
    assert_eq!(resp.text, "hello");
    assert_eq!(resp.retry_count, 2);
    assert_eq!(resp.usage.completion_tokens, 5);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|r| r.path == "/v1/chat/completions"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["content"], "hi");
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, r#"{"error":"bad"}"#.into()), (200, chat_body("late"))]);
    let cfg = endpoint(&url, "AF_TEST_KEY_400");
    let client = Client::new(cfg.clone(), Arc::new(HttpBackend::new(&cfg).unwrap())).unwrap();
    let err = client.chat_complete(&ChatRequest::user("hi")).unwrap_err();
    assert!(matches!(err, LlmError::Request(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn refusal_field_is_reported() {
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": null, "refusal": "cannot help"}, "finish_reason": "stop"}]
    })
    .to_string();
    let (url, _) = serve(vec![(200, body)]);
    let cfg = endpoint(&url, "AF_TEST_KEY_REFUSE");
    let client = Client::new(cfg.clone(), Arc::new(HttpBackend::new(&cfg).unwrap())).unwrap();
    let err = client.chat_complete(&ChatRequest::user("hi")).unwrap_err();
    assert!(matches!(err, LlmError::Refusal(ref r) if r == "cannot help"), "{err:?}");
}

#[test]
fn api_key_is_sent_but_never_written() {
    let secret = "sk-test-7f3a9c1e55d0";
    let (url, seen) = serve(vec![
        (429, "{}".into()),
        (200, chat_body("Question: How many drains are needed?\nAnswer: Three, after scaling up.")),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(&d.join("articles.jsonl"), 1);
    fs::write(
        d.join("run.json"),
        serde_json::json!({
            "endpoint": {"base_url": url, "api_key_ref": "AF_TEST_SECRET", "backoff_base_ms": 1, "backoff_max_ms": 2}
        })
        .to_string(),
    )
    .unwrap();
    assert_ok(&run_cli(d, &["ingest", "--input", "articles.jsonl"]));
    let out = std::process::Command::new(bin())
        .current_dir(d)
        .args(["--config", "run.json", "forge", "sft"])
        .env("AF_TEST_SECRET", secret)
        .env("RUST_LOG", "trace")
        .output()
        .unwrap();
    assert_ok(&out);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[1]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case(&format!("authorization: Bearer {secret}"))));

    assert!(!String::from_utf8_lossy(&out.stdout).contains(secret));
    assert!(!String::from_utf8_lossy(&out.stderr).contains(secret));
    for (name, bytes) in snapshot(d) {
        assert!(
            !String::from_utf8_lossy(&bytes).contains(secret),
            "{name} contains the api key"
        );
    }
    let manifest = fs::read_to_string(d.join("out/manifests/forge-sft.json")).unwrap();
    assert!(manifest.contains("AF_TEST_SECRET"));
}
