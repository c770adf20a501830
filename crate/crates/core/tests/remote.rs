//! Remote generator against a scripted loopback HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use ctrlsynth_core::environments::EnvId;
use ctrlsynth_core::generation::{
    build_prompt, Backoff, GenerationError, GenerationRequest, Generator, GeneratorParams, RemoteGenerator,
};
use ctrlsynth_core::spec_input::TaskSpec;

const FIXTURE: &str = include_str!("fixtures/completion_reply.json");
const EXPECTED: &str = include_str!("fixtures/expected_sources.txt");

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<String>,
    body: serde_json::Value,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            handle(stream, status, &body, &log);
        }
    });
    (url, seen)
}

fn handle(stream: TcpStream, status: u16, body: &str, log: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
            break;
        }
        let line = line.trim_end().to_string();
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
        headers.push(line);
    }
    let mut buf = vec![0u8; length];
    reader.read_exact(&mut buf).unwrap();
    log.lock().unwrap().push(Seen {
        headers,
        body: serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null),
    });
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

fn generator(url: &str) -> RemoteGenerator {
    let params = GeneratorParams {
        endpoint: Some(url.to_string()),
        api_key: Some("test-key".into()),
        model_id: "fixture-model".into(),
        ..GeneratorParams::default()
    };
    let backoff = Backoff {
        initial: Duration::from_millis(5),
        factor: 2.0,
        max_retries: 3,
    };
    RemoteGenerator::new(params, backoff, 2).unwrap()
}

fn generate(url: &str, n: usize) -> Result<ctrlsynth_core::generation::CandidateBatch, GenerationError> {
    let spec = TaskSpec::new(EnvId::PendulumSwingup, 1000);
    let starter = spec.starter().unwrap();
    let prompt = build_prompt(&starter, &starter, &spec, (None, None));
    let req = GenerationRequest {
        prompt: &prompt,
        low: &starter,
        high: &starter,
        n,
        batch_index: 0,
    };
    generator(url).generate(&req)
}

#[test]
fn fixture_reply_is_extracted_exactly() {
    let (url, seen) = serve(vec![(200, FIXTURE.to_string())]);
    let batch = generate(&url, 4).unwrap();
    let expected: Vec<String> = EXPECTED.split("---\n").map(str::to_string).collect();
    assert_eq!(batch.sources, expected);
    assert_eq!(batch.failures, 1);
    assert_eq!(batch.generator_id, "remote");
    for src in &batch.sources {
        ctrlsynth_core::policy_lang::parse(src, 3, 1).unwrap();
    }

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let body = &seen[0].body;
    assert_eq!(body["model"], "fixture-model");
    assert_eq!(body["n"], 4);
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["top_p"], 0.95);
    assert_eq!(body["repeat_penalty_window"], 15);
    assert_eq!(body["max_tokens"], 512);
    assert!(body["prompt"].as_str().unwrap().contains("def policy_v1("));
    assert!(seen[0].headers.iter().any(|h| h == "authorization: Bearer test-key"
        || h == "Authorization: Bearer test-key"));
}

#[test]
fn short_reply_counts_missing_choices_as_failures() {
    let (url, _) = serve(vec![(200, r#"{"choices":[{"text":"def policy_v2(obs): return 0.0"}]}"#.into())]);
    let batch = generate(&url, 3).unwrap();
    assert_eq!(batch.sources.len(), 1);
    assert_eq!(batch.failures, 2);
}

#[test]
fn server_errors_are_retried_then_surfaced() {
    let script = vec![(503, "{}".to_string()); 4];
    let (url, seen) = serve(script);
    match generate(&url, 2).unwrap_err() {
        GenerationError::Transport {
            attempts, last_status, ..
        } => {
            assert_eq!(attempts, 4);
            assert_eq!(last_status, Some(503));
        }
        other => panic!("unexpected {other}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn transient_error_recovers() {
    let (url, seen) = serve(vec![(502, "{}".into()), (200, FIXTURE.to_string())]);
    let batch = generate(&url, 4).unwrap();
    assert_eq!(batch.sources.len(), 3);
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = serve(vec![(401, "{}".into()), (200, FIXTURE.to_string())]);
    assert!(matches!(generate(&url, 1).unwrap_err(), GenerationError::Auth { status: 401 }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_not_retried() {
    let (url, seen) = serve(vec![(200, "<html>oops</html>".into()), (200, FIXTURE.to_string())]);
    assert!(matches!(generate(&url, 1).unwrap_err(), GenerationError::Malformed(_)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_has_no_status() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    match generate(&format!("http://127.0.0.1:{port}/v1/completions"), 1).unwrap_err() {
        GenerationError::Transport {
            attempts, last_status, ..
        } => {
            assert_eq!(attempts, 4);
            assert_eq!(last_status, None);
        }
        other => panic!("unexpected {other}"),
    }
}
