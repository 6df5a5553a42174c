use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use pbtgen_core::llm::{BackendError, ChatBackend, ChatRequest, HttpBackend, HttpConfig, Message, Role};

/// Serves the canned `(status, extra headers, body)` replies in order, one
/// per connection, and records each request body.
fn stub_server(replies: Vec<(u16, &'static str, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, headers, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{headers}\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 7}
    })
    .to_string()
}

fn backend(url: String) -> HttpBackend {
    HttpBackend::with_key(
        HttpConfig {
            base_url: url,
            model: "stub-model".into(),
            max_retries: 2,
            backoff_base_ms: 10,
            timeout_ms: 5000,
            ..HttpConfig::default()
        },
        Some("secret".into()),
    )
}

fn request() -> ChatRequest {
    ChatRequest::new(vec![Message::new(Role::User, "hi")], 0.5, 32, "initial_code", "p").unwrap()
}

#[test]
fn rate_limit_is_retried_after_the_advertised_delay() {
    let (url, seen) = stub_server(vec![
        (429, "Retry-After: 0\r\n", "{}".into()),
        (200, "", ok_body("hello")),
    ]);
    let b = backend(url);
    let resp = b.complete(&request()).unwrap();
    assert_eq!(resp.content, "hello");
    assert_eq!((resp.token_usage.prompt, resp.token_usage.completion), (11, 7));
    assert_eq!(resp.backend_id, "http:stub-model");
    assert_eq!(b.retry_count(), 1);
    let bodies = seen.lock().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(sent["model"], "stub-model");
    assert_eq!(sent["max_tokens"], 32);
    assert_eq!(sent["messages"][0]["role"], "user");
}

#[test]
fn persistent_rate_limit_gives_up_after_the_retry_budget() {
    let (url, _) = stub_server(vec![
        (429, "", "{}".into()),
        (429, "", "{}".into()),
        (429, "Retry-After: 0\r\n", "{}".into()),
    ]);
    let b = backend(url);
    assert!(matches!(b.complete(&request()), Err(BackendError::RateLimited { .. })));
    assert_eq!(b.retry_count(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _) = stub_server(vec![(400, "", "{\"error\": \"bad\"}".into())]);
    let b = backend(url);
    assert!(matches!(b.complete(&request()), Err(BackendError::Protocol(_))));
    assert_eq!(b.retry_count(), 0);
}

#[test]
fn unreachable_server_is_reported() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = backend(format!("http://127.0.0.1:{port}/v1"));
    assert!(matches!(b.complete(&request()), Err(BackendError::Unreachable(_))));
}
