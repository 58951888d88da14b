use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use lch_core::client::{Backoff, ChatMessage, Endpoint, GenParams, ModelError, OpenAiClient};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves the scripted `(status, body)` responses in order, then stops.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Seen {
                path: request_line.split_whitespace().nth(1).unwrap().to_string(),
                authorization,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen, handle)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "id": "x",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn client(url: &str, retries: u32) -> OpenAiClient {
    let endpoint = Endpoint {
        base_url: url.to_string(),
        model: "test-model".into(),
        timeout_secs: 5.0,
        max_retries: retries,
        ..Endpoint::default()
    };
    OpenAiClient::with_key(endpoint, Some("sk-test".into()))
        .unwrap()
        .with_backoff(Backoff::NONE)
}

fn messages() -> Vec<ChatMessage> {
    vec![ChatMessage::system("be brief"), ChatMessage::user("Where is the bottle?")]
}

#[test]
fn success_returns_content_verbatim() {
    let (url, seen, h) = serve(vec![(200, ok_body("The bottle is in the balcony."))]);
    let out = client(&url, 2).chat(&messages(), GenParams::SHORT_ANSWER).unwrap();
    h.join().unwrap();
    assert_eq!(out, "The bottle is in the balcony.");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sk-test"));
    let body = seen[0].body.as_object().unwrap();
    let mut keys: Vec<&str> = body.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["max_tokens", "messages", "model", "temperature"]);
    assert_eq!(body["max_tokens"], 20);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][1]["content"], "Where is the bottle?");
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen, h) = serve(vec![(401, "{}".into())]);
    let err = client(&url, 3).chat(&messages(), GenParams::SHORT_ANSWER).unwrap_err();
    h.join().unwrap();
    assert_eq!(err, ModelError::AuthFailure { status: 401 });
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn transient_failures_retry_then_succeed() {
    let (url, seen, h) = serve(vec![
        (429, "{}".into()),
        (503, "{}".into()),
        (200, ok_body("kitchen")),
    ]);
    let out = client(&url, 2).chat(&messages(), GenParams::SHORT_ANSWER).unwrap();
    h.join().unwrap();
    assert_eq!(out, "kitchen");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let retries = 2;
    let (url, seen, h) = serve(vec![(500, "{}".into()); 1 + retries as usize]);
    let err = client(&url, retries).chat(&messages(), GenParams::SHORT_ANSWER).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ModelError::Transport { attempts: 3, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn malformed_payload_and_client_errors() {
    let (url, _, h) = serve(vec![(200, "{\"choices\": []}".into()), (400, "bad".into())]);
    let c = client(&url, 0);
    assert!(matches!(
        c.chat(&messages(), GenParams::SHORT_ANSWER),
        Err(ModelError::MalformedResponse(_))
    ));
    assert!(matches!(
        c.chat(&messages(), GenParams::SHORT_ANSWER),
        Err(ModelError::Rejected { status: 400, .. })
    ));
    h.join().unwrap();
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = client(&format!("http://127.0.0.1:{port}"), 1)
        .chat(&messages(), GenParams::SHORT_ANSWER)
        .unwrap_err();
    assert!(matches!(err, ModelError::Transport { attempts: 2, .. }), "{err:?}");
}
