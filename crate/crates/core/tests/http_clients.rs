//! HTTP backend tests against a minimal in-process server on localhost.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::JoinHandle;
use std::time::Duration;

use revrank_core::clients::{
    EmbeddingClient, EmbeddingRequest, HttpConfig, HttpEmbeddingClient, HttpKeywordClient,
    KeywordClient, KeywordRequest, render_keyword_prompt,
};
use revrank_core::error::Error;

/// Read one HTTP request (head + content-length body) off the stream.
fn read_request(stream: &mut TcpStream) -> (String, Vec<u8>) {
    let mut buf = Vec::new();
    let mut byte = [0u8; 1];
    while !buf.ends_with(b"\r\n\r\n") {
        if stream.read(&mut byte).unwrap_or(0) == 0 {
            break;
        }
        buf.push(byte[0]);
    }
    let head = String::from_utf8_lossy(&buf).to_string();
    let content_length = head
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        stream.read_exact(&mut body).unwrap();
    }
    (head, body)
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let reply = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(reply.as_bytes()).unwrap();
}

/// Serve `responses` one connection at a time; each entry is
/// (status, body or None to slam the connection shut). Returns the
/// endpoint URL, the join handle, and a receiver of request bodies.
fn spawn_server(
    responses: Vec<Option<(&'static str, String)>>,
) -> (String, JoinHandle<Vec<Vec<u8>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for response in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let (_, body) = read_request(&mut stream);
            bodies.push(body);
            match response {
                Some((status, reply)) => respond(&mut stream, status, &reply),
                None => drop(stream),
            }
        }
        bodies
    });
    (endpoint, handle)
}

fn fast_config(endpoint: &str, retries: u32) -> HttpConfig {
    let mut config = HttpConfig::new(endpoint);
    config.retries = retries;
    config.timeout = Duration::from_secs(5);
    config.retry_backoff = Duration::from_millis(1);
    config
}

#[test]
fn embedding_round_trip_and_auth_header() {
    let reply = r#"{"vectors":[[1.0,0.0],[0.0,1.0]],"dim":2}"#;
    let (endpoint, server) = spawn_server(vec![Some(("200 OK", reply.to_string()))]);
    let mut config = fast_config(&endpoint, 0);
    config.auth_token = Some("sekrit".to_string());
    let client = HttpEmbeddingClient::new(config, 2);
    let resp = client
        .embed(&EmbeddingRequest {
            texts: vec!["alpha".to_string(), "beta".to_string()],
            task_instruction: "embed".to_string(),
        })
        .unwrap();
    assert_eq!(resp.dim, 2);
    assert_eq!(resp.vectors.len(), 2);
    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_slice(&bodies[0]).unwrap();
    assert_eq!(sent["texts"][1], "beta");
    assert_eq!(sent["task_instruction"], "embed");
}

#[test]
fn embedding_count_mismatch_is_contract_error() {
    // Well-formed JSON whose invariants are wrong must not be retried.
    let reply = r#"{"vectors":[[1.0,0.0]],"dim":2}"#;
    let (endpoint, server) = spawn_server(vec![Some(("200 OK", reply.to_string()))]);
    let client = HttpEmbeddingClient::new(fast_config(&endpoint, 3), 2);
    let err = client
        .embed(&EmbeddingRequest {
            texts: vec!["a".to_string(), "b".to_string()],
            task_instruction: String::new(),
        })
        .unwrap_err();
    assert!(matches!(err, Error::Contract { .. }), "{err}");
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn transport_failure_reports_attempt_count() {
    // Bind then drop: nobody listens, every attempt fails.
    let endpoint = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}/", listener.local_addr().unwrap())
    };
    let client = HttpEmbeddingClient::new(fast_config(&endpoint, 2), 2);
    let err = client
        .embed(&EmbeddingRequest {
            texts: vec!["a".to_string()],
            task_instruction: String::new(),
        })
        .unwrap_err();
    match err {
        Error::Transport { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("expected Transport, got {other}"),
    }
}

#[test]
fn malformed_reply_is_retried_then_succeeds() {
    let good = r#"{"vectors":[[0.6,0.8]],"dim":2}"#;
    let (endpoint, server) = spawn_server(vec![
        Some(("200 OK", "this is not json".to_string())),
        Some(("200 OK", good.to_string())),
    ]);
    let client = HttpEmbeddingClient::new(fast_config(&endpoint, 2), 2);
    let resp = client
        .embed(&EmbeddingRequest {
            texts: vec!["a".to_string()],
            task_instruction: String::new(),
        })
        .unwrap();
    assert_eq!(resp.vectors[0], vec![0.6, 0.8]);
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn keyword_prompt_is_rendered_and_reply_parsed() {
    let template = "Extract {N} keywords.\nTitle: {title}\nAbstract: {abstract}";
    let reply = r#"{"reply":"graph learning, retrieval, ranking"}"#;
    let (endpoint, server) = spawn_server(vec![Some(("200 OK", reply.to_string()))]);
    let client = HttpKeywordClient::new(fast_config(&endpoint, 0), template);
    let req = KeywordRequest {
        title: "A Study".to_string(),
        abstract_text: "We study things.".to_string(),
        n_keywords: 3,
    };
    let resp = client.extract_keywords(&req).unwrap();
    assert_eq!(resp.keywords, vec!["graph learning", "retrieval", "ranking"]);
    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_slice(&bodies[0]).unwrap();
    let prompt = sent["prompt"].as_str().unwrap();
    assert_eq!(prompt, render_keyword_prompt(template, &req));
    assert!(prompt.contains("Extract 3 keywords."));
    assert!(prompt.contains("Title: A Study"));
}

#[test]
fn unparseable_keyword_reply_is_contract_error_with_raw_reply() {
    let reply = r#"{"reply":" , ,"}"#;
    let (endpoint, _server) = spawn_server(vec![Some(("200 OK", reply.to_string()))]);
    let client = HttpKeywordClient::new(fast_config(&endpoint, 0), "{title} {abstract} {N}");
    let err = client
        .extract_keywords(&KeywordRequest {
            title: "t".to_string(),
            abstract_text: "a".to_string(),
            n_keywords: 2,
        })
        .unwrap_err();
    match err {
        Error::Contract { detail } => assert!(detail.contains(" , ,"), "{detail}"),
        other => panic!("expected Contract, got {other}"),
    }
}

#[test]
fn server_error_status_is_retried() {
    let good = r#"{"vectors":[[1.0,0.0]],"dim":2}"#;
    let (endpoint, server) = spawn_server(vec![
        Some(("500 Internal Server Error", "{}".to_string())),
        Some(("200 OK", good.to_string())),
    ]);
    let client = HttpEmbeddingClient::new(fast_config(&endpoint, 1), 2);
    let resp = client
        .embed(&EmbeddingRequest {
            texts: vec!["a".to_string()],
            task_instruction: String::new(),
        })
        .unwrap();
    assert_eq!(resp.dim, 2);
    assert_eq!(server.join().unwrap().len(), 2);
}
