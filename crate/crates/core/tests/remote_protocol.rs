//! Client side of the scoring wire protocol against an in-process mock server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Method, Response, Server};

use cleanscore_core::config::PipelineConfig;
use cleanscore_core::dataset::Demonstration;
use cleanscore_core::pipeline::score_corpus;
use cleanscore_core::scorer::{
    CachedScorer, Generator, RemoteScorer, RetryPolicy, ScoreRequest, Scorer, ScorerError,
};

struct Mock {
    server: Arc<Server>,
    url: String,
    log: Arc<Mutex<Vec<(String, Value)>>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Drop for Mock {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Mock {
    fn calls(&self, path: &str) -> Vec<Value> {
        self.log.lock().unwrap().iter().filter(|(p, _)| p == path).map(|(_, v)| v.clone()).collect()
    }
}

/// Whitespace tokens; every token scores `-0.1 · (word length)` when
/// conditioned, `-0.2 · (word length)` unconditionally. The first
/// `unavailable` requests get 503.
fn mock(unavailable: usize) -> Mock {
    let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let remaining = Arc::new(AtomicUsize::new(unavailable));
    let (srv, lg) = (server.clone(), log.clone());
    let handle = thread::spawn(move || {
        for mut req in srv.incoming_requests() {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let path = req.url().to_string();
            let parsed: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
            lg.lock().unwrap().push((path.clone(), parsed.clone()));

            if remaining.load(Ordering::SeqCst) > 0 {
                remaining.fetch_sub(1, Ordering::SeqCst);
                let _ = req.respond(Response::from_string("loading").with_status_code(503));
                continue;
            }
            let (code, reply) = match (req.method(), path.as_str()) {
                (Method::Get, "/v1/info") => (200, json!({"model_id": "mock-lm", "tokenizer_id": "ws"})),
                (Method::Post, "/v1/tokenize") => match parsed["text"].as_str() {
                    Some(t) => (200, json!({"tokens": t.split_whitespace().map(|w| w.len()).collect::<Vec<_>>()})),
                    None => (400, json!({"error": "malformed"})),
                },
                (Method::Post, "/v1/score") => {
                    let (Some(prefix), Some(cont)) = (parsed["prefix"].as_str(), parsed["continuation"].as_str()) else {
                        let _ = req.respond(Response::from_string("{}").with_status_code(400));
                        continue;
                    };
                    let words: Vec<&str> = cont.split_whitespace().collect();
                    let scale = if prefix.is_empty() { 0.2 } else { 0.1 };
                    let mut lps: Vec<f64> = words.iter().map(|w| -scale * w.len() as f64).collect();
                    match cont {
                        "mismatch" => lps.push(-1.0),
                        "positive" => lps[0] = 0.5,
                        _ => {}
                    }
                    if words.is_empty() {
                        (422, json!({"error": "empty continuation"}))
                    } else {
                        (200, json!({"tokens": words.iter().map(|w| w.len()).collect::<Vec<_>>(), "token_logprobs": lps}))
                    }
                }
                (Method::Post, "/v1/generate") => (200, json!({"text": format!("echo {}", parsed["max_new_tokens"])})),
                _ => (404, json!({})),
            };
            let _ = req.respond(Response::from_string(reply.to_string()).with_status_code(code));
        }
    });
    Mock { server, url, log, handle: Some(handle) }
}

fn fast() -> RetryPolicy {
    RetryPolicy { retries: 3, base_delay: Duration::from_millis(1) }
}

fn connect(m: &Mock) -> RemoteScorer {
    RemoteScorer::connect_with(&m.url, fast(), Duration::from_secs(5)).unwrap()
}

#[test]
fn info_defines_backend_identity() {
    let m = mock(0);
    let c = connect(&m);
    assert_eq!(c.backend_id(), "remote:mock-lm:ws");
    assert_eq!(c.info().model_id, "mock-lm");
}

#[test]
fn request_bodies_follow_the_protocol() {
    let m = mock(0);
    let c = connect(&m);
    assert_eq!(c.tokenize("ab cde").unwrap(), vec![2, 3]);
    let r = c.score(&ScoreRequest::new("why?", "ab cde").unwrap()).unwrap();
    assert_eq!(r.tokens, vec![2, 3]);
    assert_eq!(r.scores.logprobs(), &[-0.2, -0.30000000000000004]);
    assert_eq!(c.generate("p", 7).unwrap(), "echo 7");

    assert_eq!(m.calls("/v1/tokenize"), vec![json!({"text": "ab cde"})]);
    assert_eq!(m.calls("/v1/score"), vec![json!({"prefix": "why?", "continuation": "ab cde"})]);
    assert_eq!(m.calls("/v1/generate"), vec![json!({"prompt": "p", "max_new_tokens": 7})]);
}

#[test]
fn unconditional_uses_empty_prefix() {
    let m = mock(0);
    let c = connect(&m);
    let r = c.score(&ScoreRequest::unconditional("abcd").unwrap()).unwrap();
    assert_eq!(r.scores.logprobs(), &[-0.8]);
    assert_eq!(m.calls("/v1/score")[0]["prefix"], "");
}

#[test]
fn retries_through_503() {
    let m = mock(2);
    let c = connect(&m);
    assert_eq!(c.backend_id(), "remote:mock-lm:ws");
    assert_eq!(m.calls("/v1/info").len(), 3);
}

#[test]
fn gives_up_after_retry_budget() {
    let m = mock(10);
    match RemoteScorer::connect_with(&m.url, fast(), Duration::from_secs(5)) {
        Err(ScorerError::BackendUnavailable(msg)) => assert!(msg.contains("503"), "{msg}"),
        Err(other) => panic!("{other:?}"),
        Ok(_) => panic!("connected"),
    }
    assert_eq!(m.calls("/v1/info").len(), 4);
}

#[test]
fn unreachable_server_is_unavailable() {
    let url = {
        let s = Server::http("127.0.0.1:0").unwrap();
        format!("http://{}", s.server_addr().to_ip().unwrap())
    };
    let err = RemoteScorer::connect_with(&url, fast(), Duration::from_secs(2)).err().unwrap();
    assert!(matches!(err, ScorerError::BackendUnavailable(_)), "{err:?}");
}

#[test]
fn malformed_replies_are_rejected() {
    let m = mock(0);
    let c = connect(&m);
    let score = |cont: &str| c.score(&ScoreRequest::new("q", cont).unwrap());
    assert!(matches!(score("mismatch"), Err(ScorerError::ProtocolViolation(_))));
    assert!(matches!(score("positive"), Err(ScorerError::NonFiniteScore(_))));
    assert!(matches!(score("   "), Err(ScorerError::EmptyContinuation)));
}

#[test]
fn cached_pipeline_skips_the_network_on_rerun() {
    let m = mock(0);
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<Demonstration> = (0..6)
        .map(|i| Demonstration::new(format!("s{i}"), format!("question {i}"), "x".repeat(i + 1)))
        .collect();
    let config = PipelineConfig { n_neighbor: 3, parallelism: 3, ..Default::default() };

    let first = {
        let c = CachedScorer::new(connect(&m), dir.path()).unwrap();
        score_corpus(&data, &config, &c, None).unwrap()
    };
    let before = m.calls("/v1/score").len();
    assert!(before > 0);

    let c = CachedScorer::new(connect(&m), dir.path()).unwrap();
    let second = score_corpus(&data, &config, &c, None).unwrap();
    assert_eq!(first, second);
    assert_eq!(m.calls("/v1/score").len(), before);
    assert_eq!(c.stats().misses, 0);
    assert!(first.iter().all(|s| s.cleanliness.is_finite()));
}
