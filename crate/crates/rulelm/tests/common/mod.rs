#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rulelm::config::PipelineConfig;

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

/// The toy config with outputs redirected to `out`.
pub fn toy_config(out: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::load(&toy_dir().join("toy.toml")).unwrap();
    config.paths.out_dir = Some(out.to_path_buf());
    config.jobs = Some(2);
    config
}

/// Minimal HTTP/1.1 server: one request per connection, answered by `handler`
/// with `(status, body)`.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start<H>(handler: H) -> Self
    where
        H: Fn(usize, &str) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&requests);
        let handler = Arc::new(handler);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                let counter = Arc::clone(&counter);
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut length = 0usize;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        let line = line.trim_end();
                        if line.is_empty() {
                            break;
                        }
                        if let Some((k, v)) = line.split_once(':') {
                            if k.eq_ignore_ascii_case("content-length") {
                                length = v.trim().parse().unwrap();
                            }
                        }
                    }
                    let mut body = vec![0; length];
                    reader.read_exact(&mut body).unwrap();
                    let n = counter.fetch_add(1, Ordering::SeqCst);
                    let (status, reply) = handler(n, std::str::from_utf8(&body).unwrap());
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                        reply.len()
                    );
                });
            }
        });
        Self { url, requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

/// Answers like a scorer whose candidate list for every prompt is `tokens`.
pub fn answer_with(tokens: &[&str], body: &str) -> String {
    let request: serde_json::Value = serde_json::from_str(body).unwrap();
    let top_n = request["top_n"].as_u64().unwrap() as usize;
    let results: Vec<serde_json::Value> = request["queries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| {
            let top: Vec<&str> = tokens.iter().copied().take(top_n).collect();
            let target = q["target_label"].as_str().unwrap().to_lowercase();
            let rank = top.iter().position(|t| t.to_lowercase() == target).map(|i| i + 1);
            serde_json::json!({"id": q["id"], "rank": rank, "top_tokens": top})
        })
        .collect();
    serde_json::json!({ "results": results }).to_string()
}
