#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use tog::config::EndpointConfig;
use tog::{Engine, EngineConfig};

/// Minimal HTTP/1.1 server. `handler` gets each request body and returns
/// (status, response body). Runs until the test process exits.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&str) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let handler = Arc::new(handler);
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let handler = handler.clone();
                let counter = counter.clone();
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0usize;
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
                                len = v.trim().parse().unwrap_or(0);
                            }
                        }
                    }
                    let mut body = vec![0u8; len];
                    reader.read_exact(&mut body).unwrap();
                    counter.fetch_add(1, Ordering::SeqCst);
                    let (status, reply) = handler(&String::from_utf8_lossy(&body));
                    let head = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        reply.len()
                    );
                    let _ = stream.write_all(head.as_bytes());
                    let _ = stream.write_all(reply.as_bytes());
                });
            }
        });
        MockServer { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// A chat-completion response body carrying `content`.
pub fn completion(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] })
        .to_string()
}

/// Mock engine writing into `workspace`, with every local tool taking
/// `latency_ms`.
pub fn engine(workspace: &std::path::Path, latency_ms: u64, parallelism: usize) -> Engine {
    let cfg = EngineConfig {
        workspace: workspace.to_path_buf(),
        parallelism,
        default_endpoint: EndpointConfig::Local { latency_ms, fail: false },
        ..EngineConfig::default()
    };
    Engine::from_config(cfg).unwrap()
}

/// Config with an injected failure on `tool`.
pub fn failing_engine(workspace: &std::path::Path, tool: &str) -> Engine {
    let mut cfg = EngineConfig {
        workspace: workspace.to_path_buf(),
        ..EngineConfig::default()
    };
    cfg.endpoints
        .insert(tool.into(), EndpointConfig::Local { latency_ms: 0, fail: true });
    Engine::from_config(cfg).unwrap()
}
