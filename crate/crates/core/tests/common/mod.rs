#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use semrec::service::{EndpointConfig, RetryPolicy};

pub type Handler = dyn Fn(usize, &serde_json::Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 JSON server on localhost; one request per connection.
pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<(Option<String>, serde_json::Value)>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &serde_json::Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handler: Arc<Handler> = Arc::new(handler);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = None;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        match k.to_ascii_lowercase().as_str() {
                            "content-length" => len = v.trim().parse().unwrap_or(0),
                            "authorization" => auth = Some(v.trim().to_string()),
                            _ => {}
                        }
                    }
                }
                let mut body = vec![0; len];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                let n = {
                    let mut g = log.lock().unwrap();
                    g.push((auth, json.clone()));
                    g.len() - 1
                };
                let (status, out) = handler(n, &json);
                let resp = format!(
                    "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                    out.len()
                );
                let _ = stream.write_all(resp.as_bytes());
                let _ = stream.flush();
            }
        });
        Self { url, requests }
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn request(&self, n: usize) -> serde_json::Value {
        self.requests.lock().unwrap()[n].1.clone()
    }

    pub fn auth(&self, n: usize) -> Option<String> {
        self.requests.lock().unwrap()[n].0.clone()
    }

    /// Endpoint with millisecond backoff so retry tests stay fast.
    pub fn endpoint(&self) -> EndpointConfig {
        let mut e = EndpointConfig::new(self.url.clone());
        e.timeout = Duration::from_secs(10);
        e.retry = RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(5),
            factor: 2.0,
        };
        e
    }
}

/// Absolute path of the bundled tiny dataset.
pub fn tiny_fixture() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny")
}
