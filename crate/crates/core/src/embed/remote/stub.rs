//! Minimal in-process HTTP server speaking the embedding protocol, for tests
//! and offline runs of the remote provider.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::json;

use crate::embed::hash_bow_embed;
use crate::textprep::TokenSequence;

/// A decoded request as seen by the handler.
#[derive(Debug, Clone, PartialEq)]
pub struct StubRequest {
    /// Zero-based index of this request since the server started.
    pub sequence: usize,
    pub path: String,
    pub provider_id: String,
    pub texts: Vec<String>,
    pub authorization: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubResponse {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl StubResponse {
    pub fn ok(dimension: usize, embeddings: &[Vec<f64>]) -> Self {
        Self::json(200, json!({ "dimension": dimension, "embeddings": embeddings }).to_string())
    }

    pub fn json(status: u16, body: String) -> Self {
        Self { status, body, delay: Duration::ZERO }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

type Handler = dyn Fn(&StubRequest) -> StubResponse + Send + Sync;

pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&StubRequest) -> StubResponse + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let sequence = requests.fetch_add(1, Ordering::SeqCst);
                    let handler = Arc::clone(&handler);
                    std::thread::spawn(move || {
                        let _ = serve(stream, sequence, handler.as_ref());
                    });
                }
            })
        };
        Ok(Self { addr, requests, stop, thread: Some(thread) })
    }

    /// Answers every request with deterministic hash-bag-of-words vectors of
    /// the whitespace tokens of each text.
    pub fn deterministic(dimension: usize, seed: u64) -> std::io::Result<Self> {
        Self::start(move |req| {
            let rows: Vec<Vec<f64>> = req
                .texts
                .iter()
                .map(|t| {
                    let tokens = TokenSequence::new("", t.split_whitespace().map(String::from).collect());
                    hash_bow_embed(&tokens, dimension, seed)
                })
                .collect();
            StubResponse::ok(dimension, &rows)
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, sequence: usize, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value.to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let parsed: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let request = StubRequest {
        sequence,
        path,
        provider_id: parsed["provider_id"].as_str().unwrap_or_default().to_string(),
        texts: parsed["texts"]
            .as_array()
            .map(|a| a.iter().filter_map(|t| t.as_str().map(String::from)).collect())
            .unwrap_or_default(),
        authorization,
    };
    let response = if request.path == "/embed" {
        handler(&request)
    } else {
        StubResponse::json(404, "{\"error\":\"not found\"}".into())
    };
    if !response.delay.is_zero() {
        std::thread::sleep(response.delay);
    }
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        response.body.len(),
        response.body
    )?;
    stream.flush()
}
