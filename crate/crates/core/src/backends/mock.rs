//! A minimal in-process HTTP server speaking the chat-completion wire shape,
//! used to exercise the remote backend offline.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

/// What the server does with one request.
#[derive(Debug, Clone)]
pub enum MockAction {
    /// Reply 200 with this text as the assistant message content.
    Content(String),
    /// Close the connection without answering.
    Drop,
    /// Reply with a bare status code.
    Status(u16),
    /// Wait, then answer with the content.
    Delay(Duration, String),
}

impl MockAction {
    /// A well-formed reply object.
    pub fn reply(risk: f64, uncertainty: f64, depth: u32) -> Self {
        MockAction::Content(
            json!({"risk": risk, "uncertainty": uncertainty, "reasoning_depth": depth}).to_string(),
        )
    }
}

/// A request as seen by the server.
#[derive(Debug, Clone)]
pub struct MockRequest {
    /// Zero-based arrival index across the server's lifetime.
    pub index: usize,
    pub body: Value,
    pub authorization: Option<String>,
}

impl MockRequest {
    /// Text of the last user message.
    pub fn last_user_message(&self) -> &str {
        self.body["messages"]
            .as_array()
            .and_then(|m| m.iter().rev().find(|x| x["role"] == "user"))
            .and_then(|x| x["content"].as_str())
            .unwrap_or("")
    }

    /// Descriptor id quoted in the prompt (`id: N` line).
    pub fn instance_id(&self) -> Option<u64> {
        self.body["messages"].as_array()?.iter().find_map(|m| {
            m["content"]
                .as_str()?
                .lines()
                .find_map(|l| l.strip_prefix("id: ")?.trim().parse().ok())
        })
    }
}

type Handler = dyn Fn(&MockRequest) -> MockAction + Send + Sync;

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&MockRequest) -> MockAction + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let stop = stop.clone();
            let hits = hits.clone();
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let handler = handler.clone();
                    let index = hits.fetch_add(1, Ordering::SeqCst);
                    thread::spawn(move || {
                        let _ = serve(conn, index, &*handler);
                    });
                }
            })
        };
        Ok(MockServer {
            addr,
            stop,
            hits,
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(conn: TcpStream, index: usize, handler: &Handler) -> std::io::Result<()> {
    conn.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;
    let req = MockRequest {
        index,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
        authorization,
    };
    let mut conn = conn;
    match handler(&req) {
        MockAction::Drop => Ok(()),
        MockAction::Status(code) => write_response(&mut conn, code, ""),
        MockAction::Content(text) => write_response(&mut conn, 200, &completion_body(&text)),
        MockAction::Delay(d, text) => {
            thread::sleep(d);
            write_response(&mut conn, 200, &completion_body(&text))
        }
    }
}

fn completion_body(content: &str) -> String {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

fn write_response(conn: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let head = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    conn.write_all(head.as_bytes())?;
    conn.write_all(body.as_bytes())?;
    conn.flush()
}
