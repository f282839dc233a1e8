//! Scripted HTTP server for tests.
//!
//! Binds a real TCP listener on a loopback port and answers requests from a
//! fixed script, one action per incoming request. Tests use it to exercise
//! retry, backoff, rate-limit, and timeout handling against a live socket
//! without leaving the machine.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

/// What the server does with one incoming request.
#[derive(Debug, Clone)]
pub enum Action {
    /// Respond immediately with this HTTP status and body.
    Respond { status: u16, body: String },
    /// Hold the connection open for the given duration, then respond.
    /// Used to trip client-side timeouts.
    Stall {
        hold: Duration,
        status: u16,
        body: String,
    },
    /// Close the connection without writing anything.
    Hangup,
}

impl Action {
    /// 200 response carrying a chat-completion body whose message content is `text`.
    pub fn ok_completion(text: &str) -> Action {
        Action::Respond {
            status: 200,
            body: completion_body(text),
        }
    }

    pub fn status(status: u16) -> Action {
        Action::Respond {
            status,
            body: format!("{{\"error\":\"scripted {status}\"}}"),
        }
    }
}

/// Build a minimal chat-completion response body with the given content.
pub fn completion_body(text: &str) -> String {
    serde_json::to_string(&serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}]
    }))
    .expect("static body")
}

/// One observed request: arrival time plus the raw head and body.
#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub at: Instant,
    pub head: String,
    pub body: String,
}

/// A scripted server running on a background thread.
///
/// The script is consumed one action per request; requests beyond the end of
/// the script get a 200 completion with empty content so stragglers do not
/// wedge the client.
pub struct ScriptedServer {
    addr: String,
    seen: Arc<Mutex<Vec<SeenRequest>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ScriptedServer {
    pub fn start(script: Vec<Action>) -> ScriptedServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = format!("http://{}", listener.local_addr().expect("local addr"));
        let seen: Arc<Mutex<Vec<SeenRequest>>> = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));

        let seen2 = Arc::clone(&seen);
        let stop2 = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let mut script = script.into_iter();
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let action = script.next().unwrap_or(Action::Respond {
                    status: 200,
                    body: completion_body(""),
                });
                handle_conn(stream, action, &seen2);
            }
        });

        ScriptedServer {
            addr,
            seen,
            stop,
            handle: Some(handle),
        }
    }

    /// Base URL of the server, e.g. `http://127.0.0.1:49152`.
    pub fn base_url(&self) -> &str {
        &self.addr
    }

    /// Requests observed so far, in arrival order.
    pub fn requests(&self) -> Vec<SeenRequest> {
        self.seen.lock().expect("seen lock").clone()
    }

    pub fn request_count(&self) -> usize {
        self.seen.lock().expect("seen lock").len()
    }
}

impl Drop for ScriptedServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let plain = self.addr.trim_start_matches("http://");
        let _ = TcpStream::connect(plain);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_conn(mut stream: TcpStream, action: Action, seen: &Arc<Mutex<Vec<SeenRequest>>>) {
    let at = Instant::now();
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    let (head, body) = match read_request(&mut stream) {
        Some(parts) => parts,
        None => return,
    };
    seen.lock()
        .expect("seen lock")
        .push(SeenRequest { at, head, body });

    match action {
        Action::Respond { status, body } => write_response(&mut stream, status, &body),
        Action::Stall { hold, status, body } => {
            std::thread::sleep(hold);
            write_response(&mut stream, status, &body);
        }
        Action::Hangup => {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
    }
}

/// Read one HTTP/1.1 request: header block plus a Content-Length body.
fn read_request(stream: &mut TcpStream) -> Option<(String, String)> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        match stream.read(&mut chunk) {
            Ok(0) => return None,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_header_end(&buf) {
                    break pos;
                }
                if buf.len() > 1 << 20 {
                    return None;
                }
            }
            Err(_) => return None,
        }
    };

    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = head
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);

    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => body.extend_from_slice(&chunk[..n]),
            Err(_) => break,
        }
    }
    body.truncate(content_length);
    Some((head, String::from_utf8_lossy(&body).to_string()))
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Scripted",
    };
    let msg = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(msg.as_bytes());
    let _ = stream.flush();
}
