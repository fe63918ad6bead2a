//! A canned chat-completions server on a local port.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

/// One request as the server saw it.
#[derive(Debug, Clone)]
pub struct Seen {
    pub head: String,
    pub body: Value,
}

/// Decides the reply to the `n`th request (0-based): status and body text.
pub type Plan = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

pub struct Stub {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
}

impl Stub {
    pub fn spawn(plan: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let plan: Arc<Plan> = Arc::new(plan);
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(conn) = conn else { continue };
                let (log, plan) = (log.clone(), plan.clone());
                std::thread::spawn(move || serve(conn, &log, &*plan));
            }
        });
        Stub { url, seen }
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.seen.lock().unwrap().iter().map(|s| s.body.clone()).collect()
    }

    pub fn count(&self) -> usize {
        self.seen.lock().unwrap().len()
    }
}

fn serve(conn: TcpStream, log: &Mutex<Vec<Seen>>, plan: &Plan) {
    let mut reader = BufReader::new(conn.try_clone().expect("clone"));
    let mut head = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        if line == "\r\n" {
            break;
        }
        head.push_str(&line);
    }
    let len = head
        .lines()
        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
        .unwrap_or(0);
    let mut buf = vec![0; len];
    reader.read_exact(&mut buf).expect("body");
    let body: Value = serde_json::from_slice(&buf).unwrap_or(Value::Null);
    let n = {
        let mut log = log.lock().unwrap();
        log.push(Seen { head, body: body.clone() });
        log.len() - 1
    };
    let (status, text) = plan(n, &body);
    let mut out = conn;
    let _ = write!(
        out,
        "HTTP/1.1 {status} Canned\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
}

/// Chat-completion body carrying `text`.
pub fn reply(text: &str) -> String {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
}

/// The prompt of a request body.
pub fn prompt_of(body: &Value) -> String {
    body["messages"][0]["content"].as_str().unwrap_or_default().to_string()
}
