#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use peritact::protocol::ServerMessage;
use peritact::server::{bind, serve_tcp, serve_ws};
use peritact::{Connection, ServerContext};
use peritact_core::{CalibrationData, PlanePoint, RunConfig};

pub fn context(log_dir: Option<PathBuf>) -> Arc<ServerContext> {
    Arc::new(ServerContext::new(CalibrationData::identity(PlanePoint::ORIGIN, 35.0), RunConfig::default(), log_dir))
}

/// Starts TCP and WebSocket listeners on ephemeral ports in a background runtime.
pub fn spawn_server(ctx: Arc<ServerContext>) -> (SocketAddr, SocketAddr) {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let tcp = bind("127.0.0.1:0").await.unwrap();
            let ws = bind("127.0.0.1:0").await.unwrap();
            tx.send((tcp.local_addr().unwrap(), ws.local_addr().unwrap())).unwrap();
            tokio::spawn(serve_ws(ws, Arc::clone(&ctx)));
            serve_tcp(tcp, ctx).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

/// Blocking line client.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_nodelay(true).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        Self { reader: BufReader::new(stream.try_clone().unwrap()), writer: stream }
    }

    pub fn send(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    pub fn send_raw(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.writer.write_all(bytes)
    }

    /// Next message, or `None` once the server has closed the stream.
    pub fn recv(&mut self) -> Option<ServerMessage> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(ServerMessage::decode(line.trim_end()).expect("server sent a valid line")),
        }
    }

    pub fn hello(&mut self) {
        self.send(HELLO);
        assert!(matches!(self.recv(), Some(ServerMessage::Hello(_))));
    }
}

pub const HELLO: &str = r#"{"type":"hello","version":1}"#;

pub fn configure(layout: &str, approach: &str, metaphor: &str, intensity: &str, angle: f64) -> String {
    format!(
        r#"{{"type":"configure","version":1,"condition":{{"layout":"{layout}","approach":"{approach}","metaphor":"{metaphor}","intensity_mode":"{intensity}"}},"target_angle_deg":{angle}}}"#
    )
}

pub fn pose(t: f64, hand: (f64, f64)) -> String {
    format!(
        r#"{{"type":"pose","version":1,"t":{t},"hand":[{},{}],"wrist":[{},{}]}}"#,
        hand.0,
        hand.1,
        hand.0,
        hand.1 - 10.0
    )
}

/// Valid lines of every kind, used as mutation seeds.
pub fn seed_lines() -> Vec<String> {
    vec![
        HELLO.to_string(),
        r#"{"type":"hello","version":1,"client":"fuzz"}"#.to_string(),
        configure("horizontal", "worst_axis", "pull", "linear", 75.0),
        configure("vertical", "two_tactor", "push", "zone", 0.0),
        r#"{"type":"configure","version":1,"mode":"simulated","seed":3,"condition":{"layout":"vertical","approach":"two_tactor","metaphor":"push","intensity_mode":"zone"}}"#.to_string(),
        pose(0.0, (0.0, 0.0)),
        pose(1.5, (12.25, -3.0)),
        r#"{"type":"pose","version":1,"t":2.0,"hand":[0,0],"wrist":[0,0],"valid":false}"#.to_string(),
    ]
}

fn random_value<R: Rng>(rng: &mut R, depth: u32) -> serde_json::Value {
    use serde_json::Value;
    match rng.random_range(0..if depth > 2 { 5 } else { 7 }) {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => serde_json::json!(rng.random_range(-1e6..1e6)),
        3 => serde_json::json!(rng.random::<i64>()),
        4 => Value::String(["hello", "pose", "configure", "", "frame", "1"][rng.random_range(0..6)].to_string()),
        5 => Value::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth + 1)).collect()),
        _ => {
            let keys = ["type", "version", "t", "hand", "wrist", "valid", "condition", "mode", "seed", "x"];
            let mut map = serde_json::Map::new();
            for _ in 0..rng.random_range(0..5) {
                map.insert(keys[rng.random_range(0..keys.len())].to_string(), random_value(rng, depth + 1));
            }
            Value::Object(map)
        }
    }
}

/// One fuzz line: a valid message, a mutated one, random JSON, or random bytes.
pub fn fuzz_line<R: Rng>(rng: &mut R, seeds: &[String]) -> Vec<u8> {
    let base = seeds[rng.random_range(0..seeds.len())].as_bytes().to_vec();
    let mut line = match rng.random_range(0..10) {
        0..=2 => base,
        3..=5 => {
            let mut b = base;
            for _ in 0..rng.random_range(1..4) {
                if b.is_empty() {
                    break;
                }
                let i = rng.random_range(0..b.len());
                match rng.random_range(0..3) {
                    0 => b[i] = rng.random(),
                    1 => {
                        b.remove(i);
                    }
                    _ => b.truncate(i.max(1)),
                }
            }
            b
        }
        6..=7 => random_value(rng, 0).to_string().into_bytes(),
        _ => (0..rng.random_range(0..80)).map(|_| rng.random()).collect(),
    };
    line.retain(|&b| b != b'\n');
    line
}

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub lines: usize,
    pub replies: usize,
    pub errors: usize,
    pub restarts: usize,
    pub failures: Vec<String>,
}

/// Pushes `n` fuzz lines through in-process connections. Every reply must
/// survive an encode/decode round trip and carry the protocol version.
pub fn fuzz_connections(n: usize, seed: u64) -> FuzzStats {
    let ctx = context(None);
    let seeds = seed_lines();
    let mut rng = peritact_core::stream_rng(seed, 0xF022);
    let mut stats = FuzzStats::default();
    let mut conn = Connection::new(Arc::clone(&ctx));
    for _ in 0..n {
        if conn.is_closed() {
            conn = Connection::new(Arc::clone(&ctx));
            stats.restarts += 1;
            if rng.random_bool(0.9) {
                conn.handle_line(HELLO);
            }
        }
        let line = fuzz_line(&mut rng, &seeds);
        stats.lines += 1;
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| conn.handle_bytes(&line)));
        let reply = match outcome {
            Ok(r) => r,
            Err(_) => {
                stats.failures.push(format!("panic on {:?}", String::from_utf8_lossy(&line)));
                conn = Connection::new(Arc::clone(&ctx));
                continue;
            }
        };
        for msg in &reply.messages {
            stats.replies += 1;
            let text = msg.encode();
            if !text.contains(r#""version":1"#) || ServerMessage::decode(&text).as_ref() != Ok(msg) {
                stats.failures.push(format!("bad reply {text}"));
            }
            if matches!(msg, ServerMessage::Error(_)) {
                stats.errors += 1;
            }
        }
        if reply.close != conn.is_closed() {
            stats.failures.push("close flag disagrees with connection state".into());
        }
    }
    conn.disconnect();
    stats
}

/// Sends fuzz lines over TCP on fresh connections, then checks that a new
/// client still gets a hello ack.
pub fn fuzz_tcp(addr: SocketAddr, n: usize, seed: u64) -> bool {
    let seeds = seed_lines();
    let mut rng = peritact_core::stream_rng(seed, 0x7C9);
    let mut sent = 0;
    while sent < n {
        let mut client = Client::connect(addr);
        client.hello();
        for _ in 0..50.min(n - sent) {
            let mut line = fuzz_line(&mut rng, &seeds);
            line.push(b'\n');
            sent += 1;
            if client.send_raw(&line).is_err() {
                break;
            }
        }
        drop(client);
    }
    let mut probe = Client::connect(addr);
    probe.send(HELLO);
    matches!(probe.recv(), Some(ServerMessage::Hello(_)))
}

/// Round-trip times of `n` poses sent at `hz` over TCP during an active trial.
pub fn pose_latencies(addr: SocketAddr, n: usize, hz: f64) -> Vec<Duration> {
    let mut client = Client::connect(addr);
    client.hello();
    client.send(&configure("horizontal", "two_tactor", "pull", "linear", 120.0));
    assert!(matches!(client.recv(), Some(ServerMessage::TrialState(_))));
    let period = Duration::from_secs_f64(1.0 / hz);
    let mut rtts = Vec::with_capacity(n);
    let start = Instant::now();
    for i in 0..n {
        let due = start + period * i as u32;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        let t = i as f64 / hz;
        // Drift slowly from the center without reaching the target.
        let sent = Instant::now();
        client.send(&pose(t, (0.02 * i as f64, 0.01 * i as f64)));
        loop {
            match client.recv() {
                Some(ServerMessage::Frame(_)) => break,
                Some(_) => continue,
                None => panic!("server closed during latency run"),
            }
        }
        rtts.push(sent.elapsed());
        // Drain the events and state change that follow the arming frame.
        if i == 0 {
            assert!(matches!(client.recv(), Some(ServerMessage::Event(_))));
            assert!(matches!(client.recv(), Some(ServerMessage::TrialState(_))));
        }
    }
    rtts
}

pub fn percentile(samples: &[Duration], p: f64) -> Duration {
    let mut sorted = samples.to_vec();
    sorted.sort();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
