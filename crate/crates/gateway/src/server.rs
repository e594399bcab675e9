//! Async listeners. Each accepted stream gets its own [`Connection`]; lines
//! are processed strictly in order and replies written before the next read.

use std::io;
use std::sync::Arc;

use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio_tungstenite::tungstenite::protocol::WebSocketConfig;
use tokio_tungstenite::tungstenite::Message;

use crate::connection::{Connection, Reply, ServerContext};
use crate::protocol::MAX_LINE_BYTES;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("accept failed: {0}")]
    Accept(io::Error),
}

pub async fn bind<A: ToSocketAddrs + std::fmt::Display>(addr: A) -> Result<TcpListener, ServeError> {
    let label = addr.to_string();
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr: label, source })
}

fn encode_reply(reply: &Reply) -> Vec<u8> {
    let mut out = Vec::with_capacity(reply.messages.len() * 96);
    for msg in &reply.messages {
        out.extend_from_slice(msg.encode().as_bytes());
        out.push(b'\n');
    }
    out
}

/// Accepts newline-delimited connections forever.
pub async fn serve_tcp(listener: TcpListener, ctx: Arc<ServerContext>) -> Result<(), ServeError> {
    loop {
        let (stream, _) = listener.accept().await.map_err(ServeError::Accept)?;
        let ctx = Arc::clone(&ctx);
        tokio::spawn(async move {
            match handle_tcp(stream, ctx).await {
                Err(e) if !peer_went_away(&e) => eprintln!("connection error: {e}"),
                _ => {}
            }
        });
    }
}

fn peer_went_away(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionAborted)
}

pub async fn handle_tcp(stream: TcpStream, ctx: Arc<ServerContext>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (rd, mut wr) = stream.into_split();
    let mut reader = BufReader::new(rd);
    let mut conn = Connection::new(ctx);
    let mut buf = Vec::new();
    let result = loop {
        buf.clear();
        let n = match (&mut reader).take(MAX_LINE_BYTES as u64 + 1).read_until(b'\n', &mut buf).await {
            Ok(n) => n,
            Err(e) => break Err(e),
        };
        if n == 0 {
            break Ok(());
        }
        let reply = if buf.last() != Some(&b'\n') && buf.len() > MAX_LINE_BYTES {
            conn.line_too_long()
        } else {
            conn.handle_bytes(&buf)
        };
        if !reply.messages.is_empty() {
            if let Err(e) = wr.write_all(&encode_reply(&reply)).await {
                break Err(e);
            }
        }
        if reply.close {
            let _ = wr.shutdown().await;
            break Ok(());
        }
    };
    conn.disconnect();
    result
}

/// Accepts WebSocket connections forever. Each text message holds one or
/// more protocol lines; each reply message is sent as its own text message.
pub async fn serve_ws(listener: TcpListener, ctx: Arc<ServerContext>) -> Result<(), ServeError> {
    loop {
        let (stream, _) = listener.accept().await.map_err(ServeError::Accept)?;
        let ctx = Arc::clone(&ctx);
        tokio::spawn(async move {
            if let Err(e) = handle_ws(stream, ctx).await {
                eprintln!("websocket error: {e}");
            }
        });
    }
}

pub async fn handle_ws(
    stream: TcpStream,
    ctx: Arc<ServerContext>,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    stream.set_nodelay(true)?;
    let config =
        WebSocketConfig::default().max_message_size(Some(4 * MAX_LINE_BYTES)).max_frame_size(Some(4 * MAX_LINE_BYTES));
    let mut ws = tokio_tungstenite::accept_async_with_config(stream, Some(config)).await?;
    let mut conn = Connection::new(ctx);
    let result = 'outer: loop {
        let Some(msg) = ws.next().await else { break Ok(()) };
        let payload = match msg {
            Ok(Message::Text(text)) => text.as_bytes().to_vec(),
            Ok(Message::Binary(bytes)) => bytes.to_vec(),
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => continue,
            Err(e) => break Err(e),
        };
        for line in payload.split(|&b| b == b'\n') {
            let reply = if line.len() > MAX_LINE_BYTES { conn.line_too_long() } else { conn.handle_bytes(line) };
            for m in &reply.messages {
                if let Err(e) = ws.feed(Message::text(m.encode())).await {
                    break 'outer Err(e);
                }
            }
            if let Err(e) = ws.flush().await {
                break 'outer Err(e);
            }
            if reply.close {
                let _ = ws.close(None).await;
                break 'outer Ok(());
            }
        }
    };
    conn.disconnect();
    result
}
