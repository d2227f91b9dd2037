//! Frame-in/frame-out streaming over newline-delimited JSON, and the
//! in-process latency benchmark.
//!
//! Client messages: `hello` (`source_style`, `content`, `target_style`,
//! optional `second_style`, `alpha`, `fps`, `stats`), `frame`
//! (`frame_index`, `rotations` as `[w, x, y, z]` per joint, `root`) and
//! `control` (any of `target_style`, `second_style`, `alpha`; `null`
//! clears the last two). Server messages: `hello` (echo with the model
//! config), `frame_out`, `error` and, when requested, `stats`.

mod bench;
mod protocol;

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::{info, warn};

pub use bench::{bench_latency, percentile, BenchConfig, LatencyReport};
pub use protocol::{frame_message, wire_float, OnlineFeatureBuilder, ProtocolSession, DEFAULT_FPS};

use crate::model::Generator;
use crate::{Error, Result};

/// Environment variable capping concurrent connections.
pub const THREADS_ENV: &str = "STYLE_ERD_THREADS";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transport {
    /// One session over stdin/stdout.
    Stdio,
    /// One session per TCP connection on `127.0.0.1:port`.
    Tcp { port: u16 },
}

/// Runs one session to completion: until end of input or a protocol
/// violation. Returns the number of frames answered.
pub fn run_session(
    generator: &Generator,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<u64> {
    let mut session = ProtocolSession::new(generator);
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        for reply in session.handle_line(&line) {
            writeln!(output, "{reply}").map_err(|e| Error::io("<stream>", e))?;
        }
        output.flush().map_err(|e| Error::io("<stream>", e))?;
        if session.is_closed() {
            break;
        }
    }
    Ok(session.frames_processed())
}

fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn handle_connection(generator: &Generator, stream: TcpStream) -> Result<u64> {
    let reader = BufReader::new(stream.try_clone().map_err(|e| Error::io("<socket>", e))?);
    run_session(generator, reader, stream)
}

/// Serves until the transport closes (stdio) or forever (TCP).
pub fn serve(generator: Arc<Generator>, transport: Transport) -> Result<()> {
    match transport {
        Transport::Stdio => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            let frames = run_session(&generator, stdin.lock(), stdout.lock())?;
            info!("stdio session ended after {frames} frames");
            Ok(())
        }
        Transport::Tcp { port } => {
            let listener = TcpListener::bind(("127.0.0.1", port))
                .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))?;
            info!(
                "listening on {}",
                listener
                    .local_addr()
                    .map_err(|e| Error::io("<socket>", e))?
            );
            serve_listener(generator, listener)
        }
    }
}

/// Accept loop on an already bound listener.
pub fn serve_listener(generator: Arc<Generator>, listener: TcpListener) -> Result<()> {
    let cap = thread_cap();
    let active = Arc::new(AtomicUsize::new(0));
    for stream in listener.incoming() {
        let mut stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        if active.load(Ordering::SeqCst) >= cap {
            let _ = writeln!(
                stream,
                "{}",
                serde_json::json!({"kind": "error", "code": "busy", "message": format!("connection limit {cap} reached"), "closed": true})
            );
            continue;
        }
        active.fetch_add(1, Ordering::SeqCst);
        let (g, a) = (generator.clone(), active.clone());
        std::thread::spawn(move || {
            match handle_connection(&g, stream) {
                Ok(n) => info!("connection closed after {n} frames"),
                Err(e) => warn!("connection failed: {e}"),
            }
            a.fetch_sub(1, Ordering::SeqCst);
        });
    }
    Ok(())
}
