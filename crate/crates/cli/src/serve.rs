//! NDJSON service over TCP, a Unix socket or stdio.
//!
//! Each connection gets a reader thread that hands request lines to a
//! shared worker pool and a writer thread that emits responses as they
//! complete, so responses may arrive out of order; clients match on `id`.

use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{mpsc, Arc};
use std::thread;

use anyhow::anyhow;
use clap::Args;
use serde_json::{json, Value};

use corver_core::protocol::{error_response, handle_line, ErrorCode};
use corver_core::{Engine, EngineConfig};

use crate::{input, internal, CliResult};

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Engine config (TOML or JSON); falls back to $CORVER_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TCP address such as 127.0.0.1:7400 (port 0 picks a free port).
    #[arg(long)]
    tcp: Option<String>,
    /// Unix socket path.
    #[arg(long)]
    unix: Option<PathBuf>,
    /// Serve a single session on stdin/stdout.
    #[arg(long, conflicts_with_all = ["tcp", "unix"])]
    stdio: bool,
    /// Worker threads; overrides the config, defaults to the CPU count.
    #[arg(long)]
    workers: Option<usize>,
}

struct Shared {
    engine: Engine,
    pool: rayon::ThreadPool,
}

pub fn run(args: ServeArgs) -> CliResult<()> {
    if !args.stdio && args.tcp.is_none() && args.unix.is_none() {
        return Err(input(anyhow!("serve needs --tcp, --unix or --stdio")));
    }
    let cfg = EngineConfig::locate(args.config.as_deref()).map_err(input)?;
    let workers = args.workers.or(cfg.workers).unwrap_or(0);
    let engine = Engine::from_config(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .thread_name(|i| format!("corver-worker-{i}"))
        .build()
        .map_err(internal)?;
    log::info!("engine ready: {} index tokens, {} workers", engine.index_tokens(), pool.current_num_threads());
    let shared = Arc::new(Shared { engine, pool });

    if args.stdio {
        session(shared, io::stdin(), io::stdout());
        return Ok(());
    }

    let mut listeners = Vec::new();
    let mut event = serde_json::Map::new();
    event.insert("event".into(), json!("listening"));
    if let Some(addr) = &args.tcp {
        let l = TcpListener::bind(addr).map_err(|e| input(anyhow!("bind {addr}: {e}")))?;
        event.insert("tcp".into(), json!(l.local_addr().map_err(internal)?.to_string()));
        let shared = shared.clone();
        listeners.push(thread::spawn(move || {
            for stream in l.incoming() {
                match stream.and_then(|s| Ok((s.try_clone()?, s))) {
                    Ok((r, w)) => {
                        let shared = shared.clone();
                        thread::spawn(move || session(shared, r, w));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        }));
    }
    #[cfg(unix)]
    if let Some(path) = &args.unix {
        use std::os::unix::net::UnixListener;
        let l = UnixListener::bind(path).map_err(|e| input(anyhow!("bind {}: {e}", path.display())))?;
        event.insert("unix".into(), json!(path));
        let shared = shared.clone();
        listeners.push(thread::spawn(move || {
            for stream in l.incoming() {
                match stream.and_then(|s| Ok((s.try_clone()?, s))) {
                    Ok((r, w)) => {
                        let shared = shared.clone();
                        thread::spawn(move || session(shared, r, w));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        }));
    }
    #[cfg(not(unix))]
    if args.unix.is_some() {
        return Err(input(anyhow!("unix sockets are not supported on this platform")));
    }

    {
        let mut out = io::stdout().lock();
        serde_json::to_writer(&mut out, &Value::Object(event)).map_err(internal)?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(internal)?;
    }
    for l in listeners {
        l.join().map_err(|_| internal(anyhow!("listener thread panicked")))?;
    }
    Ok(())
}

/// Serves one connection until the reader hits end of input and every
/// in-flight request has been answered.
fn session<R: Read, W: Write + Send + 'static>(shared: Arc<Shared>, reader: R, writer: W) {
    let (tx, rx) = mpsc::channel::<Value>();
    let writer = thread::spawn(move || {
        let mut out = BufWriter::new(writer);
        for v in rx {
            let ok = serde_json::to_writer(&mut out, &v).is_ok() && out.write_all(b"\n").is_ok() && out.flush().is_ok();
            if !ok {
                log::warn!("client went away");
                break;
            }
        }
    });

    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                log::warn!("read failed: {e}");
                break;
            }
        }
        let line = match std::str::from_utf8(&buf) {
            Ok(s) => s.trim(),
            Err(e) => {
                let _ = tx.send(error_response(Value::Null, ErrorCode::BadRequest, format!("invalid UTF-8: {e}")));
                continue;
            }
        };
        if line.is_empty() {
            continue;
        }
        let line = line.to_owned();
        let tx = tx.clone();
        let worker = shared.clone();
        shared.pool.spawn(move || {
            let _ = tx.send(handle_line(&worker.engine, &line));
        });
    }
    drop(tx);
    let _ = writer.join();
}
