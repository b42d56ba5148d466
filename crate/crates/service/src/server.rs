//! WebSocket transport. One client at a time drives the session; further
//! connections get an error frame and are closed.

use std::net::{SocketAddr, TcpListener as StdListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use crate::control::{run_realtime, InputEvent, LoopReport, LoopStatus, ServiceConfig};
use crate::protocol::{parse_inbound, ErrorFrame, Outbound, OutboundMsg, PROTOCOL_VERSION};
use crate::queue::OutboundQueue;

/// A running service: control thread plus socket runtime.
pub struct Server {
    addr: SocketAddr,
    status: Arc<LoopStatus>,
    queue: Arc<OutboundQueue>,
    control: Option<JoinHandle<LoopReport>>,
    runtime: Option<tokio::runtime::Runtime>,
}

impl std::fmt::Debug for Server {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Server").field("addr", &self.addr).finish_non_exhaustive()
    }
}

impl Server {
    /// Binds `addr` and starts ticking immediately. With `max_ticks` the
    /// control loop ends by itself after that many ticks.
    pub fn start(cfg: ServiceConfig, addr: SocketAddr, max_ticks: Option<u64>) -> std::io::Result<Self> {
        cfg.validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
        let std_listener = StdListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = {
            let _guard = runtime.enter();
            TcpListener::from_std(std_listener)?
        };

        let queue = Arc::new(OutboundQueue::new(cfg.queue_capacity));
        let status = Arc::new(LoopStatus::default());
        let (tx, rx) = mpsc::channel();
        runtime.spawn(accept_loop(listener, tx, queue.clone(), status.clone()));

        let control = {
            let (queue, status) = (queue.clone(), status.clone());
            std::thread::Builder::new()
                .name("control".into())
                .spawn(move || run_realtime(cfg, rx, queue, status, max_ticks))?
        };
        info!("listening on ws://{addr}");
        Ok(Self {
            addr,
            status,
            queue,
            control: Some(control),
            runtime: Some(runtime),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Ticks completed so far.
    pub fn tick(&self) -> u64 {
        self.status.tick.load(Ordering::Acquire)
    }

    pub fn status(&self) -> Arc<LoopStatus> {
        self.status.clone()
    }

    /// Asks the control loop to stop after the current tick and waits.
    pub fn stop(self) -> LoopReport {
        self.status.stop.store(true, Ordering::Release);
        self.wait()
    }

    /// Waits for the control loop to end, then flushes and closes clients.
    pub fn wait(mut self) -> LoopReport {
        let report = self
            .control
            .take()
            .expect("joined once")
            .join()
            .expect("control thread panicked");
        self.queue.close();
        // Give the writer a moment to drain before tearing sockets down.
        for _ in 0..100 {
            if self.queue.is_empty() {
                break;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_millis(500));
        }
        report
    }
}

async fn accept_loop(listener: TcpListener, tx: Sender<InputEvent>, queue: Arc<OutboundQueue>, status: Arc<LoopStatus>) {
    let active = Arc::new(AtomicBool::new(false));
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        if active.swap(true, Ordering::AcqRel) {
            tokio::spawn(reject(stream, status.tick.load(Ordering::Acquire)));
            continue;
        }
        info!("client connected from {peer}");
        let (tx, queue, status, active) = (tx.clone(), queue.clone(), status.clone(), active.clone());
        tokio::spawn(async move {
            if let Err(e) = serve_client(stream, &tx, &queue, &status).await {
                debug!("client {peer}: {e}");
            }
            info!("client {peer} disconnected");
            let _ = tx.send(InputEvent::Disconnected);
            active.store(false, Ordering::Release);
        });
    }
}

fn encode(frame: &OutboundMsg) -> Message {
    Message::text(serde_json::to_string(frame).expect("frames always serialize"))
}

async fn reject(stream: TcpStream, tick: u64) {
    if let Ok(mut ws) = tokio_tungstenite::accept_async(stream).await {
        let frame = OutboundMsg {
            version: PROTOCOL_VERSION,
            seq: 0,
            tick,
            body: Outbound::Error(ErrorFrame {
                message: "another client is already connected".into(),
            }),
        };
        let _ = ws.send(encode(&frame)).await;
        let _ = ws.close(None).await;
    }
}

async fn serve_client(
    stream: TcpStream,
    tx: &Sender<InputEvent>,
    queue: &OutboundQueue,
    status: &LoopStatus,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    stream.set_nodelay(true)?;
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let writer = async {
        while let Some(frame) = queue.pop().await {
            sink.send(encode(&frame)).await?;
        }
        sink.close().await
    };
    let reader = async {
        while let Some(msg) = source.next().await {
            let text = match msg? {
                Message::Text(t) => t,
                Message::Close(_) => break,
                Message::Binary(_) => {
                    reject_frame(queue, status, "binary frames are not supported".into());
                    continue;
                }
                _ => continue,
            };
            // A message may carry several newline-separated frames.
            for line in text.as_str().lines().filter(|l| !l.trim().is_empty()) {
                match parse_inbound(line) {
                    Ok(msg) => {
                        if tx.send(InputEvent::Message { msg }).is_err() {
                            return Ok(());
                        }
                    }
                    Err(e) => reject_frame(queue, status, e.to_string()),
                }
            }
        }
        Ok(())
    };
    tokio::select! {
        r = writer => r,
        r = reader => r,
    }
}

fn reject_frame(queue: &OutboundQueue, status: &LoopStatus, message: String) {
    debug!("rejected frame: {message}");
    queue.push(status.tick.load(Ordering::Acquire), Outbound::Error(ErrorFrame { message }));
}
