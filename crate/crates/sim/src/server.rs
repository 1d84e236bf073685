//! Real-time teleoperation service.
//!
//! One thread owns the [`Simulation`] and paces it against the wall clock.
//! Connection tasks talk to it through a command queue (latest command wins
//! at each tick) and a broadcast channel of pre-serialized frames. A client
//! that cannot keep up lags behind on the broadcast and loses frames; the
//! physics thread never waits on a socket.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast;
use tokio_tungstenite::tungstenite::{Message, Utf8Bytes};

use gyroegg_core::control::DriveCommand;
use gyroegg_core::harness::{RunStatus, Scenario, Simulation};
use gyroegg_core::Error;

use crate::protocol::{parse_client, ClientMessage, ErrorCode, Role, ServerMessage, PROTOCOL_VERSION};

/// Frames buffered per client before the slowest start losing them.
const FRAME_BACKLOG: usize = 8;
/// Frame timing samples kept for diagnostics.
const TIMING_SAMPLES: usize = 10_000;

/// Wall-clock and simulation time at one frame emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    pub wall_s: f64,
    pub sim_s: f64,
}

struct Shared {
    commands: Mutex<mpsc::Sender<DriveCommand>>,
    /// Dropped when the run ends, which closes every subscription.
    frames: Mutex<Option<broadcast::Sender<Utf8Bytes>>>,
    driver: Mutex<Option<u64>>,
    next_client: AtomicU64,
    shutdown: AtomicBool,
    ended: Mutex<Option<String>>,
    timings: Mutex<Vec<FrameTiming>>,
    dt_s: f64,
    telemetry_rate_hz: f64,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    sim: Option<JoinHandle<RunStatus>>,
    accept: tokio::task::JoinHandle<()>,
}

/// Bind `addr` and start stepping `scenario` in real time. A scenario
/// duration of zero runs until [`ServerHandle::shutdown`].
pub async fn start(scenario: Scenario, addr: &str) -> anyhow::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let sim = Simulation::new(scenario.clone())?;
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (frames, _) = broadcast::channel(FRAME_BACKLOG);
    let shared = Arc::new(Shared {
        commands: Mutex::new(cmd_tx),
        frames: Mutex::new(Some(frames)),
        driver: Mutex::new(None),
        next_client: AtomicU64::new(1),
        shutdown: AtomicBool::new(false),
        ended: Mutex::new(None),
        timings: Mutex::new(Vec::new()),
        dt_s: scenario.dt_s,
        telemetry_rate_hz: scenario.telemetry_rate_hz,
    });
    let loop_shared = shared.clone();
    let duration = scenario.duration_s;
    let sim = std::thread::Builder::new()
        .name("gyroegg-sim".into())
        .spawn(move || sim_loop(sim, cmd_rx, &loop_shared, duration))?;
    let accept_shared = shared.clone();
    let accept = tokio::spawn(async move {
        while let Ok((stream, _)) = listener.accept().await {
            tokio::spawn(client(stream, accept_shared.clone()));
        }
    });
    Ok(ServerHandle {
        addr,
        shared,
        sim: Some(sim),
        accept,
    })
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
    }

    pub fn timings(&self) -> Vec<FrameTiming> {
        self.shared.timings.lock().unwrap().clone()
    }

    pub fn driver_connected(&self) -> bool {
        self.shared.driver.lock().unwrap().is_some()
    }

    /// Wait for the simulation to stop, then stop accepting clients.
    pub async fn wait(mut self) -> anyhow::Result<RunStatus> {
        let sim = self.sim.take().expect("joined once");
        let status = tokio::task::spawn_blocking(move || sim.join())
            .await?
            .map_err(|_| anyhow::anyhow!("simulation thread panicked"))?;
        self.accept.abort();
        Ok(status)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
        self.accept.abort();
    }
}

fn sim_loop(mut sim: Simulation, commands: mpsc::Receiver<DriveCommand>, shared: &Shared, duration_s: f64) -> RunStatus {
    let start = Instant::now();
    let publish = |sim: &Simulation| {
        let text = ServerMessage::Frame {
            frame: Box::new(sim.frame()),
        }
        .to_json();
        if let Some(tx) = shared.frames.lock().unwrap().as_ref() {
            // no receivers is fine
            let _ = tx.send(text.into());
        }
        let mut t = shared.timings.lock().unwrap();
        if t.len() == TIMING_SAMPLES {
            t.remove(0);
        }
        t.push(FrameTiming {
            wall_s: start.elapsed().as_secs_f64(),
            sim_s: sim.time_s(),
        });
    };
    publish(&sim);
    let (status, reason) = loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            break (RunStatus::Completed, "server shut down".to_string());
        }
        if duration_s > 0.0 && sim.time_s() >= duration_s - 0.5 * shared.dt_s {
            break (RunStatus::Completed, format!("scenario ended at {:.3} s", sim.time_s()));
        }
        if let Some(cmd) = commands.try_iter().last() {
            sim.submit_command(cmd);
        }
        match sim.step() {
            Ok(()) => {}
            Err(e @ Error::Unstable { .. }) => break (RunStatus::Unstable, e.to_string()),
            Err(e) => break (RunStatus::Unstable, e.to_string()),
        }
        if !sim.battery_alive() {
            break (RunStatus::BatteryDepleted, format!("pack reached cutoff at {:.3} V", sim.pack().voltage()));
        }
        if sim.frame_due() {
            publish(&sim);
        }
        let target = Duration::from_secs_f64(sim.time_s());
        let elapsed = start.elapsed();
        if target > elapsed {
            std::thread::sleep(target - elapsed);
        }
    };
    *shared.ended.lock().unwrap() = Some(reason);
    shared.frames.lock().unwrap().take();
    status
}

async fn client(stream: TcpStream, shared: Arc<Shared>) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    let (mut tx, mut rx) = ws.split();
    let mut frames: Option<broadcast::Receiver<Utf8Bytes>> = None;

    loop {
        tokio::select! {
            incoming = rx.next() => {
                let text = match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let reply = ServerMessage::error(ErrorCode::Malformed, "binary messages are not part of the protocol");
                        if tx.send(Message::text(reply.to_json())).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(_)) => continue,
                };
                let (replies, close) = handle_text(&text, id, &shared, &mut frames);
                let mut failed = false;
                for r in replies {
                    failed |= tx.send(Message::text(r.to_json())).await.is_err();
                }
                if failed || close {
                    break;
                }
            }
            frame = next_frame(&mut frames) => match frame {
                Ok(text) => {
                    if tx.send(Message::Text(text)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => {
                    let reason = shared.ended.lock().unwrap().clone().unwrap_or_else(|| "simulation stopped".into());
                    let _ = tx.send(Message::text(ServerMessage::error(ErrorCode::RunEnded, reason).to_json())).await;
                    break;
                }
            },
        }
    }
    let mut driver = shared.driver.lock().unwrap();
    if *driver == Some(id) {
        // the controller watchdog zeroes the last command
        *driver = None;
    }
}

async fn next_frame(frames: &mut Option<broadcast::Receiver<Utf8Bytes>>) -> Result<Utf8Bytes, broadcast::error::RecvError> {
    match frames {
        Some(rx) => rx.recv().await,
        None => std::future::pending().await,
    }
}

fn hello(shared: &Shared, role: Role) -> ServerMessage {
    ServerMessage::Hello {
        v: PROTOCOL_VERSION,
        role,
        dt_s: shared.dt_s,
        telemetry_rate_hz: shared.telemetry_rate_hz,
    }
}

/// Replies to one text message, and whether to close afterwards.
fn handle_text(
    text: &str,
    id: u64,
    shared: &Shared,
    frames: &mut Option<broadcast::Receiver<Utf8Bytes>>,
) -> (Vec<ServerMessage>, bool) {
    let msg = match parse_client(text) {
        Ok(m) => m,
        Err(e) => return (vec![ServerMessage::error(ErrorCode::Malformed, e)], false),
    };
    let greeted = frames.is_some();
    match msg {
        ClientMessage::Hello { v } if v != PROTOCOL_VERSION => (
            vec![ServerMessage::error(
                ErrorCode::VersionMismatch,
                format!("server speaks protocol v{PROTOCOL_VERSION}, client sent v{v}"),
            )],
            true,
        ),
        ClientMessage::Hello { .. } => {
            if !greeted {
                match shared.frames.lock().unwrap().as_ref() {
                    Some(tx) => *frames = Some(tx.subscribe()),
                    None => {
                        let reason = shared.ended.lock().unwrap().clone().unwrap_or_default();
                        return (vec![ServerMessage::error(ErrorCode::RunEnded, reason)], true);
                    }
                }
            }
            let role = if *shared.driver.lock().unwrap() == Some(id) {
                Role::Driver
            } else {
                Role::Observer
            };
            (vec![hello(shared, role)], false)
        }
        _ if !greeted => (vec![ServerMessage::error(ErrorCode::HelloRequired, "send hello first")], false),
        ClientMessage::ClaimDriver => {
            let mut driver = shared.driver.lock().unwrap();
            match *driver {
                Some(d) if d != id => (
                    vec![ServerMessage::error(ErrorCode::RoleDenied, "another client is driving")],
                    false,
                ),
                _ => {
                    *driver = Some(id);
                    (vec![hello(shared, Role::Driver)], false)
                }
            }
        }
        ClientMessage::Command {
            forward,
            turn,
            timestamp_s,
        } => {
            if *shared.driver.lock().unwrap() != Some(id) {
                return (
                    vec![ServerMessage::error(ErrorCode::NotDriver, "claim the driver role before sending commands")],
                    false,
                );
            }
            if ![forward, turn, timestamp_s].iter().all(|x| x.is_finite()) {
                return (vec![ServerMessage::error(ErrorCode::Malformed, "command fields must be finite")], false);
            }
            let _ = shared.commands.lock().unwrap().send(DriveCommand::new(forward, turn, timestamp_s));
            (Vec::new(), false)
        }
    }
}
