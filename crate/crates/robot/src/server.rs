//! TCP front end for [`SimRobot`].
//!
//! Per connection a reader thread parses lines into a single-slot
//! latest-target cell, and the mover loop (the calling thread) drains the
//! cell once per tick, drives the robot and writes every reply. Keeping all
//! writes on the mover keeps replies in emission order.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::proto::Message;
use crate::sim::{RobotState, SimConfig, SimRobot};

#[derive(Default)]
struct Cell {
    /// Latest SETPOINT not yet picked up by the mover.
    latest: Option<Message>,
    /// RESET and ABORT in arrival order.
    control: Vec<Message>,
    /// Replies decided by the reader (displaced seqs, parse errors), written
    /// by the mover.
    replies: Vec<Message>,
    closed: bool,
}

impl Cell {
    fn displace(&mut self, reply: impl Fn(u64) -> Message) {
        if let Some(Message::Setpoint { seq, .. }) = self.latest.take() {
            self.replies.push(reply(seq));
        }
    }

    fn push(&mut self, msg: Message) {
        match msg {
            Message::Setpoint { .. } => {
                self.displace(|seq| Message::Superseded { seq });
                self.latest = Some(msg);
            }
            Message::Reset => {
                self.displace(|seq| Message::Superseded { seq });
                self.control.push(msg);
            }
            Message::Abort { .. } => {
                self.displace(|seq| Message::Abort { seq: Some(seq) });
                self.control.push(msg);
            }
            other => self.replies.push(Message::Error {
                detail: format!("unexpected message from client: {other:?}"),
            }),
        }
    }
}

fn reader_loop(stream: TcpStream, cell: Arc<Mutex<Cell>>) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut c = cell.lock().expect("cell lock");
        match Message::decode(&line) {
            Ok(msg) => c.push(msg),
            Err(e) => c.replies.push(Message::Error {
                detail: e.to_string(),
            }),
        }
    }
    cell.lock().expect("cell lock").closed = true;
}

/// Replies from one mover step, terminal replies in seq order.
fn order_replies(mut replies: Vec<Message>) -> Vec<Message> {
    replies.sort_by_key(|m| m.terminal_seq().unwrap_or(0));
    replies
}

fn serve_connection(
    stream: TcpStream,
    robot: &mut SimRobot,
    time_scale: f64,
    shutdown: &AtomicBool,
    snapshot: &Mutex<RobotState>,
) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let cell = Arc::new(Mutex::new(Cell::default()));
    let reader = {
        let stream = stream.try_clone()?;
        let cell = Arc::clone(&cell);
        thread::spawn(move || reader_loop(stream, cell))
    };
    let period = Duration::from_secs_f64(robot.config().tick_ms as f64 / 1000.0 / time_scale);
    let mut next = Instant::now();
    let result = loop {
        if shutdown.load(Ordering::Relaxed) {
            break Ok(());
        }
        let (replies, control, latest, closed) = {
            let mut c = cell.lock().expect("cell lock");
            (
                std::mem::take(&mut c.replies),
                std::mem::take(&mut c.control),
                c.latest.take(),
                c.closed,
            )
        };
        let mut out = replies;
        for msg in control {
            out.extend(robot.handle(msg));
        }
        if let Some(sp) = latest {
            out.extend(robot.handle(sp));
        }
        out.extend(robot.tick());
        *snapshot.lock().expect("state lock") = robot.state().clone();
        let mut failed = None;
        for msg in order_replies(out) {
            if let Err(e) = writer.write_all(msg.encode().as_bytes()) {
                failed = Some(e);
                break;
            }
        }
        if closed {
            break Ok(());
        }
        if let Some(e) = failed {
            break if matches!(e.kind(), ErrorKind::BrokenPipe | ErrorKind::ConnectionReset) {
                Ok(())
            } else {
                Err(e.into())
            };
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    };
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    result
}

/// Serves connections one at a time until `shutdown` is set. The robot
/// keeps its state between connections. `time_scale` > 1 runs the tick loop
/// faster than real time.
pub fn serve(
    listener: TcpListener,
    cfg: SimConfig,
    time_scale: f64,
    shutdown: Arc<AtomicBool>,
    snapshot: Arc<Mutex<RobotState>>,
) -> Result<()> {
    listener.set_nonblocking(true)?;
    let mut robot = SimRobot::new(cfg);
    *snapshot.lock().expect("state lock") = robot.state().clone();
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                serve_connection(stream, &mut robot, time_scale, &shutdown, &snapshot)?;
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    snapshot: Arc<Mutex<RobotState>>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn spawn(addr: &str, cfg: SimConfig, time_scale: f64) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let snapshot = Arc::new(Mutex::new(SimRobot::new(cfg).state().clone()));
        let thread = {
            let shutdown = Arc::clone(&shutdown);
            let snapshot = Arc::clone(&snapshot);
            thread::spawn(move || serve(listener, cfg, time_scale, shutdown, snapshot))
        };
        Ok(ServerHandle {
            addr,
            shutdown,
            snapshot,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> RobotState {
        self.snapshot.lock().expect("state lock").clone()
    }

    pub fn stop(mut self) -> Result<()> {
        self.shutdown.store(true, Ordering::Relaxed);
        match self.thread.take() {
            Some(t) => t.join().expect("server thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
