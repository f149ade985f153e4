//! Transports between the client and a robot.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use slb_core::rng::PortableRng;

use crate::error::{Result, RobotError};
use crate::proto::Message;
use crate::sim::{SimConfig, SimRobot};

/// Client's view of a connection. Time is whatever clock the transport
/// runs on: wall time for TCP, virtual time for [`SimLink`].
pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<()>;
    /// Next message, or `None` once `timeout_ms` has passed without one.
    fn recv_timeout(&mut self, timeout_ms: i64) -> Result<Option<Message>>;
    fn now_ms(&self) -> i64;
}

/// Faults applied to server-to-client replies on a [`SimLink`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    pub latency_ms: i64,
    /// Probability that a reply is held back by up to `max_delay_ms` extra.
    pub delay_prob: f64,
    pub max_delay_ms: i64,
    /// Probability that a DONE is delivered twice.
    pub duplicate_prob: f64,
}

impl FaultProfile {
    pub fn none() -> Self {
        FaultProfile {
            latency_ms: 1,
            delay_prob: 0.0,
            max_delay_ms: 0,
            duplicate_prob: 0.0,
        }
    }
}

type Queue = BinaryHeap<Reverse<(i64, u64)>>;

/// In-process link to a [`SimRobot`] on a virtual clock. The robot ticks
/// only while the client waits, so runs are deterministic and fast.
pub struct SimLink {
    robot: SimRobot,
    now: i64,
    faults: FaultProfile,
    rng: PortableRng,
    to_server: Queue,
    to_client: Queue,
    payloads: HashMap<u64, Message>,
    next_id: u64,
    /// Every reply the robot emitted, in emission order, before faults.
    pub emitted: Vec<(i64, Message)>,
    /// Every message the robot received, in arrival order.
    pub received: Vec<(i64, Message)>,
}

enum Event {
    Server(i64),
    Client(i64),
    Tick(i64),
}

impl SimLink {
    pub fn new(cfg: SimConfig, faults: FaultProfile, seed: u64) -> Self {
        SimLink {
            robot: SimRobot::new(cfg),
            now: 0,
            faults,
            rng: PortableRng::new(seed),
            to_server: Queue::new(),
            to_client: Queue::new(),
            payloads: HashMap::new(),
            next_id: 0,
            emitted: Vec::new(),
            received: Vec::new(),
        }
    }

    pub fn robot(&self) -> &SimRobot {
        &self.robot
    }

    fn push(&mut self, at: i64, to_server: bool, msg: Message) {
        let id = self.next_id;
        self.next_id += 1;
        self.payloads.insert(id, msg);
        let q = if to_server {
            &mut self.to_server
        } else {
            &mut self.to_client
        };
        q.push(Reverse((at, id)));
    }

    fn reply_delay(&mut self) -> i64 {
        let mut d = self.faults.latency_ms;
        if self.faults.max_delay_ms > 0 && self.rng.bernoulli(self.faults.delay_prob) {
            d += self.rng.int_range(0, self.faults.max_delay_ms);
        }
        d
    }

    fn emit(&mut self, replies: Vec<Message>) {
        for r in replies {
            self.emitted.push((self.now, r.clone()));
            let dup = matches!(r, Message::Done { .. }) && self.rng.bernoulli(self.faults.duplicate_prob);
            let delay = self.reply_delay();
            self.push(self.now + delay, false, r.clone());
            if dup {
                let delay = self.reply_delay();
                self.push(self.now + delay, false, r);
            }
        }
    }

    fn next_event(&self, deliver: bool) -> Option<Event> {
        let server = self.to_server.peek().map(|Reverse((t, _))| *t);
        let client = if deliver {
            self.to_client.peek().map(|Reverse((t, _))| *t)
        } else {
            None
        };
        let tick = self.robot.is_busy().then(|| {
            let step = self.robot.config().tick_ms;
            (self.now.div_euclid(step) + 1) * step
        });
        // Ties: messages before ticks, server before client.
        [
            server.map(Event::Server),
            client.map(Event::Client),
            tick.map(Event::Tick),
        ]
        .into_iter()
        .flatten()
        .min_by_key(|e| match e {
            Event::Server(t) => (*t, 0),
            Event::Client(t) => (*t, 1),
            Event::Tick(t) => (*t, 2),
        })
    }

    /// Processes events up to `deadline`; with `deliver`, stops at and
    /// returns the first message due to the client.
    fn advance(&mut self, deadline: i64, deliver: bool) -> Option<Message> {
        while let Some(event) = self.next_event(deliver) {
            let t = match event {
                Event::Server(t) | Event::Client(t) | Event::Tick(t) => t,
            };
            if t > deadline {
                break;
            }
            self.now = self.now.max(t);
            match event {
                Event::Server(_) => {
                    let Reverse((_, id)) = self.to_server.pop().expect("peeked");
                    let msg = self.payloads.remove(&id).expect("payload");
                    self.received.push((self.now, msg.clone()));
                    let replies = self.robot.handle(msg);
                    self.emit(replies);
                }
                Event::Client(_) => {
                    let Reverse((_, id)) = self.to_client.pop().expect("peeked");
                    return self.payloads.remove(&id);
                }
                Event::Tick(_) => {
                    let replies = self.robot.tick();
                    self.emit(replies);
                }
            }
        }
        if deadline != i64::MAX {
            self.now = self.now.max(deadline);
        }
        None
    }

    /// Runs the robot, without delivering anything to the client, until it
    /// is idle and has received every message sent so far.
    pub fn settle(&mut self) {
        self.advance(i64::MAX, false);
    }

    /// Replies sent but not yet delivered to the client.
    pub fn undelivered(&self) -> usize {
        self.to_client.len()
    }
}

impl Transport for SimLink {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let at = self.now + self.faults.latency_ms;
        self.push(at, true, msg.clone());
        Ok(())
    }

    fn recv_timeout(&mut self, timeout_ms: i64) -> Result<Option<Message>> {
        let deadline = self.now + timeout_ms.max(0);
        Ok(self.advance(deadline, true))
    }

    fn now_ms(&self) -> i64 {
        self.now
    }
}

/// Newline-delimited messages over TCP, on wall-clock time.
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    buf: Vec<u8>,
    epoch: Instant,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
            buf: Vec::new(),
            epoch: Instant::now(),
        })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.writer.write_all(msg.encode().as_bytes())?;
        Ok(())
    }

    fn recv_timeout(&mut self, timeout_ms: i64) -> Result<Option<Message>> {
        let deadline = Instant::now() + Duration::from_millis(timeout_ms.max(0) as u64);
        loop {
            if let Some(pos) = self.buf.iter().position(|b| *b == b'\n') {
                let line: Vec<u8> = self.buf.drain(..=pos).collect();
                let text = String::from_utf8_lossy(&line);
                if text.trim().is_empty() {
                    continue;
                }
                return Message::decode(&text).map(Some);
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            let wait = (deadline - now).max(Duration::from_millis(1));
            self.reader.get_ref().set_read_timeout(Some(wait))?;
            // read_until keeps partial lines in `buf` across timeouts.
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    return Err(RobotError::Protocol("connection closed by robot".into()));
                }
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn now_ms(&self) -> i64 {
        self.epoch.elapsed().as_millis() as i64
    }
}
