//! The hub task: sole owner of [`Hub`] state. Everything else talks to it
//! through [`HubHandle`], so requests, sensor input, timers and camera ticks
//! are applied in one order.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use tokio::sync::{mpsc, oneshot, Notify};
use tokio::time::Instant;
use tracing::{debug, error, warn};

use hub_core::grammar::Channel;
use hub_core::hub::{LineOutcome, Outbound};
use hub_core::scenario::ScenarioAction;
use hub_core::surveillance::StreamQueue;
use hub_core::{Hub, HubSnapshot, Timestamp};

/// Pushes a session may have waiting before it is cut off.
pub const PUSH_BUFFER: usize = 256;

/// What a session's writer has to put on the wire, in order.
#[derive(Debug)]
pub enum Out {
    Reply(String),
    Push(String),
    Stream(Arc<StreamQueue>),
    Close,
}

/// The hub's end of one session's output.
#[derive(Clone)]
pub struct SessionTx {
    tx: mpsc::UnboundedSender<Out>,
    pending_pushes: Arc<AtomicUsize>,
    frames: Arc<Notify>,
    slow: Arc<Notify>,
}

pub struct SessionRx {
    pub rx: mpsc::UnboundedReceiver<Out>,
    pending_pushes: Arc<AtomicUsize>,
    pub frames: Arc<Notify>,
    /// Fires when the session fell [`PUSH_BUFFER`] pushes behind and has been dropped.
    pub slow: Arc<Notify>,
}

impl SessionRx {
    /// Call once a push has been written out.
    pub fn push_done(&self) {
        self.pending_pushes.fetch_sub(1, Ordering::AcqRel);
    }
}

pub fn session_channel() -> (SessionTx, SessionRx) {
    let (tx, rx) = mpsc::unbounded_channel();
    let pending_pushes = Arc::new(AtomicUsize::new(0));
    let frames = Arc::new(Notify::new());
    let slow = Arc::new(Notify::new());
    (
        SessionTx {
            tx,
            pending_pushes: Arc::clone(&pending_pushes),
            frames: Arc::clone(&frames),
            slow: Arc::clone(&slow),
        },
        SessionRx { rx, pending_pushes, frames, slow },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Hub time follows the wall clock.
    Wall,
    /// Hub time moves only on [`HubHandle::advance`].
    Manual,
}

enum Msg {
    Open { peer: String, channel: Channel, out: SessionTx, done: oneshot::Sender<u64> },
    Line { session: u64, line: String },
    Close { session: u64 },
    Scenario { action: ScenarioAction, done: oneshot::Sender<Result<Option<String>, String>> },
    Advance { ms: i64, done: oneshot::Sender<Timestamp> },
    AgentHello { phone: String, out: mpsc::UnboundedSender<String>, done: oneshot::Sender<Result<(), String>> },
    AgentLine { phone: String, line: String },
    AgentGone { phone: String },
    Snapshot { done: oneshot::Sender<HubSnapshot> },
    Inspect { f: Box<dyn FnOnce(&Hub) + Send> },
    Shutdown { done: oneshot::Sender<()> },
}

#[derive(Clone)]
pub struct HubHandle {
    tx: mpsc::UnboundedSender<Msg>,
}

#[derive(Debug, thiserror::Error)]
#[error("hub task has stopped")]
pub struct HubGone;

impl HubHandle {
    fn send(&self, msg: Msg) -> Result<(), HubGone> {
        self.tx.send(msg).map_err(|_| HubGone)
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Msg) -> Result<T, HubGone> {
        let (done, rx) = oneshot::channel();
        self.send(make(done))?;
        rx.await.map_err(|_| HubGone)
    }

    pub async fn open(&self, peer: &str, channel: Channel, out: SessionTx) -> Result<u64, HubGone> {
        let peer = peer.to_string();
        self.ask(|done| Msg::Open { peer, channel, out, done }).await
    }

    /// Replies come back on the session's [`Out`] queue.
    pub fn line(&self, session: u64, line: &str) -> Result<(), HubGone> {
        self.send(Msg::Line { session, line: line.to_string() })
    }

    pub fn close(&self, session: u64) {
        let _ = self.send(Msg::Close { session });
    }

    pub async fn scenario(&self, action: ScenarioAction) -> Result<Result<Option<String>, String>, HubGone> {
        self.ask(|done| Msg::Scenario { action, done }).await
    }

    /// Moves a manual clock forward; a wall clock ignores this.
    pub async fn advance(&self, ms: i64) -> Result<Timestamp, HubGone> {
        self.ask(|done| Msg::Advance { ms, done }).await
    }

    pub async fn agent_hello(&self, phone: &str, out: mpsc::UnboundedSender<String>) -> Result<Result<(), String>, HubGone> {
        let phone = phone.to_string();
        self.ask(|done| Msg::AgentHello { phone, out, done }).await
    }

    pub fn agent_line(&self, phone: &str, line: &str) -> Result<(), HubGone> {
        self.send(Msg::AgentLine { phone: phone.to_string(), line: line.to_string() })
    }

    pub fn agent_gone(&self, phone: &str) {
        let _ = self.send(Msg::AgentGone { phone: phone.to_string() });
    }

    pub async fn snapshot(&self) -> Result<HubSnapshot, HubGone> {
        self.ask(|done| Msg::Snapshot { done }).await
    }

    /// Runs `f` against the hub between two requests.
    pub async fn inspect<T: Send + 'static>(&self, f: impl FnOnce(&Hub) -> T + Send + 'static) -> Result<T, HubGone> {
        let (done, rx) = oneshot::channel();
        self.send(Msg::Inspect {
            f: Box::new(move |hub| {
                let _ = done.send(f(hub));
            }),
        })?;
        rx.await.map_err(|_| HubGone)
    }

    /// Flushes the log and stops the hub task.
    pub async fn shutdown(&self) {
        let _ = self.ask(|done| Msg::Shutdown { done }).await;
    }
}

struct Clock {
    mode: ClockMode,
    origin: Timestamp,
    started: Instant,
}

impl Clock {
    fn now(&self) -> Timestamp {
        self.origin.plus_millis(self.started.elapsed().as_millis() as i64)
    }

    fn instant_of(&self, t: Timestamp) -> Instant {
        self.started + std::time::Duration::from_millis(t.since(self.origin).max(0) as u64)
    }
}

struct Actor {
    hub: Hub,
    clock: Clock,
    sessions: HashMap<u64, SessionTx>,
    agents: HashMap<String, mpsc::UnboundedSender<String>>,
}

pub fn spawn(hub: Hub, mode: ClockMode) -> (HubHandle, tokio::task::JoinHandle<()>) {
    let (tx, rx) = mpsc::unbounded_channel();
    let clock = Clock { mode, origin: hub.now(), started: Instant::now() };
    let actor = Actor { hub, clock, sessions: HashMap::new(), agents: HashMap::new() };
    let task = tokio::spawn(actor.run(rx));
    (HubHandle { tx }, task)
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Msg>) {
        loop {
            let wake = match self.clock.mode {
                ClockMode::Wall => self.hub.next_deadline().map(|t| self.clock.instant_of(t)),
                ClockMode::Manual => None,
            };
            let msg = tokio::select! {
                msg = rx.recv() => msg,
                _ = tokio::time::sleep_until(wake.unwrap_or_else(Instant::now)), if wake.is_some() => {
                    self.tick();
                    self.route();
                    continue;
                }
            };
            let Some(msg) = msg else { break };
            self.tick();
            let stop = self.handle(msg);
            self.route();
            if let Some(done) = stop {
                if let Err(e) = self.hub.flush() {
                    error!("flushing event log: {e}");
                }
                let _ = done.send(());
                break;
            }
        }
        if let Err(e) = self.hub.flush() {
            error!("flushing event log: {e}");
        }
    }

    fn tick(&mut self) {
        if self.clock.mode == ClockMode::Wall {
            let now = self.clock.now();
            if let Err(e) = self.hub.advance_to(now) {
                error!("advancing hub clock: {e}");
            }
        }
    }

    fn handle(&mut self, msg: Msg) -> Option<oneshot::Sender<()>> {
        match msg {
            Msg::Open { peer, channel, out, done } => {
                let frames = Arc::clone(&out.frames);
                let waker: hub_core::surveillance::Waker = Arc::new(move || frames.notify_one());
                let id = self.hub.open_session(&peer, channel, Some(waker));
                self.sessions.insert(id, out);
                let _ = done.send(id);
            }
            Msg::Line { session, line } => self.line(session, &line),
            Msg::Close { session } => self.drop_session(session),
            Msg::Scenario { action, done } => {
                let result = self.hub.apply_scenario(&action).map(|r| r.map(|r| r.render())).map_err(|e| e.to_string());
                let _ = done.send(result);
            }
            Msg::Advance { ms, done } => {
                if self.clock.mode == ClockMode::Manual {
                    let t = self.hub.now().plus_millis(ms);
                    if let Err(e) = self.hub.advance_to(t) {
                        error!("advancing hub clock: {e}");
                    }
                }
                let _ = done.send(self.hub.now());
            }
            Msg::AgentHello { phone, out, done } => {
                let result = self.hub.agent_connected(&phone).map_err(|e| e.to_string());
                if result.is_ok() {
                    self.agents.insert(phone, out);
                }
                let _ = done.send(result);
            }
            Msg::AgentLine { phone, line } => {
                if let Err(e) = self.hub.agent_line(&phone, &line) {
                    warn!("{e}");
                }
            }
            Msg::AgentGone { phone } => {
                self.agents.remove(&phone);
                if let Err(e) = self.hub.agent_disconnected(&phone) {
                    error!("agent {phone} disconnect: {e}");
                }
            }
            Msg::Snapshot { done } => {
                let _ = done.send(self.hub.snapshot());
            }
            Msg::Inspect { f } => f(&self.hub),
            Msg::Shutdown { done } => return Some(done),
        }
        None
    }

    fn line(&mut self, session: u64, line: &str) {
        let outcome = self.hub.handle_line(session, line);
        let Some(out) = self.sessions.get(&session) else { return };
        let sent = match outcome {
            LineOutcome::Reply(r) => out.tx.send(Out::Reply(r.render())),
            LineOutcome::Stream { reply, queue } => {
                out.tx.send(Out::Reply(reply.render())).and_then(|_| out.tx.send(Out::Stream(queue)))
            }
            LineOutcome::Deferred => Ok(()),
            LineOutcome::Quit(r) => {
                let _ = out.tx.send(Out::Reply(r.render()));
                self.drop_session(session);
                return;
            }
        };
        if sent.is_err() {
            self.drop_session(session);
        }
    }

    fn drop_session(&mut self, session: u64) {
        if let Some(out) = self.sessions.remove(&session) {
            let _ = out.tx.send(Out::Close);
            if let Err(e) = self.hub.close_session(session) {
                error!("closing session {session}: {e}");
            }
        }
    }

    /// Hands everything the hub queued to sessions and agents.
    fn route(&mut self) {
        loop {
            let outbound = self.hub.take_outbound();
            if outbound.is_empty() {
                break;
            }
            for o in outbound {
                match o {
                    Outbound::Push { session, line } => self.push(session, line),
                    Outbound::Reply { session, reply } => {
                        if let Some(out) = self.sessions.get(&session) {
                            let _ = out.tx.send(Out::Reply(reply.render()));
                        }
                    }
                    Outbound::Agent { phone, line } => {
                        if let Some(agent) = self.agents.get(&phone) {
                            let _ = agent.send(line);
                        }
                    }
                }
            }
        }
    }

    fn push(&mut self, session: u64, line: String) {
        let Some(out) = self.sessions.get(&session) else { return };
        if out.pending_pushes.load(Ordering::Acquire) >= PUSH_BUFFER {
            debug!("session {session} is {PUSH_BUFFER} pushes behind, disconnecting");
            out.slow.notify_one();
            self.drop_session(session);
            return;
        }
        out.pending_pushes.fetch_add(1, Ordering::AcqRel);
        if out.tx.send(Out::Push(line)).is_err() {
            self.drop_session(session);
        }
    }
}
