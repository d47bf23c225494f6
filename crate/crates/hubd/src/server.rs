//! Brings a hub up: listeners, the hub task, the event log.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tracing::info;

use hub_core::clock::{Clock, WallClock};
use hub_core::scenario::ScenarioEvent;
use hub_core::{EventLog, Hub, HubConfig, Timestamp, DEFAULT_SIM_EPOCH};

use crate::actor::{self, ClockMode, HubHandle};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BIND: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot bind {what} listener on {addr}: {source}")]
    Bind { what: &'static str, addr: String, source: std::io::Error },
    #[error("data dir {path}: {source}")]
    DataDir { path: PathBuf, source: std::io::Error },
}

impl StartError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StartError::Bind { .. } => EXIT_BIND,
            StartError::Config(_) | StartError::DataDir { .. } => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub clock: ClockMode,
    /// Hub time at startup; defaults to now for a wall clock and the sim epoch otherwise.
    pub start: Option<Timestamp>,
}

impl Default for Options {
    fn default() -> Self {
        Self { clock: ClockMode::Wall, start: None }
    }
}

pub struct Running {
    pub hub: HubHandle,
    pub control: SocketAddr,
    pub http: SocketAddr,
    pub agent: SocketAddr,
    pub log_path: PathBuf,
    pub start: Timestamp,
    listeners: Vec<JoinHandle<()>>,
    hub_task: JoinHandle<()>,
}

impl Running {
    /// Stops accepting, flushes the log and waits for the hub task.
    pub async fn shutdown(self) {
        for l in &self.listeners {
            l.abort();
        }
        self.hub.shutdown().await;
        let _ = self.hub_task.await;
    }

    /// Feeds scenario events in at their offsets from `start`. With a wall
    /// clock this sleeps between events; with a manual clock it advances it.
    pub fn inject(&self, events: Vec<ScenarioEvent>, clock: ClockMode) -> JoinHandle<()> {
        let hub = self.hub.clone();
        let started = tokio::time::Instant::now();
        let start = self.start;
        tokio::spawn(async move {
            for ev in events {
                match clock {
                    ClockMode::Wall => {
                        let at = started + std::time::Duration::from_millis(ev.offset_ms as u64);
                        tokio::time::sleep_until(at).await;
                    }
                    ClockMode::Manual => {
                        let Ok(now) = hub.advance(0).await else { return };
                        let target = start.plus_millis(ev.offset_ms);
                        if hub.advance(target.since(now).max(0)).await.is_err() {
                            return;
                        }
                    }
                }
                match hub.scenario(ev.action).await {
                    Ok(Ok(Some(reply))) => info!("scenario line {}: {reply}", ev.line),
                    Ok(Ok(None)) => {}
                    Ok(Err(e)) => tracing::warn!("scenario line {}: {e}", ev.line),
                    Err(_) => return,
                }
            }
        })
    }
}

async fn bind(what: &'static str, addr: &str) -> Result<TcpListener, StartError> {
    TcpListener::bind(addr).await.map_err(|source| StartError::Bind { what, addr: addr.to_string(), source })
}

/// Where the log for a run goes. An earlier log is kept alongside as `events.log.prev`.
pub fn fresh_log_path(data_dir: &Path) -> Result<PathBuf, StartError> {
    let dd = |source| StartError::DataDir { path: data_dir.to_path_buf(), source };
    fs::create_dir_all(data_dir).map_err(dd)?;
    let path = data_dir.join("events.log");
    if path.exists() {
        fs::rename(&path, data_dir.join("events.log.prev")).map_err(dd)?;
    }
    Ok(path)
}

pub async fn start(config: &HubConfig, opts: Options) -> Result<Running, StartError> {
    config.validate().map_err(|e| StartError::Config(e.to_string()))?;
    let control = bind("control", &config.listen.control).await?;
    let http = bind("http", &config.listen.http).await?;
    let agent = bind("agent", &config.listen.agent).await?;
    let addr = |l: &TcpListener| l.local_addr().expect("bound listener has an address");
    let (control_addr, http_addr, agent_addr) = (addr(&control), addr(&http), addr(&agent));

    let log_path = fresh_log_path(&config.data_dir)?;
    let log = EventLog::create(&log_path).map_err(|source| StartError::DataDir { path: log_path.clone(), source })?;
    let start = opts.start.unwrap_or_else(|| match opts.clock {
        ClockMode::Wall => WallClock.now(),
        ClockMode::Manual => DEFAULT_SIM_EPOCH,
    });
    let hub = Hub::new(config, log, start).map_err(|e| StartError::Config(e.to_string()))?;
    let data_dir = hub.data_dir().to_path_buf();
    let (handle, hub_task) = actor::spawn(hub, opts.clock);

    let listeners = vec![
        tokio::spawn(crate::control::serve(control, handle.clone())),
        tokio::spawn(crate::http::serve(http, handle.clone(), data_dir)),
        tokio::spawn(crate::agent::serve(agent, handle.clone())),
    ];
    info!("control on {control_addr}, http on {http_addr}, agents on {agent_addr}");
    Ok(Running {
        hub: handle,
        control: control_addr,
        http: http_addr,
        agent: agent_addr,
        log_path,
        start,
        listeners,
        hub_task,
    })
}
