//! The hub: every subsystem behind one `&mut self`.
//!
//! The daemon owns a single [`Hub`] on one task and feeds it requests, sensor
//! readings and clock ticks in order, so there is exactly one serialization
//! point for state. Each committed effect is appended to the event log before
//! the call returns; pushes and agent lines produced along the way are queued
//! in [`Hub::take_outbound`] for the network layer to deliver.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::automation::{AssetTrack, AutoGate, AutomationError, OccupancyZone, PresenceOutcome, TankController};
use crate::clock::Timestamp;
use crate::config::{ConfigError, HubConfig};
use crate::control::{ErrCode, Principal, Push, Reply, Request, Topic};
use crate::desktop::{map_click, ClickOutcome, ClickReport, Desktop, DesktopError, DesktopModel, PowerAction, Resolution};
use crate::event::{attrs, DeviceSnapshot, Event, EventKind, EventLog, HubSnapshot};
use crate::grammar::{self, Action, AliasMap, AssetRef, Channel, GrammarError, Inventory, Target};
use crate::home::{Applied, Cause, Device, DeviceId, DeviceKind, DeviceState, DeviceVerb, GatePosition, HomeError, HomeModel};
use crate::mobile::{AgentToHub, Bridge, HubToAgent, MobileError, PhoneAgent, PhoneOp};
use crate::scenario::{ScenarioAction, ScenarioEvent};
use crate::security::{
    intrusion_sms_body, AlertTrigger, BeamEvent, Dispatch, FileOutbox, SecurityError, SecurityGuard, SmsGateway,
    SmsMessage, ALARM_TEXT,
};
use crate::surveillance::{CameraSpec, Frame, StreamQueue, Surveillance, SurveillanceError, Waker};

/// How long a remote phone agent has to answer before the request fails.
pub const AGENT_TIMEOUT_MS: i64 = 5_000;

/// Session id used for phone operations injected by scenario scripts.
pub const SCENARIO_SESSION: u64 = 0;

#[derive(Debug, Error)]
pub enum HubError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("event log: {0}")]
    Log(#[from] io::Error),
    #[error("unknown beam {0:?}")]
    UnknownBeam(String),
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("no tank controller configured")]
    NoTank,
    #[error(transparent)]
    Automation(#[from] AutomationError),
    #[error(transparent)]
    Home(#[from] HomeError),
    #[error(transparent)]
    Surveillance(#[from] SurveillanceError),
    #[error("phone {0:?} is already connected")]
    PhoneConnected(String),
    #[error("agent message from {phone}: {reason}")]
    Agent { phone: String, reason: String },
}

/// Something the network layer has to send on the hub's behalf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outbound {
    /// An `EVT` line for one session.
    Push { session: u64, line: String },
    /// The answer to a request that was [`LineOutcome::Deferred`].
    Reply { session: u64, reply: Reply },
    /// A line for a remote phone agent.
    Agent { phone: String, line: String },
}

#[derive(Debug)]
pub enum LineOutcome {
    Reply(Reply),
    /// The session now streams frames from `queue`; `reply` goes out first.
    Stream { reply: Reply, queue: Arc<StreamQueue> },
    /// Waiting on a remote phone; the reply arrives later as [`Outbound::Reply`].
    Deferred,
    /// Reply, then close the connection.
    Quit(Reply),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Timer {
    GateSettle { gate: DeviceId, generation: u64 },
    GateAutoClose { gate: DeviceId, generation: u64 },
    AgentTimeout { session: u64, nonce: u64 },
}

struct Session {
    channel: Channel,
    principal: Principal,
    peer: String,
    subs: BTreeSet<Topic>,
    stream: Option<Arc<StreamQueue>>,
    waker: Option<Waker>,
}

enum PendingKind {
    Pair,
    Op(PhoneOp),
}

struct Pending {
    phone: String,
    kind: PendingKind,
    nonce: u64,
}

enum CmdOutcome {
    Reply(Reply),
    Stream(String),
}

fn err(code: ErrCode, message: impl std::fmt::Display) -> Reply {
    Reply::err(code, message)
}

fn grammar_reply(e: &GrammarError) -> Reply {
    let code = match e {
        GrammarError::UnknownTarget(_) | GrammarError::AmbiguousTarget { .. } | GrammarError::UnknownAlias(_) => {
            ErrCode::Target
        }
        _ => ErrCode::Parse,
    };
    err(code, e)
}

fn home_reply(e: &HomeError) -> Reply {
    let code = match e {
        HomeError::IllegalVerb { .. } => ErrCode::Verb,
        HomeError::GateBusy(_) => ErrCode::State,
        HomeError::UnknownDevice(_) => ErrCode::Target,
        _ => ErrCode::Parse,
    };
    err(code, e)
}

fn security_reply(e: &SecurityError) -> Reply {
    let code = match e {
        SecurityError::BadNumber(_) => ErrCode::Parse,
        SecurityError::UnknownBeam(_) => ErrCode::Target,
        _ => ErrCode::State,
    };
    err(code, e)
}

fn desktop_reply(e: &DesktopError) -> Reply {
    let code = match e {
        DesktopError::Unavailable => ErrCode::Unavailable,
        DesktopError::UnknownCommand(_) => ErrCode::UnknownCmd,
        _ => ErrCode::Parse,
    };
    err(code, e)
}

fn mobile_reply(e: &MobileError) -> Reply {
    err(e.err_code(), e.message())
}

fn device_reply(device: &Device, state: DeviceState, unchanged: bool) -> Reply {
    let mut fields = vec![device.room.clone(), device.label.clone(), state.to_string()];
    if unchanged {
        fields.push("unchanged".into());
    }
    Reply::Ok(fields)
}

/// The state a config describes before anything happens; replay starts here.
pub fn initial_snapshot(config: &HubConfig) -> Result<HubSnapshot, ConfigError> {
    let mut snap = HubSnapshot::default();
    for seed in config.device_seeds()? {
        let device = Device { id: seed.id, kind: seed.kind, room: seed.room, label: seed.label, state: seed.state };
        snap.devices.insert(device.id.to_string(), DeviceSnapshot::from(&device));
    }
    if let Some(sec) = &config.security {
        if let Some(n) = &sec.owner_number {
            snap.owner_number = Some(n.clone());
            snap.security = crate::security::Phase::Ready.name().to_string();
        }
    }
    for z in &config.occupancy {
        snap.occupancy.insert(z.room.clone(), 0);
    }
    for a in &config.assets {
        snap.assets_inside.insert(a.id.clone(), true);
    }
    Ok(snap)
}

pub struct Hub {
    now: Timestamp,
    home: Arc<HomeModel>,
    log: EventLog,
    guard: Option<SecurityGuard>,
    security_camera: Option<String>,
    sms: Box<dyn SmsGateway>,
    data_dir: PathBuf,
    alerts: u64,
    cams: Surveillance,
    camera_devices: BTreeMap<DeviceId, String>,
    stream_capacity: usize,
    zones: Vec<OccupancyZone>,
    tank: Option<TankController>,
    gates: BTreeMap<DeviceId, AutoGate>,
    gate_travel_ms: i64,
    settle_generation: BTreeMap<DeviceId, u64>,
    assets: BTreeMap<String, AssetTrack>,
    aliases: AliasMap,
    owner_token: String,
    guest_token: Option<String>,
    desktop: Desktop,
    bridge: Bridge,
    local_phones: BTreeMap<String, PhoneAgent>,
    remote_phones: BTreeSet<String>,
    pending: BTreeMap<u64, Pending>,
    next_nonce: u64,
    sessions: BTreeMap<u64, Session>,
    next_session: u64,
    timers: BTreeMap<(Timestamp, u64), Timer>,
    next_timer: u64,
    outbound: Vec<Outbound>,
}

impl Hub {
    /// Builds the hub from a validated config and writes the startup records
    /// (devices, zones, assets, preset owner number, local phone links).
    pub fn new(config: &HubConfig, log: EventLog, start: Timestamp) -> Result<Hub, HubError> {
        config.validate()?;
        let home = Arc::new(HomeModel::new());
        for seed in config.device_seeds()? {
            home.restore(Device { id: seed.id, kind: seed.kind, room: seed.room, label: seed.label, state: seed.state })?;
        }
        let mut cams = Surveillance::new();
        let mut camera_devices = BTreeMap::new();
        for c in &config.cameras {
            cams.add_camera(CameraSpec { id: c.id.clone(), width: c.width, height: c.height, fps: c.fps }, start)?;
            if let Some(d) = &c.device {
                camera_devices.insert(d.parse().map_err(HubError::Home)?, c.id.clone());
            }
        }
        let t = &config.timing;
        let id = |s: &str| -> Result<DeviceId, HubError> { Ok(s.parse()?) };
        let mut zones = Vec::new();
        for z in &config.occupancy {
            let lights = z.lights.iter().map(|l| id(l)).collect::<Result<_, _>>()?;
            zones.push(OccupancyZone::new(&z.room, &z.outer, &z.inner, t.pairing_window_ms, lights));
        }
        let tank = match &config.tank {
            Some(tk) => Some(TankController::new(tk.low, tk.high, id(&tk.pump)?)?),
            None => None,
        };
        let mut gates = BTreeMap::new();
        for g in &config.gates {
            let gate = id(&g.device)?;
            gates.insert(gate, AutoGate::new(gate, g.auto_close_ms.unwrap_or(t.gate_auto_close_ms), g.fobs.clone()));
        }
        let mut assets = BTreeMap::new();
        for a in &config.assets {
            assets.insert(a.id.clone(), AssetTrack::new(&a.id, &a.label, (a.lat, a.lon), a.radius_m)?);
        }
        let guard = config
            .security
            .as_ref()
            .map(|s| SecurityGuard::new(s.zone.clone(), s.beams.iter().cloned(), t.debounce_ms));
        let data_dir = config.data_dir.clone();
        let mut hub = Hub {
            now: start,
            home,
            log,
            guard,
            security_camera: config.security.as_ref().map(|s| s.camera.clone()),
            sms: Box::new(FileOutbox::new(data_dir.join("outbox.sms"))),
            data_dir,
            alerts: 0,
            cams,
            camera_devices,
            stream_capacity: t.stream_queue,
            zones,
            tank,
            gates,
            gate_travel_ms: t.gate_travel_ms,
            settle_generation: BTreeMap::new(),
            assets,
            aliases: config.aliases.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            owner_token: config.auth.owner.clone(),
            guest_token: config.auth.guest.clone(),
            desktop: config.desktop_model()?,
            bridge: Bridge::new(),
            local_phones: config.phones.iter().map(|p| (p.id.clone(), PhoneAgent::new(p.clone()))).collect(),
            remote_phones: BTreeSet::new(),
            pending: BTreeMap::new(),
            next_nonce: 0,
            sessions: BTreeMap::new(),
            next_session: 0,
            timers: BTreeMap::new(),
            next_timer: 0,
            outbound: Vec::new(),
        };
        hub.startup_records(config)?;
        Ok(hub)
    }

    fn startup_records(&mut self, config: &HubConfig) -> Result<(), HubError> {
        for d in self.home.snapshot() {
            self.record(
                EventKind::DeviceRegistered,
                d.id.to_string(),
                attrs([
                    ("kind", d.kind.name().into()),
                    ("room", d.room.clone()),
                    ("label", d.label.clone()),
                    ("state", d.state.to_string()),
                ]),
            )?;
        }
        for i in 0..self.zones.len() {
            let z = &self.zones[i];
            let a = attrs([("outer", z.outer.clone()), ("inner", z.inner.clone())]);
            let room = z.room.clone();
            self.record(EventKind::ZoneRegistered, room, a)?;
        }
        let assets: Vec<(String, String)> = self.assets.values().map(|a| (a.id.clone(), a.label.clone())).collect();
        for (id, label) in assets {
            self.record(EventKind::AssetRegistered, id, attrs([("label", label)]))?;
        }
        if let (Some(guard), Some(n)) = (self.guard.as_mut(), config.security.as_ref().and_then(|s| s.owner_number.as_ref())) {
            guard.set_owner_number(n).map_err(|e| ConfigError::Validation(e.to_string()))?;
            self.record(EventKind::OwnerNumberSet, n.clone(), attrs([("rule", "config".into())]))?;
        }
        let phones: Vec<String> = self.local_phones.keys().cloned().collect();
        for p in phones {
            self.bridge.link_up(&p);
            self.record(EventKind::PhoneLink, p, attrs([("link", "up".into()), ("agent", "local".into())]))?;
        }
        Ok(())
    }

    pub fn set_gateway(&mut self, gateway: Box<dyn SmsGateway>) {
        self.sms = gateway;
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn home(&self) -> &Arc<HomeModel> {
        &self.home
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.log.flush()
    }

    pub fn local_phone(&self, id: &str) -> Option<&PhoneAgent> {
        self.local_phones.get(id)
    }

    pub fn take_outbound(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbound)
    }

    pub fn camera_spec(&self, camera: &str) -> Option<&CameraSpec> {
        self.cams.spec(camera)
    }

    pub fn inventory(&self) -> Inventory {
        Inventory::new(
            self.home.snapshot(),
            self.assets.values().map(|a| AssetRef { id: a.id.clone(), label: a.label.clone() }).collect(),
        )
    }

    // ---- logging and pushes

    fn record(&mut self, kind: EventKind, subject: impl Into<String>, attrs: Vec<(String, String)>) -> io::Result<Event> {
        let event = self.log.append(self.now, kind, subject, attrs)?;
        if let Some(topic) = kind.topic() {
            let line = Push { topic, fields: event.fields() }.render();
            for (id, s) in &self.sessions {
                if s.subs.contains(&topic) {
                    self.outbound.push(Outbound::Push { session: *id, line: line.clone() });
                }
            }
        }
        Ok(event)
    }

    /// Logs a command's effect; a failing log write surfaces as an error reply.
    fn record_or_reply(
        &mut self,
        kind: EventKind,
        subject: impl Into<String>,
        attrs: Vec<(String, String)>,
    ) -> Result<Event, Reply> {
        self.record(kind, subject, attrs).map_err(|e| err(ErrCode::Unavailable, format!("event log: {e}")))
    }

    fn record_change(&mut self, applied: &Applied) -> io::Result<()> {
        if let Applied::Changed(change) = applied {
            let mut a = attrs([("from", change.old.to_string()), ("to", change.new.to_string())]);
            a.extend(change.cause.fields());
            self.record(EventKind::StateChange, change.device.to_string(), a)?;
            if let DeviceState::Gate(GatePosition::Opening | GatePosition::Closing) = change.new {
                let generation = self.settle_generation.entry(change.device).or_insert(0);
                *generation += 1;
                let timer = Timer::GateSettle { gate: change.device, generation: *generation };
                self.schedule(self.now.plus_millis(self.gate_travel_ms), timer);
            }
        }
        Ok(())
    }

    fn apply_rule(&mut self, device: DeviceId, verb: DeviceVerb, rule: &str) -> Result<Applied, HubError> {
        let applied = self.home.apply(device, verb, Cause::rule(rule), self.now)?;
        self.record_change(&applied)?;
        Ok(applied)
    }

    // ---- time

    fn schedule(&mut self, at: Timestamp, timer: Timer) {
        self.next_timer += 1;
        self.timers.insert((at, self.next_timer), timer);
    }

    /// Earliest moment the hub has work scheduled (a timer or a camera frame).
    pub fn next_deadline(&self) -> Option<Timestamp> {
        let timer = self.timers.keys().next().map(|(t, _)| *t);
        match (timer, self.cams.next_due()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn next_timer(&self) -> Option<Timestamp> {
        self.timers.keys().next().map(|(t, _)| *t)
    }

    /// Moves hub time forward, firing timers and producing camera frames in time order.
    pub fn advance_to(&mut self, t: Timestamp) -> Result<(), HubError> {
        while let Some((&(at, key), _)) = self.timers.iter().next() {
            if at > t {
                break;
            }
            let timer = self.timers.remove(&(at, key)).expect("timer just seen");
            self.cams.run_until(at);
            self.now = self.now.max(at);
            self.fire(timer)?;
        }
        self.cams.run_until(t);
        self.now = self.now.max(t);
        Ok(())
    }

    /// Runs until no timers remain. Sim runs call this after the last scripted event.
    pub fn settle(&mut self) -> Result<(), HubError> {
        while let Some(t) = self.next_timer() {
            self.advance_to(t)?;
        }
        Ok(())
    }

    fn fire(&mut self, timer: Timer) -> Result<(), HubError> {
        match timer {
            Timer::GateSettle { gate, generation } => {
                if self.settle_generation.get(&gate) == Some(&generation) {
                    let applied = self.home.settle_gate(gate, Cause::rule("gate"), self.now)?;
                    self.record_change(&applied)?;
                }
            }
            Timer::GateAutoClose { gate, generation } => {
                if self.gates.get(&gate).is_some_and(|g| g.is_current(generation)) {
                    match self.home.apply(gate, DeviceVerb::Close, Cause::rule("gate"), self.now) {
                        Ok(applied) => self.record_change(&applied)?,
                        // Still travelling open; try again once it has had time to finish.
                        Err(HomeError::GateBusy(_)) => {
                            self.schedule(self.now.plus_millis(self.gate_travel_ms), timer);
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            Timer::AgentTimeout { session, nonce } => {
                if self.pending.get(&session).is_some_and(|p| p.nonce == nonce) {
                    let p = self.pending.remove(&session).expect("pending just seen");
                    let reply = mobile_reply(&MobileError::PhoneUnreachable(p.phone));
                    self.outbound.push(Outbound::Reply { session, reply });
                }
            }
        }
        Ok(())
    }

    // ---- sessions

    pub fn open_session(&mut self, peer: &str, channel: Channel, waker: Option<Waker>) -> u64 {
        self.next_session += 1;
        self.sessions.insert(
            self.next_session,
            Session {
                channel,
                principal: Principal::Unauthenticated,
                peer: peer.to_string(),
                subs: BTreeSet::new(),
                stream: None,
                waker,
            },
        );
        self.next_session
    }

    pub fn close_session(&mut self, id: u64) -> Result<(), HubError> {
        self.stop_stream(id)?;
        if let Some((phone, line)) = self.bridge.sever(id) {
            self.record(EventKind::PhoneSever, phone.clone(), attrs([("session", id.to_string())]))?;
            if let Some(line) = line {
                self.send_agent_line(&phone, &line);
            }
        }
        self.pending.remove(&id);
        self.sessions.remove(&id);
        Ok(())
    }

    pub fn session_principal(&self, id: u64) -> Option<Principal> {
        self.sessions.get(&id).map(|s| s.principal)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    fn cause_fields(&self, session: u64) -> Vec<(String, String)> {
        match self.sessions.get(&session) {
            Some(s) => Cause::Command { channel: s.channel, principal: s.principal }.fields(),
            None => Cause::Command { channel: Channel::Local, principal: Principal::Owner }.fields(),
        }
    }

    /// Handles one request line from a control session.
    pub fn handle_line(&mut self, session: u64, line: &str) -> LineOutcome {
        let Some(s) = self.sessions.get(&session) else {
            return LineOutcome::Quit(err(ErrCode::State, "no such session"));
        };
        if line.len() > crate::control::MAX_LINE {
            return LineOutcome::Reply(err(ErrCode::TooLong, format!("line exceeds {} bytes", crate::control::MAX_LINE)));
        }
        let request = match Request::parse(line) {
            Ok(r) => r,
            Err(reply) => return LineOutcome::Reply(reply),
        };
        let principal = s.principal;
        if !request.is_open() && !principal.is_authenticated() {
            return LineOutcome::Reply(err(ErrCode::Auth, "authenticate first"));
        }
        if request.owner_only() && principal != Principal::Owner {
            return LineOutcome::Reply(err(ErrCode::Denied, format!("{} needs the owner", request.verb())));
        }
        let reply = match request {
            Request::Ping => Reply::ok(["pong"]),
            Request::Quit => return LineOutcome::Quit(Reply::ok(["BYE"])),
            Request::Auth { token, channel } => self.auth(session, &token, channel),
            Request::Cmd(text) => {
                let (channel, principal) = (s.channel, s.principal);
                match self.run_command(&text, channel, principal, Some(session)) {
                    Ok(CmdOutcome::Reply(r)) => r,
                    Ok(CmdOutcome::Stream(camera)) => return self.start_stream(session, &camera),
                    Err(r) => r,
                }
            }
            Request::Sub(topic) => {
                self.sessions.get_mut(&session).expect("session exists").subs.insert(topic);
                Reply::ok([topic.name()])
            }
            Request::Stream(camera) => return self.start_stream(session, &camera),
            Request::Stop => match self.stop_stream(session) {
                Ok(true) => Reply::ok(["STOPPED"]),
                Ok(false) => err(ErrCode::State, "not streaming"),
                Err(e) => err(ErrCode::Unavailable, e),
            },
            Request::Owner(number) => self.set_owner(&number, session),
            Request::Desk => match self.desktop.model() {
                Ok(m) => desk_reply(&m),
                Err(e) => desktop_reply(&e),
            },
            Request::Click { x, y, width, height } => {
                let report = ClickReport { x, y, viewport: Resolution::new(width, height) };
                self.click(report, session).unwrap_or_else(|r| r)
            }
            Request::Exec(line) => self.exec(&line, session).unwrap_or_else(|r| r),
            Request::Power(action) => self.power(action, session).unwrap_or_else(|r| r),
            Request::Pair(phone) => return self.pair(session, &phone),
            Request::Phone(op) => return self.phone_op(session, op),
        };
        LineOutcome::Reply(reply)
    }

    fn auth(&mut self, session: u64, token: &str, channel: Option<Channel>) -> Reply {
        let principal = if *token == self.owner_token {
            Principal::Owner
        } else if self.guest_token.as_deref() == Some(token) {
            Principal::Guest
        } else {
            Principal::Unauthenticated
        };
        let s = self.sessions.get_mut(&session).expect("session exists");
        if let Some(c) = channel {
            s.channel = c;
        }
        let peer = s.peer.clone();
        let channel = s.channel;
        if principal == Principal::Unauthenticated {
            let _ = self.record(
                EventKind::SessionAuthFailed,
                session.to_string(),
                attrs([("channel", channel.name().into()), ("peer", peer)]),
            );
            return err(ErrCode::Auth, "invalid token");
        }
        s.principal = principal;
        if let Err(e) = self.record(
            EventKind::SessionAuth,
            session.to_string(),
            attrs([("channel", channel.name().into()), ("principal", principal.name().into()), ("peer", peer)]),
        ) {
            return err(ErrCode::Unavailable, format!("event log: {e}"));
        }
        Reply::ok([principal.name(), channel.name()])
    }

    /// Runs a command phrase on behalf of a channel and principal. Used by the
    /// control protocol, the HTTP facade and scenario scripts.
    pub fn execute_command(&mut self, text: &str, channel: Channel, principal: Principal) -> Reply {
        match self.run_command(text, channel, principal, None) {
            Ok(CmdOutcome::Reply(r)) => r,
            Ok(CmdOutcome::Stream(camera)) => Reply::ok([camera]),
            Err(r) => r,
        }
    }

    fn run_command(
        &mut self,
        text: &str,
        channel: Channel,
        principal: Principal,
        session: Option<u64>,
    ) -> Result<CmdOutcome, Reply> {
        let parsed = if channel == Channel::Sms {
            grammar::parse_compact(text, &self.aliases)
        } else {
            grammar::parse(text, channel)
        }
        .map_err(|e| grammar_reply(&e))?;
        let command = grammar::bind(&parsed, &self.inventory(), principal).map_err(|e| grammar_reply(&e))?;
        let cause = Cause::Command { channel, principal };
        let who = cause.fields();
        let reply = match (command.action, command.target) {
            (Action::Device(verb), Target::Device(id)) => {
                let applied = self.home.apply(id, verb, cause, self.now).map_err(|e| home_reply(&e))?;
                self.record_change(&applied).map_err(|e| err(ErrCode::Unavailable, format!("event log: {e}")))?;
                let device = self.home.get(id).ok_or_else(|| err(ErrCode::Target, "device vanished"))?;
                device_reply(&device, applied.state(), matches!(applied, Applied::NoOp(_)))
            }
            (Action::StartScanning | Action::StopScanning, _) if principal != Principal::Owner => {
                return Err(err(ErrCode::Denied, "arming and disarming need the owner"));
            }
            (Action::StartScanning, _) => {
                let guard = self.guard.as_mut().ok_or_else(|| err(ErrCode::Unavailable, "no security zone configured"))?;
                let phase = guard.start_scanning().map_err(|e| security_reply(&e))?;
                let zone = guard.zone().to_string();
                self.record_or_reply(EventKind::Armed, zone, who)?;
                Reply::ok([phase.name()])
            }
            (Action::StopScanning, _) => {
                let guard = self.guard.as_mut().ok_or_else(|| err(ErrCode::Unavailable, "no security zone configured"))?;
                let phase = guard.stop_scanning().map_err(|e| security_reply(&e))?;
                let zone = guard.zone().to_string();
                self.record_or_reply(EventKind::Disarmed, zone, who)?;
                Reply::ok([phase.name()])
            }
            (Action::Status, Target::Device(id)) => {
                let device = self.home.get(id).ok_or_else(|| err(ErrCode::Target, "device vanished"))?;
                device_reply(&device, device.state, false)
            }
            (Action::Status, _) => {
                let mut fields = Vec::new();
                for d in self.home.snapshot() {
                    fields.extend([d.id.to_string(), d.room, d.label, d.state.to_string()]);
                }
                Reply::Ok(fields)
            }
            (Action::Stream, Target::Device(id)) => {
                let camera = self
                    .camera_devices
                    .get(&id)
                    .cloned()
                    .ok_or_else(|| err(ErrCode::Camera, format!("device {id} has no camera feed")))?;
                if session.is_some() {
                    return Ok(CmdOutcome::Stream(camera));
                }
                Reply::ok([camera])
            }
            (Action::Locate, Target::Asset(asset)) => {
                let track = self.assets.get(&asset).ok_or_else(|| err(ErrCode::Target, "unknown asset"))?;
                let fix = track.last_fix().ok_or_else(|| err(ErrCode::NoFix, format!("no fix for {asset} yet")))?;
                let side = if track.inside() { "inside" } else { "outside" };
                Reply::Ok(vec![format!("{asset} {:.6} {:.6} {} {side}", fix.lat, fix.lon, fix.at.iso())])
            }
            _ => return Err(err(ErrCode::Parse, "unsupported command")),
        };
        Ok(CmdOutcome::Reply(reply))
    }

    fn set_owner(&mut self, number: &str, session: u64) -> Reply {
        let Some(guard) = self.guard.as_mut() else {
            return err(ErrCode::Unavailable, "no security zone configured");
        };
        match guard.set_owner_number(number) {
            Ok(phase) => {
                let who = self.cause_fields(session);
                match self.record_or_reply(EventKind::OwnerNumberSet, number, who) {
                    Ok(_) => Reply::ok([phase.name()]),
                    Err(r) => r,
                }
            }
            Err(e) => security_reply(&e),
        }
    }

    // ---- streaming

    fn start_stream(&mut self, session: u64, camera: &str) -> LineOutcome {
        let s = self.sessions.get(&session).expect("session exists");
        if s.stream.is_some() {
            return LineOutcome::Reply(err(ErrCode::State, "already streaming; send STOP first"));
        }
        let waker = s.waker.clone();
        let queue = match self.cams.open_stream(camera, self.stream_capacity, waker) {
            Ok(q) => q,
            Err(e) => return LineOutcome::Reply(err(ErrCode::Camera, e)),
        };
        let spec = self.cams.spec(camera).expect("camera exists").clone();
        self.sessions.get_mut(&session).expect("session exists").stream = Some(Arc::clone(&queue));
        let mut a = attrs([("session", session.to_string())]);
        a.extend(self.cause_fields(session));
        if let Err(e) = self.record(EventKind::StreamOpen, camera, a) {
            return LineOutcome::Reply(err(ErrCode::Unavailable, format!("event log: {e}")));
        }
        let reply = Reply::ok(["STREAM".to_string(), spec.width.to_string(), spec.height.to_string()]);
        LineOutcome::Stream { reply, queue }
    }

    fn stop_stream(&mut self, session: u64) -> Result<bool, HubError> {
        let Some(queue) = self.sessions.get_mut(&session).and_then(|s| s.stream.take()) else {
            return Ok(false);
        };
        let stats = queue.stats();
        self.cams.close_stream(&queue);
        self.record(
            EventKind::StreamClose,
            queue.camera(),
            attrs([
                ("session", session.to_string()),
                ("delivered", stats.delivered.to_string()),
                ("dropped", stats.dropped.to_string()),
            ]),
        )?;
        Ok(true)
    }

    /// The newest frame of a camera, without disturbing any stream.
    pub fn camera_snapshot(&mut self, camera: &str) -> Result<Frame, SurveillanceError> {
        self.cams.capture(camera, self.now)
    }

    // ---- security and sensors

    pub fn beam(&mut self, beam: &str, broken: bool) -> Result<(), HubError> {
        let mut known = false;
        if let Some(guard) = self.guard.as_mut() {
            if guard.has_beam(beam) {
                known = true;
                let trigger = guard
                    .on_beam(&BeamEvent { beam: beam.to_string(), broken, at: self.now })
                    .expect("beam belongs to the zone");
                if let Some(trigger) = trigger {
                    self.intrusion(trigger)?;
                }
            }
        }
        if let Some(i) = self.zones.iter().position(|z| z.has_beam(beam)) {
            known = true;
            if broken {
                let outcome = self.zones[i].on_beam(beam, self.now)?;
                let room = self.zones[i].room.clone();
                if outcome.delta != 0 {
                    self.record(
                        EventKind::Occupancy,
                        room.clone(),
                        attrs([("count", outcome.count.to_string()), ("delta", outcome.delta.to_string())]),
                    )?;
                }
                if outcome.anomaly {
                    self.record(EventKind::OccupancyAnomaly, room, attrs([("reason", "exit with nobody inside".into())]))?;
                }
                if let Some(verb) = outcome.lights {
                    for light in self.zones[i].lights.clone() {
                        self.apply_rule(light, verb, "occupancy")?;
                    }
                }
            }
        }
        if known {
            Ok(())
        } else {
            Err(HubError::UnknownBeam(beam.to_string()))
        }
    }

    fn intrusion(&mut self, trigger: AlertTrigger) -> Result<(), HubError> {
        self.alerts += 1;
        self.record(
            EventKind::Alert,
            trigger.zone.clone(),
            attrs([("alarm", ALARM_TEXT.into()), ("beams", trigger.beams.join(","))]),
        )?;
        let body = intrusion_sms_body(&trigger.zone, trigger.at);
        self.dispatch_sms(trigger.owner.as_str(), body, "intrusion")?;
        let image = self.store_intrusion_image();
        match image {
            Ok((path, frame)) => {
                self.record(
                    EventKind::ImageStored,
                    path.display().to_string(),
                    attrs([("camera", frame.camera.to_string()), ("seq", frame.seq.to_string())]),
                )?;
            }
            Err(reason) => {
                self.record(EventKind::ImageStored, "-", attrs([("error", reason)]))?;
            }
        }
        Ok(())
    }

    fn dispatch_sms(&mut self, to: &str, body: String, reason: &str) -> io::Result<Dispatch> {
        let message = SmsMessage { at: self.now, to: to.to_string(), body: body.clone() };
        let dispatch = match self.sms.send(&message) {
            Ok(()) => Dispatch::Sent,
            Err(e) => Dispatch::Failed(e.to_string()),
        };
        let mut a = attrs([("result", dispatch.name().into()), ("body", body)]);
        a.push(("reason".into(), reason.into()));
        if let Dispatch::Failed(why) = &dispatch {
            a.push(("error".into(), why.clone()));
        }
        self.record(EventKind::SmsDispatch, to, a)?;
        Ok(dispatch)
    }

    /// Writes the intrusion frame and returns its path relative to the data dir.
    fn store_intrusion_image(&mut self) -> Result<(PathBuf, Frame), String> {
        let camera = self.security_camera.clone().ok_or("no security camera")?;
        let frame = self.cams.capture(&camera, self.now).map_err(|e| e.to_string())?;
        let stem = format!("{}-{camera}", self.now.iso());
        let mut rel = PathBuf::from("intrusions").join(format!("{stem}.pgm"));
        let mut k = 1;
        while self.data_dir.join(&rel).exists() {
            rel = PathBuf::from("intrusions").join(format!("{stem}-{k}.pgm"));
            k += 1;
        }
        frame.write_pgm(&self.data_dir.join(&rel)).map_err(|e| e.to_string())?;
        Ok((rel, frame))
    }

    pub fn tank_level(&mut self, level: f64) -> Result<(), HubError> {
        let tank = self.tank.as_mut().ok_or(HubError::NoTank)?;
        let pump = tank.pump;
        let on = matches!(self.home.get(pump).map(|d| d.state), Some(DeviceState::Binary(true)));
        if let Some(verb) = tank.on_level(level, on)? {
            self.apply_rule(pump, verb, "tank")?;
        }
        Ok(())
    }

    pub fn presence(&mut self, gate: &str, fob: &str) -> Result<(), HubError> {
        let id: DeviceId = gate.parse().map_err(|_| HubError::UnknownGate(gate.to_string()))?;
        let auto = self.gates.get_mut(&id).ok_or_else(|| HubError::UnknownGate(gate.to_string()))?;
        match auto.on_presence(fob, self.now) {
            PresenceOutcome::Denied => {
                self.record(EventKind::PresenceDenied, gate, attrs([("fob", fob.to_string())]))?;
            }
            PresenceOutcome::Open { close_at, generation } => {
                self.record(EventKind::Presence, gate, attrs([("fob", fob.to_string())]))?;
                self.apply_rule(id, DeviceVerb::Open, "gate")?;
                self.schedule(close_at, Timer::GateAutoClose { gate: id, generation });
            }
        }
        Ok(())
    }

    pub fn gps_fix(&mut self, asset: &str, lat: f64, lon: f64) -> Result<(), HubError> {
        let track = self.assets.get_mut(asset).ok_or_else(|| AutomationError::UnknownAsset(asset.to_string()))?;
        let outcome = track.on_fix(lat, lon, self.now)?;
        let label = track.label.clone();
        self.record(
            EventKind::GpsFix,
            asset,
            attrs([
                ("lat", format!("{lat:.6}")),
                ("lon", format!("{lon:.6}")),
                ("inside", outcome.inside.to_string()),
                ("distance_m", format!("{:.1}", outcome.distance_m)),
            ]),
        )?;
        if outcome.exited {
            self.record(EventKind::GeofenceExit, asset, attrs([("distance_m", format!("{:.1}", outcome.distance_m))]))?;
            let owner = self.guard.as_ref().and_then(|g| g.owner()).map(|m| m.as_str().to_string());
            let body = format!("{label} left its safe area at {}", self.now.iso());
            match owner {
                Some(to) => {
                    self.dispatch_sms(&to, body, "geofence")?;
                }
                None => {
                    self.record(
                        EventKind::SmsDispatch,
                        "-",
                        attrs([("result", "failed".into()), ("reason", "geofence".into()), ("error", "no owner number".into())]),
                    )?;
                }
            }
        }
        Ok(())
    }

    // ---- desktop

    pub fn desktop_model(&self) -> Result<DesktopModel, DesktopError> {
        self.desktop.model()
    }

    fn click(&mut self, report: ClickReport, session: u64) -> Result<Reply, Reply> {
        let outcome = self.desktop.click(report).map_err(|e| desktop_reply(&e))?;
        let (xs, ys) = map_click(report, self.desktop.resolution()).expect("click already mapped");
        let mut a = attrs([("x", xs.to_string()), ("y", ys.to_string())]);
        let reply = match &outcome {
            ClickOutcome::Hit { icon, app, running } => {
                a.push(("icon".into(), icon.clone()));
                let state = if *running { "running" } else { "stopped" };
                Reply::Ok(vec!["hit".into(), icon.clone(), app.clone(), state.into(), xs.to_string(), ys.to_string()])
            }
            ClickOutcome::Miss { .. } => Reply::Ok(vec!["miss".into(), xs.to_string(), ys.to_string()]),
        };
        a.extend(self.cause_fields(session));
        self.record_or_reply(EventKind::DesktopClick, "desktop", a)?;
        Ok(reply)
    }

    fn exec(&mut self, line: &str, session: u64) -> Result<Reply, Reply> {
        let result = self.desktop.exec(line, self.now);
        let mut a = attrs([("line", line.to_string()), ("ok", result.is_ok().to_string())]);
        a.extend(self.cause_fields(session));
        if !matches!(result, Err(DesktopError::Unavailable)) {
            self.record_or_reply(EventKind::DesktopExec, "desktop", a)?;
        }
        result.map(Reply::Ok).map_err(|e| desktop_reply(&e))
    }

    fn power(&mut self, action: PowerAction, session: u64) -> Result<Reply, Reply> {
        self.desktop.power(action).map_err(|e| desktop_reply(&e))?;
        let mut a = attrs([("action", action.name().into())]);
        a.extend(self.cause_fields(session));
        self.record_or_reply(EventKind::Power, "desktop", a)?;
        if action == PowerAction::Logoff {
            for s in self.sessions.values_mut() {
                s.principal = Principal::Unauthenticated;
            }
        }
        Ok(Reply::ok([action.name()]))
    }

    // ---- virtual mobile

    fn send_agent_line(&mut self, phone: &str, msg: &HubToAgent) {
        if self.local_phones.contains_key(phone) {
            return;
        }
        self.outbound.push(Outbound::Agent { phone: phone.to_string(), line: msg.render() });
    }

    /// Hands a hub line to a phone. Local agents answer immediately through the
    /// same line codec remote agents use; remote ones answer later.
    fn deliver_to_agent(&mut self, session: u64, phone: &str, msg: HubToAgent, kind: PendingKind) -> LineOutcome {
        if let Some(agent) = self.local_phones.get_mut(phone) {
            let line = msg.render();
            let answer = HubToAgent::parse(&line).ok().and_then(|m| agent.respond(&m)).map(|a| a.render());
            self.next_nonce += 1;
            self.pending.insert(session, Pending { phone: phone.to_string(), kind, nonce: self.next_nonce });
            let reply = match answer.map(|l| AgentToHub::parse(&l)) {
                Some(Ok(answer)) => self.agent_answer(phone, answer),
                _ => Some((session, err(ErrCode::Unavailable, "phone agent gave no answer"))),
            };
            self.pending.remove(&session);
            return match reply {
                Some((_, r)) => LineOutcome::Reply(r),
                None => LineOutcome::Reply(err(ErrCode::Unavailable, "phone agent gave no answer")),
            };
        }
        self.next_nonce += 1;
        let nonce = self.next_nonce;
        self.pending.insert(session, Pending { phone: phone.to_string(), kind, nonce });
        self.schedule(self.now.plus_millis(AGENT_TIMEOUT_MS), Timer::AgentTimeout { session, nonce });
        self.send_agent_line(phone, &msg);
        LineOutcome::Deferred
    }

    fn pair(&mut self, session: u64, phone: &str) -> LineOutcome {
        let msg = match self.bridge.request_pair(session, phone) {
            Ok(m) => m,
            Err(e) => return LineOutcome::Reply(mobile_reply(&e)),
        };
        let mut a = attrs([("session", session.to_string())]);
        a.extend(self.cause_fields(session));
        if let Err(e) = self.record(EventKind::PhonePair, phone, a) {
            return LineOutcome::Reply(err(ErrCode::Unavailable, format!("event log: {e}")));
        }
        self.deliver_to_agent(session, phone, msg, PendingKind::Pair)
    }

    fn phone_op(&mut self, session: u64, op: PhoneOp) -> LineOutcome {
        match self.bridge.op(session, op.clone()) {
            Ok((phone, msg)) => self.deliver_to_agent(session, &phone, msg, PendingKind::Op(op)),
            Err(e) => {
                if let MobileError::LinkLost(phone) = &e {
                    let _ = self.record(
                        EventKind::PhoneOp,
                        phone.clone(),
                        attrs([("session", session.to_string()), ("op", op.name().into()), ("result", e.err_code().name().into())]),
                    );
                }
                LineOutcome::Reply(mobile_reply(&e))
            }
        }
    }

    /// Turns an agent answer into the reply owed to the waiting session.
    fn agent_answer(&mut self, phone: &str, answer: AgentToHub) -> Option<(u64, Reply)> {
        let sid = match &answer {
            AgentToHub::Accept { sid } | AgentToHub::Reject { sid } | AgentToHub::Result { sid, .. } => *sid,
            AgentToHub::Hello { .. } | AgentToHub::Bye => return None,
        };
        let pending = self.pending.get(&sid).filter(|p| p.phone == phone)?;
        let reply = match (&pending.kind, answer) {
            (PendingKind::Pair, AgentToHub::Accept { .. }) => match self.bridge.pair_answer(sid, true) {
                Ok(phone) => {
                    let _ = self.record(EventKind::PhoneAccepted, phone.clone(), attrs([("session", sid.to_string())]));
                    Reply::ok(["paired".to_string(), phone])
                }
                Err(e) => mobile_reply(&e),
            },
            (PendingKind::Pair, AgentToHub::Reject { .. }) => {
                let e = self.bridge.pair_answer(sid, false).expect_err("rejection never pairs");
                let _ = self.record(EventKind::PhoneRejected, phone, attrs([("session", sid.to_string())]));
                mobile_reply(&e)
            }
            (PendingKind::Op(op), AgentToHub::Result { result, .. }) => {
                let outcome = match &result {
                    Ok(_) => "OK".to_string(),
                    Err(e) => e.err_code().name().to_string(),
                };
                let name = op.name();
                let _ = self.record(
                    EventKind::PhoneOp,
                    phone,
                    attrs([("session", sid.to_string()), ("op", name.into()), ("result", outcome)]),
                );
                match result {
                    Ok(fields) => Reply::Ok(fields),
                    Err(e) => mobile_reply(&e),
                }
            }
            _ => return None,
        };
        Some((sid, reply))
    }

    /// A remote agent said `HELLO`.
    pub fn agent_connected(&mut self, phone: &str) -> Result<(), HubError> {
        if self.local_phones.contains_key(phone) || self.remote_phones.contains(phone) {
            return Err(HubError::PhoneConnected(phone.to_string()));
        }
        self.remote_phones.insert(phone.to_string());
        self.bridge.link_up(phone);
        self.record(EventKind::PhoneLink, phone, attrs([("link", "up".into()), ("agent", "remote".into())]))?;
        Ok(())
    }

    /// A line from a connected remote agent.
    pub fn agent_line(&mut self, phone: &str, line: &str) -> Result<(), HubError> {
        let answer = AgentToHub::parse(line).map_err(|e| HubError::Agent { phone: phone.into(), reason: e.to_string() })?;
        if answer == AgentToHub::Bye {
            return self.agent_disconnected(phone);
        }
        if let Some((session, reply)) = self.agent_answer(phone, answer) {
            self.pending.remove(&session);
            self.outbound.push(Outbound::Reply { session, reply });
        }
        Ok(())
    }

    pub fn agent_disconnected(&mut self, phone: &str) -> Result<(), HubError> {
        if self.remote_phones.remove(phone) {
            self.link_down(phone)?;
        }
        Ok(())
    }

    /// The phone switched its link off: every pairing with it closes and any
    /// request in flight fails with a lost link.
    pub fn link_down(&mut self, phone: &str) -> Result<(), HubError> {
        if !self.bridge.is_up(phone) {
            return Ok(());
        }
        let lost = self.bridge.link_down(phone);
        let event = self.record(EventKind::PhoneLink, phone, attrs([("link", "down".into())]))?;
        let line = Push { topic: Topic::State, fields: event.fields() }.render();
        for sid in lost {
            let subscribed = self.sessions.get(&sid).is_some_and(|s| s.subs.contains(&Topic::State));
            if !subscribed && self.sessions.contains_key(&sid) {
                self.outbound.push(Outbound::Push { session: sid, line: line.clone() });
            }
        }
        let waiting: Vec<u64> = self.pending.iter().filter(|(_, p)| p.phone == phone).map(|(s, _)| *s).collect();
        for session in waiting {
            self.pending.remove(&session);
            let reply = mobile_reply(&MobileError::LinkLost(phone.to_string()));
            self.outbound.push(Outbound::Reply { session, reply });
        }
        Ok(())
    }

    pub fn link_up(&mut self, phone: &str) -> Result<(), HubError> {
        if !self.local_phones.contains_key(phone) {
            return Err(HubError::Agent { phone: phone.into(), reason: "not a local phone".into() });
        }
        if !self.bridge.is_up(phone) {
            self.bridge.link_up(phone);
            self.record(EventKind::PhoneLink, phone, attrs([("link", "up".into()), ("agent", "local".into())]))?;
        }
        Ok(())
    }

    // ---- scenario injection

    /// Applies one scripted event at the current hub time. Command replies are
    /// returned so the runner can report them; they never abort the run.
    pub fn apply_scenario(&mut self, action: &ScenarioAction) -> Result<Option<Reply>, HubError> {
        Ok(match action {
            ScenarioAction::Beam { beam, broken } => {
                self.beam(beam, *broken)?;
                None
            }
            ScenarioAction::Tank { level } => {
                self.tank_level(*level)?;
                None
            }
            ScenarioAction::Gps { asset, lat, lon } => {
                self.gps_fix(asset, *lat, *lon)?;
                None
            }
            ScenarioAction::Presence { gate, fob } => {
                self.presence(gate, fob)?;
                None
            }
            ScenarioAction::Cmd { channel, text } => Some(self.execute_command(text, *channel, Principal::Owner)),
            ScenarioAction::Owner { number } => Some(self.set_owner(number, SCENARIO_SESSION)),
            ScenarioAction::PhoneLink { phone, up: true } => {
                self.link_up(phone)?;
                None
            }
            ScenarioAction::PhoneLink { phone, up: false } => {
                self.link_down(phone)?;
                None
            }
            ScenarioAction::PhonePair { phone } => Some(outcome_reply(self.pair(SCENARIO_SESSION, phone))),
            ScenarioAction::PhoneOp(op) => Some(outcome_reply(self.phone_op(SCENARIO_SESSION, op.clone()))),
            ScenarioAction::PhoneSever => {
                if let Some((phone, line)) = self.bridge.sever(SCENARIO_SESSION) {
                    self.record(EventKind::PhoneSever, phone.clone(), attrs([("session", "0".into())]))?;
                    if let Some(line) = line {
                        self.send_agent_line(&phone, &line);
                    }
                }
                None
            }
        })
    }

    /// Plays a whole script against simulated time starting at `start`, then
    /// lets pending timers run out. Returns each command's reply with its line.
    pub fn run_scenario(&mut self, events: &[ScenarioEvent], start: Timestamp) -> Result<Vec<(usize, Reply)>, HubError> {
        let mut replies = Vec::new();
        for ev in events {
            self.advance_to(start.plus_millis(ev.offset_ms))?;
            if let Some(reply) = self.apply_scenario(&ev.action)? {
                replies.push((ev.line, reply));
            }
        }
        self.settle()?;
        self.log.flush()?;
        Ok(replies)
    }

    // ---- state

    pub fn snapshot(&self) -> HubSnapshot {
        HubSnapshot {
            devices: self.home.snapshot().iter().map(|d| (d.id.to_string(), DeviceSnapshot::from(d))).collect(),
            security: self
                .guard
                .as_ref()
                .map_or(crate::security::Phase::NeedNumber, SecurityGuard::phase)
                .name()
                .to_string(),
            owner_number: self.guard.as_ref().and_then(|g| g.owner()).map(|m| m.as_str().to_string()),
            alerts: self.alerts,
            occupancy: self.zones.iter().map(|z| (z.room.clone(), z.count())).collect(),
            assets_inside: self.assets.iter().map(|(id, a)| (id.clone(), a.inside())).collect(),
        }
    }

    pub fn device_kinds(&self) -> BTreeMap<DeviceId, DeviceKind> {
        self.home.snapshot().iter().map(|d| (d.id, d.kind)).collect()
    }
}

fn outcome_reply(outcome: LineOutcome) -> Reply {
    match outcome {
        LineOutcome::Reply(r) | LineOutcome::Quit(r) => r,
        LineOutcome::Stream { reply, .. } => reply,
        LineOutcome::Deferred => Reply::ok(["pending"]),
    }
}

fn desk_reply(m: &DesktopModel) -> Reply {
    let mut fields = vec![m.resolution.width.to_string(), m.resolution.height.to_string()];
    for icon in &m.icons {
        let b = icon.bounds;
        fields.push(format!("{} {} {} {} {}", b.x, b.y, b.width, b.height, icon.name));
    }
    let mut running = String::from("running");
    for app in &m.running {
        running.push(' ');
        running.push_str(app);
    }
    fields.push(running);
    Reply::Ok(fields)
}
