//! Registry of rooms, devices and device state.
//!
//! [`HomeModel`] is the only place device state changes. Every mutation returns
//! either a [`StateChange`] (which the hub appends to the event log) or
//! [`Applied::NoOp`] when the requested state equals the current one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::control::Principal;
use crate::grammar::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(pub u32);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl FromStr for DeviceId {
    type Err = HomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('d')
            .and_then(|n| n.parse().ok())
            .map(DeviceId)
            .ok_or_else(|| HomeError::BadDeviceId(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Light,
    Fan,
    Ac,
    Pump,
    Gate,
    Tv,
    Camera,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 7] = [
        DeviceKind::Light,
        DeviceKind::Fan,
        DeviceKind::Ac,
        DeviceKind::Pump,
        DeviceKind::Gate,
        DeviceKind::Tv,
        DeviceKind::Camera,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Light => "light",
            DeviceKind::Fan => "fan",
            DeviceKind::Ac => "ac",
            DeviceKind::Pump => "pump",
            DeviceKind::Gate => "gate",
            DeviceKind::Tv => "tv",
            DeviceKind::Camera => "camera",
        }
    }

    /// Verbs a device of this kind accepts. Cameras are driven by surveillance only.
    pub fn accepts(self, verb: DeviceVerb) -> bool {
        use DeviceVerb::*;
        match self {
            DeviceKind::Light | DeviceKind::Tv | DeviceKind::Pump => matches!(verb, On | Off),
            DeviceKind::Fan | DeviceKind::Ac => matches!(verb, On | Off | SetLevel(_)),
            DeviceKind::Gate => matches!(verb, Open | Close),
            DeviceKind::Camera => false,
        }
    }

    pub fn admits(self, state: DeviceState) -> bool {
        matches!(
            (self, state),
            (DeviceKind::Light | DeviceKind::Tv | DeviceKind::Pump | DeviceKind::Camera, DeviceState::Binary(_))
                | (DeviceKind::Fan | DeviceKind::Ac, DeviceState::Binary(_) | DeviceState::Level(_))
                | (DeviceKind::Gate, DeviceState::Gate(GatePosition::Closed | GatePosition::Open))
        )
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceKind {
    type Err = HomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HomeError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatePosition {
    Closed,
    Opening,
    Open,
    Closing,
}

impl GatePosition {
    pub fn name(self) -> &'static str {
        match self {
            GatePosition::Closed => "closed",
            GatePosition::Opening => "opening",
            GatePosition::Open => "open",
            GatePosition::Closing => "closing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceState {
    Binary(bool),
    Level(u8),
    Gate(GatePosition),
}

impl DeviceState {
    pub const MAX_LEVEL: u8 = 100;

    pub fn level(value: u8) -> Result<Self, HomeError> {
        if value > Self::MAX_LEVEL {
            return Err(HomeError::LevelOutOfRange(value.into()));
        }
        Ok(DeviceState::Level(value))
    }

    pub fn is_valid(self) -> bool {
        match self {
            DeviceState::Level(v) => v <= Self::MAX_LEVEL,
            _ => true,
        }
    }
}

impl fmt::Display for DeviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceState::Binary(true) => f.write_str("on"),
            DeviceState::Binary(false) => f.write_str("off"),
            DeviceState::Level(v) => write!(f, "level:{v}"),
            DeviceState::Gate(p) => write!(f, "gate:{}", p.name()),
        }
    }
}

impl FromStr for DeviceState {
    type Err = HomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HomeError::BadState(s.to_string());
        match s {
            "on" => return Ok(DeviceState::Binary(true)),
            "off" => return Ok(DeviceState::Binary(false)),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("level:") {
            let v: u32 = v.parse().map_err(|_| bad())?;
            return u8::try_from(v).map_err(|_| bad()).and_then(DeviceState::level);
        }
        if let Some(p) = s.strip_prefix("gate:") {
            let pos = match p {
                "closed" => GatePosition::Closed,
                "opening" => GatePosition::Opening,
                "open" => GatePosition::Open,
                "closing" => GatePosition::Closing,
                _ => return Err(bad()),
            };
            return Ok(DeviceState::Gate(pos));
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceVerb {
    On,
    Off,
    SetLevel(u8),
    Open,
    Close,
}

impl fmt::Display for DeviceVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceVerb::On => f.write_str("on"),
            DeviceVerb::Off => f.write_str("off"),
            DeviceVerb::SetLevel(n) => write!(f, "set {n}"),
            DeviceVerb::Open => f.write_str("open"),
            DeviceVerb::Close => f.write_str("close"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub room: String,
    pub label: String,
    pub state: DeviceState,
}

impl Device {
    /// `room label`, the canonical way the grammar addresses a device.
    pub fn phrase(&self) -> String {
        format!("{} {}", self.room, self.label)
    }
}

/// Why a state changed: a user command or an automation rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cause {
    Command { channel: Channel, principal: Principal },
    Rule(String),
}

impl Cause {
    pub fn rule(name: impl Into<String>) -> Self {
        Cause::Rule(name.into())
    }

    /// Event-log fields describing the cause.
    pub fn fields(&self) -> Vec<(String, String)> {
        match self {
            Cause::Command { channel, principal } => vec![
                ("channel".into(), channel.name().into()),
                ("principal".into(), principal.name().into()),
            ],
            Cause::Rule(name) => vec![("rule".into(), name.clone())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateChange {
    pub device: DeviceId,
    pub old: DeviceState,
    pub new: DeviceState,
    pub cause: Cause,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Changed(StateChange),
    NoOp(DeviceState),
}

impl Applied {
    pub fn state(&self) -> DeviceState {
        match self {
            Applied::Changed(c) => c.new,
            Applied::NoOp(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HomeError {
    #[error("device {room} {label} already registered")]
    DuplicateName { room: String, label: String },
    #[error("state {state} is not valid for a {kind}")]
    InvalidStateForKind { kind: DeviceKind, state: DeviceState },
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("a {kind} does not accept {verb}")]
    IllegalVerb { kind: DeviceKind, verb: DeviceVerb },
    #[error("gate is {0}; wait for it to stop")]
    GateBusy(&'static str),
    #[error("level {0} outside 0..=100")]
    LevelOutOfRange(u32),
    #[error("room and label must be non-empty")]
    EmptyName,
    #[error("unknown device kind {0:?}")]
    UnknownKind(String),
    #[error("bad device state {0:?}")]
    BadState(String),
    #[error("bad device id {0:?}")]
    BadDeviceId(String),
}

/// Lower-cases and collapses whitespace so `"Living  Room"` and `"living room"`
/// name the same room.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Default)]
struct Registry {
    devices: Vec<Device>,
    index: BTreeMap<DeviceId, usize>,
    next_id: u32,
}

impl Registry {
    fn position(&self, id: DeviceId) -> Result<usize, HomeError> {
        self.index.get(&id).copied().ok_or(HomeError::UnknownDevice(id))
    }
}

/// Thread-safe device registry. Writers take an exclusive lock, so a concurrent
/// [`HomeModel::snapshot`] sees either the state before or after an `apply`.
#[derive(Debug, Default)]
pub struct HomeModel {
    inner: RwLock<Registry>,
}

impl HomeModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &self,
        kind: DeviceKind,
        room: &str,
        label: &str,
        initial: DeviceState,
    ) -> Result<Device, HomeError> {
        let room = normalize_name(room);
        let label = normalize_name(label);
        if room.is_empty() || label.is_empty() {
            return Err(HomeError::EmptyName);
        }
        if !initial.is_valid() || !kind.admits(initial) {
            return Err(HomeError::InvalidStateForKind { kind, state: initial });
        }
        let mut reg = self.inner.write().expect("registry lock poisoned");
        if reg.devices.iter().any(|d| d.room == room && d.label == label) {
            return Err(HomeError::DuplicateName { room, label });
        }
        reg.next_id += 1;
        let device = Device { id: DeviceId(reg.next_id), kind, room, label, state: initial };
        let pos = reg.devices.len();
        reg.index.insert(device.id, pos);
        reg.devices.push(device.clone());
        Ok(device)
    }

    /// Puts a device back with a known id. Used when rebuilding state from a log.
    pub fn restore(&self, device: Device) -> Result<(), HomeError> {
        let mut reg = self.inner.write().expect("registry lock poisoned");
        if reg.index.contains_key(&device.id) {
            return Err(HomeError::DuplicateName { room: device.room, label: device.label });
        }
        reg.next_id = reg.next_id.max(device.id.0);
        let pos = reg.devices.len();
        reg.index.insert(device.id, pos);
        reg.devices.push(device);
        Ok(())
    }

    pub fn apply(
        &self,
        id: DeviceId,
        verb: DeviceVerb,
        cause: Cause,
        at: Timestamp,
    ) -> Result<Applied, HomeError> {
        let mut reg = self.inner.write().expect("registry lock poisoned");
        let pos = reg.position(id)?;
        let device = &mut reg.devices[pos];
        if !device.kind.accepts(verb) {
            return Err(HomeError::IllegalVerb { kind: device.kind, verb });
        }
        let new = next_state(device.kind, device.state, verb)?;
        Ok(commit(device, new, cause, at))
    }

    /// Completes gate travel: opening → open, closing → closed.
    pub fn settle_gate(&self, id: DeviceId, cause: Cause, at: Timestamp) -> Result<Applied, HomeError> {
        let mut reg = self.inner.write().expect("registry lock poisoned");
        let pos = reg.position(id)?;
        let device = &mut reg.devices[pos];
        let new = match device.state {
            DeviceState::Gate(GatePosition::Opening) => DeviceState::Gate(GatePosition::Open),
            DeviceState::Gate(GatePosition::Closing) => DeviceState::Gate(GatePosition::Closed),
            other => return Ok(Applied::NoOp(other)),
        };
        Ok(commit(device, new, cause, at))
    }

    /// Overwrites a device's state. Only replay uses this; live changes go through `apply`.
    pub fn force_state(&self, id: DeviceId, state: DeviceState) -> Result<(), HomeError> {
        let mut reg = self.inner.write().expect("registry lock poisoned");
        let pos = reg.position(id)?;
        let device = &mut reg.devices[pos];
        if !state.is_valid() {
            return Err(HomeError::InvalidStateForKind { kind: device.kind, state });
        }
        device.state = state;
        Ok(())
    }

    pub fn get(&self, id: DeviceId) -> Option<Device> {
        let reg = self.inner.read().expect("registry lock poisoned");
        reg.index.get(&id).map(|&pos| reg.devices[pos].clone())
    }

    pub fn find(&self, room: &str, label: &str) -> Option<Device> {
        let (room, label) = (normalize_name(room), normalize_name(label));
        let reg = self.inner.read().expect("registry lock poisoned");
        reg.devices.iter().find(|d| d.room == room && d.label == label).cloned()
    }

    /// Point-in-time copy of every device, in registration order.
    pub fn snapshot(&self) -> Vec<Device> {
        self.inner.read().expect("registry lock poisoned").devices.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("registry lock poisoned").devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn commit(device: &mut Device, new: DeviceState, cause: Cause, at: Timestamp) -> Applied {
    let old = device.state;
    if old == new {
        return Applied::NoOp(old);
    }
    device.state = new;
    Applied::Changed(StateChange { device: device.id, old, new, cause, at })
}

fn next_state(kind: DeviceKind, old: DeviceState, verb: DeviceVerb) -> Result<DeviceState, HomeError> {
    use DeviceState::*;
    use GatePosition::*;
    Ok(match (old, verb) {
        (Binary(_), DeviceVerb::On) => Binary(true),
        (Binary(_), DeviceVerb::Off) => Binary(false),
        // A level device switched on from 0 goes to full; already running stays put.
        (Level(0), DeviceVerb::On) => Level(DeviceState::MAX_LEVEL),
        (Level(v), DeviceVerb::On) => Level(v),
        (Level(_), DeviceVerb::Off) => Level(0),
        (Level(_), DeviceVerb::SetLevel(n)) => DeviceState::level(n)?,
        (Gate(Closed), DeviceVerb::Open) => Gate(Opening),
        // Reversal: something came through while the gate was closing.
        (Gate(Closing), DeviceVerb::Open) => Gate(Opening),
        (Gate(p @ (Opening | Open)), DeviceVerb::Open) => Gate(p),
        (Gate(Open), DeviceVerb::Close) => Gate(Closing),
        (Gate(Opening), DeviceVerb::Close) => return Err(HomeError::GateBusy("opening")),
        (Gate(p @ (Closing | Closed)), DeviceVerb::Close) => Gate(p),
        _ => return Err(HomeError::IllegalVerb { kind, verb }),
    })
}
