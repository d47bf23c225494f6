//! The append-only event log and replay.
//!
//! One record per line: `seq<TAB>time<TAB>kind<TAB>subject[<TAB>key=value]...`,
//! fields escaped with [`crate::fields`]. Sequence numbers start at 1 and have
//! no gaps, so a truncated or spliced log is detected on replay.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::control::Topic;
use crate::fields;
use crate::home::{Device, DeviceState};
use crate::security::Phase;

macro_rules! kinds {
    ($($variant:ident => $name:literal,)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum EventKind {
            $($variant,)*
        }

        impl EventKind {
            pub const ALL: &'static [EventKind] = &[$(EventKind::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(EventKind::$variant => $name,)*
                }
            }
        }

        impl FromStr for EventKind {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(EventKind::$variant),)*
                    _ => Err(format!("unknown event kind {s:?}")),
                }
            }
        }
    };
}

kinds! {
    DeviceRegistered => "device-registered",
    ZoneRegistered => "zone-registered",
    AssetRegistered => "asset-registered",
    StateChange => "state-change",
    OwnerNumberSet => "owner-number-set",
    Armed => "armed",
    Disarmed => "disarmed",
    Alert => "alert",
    SmsDispatch => "sms-dispatch",
    ImageStored => "image-stored",
    Occupancy => "occupancy",
    OccupancyAnomaly => "occupancy-anomaly",
    Presence => "presence",
    PresenceDenied => "presence-denied",
    GpsFix => "gps-fix",
    GeofenceExit => "geofence-exit",
    SessionAuth => "session-auth",
    SessionAuthFailed => "session-auth-failed",
    StreamOpen => "stream-open",
    StreamClose => "stream-close",
    DesktopClick => "desktop-click",
    DesktopExec => "desktop-exec",
    Power => "power",
    PhoneLink => "phone-link",
    PhonePair => "phone-pair",
    PhoneAccepted => "phone-accepted",
    PhoneRejected => "phone-rejected",
    PhoneOp => "phone-op",
    PhoneSever => "phone-sever",
}

impl EventKind {
    /// The push topic subscribers see this event on, if any.
    pub fn topic(self) -> Option<Topic> {
        use EventKind::*;
        match self {
            StateChange | OwnerNumberSet | Armed | Disarmed | Occupancy | PhoneLink | PhoneAccepted | PhoneSever => {
                Some(Topic::State)
            }
            Alert | GeofenceExit | OccupancyAnomaly | SmsDispatch | ImageStored => Some(Topic::Alert),
            StreamOpen | StreamClose => Some(Topic::StreamMeta),
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub at: Timestamp,
    pub kind: EventKind,
    pub subject: String,
    pub attrs: Vec<(String, String)>,
}

impl Event {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Everything after the sequence number, as separate fields. Pushes carry these.
    pub fn fields(&self) -> Vec<String> {
        let mut out = vec![self.at.iso(), self.kind.name().to_string(), self.subject.clone()];
        out.extend(self.attrs.iter().map(|(k, v)| format!("{k}={v}")));
        out
    }

    pub fn render(&self) -> String {
        let mut f = vec![self.seq.to_string()];
        f.extend(self.fields());
        fields::join(f)
    }

    pub fn parse(line: &str) -> Result<Event, String> {
        let f = fields::split(line).map_err(|e| e.to_string())?;
        if f.len() < 4 {
            return Err("record has fewer than four fields".into());
        }
        let seq = f[0].parse().map_err(|_| format!("bad sequence number {:?}", f[0]))?;
        let at = Timestamp::parse_iso(&f[1]).ok_or_else(|| format!("bad timestamp {:?}", f[1]))?;
        let kind = f[2].parse()?;
        let attrs = f[4..]
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| format!("attribute {kv:?} lacks '='"))
            })
            .collect::<Result<_, _>>()?;
        Ok(Event { seq, at, kind, subject: f[3].clone(), attrs })
    }
}

pub fn attrs<const N: usize>(pairs: [(&str, String); N]) -> Vec<(String, String)> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Appends records, to a file or (for tests and sim runs without `--log`) to memory.
#[derive(Debug)]
pub struct EventLog {
    next_seq: u64,
    file: Option<BufWriter<File>>,
    kept: Option<Vec<Event>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { next_seq: 1, file: None, kept: Some(Vec::new()) }
    }

    /// Starts a fresh log at `path`, truncating whatever was there.
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self { next_seq: 1, file: Some(BufWriter::new(file)), kept: None })
    }

    pub fn append(
        &mut self,
        at: Timestamp,
        kind: EventKind,
        subject: impl Into<String>,
        attrs: Vec<(String, String)>,
    ) -> io::Result<Event> {
        let event = Event { seq: self.next_seq, at, kind, subject: subject.into(), attrs };
        if let Some(w) = self.file.as_mut() {
            writeln!(w, "{}", event.render())?;
        }
        if let Some(kept) = self.kept.as_mut() {
            kept.push(event.clone());
        }
        self.next_seq += 1;
        Ok(event)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.file.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 1
    }

    /// Records kept by an in-memory log; empty for file logs.
    pub fn events(&self) -> &[Event] {
        self.kept.as_deref().unwrap_or(&[])
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
}

fn corrupt(line: usize, reason: impl Into<String>) -> ReplayError {
    ReplayError::CorruptLog { line, reason: reason.into() }
}

/// Parses a whole log, checking that sequence numbers run 1, 2, 3... and that
/// the last record is complete.
pub fn read_log(text: &str) -> Result<Vec<Event>, ReplayError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let Some(body) = text.strip_suffix('\n') else {
        return Err(corrupt(text.lines().count(), "last record is not newline-terminated"));
    };
    let mut events = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let event = Event::parse(line).map_err(|reason| corrupt(i + 1, reason))?;
        if event.seq != i as u64 + 1 {
            return Err(corrupt(i + 1, format!("expected sequence {} but found {}", i + 1, event.seq)));
        }
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSnapshot {
    pub id: String,
    pub kind: String,
    pub room: String,
    pub label: String,
    pub state: String,
}

impl From<&Device> for DeviceSnapshot {
    fn from(d: &Device) -> Self {
        Self {
            id: d.id.to_string(),
            kind: d.kind.name().to_string(),
            room: d.room.clone(),
            label: d.label.clone(),
            state: d.state.to_string(),
        }
    }
}

/// Observable hub state, comparable between a live run and a replayed log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubSnapshot {
    pub devices: BTreeMap<String, DeviceSnapshot>,
    pub security: String,
    pub owner_number: Option<String>,
    pub alerts: u64,
    pub occupancy: BTreeMap<String, u32>,
    pub assets_inside: BTreeMap<String, bool>,
}

impl Default for HubSnapshot {
    fn default() -> Self {
        Self {
            devices: BTreeMap::new(),
            security: Phase::NeedNumber.name().to_string(),
            owner_number: None,
            alerts: 0,
            occupancy: BTreeMap::new(),
            assets_inside: BTreeMap::new(),
        }
    }
}

impl HubSnapshot {
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        let need = |key: &str| event.attr(key).ok_or_else(|| format!("{} record lacks {key}=", event.kind));
        match event.kind {
            EventKind::DeviceRegistered => {
                let state: DeviceState = need("state")?.parse().map_err(|e: crate::home::HomeError| e.to_string())?;
                self.devices.insert(
                    event.subject.clone(),
                    DeviceSnapshot {
                        id: event.subject.clone(),
                        kind: need("kind")?.to_string(),
                        room: need("room")?.to_string(),
                        label: need("label")?.to_string(),
                        state: state.to_string(),
                    },
                );
            }
            EventKind::StateChange => {
                let device = self
                    .devices
                    .get_mut(&event.subject)
                    .ok_or_else(|| format!("state change for unregistered device {}", event.subject))?;
                device.state = need("to")?.to_string();
            }
            EventKind::OwnerNumberSet => {
                self.owner_number = Some(event.subject.clone());
                if self.security == Phase::NeedNumber.name() {
                    self.security = Phase::Ready.name().to_string();
                }
            }
            EventKind::Armed => self.security = Phase::Scanning.name().to_string(),
            EventKind::Disarmed => self.security = Phase::Ready.name().to_string(),
            EventKind::Alert => self.alerts += 1,
            EventKind::ZoneRegistered => {
                self.occupancy.entry(event.subject.clone()).or_insert(0);
            }
            EventKind::Occupancy => {
                let count = need("count")?.parse().map_err(|_| "bad occupancy count".to_string())?;
                self.occupancy.insert(event.subject.clone(), count);
            }
            EventKind::AssetRegistered => {
                self.assets_inside.entry(event.subject.clone()).or_insert(true);
            }
            EventKind::GpsFix => {
                let inside = match need("inside")? {
                    "true" => true,
                    "false" => false,
                    other => return Err(format!("bad inside flag {other:?}")),
                };
                self.assets_inside.insert(event.subject.clone(), inside);
            }
            _ => {}
        }
        Ok(())
    }
}

/// Rebuilds the snapshot a log describes, starting from `base` (or an empty hub).
pub fn replay(text: &str, base: Option<HubSnapshot>) -> Result<HubSnapshot, ReplayError> {
    let mut snap = base.unwrap_or_default();
    for (i, event) in read_log(text)?.iter().enumerate() {
        snap.apply(event).map_err(|reason| corrupt(i + 1, reason))?;
    }
    Ok(snap)
}
