//! IR security guard.
//!
//! The automaton has three phases. Without an owner number the guard waits for
//! one (`NeedNumber`). With a number it waits for a scan command (`Ready`). While
//! `Scanning`, a break on any beam of the zone raises an intrusion alert, after
//! which scanning continues until a stop command returns the guard to `Ready`.
//!
//! An alert is the triad of an SMS to the owner, an intruder image and the
//! alarm "Someone in the room". The guard only decides *when* to alert; the hub
//! performs the effects through [`SmsGateway`] and the surveillance snapshot.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;

pub const ALARM_TEXT: &str = "Someone in the room";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    NeedNumber,
    Ready,
    Scanning,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::NeedNumber => "need-number",
            Phase::Ready => "ready",
            Phase::Scanning => "scanning",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subscriber number in international digit form: `+?[0-9]{6,15}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Msisdn(String);

impl Msisdn {
    pub fn parse(text: &str) -> Result<Self, SecurityError> {
        let digits = text.strip_prefix('+').unwrap_or(text);
        if (6..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Msisdn(text.to_string()))
        } else {
            Err(SecurityError::BadNumber(text.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Msisdn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SecurityError {
    #[error("bad phone number {0:?}")]
    BadNumber(String),
    #[error("wait until number is given")]
    NotConfigured,
    #[error("already scanning")]
    AlreadyScanning,
    #[error("not scanning")]
    NotScanning,
    #[error("beam {0:?} is not in the secured zone")]
    UnknownBeam(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamEvent {
    pub beam: String,
    pub broken: bool,
    pub at: Timestamp,
}

/// The guard's decision to alert. The hub turns it into an [`IntrusionAlert`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertTrigger {
    pub at: Timestamp,
    pub zone: String,
    pub beams: Vec<String>,
    pub owner: Msisdn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub captured_at: Timestamp,
    pub camera: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dispatch {
    Sent,
    Failed(String),
}

impl Dispatch {
    pub fn name(&self) -> &'static str {
        match self {
            Dispatch::Sent => "sent",
            Dispatch::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntrusionAlert {
    pub at: Timestamp,
    pub zone: String,
    pub beams: Vec<String>,
    pub sms: Dispatch,
    pub image: Result<ImageRecord, String>,
    pub alarm_text: &'static str,
}

#[derive(Debug, Clone)]
pub struct SecurityGuard {
    phase: Phase,
    owner: Option<Msisdn>,
    zone: String,
    beams: BTreeSet<String>,
    broken: BTreeSet<String>,
    debounce_ms: i64,
    last_alert: Option<Timestamp>,
}

impl SecurityGuard {
    pub fn new(zone: impl Into<String>, beams: impl IntoIterator<Item = String>, debounce_ms: i64) -> Self {
        Self {
            phase: Phase::NeedNumber,
            owner: None,
            zone: zone.into(),
            beams: beams.into_iter().collect(),
            broken: BTreeSet::new(),
            debounce_ms,
            last_alert: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn owner(&self) -> Option<&Msisdn> {
        self.owner.as_ref()
    }

    pub fn zone(&self) -> &str {
        &self.zone
    }

    pub fn has_beam(&self, beam: &str) -> bool {
        self.beams.contains(beam)
    }

    pub fn beams(&self) -> impl Iterator<Item = &str> {
        self.beams.iter().map(String::as_str)
    }

    /// Stores the owner number. The first number moves `NeedNumber` to `Ready`;
    /// later numbers replace it without changing phase.
    pub fn set_owner_number(&mut self, text: &str) -> Result<Phase, SecurityError> {
        let number = Msisdn::parse(text)?;
        self.owner = Some(number);
        if self.phase == Phase::NeedNumber {
            self.phase = Phase::Ready;
        }
        Ok(self.phase)
    }

    pub fn start_scanning(&mut self) -> Result<Phase, SecurityError> {
        match self.phase {
            Phase::NeedNumber => Err(SecurityError::NotConfigured),
            Phase::Scanning => Err(SecurityError::AlreadyScanning),
            Phase::Ready => {
                self.phase = Phase::Scanning;
                self.last_alert = None;
                Ok(self.phase)
            }
        }
    }

    pub fn stop_scanning(&mut self) -> Result<Phase, SecurityError> {
        match self.phase {
            Phase::Scanning => {
                self.phase = Phase::Ready;
                Ok(self.phase)
            }
            _ => Err(SecurityError::NotScanning),
        }
    }

    /// Feeds one beam transition. Returns a trigger when the guard is scanning,
    /// the beam broke, and no alert was raised within the debounce window.
    pub fn on_beam(&mut self, event: &BeamEvent) -> Result<Option<AlertTrigger>, SecurityError> {
        if !self.beams.contains(&event.beam) {
            return Err(SecurityError::UnknownBeam(event.beam.clone()));
        }
        if !event.broken {
            self.broken.remove(&event.beam);
            return Ok(None);
        }
        self.broken.insert(event.beam.clone());
        if self.phase != Phase::Scanning {
            return Ok(None);
        }
        if let Some(last) = self.last_alert {
            if event.at.since(last) < self.debounce_ms {
                return Ok(None);
            }
        }
        self.last_alert = Some(event.at);
        let owner = self.owner.clone().expect("scanning implies an owner number");
        Ok(Some(AlertTrigger {
            at: event.at,
            zone: self.zone.clone(),
            beams: self.broken.iter().cloned().collect(),
            owner,
        }))
    }
}

pub fn intrusion_sms_body(zone: &str, at: Timestamp) -> String {
    format!("Someone entered in secured zone {zone} at {}", at.iso())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmsMessage {
    pub at: Timestamp,
    pub to: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sms gateway down: {0}")]
pub struct GatewayDown(pub String);

/// Where SMS messages go. A failed send is recorded; it never blocks the other effects.
pub trait SmsGateway: Send {
    fn send(&mut self, message: &SmsMessage) -> Result<(), GatewayDown>;
}

/// Appends `<ISO-8601>\t<to>\t<body>` lines to an outbox file.
#[derive(Debug)]
pub struct FileOutbox {
    path: PathBuf,
}

impl FileOutbox {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl SmsGateway for FileOutbox {
    fn send(&mut self, message: &SmsMessage) -> Result<(), GatewayDown> {
        let line = format!(
            "{}\t{}\t{}\n",
            message.at.iso(),
            crate::fields::escape(&message.to),
            crate::fields::escape(&message.body)
        );
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(|e| GatewayDown(e.to_string()))?;
        }
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| GatewayDown(e.to_string()))
    }
}

/// Keeps messages in memory. Tests use it to inspect what was sent.
#[derive(Debug, Default, Clone)]
pub struct MemoryGateway {
    pub sent: std::sync::Arc<std::sync::Mutex<Vec<SmsMessage>>>,
}

impl SmsGateway for MemoryGateway {
    fn send(&mut self, message: &SmsMessage) -> Result<(), GatewayDown> {
        self.sent.lock().expect("gateway lock").push(message.clone());
        Ok(())
    }
}

/// A gateway that is always unreachable.
#[derive(Debug, Default, Clone, Copy)]
pub struct DownGateway;

impl SmsGateway for DownGateway {
    fn send(&mut self, _message: &SmsMessage) -> Result<(), GatewayDown> {
        Err(GatewayDown("gateway unreachable".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::DEFAULT_SIM_EPOCH;

    fn guard() -> SecurityGuard {
        SecurityGuard::new("living room", ["b1".to_string(), "b2".to_string()], 2_000)
    }

    fn beam(id: &str, ms: i64) -> BeamEvent {
        BeamEvent { beam: id.into(), broken: true, at: DEFAULT_SIM_EPOCH.plus_millis(ms) }
    }

    #[test]
    fn number_validation() {
        let mut g = guard();
        assert_eq!(g.set_owner_number("hello"), Err(SecurityError::BadNumber("hello".into())));
        assert_eq!(g.phase(), Phase::NeedNumber);
        assert_eq!(g.set_owner_number("+8801712345678"), Ok(Phase::Ready));
        assert!(Msisdn::parse("12345").is_err());
        assert!(Msisdn::parse("+1234567890123456").is_err());
        assert!(Msisdn::parse("123456").is_ok());
    }

    #[test]
    fn scanning_transitions() {
        let mut g = guard();
        assert_eq!(g.start_scanning(), Err(SecurityError::NotConfigured));
        g.set_owner_number("+8801712345678").unwrap();
        assert_eq!(g.stop_scanning(), Err(SecurityError::NotScanning));
        assert_eq!(g.start_scanning(), Ok(Phase::Scanning));
        assert_eq!(g.start_scanning(), Err(SecurityError::AlreadyScanning));
        assert_eq!(g.set_owner_number("+8801999999999"), Ok(Phase::Scanning));
        assert_eq!(g.owner().unwrap().as_str(), "+8801999999999");
        assert_eq!(g.stop_scanning(), Ok(Phase::Ready));
    }

    #[test]
    fn only_scanning_alerts() {
        let mut g = guard();
        g.set_owner_number("+8801712345678").unwrap();
        assert_eq!(g.on_beam(&beam("b1", 0)).unwrap(), None);
        g.start_scanning().unwrap();
        let t = g.on_beam(&beam("b2", 10_000)).unwrap().expect("alert");
        assert_eq!(t.zone, "living room");
        g.stop_scanning().unwrap();
        assert_eq!(g.on_beam(&beam("b2", 10_001)).unwrap(), None);
        assert_eq!(g.on_beam(&beam("b9", 10_002)), Err(SecurityError::UnknownBeam("b9".into())));
    }

    #[test]
    fn debounce_collapses_close_breaks() {
        let mut g = guard();
        g.set_owner_number("+8801712345678").unwrap();
        g.start_scanning().unwrap();
        assert!(g.on_beam(&beam("b1", 0)).unwrap().is_some());
        assert!(g.on_beam(&beam("b1", 50)).unwrap().is_none());
        assert!(g.on_beam(&beam("b2", 1_999)).unwrap().is_none());
        assert!(g.on_beam(&beam("b2", 2_000)).unwrap().is_some());
    }

    #[test]
    fn sms_body_format() {
        let body = intrusion_sms_body("living room", DEFAULT_SIM_EPOCH.plus_millis(5_000));
        assert_eq!(body, "Someone entered in secured zone living room at 2024-01-01T00:00:05.000Z");
    }

    #[test]
    fn file_outbox_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut outbox = FileOutbox::new(dir.path().join("outbox.sms"));
        for n in 0..2 {
            outbox
                .send(&SmsMessage { at: DEFAULT_SIM_EPOCH, to: "+8801712345678".into(), body: format!("m{n}") })
                .unwrap();
        }
        let text = std::fs::read_to_string(outbox.path()).unwrap();
        assert_eq!(
            text,
            "2024-01-01T00:00:00.000Z\t+8801712345678\tm0\n2024-01-01T00:00:00.000Z\t+8801712345678\tm1\n"
        );
        assert!(DownGateway.send(&SmsMessage { at: DEFAULT_SIM_EPOCH, to: "1".into(), body: "x".into() }).is_err());
    }
}
