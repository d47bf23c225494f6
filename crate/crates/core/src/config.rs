//! Hub configuration, loaded from TOML and validated before anything starts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desktop::{Desktop, DesktopError, Icon, IconAction, IconBox, Resolution};
use crate::home::{normalize_name, DeviceId, DeviceKind, DeviceState};
use crate::mobile::PhoneProfile;
use crate::security::Msisdn;
use crate::surveillance::{MIN_HEIGHT, MIN_WIDTH};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Validation(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Validation(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Listen {
    #[serde(default = "default_control")]
    pub control: String,
    #[serde(default = "default_http")]
    pub http: String,
    #[serde(default = "default_agent")]
    pub agent: String,
}

fn default_control() -> String {
    "127.0.0.1:7070".into()
}
fn default_http() -> String {
    "127.0.0.1:7080".into()
}
fn default_agent() -> String {
    "127.0.0.1:7090".into()
}

impl Default for Listen {
    fn default() -> Self {
        Self { control: default_control(), http: default_http(), agent: default_agent() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Auth {
    pub owner: String,
    #[serde(default)]
    pub guest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timing {
    pub debounce_ms: i64,
    pub pairing_window_ms: i64,
    pub gate_travel_ms: i64,
    pub gate_auto_close_ms: i64,
    pub stream_queue: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            debounce_ms: 2_000,
            pairing_window_ms: 1_000,
            gate_travel_ms: 3_000,
            gate_auto_close_ms: 10_000,
            stream_queue: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub id: String,
    pub kind: String,
    pub room: String,
    pub label: String,
    #[serde(default)]
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityEntry {
    pub zone: String,
    pub beams: Vec<String>,
    pub camera: String,
    #[serde(default)]
    pub owner_number: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub id: String,
    /// Camera device in the inventory, so `stream <room> camera` finds this feed.
    #[serde(default)]
    pub device: Option<String>,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyEntry {
    pub room: String,
    pub outer: String,
    pub inner: String,
    #[serde(default)]
    pub lights: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankEntry {
    pub pump: String,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
}

fn default_low() -> f64 {
    30.0
}
fn default_high() -> f64 {
    90.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateEntry {
    pub device: String,
    pub fobs: Vec<String>,
    #[serde(default)]
    pub auto_close_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub id: String,
    pub label: String,
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IconEntry {
    pub name: String,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesktopEntry {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub icons: Vec<IconEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubConfig {
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub listen: Listen,
    pub auth: Auth,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub devices: Vec<DeviceEntry>,
    #[serde(default)]
    pub beams: Vec<String>,
    #[serde(default)]
    pub security: Option<SecurityEntry>,
    #[serde(default)]
    pub cameras: Vec<CameraEntry>,
    #[serde(default)]
    pub occupancy: Vec<OccupancyEntry>,
    #[serde(default)]
    pub tank: Option<TankEntry>,
    #[serde(default)]
    pub gates: Vec<GateEntry>,
    #[serde(default)]
    pub assets: Vec<AssetEntry>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub desktop: Option<DesktopEntry>,
    #[serde(default)]
    pub phones: Vec<PhoneProfile>,
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

/// A config device with its parsed id, kind and initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceSeed {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub room: String,
    pub label: String,
    pub state: DeviceState,
}

fn default_state(kind: DeviceKind) -> DeviceState {
    match kind {
        DeviceKind::Gate => DeviceState::Gate(crate::home::GatePosition::Closed),
        DeviceKind::Fan | DeviceKind::Ac => DeviceState::Level(0),
        _ => DeviceState::Binary(false),
    }
}

impl HubConfig {
    pub fn load(path: &Path) -> Result<HubConfig, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let config = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<HubConfig, ConfigError> {
        let config: HubConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn device_seeds(&self) -> Result<Vec<DeviceSeed>, ConfigError> {
        let mut seeds = Vec::with_capacity(self.devices.len());
        for d in &self.devices {
            let id: DeviceId = d.id.parse().map_err(|_| ConfigError::Validation(format!("bad device id {:?}", d.id)))?;
            let kind: DeviceKind = d
                .kind
                .parse()
                .map_err(|_| ConfigError::Validation(format!("device {}: unknown kind {:?}", d.id, d.kind)))?;
            let state = match &d.state {
                None => default_state(kind),
                Some(s) => s
                    .parse()
                    .map_err(|_| ConfigError::Validation(format!("device {}: bad state {s:?}", d.id)))?,
            };
            if !state.is_valid() || !kind.admits(state) {
                return invalid(format!("device {}: state {state} is not valid for a {kind}", d.id));
            }
            let (room, label) = (normalize_name(&d.room), normalize_name(&d.label));
            if room.is_empty() || label.is_empty() {
                return invalid(format!("device {}: room and label must be non-empty", d.id));
            }
            seeds.push(DeviceSeed { id, kind, room, label, state });
        }
        Ok(seeds)
    }

    fn device_kind(&self, seeds: &[DeviceSeed], id: &str, context: &str) -> Result<DeviceKind, ConfigError> {
        seeds
            .iter()
            .find(|s| s.id.to_string() == id)
            .map(|s| s.kind)
            .ok_or_else(|| ConfigError::Validation(format!("{context} refers to unknown device id {id}")))
    }

    pub fn desktop_model(&self) -> Result<Desktop, ConfigError> {
        let Some(entry) = &self.desktop else {
            return Ok(Desktop::fixture());
        };
        let icons = entry
            .icons
            .iter()
            .map(|i| {
                Ok(Icon {
                    name: i.name.clone(),
                    bounds: IconBox { x: i.x, y: i.y, width: i.width, height: i.height },
                    action: i.action.parse::<IconAction>()?,
                })
            })
            .collect::<Result<Vec<_>, DesktopError>>()
            .map_err(|e| ConfigError::Validation(format!("desktop: {e}")))?;
        if entry.width == 0 || entry.height == 0 {
            return invalid("desktop: resolution must be non-empty");
        }
        Desktop::new(Resolution::new(entry.width, entry.height), icons)
            .map_err(|e| ConfigError::Validation(format!("desktop: {e}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.auth.owner.is_empty() || self.auth.owner.contains(char::is_whitespace) {
            return invalid("auth.owner must be a non-empty token without spaces");
        }
        if let Some(g) = &self.auth.guest {
            if g.is_empty() || g.contains(char::is_whitespace) || *g == self.auth.owner {
                return invalid("auth.guest must be a non-empty token without spaces, distinct from the owner token");
            }
        }
        let t = &self.timing;
        if t.debounce_ms < 0 || t.pairing_window_ms < 0 {
            return invalid("timing windows must be non-negative");
        }
        if t.gate_travel_ms <= 0 || t.gate_auto_close_ms <= 0 {
            return invalid("gate timings must be positive");
        }
        if t.stream_queue == 0 {
            return invalid("timing.stream_queue must be at least 1");
        }

        let seeds = self.device_seeds()?;
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for s in &seeds {
            if !ids.insert(s.id) {
                return invalid(format!("duplicate device id {}", s.id));
            }
            if !names.insert((s.room.clone(), s.label.clone())) {
                return invalid(format!("duplicate device name {} {}", s.room, s.label));
            }
        }

        let beams: BTreeSet<&str> = self.beams.iter().map(String::as_str).collect();
        if beams.len() != self.beams.len() {
            return invalid("duplicate beam id");
        }
        let cameras: BTreeSet<&str> = self.cameras.iter().map(|c| c.id.as_str()).collect();
        if cameras.len() != self.cameras.len() {
            return invalid("duplicate camera id");
        }
        for c in &self.cameras {
            if c.width < MIN_WIDTH || c.height < MIN_HEIGHT {
                return invalid(format!("camera {}: resolution must be at least {MIN_WIDTH}x{MIN_HEIGHT}", c.id));
            }
            if c.fps == 0 || c.fps > 1000 {
                return invalid(format!("camera {}: fps must be in 1..=1000", c.id));
            }
            if let Some(d) = &c.device {
                let kind = self.device_kind(&seeds, d, &format!("camera {}", c.id))?;
                if kind != DeviceKind::Camera {
                    return invalid(format!("camera {} device {d} is a {kind}, not a camera", c.id));
                }
            }
        }

        if let Some(sec) = &self.security {
            if sec.beams.is_empty() {
                return invalid("security.beams must name at least one beam");
            }
            for b in &sec.beams {
                if !beams.contains(b.as_str()) {
                    return invalid(format!("security refers to unknown beam id {b}"));
                }
            }
            if !cameras.contains(sec.camera.as_str()) {
                return invalid(format!("security refers to unknown camera id {}", sec.camera));
            }
            if let Some(n) = &sec.owner_number {
                Msisdn::parse(n).map_err(|e| ConfigError::Validation(format!("security.owner_number: {e}")))?;
            }
        }

        let mut zone_beams = BTreeSet::new();
        for z in &self.occupancy {
            let context = format!("occupancy zone {}", z.room);
            for b in [&z.outer, &z.inner] {
                if !beams.contains(b.as_str()) {
                    return invalid(format!("{context} refers to unknown beam id {b}"));
                }
                if !zone_beams.insert(b.clone()) {
                    return invalid(format!("beam {b} is used by two occupancy zones"));
                }
            }
            if z.outer == z.inner {
                return invalid(format!("{context}: outer and inner beams must differ"));
            }
            for l in &z.lights {
                let kind = self.device_kind(&seeds, l, &context)?;
                if !kind.accepts(crate::home::DeviceVerb::On) {
                    return invalid(format!("{context}: device {l} cannot be switched"));
                }
            }
        }

        if let Some(tank) = &self.tank {
            if !(tank.low.is_finite() && tank.high.is_finite() && 0.0 <= tank.low && tank.low < tank.high && tank.high <= 100.0) {
                return invalid(format!(
                    "tank thresholds must satisfy 0 <= low < high <= 100 (got low={}, high={})",
                    tank.low, tank.high
                ));
            }
            let kind = self.device_kind(&seeds, &tank.pump, "tank")?;
            if kind != DeviceKind::Pump {
                return invalid(format!("tank pump {} is a {kind}, not a pump", tank.pump));
            }
        }

        let mut gates = BTreeSet::new();
        for g in &self.gates {
            let kind = self.device_kind(&seeds, &g.device, "gate rule")?;
            if kind != DeviceKind::Gate {
                return invalid(format!("gate rule device {} is a {kind}, not a gate", g.device));
            }
            if !gates.insert(&g.device) {
                return invalid(format!("gate {} has two rules", g.device));
            }
            if g.auto_close_ms.is_some_and(|ms| ms <= 0) {
                return invalid(format!("gate {}: auto_close_ms must be positive", g.device));
            }
        }

        let mut assets = BTreeSet::new();
        for a in &self.assets {
            if !assets.insert(&a.id) {
                return invalid(format!("duplicate asset id {}", a.id));
            }
            crate::automation::AssetTrack::new(&a.id, &a.label, (a.lat, a.lon), a.radius_m)
                .map_err(|e| ConfigError::Validation(format!("asset {}: {e}", a.id)))?;
        }

        let phrases: BTreeSet<String> = seeds.iter().map(|s| format!("{} {}", s.room, s.label)).collect();
        for (code, phrase) in &self.aliases {
            if code.is_empty() || code.contains(char::is_whitespace) {
                return invalid(format!("alias code {code:?} must be a single word"));
            }
            if !phrases.contains(&normalize_name(phrase)) {
                return invalid(format!("alias {code} refers to unknown device {phrase:?}"));
            }
        }

        let mut phones = BTreeSet::new();
        for p in &self.phones {
            if p.id.is_empty() || p.id.contains(char::is_whitespace) || !phones.insert(&p.id) {
                return invalid(format!("phone id {:?} must be a unique single word", p.id));
            }
        }

        self.desktop_model()?;
        Ok(())
    }
}
