//! Command grammar shared by every ingress channel.
//!
//! ```text
//! command  := verb [target]
//! verb     := "turn on" | "turn off" | "open" | "close" | "set" | "status"
//!           | "start scanning" | "stop scanning" | "stream" | "locate"
//! set      := "set" target ["to"] level          level in 0..=100
//! target   := [room-words] (label | label kind | kind)
//! ```
//!
//! SMS bodies may use the compact form `<VERB> <CODE>` (`ON L1`), where codes are
//! aliases for target phrases taken from the hub config.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::Principal;
use crate::home::{normalize_name, Device, DeviceId, DeviceKind, DeviceVerb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Voice,
    Local,
    Sms,
    Web,
    Panel,
    Cli,
}

impl Channel {
    pub const ALL: [Channel; 6] =
        [Channel::Voice, Channel::Local, Channel::Sms, Channel::Web, Channel::Panel, Channel::Cli];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Voice => "voice",
            Channel::Local => "local",
            Channel::Sms => "sms",
            Channel::Web => "web",
            Channel::Panel => "panel",
            Channel::Cli => "cli",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GrammarError::UnknownChannel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    TurnOn,
    TurnOff,
    Open,
    Close,
    Set(u8),
    Status,
    StartScanning,
    StopScanning,
    Stream,
    Locate,
}

impl Verb {
    pub fn token(self) -> &'static str {
        match self {
            Verb::TurnOn => "turn-on",
            Verb::TurnOff => "turn-off",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::Set(_) => "set",
            Verb::Status => "status",
            Verb::StartScanning => "start-scanning",
            Verb::StopScanning => "stop-scanning",
            Verb::Stream => "stream",
            Verb::Locate => "locate",
        }
    }

    fn takes_target(self) -> TargetRule {
        match self {
            Verb::StartScanning | Verb::StopScanning => TargetRule::Forbidden,
            Verb::Status => TargetRule::Optional,
            _ => TargetRule::Required,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetRule {
    Required,
    Optional,
    Forbidden,
}

/// Verb words. Multi-word verbs are folded into one hyphenated token.
const VERB_TABLE: &[(&[&str], &str)] = &[
    (&["turn", "on"], "turn-on"),
    (&["turn", "off"], "turn-off"),
    (&["start", "scanning"], "start-scanning"),
    (&["stop", "scanning"], "stop-scanning"),
    (&["open"], "open"),
    (&["close"], "close"),
    (&["set"], "set"),
    (&["status"], "status"),
    (&["stream"], "stream"),
    (&["locate"], "locate"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCommand {
    pub verb: Verb,
    pub target: Option<String>,
    /// Exactly what arrived, for the event log.
    pub raw: String,
    pub channel: Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Device(DeviceVerb),
    StartScanning,
    StopScanning,
    Status,
    Stream,
    Locate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Device(DeviceId),
    Security,
    Asset(String),
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub action: Action,
    pub target: Target,
    pub channel: Channel,
    pub principal: Principal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("empty command")]
    EmptyInput,
    #[error("unknown verb in {0:?}")]
    UnknownVerb(String),
    #[error("set needs a level 0..=100")]
    MissingLevel,
    #[error("bad level {0:?}")]
    BadLevel(String),
    #[error("{0} needs a target")]
    MissingTarget(&'static str),
    #[error("{0} takes no target")]
    UnexpectedTarget(&'static str),
    #[error("no device matches {0:?}")]
    UnknownTarget(String),
    #[error("{phrase:?} is ambiguous: {}", candidates.join(", "))]
    AmbiguousTarget { phrase: String, candidates: Vec<String> },
    #[error("bad compact form {0:?}")]
    BadCompactForm(String),
    #[error("unknown alias {0:?}")]
    UnknownAlias(String),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
}

/// What `bind` can see: a snapshot of devices plus tracked assets.
#[derive(Debug, Clone, Default)]
pub struct Inventory {
    pub devices: Vec<Device>,
    pub assets: Vec<AssetRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetRef {
    pub id: String,
    pub label: String,
}

impl Inventory {
    pub fn new(devices: Vec<Device>, assets: Vec<AssetRef>) -> Self {
        Self { devices, assets }
    }

    pub fn device(&self, id: DeviceId) -> Option<&Device> {
        self.devices.iter().find(|d| d.id == id)
    }

    fn rooms(&self) -> Vec<&str> {
        let mut rooms: Vec<&str> = self.devices.iter().map(|d| d.room.as_str()).collect();
        rooms.sort_unstable();
        rooms.dedup();
        rooms
    }
}

/// Compact SMS codes, e.g. `L1 -> "bedroom ceiling"`. Codes are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap(BTreeMap<String, String>);

impl AliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, code: &str, phrase: &str) {
        self.0.insert(code.to_uppercase(), normalize_name(phrase));
    }

    pub fn get(&self, code: &str) -> Option<&str> {
        self.0.get(&code.to_uppercase()).map(String::as_str)
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for AliasMap {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        let mut map = AliasMap::new();
        for (code, phrase) in iter {
            map.insert(code, phrase);
        }
        map
    }
}

pub fn tokenize(text: &str) -> Result<Vec<String>, GrammarError> {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        return Err(GrammarError::EmptyInput);
    }
    for (pattern, folded) in VERB_TABLE {
        if pattern.len() > 1 && words.len() >= pattern.len() && words.iter().zip(pattern.iter()).all(|(w, p)| w == p) {
            let mut tokens = vec![folded.to_string()];
            tokens.extend(words[pattern.len()..].iter().cloned());
            return Ok(tokens);
        }
    }
    Ok(words)
}

pub fn parse(text: &str, channel: Channel) -> Result<ParsedCommand, GrammarError> {
    let tokens = tokenize(text)?;
    let head = tokens[0].as_str();
    let verb = match head {
        "turn-on" => Verb::TurnOn,
        "turn-off" => Verb::TurnOff,
        "open" => Verb::Open,
        "close" => Verb::Close,
        "set" => Verb::Set(0),
        "status" => Verb::Status,
        "start-scanning" => Verb::StartScanning,
        "stop-scanning" => Verb::StopScanning,
        "stream" => Verb::Stream,
        "locate" => Verb::Locate,
        _ => return Err(GrammarError::UnknownVerb(text.to_string())),
    };
    let mut rest = &tokens[1..];
    let verb = if let Verb::Set(_) = verb {
        let (last, init) = rest.split_last().ok_or(GrammarError::MissingLevel)?;
        let level = parse_level(last)?;
        rest = match init.split_last() {
            Some((to, init)) if to == "to" => init,
            _ => init,
        };
        Verb::Set(level)
    } else {
        verb
    };
    let target = (!rest.is_empty()).then(|| rest.join(" "));
    match (verb.takes_target(), &target) {
        (TargetRule::Required, None) => return Err(GrammarError::MissingTarget(verb.token())),
        (TargetRule::Forbidden, Some(_)) => return Err(GrammarError::UnexpectedTarget(verb.token())),
        _ => {}
    }
    Ok(ParsedCommand { verb, target, raw: text.to_string(), channel })
}

fn parse_level(token: &str) -> Result<u8, GrammarError> {
    if !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(GrammarError::MissingLevel);
    }
    token
        .parse::<u8>()
        .ok()
        .filter(|&n| n <= 100)
        .ok_or_else(|| GrammarError::BadLevel(token.to_string()))
}

/// Parses the compact SMS form: `ON L1`, `SET F1 40`, `STATUS`, `ARM`, `DISARM`.
pub fn parse_compact(body: &str, aliases: &AliasMap) -> Result<ParsedCommand, GrammarError> {
    let words: Vec<&str> = body.split_whitespace().collect();
    let (head, args) = words.split_first().ok_or(GrammarError::EmptyInput)?;
    let bad = || GrammarError::BadCompactForm(body.to_string());
    let alias = |code: &str| {
        aliases
            .get(code)
            .map(str::to_string)
            .ok_or_else(|| GrammarError::UnknownAlias(code.to_string()))
    };
    let (verb, target) = match (head.to_uppercase().as_str(), args) {
        ("ON", [code]) => (Verb::TurnOn, Some(alias(code)?)),
        ("OFF", [code]) => (Verb::TurnOff, Some(alias(code)?)),
        ("OPEN", [code]) => (Verb::Open, Some(alias(code)?)),
        ("CLOSE", [code]) => (Verb::Close, Some(alias(code)?)),
        ("STREAM", [code]) => (Verb::Stream, Some(alias(code)?)),
        ("LOCATE", [code]) => (Verb::Locate, Some(alias(code)?)),
        ("SET", [code, level]) => (Verb::Set(parse_level(level)?), Some(alias(code)?)),
        ("STATUS", []) => (Verb::Status, None),
        ("STATUS", [code]) => (Verb::Status, Some(alias(code)?)),
        ("ARM", []) => (Verb::StartScanning, None),
        ("DISARM", []) => (Verb::StopScanning, None),
        ("ON" | "OFF" | "OPEN" | "CLOSE" | "STREAM" | "LOCATE" | "SET" | "STATUS" | "ARM" | "DISARM", _) => {
            return Err(bad())
        }
        _ => return Err(GrammarError::UnknownVerb(body.to_string())),
    };
    Ok(ParsedCommand { verb, target, raw: body.to_string(), channel: Channel::Sms })
}

pub fn bind(parsed: &ParsedCommand, inventory: &Inventory, principal: Principal) -> Result<Command, GrammarError> {
    let (action, target) = match parsed.verb {
        Verb::StartScanning => (Action::StartScanning, Target::Security),
        Verb::StopScanning => (Action::StopScanning, Target::Security),
        Verb::Locate => {
            let phrase = parsed.target.as_deref().unwrap_or_default();
            (Action::Locate, Target::Asset(bind_asset(phrase, inventory)?))
        }
        Verb::Status => match &parsed.target {
            None => (Action::Status, Target::All),
            Some(phrase) => (Action::Status, Target::Device(bind_device(phrase, inventory, None)?)),
        },
        Verb::Stream => {
            let phrase = parsed.target.as_deref().unwrap_or_default();
            (Action::Stream, Target::Device(bind_device(phrase, inventory, Some(DeviceKind::Camera))?))
        }
        verb => {
            let device_verb = match verb {
                Verb::TurnOn => DeviceVerb::On,
                Verb::TurnOff => DeviceVerb::Off,
                Verb::Open => DeviceVerb::Open,
                Verb::Close => DeviceVerb::Close,
                Verb::Set(n) => DeviceVerb::SetLevel(n),
                _ => unreachable!("subsystem verbs handled above"),
            };
            let phrase = parsed.target.as_deref().unwrap_or_default();
            (Action::Device(device_verb), Target::Device(bind_device(phrase, inventory, None)?))
        }
    };
    Ok(Command { action, target, channel: parsed.channel, principal })
}

/// Longest room prefix first, then label, `label kind`, and finally kind alone.
fn bind_device(phrase: &str, inventory: &Inventory, only: Option<DeviceKind>) -> Result<DeviceId, GrammarError> {
    let phrase = normalize_name(phrase);
    let words: Vec<&str> = phrase.split(' ').filter(|w| !w.is_empty()).collect();
    let room = inventory
        .rooms()
        .into_iter()
        .filter(|room| {
            let rw: Vec<&str> = room.split(' ').collect();
            rw.len() <= words.len() && rw.iter().zip(&words).all(|(a, b)| a == b)
        })
        .max_by_key(|room| room.split(' ').count());
    let (pool, rest): (Vec<&Device>, String) = match room {
        Some(room) => {
            let n = room.split(' ').count();
            (inventory.devices.iter().filter(|d| d.room == room).collect(), words[n..].join(" "))
        }
        None => (inventory.devices.iter().collect(), words.join(" ")),
    };
    let pool: Vec<&Device> = pool.into_iter().filter(|d| only.is_none_or(|k| d.kind == k)).collect();
    if rest.is_empty() {
        return Err(GrammarError::UnknownTarget(phrase));
    }
    let tiers: [&dyn Fn(&Device) -> bool; 3] = [
        &|d| d.label == rest,
        &|d| format!("{} {}", d.label, d.kind.name()) == rest,
        &|d| d.kind.name() == rest,
    ];
    for tier in tiers {
        let hits: Vec<&Device> = pool.iter().copied().filter(|d| tier(d)).collect();
        match hits.as_slice() {
            [] => continue,
            [one] => return Ok(one.id),
            many => {
                return Err(GrammarError::AmbiguousTarget {
                    phrase,
                    candidates: many.iter().map(|d| d.phrase()).collect(),
                })
            }
        }
    }
    Err(GrammarError::UnknownTarget(phrase))
}

fn bind_asset(phrase: &str, inventory: &Inventory) -> Result<String, GrammarError> {
    let phrase = normalize_name(phrase);
    let by_id: Vec<&AssetRef> = inventory.assets.iter().filter(|a| a.id.eq_ignore_ascii_case(&phrase)).collect();
    let hits = if by_id.is_empty() {
        inventory.assets.iter().filter(|a| normalize_name(&a.label) == phrase).collect()
    } else {
        by_id
    };
    match hits.as_slice() {
        [one] => Ok(one.id.clone()),
        [] => Err(GrammarError::UnknownTarget(phrase)),
        many => Err(GrammarError::AmbiguousTarget {
            phrase,
            candidates: many.iter().map(|a| a.id.clone()).collect(),
        }),
    }
}

impl Command {
    /// Canonical text that parses and binds back to this command.
    pub fn render(&self, inventory: &Inventory) -> Option<String> {
        let device = |id: &DeviceId| inventory.device(*id).map(Device::phrase);
        Some(match (&self.action, &self.target) {
            (Action::Device(verb), Target::Device(id)) => {
                let phrase = device(id)?;
                match verb {
                    DeviceVerb::On => format!("turn on {phrase}"),
                    DeviceVerb::Off => format!("turn off {phrase}"),
                    DeviceVerb::Open => format!("open {phrase}"),
                    DeviceVerb::Close => format!("close {phrase}"),
                    DeviceVerb::SetLevel(n) => format!("set {phrase} to {n}"),
                }
            }
            (Action::StartScanning, _) => "start scanning".to_string(),
            (Action::StopScanning, _) => "stop scanning".to_string(),
            (Action::Status, Target::All) => "status".to_string(),
            (Action::Status, Target::Device(id)) => format!("status {}", device(id)?),
            (Action::Stream, Target::Device(id)) => format!("stream {}", device(id)?),
            (Action::Locate, Target::Asset(id)) => format!("locate {id}"),
            _ => return None,
        })
    }
}
