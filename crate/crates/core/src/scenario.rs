//! Scenario scripts: timestamped sensor and user events that drive a hub run.
//!
//! ```text
//! # t-millis  kind      args
//! 0           owner     +8801712345678
//! 100         cmd       cli start scanning
//! 2000        beam      b1 broken
//! 2400        beam      b1 clear
//! ```
//!
//! Times are offsets from the start of the run and must not decrease.

use thiserror::Error;

use crate::grammar::Channel;
use crate::mobile::{MobileError, PhoneOp};

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioAction {
    Beam { beam: String, broken: bool },
    Tank { level: f64 },
    Gps { asset: String, lat: f64, lon: f64 },
    Presence { gate: String, fob: String },
    Cmd { channel: Channel, text: String },
    Owner { number: String },
    PhoneLink { phone: String, up: bool },
    PhonePair { phone: String },
    PhoneOp(PhoneOp),
    PhoneSever,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub line: usize,
    pub offset_ms: i64,
    pub action: ScenarioAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario line {line}: {reason}")]
pub struct ScenarioError {
    pub line: usize,
    pub reason: String,
}

fn number<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad {what} {s:?}"))
}

fn parse_action(kind: &str, args: &[&str], rest: &str) -> Result<ScenarioAction, String> {
    let action = match (kind, args) {
        ("beam", [beam]) => ScenarioAction::Beam { beam: beam.to_string(), broken: true },
        ("beam", [beam, state]) => {
            let broken = match *state {
                "broken" => true,
                "clear" => false,
                other => return Err(format!("beam state must be broken or clear, not {other:?}")),
            };
            ScenarioAction::Beam { beam: beam.to_string(), broken }
        }
        ("tank", [level]) => ScenarioAction::Tank { level: number(level, "tank level")? },
        ("gps", [asset, lat, lon]) => ScenarioAction::Gps {
            asset: asset.to_string(),
            lat: number(lat, "latitude")?,
            lon: number(lon, "longitude")?,
        },
        ("presence", [gate, fob]) => ScenarioAction::Presence { gate: gate.to_string(), fob: fob.to_string() },
        ("cmd", [word, _, ..]) => {
            let channel: Channel = word.parse().map_err(|e: crate::grammar::GrammarError| e.to_string())?;
            let text = rest[word.len()..].trim().to_string();
            ScenarioAction::Cmd { channel, text }
        }
        ("owner", [number]) => ScenarioAction::Owner { number: number.to_string() },
        ("phone-link", [phone, state]) => {
            let up = match *state {
                "up" => true,
                "down" => false,
                other => return Err(format!("phone link must be up or down, not {other:?}")),
            };
            ScenarioAction::PhoneLink { phone: phone.to_string(), up }
        }
        ("phone-pair", [phone]) => ScenarioAction::PhonePair { phone: phone.to_string() },
        ("phone-op", [_, ..]) => ScenarioAction::PhoneOp(PhoneOp::parse_words(rest).map_err(|e: MobileError| e.to_string())?),
        ("phone-sever", []) => ScenarioAction::PhoneSever,
        (
            "beam" | "tank" | "gps" | "presence" | "cmd" | "owner" | "phone-link" | "phone-pair" | "phone-op"
            | "phone-sever",
            _,
        ) => return Err(format!("wrong arguments for {kind}")),
        _ => return Err(format!("unknown event kind {kind:?}")),
    };
    Ok(action)
}

pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioEvent>, ScenarioError> {
    let mut events = Vec::new();
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| ScenarioError { line, reason };
        let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if content.is_empty() {
            continue;
        }
        let (t, after) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let after = after.trim_start();
        if after.is_empty() {
            return Err(err("missing event kind".into()));
        }
        let (kind, rest) = after.split_once(char::is_whitespace).unwrap_or((after, ""));
        let rest = rest.trim();
        let offset_ms: i64 = number(t, "time").map_err(err)?;
        if offset_ms < 0 {
            return Err(err("time must be non-negative".into()));
        }
        if offset_ms < last {
            return Err(err(format!("time {offset_ms} is earlier than the previous event at {last}")));
        }
        last = offset_ms;
        let args: Vec<&str> = rest.split_whitespace().collect();
        let action = parse_action(kind, &args, rest).map_err(err)?;
        events.push(ScenarioEvent { line, offset_ms, action });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_kinds() {
        let text = "\
# comment
0 owner +8801712345678
10    cmd   cli turn on bedroom ceiling   # trailing
20 beam b1
30 beam b1 clear
40 tank 25.5
50 gps car 23.7 90.4
60 presence d6 fob-1
70 phone-link pixel up
80 phone-pair pixel
90 phone-op sms-send alice hi there
100 phone-sever
";
        let events = parse_scenario(text).unwrap();
        assert_eq!(events.len(), 11);
        assert_eq!(
            events[1].action,
            ScenarioAction::Cmd { channel: Channel::Cli, text: "turn on bedroom ceiling".into() }
        );
        assert_eq!(events[2].action, ScenarioAction::Beam { beam: "b1".into(), broken: true });
        assert_eq!(events[3].action, ScenarioAction::Beam { beam: "b1".into(), broken: false });
        assert_eq!(
            events[9].action,
            ScenarioAction::PhoneOp(PhoneOp::SmsSend { to: "alice".into(), body: "hi there".into() })
        );
        assert_eq!(events[0].line, 2);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(parse_scenario("10 beam b1\n5 beam b1\n").unwrap_err().line, 2);
        assert!(parse_scenario("x beam b1\n").is_err());
        assert!(parse_scenario("0 teleport\n").is_err());
        assert!(parse_scenario("0 tank\n").is_err());
        assert!(parse_scenario("0 cmd pigeon turn on x\n").is_err());
    }
}
