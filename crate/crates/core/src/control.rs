//! Control-protocol vocabulary: one UTF-8 line per message.
//!
//! Requests are `<VERB> [args...]`. Responses are `OK [payload]` or
//! `ERR <code> <message>`; pushes are `EVT <topic> <payload>`. Payload fields are
//! tab-separated and escaped with [`crate::fields`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::desktop::PowerAction;
use crate::fields;
use crate::grammar::Channel;
use crate::mobile::PhoneOp;

/// Longest request line accepted, in bytes, excluding the terminator.
pub const MAX_LINE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Principal {
    Owner,
    Guest,
    Unauthenticated,
}

impl Principal {
    pub fn name(self) -> &'static str {
        match self {
            Principal::Owner => "owner",
            Principal::Guest => "guest",
            Principal::Unauthenticated => "unauthenticated",
        }
    }

    pub fn is_authenticated(self) -> bool {
        self != Principal::Unauthenticated
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Principal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "owner" => Ok(Principal::Owner),
            "guest" => Ok(Principal::Guest),
            "unauthenticated" => Ok(Principal::Unauthenticated),
            _ => Err(format!("unknown principal {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "state")]
    State,
    #[serde(rename = "alert")]
    Alert,
    #[serde(rename = "stream-meta")]
    StreamMeta,
}

impl Topic {
    pub const ALL: [Topic; 3] = [Topic::State, Topic::Alert, Topic::StreamMeta];

    pub fn name(self) -> &'static str {
        match self {
            Topic::State => "state",
            Topic::Alert => "alert",
            Topic::StreamMeta => "stream-meta",
        }
    }
}

impl FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown topic {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrCode {
    Auth,
    Parse,
    Target,
    Verb,
    Denied,
    TooLong,
    State,
    UnknownCmd,
    Unavailable,
    Slow,
    NotPaired,
    LinkLost,
    Busy,
    Contact,
    Rejected,
    Unreachable,
    NoFix,
    Camera,
}

impl ErrCode {
    pub fn name(self) -> &'static str {
        match self {
            ErrCode::Auth => "EAUTH",
            ErrCode::Parse => "EPARSE",
            ErrCode::Target => "ETARGET",
            ErrCode::Verb => "EVERB",
            ErrCode::Denied => "EDENIED",
            ErrCode::TooLong => "ETOOLONG",
            ErrCode::State => "ESTATE",
            ErrCode::UnknownCmd => "EUNKNOWNCMD",
            ErrCode::Unavailable => "EUNAVAILABLE",
            ErrCode::Slow => "ESLOW",
            ErrCode::NotPaired => "ENOTPAIRED",
            ErrCode::LinkLost => "ELINKLOST",
            ErrCode::Busy => "EBUSY",
            ErrCode::Contact => "ECONTACT",
            ErrCode::Rejected => "EREJECTED",
            ErrCode::Unreachable => "EUNREACHABLE",
            ErrCode::NoFix => "ENOFIX",
            ErrCode::Camera => "ECAMERA",
        }
    }
}

impl fmt::Display for ErrCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok(Vec<String>),
    Err(ErrCode, String),
}

impl Reply {
    pub fn ok<I, S>(fields: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Reply::Ok(fields.into_iter().map(Into::into).collect())
    }

    pub fn err(code: ErrCode, message: impl fmt::Display) -> Self {
        Reply::Err(code, message.to_string())
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Reply::Ok(_))
    }

    /// The wire line, without the trailing newline.
    pub fn render(&self) -> String {
        match self {
            Reply::Ok(f) if f.is_empty() => "OK".to_string(),
            Reply::Ok(f) => format!("OK {}", fields::join(f)),
            Reply::Err(code, msg) => format!("ERR {code} {}", fields::escape(msg)),
        }
    }

    pub fn parse(line: &str) -> Option<Reply> {
        if line == "OK" {
            return Some(Reply::Ok(Vec::new()));
        }
        if let Some(rest) = line.strip_prefix("OK ") {
            return fields::split(rest).ok().map(Reply::Ok);
        }
        let rest = line.strip_prefix("ERR ")?;
        let (code, msg) = rest.split_once(' ').unwrap_or((rest, ""));
        let code = ALL_CODES.iter().copied().find(|c| c.name() == code)?;
        Some(Reply::Err(code, fields::unescape(msg).ok()?))
    }
}

const ALL_CODES: [ErrCode; 18] = [
    ErrCode::Auth,
    ErrCode::Parse,
    ErrCode::Target,
    ErrCode::Verb,
    ErrCode::Denied,
    ErrCode::TooLong,
    ErrCode::State,
    ErrCode::UnknownCmd,
    ErrCode::Unavailable,
    ErrCode::Slow,
    ErrCode::NotPaired,
    ErrCode::LinkLost,
    ErrCode::Busy,
    ErrCode::Contact,
    ErrCode::Rejected,
    ErrCode::Unreachable,
    ErrCode::NoFix,
    ErrCode::Camera,
];

/// A push notification for subscribed sessions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Push {
    pub topic: Topic,
    pub fields: Vec<String>,
}

impl Push {
    pub fn render(&self) -> String {
        format!("EVT {} {}", self.topic.name(), fields::join(&self.fields))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Ping,
    Auth { token: String, channel: Option<Channel> },
    Cmd(String),
    Sub(Topic),
    Stream(String),
    Stop,
    Owner(String),
    Desk,
    Click { x: u32, y: u32, width: u32, height: u32 },
    Exec(String),
    Power(PowerAction),
    Pair(String),
    Phone(PhoneOp),
    Quit,
}

impl Request {
    pub fn verb(&self) -> &'static str {
        match self {
            Request::Ping => "PING",
            Request::Auth { .. } => "AUTH",
            Request::Cmd(_) => "CMD",
            Request::Sub(_) => "SUB",
            Request::Stream(_) => "STREAM",
            Request::Stop => "STOP",
            Request::Owner(_) => "OWNER",
            Request::Desk => "DESK",
            Request::Click { .. } => "CLICK",
            Request::Exec(_) => "EXEC",
            Request::Power(_) => "POWER",
            Request::Pair(_) => "PAIR",
            Request::Phone(_) => "PHONE",
            Request::Quit => "QUIT",
        }
    }

    /// Allowed before `AUTH` succeeds.
    pub fn is_open(&self) -> bool {
        matches!(self, Request::Ping | Request::Auth { .. } | Request::Quit)
    }

    /// Requests a guest may not make.
    pub fn owner_only(&self) -> bool {
        matches!(
            self,
            Request::Owner(_) | Request::Exec(_) | Request::Power(_) | Request::Pair(_) | Request::Phone(_)
        )
    }

    pub fn parse(line: &str) -> Result<Request, Reply> {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let (verb, rest) = match line.split_once(' ') {
            Some((v, r)) => (v, r),
            None => (line, ""),
        };
        let parse_err = |m: &str| Reply::err(ErrCode::Parse, m);
        let args: Vec<&str> = rest.split_whitespace().collect();
        let req = match (verb.to_ascii_uppercase().as_str(), args.as_slice()) {
            ("PING", []) => Request::Ping,
            ("QUIT", []) => Request::Quit,
            ("AUTH", [token]) => Request::Auth { token: token.to_string(), channel: None },
            ("AUTH", [token, channel]) => Request::Auth {
                token: token.to_string(),
                channel: Some(channel.parse().map_err(|e: crate::grammar::GrammarError| parse_err(&e.to_string()))?),
            },
            ("CMD", [_, ..]) => Request::Cmd(rest.to_string()),
            ("SUB", [topic]) => Request::Sub(topic.parse().map_err(|e: String| parse_err(&e))?),
            ("STREAM", [camera]) => Request::Stream(camera.to_string()),
            ("STOP", []) => Request::Stop,
            ("OWNER", [number]) => Request::Owner(number.to_string()),
            ("DESK", []) => Request::Desk,
            ("CLICK", [x, y, w, h]) => {
                let n = |s: &str| s.parse::<u32>().map_err(|_| parse_err("CLICK needs x y width height"));
                Request::Click { x: n(x)?, y: n(y)?, width: n(w)?, height: n(h)? }
            }
            ("EXEC", [_, ..]) => Request::Exec(rest.to_string()),
            ("POWER", [action]) => Request::Power(action.parse().map_err(|e: String| parse_err(&e))?),
            ("PAIR", [phone]) => Request::Pair(phone.to_string()),
            ("PHONE", [_, ..]) => Request::Phone(PhoneOp::parse_words(rest).map_err(|e| parse_err(&e.to_string()))?),
            (
                "PING" | "QUIT" | "AUTH" | "CMD" | "SUB" | "STREAM" | "STOP" | "OWNER" | "DESK" | "CLICK" | "EXEC"
                | "POWER" | "PAIR" | "PHONE",
                _,
            ) => return Err(parse_err(&format!("wrong arguments for {}", verb.to_ascii_uppercase()))),
            _ => return Err(parse_err(&format!("unknown request {verb:?}"))),
        };
        Ok(req)
    }
}
