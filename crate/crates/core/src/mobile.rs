//! Virtual mobile: a paired phone driven from a hub session.
//!
//! The phone runs as an agent ([`PhoneAgent`]) that talks to the hub over a
//! line protocol ([`HubToAgent`], [`AgentToHub`]). The hub side ([`Bridge`])
//! keeps one pairing per control session and tracks whether each phone's link
//! is up. Agents may live in-process (sim runs) or in a separate `hub phone`
//! process; both speak the same lines.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ErrCode;
use crate::fields;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MobileError {
    #[error("{0}")]
    Parse(String),
    #[error("no phone paired with this session")]
    NotPaired,
    #[error("link to phone {0} lost")]
    LinkLost(String),
    #[error("a call is already in progress")]
    BusyCall,
    #[error("unknown contact {0:?}")]
    UnknownContact(String),
    #[error("phone {0} is not connected")]
    PhoneUnreachable(String),
    #[error("session already paired with {0}")]
    AlreadyPaired(String),
    #[error("phone {0} rejected the pairing")]
    Rejected(String),
    #[error("no call to hang up")]
    NoCall,
    #[error("{code} {message}")]
    Remote { code: String, message: String },
}

impl MobileError {
    pub fn err_code(&self) -> ErrCode {
        match self {
            MobileError::Parse(_) => ErrCode::Parse,
            MobileError::NotPaired => ErrCode::NotPaired,
            MobileError::LinkLost(_) => ErrCode::LinkLost,
            MobileError::BusyCall => ErrCode::Busy,
            MobileError::UnknownContact(_) => ErrCode::Contact,
            MobileError::PhoneUnreachable(_) => ErrCode::Unreachable,
            MobileError::AlreadyPaired(_) => ErrCode::State,
            MobileError::Rejected(_) => ErrCode::Rejected,
            MobileError::NoCall => ErrCode::State,
            MobileError::Remote { .. } => ErrCode::Unavailable,
        }
    }

    /// The message part of an `ERR` line.
    pub fn message(&self) -> String {
        self.to_string()
    }

    /// Rebuilds a phone-side error from its wire code.
    pub fn from_wire(code: &str, message: &str) -> MobileError {
        match code {
            "EBUSY" => MobileError::BusyCall,
            "ECONTACT" => MobileError::UnknownContact(
                message.strip_prefix("unknown contact ").map(|s| s.trim_matches('"').to_string()).unwrap_or_default(),
            ),
            "ESTATE" => MobileError::NoCall,
            "EPARSE" => MobileError::Parse(message.to_string()),
            _ => MobileError::Remote { code: code.to_string(), message: message.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhoneOp {
    Call(String),
    Hangup,
    SmsSend { to: String, body: String },
    SmsList,
    PhonebookList,
    PhonebookGet(String),
}

impl PhoneOp {
    /// `call <who>`, `hangup`, `sms-send <who> <body...>`, `sms-list`,
    /// `phonebook-list`, `phonebook-get <name>`.
    pub fn parse_words(text: &str) -> Result<PhoneOp, MobileError> {
        let text = text.trim();
        let (op, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let rest = rest.trim();
        let bad = || MobileError::Parse(format!("bad phone operation {text:?}"));
        match (op.to_ascii_lowercase().as_str(), rest.is_empty()) {
            ("call", false) if !rest.contains(char::is_whitespace) => Ok(PhoneOp::Call(rest.to_string())),
            ("hangup", true) => Ok(PhoneOp::Hangup),
            ("sms-send", false) => {
                let (to, body) = rest.split_once(char::is_whitespace).ok_or_else(bad)?;
                Ok(PhoneOp::SmsSend { to: to.to_string(), body: body.trim_start().to_string() })
            }
            ("sms-list", true) => Ok(PhoneOp::SmsList),
            ("phonebook-list", true) => Ok(PhoneOp::PhonebookList),
            ("phonebook-get", false) => Ok(PhoneOp::PhonebookGet(rest.to_string())),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhoneOp::Call(_) => "call",
            PhoneOp::Hangup => "hangup",
            PhoneOp::SmsSend { .. } => "sms-send",
            PhoneOp::SmsList => "sms-list",
            PhoneOp::PhonebookList => "phonebook-list",
            PhoneOp::PhonebookGet(_) => "phonebook-get",
        }
    }
}

impl fmt::Display for PhoneOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhoneOp::Call(who) => write!(f, "call {who}"),
            PhoneOp::Hangup => f.write_str("hangup"),
            PhoneOp::SmsSend { to, body } => write!(f, "sms-send {to} {body}"),
            PhoneOp::SmsList => f.write_str("sms-list"),
            PhoneOp::PhonebookList => f.write_str("phonebook-list"),
            PhoneOp::PhonebookGet(name) => write!(f, "phonebook-get {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallState {
    Idle,
    Dialing(String),
    InCall(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSms {
    pub outgoing: bool,
    pub peer: String,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneProfile {
    pub id: String,
    #[serde(default)]
    pub phonebook: BTreeMap<String, String>,
    #[serde(default)]
    pub inbox: Vec<StoredSms>,
    #[serde(default = "yes")]
    pub accept_pairing: bool,
    #[serde(default = "yes")]
    pub auto_answer: bool,
}

fn yes() -> bool {
    true
}

impl PhoneProfile {
    pub fn new(id: &str) -> Self {
        Self { id: id.to_string(), accept_pairing: true, auto_answer: true, ..Default::default() }
    }
}

/// The phone itself: phonebook, message store and call state.
#[derive(Debug, Clone)]
pub struct PhoneAgent {
    profile: PhoneProfile,
    sms: Vec<StoredSms>,
    call: CallState,
}

fn is_number(s: &str) -> bool {
    let digits = s.strip_prefix('+').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

impl PhoneAgent {
    pub fn new(profile: PhoneProfile) -> Self {
        let sms = profile.inbox.clone();
        Self { profile, sms, call: CallState::Idle }
    }

    pub fn id(&self) -> &str {
        &self.profile.id
    }

    pub fn call_state(&self) -> &CallState {
        &self.call
    }

    pub fn messages(&self) -> &[StoredSms] {
        &self.sms
    }

    fn resolve(&self, who: &str) -> Result<String, MobileError> {
        if is_number(who) {
            return Ok(who.to_string());
        }
        self.profile
            .phonebook
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(who))
            .map(|(_, number)| number.clone())
            .ok_or_else(|| MobileError::UnknownContact(who.to_string()))
    }

    pub fn perform(&mut self, op: &PhoneOp) -> Result<Vec<String>, MobileError> {
        match op {
            PhoneOp::Call(who) => {
                if self.call != CallState::Idle {
                    return Err(MobileError::BusyCall);
                }
                let number = self.resolve(who)?;
                let (state, label) = if self.profile.auto_answer {
                    (CallState::InCall(number.clone()), "in-call")
                } else {
                    (CallState::Dialing(number.clone()), "dialing")
                };
                self.call = state;
                Ok(vec![label.to_string(), number])
            }
            PhoneOp::Hangup => match std::mem::replace(&mut self.call, CallState::Idle) {
                CallState::Idle => Err(MobileError::NoCall),
                CallState::Dialing(n) | CallState::InCall(n) => Ok(vec!["idle".to_string(), n]),
            },
            PhoneOp::SmsSend { to, body } => {
                let number = self.resolve(to)?;
                self.sms.push(StoredSms { outgoing: true, peer: number.clone(), body: body.clone() });
                Ok(vec!["sent".to_string(), number])
            }
            PhoneOp::SmsList => Ok(self
                .sms
                .iter()
                .map(|m| format!("{} {} {}", if m.outgoing { "out" } else { "in" }, m.peer, m.body))
                .collect()),
            PhoneOp::PhonebookList => {
                Ok(self.profile.phonebook.iter().map(|(name, number)| format!("{name} {number}")).collect())
            }
            PhoneOp::PhonebookGet(name) => {
                let number = self.resolve(name).ok().filter(|_| !is_number(name));
                number.map(|n| vec![name.clone(), n]).ok_or_else(|| MobileError::UnknownContact(name.clone()))
            }
        }
    }

    /// Answers one hub line. `None` means nothing to send back.
    pub fn respond(&mut self, msg: &HubToAgent) -> Option<AgentToHub> {
        match msg {
            HubToAgent::PairRequest { sid } => Some(if self.profile.accept_pairing {
                AgentToHub::Accept { sid: *sid }
            } else {
                AgentToHub::Reject { sid: *sid }
            }),
            HubToAgent::Op { sid, op } => Some(AgentToHub::Result { sid: *sid, result: self.perform(op) }),
            HubToAgent::Sever { .. } => None,
        }
    }

    pub fn hello(&self) -> AgentToHub {
        AgentToHub::Hello { phone: self.profile.id.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HubToAgent {
    PairRequest { sid: u64 },
    Op { sid: u64, op: PhoneOp },
    Sever { sid: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentToHub {
    Hello { phone: String },
    Accept { sid: u64 },
    Reject { sid: u64 },
    Result { sid: u64, result: Result<Vec<String>, MobileError> },
    Bye,
}

fn sid_field(s: Option<&String>) -> Result<u64, MobileError> {
    s.and_then(|s| s.parse().ok()).ok_or_else(|| MobileError::Parse("missing session id".into()))
}

impl HubToAgent {
    pub fn render(&self) -> String {
        match self {
            HubToAgent::PairRequest { sid } => fields::join(["PAIR?".to_string(), sid.to_string()]),
            HubToAgent::Op { sid, op } => fields::join(["OP".to_string(), sid.to_string(), op.to_string()]),
            HubToAgent::Sever { sid } => fields::join(["SEVER".to_string(), sid.to_string()]),
        }
    }

    pub fn parse(line: &str) -> Result<HubToAgent, MobileError> {
        let f = fields::split(line).map_err(|e| MobileError::Parse(e.to_string()))?;
        match (f.first().map(String::as_str), f.len()) {
            (Some("PAIR?"), 2) => Ok(HubToAgent::PairRequest { sid: sid_field(f.get(1))? }),
            (Some("SEVER"), 2) => Ok(HubToAgent::Sever { sid: sid_field(f.get(1))? }),
            (Some("OP"), 3) => Ok(HubToAgent::Op { sid: sid_field(f.get(1))?, op: PhoneOp::parse_words(&f[2])? }),
            _ => Err(MobileError::Parse(format!("bad hub line {line:?}"))),
        }
    }
}

impl AgentToHub {
    pub fn render(&self) -> String {
        let f: Vec<String> = match self {
            AgentToHub::Hello { phone } => vec!["HELLO".into(), phone.clone()],
            AgentToHub::Accept { sid } => vec!["ACCEPT".into(), sid.to_string()],
            AgentToHub::Reject { sid } => vec!["REJECT".into(), sid.to_string()],
            AgentToHub::Result { sid, result: Ok(out) } => {
                let mut f = vec!["RES".into(), sid.to_string(), "OK".into()];
                f.extend(out.iter().cloned());
                f
            }
            AgentToHub::Result { sid, result: Err(e) } => {
                vec!["RES".into(), sid.to_string(), "ERR".into(), e.err_code().name().into(), e.message()]
            }
            AgentToHub::Bye => vec!["BYE".into()],
        };
        fields::join(f)
    }

    pub fn parse(line: &str) -> Result<AgentToHub, MobileError> {
        let f = fields::split(line).map_err(|e| MobileError::Parse(e.to_string()))?;
        let bad = || MobileError::Parse(format!("bad agent line {line:?}"));
        match f.first().map(String::as_str) {
            Some("HELLO") if f.len() == 2 && !f[1].is_empty() => Ok(AgentToHub::Hello { phone: f[1].clone() }),
            Some("ACCEPT") if f.len() == 2 => Ok(AgentToHub::Accept { sid: sid_field(f.get(1))? }),
            Some("REJECT") if f.len() == 2 => Ok(AgentToHub::Reject { sid: sid_field(f.get(1))? }),
            Some("BYE") if f.len() == 1 => Ok(AgentToHub::Bye),
            Some("RES") if f.len() >= 3 => {
                let sid = sid_field(f.get(1))?;
                let result = match f[2].as_str() {
                    "OK" => Ok(f[3..].to_vec()),
                    "ERR" if f.len() == 5 => Err(MobileError::from_wire(&f[3], &f[4])),
                    _ => return Err(bad()),
                };
                Ok(AgentToHub::Result { sid, result })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairState {
    Requested,
    Active,
    /// The phone's link dropped; operations report the lost link until the session severs.
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub phone: String,
    pub state: PairState,
}

/// Hub-side view of phones and pairings. A pairing is keyed by the control
/// session that asked for it, and that key doubles as the agent-wire `sid`.
#[derive(Debug, Clone, Default)]
pub struct Bridge {
    links: BTreeMap<String, bool>,
    pairings: BTreeMap<u64, Pairing>,
}

impl Bridge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn link_up(&mut self, phone: &str) {
        self.links.insert(phone.to_string(), true);
    }

    /// Marks the phone offline and returns the sessions whose pairing was lost.
    pub fn link_down(&mut self, phone: &str) -> Vec<u64> {
        if let Some(up) = self.links.get_mut(phone) {
            *up = false;
        }
        let mut lost = Vec::new();
        for (sid, p) in self.pairings.iter_mut() {
            if p.phone == phone && p.state != PairState::Closed {
                p.state = PairState::Closed;
                lost.push(*sid);
            }
        }
        lost
    }

    pub fn is_up(&self, phone: &str) -> bool {
        self.links.get(phone).copied().unwrap_or(false)
    }

    pub fn phones(&self) -> impl Iterator<Item = (&str, bool)> {
        self.links.iter().map(|(p, up)| (p.as_str(), *up))
    }

    pub fn pairing(&self, sid: u64) -> Option<&Pairing> {
        self.pairings.get(&sid)
    }

    pub fn request_pair(&mut self, sid: u64, phone: &str) -> Result<HubToAgent, MobileError> {
        if let Some(p) = self.pairings.get(&sid) {
            if p.state != PairState::Closed {
                return Err(MobileError::AlreadyPaired(p.phone.clone()));
            }
        }
        if !self.is_up(phone) {
            return Err(MobileError::PhoneUnreachable(phone.to_string()));
        }
        self.pairings.insert(sid, Pairing { phone: phone.to_string(), state: PairState::Requested });
        Ok(HubToAgent::PairRequest { sid })
    }

    pub fn pair_answer(&mut self, sid: u64, accepted: bool) -> Result<String, MobileError> {
        let p = match self.pairings.get_mut(&sid) {
            Some(p) if p.state == PairState::Requested => p,
            _ => return Err(MobileError::NotPaired),
        };
        let phone = p.phone.clone();
        if accepted {
            p.state = PairState::Active;
            Ok(phone)
        } else {
            self.pairings.remove(&sid);
            Err(MobileError::Rejected(phone))
        }
    }

    pub fn op(&self, sid: u64, op: PhoneOp) -> Result<(String, HubToAgent), MobileError> {
        match self.pairings.get(&sid) {
            Some(p) if p.state == PairState::Active => Ok((p.phone.clone(), HubToAgent::Op { sid, op })),
            Some(p) if p.state == PairState::Closed => Err(MobileError::LinkLost(p.phone.clone())),
            _ => Err(MobileError::NotPaired),
        }
    }

    /// Drops the session's pairing. The sever line is only worth sending when the link is up.
    pub fn sever(&mut self, sid: u64) -> Option<(String, Option<HubToAgent>)> {
        let p = self.pairings.remove(&sid)?;
        let line = (self.is_up(&p.phone)).then_some(HubToAgent::Sever { sid });
        Some((p.phone, line))
    }
}
