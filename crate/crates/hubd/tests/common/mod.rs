//! Bringing up a hub for tests, and the golden transcript runner.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use hub_core::scenario::ScenarioAction;
use hub_core::HubConfig;
use hubd::client::Client;
use hubd::{ClockMode, Options, Running};

pub struct TestHub {
    pub running: Running,
    pub dir: tempfile::TempDir,
}

impl TestHub {
    pub fn control(&self) -> String {
        self.running.control.to_string()
    }

    pub async fn client(&self) -> Client {
        Client::connect(&self.control()).await.expect("connect")
    }

    pub async fn owner(&self) -> Client {
        let mut c = self.client().await;
        c.auth("owner-secret", "cli").await.expect("owner auth");
        c
    }
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn golden_config() -> HubConfig {
    HubConfig::load(&manifest_dir().join("tests/golden/hub.toml")).expect("golden config")
}

pub async fn start(mut config: HubConfig, clock: ClockMode) -> TestHub {
    let dir = tempfile::tempdir().expect("tempdir");
    config.data_dir = dir.path().to_path_buf();
    config.listen.control = "127.0.0.1:0".into();
    config.listen.http = "127.0.0.1:0".into();
    config.listen.agent = "127.0.0.1:0".into();
    let running = hubd::start(&config, Options { clock, start: None }).await.expect("hub starts");
    TestHub { running, dir }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs a transcript script against a fresh manual-clock hub and returns the
/// transcript.
///
/// Script lines are `<s>> <request>` to send on session `<s>` (connecting on
/// first use) or `@<directive>`: `@advance <ms>`, `@beam <id> [clear]`,
/// `@link-down <phone>`, `@link-up <phone>`, `@hangup <s>`. After every step
/// each open session is synced with an unrecorded `PING`, so the transcript
/// holds every byte the hub sent, in order, with frame payloads in hex.
pub async fn run_script(script: &str) -> String {
    let hub = start(golden_config(), ClockMode::Manual).await;
    // Each session with the number of script PINGs still unanswered.
    let mut sessions: BTreeMap<String, (Client, usize)> = BTreeMap::new();
    let mut out = String::new();
    for raw in script.lines() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(directive) = line.strip_prefix('@') {
            writeln!(out, "{line}").unwrap();
            let words: Vec<&str> = directive.split_whitespace().collect();
            match words.as_slice() {
                ["advance", ms] => {
                    hub.running.hub.advance(ms.parse().expect("advance ms")).await.expect("hub alive");
                }
                ["beam", id, rest @ ..] => {
                    let broken = rest.first() != Some(&"clear");
                    let action = ScenarioAction::Beam { beam: id.to_string(), broken };
                    hub.running.hub.scenario(action).await.expect("hub alive").expect("beam applies");
                }
                [dir @ ("link-down" | "link-up"), phone] => {
                    let action = ScenarioAction::PhoneLink { phone: phone.to_string(), up: *dir == "link-up" };
                    hub.running.hub.scenario(action).await.expect("hub alive").expect("link applies");
                }
                ["hangup", name] => {
                    sessions.remove(*name);
                }
                other => panic!("unknown directive {other:?}"),
            }
        } else {
            let (name, request) = line.split_once("> ").unwrap_or_else(|| panic!("bad script line {line:?}"));
            writeln!(out, "{name}> {request}").unwrap();
            if !sessions.contains_key(name) {
                sessions.insert(name.to_string(), (hub.client().await, 0));
            }
            let (client, pings) = sessions.get_mut(name).unwrap();
            client.send(request).await.expect("send");
            if request.trim() == "PING" {
                *pings += 1;
            }
        }
        // Everything the hub owes any session is now queued ahead of the sync reply.
        let mut closed = Vec::new();
        for (name, (client, pings)) in sessions.iter_mut() {
            if !drain(name, client, pings, &mut out).await {
                closed.push(name.clone());
            }
        }
        for name in closed {
            sessions.remove(&name);
        }
    }
    drop(sessions);
    hub.running.shutdown().await;
    out
}

/// Records what a session received up to the sync reply. False once the hub
/// has closed the connection.
async fn drain(name: &str, client: &mut Client, pings: &mut usize, out: &mut String) -> bool {
    if client.send("PING").await.is_err() {
        return read_to_end(name, client, out).await;
    }
    loop {
        let Some(line) = client.read_line().await.expect("read") else {
            writeln!(out, "{name}< <closed>").unwrap();
            return false;
        };
        if line == "OK pong" {
            if *pings == 0 {
                return true;
            }
            *pings -= 1;
        }
        record(name, client, &line, out).await;
    }
}

async fn read_to_end(name: &str, client: &mut Client, out: &mut String) -> bool {
    while let Ok(Some(line)) = client.read_line().await {
        record(name, client, &line, out).await;
    }
    writeln!(out, "{name}< <closed>").unwrap();
    false
}

async fn record(name: &str, client: &mut Client, line: &str, out: &mut String) {
    writeln!(out, "{name}< {line}").unwrap();
    if let Some(header) = line.strip_prefix("FRAME ") {
        let len: usize = header.rsplit(' ').next().and_then(|n| n.parse().ok()).expect("frame length");
        let payload = client.read_bytes(len).await.expect("frame payload");
        writeln!(out, "{name}< ~{}", hex(&payload)).unwrap();
    }
}

pub const TRANSCRIPTS: &[&str] = &["auth_failure", "device_command", "arm_alert_disarm", "stream", "desktop", "phone_bridge"];

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

/// Runs one stored script and compares it with its golden transcript, or
/// rewrites the transcript when `UPDATE_GOLDEN=1`.
pub async fn check_transcript(name: &str) -> Result<String, String> {
    let dir = golden_dir();
    let script = std::fs::read_to_string(dir.join(format!("{name}.script"))).map_err(|e| format!("{name}.script: {e}"))?;
    let got = run_script(&script).await;
    let golden_path = dir.join(format!("{name}.golden"));
    if std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| v == "1") {
        std::fs::write(&golden_path, &got).map_err(|e| e.to_string())?;
        return Ok(format!("{name}: rewrote golden ({} bytes)", got.len()));
    }
    let want = std::fs::read_to_string(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
    if got == want {
        return Ok(format!("{name}: {} bytes identical", got.len()));
    }
    let first = got
        .lines()
        .zip(want.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| got.lines().count().min(want.lines().count()));
    Err(format!(
        "{name}: transcript differs at line {}: got {:?}, want {:?}",
        first + 1,
        got.lines().nth(first).unwrap_or("<end>"),
        want.lines().nth(first).unwrap_or("<end>")
    ))
}

