//! Independent oracles and the checks built on them. Shared by the core
//! integration tests and the acceptance runner in `hubd`.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use hub_core::automation::{AssetTrack, OccupancyZone};
use hub_core::control::{Principal, Reply};
use hub_core::desktop::{map_click, ClickReport, Desktop, Resolution};
use hub_core::event::{read_log, Event, EventKind};
use hub_core::grammar::{self, Action, AliasMap, AssetRef, Channel, Command, GrammarError, Inventory, Target};
use hub_core::home::{Device, DeviceId, DeviceKind, DeviceState, DeviceVerb};
use hub_core::hub::{initial_snapshot, LineOutcome};
use hub_core::scenario::parse_scenario;
use hub_core::surveillance::{CameraSpec, Surveillance};
use hub_core::{replay, EventLog, Hub, HubConfig, Timestamp, DEFAULT_SIM_EPOCH};

pub type Check = Result<String, String>;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn sample_config() -> HubConfig {
    HubConfig::load(&repo_root().join("config/hub.toml")).expect("sample config loads")
}

pub fn scenario_files() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(repo_root().join("scenarios"))
        .expect("scenarios dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- IR security

/// Inputs of the security automaton as the reference guard sees them.
#[derive(Debug, Clone, PartialEq)]
pub enum IrInput {
    SetNumber(String),
    Start,
    Stop,
    Beam { beam: &'static str, broken: bool },
    Wait(i64),
}

/// Reference interpreter of the guard: store a number (only valid
/// ones), scan only once a number exists, alert on a broken beam while
/// scanning, at most once per debounce window, restarting the window on arm.
pub fn ir_reference(inputs: &[IrInput], debounce_ms: i64) -> Vec<(&'static str, u64)> {
    let (mut number, mut scanning, mut last, mut alerts, mut now) = (false, false, None::<i64>, 0u64, 0i64);
    let mut trace = Vec::new();
    for input in inputs {
        match input {
            IrInput::SetNumber(n) => {
                let digits = n.strip_prefix('+').unwrap_or(n);
                number |= (6..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit());
            }
            IrInput::Start if number && !scanning => (scanning, last) = (true, None),
            IrInput::Stop => scanning = false,
            IrInput::Beam { broken: true, .. } if scanning && last.is_none_or(|t| now - t >= debounce_ms) => {
                alerts += 1;
                last = Some(now);
            }
            IrInput::Wait(ms) => now += ms,
            _ => {}
        }
        trace.push((if !number { "need-number" } else if scanning { "scanning" } else { "ready" }, alerts));
    }
    trace
}

pub fn random_ir_inputs(rng: &mut StdRng) -> Vec<IrInput> {
    let n = rng.gen_range(1..40);
    (0..n)
        .map(|_| match rng.gen_range(0..100) {
            0..=9 => IrInput::SetNumber(format!("+8801{}", rng.gen_range(100_000_000u64..999_999_999))),
            10..=13 => IrInput::SetNumber(["hello", "+12", "", "+1234567890123456"][rng.gen_range(0..4)].to_string()),
            14..=31 => IrInput::Start,
            32..=44 => IrInput::Stop,
            45..=74 => IrInput::Beam { beam: ["b1", "b2"][rng.gen_range(0..2)], broken: true },
            75..=84 => IrInput::Beam { beam: ["b1", "b2"][rng.gen_range(0..2)], broken: false },
            _ => IrInput::Wait(rng.gen_range(0..3_000)),
        })
        .collect()
}

pub const SECURITY_CONFIG: &str = r#"
beams = ["b1", "b2"]

[auth]
owner = "tok"
guest = "visitor"

[timing]
debounce_ms = 2000

[[devices]]
id = "d1"
kind = "light"
room = "hall"
label = "lamp"

[security]
zone = "hall"
beams = ["b1", "b2"]
camera = "cam1"

[[cameras]]
id = "cam1"
width = 128
height = 8
fps = 1
"#;

pub fn config_in(text: &str, data_dir: &Path) -> HubConfig {
    let mut config = HubConfig::from_toml(text).expect("test config is valid");
    config.data_dir = data_dir.to_path_buf();
    config
}

pub fn owner_session(hub: &mut Hub, token: &str) -> u64 {
    let sid = hub.open_session("test", Channel::Cli, None);
    let reply = line_reply(hub, sid, &format!("AUTH {token}"));
    assert!(reply.is_ok(), "auth failed: {}", reply.render());
    sid
}

pub fn line_reply(hub: &mut Hub, sid: u64, line: &str) -> Reply {
    match hub.handle_line(sid, line) {
        LineOutcome::Reply(r) | LineOutcome::Quit(r) => r,
        LineOutcome::Stream { reply, .. } => reply,
        LineOutcome::Deferred => panic!("unexpected deferred reply to {line:?}"),
    }
}

/// (phase, alert count) after each input.
pub type IrTrace = Vec<(String, u64)>;

/// Drives one input sequence through a hub over its control protocol and
/// returns the (phase, alert-count) trace.
pub fn ir_hub_trace(inputs: &[IrInput], data_dir: &Path) -> Result<(IrTrace, Vec<Event>), String> {
    let config = config_in(SECURITY_CONFIG, data_dir);
    let mut hub = Hub::new(&config, EventLog::in_memory(), DEFAULT_SIM_EPOCH).map_err(|e| e.to_string())?;
    let sid = owner_session(&mut hub, "tok");
    let mut trace = Vec::new();
    for input in inputs {
        match input {
            IrInput::SetNumber(n) if n.is_empty() => {
                // An empty argument is not a well-formed OWNER request at all.
                line_reply(&mut hub, sid, "OWNER");
            }
            IrInput::SetNumber(n) => {
                line_reply(&mut hub, sid, &format!("OWNER {n}"));
            }
            IrInput::Start => {
                line_reply(&mut hub, sid, "CMD start scanning");
            }
            IrInput::Stop => {
                line_reply(&mut hub, sid, "CMD stop scanning");
            }
            IrInput::Beam { beam, broken } => hub.beam(beam, *broken).map_err(|e| e.to_string())?,
            IrInput::Wait(ms) => hub.advance_to(hub.now().plus_millis(*ms)).map_err(|e| e.to_string())?,
        }
        let snap = hub.snapshot();
        trace.push((snap.security, snap.alerts));
    }
    Ok((trace, hub.log().events().to_vec()))
}

/// Every alert is followed by its SMS dispatch and stored image, the alarm
/// text is exact, the outbox holds one line per sent SMS and every image file
/// is a non-empty PGM. Returns the number of alerts checked.
pub fn check_effect_triad(events: &[Event], data_dir: &Path) -> Result<usize, String> {
    let mut alerts = 0;
    let mut sent = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if e.kind == EventKind::SmsDispatch && e.attr("result") == Some("sent") {
            sent.push(e.attr("body").unwrap_or_default().to_string());
        }
        if e.kind != EventKind::Alert {
            continue;
        }
        alerts += 1;
        ensure(e.attr("alarm") == Some("Someone in the room"), || format!("alert {} alarm text {:?}", e.seq, e.attr("alarm")))?;
        let sms = events.get(i + 1).filter(|n| n.kind == EventKind::SmsDispatch);
        let sms = sms.ok_or_else(|| format!("alert {} not followed by sms-dispatch", e.seq))?;
        let expected = format!("Someone entered in secured zone {} at {}", e.subject, e.at.iso());
        ensure(sms.attr("body") == Some(expected.as_str()), || format!("alert {} sms body {:?}", e.seq, sms.attr("body")))?;
        let image = events.get(i + 2).filter(|n| n.kind == EventKind::ImageStored);
        let image = image.ok_or_else(|| format!("alert {} not followed by image-stored", e.seq))?;
        let path = data_dir.join(&image.subject);
        let bytes = fs::read(&path).map_err(|err| format!("alert {} image {}: {err}", e.seq, path.display()))?;
        ensure(bytes.starts_with(b"P5\n") && bytes.len() > 16, || format!("image {} is not a non-empty PGM", path.display()))?;
    }
    let outbox = fs::read_to_string(data_dir.join("outbox.sms")).unwrap_or_default();
    let lines: Vec<&str> = outbox.lines().collect();
    ensure(lines.len() == sent.len(), || format!("outbox has {} lines for {} sent messages", lines.len(), sent.len()))?;
    for (line, body) in lines.iter().zip(&sent) {
        ensure(line.ends_with(&format!("\t{body}")), || format!("outbox line {line:?} does not carry {body:?}"))?;
    }
    Ok(alerts)
}

pub fn criterion_ir_fidelity(sequences: usize, seed: u64) -> Check {
    let started = std::time::Instant::now();
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut steps, mut alerts) = (0, 0);
    for n in 0..sequences {
        let inputs = random_ir_inputs(&mut rng);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let expected = ir_reference(&inputs, 2_000);
        let (actual, events) = ir_hub_trace(&inputs, dir.path())?;
        for (i, ((ep, ea), (ap, aa))) in expected.iter().zip(&actual).enumerate() {
            if ep != ap || ea != aa {
                return Err(format!(
                    "sequence {n} step {i} ({:?}): reference ({ep}, {ea}) hub ({ap}, {aa})",
                    inputs[i]
                ));
            }
        }
        alerts += check_effect_triad(&events, dir.path()).map_err(|e| format!("sequence {n}: {e}"))?;
        steps += inputs.len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed.as_secs_f64() < 10.0, || format!("took {elapsed:?}, budget 10 s"))?;
    Ok(format!("{sequences} sequences, {steps} inputs, {alerts} alerts identical in {:.2} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- scenarios

pub struct ScenarioRun {
    pub log: String,
    pub live: hub_core::HubSnapshot,
    pub replies: Vec<(usize, Reply)>,
    pub data_dir: tempfile::TempDir,
}

pub fn run_scenario_file(config: &HubConfig, path: &Path) -> Result<ScenarioRun, String> {
    let data_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = config.clone();
    config.data_dir = data_dir.path().to_path_buf();
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let events = parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let log_path = data_dir.path().join("events.log");
    let log = EventLog::create(&log_path).map_err(|e| e.to_string())?;
    let mut hub = Hub::new(&config, log, DEFAULT_SIM_EPOCH).map_err(|e| e.to_string())?;
    let replies = hub.run_scenario(&events, DEFAULT_SIM_EPOCH).map_err(|e| e.to_string())?;
    let live = hub.snapshot();
    drop(hub);
    let log = fs::read_to_string(&log_path).map_err(|e| e.to_string())?;
    Ok(ScenarioRun { log, live, replies, data_dir })
}

pub fn criterion_effect_triad() -> Check {
    let config = sample_config();
    let mut total = 0;
    let mut files = 0;
    for path in scenario_files() {
        let run = run_scenario_file(&config, &path)?;
        let events = read_log(&run.log).map_err(|e| e.to_string())?;
        total += check_effect_triad(&events, run.data_dir.path()).map_err(|e| format!("{}: {e}", path.display()))?;
        files += 1;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..50 {
        let inputs = random_ir_inputs(&mut rng);
        let sub = dir.path().join(format!("run{total}"));
        let (_, events) = ir_hub_trace(&inputs, &sub)?;
        total += check_effect_triad(&events, &sub)?;
    }
    ensure(total > 0, || "no alerts were raised, nothing checked".into())?;
    Ok(format!("{total} alerts across {files} scenario files and 50 random runs carry SMS, image and alarm"))
}

pub fn criterion_determinism_replay() -> Check {
    let config = sample_config();
    let mut checked = Vec::new();
    for path in scenario_files() {
        let a = run_scenario_file(&config, &path)?;
        let b = run_scenario_file(&config, &path)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        ensure(a.log == b.log, || format!("{name}: logs differ between runs"))?;
        let base = initial_snapshot(&config).map_err(|e| e.to_string())?;
        let replayed = replay(&a.log, Some(base)).map_err(|e| format!("{name}: {e}"))?;
        ensure(replayed == a.live, || format!("{name}: replay {replayed:?} != live {:?}", a.live))?;
        checked.push(format!("{name} ({} records)", a.log.lines().count()));
    }
    ensure(!checked.is_empty(), || "no scenarios found".into())?;
    Ok(format!("byte-identical logs and replay == live for {}", checked.join(", ")))
}

// ---------------------------------------------------------------- desktop

/// `round(v * to / from)` in floating point; `f64::round` rounds halves away from zero.
pub fn click_oracle(v: u32, from: u32, to: u32) -> u32 {
    (f64::from(v) * f64::from(to) / f64::from(from)).round() as u32
}

pub fn criterion_click_mapping(n: usize, seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..n {
        let vp = Resolution::new(rng.gen_range(1..=4096), rng.gen_range(1..=4096));
        let server = Resolution::new(rng.gen_range(1..=8192), rng.gen_range(1..=8192));
        let report = ClickReport { x: rng.gen_range(0..vp.width), y: rng.gen_range(0..vp.height), viewport: vp };
        let got = map_click(report, server).map_err(|e| e.to_string())?;
        let want = (click_oracle(report.x, vp.width, server.width), click_oracle(report.y, vp.height, server.height));
        ensure(got == want, || format!("click {i}: {report:?} onto {server} gave {got:?}, oracle {want:?}"))?;
        let same = map_click(ClickReport { viewport: server, x: rng.gen_range(0..server.width), y: 0 }, server)
            .map_err(|e| e.to_string())?;
        ensure(same.1 == 0, || "identity map moved y".into())?;
        let origin = map_click(ClickReport { x: 0, y: 0, viewport: vp }, server).map_err(|e| e.to_string())?;
        ensure(origin == (0, 0), || format!("origin mapped to {origin:?}"))?;
    }
    for _ in 0..1_000 {
        let r = Resolution::new(rng.gen_range(1..=4096), rng.gen_range(1..=4096));
        let (x, y) = (rng.gen_range(0..r.width), rng.gen_range(0..r.height));
        let got = map_click(ClickReport { x, y, viewport: r }, r).map_err(|e| e.to_string())?;
        ensure(got == (x, y), || format!("identity failed at ({x},{y}) on {r}"))?;
    }
    let pinned = map_click(ClickReport { x: 512, y: 100, viewport: Resolution::new(1024, 768) }, Resolution::new(1920, 1080));
    ensure(pinned == Ok((960, 141)), || format!("(512,100) 1024x768 -> 1920x1080 gave {pinned:?}"))?;
    Ok(format!("{n} random clicks match the oracle; identity and origin hold"))
}

/// Brute-force point-in-box over every icon.
pub fn hit_oracle(desktop: &Desktop, x: u32, y: u32) -> Option<String> {
    let hits: Vec<&str> = desktop
        .icons()
        .iter()
        .filter(|i| {
            let b = i.bounds;
            (b.x..b.x + b.width).contains(&x) && (b.y..b.y + b.height).contains(&y)
        })
        .map(|i| i.name.as_str())
        .collect();
    assert!(hits.len() <= 1, "icons overlap");
    hits.first().map(|s| s.to_string())
}

// ---------------------------------------------------------------- streaming

/// Exact queue evolution for one frame per tick, K slots, drop-oldest, and a
/// consumer that takes one frame every `every` ticks. Because drop-oldest keeps
/// the newest frames, the queue always holds the `q` most recent seqs, so a pop
/// at tick `i` delivers `i - q + 1`.
pub fn queue_oracle(frames: u64, k: u64, every: u64) -> (Vec<u64>, u64, u64) {
    let (mut q, mut dropped, mut delivered) = (0u64, 0u64, Vec::new());
    for i in 1..=frames {
        if q == k {
            dropped += 1;
        } else {
            q += 1;
        }
        if i % every == 0 && q > 0 {
            delivered.push(i - q + 1);
            q -= 1;
        }
    }
    (delivered, dropped, q)
}

pub fn criterion_streaming(frames: u64, k: usize) -> Check {
    let mut cams = Surveillance::new();
    let origin = DEFAULT_SIM_EPOCH;
    cams.add_camera(CameraSpec { id: "cam".into(), width: 128, height: 8, fps: 10 }, origin).map_err(|e| e.to_string())?;
    let queue = cams.open_stream("cam", k, None).map_err(|e| e.to_string())?;
    let mut delivered = Vec::new();
    for i in 1..=frames {
        cams.run_until(origin.plus_millis(i as i64 * 100));
        ensure(queue.stats().produced == i, || format!("tick {i} produced {}", queue.stats().produced))?;
        if i % 2 == 0 {
            if let Some(f) = queue.pop() {
                let decoded = hub_core::surveillance::decode_pattern(&f.pixels, f.width, f.height);
                ensure(decoded.map(|d| d.0) == Some(f.seq), || format!("frame {} payload decodes to {decoded:?}", f.seq))?;
                delivered.push(f.seq);
            }
        }
    }
    let stats = queue.stats();
    ensure(delivered.windows(2).all(|w| w[0] < w[1]), || "delivered seqs not strictly increasing".into())?;
    ensure(stats.delivered + stats.dropped + stats.queued == stats.produced, || format!("conservation broken: {stats:?}"))?;
    let (want, want_dropped, want_queued) = queue_oracle(frames, k as u64, 2);
    ensure(stats.dropped == want_dropped, || format!("dropped {} but oracle says {want_dropped}", stats.dropped))?;
    ensure(stats.queued == want_queued, || format!("queued {} but oracle says {want_queued}", stats.queued))?;
    ensure(delivered == want, || "delivered seqs differ from the oracle".into())?;
    Ok(format!(
        "K={k}, {frames} frames at half rate: delivered {} dropped {} queued {} (oracle agrees)",
        stats.delivered, stats.dropped, stats.queued
    ))
}

// ---------------------------------------------------------------- grammar

pub fn grammar_fixture() -> (Inventory, AliasMap) {
    let dev = |id: u32, kind: DeviceKind, room: &str, label: &str| Device {
        id: DeviceId(id),
        kind,
        room: room.into(),
        label: label.into(),
        state: DeviceState::Binary(false),
    };
    let inventory = Inventory::new(
        vec![
            dev(1, DeviceKind::Light, "bedroom", "ceiling"),
            dev(2, DeviceKind::Light, "kitchen", "lamp"),
            dev(3, DeviceKind::Fan, "living room", "fan"),
            dev(4, DeviceKind::Ac, "bedroom", "ac"),
            dev(5, DeviceKind::Gate, "yard", "main"),
            dev(6, DeviceKind::Camera, "living room", "eye"),
        ],
        vec![AssetRef { id: "gold".into(), label: "gold chain".into() }],
    );
    let aliases: AliasMap =
        [("L1", "bedroom ceiling"), ("L2", "kitchen lamp"), ("F1", "living room fan"), ("G1", "yard main"), ("C1", "living room eye")]
            .into_iter()
            .collect();
    (inventory, aliases)
}

/// Channel `sms` means the compact form; everything else the full grammar.
pub const GRAMMAR_CORPUS: &[(&str, &str, &str)] = &[
    ("cli", "turn on bedroom ceiling", "on d1"),
    ("cli", "Turn ON Bedroom Light", "on d1"),
    ("voice", "turn off living room fan", "off d3"),
    ("web", "turn on kitchen lamp", "on d2"),
    ("web", "turn on kitchen light", "on d2"),
    ("local", "turn on lamp", "on d2"),
    ("cli", "turn on light", "ERR ambiguous"),
    ("cli", "turn on ceiling", "on d1"),
    ("cli", "turn on bedroom", "ERR unknown-target"),
    ("cli", "turn on garage light", "ERR unknown-target"),
    ("cli", "set bedroom ac to 40", "set:40 d4"),
    ("cli", "set bedroom ac 0", "set:0 d4"),
    ("cli", "set living room fan to 100", "set:100 d3"),
    ("cli", "set bedroom ac to 101", "ERR bad-level"),
    ("cli", "set bedroom ac", "ERR missing-level"),
    ("panel", "open yard main", "open d5"),
    ("panel", "close yard gate", "close d5"),
    ("cli", "open gate", "open d5"),
    ("cli", "status", "status all"),
    ("cli", "status bedroom ac", "status d4"),
    ("cli", "start scanning", "start-scanning"),
    ("voice", "  stop   scanning ", "stop-scanning"),
    ("cli", "start scanning now", "ERR unexpected-target"),
    ("cli", "stream living room eye", "stream d6"),
    ("cli", "stream living room camera", "stream d6"),
    ("cli", "stream bedroom ceiling", "ERR unknown-target"),
    ("cli", "locate gold", "locate gold"),
    ("cli", "locate gold chain", "locate gold"),
    ("cli", "locate silver", "ERR unknown-target"),
    ("cli", "frobnicate lamp", "ERR unknown-verb"),
    ("cli", "", "ERR empty"),
    ("cli", "turn on", "ERR missing-target"),
    ("sms", "ON L1", "on d1"),
    ("sms", "off l2", "off d2"),
    ("sms", "SET F1 55", "set:55 d3"),
    ("sms", "OPEN G1", "open d5"),
    ("sms", "STATUS", "status all"),
    ("sms", "ARM", "start-scanning"),
    ("sms", "ON", "ERR bad-compact"),
    ("sms", "ON X9", "ERR unknown-alias"),
];

fn describe_error(e: &GrammarError) -> &'static str {
    match e {
        GrammarError::EmptyInput => "empty",
        GrammarError::UnknownVerb(_) => "unknown-verb",
        GrammarError::MissingLevel => "missing-level",
        GrammarError::BadLevel(_) => "bad-level",
        GrammarError::MissingTarget(_) => "missing-target",
        GrammarError::UnexpectedTarget(_) => "unexpected-target",
        GrammarError::UnknownTarget(_) => "unknown-target",
        GrammarError::AmbiguousTarget { .. } => "ambiguous",
        GrammarError::BadCompactForm(_) => "bad-compact",
        GrammarError::UnknownAlias(_) => "unknown-alias",
        GrammarError::UnknownChannel(_) => "unknown-channel",
    }
}

pub fn describe_command(c: &Command) -> String {
    let target = match &c.target {
        Target::Device(id) => id.to_string(),
        Target::Asset(a) => a.clone(),
        Target::All => "all".into(),
        Target::Security => String::new(),
    };
    let action = match c.action {
        Action::Device(DeviceVerb::On) => "on".to_string(),
        Action::Device(DeviceVerb::Off) => "off".into(),
        Action::Device(DeviceVerb::Open) => "open".into(),
        Action::Device(DeviceVerb::Close) => "close".into(),
        Action::Device(DeviceVerb::SetLevel(n)) => format!("set:{n}"),
        Action::StartScanning => "start-scanning".into(),
        Action::StopScanning => "stop-scanning".into(),
        Action::Status => "status".into(),
        Action::Stream => "stream".into(),
        Action::Locate => "locate".into(),
    };
    if target.is_empty() {
        action
    } else {
        format!("{action} {target}")
    }
}

pub fn run_corpus_case(channel: &str, text: &str, inventory: &Inventory, aliases: &AliasMap) -> String {
    let channel: Channel = channel.parse().expect("corpus channel");
    let parsed = if channel == Channel::Sms { grammar::parse_compact(text, aliases) } else { grammar::parse(text, channel) };
    match parsed.and_then(|p| grammar::bind(&p, inventory, Principal::Owner)) {
        Ok(c) => describe_command(&c),
        Err(e) => format!("ERR {}", describe_error(&e)),
    }
}

const ROOM_WORDS: &[&str] = &["bedroom", "kitchen", "living", "study", "garage", "attic", "porch", "hall"];
const LABEL_WORDS: &[&str] = &["ceiling", "lamp", "main", "desk", "corner", "window", "side", "north", "south", "big"];
const ASSET_WORDS: &[&str] = &["gold", "watch", "ring", "necklace", "coins"];

/// A random inventory whose rooms and labels come from disjoint vocabularies,
/// with unique (room, label) pairs.
pub fn random_inventory(rng: &mut StdRng) -> Inventory {
    let mut names = BTreeSet::new();
    let mut devices = Vec::new();
    let n = rng.gen_range(1..12);
    for id in 1..=n {
        let room = if rng.gen_bool(0.3) {
            format!("{} room", ROOM_WORDS[rng.gen_range(0..ROOM_WORDS.len())])
        } else {
            ROOM_WORDS[rng.gen_range(0..ROOM_WORDS.len())].to_string()
        };
        let label = if rng.gen_bool(0.3) {
            format!("{} {}", LABEL_WORDS[rng.gen_range(0..LABEL_WORDS.len())], LABEL_WORDS[rng.gen_range(0..LABEL_WORDS.len())])
        } else {
            LABEL_WORDS[rng.gen_range(0..LABEL_WORDS.len())].to_string()
        };
        if !names.insert((room.clone(), label.clone())) {
            continue;
        }
        let kind = DeviceKind::ALL[rng.gen_range(0..DeviceKind::ALL.len())];
        devices.push(Device { id: DeviceId(id), kind, room, label, state: DeviceState::Binary(false) });
    }
    let assets = ASSET_WORDS
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .map(|a| AssetRef { id: (*a).to_string(), label: format!("my {a}") })
        .collect();
    Inventory::new(devices, assets)
}

pub fn random_command(rng: &mut StdRng, inventory: &Inventory) -> Command {
    let channel = Channel::ALL[rng.gen_range(0..Channel::ALL.len())];
    let device = &inventory.devices[rng.gen_range(0..inventory.devices.len())];
    let (action, target) = match rng.gen_range(0..10) {
        0 => (Action::StartScanning, Target::Security),
        1 => (Action::StopScanning, Target::Security),
        2 => (Action::Status, Target::All),
        3 => (Action::Status, Target::Device(device.id)),
        4 if !inventory.assets.is_empty() => {
            let a = &inventory.assets[rng.gen_range(0..inventory.assets.len())];
            (Action::Locate, Target::Asset(a.id.clone()))
        }
        5 if device.kind == DeviceKind::Camera => (Action::Stream, Target::Device(device.id)),
        _ => {
            let verb = match rng.gen_range(0..5) {
                0 => DeviceVerb::On,
                1 => DeviceVerb::Off,
                2 => DeviceVerb::Open,
                3 => DeviceVerb::Close,
                _ => DeviceVerb::SetLevel(rng.gen_range(0..=100)),
            };
            (Action::Device(verb), Target::Device(device.id))
        }
    };
    Command { action, target, channel, principal: Principal::Owner }
}

pub fn criterion_grammar(fuzz: usize, seed: u64) -> Check {
    let (inventory, aliases) = grammar_fixture();
    for (channel, text, want) in GRAMMAR_CORPUS {
        let got = run_corpus_case(channel, text, &inventory, &aliases);
        ensure(got == *want, || format!("corpus [{channel}] {text:?}: got {got:?}, want {want:?}"))?;
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut done = 0;
    while done < fuzz {
        let inventory = random_inventory(&mut rng);
        if inventory.devices.is_empty() {
            continue;
        }
        for _ in 0..20 {
            let command = random_command(&mut rng, &inventory);
            let text = command.render(&inventory).ok_or_else(|| format!("cannot render {command:?}"))?;
            let back = grammar::parse(&text, command.channel)
                .and_then(|p| grammar::bind(&p, &inventory, command.principal))
                .map_err(|e| format!("{text:?} does not reparse: {e}"))?;
            ensure(back == command, || format!("{text:?} reparsed to {back:?}, not {command:?}"))?;
            done += 1;
        }
    }
    Ok(format!("{} corpus cases exact; {done} render/reparse round trips", GRAMMAR_CORPUS.len()))
}

// ---------------------------------------------------------------- automation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoorSide {
    Outer,
    Inner,
}

/// Brute-force pairing: walk the breaks in order; a break closes a pair with
/// the one right before it when that one is still open, on the other side and
/// within the window. Outer→inner is an entry, inner→outer an exit, and exits
/// never take the count below zero.
pub fn occupancy_oracle(breaks: &[(DoorSide, i64)], window_ms: i64) -> Vec<u32> {
    let mut open = vec![false; breaks.len()];
    let mut count = 0u32;
    let mut counts = Vec::with_capacity(breaks.len());
    for i in 0..breaks.len() {
        let (side, t) = breaks[i];
        let pairs = i > 0 && open[i - 1] && breaks[i - 1].0 != side && t - breaks[i - 1].1 <= window_ms;
        if pairs {
            open[i - 1] = false;
            match side {
                DoorSide::Inner => count += 1,
                DoorSide::Outer => count = count.saturating_sub(1),
            }
        } else {
            open[i] = true;
            if i > 0 {
                open[i - 1] = false;
            }
        }
        counts.push(count);
    }
    counts
}

pub fn random_breaks(rng: &mut StdRng, n: usize) -> Vec<(DoorSide, i64)> {
    let mut t = 0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0..1_500);
            (if rng.gen_bool(0.5) { DoorSide::Outer } else { DoorSide::Inner }, t)
        })
        .collect()
}

pub fn criterion_automation(seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    // occupancy
    let mut final_counts = Vec::new();
    for _ in 0..100 {
        let breaks = random_breaks(&mut rng, 1_000);
        let want = occupancy_oracle(&breaks, 1_000);
        let mut zone = OccupancyZone::new("room", "o", "i", 1_000, vec![]);
        for (i, (side, t)) in breaks.iter().enumerate() {
            let beam = if *side == DoorSide::Outer { "o" } else { "i" };
            let got = zone.on_beam(beam, DEFAULT_SIM_EPOCH.plus_millis(*t)).map_err(|e| e.to_string())?.count;
            ensure(got == want[i], || format!("occupancy step {i}: zone {got}, oracle {}", want[i]))?;
        }
        final_counts.push(zone.count());
    }

    // tank ramp through a hub
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = config_in(AUTOMATION_CONFIG, dir.path());
    let mut hub = Hub::new(&config, EventLog::in_memory(), DEFAULT_SIM_EPOCH).map_err(|e| e.to_string())?;
    // The ramp starts with an empty tank and the pump already filling it.
    hub.tank_level(0.0).map_err(|e| e.to_string())?;
    let primed = pump_transitions(&hub);
    ensure(primed == ["on"], || format!("empty tank left the pump {primed:?}"))?;
    let ramp: Vec<f64> = (1..=100).chain((0..100).rev()).map(f64::from).collect();
    for level in &ramp {
        hub.tank_level(*level).map_err(|e| e.to_string())?;
    }
    let pump = pump_transitions(&hub)[1..].to_vec();
    let want = tank_oracle(&ramp, 30.0, 90.0, true);
    ensure(pump == want, || format!("tank ramp transitions {pump:?}, oracle {want:?}"))?;
    ensure(pump == ["off", "on"], || format!("tank ramp pump transitions {pump:?}"))?;

    // geofence random walks through a hub
    let mut exits_total = 0;
    for walk in 0..20 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = config_in(AUTOMATION_CONFIG, dir.path());
        let mut hub = Hub::new(&config, EventLog::in_memory(), DEFAULT_SIM_EPOCH).map_err(|e| e.to_string())?;
        let (mut lat, mut lon): (f64, f64) = (23.78, 90.28);
        let mut inside = true;
        let mut want = 0;
        for step in 0..500 {
            lat += rng.gen_range(-0.002..0.002);
            lon += rng.gen_range(-0.002..0.002);
            lat = lat.clamp(23.75, 23.81);
            lon = lon.clamp(90.25, 90.31);
            hub.advance_to(DEFAULT_SIM_EPOCH.plus_millis(step * 1_000)).map_err(|e| e.to_string())?;
            hub.gps_fix("gold", lat, lon).map_err(|e| e.to_string())?;
            let now_inside = great_circle_m(23.78, 90.28, lat, lon) <= 1_000.0;
            if inside && !now_inside {
                want += 1;
            }
            inside = now_inside;
        }
        let got = hub.log().events().iter().filter(|e| e.kind == EventKind::GeofenceExit).count();
        ensure(got == want, || format!("walk {walk}: {got} exit alerts, {want} transitions"))?;
        exits_total += got;
    }
    let track = AssetTrack::new("x", "x", (0.0, 0.0), 1_000.0).map_err(|e| e.to_string())?;
    ensure(track.inside(), || "assets must start inside".into())?;
    Ok(format!(
        "occupancy matches pairing oracle on 100x1000 breaks; tank ramp on/off exactly once; {exits_total} geofence exits == transitions"
    ))
}

/// Two-state pump automaton: off below `low` turns on, on above `high`
/// turns off, anything in between keeps the state. Returns the transitions.
pub fn tank_oracle(levels: &[f64], low: f64, high: f64, mut on: bool) -> Vec<&'static str> {
    let mut out = Vec::new();
    for &level in levels {
        if !on && level < low {
            on = true;
            out.push("on");
        } else if on && level > high {
            on = false;
            out.push("off");
        }
    }
    out
}

fn pump_transitions(hub: &Hub) -> Vec<String> {
    hub.log()
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::StateChange && e.subject == "d2")
        .map(|e| e.attr("to").unwrap_or_default().to_string())
        .collect()
}

/// Haversine written out independently of the hub's implementation.
pub fn great_circle_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let r = 6_371_000.0;
    let (phi1, phi2) = (lat1 * std::f64::consts::PI / 180.0, lat2 * std::f64::consts::PI / 180.0);
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1) * std::f64::consts::PI / 180.0;
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().asin()
}

pub const AUTOMATION_CONFIG: &str = r#"
beams = ["o", "i"]

[auth]
owner = "tok"

[[devices]]
id = "d1"
kind = "light"
room = "bedroom"
label = "ceiling"

[[devices]]
id = "d2"
kind = "pump"
room = "roof"
label = "pump"

[[devices]]
id = "d3"
kind = "gate"
room = "yard"
label = "main"

[[occupancy]]
room = "bedroom"
outer = "o"
inner = "i"
lights = ["d1"]

[tank]
pump = "d2"

[[gates]]
device = "d3"
fobs = ["fob-1"]

[[assets]]
id = "gold"
label = "gold chain"
lat = 23.78
lon = 90.28
radius_m = 1000
"#;

pub fn at(ms: i64) -> Timestamp {
    DEFAULT_SIM_EPOCH.plus_millis(ms)
}
