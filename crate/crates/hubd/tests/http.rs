mod common;

use std::time::Duration;

use reqwest::{Client, Response, StatusCode};
use serde_json::{json, Value};

use hub_core::scenario::ScenarioAction;
use hubd::ClockMode;

struct Facade {
    hub: common::TestHub,
    base: String,
    http: Client,
}

impl Facade {
    async fn new() -> Facade {
        let hub = common::start(common::golden_config(), ClockMode::Manual).await;
        let base = format!("http://{}", hub.running.http);
        Facade { hub, base, http: Client::new() }
    }

    async fn login(&self, token: &str) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}/auth", self.base)).json(&json!({ "token": token })).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn session(&self, token: &str) -> String {
        let (status, body) = self.login(token).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["session"].as_str().unwrap().to_string()
    }

    async fn get(&self, path: &str, key: &str) -> Response {
        self.http.get(format!("{}{path}", self.base)).bearer_auth(key).send().await.unwrap()
    }

    async fn post(&self, path: &str, key: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).bearer_auth(key).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }
}

/// Reads the body until `done` says enough has arrived.
async fn read_until(r: &mut Response, done: impl Fn(&[u8]) -> bool) -> Vec<u8> {
    let mut got = Vec::new();
    while !done(&got) {
        let chunk = tokio::time::timeout(Duration::from_secs(5), r.chunk()).await.expect("more body").unwrap();
        match chunk {
            Some(c) => got.extend_from_slice(&c),
            None => break,
        }
    }
    got
}

fn contains(hay: &[u8], needle: &str) -> bool {
    hay.windows(needle.len()).any(|w| w == needle.as_bytes())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn auth_devices_and_commands() {
    let f = Facade::new().await;
    let (status, body) = f.login("nope").await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body, json!({ "ok": false, "code": "EAUTH", "message": "invalid token" }));

    let r = f.http.get(format!("{}/devices", f.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    let r = f.get("/devices", "not-a-session").await;
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);

    let (status, body) = f.login("owner-secret").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["fields"], json!(["owner", "web"]));
    let owner = body["session"].as_str().unwrap().to_string();

    let (status, body) = f.post("/command", &owner, json!({ "text": "turn on bedroom light" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "ok": true, "fields": ["bedroom", "ceiling", "on"] }));

    let r = f.get("/devices", &owner).await;
    assert_eq!(r.status(), StatusCode::OK);
    let body: Value = r.json().await.unwrap();
    let fields: Vec<&str> = body["fields"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(fields.len(), 16);
    assert_eq!(&fields[..4], ["d1", "bedroom", "ceiling", "on"]);

    // The session key also works as a query parameter.
    let r = f.http.get(format!("{}/devices?session={owner}", f.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);

    let (status, body) = f.post("/command", &owner, json!({ "text": "turn on garage light" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["code"], "ETARGET");
    let (_, body) = f.post("/command", &owner, json!({ "text": "status\nCMD turn off bedroom light" })).await;
    assert_eq!(body["code"], "EPARSE");

    let guest = f.session("guest-pass").await;
    let (status, body) = f.post("/command", &guest, json!({ "text": "start scanning" })).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["code"], "EDENIED");
    f.hub.running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn desktop_and_clicks() {
    let f = Facade::new().await;
    let owner = f.session("owner-secret").await;
    let body: Value = f.get("/desktop", &owner).await.json().await.unwrap();
    assert_eq!(body["fields"][0], "1600");
    assert_eq!(body["fields"][1], "1200");
    assert_eq!(body["fields"][2], "40 40 96 96 My Computer");

    let (_, body) = f.post("/click", &owner, json!({ "x": 44, "y": 22, "width": 800, "height": 600 })).await;
    assert_eq!(body["fields"], json!(["hit", "My Computer", "explorer", "running", "88", "44"]));
    let (_, body) = f.post("/click", &owner, json!({ "x": 400, "y": 300, "width": 800, "height": 600 })).await;
    assert_eq!(body["fields"], json!(["miss", "800", "600"]));
    f.hub.running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn events_stream_as_sse() {
    let f = Facade::new().await;
    let owner = f.session("owner-secret").await;
    let mut events = f.get("/events?topics=state", &owner).await;
    assert_eq!(events.status(), StatusCode::OK);
    assert!(events.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));

    f.post("/command", &owner, json!({ "text": "set bedroom fan to 70" })).await;
    let got = read_until(&mut events, |b| contains(b, "to=level:70")).await;
    let text = String::from_utf8(got).unwrap();
    assert!(text.contains("event: state\n"), "{text}");
    let data = text.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
    assert_eq!(
        data,
        "2024-01-01T00:00:00.000Z\tstate-change\td2\tfrom=level:0\tto=level:70\tchannel=web\tprincipal=owner"
    );

    let r = f.get("/events?topics=gossip", &owner).await;
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["code"], "EPARSE");
    f.hub.running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn camera_stream_is_multipart_pgm() {
    let f = Facade::new().await;
    let owner = f.session("owner-secret").await;
    let mut r = f.get("/stream/cam1?frames=3", &owner).await;
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "multipart/x-mixed-replace; boundary=frame");
    f.hub.running.hub.advance(500).await.unwrap();
    let body = read_until(&mut r, |_| false).await;

    let parts: Vec<&[u8]> = split_parts(&body);
    assert_eq!(parts.len(), 3);
    let mut last_seq = 0;
    for part in parts {
        let split = part.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
        let head = std::str::from_utf8(&part[..split]).unwrap();
        assert!(head.contains("Content-Type: image/x-portable-graymap"));
        let seq: u64 =
            head.lines().find_map(|l| l.strip_prefix("X-Frame-Seq: ")).unwrap().parse().unwrap();
        assert!(seq > last_seq);
        last_seq = seq;
        let image = &part[split + 4..part.len() - 2];
        let header = b"P5\n128 8\n255\n";
        assert_eq!(&image[..header.len()], header);
        assert_eq!(image.len(), header.len() + 128 * 8);
    }

    let r = f.get("/stream/nowhere", &owner).await;
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["code"], "ECAMERA");
    f.hub.running.shutdown().await;
}

fn split_parts(body: &[u8]) -> Vec<&[u8]> {
    let marker = b"--frame\r\n";
    let mut starts = Vec::new();
    let mut i = 0;
    while i + marker.len() <= body.len() {
        if &body[i..i + marker.len()] == marker {
            starts.push(i + marker.len());
            i += marker.len();
        } else {
            i += 1;
        }
    }
    starts
        .iter()
        .enumerate()
        .map(|(n, &s)| &body[s..starts.get(n + 1).map_or(body.len(), |&e| e - marker.len())])
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn intrusion_images_are_served() {
    let f = Facade::new().await;
    let owner = f.session("owner-secret").await;
    let mut alerts = f.get("/events?topics=alert", &owner).await;

    let mut ctl = f.hub.owner().await;
    assert_eq!(ctl.request("OWNER +8801712345678").await.unwrap(), "OK ready");
    assert_eq!(ctl.request("CMD start scanning").await.unwrap(), "OK scanning");
    let beam = ScenarioAction::Beam { beam: "b1".into(), broken: true };
    f.hub.running.hub.scenario(beam).await.unwrap().unwrap();

    let got = read_until(&mut alerts, |b| contains(b, "image-stored")).await;
    let text = String::from_utf8(got).unwrap();
    let data = text.lines().filter_map(|l| l.strip_prefix("data: ")).find(|d| d.contains("image-stored")).unwrap();
    let path = data.split('\t').nth(2).unwrap();
    assert!(path.starts_with("intrusions/"), "{path}");

    let r = f.get(&format!("/images/{path}"), &owner).await;
    assert_eq!(r.status(), StatusCode::OK);
    let bytes = r.bytes().await.unwrap();
    assert_eq!(bytes, std::fs::read(f.hub.dir.path().join(path)).unwrap());
    assert!(bytes.starts_with(b"P5\n128 8\n255\n"));

    let r = f.http.get(format!("{}/images/{path}", f.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    for bad in ["intrusions/%2e%2e/events.log", "events.log", "intrusions/missing.pgm"] {
        let r = f.get(&format!("/images/{bad}"), &owner).await;
        assert_eq!(r.status(), StatusCode::NOT_FOUND, "{bad}");
    }
    f.hub.running.shutdown().await;
}
