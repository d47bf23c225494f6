//! HTTP/JSON facade over the control protocol, for the browser panel.
//!
//! Every JSON answer mirrors one protocol reply: `{"ok":true,"fields":[...]}`
//! or `{"ok":false,"code":"E...","message":"..."}`.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

use hub_core::control::{ErrCode, Reply, Topic};
use hub_core::grammar::Channel;
use hub_core::surveillance::StreamQueue;

use crate::actor::{session_channel, HubHandle, Out, SessionRx};

const BOUNDARY: &str = "frame";

#[derive(Clone)]
pub struct HttpState {
    hub: HubHandle,
    data_dir: PathBuf,
    sessions: Arc<Mutex<HashMap<String, Arc<HttpSession>>>>,
}

struct HttpSession {
    id: u64,
    token: String,
    channel: Channel,
    rx: tokio::sync::Mutex<SessionRx>,
}

/// Closes a hub session when the HTTP side lets go of it.
struct SessionGuard {
    hub: HubHandle,
    id: u64,
}

impl Drop for SessionGuard {
    fn drop(&mut self) {
        self.hub.close(self.id);
    }
}

pub fn router(hub: HubHandle, data_dir: PathBuf) -> Router {
    let state = HttpState { hub, data_dir, sessions: Arc::default() };
    Router::new()
        .route("/auth", post(auth))
        .route("/devices", get(devices))
        .route("/command", post(command))
        .route("/events", get(events))
        .route("/stream/{camera}", get(camera_stream))
        .route("/desktop", get(desktop))
        .route("/click", post(click))
        .route("/images/{*path}", get(image))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, hub: HubHandle, data_dir: PathBuf) {
    if let Err(e) = axum::serve(listener, router(hub, data_dir)).await {
        tracing::error!("http facade: {e}");
    }
}

fn reply_json(reply: &Reply) -> Value {
    match reply {
        Reply::Ok(fields) => json!({ "ok": true, "fields": fields }),
        Reply::Err(code, message) => json!({ "ok": false, "code": code.name(), "message": message }),
    }
}

fn respond(reply: Reply) -> Response {
    let status = match &reply {
        Reply::Err(ErrCode::Auth, _) => StatusCode::UNAUTHORIZED,
        Reply::Err(ErrCode::Denied, _) => StatusCode::FORBIDDEN,
        _ => StatusCode::OK,
    };
    (status, Json(reply_json(&reply))).into_response()
}

fn unavailable() -> Reply {
    Reply::err(ErrCode::Unavailable, "hub is shutting down")
}

/// Sends one line on a session and waits for its reply.
async fn exchange(hub: &HubHandle, id: u64, rx: &mut SessionRx, line: &str) -> Reply {
    if hub.line(id, line).is_err() {
        return unavailable();
    }
    loop {
        match rx.rx.recv().await {
            Some(Out::Reply(l)) => return Reply::parse(&l).unwrap_or_else(|| Reply::err(ErrCode::Parse, l)),
            Some(Out::Push(_)) => rx.push_done(),
            Some(Out::Stream(_)) => {}
            Some(Out::Close) | None => return unavailable(),
        }
    }
}

#[derive(Deserialize)]
struct AuthBody {
    token: String,
    channel: Option<String>,
}

async fn auth(State(st): State<HttpState>, Json(body): Json<AuthBody>) -> Response {
    let channel = match body.channel.as_deref().unwrap_or("web").parse::<Channel>() {
        Ok(c) => c,
        Err(e) => return respond(Reply::err(ErrCode::Parse, e)),
    };
    if body.token.is_empty() || body.token.contains(char::is_whitespace) {
        return respond(Reply::err(ErrCode::Auth, "invalid token"));
    }
    let (tx, mut rx) = session_channel();
    let Ok(id) = st.hub.open("http", channel, tx).await else { return respond(unavailable()) };
    let reply = exchange(&st.hub, id, &mut rx, &format!("AUTH {} {}", body.token, channel)).await;
    if !reply.is_ok() {
        st.hub.close(id);
        return respond(reply);
    }
    let key = uuid::Uuid::new_v4().simple().to_string();
    let session = HttpSession { id, token: body.token, channel, rx: tokio::sync::Mutex::new(rx) };
    st.sessions.lock().expect("session map").insert(key.clone(), Arc::new(session));
    let mut value = reply_json(&reply);
    value["session"] = Value::String(key);
    Json(value).into_response()
}

#[derive(Deserialize, Default)]
struct SessionQuery {
    session: Option<String>,
    frames: Option<u64>,
    topics: Option<String>,
}

#[allow(clippy::result_large_err)]
fn session_of(st: &HttpState, headers: &HeaderMap, query: &SessionQuery) -> Result<Arc<HttpSession>, Response> {
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string);
    let key = bearer.or_else(|| query.session.clone());
    let found = key.and_then(|k| st.sessions.lock().expect("session map").get(&k).cloned());
    found.ok_or_else(|| respond(Reply::err(ErrCode::Auth, "no session; POST /auth first")))
}

async fn run_line(st: &HttpState, headers: &HeaderMap, query: &SessionQuery, line: &str) -> Response {
    let session = match session_of(st, headers, query) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let mut rx = session.rx.lock().await;
    respond(exchange(&st.hub, session.id, &mut rx, line).await)
}

async fn devices(State(st): State<HttpState>, headers: HeaderMap, Query(q): Query<SessionQuery>) -> Response {
    run_line(&st, &headers, &q, "CMD status").await
}

#[derive(Deserialize)]
struct CommandBody {
    text: String,
}

async fn command(State(st): State<HttpState>, headers: HeaderMap, Query(q): Query<SessionQuery>, Json(body): Json<CommandBody>) -> Response {
    if body.text.contains(['\n', '\r']) {
        return respond(Reply::err(ErrCode::Parse, "command must be one line"));
    }
    run_line(&st, &headers, &q, &format!("CMD {}", body.text)).await
}

async fn desktop(State(st): State<HttpState>, headers: HeaderMap, Query(q): Query<SessionQuery>) -> Response {
    run_line(&st, &headers, &q, "DESK").await
}

#[derive(Deserialize)]
struct ClickBody {
    x: u32,
    y: u32,
    width: u32,
    height: u32,
}

async fn click(State(st): State<HttpState>, headers: HeaderMap, Query(q): Query<SessionQuery>, Json(c): Json<ClickBody>) -> Response {
    run_line(&st, &headers, &q, &format!("CLICK {} {} {} {}", c.x, c.y, c.width, c.height)).await
}

/// Opens a second hub session with the same credentials, for long-lived responses.
async fn side_session(st: &HttpState, owner: &HttpSession) -> Result<(SessionGuard, SessionRx), Response> {
    let (tx, mut rx) = session_channel();
    let id = st.hub.open("http", owner.channel, tx).await.map_err(|_| respond(unavailable()))?;
    let guard = SessionGuard { hub: st.hub.clone(), id };
    let reply = exchange(&st.hub, id, &mut rx, &format!("AUTH {} {}", owner.token, owner.channel)).await;
    if !reply.is_ok() {
        return Err(respond(reply));
    }
    Ok((guard, rx))
}

async fn events(State(st): State<HttpState>, headers: HeaderMap, Query(q): Query<SessionQuery>) -> Response {
    let session = match session_of(&st, &headers, &q) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let (guard, mut rx) = match side_session(&st, &session).await {
        Ok(x) => x,
        Err(r) => return r,
    };
    let topics: Vec<String> = match &q.topics {
        Some(list) => list.split(',').map(str::to_string).collect(),
        None => Topic::ALL.iter().map(|t| t.name().to_string()).collect(),
    };
    for topic in &topics {
        let reply = exchange(&st.hub, guard.id, &mut rx, &format!("SUB {topic}")).await;
        if !reply.is_ok() {
            return respond(reply);
        }
    }
    Sse::new(push_events(guard, rx)).keep_alive(KeepAlive::default()).into_response()
}

/// `EVT <topic> <fields>` lines as server-sent events named after the topic.
fn push_events(guard: SessionGuard, rx: SessionRx) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    stream::unfold((guard, rx), |(guard, mut rx)| async move {
        loop {
            let out = tokio::select! {
                biased;
                _ = rx.slow.notified() => return None,
                out = rx.rx.recv() => out?,
            };
            match out {
                Out::Push(line) => {
                    rx.push_done();
                    let rest = line.strip_prefix("EVT ").unwrap_or(&line);
                    let (topic, data) = rest.split_once(' ').unwrap_or((rest, ""));
                    let event = SseEvent::default().event(topic).data(data);
                    return Some((Ok(event), (guard, rx)));
                }
                Out::Close => return None,
                Out::Reply(_) | Out::Stream(_) => {}
            }
        }
    })
}

async fn camera_stream(
    State(st): State<HttpState>,
    UrlPath(camera): UrlPath<String>,
    headers: HeaderMap,
    Query(q): Query<SessionQuery>,
) -> Response {
    let session = match session_of(&st, &headers, &q) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let (guard, mut rx) = match side_session(&st, &session).await {
        Ok(x) => x,
        Err(r) => return r,
    };
    if camera.contains(char::is_whitespace) {
        return respond(Reply::err(ErrCode::Parse, "bad camera id"));
    }
    let reply = exchange(&st.hub, guard.id, &mut rx, &format!("STREAM {camera}")).await;
    if !reply.is_ok() {
        return respond(reply);
    }
    let queue = loop {
        match rx.rx.recv().await {
            Some(Out::Stream(q)) => break q,
            Some(Out::Push(_)) => rx.push_done(),
            Some(Out::Reply(_)) => {}
            Some(Out::Close) | None => return respond(unavailable()),
        }
    };
    let body = Body::from_stream(frame_parts(guard, rx, queue, q.frames));
    (
        [(header::CONTENT_TYPE, format!("multipart/x-mixed-replace; boundary={BOUNDARY}")), (header::CACHE_CONTROL, "no-store".into())],
        body,
    )
        .into_response()
}

/// Each frame as one multipart part holding a PGM image.
fn frame_parts(
    guard: SessionGuard,
    rx: SessionRx,
    queue: Arc<StreamQueue>,
    limit: Option<u64>,
) -> impl Stream<Item = Result<Bytes, Infallible>> {
    stream::unfold((guard, rx, queue, 0u64), move |(guard, rx, queue, sent)| async move {
        if limit.is_some_and(|n| sent >= n) {
            return None;
        }
        loop {
            if let Some(frame) = queue.pop() {
                let head = format!(
                    "--{BOUNDARY}\r\nContent-Type: image/x-portable-graymap\r\nX-Frame-Seq: {}\r\nX-Frame-Millis: {}\r\n\r\n",
                    frame.seq,
                    frame.at.millis()
                );
                let mut part = head.into_bytes();
                part.extend_from_slice(&frame.to_pgm());
                part.extend_from_slice(b"\r\n");
                return Some((Ok(Bytes::from(part)), (guard, rx, queue, sent + 1)));
            }
            if queue.is_closed() {
                return None;
            }
            rx.frames.notified().await;
        }
    })
}

/// Intrusion images, addressed by the path recorded in the event log.
async fn image(
    State(st): State<HttpState>,
    UrlPath(path): UrlPath<String>,
    headers: HeaderMap,
    Query(q): Query<SessionQuery>,
) -> Response {
    if let Err(r) = session_of(&st, &headers, &q) {
        return r;
    }
    let rel = Path::new(&path);
    let safe = rel.components().all(|c| matches!(c, Component::Normal(_))) && rel.starts_with("intrusions");
    if !safe {
        return (StatusCode::NOT_FOUND, Json(reply_json(&Reply::err(ErrCode::Target, "no such image")))).into_response();
    }
    match tokio::fs::read(st.data_dir.join(rel)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response(),
        Err(_) => (StatusCode::NOT_FOUND, Json(reply_json(&Reply::err(ErrCode::Target, "no such image")))).into_response(),
    }
}
