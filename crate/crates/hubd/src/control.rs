//! Control-protocol sessions over TCP.

use std::sync::Arc;

use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::{TcpListener, TcpStream};
use tracing::{debug, warn};

use hub_core::control::{ErrCode, Reply, MAX_LINE};
use hub_core::grammar::Channel;
use hub_core::surveillance::StreamQueue;

use crate::actor::{session_channel, HubHandle, Out, SessionRx, PUSH_BUFFER};

/// Kernel send buffer for control sessions. Kept small so a stalled reader
/// shows up in the push count instead of vanishing into socket buffers.
const SEND_BUFFER: usize = 64 * 1024;

pub async fn serve(listener: TcpListener, hub: HubHandle) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let hub = hub.clone();
                tokio::spawn(async move {
                    if let Err(e) = session(stream, &peer.to_string(), hub).await {
                        debug!("session {peer}: {e}");
                    }
                });
            }
            Err(e) => warn!("accept: {e}"),
        }
    }
}

async fn session(stream: TcpStream, peer: &str, hub: HubHandle) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let _ = socket2::SockRef::from(&stream).set_send_buffer_size(SEND_BUFFER);
    let (read, write) = stream.into_split();
    let (tx, rx) = session_channel();
    let Ok(id) = hub.open(peer, Channel::Local, tx).await else { return Ok(()) };
    let mut writer = tokio::spawn(write_session(BufWriter::new(write), rx));

    let mut lines = BufReader::new(read);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        // One byte past the limit is enough to know the line is too long.
        let mut limited = (&mut lines).take(MAX_LINE as u64 + 2);
        let n = tokio::select! {
            n = limited.read_until(b'\n', &mut buf) => n?,
            _ = &mut writer => 0,
        };
        if n == 0 {
            break;
        }
        if buf.last() != Some(&b'\n') {
            if n < MAX_LINE + 2 {
                break;
            }
            // Overlong: skip the rest of it and let the hub refuse it in order.
            skip_line(&mut lines).await?;
            buf.truncate(MAX_LINE + 1);
        } else {
            buf.pop();
        }
        let line = match std::str::from_utf8(&buf) {
            Ok(s) => s.to_string(),
            Err(_) => {
                // Not UTF-8; route a placeholder the hub cannot parse so the
                // reply still comes back in request order.
                "\u{fffd}".to_string()
            }
        };
        if hub.line(id, &line).is_err() {
            break;
        }
    }
    hub.close(id);
    if !writer.is_finished() {
        let _ = writer.await;
    }
    Ok(())
}

async fn skip_line<R: AsyncBufRead + Unpin>(r: &mut R) -> std::io::Result<()> {
    loop {
        let buf = r.fill_buf().await?;
        if buf.is_empty() {
            return Ok(());
        }
        if let Some(i) = buf.iter().position(|&b| b == b'\n') {
            r.consume(i + 1);
            return Ok(());
        }
        let n = buf.len();
        r.consume(n);
    }
}

/// Writes replies, pushes and frames for one session until it is closed.
/// A session that falls too far behind gets `ERR ESLOW`, if it still fits,
/// and is cut off.
pub async fn write_session<W: AsyncWrite + Unpin>(mut w: W, rx: SessionRx) -> std::io::Result<()> {
    let slow = Arc::clone(&rx.slow);
    let finished = tokio::select! {
        biased;
        _ = slow.notified() => None,
        r = pump(&mut w, rx) => Some(r),
    };
    match finished {
        Some(result) => {
            result?;
            w.flush().await?;
            w.shutdown().await
        }
        None => {
            let line = format!("{}\n", Reply::err(ErrCode::Slow, format!("more than {PUSH_BUFFER} pushes behind")).render());
            let _ = tokio::time::timeout(GIVE_UP, async {
                w.write_all(line.as_bytes()).await?;
                w.flush().await?;
                w.shutdown().await
            })
            .await;
            Ok(())
        }
    }
}

const GIVE_UP: std::time::Duration = std::time::Duration::from_secs(5);

async fn pump<W: AsyncWrite + Unpin>(w: &mut W, mut rx: SessionRx) -> std::io::Result<()> {
    let mut stream: Option<Arc<StreamQueue>> = None;
    let frames = Arc::clone(&rx.frames);
    loop {
        tokio::select! {
            biased;
            out = rx.rx.recv() => {
                let Some(out) = out else { return Ok(()) };
                // Frames already produced go out ahead of whatever the hub said after them.
                write_frames(w, &mut stream).await?;
                match out {
                    Out::Reply(line) => {
                        w.write_all(line.as_bytes()).await?;
                        w.write_all(b"\n").await?;
                    }
                    Out::Push(line) => {
                        let written = async {
                            w.write_all(line.as_bytes()).await?;
                            w.write_all(b"\n").await
                        }
                        .await;
                        rx.push_done();
                        written?;
                    }
                    Out::Stream(queue) => stream = Some(queue),
                    Out::Close => return Ok(()),
                }
                if rx.rx.is_empty() {
                    write_frames(w, &mut stream).await?;
                    w.flush().await?;
                }
            }
            _ = frames.notified(), if stream.is_some() => {
                write_frames(w, &mut stream).await?;
                w.flush().await?;
            }
        }
    }
}

async fn write_frames<W: AsyncWrite + Unpin>(w: &mut W, stream: &mut Option<Arc<StreamQueue>>) -> std::io::Result<()> {
    let Some(queue) = stream else { return Ok(()) };
    if queue.is_closed() {
        *stream = None;
        return Ok(());
    }
    while let Some(frame) = queue.pop() {
        w.write_all(frame.wire_header().as_bytes()).await?;
        w.write_all(&frame.pixels).await?;
    }
    Ok(())
}
