//! A plain line client for the control protocol, used by the CLI.

use std::path::Path;

use anyhow::{bail, Context};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

use hub_core::control::Reply;

pub struct Client {
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
}

impl Client {
    pub async fn connect(addr: &str) -> anyhow::Result<Client> {
        let stream = TcpStream::connect(addr).await.with_context(|| format!("connecting to {addr}"))?;
        stream.set_nodelay(true)?;
        let (read, writer) = stream.into_split();
        Ok(Client { reader: BufReader::new(read), writer })
    }

    pub async fn send(&mut self, line: &str) -> anyhow::Result<()> {
        self.writer.write_all(line.as_bytes()).await?;
        self.writer.write_all(b"\n").await?;
        Ok(())
    }

    /// The next line without its newline, or `None` at end of stream.
    pub async fn read_line(&mut self) -> anyhow::Result<Option<String>> {
        let mut line = String::new();
        if self.reader.read_line(&mut line).await? == 0 {
            return Ok(None);
        }
        if line.ends_with('\n') {
            line.pop();
        }
        Ok(Some(line))
    }

    pub async fn read_bytes(&mut self, n: usize) -> anyhow::Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.reader.read_exact(&mut buf).await?;
        Ok(buf)
    }

    /// Sends a request and returns the first non-push line that answers it.
    pub async fn request(&mut self, line: &str) -> anyhow::Result<String> {
        self.send(line).await?;
        loop {
            match self.read_line().await? {
                Some(l) if l.starts_with("EVT ") => continue,
                Some(l) => return Ok(l),
                None => bail!("connection closed while waiting for a reply to {line:?}"),
            }
        }
    }

    pub async fn auth(&mut self, token: &str, channel: &str) -> anyhow::Result<()> {
        let reply = self.request(&format!("AUTH {token} {channel}")).await?;
        if !reply.starts_with("OK") {
            bail!("{reply}");
        }
        Ok(())
    }
}

/// `hub cmd`: one command, one reply. Returns whether the hub said OK.
pub async fn cmd(addr: &str, token: &str, channel: &str, text: &str) -> anyhow::Result<bool> {
    let mut c = Client::connect(addr).await?;
    c.auth(token, channel).await?;
    let reply = c.request(&format!("CMD {text}")).await?;
    println!("{reply}");
    let _ = c.request("QUIT").await;
    Ok(Reply::parse(&reply).is_some_and(|r| r.is_ok()))
}

/// `hub watch`: print pushes until the hub goes away.
pub async fn watch(addr: &str, token: &str, topics: &[String]) -> anyhow::Result<()> {
    let mut c = Client::connect(addr).await?;
    c.auth(token, "cli").await?;
    for topic in topics {
        let reply = c.request(&format!("SUB {topic}")).await?;
        if !reply.starts_with("OK") {
            bail!("SUB {topic}: {reply}");
        }
    }
    while let Some(line) = c.read_line().await? {
        println!("{line}");
    }
    Ok(())
}

/// `hub stream`: save frames from a camera as numbered PGM files.
pub async fn stream(addr: &str, token: &str, camera: &str, out: &Path, frames: Option<u64>) -> anyhow::Result<u64> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut c = Client::connect(addr).await?;
    c.auth(token, "cli").await?;
    let reply = c.request(&format!("STREAM {camera}")).await?;
    let Some(Reply::Ok(fields)) = Reply::parse(&reply) else { bail!("{reply}") };
    let (width, height) = match fields.as_slice() {
        [_, w, h] => (w.parse::<u32>()?, h.parse::<u32>()?),
        _ => bail!("unexpected stream reply {reply:?}"),
    };
    let mut saved = 0;
    while frames.is_none_or(|n| saved < n) {
        let Some(line) = c.read_line().await? else { break };
        let Some(header) = line.strip_prefix("FRAME ") else {
            if line.starts_with("ERR") {
                bail!("{line}");
            }
            continue;
        };
        let parts: Vec<&str> = header.split(' ').collect();
        let [seq, _millis, len] = parts.as_slice() else { bail!("bad frame header {line:?}") };
        let pixels = c.read_bytes(len.parse()?).await?;
        let mut pgm = format!("P5\n{width} {height}\n255\n").into_bytes();
        pgm.extend_from_slice(&pixels);
        let path = out.join(format!("{camera}-{:06}.pgm", seq.parse::<u64>()?));
        tokio::fs::write(&path, pgm).await.with_context(|| format!("writing {}", path.display()))?;
        saved += 1;
    }
    let _ = c.send("STOP").await;
    let _ = c.send("QUIT").await;
    Ok(saved)
}
