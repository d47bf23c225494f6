//! Phone agents: the hub's listener for them, and a simulated phone that
//! dials in (`hub phone`).

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tracing::{debug, info, warn};

use hub_core::mobile::{AgentToHub, HubToAgent, PhoneAgent};

use crate::actor::HubHandle;

pub async fn serve(listener: TcpListener, hub: HubHandle) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let hub = hub.clone();
                tokio::spawn(async move {
                    if let Err(e) = connection(stream, hub).await {
                        debug!("agent {peer}: {e}");
                    }
                });
            }
            Err(e) => warn!("accept: {e}"),
        }
    }
}

async fn connection(stream: TcpStream, hub: HubHandle) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let Some(first) = lines.next_line().await? else { return Ok(()) };
    let phone = match AgentToHub::parse(&first) {
        Ok(AgentToHub::Hello { phone }) => phone,
        _ => {
            write.write_all(format!("{}\n", AgentToHub::Bye.render()).as_bytes()).await?;
            return Ok(());
        }
    };
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    match hub.agent_hello(&phone, tx).await {
        Ok(Ok(())) => info!("phone {phone} connected"),
        Ok(Err(reason)) => {
            warn!("phone {phone} refused: {reason}");
            write.write_all(format!("{}\n", AgentToHub::Bye.render()).as_bytes()).await?;
            return Ok(());
        }
        Err(_) => return Ok(()),
    }
    let writer = tokio::spawn(async move {
        while let Some(line) = rx.recv().await {
            if write.write_all(line.as_bytes()).await.is_err() || write.write_all(b"\n").await.is_err() {
                break;
            }
        }
    });
    while let Some(line) = lines.next_line().await? {
        let bye = matches!(AgentToHub::parse(&line), Ok(AgentToHub::Bye));
        if hub.agent_line(&phone, &line).is_err() || bye {
            break;
        }
    }
    hub.agent_gone(&phone);
    writer.abort();
    info!("phone {phone} disconnected");
    Ok(())
}

/// Connects a simulated phone to the hub and answers it until either side hangs up.
pub async fn run_phone(addr: &str, mut agent: PhoneAgent) -> std::io::Result<()> {
    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (read, mut write) = stream.into_split();
    write.write_all(format!("{}\n", agent.hello().render()).as_bytes()).await?;
    let mut lines = BufReader::new(read).lines();
    loop {
        let line = tokio::select! {
            line = lines.next_line() => line?,
            _ = tokio::signal::ctrl_c() => {
                write.write_all(format!("{}\n", AgentToHub::Bye.render()).as_bytes()).await?;
                return Ok(());
            }
        };
        let Some(line) = line else { return Ok(()) };
        match HubToAgent::parse(&line) {
            Ok(msg) => {
                if let Some(answer) = agent.respond(&msg) {
                    write.write_all(format!("{}\n", answer.render()).as_bytes()).await?;
                }
            }
            Err(_) if AgentToHub::parse(&line) == Ok(AgentToHub::Bye) => return Ok(()),
            Err(e) => warn!("hub sent {line:?}: {e}"),
        }
    }
}
