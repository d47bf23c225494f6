use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing::{error, info};

use hub_core::hub::initial_snapshot;
use hub_core::mobile::{PhoneAgent, PhoneProfile};
use hub_core::scenario::parse_scenario;
use hub_core::{replay, EventLog, Hub, HubConfig, DEFAULT_SIM_EPOCH};
use hubd::server::{fresh_log_path, EXIT_CONFIG};
use hubd::{client, ClockMode, Options};

const DEFAULT_CONFIG: &str = "config/hub.toml";

#[derive(Parser)]
#[command(name = "hub", version, about = "Digital-home hub daemon and operator client")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Conn {
    /// Control address; defaults to the one in the config file.
    #[arg(long)]
    addr: Option<String>,
    /// Bearer token; defaults to $HUB_TOKEN, then the config's owner token.
    #[arg(long)]
    token: Option<String>,
    #[arg(short, long, default_value = DEFAULT_CONFIG)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hub.
    Run {
        #[arg(short, long, default_value = DEFAULT_CONFIG)]
        config: PathBuf,
        /// Scenario script whose events are injected on schedule.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Run the scenario on a simulated clock as fast as possible, write the log and exit.
        #[arg(long, requires = "scenario")]
        sim: bool,
    },
    /// Rebuild the final state from an event log and print it as JSON.
    Replay {
        log: PathBuf,
        /// Config the log was recorded with, for the starting state.
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Send one command and print the reply.
    Cmd {
        text: String,
        #[arg(long, default_value = "cli")]
        channel: String,
        #[command(flatten)]
        conn: Conn,
    },
    /// Print pushes as they arrive.
    Watch {
        /// Topics to subscribe to (state, alert, stream-meta); all by default.
        #[arg(long = "topic")]
        topics: Vec<String>,
        #[command(flatten)]
        conn: Conn,
    },
    /// Save a camera's frames as PGM files.
    Stream {
        camera: String,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many frames.
        #[arg(long)]
        frames: Option<u64>,
        #[command(flatten)]
        conn: Conn,
    },
    /// Run a simulated phone that connects to the hub's agent port.
    Phone {
        /// Phone profile (TOML): id, phonebook, inbox.
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7090")]
        addr: String,
    },
}

fn load_config(path: &Path) -> Result<HubConfig, String> {
    let mut config = HubConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(dir) = std::env::var_os("HUB_DATA_DIR") {
        config.data_dir = PathBuf::from(dir);
    }
    Ok(config)
}

fn connection(conn: &Conn) -> (String, String) {
    let config = HubConfig::load(&conn.config).ok();
    let addr = conn
        .addr
        .clone()
        .or_else(|| config.as_ref().map(|c| c.listen.control.clone()))
        .unwrap_or_else(|| "127.0.0.1:7070".into());
    let token = conn
        .token
        .clone()
        .or_else(|| std::env::var("HUB_TOKEN").ok())
        .or_else(|| config.as_ref().map(|c| c.auth.owner.clone()))
        .unwrap_or_default();
    (addr, token)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let code = runtime.block_on(dispatch(cli.command));
    ExitCode::from(code as u8)
}

async fn dispatch(command: Command) -> i32 {
    let result = match command {
        Command::Run { config, scenario, sim } => return run(&config, scenario.as_deref(), sim).await,
        Command::Replay { log, config } => return replay_log(&log, config.as_deref()),
        Command::Cmd { text, channel, conn } => {
            let (addr, token) = connection(&conn);
            client::cmd(&addr, &token, &channel, &text).await.map(|ok| if ok { 0 } else { 1 })
        }
        Command::Watch { topics, conn } => {
            let (addr, token) = connection(&conn);
            let topics = if topics.is_empty() {
                hub_core::control::Topic::ALL.iter().map(|t| t.name().to_string()).collect()
            } else {
                topics
            };
            client::watch(&addr, &token, &topics).await.map(|_| 0)
        }
        Command::Stream { camera, out, frames, conn } => {
            let (addr, token) = connection(&conn);
            client::stream(&addr, &token, &camera, &out, frames).await.map(|n| {
                info!("saved {n} frames to {}", out.display());
                0
            })
        }
        Command::Phone { profile, addr } => {
            let text = match std::fs::read_to_string(&profile) {
                Ok(t) => t,
                Err(e) => {
                    error!("{}: {e}", profile.display());
                    return EXIT_CONFIG;
                }
            };
            let profile: PhoneProfile = match toml::from_str(&text) {
                Ok(p) => p,
                Err(e) => {
                    error!("{}: {e}", profile.display());
                    return EXIT_CONFIG;
                }
            };
            hubd::agent::run_phone(&addr, PhoneAgent::new(profile)).await.map(|_| 0).map_err(Into::into)
        }
    };
    result.unwrap_or_else(|e| {
        error!("{e:#}");
        1
    })
}

async fn run(config_path: &Path, scenario: Option<&Path>, sim: bool) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return EXIT_CONFIG;
        }
    };
    let events = match scenario.map(|p| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))) {
        None => Vec::new(),
        Some(text) => match text.and_then(|t| parse_scenario(&t).map_err(|e| e.to_string())) {
            Ok(events) => events,
            Err(e) => {
                error!("{e}");
                return EXIT_CONFIG;
            }
        },
    };
    if sim {
        return run_sim(&config, &events);
    }
    // Armed before the listeners announce themselves, so an early SIGTERM still shuts down cleanly.
    let stop = shutdown_signal();
    let running = match hubd::start(&config, Options::default()).await {
        Ok(r) => r,
        Err(e) => {
            error!("{e}");
            return e.exit_code();
        }
    };
    info!("event log at {}", running.log_path.display());
    let _injector = running.inject(events, ClockMode::Wall);
    stop.await;
    info!("shutting down");
    running.shutdown().await;
    0
}

fn run_sim(config: &HubConfig, events: &[hub_core::scenario::ScenarioEvent]) -> i32 {
    let log_path = match fresh_log_path(&config.data_dir) {
        Ok(p) => p,
        Err(e) => {
            error!("{e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = EventLog::create(&log_path)
        .map_err(|e| e.to_string())
        .and_then(|log| Hub::new(config, log, DEFAULT_SIM_EPOCH).map_err(|e| e.to_string()))
        .and_then(|mut hub| {
            let replies = hub.run_scenario(events, DEFAULT_SIM_EPOCH).map_err(|e| e.to_string())?;
            hub.flush().map_err(|e| e.to_string())?;
            Ok(replies)
        });
    match outcome {
        Ok(replies) => {
            for (line, reply) in replies {
                println!("line {line}: {}", reply.render());
            }
            info!("event log at {}", log_path.display());
            0
        }
        Err(e) => {
            error!("{e}");
            EXIT_CONFIG
        }
    }
}

fn replay_log(log: &Path, config: Option<&Path>) -> i32 {
    let base = match config.map(load_config) {
        None => None,
        Some(Ok(c)) => match initial_snapshot(&c) {
            Ok(s) => Some(s),
            Err(e) => {
                error!("{e}");
                return EXIT_CONFIG;
            }
        },
        Some(Err(e)) => {
            error!("{e}");
            return EXIT_CONFIG;
        }
    };
    let text = match std::fs::read_to_string(log) {
        Ok(t) => t,
        Err(e) => {
            error!("{}: {e}", log.display());
            return 1;
        }
    };
    match replay(&text, base) {
        Ok(snapshot) => {
            println!("{}", serde_json::to_string_pretty(&snapshot).expect("snapshot serializes"));
            0
        }
        Err(e) => {
            error!("{e}");
            1
        }
    }
}

fn shutdown_signal() -> impl std::future::Future<Output = ()> {
    #[cfg(unix)]
    let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()).expect("SIGTERM handler");
    let ctrl_c = tokio::spawn(tokio::signal::ctrl_c());
    async move {
        #[cfg(unix)]
        tokio::select! {
            _ = term.recv() => {}
            _ = ctrl_c => {}
        }
        #[cfg(not(unix))]
        let _ = ctrl_c.await;
    }
}
