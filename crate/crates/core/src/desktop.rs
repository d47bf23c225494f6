//! Simulated server desktop driven from a remote browser.
//!
//! The client reports clicks in its own viewport; [`map_click`] scales them to
//! server pixels, and the mapped point is hit-tested against the icon grid.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesktopError {
    #[error("viewport must be non-empty")]
    BadViewport,
    #[error("click ({x},{y}) outside viewport {width}x{height}")]
    BadClick { x: u32, y: u32, width: u32, height: u32 },
    #[error("desktop is shut down")]
    Unavailable,
    #[error("unknown command {0:?}")]
    UnknownCommand(String),
    #[error("icon {0:?} does not fit on the desktop or overlaps another icon")]
    BadIcon(String),
    #[error("bad icon action {0:?}")]
    BadAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IconBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl IconBox {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x - self.x < self.width && y >= self.y && y - self.y < self.height
    }

    fn overlaps(&self, other: &IconBox) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    pub fn center(&self) -> (u32, u32) {
        (self.x + self.width / 2, self.y + self.height / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IconAction {
    Open(String),
    Close(String),
    Toggle(String),
}

impl FromStr for IconAction {
    type Err = DesktopError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (verb, app) = s.split_once(':').ok_or_else(|| DesktopError::BadAction(s.to_string()))?;
        let app = app.to_string();
        match verb {
            "open" => Ok(IconAction::Open(app)),
            "close" => Ok(IconAction::Close(app)),
            "toggle" => Ok(IconAction::Toggle(app)),
            _ => Err(DesktopError::BadAction(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Icon {
    pub name: String,
    pub bounds: IconBox,
    pub action: IconAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesktopModel {
    pub resolution: Resolution,
    pub icons: Vec<Icon>,
    pub running: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClickReport {
    pub x: u32,
    pub y: u32,
    pub viewport: Resolution,
}

/// `round(v * to / from)` with halves rounded away from zero, in exact integer arithmetic.
fn scale(v: u32, from: u32, to: u32) -> u32 {
    let (v, from, to) = (u64::from(v), u64::from(from), u64::from(to));
    ((2 * v * to + from) / (2 * from)) as u32
}

/// Scales a viewport click to server pixels.
pub fn map_click(report: ClickReport, server: Resolution) -> Result<(u32, u32), DesktopError> {
    let vp = report.viewport;
    if vp.width == 0 || vp.height == 0 || server.width == 0 || server.height == 0 {
        return Err(DesktopError::BadViewport);
    }
    if report.x >= vp.width || report.y >= vp.height {
        return Err(DesktopError::BadClick { x: report.x, y: report.y, width: vp.width, height: vp.height });
    }
    Ok((scale(report.x, vp.width, server.width), scale(report.y, vp.height, server.height)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerAction {
    Shutdown,
    Restart,
    Logoff,
}

impl PowerAction {
    pub fn name(self) -> &'static str {
        match self {
            PowerAction::Shutdown => "shutdown",
            PowerAction::Restart => "restart",
            PowerAction::Logoff => "logoff",
        }
    }
}

impl FromStr for PowerAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shutdown" => Ok(PowerAction::Shutdown),
            "restart" => Ok(PowerAction::Restart),
            "logoff" => Ok(PowerAction::Logoff),
            _ => Err(format!("unknown power action {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClickOutcome {
    Hit { icon: String, app: String, running: bool },
    Miss { x: u32, y: u32 },
}

const DIR_LISTING: &[&str] = &[
    " Volume in drive C is DHS",
    " Directory of C:\\Users\\Owner",
    "2024-01-01  00:00    <DIR>          Documents",
    "2024-01-01  00:00    <DIR>          Music",
    "2024-01-01  00:00    <DIR>          Pictures",
    "2024-01-01  00:00             1,024 notes.txt",
];

#[derive(Debug, Clone)]
pub struct Desktop {
    resolution: Resolution,
    icons: Vec<Icon>,
    running: BTreeSet<String>,
    available: bool,
}

impl Desktop {
    pub fn new(resolution: Resolution, icons: Vec<Icon>) -> Result<Self, DesktopError> {
        for (i, icon) in icons.iter().enumerate() {
            let b = icon.bounds;
            let fits = b.width > 0
                && b.height > 0
                && u64::from(b.x) + u64::from(b.width) <= u64::from(resolution.width)
                && u64::from(b.y) + u64::from(b.height) <= u64::from(resolution.height);
            if !fits || icons[..i].iter().any(|other| other.bounds.overlaps(&b)) {
                return Err(DesktopError::BadIcon(icon.name.clone()));
            }
        }
        Ok(Self { resolution, icons, running: BTreeSet::new(), available: true })
    }

    /// 1600x1200 with six icons down the left edge.
    pub fn fixture() -> Self {
        let names = [
            ("My Computer", "open:explorer"),
            ("Media Player", "toggle:media-player"),
            ("Task Manager", "toggle:task-manager"),
            ("Notepad", "toggle:notepad"),
            ("Web Browser", "toggle:web-browser"),
            ("Recycle Bin", "open:recycle-bin"),
        ];
        let icons = names
            .iter()
            .enumerate()
            .map(|(i, (name, action))| Icon {
                name: (*name).to_string(),
                bounds: IconBox { x: 40, y: 40 + 180 * i as u32, width: 96, height: 96 },
                action: action.parse().expect("fixture actions are valid"),
            })
            .collect();
        Desktop::new(Resolution::new(1600, 1200), icons).expect("fixture icons are valid")
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn icons(&self) -> &[Icon] {
        &self.icons
    }

    pub fn is_available(&self) -> bool {
        self.available
    }

    fn ensure_available(&self) -> Result<(), DesktopError> {
        if self.available {
            Ok(())
        } else {
            Err(DesktopError::Unavailable)
        }
    }

    pub fn model(&self) -> Result<DesktopModel, DesktopError> {
        self.ensure_available()?;
        Ok(DesktopModel {
            resolution: self.resolution,
            icons: self.icons.clone(),
            running: self.running.iter().cloned().collect(),
        })
    }

    pub fn hit_test(&self, x: u32, y: u32) -> Option<&Icon> {
        self.icons.iter().find(|icon| icon.bounds.contains(x, y))
    }

    pub fn click(&mut self, report: ClickReport) -> Result<ClickOutcome, DesktopError> {
        self.ensure_available()?;
        let (x, y) = map_click(report, self.resolution)?;
        let Some(icon) = self.hit_test(x, y).cloned() else {
            return Ok(ClickOutcome::Miss { x, y });
        };
        let app = match &icon.action {
            IconAction::Open(app) => {
                self.running.insert(app.clone());
                app
            }
            IconAction::Close(app) => {
                self.running.remove(app);
                app
            }
            IconAction::Toggle(app) => {
                if !self.running.remove(app) {
                    self.running.insert(app.clone());
                }
                app
            }
        };
        Ok(ClickOutcome::Hit { icon: icon.name.clone(), app: app.clone(), running: self.running.contains(app) })
    }

    /// Runs one allowlisted command (`dir`, `echo`, `time`, `ver`) and returns its output lines.
    pub fn exec(&self, line: &str, now: Timestamp) -> Result<Vec<String>, DesktopError> {
        self.ensure_available()?;
        let trimmed = line.trim();
        let (cmd, args) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        match cmd.to_ascii_lowercase().as_str() {
            "echo" => Ok(vec![args.trim_start().to_string()]),
            "dir" if args.trim().is_empty() => Ok(DIR_LISTING.iter().map(|s| s.to_string()).collect()),
            "time" if args.trim().is_empty() => Ok(vec![format!("The current time is: {}", now.time_of_day())]),
            "ver" if args.trim().is_empty() => Ok(vec!["DHS Desktop [Version 1.0]".to_string()]),
            _ => Err(DesktopError::UnknownCommand(trimmed.to_string())),
        }
    }

    /// Shutdown makes the desktop unavailable until the daemon restarts; restart
    /// closes every app. Logoff only affects sessions, which the hub handles.
    pub fn power(&mut self, action: PowerAction) -> Result<(), DesktopError> {
        self.ensure_available()?;
        match action {
            PowerAction::Shutdown => {
                self.running.clear();
                self.available = false;
            }
            PowerAction::Restart => self.running.clear(),
            PowerAction::Logoff => {}
        }
        Ok(())
    }
}
