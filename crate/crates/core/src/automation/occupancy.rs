use crate::clock::Timestamp;
use crate::home::{DeviceId, DeviceVerb};

use super::AutomationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Outer,
    Inner,
}

/// Counts people in a room from a pair of beams across its doorway.
///
/// A break on the outer beam followed by the inner beam within the pairing
/// window is an entry; inner then outer is an exit. A break that finds no
/// partner within the window just waits to be paired with the next one.
#[derive(Debug, Clone)]
pub struct OccupancyZone {
    pub room: String,
    pub outer: String,
    pub inner: String,
    pub window_ms: i64,
    pub lights: Vec<DeviceId>,
    count: u32,
    pending: Option<(Side, Timestamp)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyOutcome {
    pub delta: i32,
    pub count: u32,
    /// An exit was seen with nobody counted inside; the count stayed at zero.
    pub anomaly: bool,
    pub lights: Option<DeviceVerb>,
}

impl OccupancyZone {
    pub fn new(room: &str, outer: &str, inner: &str, window_ms: i64, lights: Vec<DeviceId>) -> Self {
        Self {
            room: room.to_string(),
            outer: outer.to_string(),
            inner: inner.to_string(),
            window_ms,
            lights,
            count: 0,
            pending: None,
        }
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn set_count(&mut self, count: u32) {
        self.count = count;
    }

    pub fn has_beam(&self, beam: &str) -> bool {
        beam == self.outer || beam == self.inner
    }

    pub fn on_beam(&mut self, beam: &str, at: Timestamp) -> Result<OccupancyOutcome, AutomationError> {
        let side = if beam == self.outer {
            Side::Outer
        } else if beam == self.inner {
            Side::Inner
        } else {
            return Err(AutomationError::UnknownBeam(beam.to_string()));
        };
        let before = self.count;
        let mut delta = 0;
        let mut anomaly = false;
        match self.pending.take() {
            Some((first, t)) if first != side && at.since(t) <= self.window_ms => {
                if first == Side::Outer {
                    delta = 1;
                    self.count += 1;
                } else if self.count == 0 {
                    anomaly = true;
                } else {
                    delta = -1;
                    self.count -= 1;
                }
            }
            _ => self.pending = Some((side, at)),
        }
        let lights = match (before, self.count) {
            (0, 1) => Some(DeviceVerb::On),
            (1, 0) => Some(DeviceVerb::Off),
            _ => None,
        };
        Ok(OccupancyOutcome { delta, count: self.count, anomaly, lights })
    }
}
