use std::collections::BTreeSet;

use crate::clock::Timestamp;
use crate::home::DeviceId;

/// Opens a gate for an authorized key fob and closes it after a quiet period.
/// Every presence restarts the close timer; a timer is honored only if its
/// generation is still current.
#[derive(Debug, Clone)]
pub struct AutoGate {
    pub gate: DeviceId,
    pub auto_close_ms: i64,
    fobs: BTreeSet<String>,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PresenceOutcome {
    Open { close_at: Timestamp, generation: u64 },
    Denied,
}

impl AutoGate {
    pub fn new(gate: DeviceId, auto_close_ms: i64, fobs: impl IntoIterator<Item = String>) -> Self {
        Self { gate, auto_close_ms, fobs: fobs.into_iter().collect(), generation: 0 }
    }

    pub fn on_presence(&mut self, fob: &str, at: Timestamp) -> PresenceOutcome {
        if !self.fobs.contains(fob) {
            return PresenceOutcome::Denied;
        }
        self.generation += 1;
        PresenceOutcome::Open { close_at: at.plus_millis(self.auto_close_ms), generation: self.generation }
    }

    pub fn is_current(&self, generation: u64) -> bool {
        generation == self.generation
    }
}
