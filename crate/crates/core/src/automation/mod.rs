//! Home automations: occupancy lighting, water-tank pump control, the
//! auto-closing gate and GPS geofencing. Each rule is plain state plus a
//! decision function; the hub applies the resulting device verbs through the
//! home model and schedules any timers.

mod gate;
mod geofence;
mod occupancy;
mod tank;

pub use gate::{AutoGate, PresenceOutcome};
pub use geofence::{haversine_m, AssetTrack, Fix, FixOutcome, EARTH_RADIUS_M};
pub use occupancy::{OccupancyOutcome, OccupancyZone};
pub use tank::TankController;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutomationError {
    #[error("beam {0:?} is not part of any occupancy zone")]
    UnknownBeam(String),
    #[error("tank level {0} outside 0..=100")]
    BadLevel(f64),
    #[error("tank thresholds must satisfy 0 <= low < high <= 100 (got {low}, {high})")]
    BadThresholds { low: f64, high: f64 },
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("unknown asset {0:?}")]
    UnknownAsset(String),
    #[error("bad coordinates ({0}, {1})")]
    BadCoordinates(f64, f64),
    #[error("geofence radius must be positive (got {0})")]
    BadRadius(f64),
}
