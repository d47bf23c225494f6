use crate::clock::Timestamp;

use super::AutomationError;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters on a spherical Earth.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().atan2((1.0 - a).sqrt())
}

fn check_coordinates(lat: f64, lon: f64) -> Result<(), AutomationError> {
    if lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0 {
        Ok(())
    } else {
        Err(AutomationError::BadCoordinates(lat, lon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub lat: f64,
    pub lon: f64,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixOutcome {
    pub inside: bool,
    pub distance_m: f64,
    /// Inside → outside on this fix. Alerts are raised only on this edge.
    pub exited: bool,
    pub entered: bool,
}

/// A tracked valuable with a circular geofence. Assets start inside their fence.
#[derive(Debug, Clone)]
pub struct AssetTrack {
    pub id: String,
    pub label: String,
    pub center: (f64, f64),
    pub radius_m: f64,
    last: Option<Fix>,
    inside: bool,
}

impl AssetTrack {
    pub fn new(id: &str, label: &str, center: (f64, f64), radius_m: f64) -> Result<Self, AutomationError> {
        check_coordinates(center.0, center.1)?;
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(AutomationError::BadRadius(radius_m));
        }
        Ok(Self { id: id.to_string(), label: label.to_string(), center, radius_m, last: None, inside: true })
    }

    pub fn inside(&self) -> bool {
        self.inside
    }

    pub fn last_fix(&self) -> Option<Fix> {
        self.last
    }

    pub fn restore(&mut self, fix: Fix, inside: bool) {
        self.last = Some(fix);
        self.inside = inside;
    }

    pub fn on_fix(&mut self, lat: f64, lon: f64, at: Timestamp) -> Result<FixOutcome, AutomationError> {
        check_coordinates(lat, lon)?;
        let distance_m = haversine_m(self.center.0, self.center.1, lat, lon);
        let inside = distance_m <= self.radius_m;
        let outcome = FixOutcome { inside, distance_m, exited: self.inside && !inside, entered: !self.inside && inside };
        self.inside = inside;
        self.last = Some(Fix { lat, lon, at });
        Ok(outcome)
    }
}
