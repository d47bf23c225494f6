use crate::home::{DeviceId, DeviceVerb};

use super::AutomationError;

/// Two-threshold pump control: start filling below `low`, stop above `high`,
/// leave the pump alone in between.
#[derive(Debug, Clone)]
pub struct TankController {
    pub low: f64,
    pub high: f64,
    pub pump: DeviceId,
    level: Option<f64>,
}

impl TankController {
    pub fn new(low: f64, high: f64, pump: DeviceId) -> Result<Self, AutomationError> {
        if !(0.0..=100.0).contains(&low) || !(0.0..=100.0).contains(&high) || low >= high {
            return Err(AutomationError::BadThresholds { low, high });
        }
        Ok(Self { low, high, pump, level: None })
    }

    pub fn level(&self) -> Option<f64> {
        self.level
    }

    pub fn on_level(&mut self, level: f64, pump_on: bool) -> Result<Option<DeviceVerb>, AutomationError> {
        if !(0.0..=100.0).contains(&level) {
            return Err(AutomationError::BadLevel(level));
        }
        self.level = Some(level);
        Ok(if level < self.low && !pump_on {
            Some(DeviceVerb::On)
        } else if level > self.high && pump_on {
            Some(DeviceVerb::Off)
        } else {
            None
        })
    }
}
