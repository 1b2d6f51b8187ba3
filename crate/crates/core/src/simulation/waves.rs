//! Scripted speed disturbances that seed stop-and-go waves.

use serde::{Deserialize, Serialize};

use crate::error::{require, ConfigError};
use crate::vehicle::VehicleId;

/// Drive one vehicle down to `target_speed` for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePulse {
    pub vehicle: VehicleId,
    pub start: f64,
    pub duration: f64,
    pub target_speed: f64,
    #[serde(default = "default_decel")]
    pub decel: f64,
}

/// A pulse repeated every `period` seconds, `count` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPulse {
    pub vehicle: VehicleId,
    pub first_start: f64,
    pub period: f64,
    pub duration: f64,
    pub target_speed: f64,
    pub count: u32,
    #[serde(default = "default_decel")]
    pub decel: f64,
}

fn default_decel() -> f64 {
    3.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSchedule {
    pub pulses: Vec<WavePulse>,
    pub periodic: Vec<PeriodicPulse>,
}

/// Gain of the speed tracker used while a pulse is active (1/s).
const PULSE_GAIN: f64 = 1.0;

impl WaveSchedule {
    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty() && self.periodic.is_empty()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in &self.pulses {
            require(p.duration >= 0.0, "waves.pulses.duration", "must be >= 0")?;
            require(
                p.target_speed >= 0.0,
                "waves.pulses.target_speed",
                "must be >= 0",
            )?;
            require(p.decel > 0.0, "waves.pulses.decel", "must be > 0")?;
        }
        for p in &self.periodic {
            require(p.period > 0.0, "waves.periodic.period", "must be > 0")?;
            require(p.duration >= 0.0, "waves.periodic.duration", "must be >= 0")?;
            require(
                p.target_speed >= 0.0,
                "waves.periodic.target_speed",
                "must be >= 0",
            )?;
            require(p.decel > 0.0, "waves.periodic.decel", "must be > 0")?;
        }
        Ok(())
    }

    /// The pulse acting on `vehicle` at time `t`, as `(target speed, decel)`.
    pub fn active(&self, vehicle: VehicleId, t: f64) -> Option<(f64, f64)> {
        let single = self
            .pulses
            .iter()
            .filter(|p| p.vehicle == vehicle && t >= p.start && t < p.start + p.duration)
            .map(|p| (p.target_speed, p.decel));
        let periodic = self
            .periodic
            .iter()
            .filter(|p| p.vehicle == vehicle && t >= p.first_start)
            .filter_map(|p| {
                let k = ((t - p.first_start) / p.period).floor();
                let within = t - (p.first_start + k * p.period) < p.duration;
                (k < p.count as f64 && within).then_some((p.target_speed, p.decel))
            });
        single.chain(periodic).min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Applies any active pulse to a model acceleration. The result never
    /// exceeds `accel`, so car-following safety is kept.
    pub fn apply(&self, vehicle: VehicleId, t: f64, v: f64, accel: f64) -> f64 {
        match self.active(vehicle, t) {
            Some((target, decel)) => accel.min((PULSE_GAIN * (target - v)).max(-decel)),
            None => accel,
        }
    }
}
