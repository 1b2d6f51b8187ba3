use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Human,
    Controlled,
    Probe,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Human => "human",
            VehicleKind::Controlled => "controlled",
            VehicleKind::Probe => "probe",
        }
    }
}

impl fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(VehicleKind::Human),
            "controlled" => Ok(VehicleKind::Controlled),
            "probe" => Ok(VehicleKind::Probe),
            other => Err(format!("unknown vehicle kind `{other}`")),
        }
    }
}

/// Longitudinal state of one vehicle.
///
/// `position` is the front bumper in meters along the direction of travel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub position: f64,
    pub velocity: f64,
    pub lane: i32,
    pub kind: VehicleKind,
    #[serde(default)]
    pub engaged: bool,
    #[serde(default = "default_length")]
    pub length: f64,
}

pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;

fn default_length() -> f64 {
    DEFAULT_VEHICLE_LENGTH
}

impl VehicleState {
    pub fn new(id: VehicleId, position: f64, velocity: f64, lane: i32, kind: VehicleKind) -> Self {
        Self {
            id,
            position,
            velocity,
            lane,
            kind,
            engaged: false,
            length: DEFAULT_VEHICLE_LENGTH,
        }
    }

    pub fn rear(&self) -> f64 {
        self.position - self.length
    }

    /// Bumper-to-bumper gap from `self` to a vehicle ahead of it.
    pub fn gap_to(&self, ahead: &VehicleState) -> f64 {
        ahead.rear() - self.position
    }
}
