//! Intelligent Driver Model, used as the human-driver surrogate.

use serde::{Deserialize, Serialize};

use crate::error::{require, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Safe time headway (s).
    #[serde(rename = "T")]
    pub time_headway: f64,
    /// Maximum acceleration (m/s^2).
    #[serde(rename = "a")]
    pub max_accel: f64,
    /// Comfortable deceleration (m/s^2).
    #[serde(rename = "b")]
    pub comfortable_decel: f64,
    /// Jam distance (m).
    pub s0: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 33.5,
            time_headway: 1.2,
            max_accel: 1.3,
            comfortable_decel: 2.0,
            s0: 2.0,
            delta: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self, section: &str) -> Result<(), ConfigError> {
        let pos = [
            ("v0", self.v0),
            ("T", self.time_headway),
            ("a", self.max_accel),
            ("b", self.comfortable_decel),
            ("s0", self.s0),
        ];
        for (name, value) in pos {
            require(
                value > 0.0 && value.is_finite(),
                &format!("{section}.{name}"),
                "must be > 0",
            )?;
        }
        require(
            self.delta >= 1.0,
            &format!("{section}.delta"),
            "must be >= 1",
        )
    }

    /// Desired dynamic gap `s*(v, dv)`.
    pub fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        let dv = v - v_lead;
        let dynamic = v * self.time_headway
            + v * dv / (2.0 * (self.max_accel * self.comfortable_decel).sqrt());
        self.s0 + dynamic.max(0.0)
    }

    /// Acceleration given an optional `(gap, lead speed)`.
    pub fn accel(&self, v: f64, lead: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / self.v0).powf(self.delta);
        let interaction = match lead {
            Some((gap, v_lead)) => {
                let ratio = self.desired_gap(v, v_lead) / gap.max(1e-3);
                ratio * ratio
            }
            None => 0.0,
        };
        self.max_accel * (free - interaction)
    }

    /// Steady-state gap at speed `v < v0` behind a lead at the same speed.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        (self.s0 + v * self.time_headway) / (1.0 - (v / self.v0).powf(self.delta)).sqrt()
    }
}
