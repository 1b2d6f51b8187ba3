//! Radar sensor model and the prevailing-speed estimator.
//!
//! The forward radar reports up to 16 targets with relative position and
//! relative speed. The prevailing speed `v_pr` is the mean absolute speed of
//! every return from a vehicle moving faster than the ego vehicle over the
//! last few seconds; with too few such returns the estimate is switched off
//! and reads zero.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Lead;
use crate::error::{require, ConfigError};
use crate::scalar::Scalar;
use crate::vehicle::{VehicleId, VehicleState};

pub const MAX_RADAR_TARGETS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarTarget<T> {
    pub track_id: VehicleId,
    /// Longitudinal gap from the ego front bumper to the target rear (m).
    pub rel_position: T,
    /// Target speed minus ego speed (m/s).
    pub rel_speed: T,
    /// 0 for the ego lane, +/-1 for the adjacent lanes.
    pub lane_offset: i8,
    pub timestamp: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarFrame<T> {
    pub timestamp: T,
    targets: Vec<RadarTarget<T>>,
}

impl<T: Scalar> RadarFrame<T> {
    /// Builds a frame, ordering targets by range (track id breaks ties) and
    /// keeping the nearest [`MAX_RADAR_TARGETS`].
    pub fn new(timestamp: T, mut targets: Vec<RadarTarget<T>>) -> Self {
        targets.sort_by(|a, b| {
            a.rel_position
                .partial_cmp(&b.rel_position)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.track_id.cmp(&b.track_id))
        });
        targets.truncate(MAX_RADAR_TARGETS);
        Self { timestamp, targets }
    }

    pub fn empty(timestamp: T) -> Self {
        Self {
            timestamp,
            targets: Vec::new(),
        }
    }

    pub fn targets(&self) -> &[RadarTarget<T>] {
        &self.targets
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Maximum detection range (m).
    pub range: f64,
    /// Standard deviation of zero-mean Gaussian noise on relative speed.
    pub speed_noise_std: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            range: 120.0,
            speed_noise_std: 0.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require(
            self.range > 0.0 && self.range.is_finite(),
            "radar.range",
            "must be > 0",
        )?;
        require(
            self.speed_noise_std >= 0.0 && self.speed_noise_std.is_finite(),
            "radar.speed_noise_std",
            "must be >= 0",
        )
    }
}

/// Synthesizes the frame the ego radar would report: the nearest vehicles
/// ahead in the ego lane and the two adjacent lanes, within `range`.
pub fn synthesize_radar<'a, I>(
    ego: &VehicleState,
    others: I,
    range: f64,
    now: f64,
) -> RadarFrame<f64>
where
    I: IntoIterator<Item = &'a VehicleState>,
{
    let targets = others
        .into_iter()
        .filter(|o| o.id != ego.id)
        .filter_map(|o| {
            let lane_offset = o.lane - ego.lane;
            if lane_offset.abs() > 1 {
                return None;
            }
            let gap = ego.gap_to(o);
            (gap >= 0.0 && gap <= range).then_some(RadarTarget {
                track_id: o.id,
                rel_position: gap,
                rel_speed: o.velocity - ego.velocity,
                lane_offset: lane_offset as i8,
                timestamp: now,
            })
        })
        .collect();
    RadarFrame::new(now, targets)
}

/// Adds independent Gaussian noise to every target's relative speed.
pub fn add_speed_noise<R: Rng + ?Sized>(frame: &mut RadarFrame<f64>, std_dev: f64, rng: &mut R) {
    if std_dev <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std_dev).expect("std_dev checked positive");
    for target in &mut frame.targets {
        target.rel_speed += normal.sample(rng);
    }
}

/// Nearest ego-lane target as a CBF lead, if any.
pub fn lead_vehicle<T: Scalar>(frame: &RadarFrame<T>, v_ego: T) -> Option<Lead<T>> {
    frame
        .targets()
        .iter()
        .find(|t| t.lane_offset == 0)
        .map(|t| Lead {
            gap: t.rel_position,
            speed: v_ego + t.rel_speed,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Length of the rolling window (s).
    pub window: f64,
    /// Fewest buffered returns for the estimate to be on.
    pub min_count: usize,
    /// Whether adjacent-lane returns feed the estimate.
    pub include_adjacent: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: 5.0,
            min_count: 5,
            include_adjacent: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require(
            self.window > 0.0 && self.window.is_finite(),
            "estimator.window",
            "must be > 0",
        )?;
        require(self.min_count >= 1, "estimator.min_count", "must be >= 1")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EstimatorError {
    #[error("radar frame at t={got} is older than the last frame at t={last}")]
    NonMonotonicTimestamp { last: f64, got: f64 },
}

/// Rolling-window prevailing-speed estimator.
#[derive(Debug, Clone)]
pub struct PrevailingEstimator<T> {
    window_duration: T,
    min_count: usize,
    include_adjacent: bool,
    window: VecDeque<(T, T)>,
    last_timestamp: Option<T>,
}

impl<T: Scalar> PrevailingEstimator<T> {
    pub fn new(config: &EstimatorConfig) -> Self {
        Self {
            window_duration: T::lit(config.window),
            min_count: config.min_count,
            include_adjacent: config.include_adjacent,
            window: VecDeque::new(),
            last_timestamp: None,
        }
    }

    /// Buffered `(timestamp, absolute speed)` samples, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.window.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn window_duration(&self) -> T {
        self.window_duration
    }

    /// Ingests one frame and returns the new estimate.
    pub fn update(&mut self, frame: &RadarFrame<T>, v_ego: T) -> Result<T, EstimatorError> {
        let now = frame.timestamp;
        if let Some(last) = self.last_timestamp {
            if now < last {
                return Err(EstimatorError::NonMonotonicTimestamp {
                    last: last.to_f64_lossy(),
                    got: now.to_f64_lossy(),
                });
            }
        }
        self.last_timestamp = Some(now);
        for target in frame.targets() {
            if target.lane_offset != 0 && !self.include_adjacent {
                continue;
            }
            if target.rel_speed > T::zero() {
                self.window.push_back((now, v_ego + target.rel_speed));
            }
        }
        self.evict(now);
        Ok(self.estimate())
    }

    /// Drops samples older than the window as of `now` without a new frame.
    pub fn advance_to(&mut self, now: T) -> T {
        self.evict(now);
        self.estimate()
    }

    fn evict(&mut self, now: T) {
        while let Some(&(ts, _)) = self.window.front() {
            if now - ts > self.window_duration {
                self.window.pop_front();
            } else {
                break;
            }
        }
    }

    /// Mean buffered speed, or zero below `min_count` samples.
    pub fn estimate(&self) -> T {
        if self.window.len() < self.min_count {
            return T::zero();
        }
        let sum = self.window.iter().fold(T::zero(), |acc, &(_, v)| acc + v);
        sum / T::from_usize(self.window.len()).expect("window length fits scalar")
    }
}
