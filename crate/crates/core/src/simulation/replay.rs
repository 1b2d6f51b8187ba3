//! Open-loop recomputation of the middleway setpoint from a recorded log.

use serde::{Deserialize, Serialize};

use crate::controller::middleway;
use crate::vehicle::VehicleId;
use crate::ControllerConfig;

use super::log::LogRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayPoint {
    pub t: f64,
    pub vehicle_id: VehicleId,
    pub v_pr: f64,
    pub v_gr: f64,
    pub v_des: f64,
}

/// Recomputes `v_des` for every row that carries both `v_pr` and a valid
/// `v_gr`, with no feedback from the new setpoint.
pub fn replay_middleway(rows: &[LogRow], cfg: &ControllerConfig) -> Vec<ReplayPoint> {
    rows.iter()
        .filter_map(|r| {
            let (v_pr, v_gr) = (r.v_pr?, r.v_gr?);
            Some(ReplayPoint {
                t: r.t,
                vehicle_id: r.vehicle_id,
                v_pr,
                v_gr,
                v_des: middleway(v_pr, v_gr, cfg),
            })
        })
        .collect()
}
