//! A chain of controlled vehicles behind fast prevailing traffic.
//!
//! Each vehicle only sees the one ahead of it and the adjacent-lane
//! stream moving at that vehicle's speed, so the chain is run as a cascade:
//! stage `k` puts one controlled vehicle behind a lead and a phantom stream
//! that both move at the steady speed reached in stage `k - 1`. Stage 1
//! sees the upstream traffic speed.

use serde::{Deserialize, Serialize};

use crate::controller::Mode;
use crate::vehicle::{VehicleKind, DEFAULT_VEHICLE_LENGTH};

use super::config::{ScenarioConfig, ScenarioError, StringConfig, VehicleSpec};
use super::waves::WaveSchedule;
use super::{safe_gap, Collision, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub v: f64,
    pub v_des: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    /// 1-based position in the chain.
    pub index: usize,
    /// Speed of the traffic this vehicle follows.
    pub traffic_speed: f64,
    pub trace: Vec<TracePoint>,
    pub steady_v_des: f64,
    pub steady_speed: f64,
    pub steady_mode: Mode,
    pub collision: Option<Collision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringResult {
    pub v_gr: f64,
    pub stages: Vec<StageResult>,
}

impl StringResult {
    pub fn steady_v_des(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.steady_v_des).collect()
    }
}

/// Runs `n_controlled` stages using the controller, estimator and radar
/// settings of `base` and the chain settings of `base.string`.
pub fn string_experiment(
    base: &ScenarioConfig,
    n_controlled: usize,
) -> Result<StringResult, ScenarioError> {
    let s = base.string;
    let mut stages = Vec::with_capacity(n_controlled);
    let mut traffic_speed = s.traffic_speed;
    for index in 1..=n_controlled {
        let stage = run_stage(base, &s, index, traffic_speed)?;
        traffic_speed = stage.steady_speed;
        let halted = stage.collision.is_some();
        stages.push(stage);
        if halted {
            break;
        }
    }
    Ok(StringResult {
        v_gr: s.v_gr,
        stages,
    })
}

fn stage_config(base: &ScenarioConfig, s: &StringConfig, traffic_speed: f64) -> ScenarioConfig {
    let ctrl = base.effective_controller();
    let mut vehicles = vec![
        VehicleSpec {
            id: 0,
            lane: 0,
            position: 0.0,
            velocity: traffic_speed,
            kind: VehicleKind::Controlled,
            constant_speed: false,
            engage_at: Some(0.0),
        },
        VehicleSpec {
            id: 1,
            lane: 0,
            position: safe_gap(&ctrl, traffic_speed) + 5.0 + DEFAULT_VEHICLE_LENGTH,
            velocity: traffic_speed,
            kind: VehicleKind::Human,
            constant_speed: true,
            engage_at: None,
        },
    ];
    let behind = traffic_speed * s.stage_duration + 100.0;
    let ahead = base.radar.range + 50.0;
    let count = ((behind + ahead) / s.stream_spacing).ceil() as u32;
    vehicles.extend((0..=count).map(|k| VehicleSpec {
        id: 100 + k,
        lane: 1,
        position: ahead - k as f64 * s.stream_spacing,
        velocity: traffic_speed,
        kind: VehicleKind::Human,
        constant_speed: true,
        engage_at: None,
    }));
    let mut cfg = base.clone();
    cfg.vehicles = vehicles;
    cfg.waves = WaveSchedule::default();
    cfg.corridor.enabled = true;
    cfg.corridor.fixed_vsl_mps = Some(s.v_gr);
    cfg.duration = s.stage_duration;
    cfg
}

fn run_stage(
    base: &ScenarioConfig,
    s: &StringConfig,
    index: usize,
    traffic_speed: f64,
) -> Result<StageResult, ScenarioError> {
    let cfg = stage_config(base, s, traffic_speed);
    let mut world = World::new(&cfg)?;
    let ego = world.index_of(0).expect("ego in roster");
    let n_steps = (cfg.duration / cfg.dt).round() as u64;
    let every = ((s.trace_interval / cfg.dt).round() as u64).max(1);
    let mut trace = Vec::new();
    let mut collision = None;
    let mut last = None;
    for k in 0..n_steps {
        world.plan();
        let out = world
            .controlled(ego)
            .and_then(|a| a.last)
            .expect("ego planned");
        let point = TracePoint {
            t: world.t,
            v: world.vehicles[ego].velocity,
            v_des: out.output.v_des,
            mode: out.output.mode,
        };
        if k % every == 0 {
            trace.push(point);
        }
        last = Some(point);
        if let Err(c) = world.advance() {
            collision = Some(c);
            break;
        }
    }
    let last = last.unwrap_or(TracePoint {
        t: 0.0,
        v: traffic_speed,
        v_des: traffic_speed,
        mode: Mode::Disengaged,
    });
    Ok(StageResult {
        index,
        traffic_speed,
        trace,
        steady_v_des: last.v_des,
        steady_speed: world.vehicles[ego].velocity,
        steady_mode: last.mode,
        collision,
    })
}
