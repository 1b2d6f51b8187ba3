//! Fixed-step longitudinal simulation of one controlled lane plus phantom
//! adjacent lanes that only feed the radar.

pub mod config;
pub mod idm;
pub mod log;
pub mod replay;
pub mod string;
pub mod waves;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{barrier, ControlInputs, ControllerOutput};
use crate::infrastructure::{GantryTracker, VslSystem};
use crate::perception::{add_speed_noise, lead_vehicle, synthesize_radar, RadarConfig};
use crate::rds::TrajectoryPoint;
use crate::units::METERS_PER_MILE;
use crate::vehicle::{VehicleId, VehicleKind, VehicleState};
use crate::{ControllerConfig, PrevailingEstimator, SpeedController};

pub use config::{
    Integrator, RoadFrame, ScenarioConfig, ScenarioError, StringConfig, TrafficConfig, VehicleSpec,
    ADJACENT_ID_STRIDE,
};
pub use idm::IdmParams;
pub use log::{Collision, ControlledSummary, Event, LogRow, RunLog, RunReport};
pub use replay::{replay_middleway, ReplayPoint};
pub use string::{string_experiment, StageResult, StringResult};
pub use waves::{PeriodicPulse, WavePulse, WaveSchedule};

/// Source of speed-limit information for controlled vehicles.
#[derive(Debug, Clone)]
pub enum Infrastructure {
    None,
    Fixed(f64),
    Corridor(VslSystem),
}

/// One controlled vehicle's on-board stack.
#[derive(Debug, Clone)]
pub struct ControlledAgent {
    pub controller: SpeedController,
    pub estimator: PrevailingEstimator,
    pub tracker: GantryTracker,
    pub driver_setpoint: f64,
    pub engage_at: f64,
    pub in_corridor: bool,
    pub last: Option<ControlRecord>,
    pub summary: ControlledSummary,
}

/// What the controller saw and did in the latest sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRecord {
    pub output: ControllerOutput<f64>,
    pub v_gr: Option<f64>,
    pub v_pr: f64,
    pub h: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Driver {
    Idm(IdmParams),
    Constant,
    Controlled(Box<ControlledAgent>),
}

#[derive(Debug, Clone)]
pub struct World {
    pub t: f64,
    pub dt: f64,
    steps: u64,
    pub vehicles: Vec<VehicleState>,
    pub drivers: Vec<Driver>,
    /// Vehicle indices per lane, downstream first.
    lanes: Vec<(i32, Vec<usize>)>,
    accel: Vec<f64>,
    pub road: RoadFrame,
    pub infrastructure: Infrastructure,
    pub waves: WaveSchedule,
    integrator: Integrator,
    radar: RadarConfig,
    noise_rng: ChaCha8Rng,
    pub events: Vec<Event>,
}

impl World {
    /// Builds the initial world from a validated config.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        let infrastructure = if !cfg.corridor.enabled {
            Infrastructure::None
        } else if let Some(v) = cfg.corridor.fixed_vsl_mps {
            Infrastructure::Fixed(v)
        } else {
            Infrastructure::Corridor(VslSystem::new(cfg.corridor.build_map()?, cfg.vsl, 0.0))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let specs = if cfg.vehicles.is_empty() {
            generate_traffic(cfg, &mut rng)
        } else {
            cfg.vehicles.clone()
        };
        let mut ids: Vec<VehicleId> = specs.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(crate::ConfigError::new("vehicles.id", "ids must be unique").into());
        }

        let controller_cfg = cfg.effective_controller();
        let mut vehicles = Vec::with_capacity(specs.len());
        let mut drivers = Vec::with_capacity(specs.len());
        for spec in &specs {
            vehicles.push(VehicleState::new(
                spec.id,
                spec.position,
                spec.velocity,
                spec.lane,
                spec.kind,
            ));
            let driver = match spec.kind {
                VehicleKind::Controlled => Driver::Controlled(Box::new(ControlledAgent {
                    controller: SpeedController::new(controller_cfg),
                    estimator: PrevailingEstimator::new(&cfg.estimator),
                    tracker: GantryTracker::new(&cfg.feed, sub_seed(cfg.seed, spec.id)),
                    driver_setpoint: cfg.driver_setpoint(),
                    engage_at: spec.engage_at.unwrap_or(cfg.driver.engage_at),
                    in_corridor: false,
                    last: None,
                    summary: ControlledSummary::new(spec.id),
                })),
                _ if spec.constant_speed => Driver::Constant,
                _ => {
                    let mut p = cfg.human;
                    if spec.lane != 0 {
                        p.v0 += cfg.traffic.adjacent_speed_bias;
                    }
                    Driver::Idm(p)
                }
            };
            drivers.push(driver);
        }

        let mut lane_ids: Vec<i32> = vehicles.iter().map(|v| v.lane).collect();
        lane_ids.sort_unstable();
        lane_ids.dedup();
        let mut lanes = Vec::new();
        for lane in lane_ids {
            let mut idx: Vec<usize> = (0..vehicles.len())
                .filter(|&i| vehicles[i].lane == lane)
                .collect();
            idx.sort_by(|&a, &b| vehicles[b].position.total_cmp(&vehicles[a].position));
            for w in idx.windows(2) {
                if vehicles[w[1]].gap_to(&vehicles[w[0]]) <= 0.0 {
                    return Err(crate::ConfigError::new(
                        "vehicles.position",
                        format!(
                            "vehicles {} and {} overlap in lane {lane}",
                            vehicles[w[1]].id, vehicles[w[0]].id
                        ),
                    )
                    .into());
                }
            }
            lanes.push((lane, idx));
        }

        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        noise_rng.set_stream(1);
        let n = vehicles.len();
        Ok(Self {
            t: 0.0,
            dt: cfg.dt,
            steps: 0,
            vehicles,
            drivers,
            lanes,
            accel: vec![0.0; n],
            road: cfg.road,
            infrastructure,
            waves: cfg.waves.clone(),
            integrator: cfg.integrator,
            radar: cfg.radar,
            noise_rng,
            events: Vec::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Acceleration commanded in the latest [`World::plan`].
    pub fn accel(&self, index: usize) -> f64 {
        self.accel[index]
    }

    pub fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }

    pub fn mile_marker(&self, index: usize) -> f64 {
        self.road.mile_marker(self.vehicles[index].position)
    }

    /// Vehicle directly ahead in the same lane.
    pub fn leader_of(&self, index: usize) -> Option<usize> {
        let lane = self.vehicles[index].lane;
        let (_, order) = self.lanes.iter().find(|(l, _)| *l == lane)?;
        let k = order.iter().position(|&i| i == index)?;
        k.checked_sub(1).map(|k| order[k])
    }

    /// Advances the world by one step.
    pub fn step(&mut self) -> Result<(), Collision> {
        self.plan();
        self.advance()
    }

    /// Computes every vehicle's acceleration from the current state and
    /// runs the infrastructure and on-board stacks at time `t`.
    pub fn plan(&mut self) {
        let t = self.t;
        self.update_infrastructure();
        for (_, order) in &self.lanes {
            for (k, &i) in order.iter().enumerate() {
                let lead = k.checked_sub(1).map(|k| order[k]);
                let me = &self.vehicles[i];
                let a = match &self.drivers[i] {
                    Driver::Idm(p) => {
                        let lead =
                            lead.map(|j| (me.gap_to(&self.vehicles[j]), self.vehicles[j].velocity));
                        p.accel(me.velocity, lead)
                    }
                    Driver::Constant => 0.0,
                    Driver::Controlled(_) => continue,
                };
                self.accel[i] = self.waves.apply(me.id, t, me.velocity, a);
            }
        }
        for i in 0..self.vehicles.len() {
            if matches!(self.drivers[i], Driver::Controlled(_)) {
                self.accel[i] = self.control(i);
            }
        }
    }

    fn update_infrastructure(&mut self) {
        let Infrastructure::Corridor(system) = &mut self.infrastructure else {
            return;
        };
        let road = self.road;
        let vehicles = &self.vehicles;
        let seg_len = system.config.segment_mi * METERS_PER_MILE;
        let n_seg = (system.config.lookahead_mi / system.config.segment_mi)
            .round()
            .max(1.0) as usize;
        let changes = system.update(self.t, |g| {
            if g.direction != road.direction {
                return Vec::new();
            }
            downstream_speeds(vehicles, road.position(g.mile_marker), seg_len, n_seg)
        });
        self.events
            .extend(changes.into_iter().map(|c| Event::GantryChange {
                t: self.t,
                gantry: c.gantry_id,
                from_mph: c.from_mph,
                to_mph: c.to_mph,
            }));
    }

    fn control(&mut self, i: usize) -> f64 {
        let t = self.t;
        let ego = self.vehicles[i].clone();
        let mm = self.road.mile_marker(ego.position);
        let mut frame = synthesize_radar(&ego, self.vehicles.iter(), self.radar.range, t);
        add_speed_noise(&mut frame, self.radar.speed_noise_std, &mut self.noise_rng);
        let true_gap = self.leader_of(i).map(|j| ego.gap_to(&self.vehicles[j]));

        let Driver::Controlled(agent) = &mut self.drivers[i] else {
            unreachable!("control called on a controlled vehicle")
        };
        let v_pr = agent
            .estimator
            .update(&frame, ego.velocity)
            .expect("simulation time is monotone");
        let (in_corridor, v_gr) = match &self.infrastructure {
            Infrastructure::None => (false, None),
            Infrastructure::Fixed(v) => (true, Some(*v)),
            Infrastructure::Corridor(system) => {
                let status = agent.tracker.update(t, mm, &system.map);
                if let Some(g) = status.acquired {
                    self.events.push(Event::GantryAcquired {
                        t,
                        vehicle: ego.id,
                        gantry: g,
                    });
                }
                (
                    status.in_corridor,
                    status.reading.valid.then_some(status.reading.v_gr),
                )
            }
        };
        if in_corridor != agent.in_corridor {
            agent.in_corridor = in_corridor;
            self.events.push(if in_corridor {
                Event::CorridorEntered { t, vehicle: ego.id }
            } else {
                Event::CorridorExited { t, vehicle: ego.id }
            });
        }
        let engaged = t + 1e-9 >= agent.engage_at;
        if engaged && !self.vehicles[i].engaged {
            self.vehicles[i].engaged = true;
            self.events.push(Event::Engaged { t, vehicle: ego.id });
        }
        let lead = lead_vehicle(&frame, ego.velocity);
        let inputs = ControlInputs {
            engaged,
            in_corridor,
            vsl_valid: v_gr.is_some(),
            driver_setpoint: agent.driver_setpoint,
            v: ego.velocity,
            v_gr: v_gr.unwrap_or(0.0),
            v_pr,
            lead,
        };
        let output = agent.controller.step(&inputs);
        let h = lead.map(|l| barrier(l.gap, ego.velocity, &agent.controller.config));
        agent.summary.record(output.mode, h, true_gap);
        agent.last = Some(ControlRecord {
            output,
            v_gr,
            v_pr,
            h,
        });
        output.u
    }

    /// Integrates one step and checks every lane for overlap.
    pub fn advance(&mut self) -> Result<(), Collision> {
        let dt = self.dt;
        for (v, &a) in self.vehicles.iter_mut().zip(&self.accel) {
            let v_new = (v.velocity + a * dt).max(0.0);
            v.position += match self.integrator {
                Integrator::Forward => v.velocity * dt,
                Integrator::SemiImplicit => v_new * dt,
            };
            v.velocity = v_new;
        }
        self.steps += 1;
        self.t = self.steps as f64 * dt;
        for (_, order) in &self.lanes {
            for w in order.windows(2) {
                let gap = self.vehicles[w[1]].gap_to(&self.vehicles[w[0]]);
                if gap <= 0.0 {
                    let c = Collision {
                        t: self.t,
                        follower: self.vehicles[w[1]].id,
                        leader: self.vehicles[w[0]].id,
                        gap,
                    };
                    self.events.push(Event::Collision(c));
                    return Err(c);
                }
            }
        }
        Ok(())
    }

    /// Log row for vehicle `i` at the current time.
    pub fn log_row(&self, i: usize) -> LogRow {
        let v = &self.vehicles[i];
        let record = match &self.drivers[i] {
            Driver::Controlled(agent) => agent.last,
            _ => None,
        };
        LogRow {
            t: self.t,
            vehicle_id: v.id,
            kind: v.kind,
            position_m: v.position,
            mile_marker: self.road.mile_marker(v.position),
            velocity_mps: v.velocity,
            mode: record.map(|r| r.output.mode),
            v_des: record.map(|r| r.output.v_des),
            v_gr: record.and_then(|r| r.v_gr),
            v_pr: record.map(|r| r.v_pr),
            u: self.accel[i],
        }
    }

    pub fn summaries(&self) -> Vec<ControlledSummary> {
        self.drivers
            .iter()
            .filter_map(|d| match d {
                Driver::Controlled(a) => Some(a.summary.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn controlled(&self, i: usize) -> Option<&ControlledAgent> {
        match &self.drivers[i] {
            Driver::Controlled(a) => Some(a),
            _ => None,
        }
    }
}

/// Mean speed per segment `[start + k len, start + (k + 1) len)`; empty
/// segments are skipped.
pub fn downstream_speeds(vehicles: &[VehicleState], start: f64, len: f64, n: usize) -> Vec<f64> {
    let mut acc = vec![(0.0, 0usize); n];
    for v in vehicles {
        let d = v.position - start;
        if d < 0.0 || len <= 0.0 {
            continue;
        }
        let k = (d / len) as usize;
        if k < n {
            acc[k].0 += v.velocity;
            acc[k].1 += 1;
        }
    }
    acc.into_iter()
        .filter(|&(_, c)| c > 0)
        .map(|(s, c)| s / c as f64)
        .collect()
}

/// Independent seed for a per-vehicle stream.
fn sub_seed(seed: u64, id: VehicleId) -> u64 {
    seed ^ (u64::from(id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Roster for the generated platoons.
pub fn generate_traffic(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<VehicleSpec> {
    let t = &cfg.traffic;
    let ctrl = cfg.effective_controller();
    let mut specs = Vec::new();
    let mut lanes = vec![(0i32, 0 as VehicleId)];
    for (k, &lane) in t.adjacent_lanes.iter().enumerate() {
        lanes.push((lane, ADJACENT_ID_STRIDE * (k as VehicleId + 1)));
    }
    for (lane, base) in lanes {
        let mut params = cfg.human;
        if lane != 0 {
            params.v0 += t.adjacent_speed_bias;
        }
        let v = t.initial_speed.min(0.95 * params.v0);
        let mut position = t.leader_position;
        for k in 0..t.platoon_size {
            let controlled = lane == 0 && t.controlled.contains(&k);
            let probe = lane == 0 && t.probes && t.controlled.contains(&(k + 1));
            if k > 0 {
                let jitter = if t.gap_jitter > 0.0 {
                    rng.random_range(-t.gap_jitter..t.gap_jitter)
                } else {
                    0.0
                };
                let mut gap = params.equilibrium_gap(v) * (1.0 + jitter);
                if controlled {
                    gap = gap.max(safe_gap(&ctrl, v) + 1.0);
                }
                position -= gap + crate::vehicle::DEFAULT_VEHICLE_LENGTH;
            }
            specs.push(VehicleSpec {
                id: base + k as VehicleId,
                lane,
                position,
                velocity: v,
                kind: if controlled {
                    VehicleKind::Controlled
                } else if probe {
                    VehicleKind::Probe
                } else {
                    VehicleKind::Human
                },
                constant_speed: false,
                engage_at: None,
            });
        }
    }
    specs
}

/// Gap at which the barrier is exactly zero.
pub fn safe_gap(cfg: &ControllerConfig, v: f64) -> f64 {
    cfg.t_min * v + cfg.s_min
}

/// Runs a scenario to completion or to the first collision.
pub fn run(cfg: &ScenarioConfig) -> Result<RunLog, ScenarioError> {
    let mut world = World::new(cfg)?;
    let n_steps = (cfg.duration / cfg.dt).round() as u64;
    let log_every = ((cfg.log_interval / cfg.dt).round() as u64).max(1);
    let logged: Vec<usize> = (0..world.vehicles.len())
        .filter(|&i| cfg.log_humans || world.vehicles[i].kind != VehicleKind::Human)
        .collect();
    let mut log = RunLog::default();
    for k in 0..n_steps {
        world.plan();
        if k % log_every == 0 {
            log.rows.extend(logged.iter().map(|&i| world.log_row(i)));
            if cfg.capture_field {
                log.field
                    .extend(world.vehicles.iter().filter(|v| v.lane == 0).map(|v| {
                        TrajectoryPoint {
                            t: world.t,
                            mile_marker: world.road.mile_marker(v.position),
                            v: v.velocity,
                        }
                    }));
            }
        }
        if let Err(c) = world.advance() {
            log.collision = Some(c);
            break;
        }
    }
    log.steps = world.steps();
    log.events = std::mem::take(&mut world.events);
    log.summaries = world.summaries();
    Ok(log)
}
