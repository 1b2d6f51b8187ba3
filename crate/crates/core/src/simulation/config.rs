//! Scenario configuration. Every field has a default, so an empty TOML
//! document describes the canonical wave scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{require, ConfigError};
use crate::infrastructure::{CorridorMap, Direction, FeedConfig, MapError, VslSurrogateConfig};
use crate::perception::{EstimatorConfig, RadarConfig};
use crate::rds::GridSpec;
use crate::units::METERS_PER_MILE;
use crate::vehicle::{VehicleId, VehicleKind};
use crate::ControllerConfig;

use super::idm::IdmParams;
use super::waves::{PeriodicPulse, WaveSchedule};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    OverrideSyntax(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Position integration scheme. Velocity is always `v += u dt`, floored at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `x += v_old dt`; keeps the discrete barrier decay exact.
    #[default]
    Forward,
    /// `x += v_new dt`.
    SemiImplicit,
}

/// Affine map between travel distance and mile marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadFrame {
    /// Mile marker at position 0.
    pub origin_mile_marker: f64,
    pub direction: Direction,
}

impl Default for RoadFrame {
    fn default() -> Self {
        Self {
            origin_mile_marker: 71.0,
            direction: Direction::Westbound,
        }
    }
}

impl RoadFrame {
    pub fn mile_marker(&self, position: f64) -> f64 {
        self.origin_mile_marker + self.direction.mile_marker_sign() * position / METERS_PER_MILE
    }

    pub fn position(&self, mile_marker: f64) -> f64 {
        (mile_marker - self.origin_mile_marker)
            * self.direction.mile_marker_sign()
            * METERS_PER_MILE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorConfig {
    /// With no corridor every controlled vehicle drives at the driver setpoint.
    pub enabled: bool,
    /// Gantry map file; when absent a uniform map is generated from
    /// `bounds` and `gantry_spacing_mi`.
    pub map_file: Option<PathBuf>,
    pub bounds: [f64; 2],
    pub gantry_spacing_mi: f64,
    /// Bypass the gantry network: every controlled vehicle sees this
    /// limit (m/s) as a valid in-corridor reading.
    pub fixed_vsl_mps: Option<f64>,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            map_file: None,
            bounds: [53.0, 70.0],
            gantry_spacing_mi: 0.5,
            fixed_vsl_mps: None,
        }
    }
}

impl CorridorConfig {
    pub fn build_map(&self) -> Result<CorridorMap, ScenarioError> {
        match &self.map_file {
            Some(path) => Ok(CorridorMap::load(path)?),
            None => Ok(CorridorMap::uniform(
                self.bounds[0],
                self.bounds[1],
                self.gantry_spacing_mi,
            )?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverConfig {
    /// Cruise setpoint used outside the corridor; defaults to
    /// `controller.v_des_max`.
    pub setpoint: Option<f64>,
    /// Time at which controlled vehicles engage (s).
    pub engage_at: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            setpoint: None,
            engage_at: 5.0,
        }
    }
}

/// Generated traffic. Lane 0 holds a platoon whose vehicles get ids
/// `0..platoon_size` from the front; the i-th entry of `adjacent_lanes`
/// holds a phantom platoon with ids starting at `10000 * (i + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub platoon_size: usize,
    /// Platoon indices (0 = front) driven by the controller.
    pub controlled: Vec<usize>,
    /// Mark the vehicle directly ahead of each controlled one as a probe.
    pub probes: bool,
    pub initial_speed: f64,
    /// Front bumper of each lane's leader (m).
    pub leader_position: f64,
    /// Relative uniform jitter on initial gaps.
    pub gap_jitter: f64,
    /// Phantom lanes feeding the radar only.
    pub adjacent_lanes: Vec<i32>,
    /// Added to `human.v0` for phantom-lane drivers (m/s).
    pub adjacent_speed_bias: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            platoon_size: 120,
            controlled: vec![30],
            probes: true,
            initial_speed: 30.0,
            leader_position: 0.0,
            gap_jitter: 0.1,
            adjacent_lanes: vec![1],
            adjacent_speed_bias: 0.0,
        }
    }
}

pub const ADJACENT_ID_STRIDE: VehicleId = 10_000;

/// One vehicle of an explicit roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: VehicleId,
    #[serde(default)]
    pub lane: i32,
    pub position: f64,
    pub velocity: f64,
    #[serde(default = "human_kind")]
    pub kind: VehicleKind,
    /// Hold the initial speed instead of following the human model.
    #[serde(default)]
    pub constant_speed: bool,
    /// Per-vehicle engagement time for controlled vehicles.
    #[serde(default)]
    pub engage_at: Option<f64>,
}

fn human_kind() -> VehicleKind {
    VehicleKind::Human
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StringConfig {
    pub n_controlled: usize,
    /// Speed of the prevailing traffic ahead of the first vehicle (m/s).
    pub traffic_speed: f64,
    pub v_gr: f64,
    pub stage_duration: f64,
    /// Spacing of the adjacent-lane stream (m).
    pub stream_spacing: f64,
    pub trace_interval: f64,
}

impl Default for StringConfig {
    fn default() -> Self {
        Self {
            n_controlled: 12,
            traffic_speed: 30.0,
            v_gr: 13.4,
            stage_duration: 120.0,
            stream_spacing: 40.0,
            trace_interval: 0.5,
        }
    }
}

impl StringConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require(
            self.traffic_speed >= 0.0,
            "string.traffic_speed",
            "must be >= 0",
        )?;
        require(self.v_gr > 0.0, "string.v_gr", "must be > 0")?;
        require(
            self.stage_duration > 0.0,
            "string.stage_duration",
            "must be > 0",
        )?;
        require(
            self.stream_spacing > 0.0,
            "string.stream_spacing",
            "must be > 0",
        )?;
        require(
            self.trace_interval > 0.0,
            "string.trace_interval",
            "must be > 0",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Integration step (s), in (0, 0.1]. Also the controller sample time.
    pub dt: f64,
    pub duration: f64,
    /// Log period (s); rounded to a whole number of steps, at least one.
    pub log_interval: f64,
    /// Also log human vehicles (controlled and probes are always logged).
    pub log_humans: bool,
    /// Collect lane-0 speed samples for building an RDS grid.
    pub capture_field: bool,
    pub integrator: Integrator,
    pub road: RoadFrame,
    pub corridor: CorridorConfig,
    pub vsl: VslSurrogateConfig,
    pub feed: FeedConfig,
    pub controller: ControllerConfig,
    pub driver: DriverConfig,
    pub radar: RadarConfig,
    pub estimator: EstimatorConfig,
    pub human: IdmParams,
    pub traffic: TrafficConfig,
    /// Explicit roster; when non-empty it replaces generated traffic.
    pub vehicles: Vec<VehicleSpec>,
    pub waves: WaveSchedule,
    pub rds: GridSpec,
    pub string: StringConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dt: 0.05,
            duration: 1200.0,
            log_interval: 0.5,
            log_humans: false,
            capture_field: false,
            integrator: Integrator::default(),
            road: RoadFrame::default(),
            corridor: CorridorConfig::default(),
            vsl: VslSurrogateConfig::default(),
            feed: FeedConfig::default(),
            controller: ControllerConfig::default(),
            driver: DriverConfig::default(),
            radar: RadarConfig::default(),
            estimator: EstimatorConfig::default(),
            human: IdmParams::default(),
            traffic: TrafficConfig::default(),
            vehicles: Vec::new(),
            waves: canonical_waves(),
            rds: GridSpec {
                n_reports: 40,
                ..GridSpec::default()
            },
            string: StringConfig::default(),
        }
    }
}

/// Recurring bottleneck slowdowns of the lane-0 leader and the first
/// phantom leader, out of phase with each other. They are long enough that
/// the platoon cannot absorb them, so stop-and-go waves reach the
/// controlled vehicle.
fn canonical_waves() -> WaveSchedule {
    WaveSchedule {
        pulses: Vec::new(),
        periodic: vec![
            PeriodicPulse {
                vehicle: 0,
                first_start: 60.0,
                period: 300.0,
                duration: 80.0,
                target_speed: 4.0,
                count: 10,
                decel: 3.0,
            },
            PeriodicPulse {
                vehicle: ADJACENT_ID_STRIDE,
                first_start: 200.0,
                period: 300.0,
                duration: 80.0,
                target_speed: 4.0,
                count: 10,
                decel: 3.0,
            },
        ],
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides with dotted keys, and
    /// validates the result.
    pub fn from_toml_with_overrides<S: AsRef<str>>(
        text: &str,
        overrides: &[S],
    ) -> Result<Self, ScenarioError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o.as_ref())?;
        }
        let cfg: ScenarioConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        require(self.dt > 0.0 && self.dt <= 0.1, "dt", "must be in (0, 0.1]")?;
        require(
            self.duration >= 0.0 && self.duration.is_finite(),
            "duration",
            "must be >= 0",
        )?;
        require(self.log_interval >= 0.0, "log_interval", "must be >= 0")?;
        self.effective_controller().validate()?;
        if let Some(sp) = self.driver.setpoint {
            require(sp >= 0.0, "driver.setpoint", "must be >= 0")?;
        }
        self.vsl.validate()?;
        self.feed.validate()?;
        self.radar.validate()?;
        self.estimator.validate()?;
        self.human.validate("human")?;
        self.waves.validate()?;
        self.rds.validate()?;
        self.string.validate()?;
        require(
            self.corridor.gantry_spacing_mi > 0.0,
            "corridor.gantry_spacing_mi",
            "must be > 0",
        )?;
        if let Some(v) = self.corridor.fixed_vsl_mps {
            require(v > 0.0, "corridor.fixed_vsl_mps", "must be > 0")?;
        }
        let t = &self.traffic;
        require(
            t.initial_speed >= 0.0,
            "traffic.initial_speed",
            "must be >= 0",
        )?;
        require(
            (0.0..1.0).contains(&t.gap_jitter),
            "traffic.gap_jitter",
            "must be in [0, 1)",
        )?;
        require(
            t.controlled.iter().all(|&i| i < t.platoon_size),
            "traffic.controlled",
            "index beyond platoon_size",
        )?;
        require(
            !t.adjacent_lanes.contains(&0),
            "traffic.adjacent_lanes",
            "lane 0 is the ego lane",
        )?;
        require(
            self.human.v0 + t.adjacent_speed_bias > 0.0,
            "traffic.adjacent_speed_bias",
            "phantom desired speed must stay > 0",
        )?;
        for v in &self.vehicles {
            require(v.velocity >= 0.0, "vehicles.velocity", "must be >= 0")?;
        }
        Ok(())
    }

    /// Controller config as run: sample time tied to `dt`.
    pub fn effective_controller(&self) -> ControllerConfig {
        ControllerConfig {
            dt: self.dt,
            ..self.controller
        }
    }

    pub fn driver_setpoint(&self) -> f64 {
        self.driver.setpoint.unwrap_or(self.controller.v_des_max)
    }
}

/// Sets a dotted key in a TOML table. The value is parsed as a TOML value,
/// falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ScenarioError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ScenarioError::OverrideSyntax(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ScenarioError::OverrideSyntax(spec.to_string()));
    }
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("non-empty key");
    let mut table = doc;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            ScenarioError::Invalid(ConfigError::new(key, format!("`{part}` is not a section")))
        })?;
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
