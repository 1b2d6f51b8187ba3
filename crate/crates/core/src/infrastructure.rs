//! Simulated VSL corridor: gantries, the traffic-management-side speed
//! limit logic, and the in-vehicle gantry lookup with a latent data feed.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{require, ConfigError};
use crate::units::{mph_to_mps, mps_to_mph};

pub type GantryId = u32;

/// Time comparisons on the fixed-step clock use this slack.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Eastbound,
    Westbound,
}

impl Direction {
    /// Sign of mile-marker change when travelling in this direction.
    pub fn mile_marker_sign(self) -> f64 {
        match self {
            Direction::Eastbound => 1.0,
            Direction::Westbound => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Eastbound => "eastbound",
            Direction::Westbound => "westbound",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gantry {
    pub id: GantryId,
    pub mile_marker: f64,
    pub direction: Direction,
    #[serde(default = "default_posted")]
    pub posted_mph: u32,
    #[serde(default = "default_last_update")]
    pub last_update: f64,
}

fn default_posted() -> u32 {
    70
}

fn default_last_update() -> f64 {
    f64::NEG_INFINITY
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot read corridor map {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse corridor map: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Deserialize)]
struct MapFile {
    bounds: [f64; 2],
    #[serde(default, rename = "gantry")]
    gantries: Vec<Gantry>,
}

/// Gantries ordered by mile marker, plus the geofence bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorMap {
    lo: f64,
    hi: f64,
    gantries: Vec<Gantry>,
}

impl CorridorMap {
    pub fn new(bounds: [f64; 2], mut gantries: Vec<Gantry>) -> Result<Self, ConfigError> {
        let [lo, hi] = bounds;
        require(
            lo.is_finite() && hi.is_finite() && lo < hi,
            "corridor.bounds",
            "need lo < hi",
        )?;
        gantries.sort_by(|a, b| {
            a.mile_marker
                .total_cmp(&b.mile_marker)
                .then(a.id.cmp(&b.id))
        });
        for g in &gantries {
            require(
                g.mile_marker.is_finite(),
                "corridor.gantry.mile_marker",
                "must be finite",
            )?;
            require(
                is_valid_posted(g.posted_mph),
                "corridor.gantry.posted_mph",
                "must be a multiple of 5 in [30, 70]",
            )?;
        }
        let mut ids: Vec<_> = gantries.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        ids.dedup();
        require(
            ids.len() == gantries.len(),
            "corridor.gantry.id",
            "ids must be unique",
        )?;
        Ok(Self { lo, hi, gantries })
    }

    /// Gantries every `spacing` miles in both directions across `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, spacing: f64) -> Result<Self, ConfigError> {
        require(spacing > 0.0, "corridor.spacing_mi", "must be > 0")?;
        let n = ((hi - lo) / spacing + TIME_EPS).floor() as u32;
        let mut gantries = Vec::new();
        for (k, direction) in [Direction::Westbound, Direction::Eastbound]
            .into_iter()
            .enumerate()
        {
            for i in 0..=n {
                gantries.push(Gantry {
                    id: k as u32 * 1000 + i,
                    mile_marker: hi - i as f64 * spacing,
                    direction,
                    posted_mph: 70,
                    last_update: f64::NEG_INFINITY,
                });
            }
        }
        Self::new([lo, hi], gantries)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, MapError> {
        let file: MapFile = toml::from_str(text)?;
        Ok(Self::new(file.bounds, file.gantries)?)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn bounds(&self) -> [f64; 2] {
        [self.lo, self.hi]
    }

    pub fn contains(&self, mile_marker: f64) -> bool {
        mile_marker >= self.lo && mile_marker <= self.hi
    }

    pub fn gantries(&self) -> &[Gantry] {
        &self.gantries
    }

    pub fn gantry(&self, id: GantryId) -> Option<&Gantry> {
        self.gantries.iter().find(|g| g.id == id)
    }

    pub fn gantry_mut(&mut self, id: GantryId) -> Option<&mut Gantry> {
        self.gantries.iter_mut().find(|g| g.id == id)
    }

    /// Nearest gantry serving `heading` within `proximity` miles.
    pub fn nearest_within(
        &self,
        mile_marker: f64,
        heading: Direction,
        proximity: f64,
    ) -> Option<&Gantry> {
        self.gantries
            .iter()
            .filter(|g| g.direction == heading)
            .map(|g| ((g.mile_marker - mile_marker).abs(), g))
            .filter(|(d, _)| *d <= proximity + 1e-12)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(_, g)| g)
    }
}

pub fn is_valid_posted(mph: u32) -> bool {
    (30..=70).contains(&mph) && mph.is_multiple_of(5)
}

/// Gantry speed limit as seen by a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VslReading {
    pub gantry_id: Option<GantryId>,
    /// Posted speed (m/s).
    pub v_gr: f64,
    pub valid: bool,
    pub fetched_at: f64,
}

impl VslReading {
    pub fn invalid(at: f64) -> Self {
        Self {
            gantry_id: None,
            v_gr: 0.0,
            valid: false,
            fetched_at: at,
        }
    }

    pub fn from_gantry(gantry: &Gantry, at: f64) -> Self {
        Self {
            gantry_id: Some(gantry.id),
            v_gr: mph_to_mps(gantry.posted_mph as f64),
            valid: true,
            fetched_at: at,
        }
    }
}

/// Gantry whose limit applies at `mile_marker`.
///
/// Inside the corridor, a gantry within `proximity` miles is acquired; the
/// last acquired gantry otherwise stays active until another is acquired or
/// the corridor is left.
pub fn active_gantry(
    mile_marker: f64,
    heading: Direction,
    map: &CorridorMap,
    previous: Option<GantryId>,
    proximity: f64,
) -> Option<GantryId> {
    if !map.contains(mile_marker) {
        return None;
    }
    if let Some(g) = map.nearest_within(mile_marker, heading, proximity) {
        return Some(g.id);
    }
    previous.filter(|id| map.gantry(*id).is_some_and(|g| g.direction == heading))
}

/// Fetch times for the gantry poller: one at every bounds-entry event and
/// every `period` seconds after the most recent one, up to `end`.
pub fn fetch_times(entries: &[f64], end: f64, period: f64) -> Vec<f64> {
    let mut schedule = PollSchedule::new(period);
    let mut out = Vec::new();
    let mut pending = entries.iter().copied().peekable();
    loop {
        let next_periodic = schedule.next_fetch();
        let next_entry = pending.peek().copied();
        let t = match (next_entry, next_periodic) {
            (Some(e), Some(p)) if e <= p + TIME_EPS => {
                pending.next();
                schedule.on_entry(e);
                e
            }
            (_, Some(p)) => {
                schedule.on_fetch(p);
                p
            }
            (Some(e), None) => {
                pending.next();
                schedule.on_entry(e);
                e
            }
            (None, None) => break,
        };
        if t > end + TIME_EPS {
            break;
        }
        out.push(t);
    }
    out
}

/// Periodic poll timer that restarts on every gantry-bounds entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PollSchedule {
    period: f64,
    next: Option<f64>,
}

impl PollSchedule {
    pub fn new(period: f64) -> Self {
        Self { period, next: None }
    }

    pub fn next_fetch(&self) -> Option<f64> {
        self.next
    }

    pub fn on_entry(&mut self, now: f64) {
        self.next = Some(now + self.period);
    }

    pub fn on_fetch(&mut self, now: f64) {
        self.next = Some(now + self.period);
    }

    pub fn due(&self, now: f64) -> bool {
        self.next.is_some_and(|t| now + TIME_EPS >= t)
    }

    pub fn reset(&mut self) {
        self.next = None;
    }
}

/// Stand-in for the traffic operations center's VSL logic: activate below a
/// speed threshold, post the slowest downstream speed plus a buffer rounded
/// to a multiple of 5 mph, and limit the change per update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VslSurrogateConfig {
    pub activation_threshold_mph: f64,
    pub buffer_mph: f64,
    /// Largest change per update; 0 disables the limit.
    pub max_step_mph: u32,
    /// Seconds between updates; never below 30.
    pub update_interval: f64,
    /// How far downstream of each gantry speeds are inspected.
    pub lookahead_mi: f64,
    pub segment_mi: f64,
}

impl Default for VslSurrogateConfig {
    fn default() -> Self {
        Self {
            activation_threshold_mph: 45.0,
            buffer_mph: 10.0,
            max_step_mph: 10,
            update_interval: 30.0,
            lookahead_mi: 1.0,
            segment_mi: 0.5,
        }
    }
}

impl VslSurrogateConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require(
            self.update_interval >= 30.0,
            "vsl.update_interval",
            "must be >= 30 s",
        )?;
        require(self.lookahead_mi > 0.0, "vsl.lookahead_mi", "must be > 0")?;
        require(self.segment_mi > 0.0, "vsl.segment_mi", "must be > 0")?;
        require(self.buffer_mph >= 0.0, "vsl.buffer_mph", "must be >= 0")?;
        require(
            self.max_step_mph.is_multiple_of(5),
            "vsl.max_step_mph",
            "must be a multiple of 5",
        )
    }

    /// Unconstrained target limit for the given downstream segment speeds (m/s).
    pub fn target_posted(&self, downstream_speeds: &[f64]) -> u32 {
        let slowest = downstream_speeds
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        if !slowest.is_finite() {
            return 70;
        }
        let slowest_mph = mps_to_mph(slowest.max(0.0));
        if slowest_mph >= self.activation_threshold_mph {
            return 70;
        }
        let rounded = ((slowest_mph + self.buffer_mph) / 5.0).round() * 5.0;
        rounded.clamp(30.0, 70.0) as u32
    }
}

/// Next posted limit for one gantry.
pub fn vsl_algorithm(downstream_speeds: &[f64], prev_posted: u32, cfg: &VslSurrogateConfig) -> u32 {
    let target = cfg.target_posted(downstream_speeds);
    if cfg.max_step_mph == 0 {
        return target;
    }
    let step = cfg.max_step_mph as i64;
    let delta = (target as i64 - prev_posted as i64).clamp(-step, step);
    (prev_posted as i64 + delta).clamp(30, 70) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GantryChange {
    pub gantry_id: GantryId,
    pub from_mph: u32,
    pub to_mph: u32,
}

/// Traffic-management side of the corridor, advanced by the simulation clock.
#[derive(Debug, Clone)]
pub struct VslSystem {
    pub map: CorridorMap,
    pub config: VslSurrogateConfig,
    next_update: f64,
}

impl VslSystem {
    pub fn new(map: CorridorMap, config: VslSurrogateConfig, start: f64) -> Self {
        Self {
            map,
            config,
            next_update: start,
        }
    }

    /// Runs the surrogate if an update is due. `downstream` maps a gantry to
    /// the mean speeds of the segments downstream of it.
    pub fn update<F>(&mut self, now: f64, mut downstream: F) -> Vec<GantryChange>
    where
        F: FnMut(&Gantry) -> Vec<f64>,
    {
        if now + TIME_EPS < self.next_update {
            return Vec::new();
        }
        self.next_update = now + self.config.update_interval;
        let mut changes = Vec::new();
        let planned: Vec<(GantryId, u32)> = self
            .map
            .gantries()
            .iter()
            .map(|g| {
                (
                    g.id,
                    vsl_algorithm(&downstream(g), g.posted_mph, &self.config),
                )
            })
            .collect();
        for (id, posted) in planned {
            let gantry = self.map.gantry_mut(id).expect("planned from map");
            if gantry.posted_mph != posted {
                changes.push(GantryChange {
                    gantry_id: id,
                    from_mph: gantry.posted_mph,
                    to_mph: posted,
                });
                gantry.posted_mph = posted;
                gantry.last_update = now;
            }
        }
        changes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedConfig {
    /// Delay from fetch to availability in the vehicle (s).
    pub latency: f64,
    /// Probability that a fetched reading never arrives.
    pub dropout: f64,
    /// Age after which the last delivered reading is treated as invalid (s).
    pub staleness: f64,
    /// Poll period while a gantry is active (s).
    pub poll_interval: f64,
    /// Gantry acquisition radius (mi).
    pub proximity_mi: f64,
    /// Look-back used to infer heading from the position trace (s).
    pub heading_window: f64,
}

impl Default for FeedConfig {
    fn default() -> Self {
        Self {
            latency: 0.0,
            dropout: 0.0,
            staleness: 60.0,
            poll_interval: 5.0,
            proximity_mi: 0.15,
            heading_window: 2.0,
        }
    }
}

impl FeedConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require(
            self.latency >= 0.0 && self.latency.is_finite(),
            "feed.latency",
            "must be >= 0",
        )?;
        require(
            (0.0..=1.0).contains(&self.dropout),
            "feed.dropout",
            "must be in [0, 1]",
        )?;
        require(self.staleness > 0.0, "feed.staleness", "must be > 0")?;
        require(
            self.poll_interval > 0.0,
            "feed.poll_interval",
            "must be > 0",
        )?;
        require(self.proximity_mi > 0.0, "feed.proximity_mi", "must be > 0")?;
        require(
            self.heading_window > 0.0,
            "feed.heading_window",
            "must be > 0",
        )
    }
}

/// Delivers issued readings after a fixed latency, dropping some at random.
#[derive(Debug, Clone)]
pub struct FeedClient {
    latency: f64,
    dropout: f64,
    staleness: f64,
    rng: ChaCha8Rng,
    in_flight: VecDeque<(f64, VslReading)>,
    current: Option<(f64, VslReading)>,
}

impl FeedClient {
    pub fn new(cfg: &FeedConfig, seed: u64) -> Self {
        Self {
            latency: cfg.latency,
            dropout: cfg.dropout,
            staleness: cfg.staleness,
            rng: ChaCha8Rng::seed_from_u64(seed),
            in_flight: VecDeque::new(),
            current: None,
        }
    }

    /// Sends a reading fetched at `reading.fetched_at`.
    pub fn issue(&mut self, reading: VslReading) {
        if self.dropout > 0.0 && self.rng.random_bool(self.dropout) {
            return;
        }
        self.in_flight
            .push_back((reading.fetched_at + self.latency, reading));
    }

    /// Latest delivered reading as of `now`, or `None` if nothing has arrived
    /// or the last arrival is older than the staleness bound.
    pub fn poll(&mut self, now: f64) -> Option<VslReading> {
        while let Some(&(due, reading)) = self.in_flight.front() {
            if due <= now + TIME_EPS {
                self.current = Some((due, reading));
                self.in_flight.pop_front();
            } else {
                break;
            }
        }
        self.current
            .filter(|(delivered, _)| now - delivered <= self.staleness + TIME_EPS)
            .map(|(_, r)| r)
    }
}

/// Heading from the sign of mile-marker change over a short look-back.
#[derive(Debug, Clone)]
pub struct HeadingEstimator {
    window: f64,
    history: VecDeque<(f64, f64)>,
    heading: Option<Direction>,
}

impl HeadingEstimator {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            history: VecDeque::new(),
            heading: None,
        }
    }

    pub fn update(&mut self, now: f64, mile_marker: f64) -> Option<Direction> {
        self.history.push_back((now, mile_marker));
        while let Some(&(t, _)) = self.history.front() {
            if now - t > self.window + TIME_EPS {
                self.history.pop_front();
            } else {
                break;
            }
        }
        let (t0, m0) = self.history.front().copied().expect("just pushed");
        if now - t0 + TIME_EPS >= self.window {
            let delta = mile_marker - m0;
            if delta > 1e-9 {
                self.heading = Some(Direction::Eastbound);
            } else if delta < -1e-9 {
                self.heading = Some(Direction::Westbound);
            }
        }
        self.heading
    }
}

/// What the in-vehicle gantry node publishes each cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VslStatus {
    pub in_corridor: bool,
    pub reading: VslReading,
    /// Gantry acquired this cycle, if any.
    pub acquired: Option<GantryId>,
}

/// In-vehicle node mapping GPS position to the active gantry's limit.
#[derive(Debug, Clone)]
pub struct GantryTracker {
    proximity: f64,
    heading: HeadingEstimator,
    acquired: Option<GantryId>,
    schedule: PollSchedule,
    feed: FeedClient,
}

impl GantryTracker {
    pub fn new(cfg: &FeedConfig, seed: u64) -> Self {
        Self {
            proximity: cfg.proximity_mi,
            heading: HeadingEstimator::new(cfg.heading_window),
            acquired: None,
            schedule: PollSchedule::new(cfg.poll_interval),
            feed: FeedClient::new(cfg, seed),
        }
    }

    pub fn update(&mut self, now: f64, mile_marker: f64, map: &CorridorMap) -> VslStatus {
        let heading = self.heading.update(now, mile_marker);
        let in_corridor = map.contains(mile_marker);
        if !in_corridor {
            self.acquired = None;
            self.schedule.reset();
            return VslStatus {
                in_corridor,
                reading: VslReading::invalid(now),
                acquired: None,
            };
        }
        let mut newly = None;
        if let Some(heading) = heading {
            let active = active_gantry(mile_marker, heading, map, self.acquired, self.proximity);
            if active.is_some() && active != self.acquired {
                newly = active;
                self.schedule.on_entry(now);
                self.fetch(now, active, map);
            } else if self.schedule.due(now) {
                self.schedule.on_fetch(now);
                self.fetch(now, active, map);
            }
            self.acquired = active;
        }
        let reading = match (self.acquired, self.feed.poll(now)) {
            (Some(_), Some(r)) => r,
            _ => VslReading::invalid(now),
        };
        VslStatus {
            in_corridor,
            reading,
            acquired: newly,
        }
    }

    fn fetch(&mut self, now: f64, gantry: Option<GantryId>, map: &CorridorMap) {
        if let Some(g) = gantry.and_then(|id| map.gantry(id)) {
            self.feed.issue(VslReading::from_gantry(g, now));
        }
    }
}
