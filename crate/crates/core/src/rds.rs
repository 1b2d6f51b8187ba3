//! Latency error analysis of roadside radar detection (RDS) speed data.
//!
//! A grid holds one mean speed per (sensor, report interval). For a point on
//! a vehicle trajectory the "ideal" speed averages the four measurements
//! bracketing it in space and time, which needs a report from the future.
//! The real-time estimate averages only the two spatial neighbours of the
//! most recent report, optionally shifted back by an added latency.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{require, ConfigError};
use crate::scalar::Scalar;
use crate::units::{mph_to_mps, METERS_PER_MILE};

/// Slack for lattice index rounding, in cell units.
const INDEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint<T> {
    pub t: T,
    pub mile_marker: T,
    /// m/s
    pub v: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RdsError {
    #[error("point (t={t}, mm={mile_marker}) lies outside the grid")]
    OutsideGrid { t: f64, mile_marker: f64 },
    #[error("all grid cells around (t={t}, mm={mile_marker}) are missing")]
    AllNeighborsMissing { t: f64, mile_marker: f64 },
}

#[derive(Debug, Error)]
pub enum RdsIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed grid: {0}")]
    Malformed(String),
}

/// Space-time lattice of sensor reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RdsGrid<T> {
    origin: T,
    cell_duration: T,
    sensors: Vec<T>,
    n_reports: usize,
    /// Sensor-major: `cells[i * n_reports + j]`.
    cells: Vec<Option<T>>,
}

impl<T: Scalar> RdsGrid<T> {
    /// An all-missing grid. `sensors` are mile markers and must be ascending.
    pub fn new(
        origin: T,
        cell_duration: T,
        sensors: Vec<T>,
        n_reports: usize,
    ) -> Result<Self, ConfigError> {
        require(
            cell_duration > T::zero(),
            "rds.cell_duration",
            "must be > 0",
        )?;
        require(
            sensors.windows(2).all(|w| w[0] < w[1]),
            "rds.sensors",
            "sensor positions must be strictly ascending",
        )?;
        let cells = vec![None; sensors.len() * n_reports];
        Ok(Self {
            origin,
            cell_duration,
            sensors,
            n_reports,
            cells,
        })
    }

    pub fn origin(&self) -> T {
        self.origin
    }

    pub fn cell_duration(&self) -> T {
        self.cell_duration
    }

    pub fn sensors(&self) -> &[T] {
        &self.sensors
    }

    pub fn n_reports(&self) -> usize {
        self.n_reports
    }

    pub fn report_start(&self, j: usize) -> T {
        self.origin + self.cell_duration * T::from_usize(j).expect("index fits scalar")
    }

    pub fn get(&self, sensor: usize, report: usize) -> Option<T> {
        self.cells[sensor * self.n_reports + report]
    }

    pub fn set(&mut self, sensor: usize, report: usize, speed: Option<T>) {
        debug_assert!(speed.is_none_or(|v| v >= T::zero()));
        self.cells[sensor * self.n_reports + report] = speed;
    }

    /// `(sensor, report, speed)` for every cell.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Option<T>)> + '_ {
        (0..self.sensors.len())
            .flat_map(move |i| (0..self.n_reports).map(move |j| (i, j, self.get(i, j))))
    }

    /// Index of the report interval containing `t` (interval start inclusive).
    pub fn report_index(&self, t: T) -> Option<usize> {
        let x = ((t - self.origin) / self.cell_duration).to_f64_lossy();
        let j = (x + INDEX_EPS).floor();
        (j >= 0.0 && (j as usize) < self.n_reports).then_some(j as usize)
    }

    /// Sensors bracketing `mm`: the last at or below it and the next above.
    pub fn sensor_bracket(&self, mile_marker: T) -> Option<(usize, usize)> {
        let lower = self.sensors.partition_point(|&s| s <= mile_marker);
        (lower >= 1 && lower < self.sensors.len()).then(|| (lower - 1, lower))
    }
}

fn mean_of<T: Scalar>(values: impl IntoIterator<Item = Option<T>>) -> Option<T> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / T::from_usize(n).expect("count fits scalar"))
}

/// How the four bracketing cells are combined into the ideal estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdealWeighting {
    /// Plain mean of the available cells.
    #[default]
    Unweighted,
    /// Bilinear weights from the point's position inside the bracket.
    Bilinear,
}

fn point_err<T: Scalar>(p: &TrajectoryPoint<T>, outside: bool) -> RdsError {
    let (t, mile_marker) = (p.t.to_f64_lossy(), p.mile_marker.to_f64_lossy());
    if outside {
        RdsError::OutsideGrid { t, mile_marker }
    } else {
        RdsError::AllNeighborsMissing { t, mile_marker }
    }
}

/// Hindsight speed at `p` from the 2x2 space-time cells containing it.
pub fn ideal_speed<T: Scalar>(p: &TrajectoryPoint<T>, grid: &RdsGrid<T>) -> Result<T, RdsError> {
    ideal_speed_weighted(p, grid, IdealWeighting::Unweighted)
}

pub fn ideal_speed_weighted<T: Scalar>(
    p: &TrajectoryPoint<T>,
    grid: &RdsGrid<T>,
    weighting: IdealWeighting,
) -> Result<T, RdsError> {
    let (i0, i1) = grid
        .sensor_bracket(p.mile_marker)
        .ok_or_else(|| point_err(p, true))?;
    let j0 = grid.report_index(p.t).ok_or_else(|| point_err(p, true))?;
    let j1 = j0 + 1;
    if j1 >= grid.n_reports() {
        return Err(point_err(p, true));
    }
    let cells = [(i0, j0), (i1, j0), (i0, j1), (i1, j1)];
    let value = match weighting {
        IdealWeighting::Unweighted => mean_of(cells.iter().map(|&(i, j)| grid.get(i, j))),
        IdealWeighting::Bilinear => {
            let fx = (p.mile_marker - grid.sensors[i0]) / (grid.sensors[i1] - grid.sensors[i0]);
            let ft = (p.t - grid.report_start(j0)) / grid.cell_duration;
            let one = T::one();
            let weights = [
                (one - fx) * (one - ft),
                fx * (one - ft),
                (one - fx) * ft,
                fx * ft,
            ];
            let (num, den) = cells.iter().zip(weights).fold(
                (T::zero(), T::zero()),
                |(num, den), (&(i, j), w)| match grid.get(i, j) {
                    Some(v) => (num + w * v, den + w),
                    None => (num, den),
                },
            );
            let any = cells.iter().any(|&(i, j)| grid.get(i, j).is_some());
            match (any, den > T::zero()) {
                (false, _) => None,
                (true, true) => Some(num / den),
                // Only zero-weight cells are present: fall back to their mean.
                (true, false) => mean_of(cells.iter().map(|&(i, j)| grid.get(i, j))),
            }
        }
    };
    value.ok_or_else(|| point_err(p, false))
}

/// Speed available in real time at `p` when the data arrive `latency`
/// seconds late: the mean of the two bracketing sensors' latest report
/// starting at or before `t - latency`.
pub fn realtime_speed<T: Scalar>(
    p: &TrajectoryPoint<T>,
    grid: &RdsGrid<T>,
    latency: T,
) -> Result<T, RdsError> {
    let (i0, i1) = grid
        .sensor_bracket(p.mile_marker)
        .ok_or_else(|| point_err(p, true))?;
    let j = grid
        .report_index(p.t - latency)
        .ok_or_else(|| point_err(p, true))?;
    mean_of([grid.get(i0, j), grid.get(i1, j)]).ok_or_else(|| point_err(p, false))
}

/// Fixed-width histogram keyed by `floor(x / bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    pub bin_width: T,
    pub counts: BTreeMap<i64, usize>,
}

impl<T: Scalar> Histogram<T> {
    pub fn new(bin_width: T) -> Self {
        Self {
            bin_width,
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, x: T) {
        let bin = (x / self.bin_width).floor().to_f64_lossy() as i64;
        *self.counts.entry(bin).or_default() += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// `(lower edge, upper edge, count)` per non-empty bin.
    pub fn bins(&self) -> impl Iterator<Item = (T, T, usize)> + '_ {
        self.counts.iter().map(|(&b, &n)| {
            let lo = T::from_i64(b).expect("bin fits scalar") * self.bin_width;
            (lo, lo + self.bin_width, n)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats<T> {
    pub latency: T,
    pub count: usize,
    /// Trajectory points without a valid ideal or real-time value.
    pub skipped: usize,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub histogram: Histogram<T>,
}

/// Error of the latent real-time estimate against the ideal estimate
/// (estimate minus ideal), per latency.
pub fn error_stats<T: Scalar>(
    trajectory: &[TrajectoryPoint<T>],
    grid: &RdsGrid<T>,
    latencies: &[T],
    bin_width: T,
) -> Vec<LatencyStats<T>> {
    let ideal: Vec<Option<T>> = trajectory
        .iter()
        .map(|p| ideal_speed(p, grid).ok())
        .collect();
    latencies
        .iter()
        .map(|&latency| {
            let errors: Vec<T> = trajectory
                .iter()
                .zip(&ideal)
                .filter_map(|(p, ideal)| Some(realtime_speed(p, grid, latency).ok()? - (*ideal)?))
                .collect();
            let mut histogram = Histogram::new(bin_width);
            errors.iter().for_each(|&e| histogram.add(e));
            let (mean, std) = mean_std(&errors);
            LatencyStats {
                latency,
                count: errors.len(),
                skipped: trajectory.len() - errors.len(),
                mean,
                std,
                histogram,
            }
        })
        .collect()
}

fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = T::from_usize(xs.len()).expect("count fits scalar");
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let var = xs
        .iter()
        .fold(T::zero(), |a, &x| a + (x - mean) * (x - mean))
        / n;
    (mean, var.sqrt())
}

/// Layout of a grid built by aggregating point samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub origin: f64,
    /// Report interval (s).
    pub cell_duration: f64,
    pub n_reports: usize,
    pub first_sensor_mm: f64,
    /// Sensor spacing (mi).
    pub sensor_spacing: f64,
    pub n_sensors: usize,
    /// Length of road each sensor aggregates, centred on it (mi).
    pub zone_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            origin: 0.0,
            cell_duration: 30.0,
            n_reports: 60,
            first_sensor_mm: 53.0,
            sensor_spacing: 0.5,
            n_sensors: 35,
            zone_length: 0.5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require(self.cell_duration > 0.0, "rds.cell_duration", "must be > 0")?;
        require(
            self.sensor_spacing > 0.0,
            "rds.sensor_spacing",
            "must be > 0",
        )?;
        require(self.zone_length > 0.0, "rds.zone_length", "must be > 0")?;
        require(self.n_sensors >= 2, "rds.n_sensors", "must be >= 2")?;
        require(self.n_reports >= 2, "rds.n_reports", "must be >= 2")
    }

    pub fn sensor_mm(&self, i: usize) -> f64 {
        self.first_sensor_mm + i as f64 * self.sensor_spacing
    }

    pub fn empty_grid<T: Scalar>(&self) -> RdsGrid<T> {
        let sensors = (0..self.n_sensors)
            .map(|i| T::lit(self.sensor_mm(i)))
            .collect();
        RdsGrid::new(
            T::lit(self.origin),
            T::lit(self.cell_duration),
            sensors,
            self.n_reports,
        )
        .expect("validated spec")
    }
}

/// Aggregates speed samples into per-cell means; cells without samples
/// stay missing.
pub fn build_grid<T: Scalar>(samples: &[TrajectoryPoint<T>], spec: &GridSpec) -> RdsGrid<T> {
    let mut grid = spec.empty_grid::<T>();
    let mut acc = vec![(T::zero(), 0usize); spec.n_sensors * spec.n_reports];
    let half = spec.zone_length / 2.0;
    for s in samples {
        let mm = s.mile_marker.to_f64_lossy();
        let k = ((mm - spec.first_sensor_mm + half) / spec.sensor_spacing).floor();
        if k < 0.0 || k as usize >= spec.n_sensors {
            continue;
        }
        let i = k as usize;
        let offset = mm - spec.sensor_mm(i);
        if offset < -half || offset >= half {
            continue;
        }
        let Some(j) = grid.report_index(s.t) else {
            continue;
        };
        let cell = &mut acc[i * spec.n_reports + j];
        cell.0 = cell.0 + s.v;
        cell.1 += 1;
    }
    for i in 0..spec.n_sensors {
        for j in 0..spec.n_reports {
            let (sum, n) = acc[i * spec.n_reports + j];
            if n > 0 {
                grid.set(
                    i,
                    j,
                    Some(sum / T::from_usize(n).expect("count fits scalar")),
                );
            }
        }
    }
    grid
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    sensor_mm: f64,
    report_start_s: f64,
    mean_speed_mps: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    t_s: f64,
    mile_marker: f64,
    speed_mps: f64,
}

impl RdsGrid<f64> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RdsIoError> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, j, v) in self.iter() {
            w.serialize(GridRow {
                sensor_mm: self.sensors[i],
                report_start_s: self.report_start(j),
                mean_speed_mps: v,
            })?;
        }
        w.flush().map_err(|source| RdsIoError::Io {
            path: "<grid>".into(),
            source,
        })?;
        Ok(())
    }

    /// Reads `(sensor_mm, report_start_s, mean_speed_mps)` rows. Absent rows
    /// and empty speeds are missing cells; report starts must be evenly spaced.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RdsIoError> {
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<GridRow>() {
            rows.push(row?);
        }
        let mut sensors: Vec<f64> = rows.iter().map(|r| r.sensor_mm).collect();
        sensors.sort_by(f64::total_cmp);
        sensors.dedup();
        let mut starts: Vec<f64> = rows.iter().map(|r| r.report_start_s).collect();
        starts.sort_by(f64::total_cmp);
        starts.dedup();
        if sensors.len() < 2 || starts.len() < 2 {
            return Err(RdsIoError::Malformed(
                "need at least two sensors and two report times".into(),
            ));
        }
        let origin = starts[0];
        let duration = starts[1] - starts[0];
        let n_reports = ((starts[starts.len() - 1] - origin) / duration).round() as usize + 1;
        for s in &starts {
            let k = (s - origin) / duration;
            if (k - k.round()).abs() > 1e-6 {
                return Err(RdsIoError::Malformed(format!(
                    "report start {s} is not on the {duration} s lattice"
                )));
            }
        }
        let mut grid = RdsGrid::new(origin, duration, sensors, n_reports)
            .map_err(|e| RdsIoError::Malformed(e.to_string()))?;
        for r in rows {
            let i = grid
                .sensors
                .binary_search_by(|s| s.total_cmp(&r.sensor_mm))
                .expect("sensor collected above");
            let j = ((r.report_start_s - origin) / duration).round() as usize;
            if let Some(v) = r.mean_speed_mps {
                if v.is_nan() || v < 0.0 {
                    return Err(RdsIoError::Malformed(format!("negative speed {v}")));
                }
            }
            grid.set(i, j, r.mean_speed_mps);
        }
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self, RdsIoError> {
        let file = std::fs::File::open(path).map_err(|source| RdsIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file)
    }
}

pub fn write_trajectory_csv<W: Write>(
    points: &[TrajectoryPoint<f64>],
    writer: W,
) -> Result<(), RdsIoError> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(TrajectoryRow {
            t_s: p.t,
            mile_marker: p.mile_marker,
            speed_mps: p.v,
        })?;
    }
    w.flush().map_err(|source| RdsIoError::Io {
        path: "<trajectory>".into(),
        source,
    })?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryPoint<f64>>, RdsIoError> {
    let mut out: Vec<TrajectoryPoint<f64>> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize::<TrajectoryRow>() {
        let row = row?;
        if let Some(prev) = out.last() {
            if row.t_s <= prev.t {
                return Err(RdsIoError::Malformed(format!(
                    "trajectory time must increase (t={} after t={})",
                    row.t_s, prev.t
                )));
            }
        }
        out.push(TrajectoryPoint {
            t: row.t_s,
            mile_marker: row.mile_marker,
            v: row.speed_mps,
        });
    }
    Ok(out)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryPoint<f64>>, RdsIoError> {
    let file = std::fs::File::open(path).map_err(|source| RdsIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_trajectory_csv(file)
}

/// Synthetic congested speed field: a back-propagating sinusoidal
/// stop-and-go wave train riding on a slower congestion surge cycle.
/// Mile markers increase in the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveField {
    pub mean_mph: f64,
    pub wave_amplitude_mph: f64,
    /// Wave period at a fixed location (s).
    pub wave_period: f64,
    /// Upstream propagation speed of the waves (mph).
    pub wave_speed_mph: f64,
    pub surge_amplitude_mph: f64,
    pub surge_period: f64,
}

impl Default for WaveField {
    fn default() -> Self {
        Self {
            mean_mph: 45.0,
            wave_amplitude_mph: 15.0,
            wave_period: 240.0,
            wave_speed_mph: 12.0,
            surge_amplitude_mph: 15.0,
            surge_period: 900.0,
        }
    }
}

impl WaveField {
    /// A field with no variation at all.
    pub fn uniform(speed_mph: f64) -> Self {
        Self {
            mean_mph: speed_mph,
            wave_amplitude_mph: 0.0,
            surge_amplitude_mph: 0.0,
            ..Self::default()
        }
    }

    /// Speed (m/s) at time `t` (s) and mile marker `mm`.
    pub fn speed(&self, t: f64, mm: f64) -> f64 {
        use std::f64::consts::TAU;
        let wave_speed = self.wave_speed_mph / 3600.0;
        let surge = self.surge_amplitude_mph * (TAU * t / self.surge_period).cos();
        let wave = self.wave_amplitude_mph * (TAU * (t + mm / wave_speed) / self.wave_period).cos();
        mph_to_mps(self.mean_mph - surge - wave)
    }

    /// Point-sensor grid: each cell is the time-average of the field at the
    /// sensor over its report interval (midpoint rule, `samples` per cell).
    pub fn sample_grid(&self, spec: &GridSpec, samples: usize) -> RdsGrid<f64> {
        let mut grid = spec.empty_grid::<f64>();
        let n = samples.max(1);
        for i in 0..spec.n_sensors {
            let mm = spec.sensor_mm(i);
            for j in 0..spec.n_reports {
                let start = grid.report_start(j);
                let sum: f64 = (0..n)
                    .map(|k| {
                        self.speed(start + (k as f64 + 0.5) * spec.cell_duration / n as f64, mm)
                    })
                    .sum();
                grid.set(i, j, Some(sum / n as f64));
            }
        }
        grid
    }

    /// Trajectory of a vehicle moving at the local field speed, sampled every
    /// `dt` seconds from `(t0, mm0)` until `mm_end` or `t_end`.
    pub fn drive(
        &self,
        t0: f64,
        mm0: f64,
        mm_end: f64,
        t_end: f64,
        dt: f64,
    ) -> Vec<TrajectoryPoint<f64>> {
        let mut out = Vec::new();
        let (mut t, mut mm) = (t0, mm0);
        while mm < mm_end && t < t_end {
            let v = self.speed(t, mm);
            out.push(TrajectoryPoint {
                t,
                mile_marker: mm,
                v,
            });
            mm += v * dt / METERS_PER_MILE;
            t += dt;
        }
        out
    }
}

/// Canonical synthetic experiment: grid spec, field, and a trajectory that
/// starts late enough for every latency up to `max_latency` to have data.
pub fn synthetic_experiment(
    field: &WaveField,
    max_latency: f64,
) -> (RdsGrid<f64>, Vec<TrajectoryPoint<f64>>) {
    let spec = GridSpec {
        origin: 0.0,
        cell_duration: 30.0,
        n_reports: 120,
        first_sensor_mm: 0.0,
        sensor_spacing: 0.5,
        n_sensors: 21,
        zone_length: 0.5,
    };
    let grid = field.sample_grid(&spec, 16);
    let t0 = (max_latency / spec.cell_duration).ceil() * spec.cell_duration + 100.0;
    let t_end = spec.origin + spec.cell_duration * (spec.n_reports - 2) as f64;
    let mm_end = spec.sensor_mm(spec.n_sensors - 1) - 0.1;
    let trajectory = field.drive(t0, 0.05, mm_end, t_end, 1.0);
    (grid, trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2x3(values: [[f64; 3]; 2]) -> RdsGrid<f64> {
        let mut g = RdsGrid::new(0.0, 30.0, vec![60.0, 60.5], 3).unwrap();
        for (i, row) in values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                g.set(i, j, Some(*v));
            }
        }
        g
    }

    fn pt(t: f64, mm: f64) -> TrajectoryPoint<f64> {
        TrajectoryPoint {
            t,
            mile_marker: mm,
            v: 0.0,
        }
    }

    #[test]
    fn ideal_averages_four_neighbors() {
        let g = grid_2x3([[20.0, 24.0, 0.0], [22.0, 26.0, 0.0]]);
        assert_eq!(ideal_speed(&pt(10.0, 60.2), &g).unwrap(), 23.0);
    }

    #[test]
    fn lattice_node_uses_cells_starting_there() {
        let g = grid_2x3([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        // t = 30 sits on report 1; mm = 60.0 on sensor 0. Bracket is (0,1)x(1,2).
        assert_eq!(
            ideal_speed(&pt(30.0, 60.0), &g).unwrap(),
            (2.0 + 3.0 + 5.0 + 6.0) / 4.0
        );
        assert!(ideal_speed(&pt(30.0, 60.5), &g).is_err());
    }

    #[test]
    fn missing_cells_are_dropped() {
        let mut g = grid_2x3([[20.0, 24.0, 0.0], [22.0, 26.0, 0.0]]);
        g.set(0, 0, None);
        assert_eq!(ideal_speed(&pt(10.0, 60.2), &g).unwrap(), 24.0);
        for (i, j) in [(1, 0), (0, 1), (1, 1)] {
            g.set(i, j, None);
        }
        assert!(matches!(
            ideal_speed(&pt(10.0, 60.2), &g),
            Err(RdsError::AllNeighborsMissing { .. })
        ));
    }

    #[test]
    fn realtime_uses_latest_report_before_latency() {
        let g = grid_2x3([[30.0, 10.0, 10.0], [30.0, 10.0, 10.0]]);
        let p = pt(45.0, 60.25);
        assert_eq!(realtime_speed(&p, &g, 0.0).unwrap(), 10.0);
        assert_eq!(realtime_speed(&p, &g, 30.0).unwrap(), 30.0);
        assert!(realtime_speed(&p, &g, 60.0).is_err());
    }

    #[test]
    fn uniform_field_has_no_error() {
        let field = WaveField::uniform(37.0);
        let (grid, traj) = synthetic_experiment(&field, 300.0);
        let stats = error_stats(&traj, &grid, &[0.0, 60.0, 120.0, 300.0], mph_to_mps(1.0));
        for s in stats {
            assert!(s.count > 100);
            assert!(s.std.abs() < 1e-12 && s.mean.abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_matches_unweighted_at_cell_center() {
        let g = grid_2x3([[20.0, 24.0, 0.0], [22.0, 26.0, 0.0]]);
        let p = pt(15.0, 60.25);
        let a = ideal_speed_weighted(&p, &g, IdealWeighting::Bilinear).unwrap();
        assert!((a - 23.0).abs() < 1e-12);
        let corner = pt(0.0, 60.0);
        assert_eq!(
            ideal_speed_weighted(&corner, &g, IdealWeighting::Bilinear).unwrap(),
            20.0
        );
    }

    #[test]
    fn build_grid_means() {
        let spec = GridSpec {
            origin: 0.0,
            cell_duration: 30.0,
            n_reports: 2,
            first_sensor_mm: 60.0,
            sensor_spacing: 0.5,
            n_sensors: 2,
            zone_length: 0.5,
        };
        let samples = [
            TrajectoryPoint {
                t: 1.0,
                mile_marker: 60.1,
                v: 18.0,
            },
            TrajectoryPoint {
                t: 2.0,
                mile_marker: 59.9,
                v: 22.0,
            },
            TrajectoryPoint {
                t: 40.0,
                mile_marker: 60.5,
                v: 20.0,
            },
            TrajectoryPoint {
                t: 40.0,
                mile_marker: 70.0,
                v: 99.0,
            },
        ];
        let g = build_grid(&samples, &spec);
        assert_eq!(g.get(0, 0), Some(20.0));
        assert_eq!(g.get(1, 1), Some(20.0));
        assert_eq!(g.get(0, 1), None);
        assert_eq!(g.get(1, 0), None);
    }

    #[test]
    fn grid_csv_round_trip() {
        let mut g = grid_2x3([[20.0, 24.5, 1.0 / 3.0], [22.0, 26.0, 0.1]]);
        g.set(1, 1, None);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sensor_mm,report_start_s,mean_speed_mps"));
        assert_eq!(RdsGrid::read_csv(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn trajectory_csv_rejects_time_reversal() {
        let text = "t_s,mile_marker,speed_mps\n1,60,10\n1,60.1,10\n";
        assert!(read_trajectory_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn works_in_f32() {
        let mut g = RdsGrid::<f32>::new(0.0, 30.0, vec![60.0, 60.5], 2).unwrap();
        for (i, j, v) in [(0, 0, 20.0), (1, 0, 22.0), (0, 1, 24.0), (1, 1, 26.0)] {
            g.set(i, j, Some(v));
        }
        let p = TrajectoryPoint {
            t: 10.0f32,
            mile_marker: 60.2,
            v: 0.0,
        };
        assert_eq!(ideal_speed(&p, &g).unwrap(), 23.0);
        assert_eq!(realtime_speed(&p, &g, 0.0).unwrap(), 21.0);
    }
}
