//! Run log, event stream and the per-run summary report.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Mode;
use crate::infrastructure::GantryId;
use crate::rds::TrajectoryPoint;
use crate::vehicle::{VehicleId, VehicleKind};

use super::config::ScenarioConfig;

pub const LOG_COLUMNS: [&str; 11] = [
    "t",
    "vehicle_id",
    "kind",
    "position_m",
    "mile_marker",
    "velocity_mps",
    "mode",
    "v_des",
    "v_gr",
    "v_pr",
    "u",
];

/// One logged sample. Controller fields are empty for human vehicles, and
/// `v_gr` is empty whenever no valid limit is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub vehicle_id: VehicleId,
    pub kind: VehicleKind,
    pub position_m: f64,
    pub mile_marker: f64,
    pub velocity_mps: f64,
    pub mode: Option<Mode>,
    pub v_des: Option<f64>,
    pub v_gr: Option<f64>,
    pub v_pr: Option<f64>,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub t: f64,
    pub follower: VehicleId,
    pub leader: VehicleId,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Engaged {
        t: f64,
        vehicle: VehicleId,
    },
    CorridorEntered {
        t: f64,
        vehicle: VehicleId,
    },
    CorridorExited {
        t: f64,
        vehicle: VehicleId,
    },
    GantryAcquired {
        t: f64,
        vehicle: VehicleId,
        gantry: GantryId,
    },
    GantryChange {
        t: f64,
        gantry: GantryId,
        from_mph: u32,
        to_mph: u32,
    },
    Collision(Collision),
}

/// Mode bookkeeping for one controlled vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledSummary {
    pub vehicle_id: VehicleId,
    /// Samples spent in each mode, indexed by [`Mode::index`].
    pub mode_steps: [u64; 5],
    /// Entries into each mode from a different one.
    pub transitions: [u64; 5],
    /// Smallest barrier value seen while a lead was tracked.
    pub min_h: Option<f64>,
    /// Smallest gap to the vehicle ahead in the ego lane.
    pub min_gap: Option<f64>,
    pub last_mode: Option<Mode>,
}

impl ControlledSummary {
    pub fn new(vehicle_id: VehicleId) -> Self {
        Self {
            vehicle_id,
            mode_steps: [0; 5],
            transitions: [0; 5],
            min_h: None,
            min_gap: None,
            last_mode: None,
        }
    }

    pub fn record(&mut self, mode: Mode, h: Option<f64>, gap: Option<f64>) {
        self.mode_steps[mode.index()] += 1;
        if self.last_mode.is_some_and(|m| m != mode) {
            self.transitions[mode.index()] += 1;
        }
        self.last_mode = Some(mode);
        if let Some(h) = h {
            self.min_h = Some(self.min_h.map_or(h, |m| m.min(h)));
        }
        if let Some(g) = gap {
            self.min_gap = Some(self.min_gap.map_or(g, |m| m.min(g)));
        }
    }

    pub fn engaged_steps(&self) -> u64 {
        self.mode_steps[Mode::Disengaged.index() + 1..].iter().sum()
    }

    /// Fraction of engaged samples in `mode`; zero when never engaged.
    pub fn occupancy(&self, mode: Mode) -> f64 {
        let engaged = self.engaged_steps();
        if engaged == 0 || mode == Mode::Disengaged {
            0.0
        } else {
            self.mode_steps[mode.index()] as f64 / engaged as f64
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("log header mismatch: expected {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<Event>,
    pub summaries: Vec<ControlledSummary>,
    pub collision: Option<Collision>,
    /// Lane-0 speed samples, filled when field capture is on.
    pub field: Vec<TrajectoryPoint<f64>>,
    pub steps: u64,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), LogError> {
        write_rows(&self.rows, writer)
    }

    pub fn write_events<W: Write>(&self, mut writer: W) -> Result<(), LogError> {
        for e in &self.events {
            serde_json::to_writer(&mut writer, e)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Trajectory of one vehicle from the logged rows.
    pub fn trajectory(&self, vehicle: VehicleId) -> Vec<TrajectoryPoint<f64>> {
        self.rows
            .iter()
            .filter(|r| r.vehicle_id == vehicle)
            .map(|r| TrajectoryPoint {
                t: r.t,
                mile_marker: r.mile_marker,
                v: r.velocity_mps,
            })
            .collect()
    }
}

/// Writes rows with the fixed header, even when there are none.
pub fn write_rows<W: Write>(rows: &[LogRow], writer: W) -> Result<(), LogError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(LOG_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(reader: R) -> Result<Vec<LogRow>, LogError> {
    let mut r = csv::Reader::from_reader(reader);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != LOG_COLUMNS {
        return Err(LogError::Header {
            expected: LOG_COLUMNS.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    r.deserialize()
        .map(|row| row.map_err(LogError::from))
        .collect()
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<Event>, LogError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    pub vehicle_id: VehicleId,
    pub engaged_time: f64,
    /// Fraction of engaged time per mode.
    pub occupancy: BTreeMap<Mode, f64>,
    pub transitions: BTreeMap<Mode, u64>,
    pub min_h: Option<f64>,
    pub min_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub duration: f64,
    pub collision: Option<Collision>,
    /// Smallest barrier value over all controlled vehicles, even if negative.
    pub min_h: Option<f64>,
    pub vehicles: Vec<VehicleReport>,
    pub config: ScenarioConfig,
}

impl RunReport {
    pub fn new(config: &ScenarioConfig, log: &RunLog) -> Self {
        let vehicles: Vec<VehicleReport> = log
            .summaries
            .iter()
            .map(|s| {
                let engaged = Mode::ALL.iter().filter(|&&m| m != Mode::Disengaged);
                VehicleReport {
                    vehicle_id: s.vehicle_id,
                    engaged_time: s.engaged_steps() as f64 * config.dt,
                    occupancy: engaged.clone().map(|&m| (m, s.occupancy(m))).collect(),
                    transitions: engaged.map(|&m| (m, s.transitions[m.index()])).collect(),
                    min_h: s.min_h,
                    min_gap: s.min_gap,
                }
            })
            .collect();
        let min_h = vehicles.iter().filter_map(|v| v.min_h).reduce(f64::min);
        Self {
            seed: config.seed,
            duration: log.steps as f64 * config.dt,
            collision: log.collision,
            min_h,
            vehicles,
            config: config.clone(),
        }
    }

    /// Occupancy pooled over all controlled vehicles.
    pub fn pooled_occupancy(&self, mode: Mode) -> f64 {
        let total: f64 = self.vehicles.iter().map(|v| v.engaged_time).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.vehicles
            .iter()
            .map(|v| v.engaged_time * v.occupancy.get(&mode).copied().unwrap_or(0.0))
            .sum::<f64>()
            / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_has_header() {
        let s = RunLog::default().csv_string();
        assert_eq!(s.trim_end(), LOG_COLUMNS.join(","));
        assert!(read_rows(s.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            LogRow {
                t: 0.1 + 0.2,
                vehicle_id: 7,
                kind: VehicleKind::Controlled,
                position_m: 1_234.000_000_001,
                mile_marker: 70.123_456_789_012_34,
                velocity_mps: 1.0 / 3.0,
                mode: Some(Mode::Cbf),
                v_des: Some(13.4),
                v_gr: None,
                v_pr: Some(0.0),
                u: -2.999_999_999_999_999_6,
            },
            LogRow {
                t: 5.0,
                vehicle_id: 6,
                kind: VehicleKind::Probe,
                position_m: -1e-300,
                mile_marker: 70.0,
                velocity_mps: 0.0,
                mode: None,
                v_des: None,
                v_gr: None,
                v_pr: None,
                u: 1.3,
            },
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn events_round_trip() {
        let log = RunLog {
            events: vec![
                Event::Engaged { t: 5.0, vehicle: 3 },
                Event::GantryChange {
                    t: 30.0,
                    gantry: 4,
                    from_mph: 70,
                    to_mph: 60,
                },
                Event::Collision(Collision {
                    t: 1.0,
                    follower: 1,
                    leader: 0,
                    gap: -0.1,
                }),
            ],
            ..RunLog::default()
        };
        let mut buf = Vec::new();
        log.write_events(&mut buf).unwrap();
        assert_eq!(read_events(buf.as_slice()).unwrap(), log.events);
    }

    #[test]
    fn summary_counts_transitions() {
        let mut s = ControlledSummary::new(1);
        for m in [
            Mode::Disengaged,
            Mode::Normal,
            Mode::Normal,
            Mode::Cbf,
            Mode::Normal,
        ] {
            s.record(m, None, None);
        }
        assert_eq!(s.engaged_steps(), 4);
        assert_eq!(s.transitions[Mode::Normal.index()], 2);
        assert_eq!(s.transitions[Mode::Cbf.index()], 1);
        assert_eq!(s.occupancy(Mode::Normal), 0.75);
    }
}
