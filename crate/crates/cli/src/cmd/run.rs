use middleway::rds::{build_grid, write_trajectory_csv};
use middleway::simulation::RunLog;
use middleway::{Mode, RunReport, ScenarioConfig, VehicleKind};
use serde::Serialize;

use crate::error::CliError;
use crate::output::OutDir;
use crate::{Common, Outcome};

#[derive(Debug, Serialize)]
struct ModeRow {
    vehicle_id: u32,
    mode: Mode,
    occupancy: f64,
    transitions: u64,
    engaged_time_s: f64,
}

pub fn run(common: &Common, out: &OutDir) -> Result<Outcome, CliError> {
    let cfg = common.load(&[])?;
    let log = middleway::run(&cfg)?;
    let report = write_run(&cfg, &log, out)?;
    for v in &report.vehicles {
        let occ: Vec<String> = v
            .occupancy
            .iter()
            .map(|(m, f)| format!("{m} {:.1}%", 100.0 * f))
            .collect();
        println!(
            "vehicle {}: engaged {:.1} s, {}",
            v.vehicle_id,
            v.engaged_time,
            occ.join(", ")
        );
    }
    match log.collision {
        Some(c) => {
            eprintln!(
                "collision at t={:.2} s: vehicle {} into {} (gap {:.3} m)",
                c.t, c.follower, c.leader, c.gap
            );
            Ok(Outcome::Collision)
        }
        None => Ok(Outcome::Ok),
    }
}

/// Writes the full set of run outputs into `out` and returns the report.
pub fn write_run(cfg: &ScenarioConfig, log: &RunLog, out: &OutDir) -> Result<RunReport, CliError> {
    let report = RunReport::new(cfg, log);
    out.write_with("log.csv", |w| log.write_csv(w))?;
    out.write_with("events.jsonl", |w| log.write_events(w))?;
    out.write_json("report.json", &report)?;
    let modes: Vec<ModeRow> = report
        .vehicles
        .iter()
        .flat_map(|v| {
            v.occupancy.iter().map(|(&mode, &occupancy)| ModeRow {
                vehicle_id: v.vehicle_id,
                mode,
                occupancy,
                transitions: v.transitions.get(&mode).copied().unwrap_or(0),
                engaged_time_s: v.engaged_time,
            })
        })
        .collect();
    out.write_csv("modes.csv", &modes)?;
    if cfg.capture_field {
        let grid = build_grid(&log.field, &cfg.rds);
        out.write_with("rds_grid.csv", |w| grid.write_csv(w))?;
        let ego = log
            .rows
            .iter()
            .find(|r| r.kind == VehicleKind::Controlled)
            .map(|r| r.vehicle_id);
        if let Some(id) = ego {
            let traj = log.trajectory(id);
            out.write_with("trajectory.csv", |w| write_trajectory_csv(&traj, w))?;
        }
    }
    Ok(report)
}
