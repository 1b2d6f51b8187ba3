use std::path::PathBuf;

use clap::Args;
use middleway::rds::{
    error_stats, load_trajectory, synthetic_experiment, write_trajectory_csv, WaveField,
};
use middleway::units::{mph_to_mps, mps_to_mph};
use middleway::RdsGrid;
use serde::Serialize;

use crate::error::CliError;
use crate::output::OutDir;
use crate::{Common, Outcome};

#[derive(Debug, Args)]
pub struct RdsArgs {
    /// Grid CSV with columns sensor_mm, report_start_s, mean_speed_mps.
    #[arg(long, requires = "trajectory", conflicts_with = "synthetic")]
    pub grid: Option<PathBuf>,
    /// Trajectory CSV with columns t_s, mile_marker, speed_mps.
    #[arg(long, requires = "grid")]
    pub trajectory: Option<PathBuf>,
    /// Use the built-in synthetic stop-and-go field instead of files.
    #[arg(long)]
    pub synthetic: bool,
    /// Added latencies (s).
    #[arg(long, value_delimiter = ',', default_value = "0,60,120,300")]
    pub latencies: Vec<String>,
    /// Histogram bin width (mph).
    #[arg(long, default_value_t = 1.0)]
    pub bin_mph: f64,
}

#[derive(Debug, Serialize)]
struct StatsRow {
    latency_s: f64,
    count: usize,
    skipped: usize,
    mean_err_mps: f64,
    std_err_mps: f64,
    mean_err_mph: f64,
    std_err_mph: f64,
}

#[derive(Debug, Serialize)]
struct HistRow {
    latency_s: f64,
    bin_lo_mph: f64,
    bin_hi_mph: f64,
    count: usize,
}

pub fn run(_common: &Common, args: &RdsArgs, out: &OutDir) -> Result<Outcome, CliError> {
    let latencies = super::nonempty_values(&args.latencies, "--latencies")?
        .iter()
        .map(|s| super::parse_f64(s, "--latencies"))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = latencies.iter().find(|l| l.is_nan() || **l < 0.0) {
        return Err(CliError::usage(format!("--latencies: {bad} is negative")));
    }
    if args.bin_mph.is_nan() || args.bin_mph <= 0.0 {
        return Err(CliError::usage("--bin-mph: must be > 0"));
    }
    let (grid, trajectory) = match (&args.grid, &args.trajectory, args.synthetic) {
        (Some(g), Some(t), false) => (RdsGrid::load(g)?, load_trajectory(t)?),
        (None, None, true) => {
            let max = latencies.iter().copied().fold(0.0, f64::max);
            let (grid, traj) = synthetic_experiment(&WaveField::default(), max);
            out.write_with("rds_grid.csv", |w| grid.write_csv(w))?;
            out.write_with("trajectory.csv", |w| write_trajectory_csv(&traj, w))?;
            (grid, traj)
        }
        _ => {
            return Err(CliError::usage(
                "rds needs either --grid and --trajectory, or --synthetic",
            ))
        }
    };
    let stats = error_stats(&trajectory, &grid, &latencies, mph_to_mps(args.bin_mph));
    let rows: Vec<StatsRow> = stats
        .iter()
        .map(|s| StatsRow {
            latency_s: s.latency,
            count: s.count,
            skipped: s.skipped,
            mean_err_mps: s.mean,
            std_err_mps: s.std,
            mean_err_mph: mps_to_mph(s.mean),
            std_err_mph: mps_to_mph(s.std),
        })
        .collect();
    let hist: Vec<HistRow> = stats
        .iter()
        .flat_map(|s| {
            s.histogram.bins().map(|(lo, hi, count)| HistRow {
                latency_s: s.latency,
                bin_lo_mph: mps_to_mph(lo),
                bin_hi_mph: mps_to_mph(hi),
                count,
            })
        })
        .collect();
    out.write_csv("rds_stats.csv", &rows)?;
    out.write_csv("rds_hist.csv", &hist)?;
    for r in &rows {
        println!(
            "latency {:>5.0} s: n={} mean {:+.2} mph, std {:.2} mph",
            r.latency_s, r.count, r.mean_err_mph, r.std_err_mph
        );
    }
    Ok(Outcome::Ok)
}
