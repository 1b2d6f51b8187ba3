use std::path::PathBuf;

use clap::Args;
use middleway::simulation::log::read_rows;
use middleway::simulation::replay_middleway;
use middleway::{Mode, RunReport};
use rayon::prelude::*;
use serde::Serialize;

use super::run::write_run;
use super::string::{steady_rows, SteadyRow};
use super::{nonempty_values, parse_f64};
use crate::error::CliError;
use crate::output::OutDir;
use crate::{Common, Outcome};

const OFFSET_KEY: &str = "controller.v_offset";

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dotted config key to vary. `string.n_controlled` sweeps the string
    /// experiment instead of the scenario.
    #[arg(long, default_value = OFFSET_KEY)]
    pub param: String,
    /// Comma-separated values, each parsed as TOML.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Vec<String>,
    /// Recompute v_des open loop from a recorded log instead of simulating.
    #[arg(long, value_name = "LOG")]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    param: String,
    value: String,
    seed: u64,
    collision: bool,
    min_h: Option<f64>,
    min_gap: Option<f64>,
    occ_normal: f64,
    occ_vsl: f64,
    occ_middleway: f64,
    occ_cbf: f64,
    transitions: u64,
}

impl SweepRow {
    fn new(param: &str, value: &str, report: &RunReport) -> Self {
        Self {
            param: param.to_string(),
            value: value.to_string(),
            seed: report.seed,
            collision: report.collision.is_some(),
            min_h: report.min_h,
            min_gap: report
                .vehicles
                .iter()
                .filter_map(|v| v.min_gap)
                .reduce(f64::min),
            occ_normal: report.pooled_occupancy(Mode::Normal),
            occ_vsl: report.pooled_occupancy(Mode::Vsl),
            occ_middleway: report.pooled_occupancy(Mode::Middleway),
            occ_cbf: report.pooled_occupancy(Mode::Cbf),
            transitions: report
                .vehicles
                .iter()
                .flat_map(|v| v.transitions.values())
                .sum(),
        }
    }
}

pub fn run(common: &Common, args: &SweepArgs, out: &OutDir) -> Result<Outcome, CliError> {
    let values = nonempty_values(&args.values, "--values")?;
    if let Some(log) = &args.replay {
        return replay(common, args, &values, log, out);
    }
    if args.param.rsplit('.').next() == Some("n_controlled") {
        return string_sweep(common, &values, out);
    }
    // Build every config first so a bad value fails before any run starts.
    let configs = values
        .iter()
        .map(|v| common.load(&[format!("{}={}", args.param, v)]))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<RunReport, CliError>> = configs
        .par_iter()
        .enumerate()
        .map(|(k, cfg)| {
            let log = middleway::run(cfg)?;
            let dir = out.subdir(&format!("run_{k:03}"))?;
            write_run(cfg, &log, &dir)
        })
        .collect();
    let mut rows = Vec::with_capacity(values.len());
    for (value, report) in values.iter().zip(results) {
        rows.push(SweepRow::new(&args.param, value, &report?));
    }
    out.write_csv("sweep.csv", &rows)?;
    for r in &rows {
        println!(
            "{}={}: CBF {:.1}%, VSL {:.1}%, Middleway {:.1}%{}",
            r.param,
            r.value,
            100.0 * r.occ_cbf,
            100.0 * r.occ_vsl,
            100.0 * r.occ_middleway,
            if r.collision { ", collision" } else { "" }
        );
    }
    if rows.iter().any(|r| r.collision) {
        Ok(Outcome::Collision)
    } else {
        Ok(Outcome::Ok)
    }
}

fn replay(
    common: &Common,
    args: &SweepArgs,
    values: &[String],
    log: &PathBuf,
    out: &OutDir,
) -> Result<Outcome, CliError> {
    if args.param != OFFSET_KEY {
        return Err(CliError::usage(format!(
            "--replay only varies {OFFSET_KEY}, not `{}`",
            args.param
        )));
    }
    let offsets = values
        .iter()
        .map(|v| parse_f64(v, "--values"))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = common.load(&[])?;
    let file = std::fs::File::open(log).map_err(|e| CliError::ReadLog {
        path: log.clone(),
        source: e.into(),
    })?;
    let rows = read_rows(std::io::BufReader::new(file)).map_err(|source| CliError::ReadLog {
        path: log.clone(),
        source,
    })?;
    let traces: Vec<_> = offsets
        .iter()
        .map(|&v_offset| {
            let mut ctrl = cfg.effective_controller();
            ctrl.v_offset = v_offset;
            replay_middleway(&rows, &ctrl)
        })
        .collect();
    let mut header: Vec<String> = ["t", "vehicle_id", "v_pr", "v_gr"]
        .map(String::from)
        .to_vec();
    header.extend(values.iter().map(|v| format!("v_des_{v}")));
    let table: Vec<Vec<String>> = (0..traces[0].len())
        .map(|i| {
            let p = &traces[0][i];
            let mut row = vec![
                p.t.to_string(),
                p.vehicle_id.to_string(),
                p.v_pr.to_string(),
                p.v_gr.to_string(),
            ];
            row.extend(traces.iter().map(|tr| tr[i].v_des.to_string()));
            row
        })
        .collect();
    out.write_table("replay.csv", &header, &table)?;
    println!(
        "replayed {} samples at {} offsets",
        table.len(),
        values.len()
    );
    Ok(Outcome::Ok)
}

fn string_sweep(common: &Common, values: &[String], out: &OutDir) -> Result<Outcome, CliError> {
    let ns = values
        .iter()
        .map(|v| match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::usage(format!(
                "--values: `{v}` is not a positive vehicle count"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = common.load(&[])?;
    let results: Vec<_> = ns
        .par_iter()
        .map(|&n| middleway::string_experiment(&cfg, n).map(|r| steady_rows(n, &r)))
        .collect();
    let mut rows: Vec<SteadyRow> = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    out.write_csv("string_convergence.csv", &rows)?;
    for &n in &ns {
        if let Some(last) = rows.iter().rfind(|r| r.n_controlled == n) {
            println!("n={n}: last v_des {:.2} m/s", last.steady_v_des);
        }
    }
    if rows.iter().any(|r| r.collision) {
        Ok(Outcome::Collision)
    } else {
        Ok(Outcome::Ok)
    }
}
