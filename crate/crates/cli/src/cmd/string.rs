use clap::Args;
use middleway::simulation::StringResult;
use middleway::Mode;
use serde::Serialize;

use crate::error::CliError;
use crate::output::OutDir;
use crate::{Common, Outcome};

#[derive(Debug, Args)]
pub struct StringArgs {
    /// Number of controlled vehicles; defaults to `string.n_controlled`.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Serialize)]
struct TraceRow {
    index: usize,
    t: f64,
    v: f64,
    v_des: f64,
    mode: Mode,
}

#[derive(Debug, Serialize)]
pub struct SteadyRow {
    pub n_controlled: usize,
    pub index: usize,
    pub traffic_speed: f64,
    pub steady_v_des: f64,
    pub steady_speed: f64,
    pub steady_mode: Mode,
    pub collision: bool,
}

pub fn steady_rows(n: usize, r: &StringResult) -> Vec<SteadyRow> {
    r.stages
        .iter()
        .map(|s| SteadyRow {
            n_controlled: n,
            index: s.index,
            traffic_speed: s.traffic_speed,
            steady_v_des: s.steady_v_des,
            steady_speed: s.steady_speed,
            steady_mode: s.steady_mode,
            collision: s.collision.is_some(),
        })
        .collect()
}

pub fn run(common: &Common, args: &StringArgs, out: &OutDir) -> Result<Outcome, CliError> {
    let cfg = common.load(&[])?;
    let n = args.n.unwrap_or(cfg.string.n_controlled);
    if n == 0 {
        return Err(CliError::usage("--n: must be at least 1"));
    }
    let result = middleway::string_experiment(&cfg, n)?;
    let traces: Vec<TraceRow> = result
        .stages
        .iter()
        .flat_map(|s| {
            s.trace.iter().map(|p| TraceRow {
                index: s.index,
                t: p.t,
                v: p.v,
                v_des: p.v_des,
                mode: p.mode,
            })
        })
        .collect();
    out.write_csv("string_traces.csv", &traces)?;
    let steady = steady_rows(n, &result);
    out.write_csv("string_steady.csv", &steady)?;
    for s in &steady {
        println!(
            "vehicle {:>2}: v_des {:.2} m/s ({})",
            s.index, s.steady_v_des, s.steady_mode
        );
    }
    if steady.iter().any(|s| s.collision) {
        Ok(Outcome::Collision)
    } else {
        Ok(Outcome::Ok)
    }
}
