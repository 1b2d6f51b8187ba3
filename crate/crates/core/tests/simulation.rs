use middleway::controller::{barrier, Mode};
use middleway::simulation::{
    run, string_experiment, Integrator, RunReport, ScenarioConfig, VehicleSpec, WavePulse,
    WaveSchedule, World,
};
use middleway::VehicleKind;

fn spec(
    id: u32,
    position: f64,
    velocity: f64,
    kind: VehicleKind,
    constant_speed: bool,
) -> VehicleSpec {
    VehicleSpec {
        id,
        lane: 0,
        position,
        velocity,
        kind,
        constant_speed,
        engage_at: None,
    }
}

fn bare(vehicles: Vec<VehicleSpec>) -> ScenarioConfig {
    ScenarioConfig {
        vehicles,
        waves: WaveSchedule::default(),
        corridor: middleway::simulation::config::CorridorConfig {
            enabled: false,
            ..Default::default()
        },
        ..ScenarioConfig::default()
    }
}

fn platoon(n: u32, gap: f64, v: f64) -> Vec<VehicleSpec> {
    (0..n)
        .map(|k| spec(k, -(k as f64) * (gap + 5.0), v, VehicleKind::Human, false))
        .collect()
}

#[test]
fn coasting_vehicle_advances_by_v_dt() {
    let cfg = bare(vec![spec(0, 12.5, 20.0, VehicleKind::Human, true)]);
    let mut world = World::new(&cfg).unwrap();
    world.step().unwrap();
    assert_eq!(world.vehicles[0].position, 12.5 + 20.0 * cfg.dt);
    assert_eq!(world.vehicles[0].velocity, 20.0);
}

#[test]
fn idm_equilibrium_is_steady() {
    let cfg0 = ScenarioConfig::default();
    let v = 20.0;
    let gap = cfg0.human.equilibrium_gap(v);
    let mut cfg = bare(vec![
        spec(0, 0.0, v, VehicleKind::Human, true),
        spec(1, -(gap + 5.0), v, VehicleKind::Human, false),
    ]);
    cfg.duration = 60.0;
    let mut world = World::new(&cfg).unwrap();
    for _ in 0..1200 {
        world.step().unwrap();
    }
    assert!((world.vehicles[1].velocity - v).abs() < 1e-9);
}

#[test]
fn controlled_vehicle_behind_braking_lead_keeps_barrier() {
    let v = 25.0;
    let base = ScenarioConfig::default();
    let ctrl = base.effective_controller();
    let gap = ctrl.t_min * v + ctrl.s_min;
    let mut cfg = bare(vec![
        spec(0, gap + 5.0, v, VehicleKind::Human, true),
        VehicleSpec {
            engage_at: Some(0.0),
            ..spec(1, 0.0, v, VehicleKind::Controlled, false)
        },
    ]);
    cfg.waves.pulses.push(WavePulse {
        vehicle: 0,
        start: 5.0,
        duration: 60.0,
        target_speed: 0.0,
        decel: 3.0,
    });
    let mut world = World::new(&cfg).unwrap();
    let mut min_h = f64::INFINITY;
    for _ in 0..1600 {
        world.plan();
        let (lead, ego) = (&world.vehicles[0], &world.vehicles[1]);
        min_h = min_h.min(barrier(ego.gap_to(lead), ego.velocity, &ctrl));
        world.advance().unwrap();
    }
    assert!(min_h >= -1e-9, "min h {min_h}");
    assert!(world.vehicles[0].velocity < 1e-6);
    assert!(world.vehicles[1].velocity < 1e-3);
}

#[test]
fn empty_schedule_changes_nothing() {
    let schedule = WaveSchedule::default();
    for (t, v, a) in [(0.0, 10.0, 0.5), (100.0, 0.0, -2.0), (5.0, 33.0, 1.3)] {
        assert_eq!(schedule.apply(0, t, v, a), a);
    }
}

#[test]
fn pulse_in_dense_platoon_propagates_upstream() {
    let base = ScenarioConfig::default();
    let v = 20.0;
    let mut cfg = bare(platoon(40, base.human.equilibrium_gap(v), v));
    cfg.duration = 300.0;
    cfg.log_humans = true;
    cfg.waves.pulses.push(WavePulse {
        vehicle: 0,
        start: 10.0,
        duration: 20.0,
        target_speed: 2.0,
        decel: 3.0,
    });
    let log = run(&cfg).unwrap();
    assert!(log.collision.is_none());
    let slowed = log
        .rows
        .iter()
        .any(|r| r.vehicle_id >= 10 && r.t > 30.0 && r.velocity_mps < 5.0);
    assert!(slowed);
}

#[test]
fn short_pulse_on_empty_road_dies_out() {
    let base = ScenarioConfig::default();
    let v0 = base.human.v0;
    let mut cfg = bare(platoon(2, 500.0, v0));
    cfg.duration = 300.0;
    cfg.log_humans = true;
    cfg.waves.pulses.push(WavePulse {
        vehicle: 0,
        start: 10.0,
        duration: 5.0,
        target_speed: 2.0,
        decel: 3.0,
    });
    let log = run(&cfg).unwrap();
    let min_follower = log
        .rows
        .iter()
        .filter(|r| r.vehicle_id == 1)
        .map(|r| r.velocity_mps)
        .fold(f64::INFINITY, f64::min);
    assert!(min_follower >= 0.9 * v0, "{min_follower}");
}

#[test]
fn zero_duration_run_logs_only_header() {
    let cfg = ScenarioConfig {
        duration: 0.0,
        ..ScenarioConfig::default()
    };
    let log = run(&cfg).unwrap();
    assert!(log.rows.is_empty());
    assert_eq!(log.csv_string().lines().count(), 1);
}

#[test]
fn free_flow_without_corridor_is_normal_mode() {
    let mut cfg = bare(vec![VehicleSpec {
        engage_at: Some(2.0),
        ..spec(0, 0.0, 25.0, VehicleKind::Controlled, false)
    }]);
    cfg.duration = 120.0;
    let log = run(&cfg).unwrap();
    let report = RunReport::new(&cfg, &log);
    assert_eq!(report.vehicles[0].occupancy[&Mode::Normal], 1.0);
    assert!((report.vehicles[0].engaged_time - 118.0).abs() < 1e-9);
    let last = log.rows.last().unwrap();
    assert!((last.velocity_mps - cfg.driver_setpoint()).abs() < 0.01);
}

#[test]
fn canonical_run_respects_vehicle_invariants() {
    let cfg = ScenarioConfig {
        log_humans: true,
        log_interval: 1.0,
        ..ScenarioConfig::default()
    };
    let log = run(&cfg).unwrap();
    assert!(log.collision.is_none());
    let mut last: std::collections::HashMap<u32, f64> = Default::default();
    for r in &log.rows {
        assert!(r.velocity_mps >= 0.0);
        if let Some(&prev) = last.get(&r.vehicle_id) {
            assert!(r.position_m >= prev);
        }
        last.insert(r.vehicle_id, r.position_m);
    }
    let report = RunReport::new(&cfg, &log);
    let s_min = cfg.controller.s_min;
    for v in &report.vehicles {
        assert!(v.min_gap.unwrap() >= s_min / 2.0, "{v:?}");
        let total: f64 = v.occupancy.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for m in [Mode::Cbf, Mode::Vsl, Mode::Middleway] {
            assert!(v.occupancy[&m] > 0.0);
        }
    }
}

#[test]
fn gantry_changes_and_engagement_are_logged() {
    let log = run(&ScenarioConfig::default()).unwrap();
    use middleway::simulation::Event;
    assert!(log
        .events
        .iter()
        .any(|e| matches!(e, Event::Engaged { .. })));
    assert!(log
        .events
        .iter()
        .any(|e| matches!(e, Event::GantryChange { .. })));
    assert!(log
        .events
        .iter()
        .any(|e| matches!(e, Event::GantryAcquired { .. })));
    assert!(log
        .events
        .iter()
        .any(|e| matches!(e, Event::CorridorEntered { .. })));
}

#[test]
fn step_size_refinement_changes_little() {
    for integrator in [Integrator::Forward, Integrator::SemiImplicit] {
        let run_at = |dt: f64| {
            let mut cfg = bare(vec![
                spec(0, 80.0, 25.0, VehicleKind::Human, false),
                VehicleSpec {
                    engage_at: Some(0.0),
                    ..spec(1, 0.0, 25.0, VehicleKind::Controlled, false)
                },
            ]);
            cfg.dt = dt;
            cfg.duration = 120.0;
            cfg.log_interval = 1.0;
            cfg.integrator = integrator;
            cfg.waves.pulses.push(WavePulse {
                vehicle: 0,
                start: 10.0,
                duration: 20.0,
                target_speed: 8.0,
                decel: 2.0,
            });
            run(&cfg).unwrap()
        };
        let (coarse, fine) = (run_at(0.05), run_at(0.01));
        assert_eq!(coarse.rows.len(), fine.rows.len());
        let worst = coarse
            .rows
            .iter()
            .zip(&fine.rows)
            .map(|(a, b)| {
                assert!((a.t - b.t).abs() < 1e-9);
                (a.velocity_mps - b.velocity_mps).abs()
            })
            .fold(0.0, f64::max);
        assert!(
            worst < 0.05,
            "{integrator:?}: max velocity difference {worst}"
        );
    }
}

#[test]
fn single_vehicle_behind_fast_traffic_tracks_offset_below_it() {
    let cfg = ScenarioConfig::default();
    let r = string_experiment(&cfg, 1).unwrap();
    let s = &r.stages[0];
    assert_eq!(s.steady_mode, Mode::Middleway);
    assert!((s.steady_v_des - (30.0 - cfg.controller.v_offset)).abs() < 1e-6);
}

#[test]
fn string_of_ten_steps_down_to_the_limit() {
    let cfg = ScenarioConfig::default();
    let r = string_experiment(&cfg, 10).unwrap();
    for s in &r.stages {
        let expect = (30.0 - 2.0 * s.index as f64).max(13.4);
        assert!(
            (s.steady_v_des - expect).abs() < 1e-3,
            "stage {} {}",
            s.index,
            s.steady_v_des
        );
        assert!(s.collision.is_none());
    }
    assert_eq!(r.stages[9].steady_mode, Mode::Vsl);
    let v = r.steady_v_des();
    assert!(v.windows(2).all(|w| w[1] <= w[0]));
    assert!(v.iter().all(|&x| x >= 13.4 - 1e-9));
}

#[test]
fn slow_traffic_holds_every_vehicle_in_cbf_mode() {
    let mut cfg = ScenarioConfig::default();
    cfg.string.traffic_speed = 10.0;
    let r = string_experiment(&cfg, 4).unwrap();
    for s in &r.stages {
        assert_eq!(s.steady_mode, Mode::Cbf);
        assert!(s.steady_speed <= s.traffic_speed + 1e-3);
        // The stage starts with some barrier slack, which the vehicle closes
        // before settling; the last 30 s are at or below the lead speed.
        let settled = s
            .trace
            .iter()
            .filter(|p| p.t >= cfg.string.stage_duration - 30.0);
        assert!(settled
            .clone()
            .all(|p| p.v <= s.traffic_speed + 1e-3 && p.mode == Mode::Cbf));
    }
}

#[test]
fn overlapping_roster_is_rejected() {
    let cfg = bare(vec![
        spec(0, 0.0, 10.0, VehicleKind::Human, false),
        spec(1, -3.0, 10.0, VehicleKind::Human, false),
    ]);
    let err = World::new(&cfg).unwrap_err();
    assert!(err.to_string().contains("vehicles.position"));
}
