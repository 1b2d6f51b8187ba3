use middleway::controller::{
    middleway, ramp, step_controller, ControlInputs, ControllerState, Lead, Mode,
};
use middleway::infrastructure::{
    vsl_algorithm, FeedClient, FeedConfig, VslReading, VslSurrogateConfig,
};
use middleway::perception::{lead_vehicle, synthesize_radar};
use middleway::rds::{error_stats, ideal_speed, realtime_speed, RdsGrid, TrajectoryPoint};
use middleway::{ControllerConfig, VehicleKind, VehicleState};
use proptest::prelude::*;

fn cfg_with(v_offset: f64, v_des_max: f64) -> ControllerConfig {
    ControllerConfig {
        v_offset,
        v_des_max,
        ..ControllerConfig::default()
    }
}

proptest! {
    #[test]
    fn middleway_bounds(v_pr in 0.0..45.0f64, v_gr in 5.0..35.0f64, v_offset in 0.0..8.0f64, cap in 5.0..40.0f64) {
        let cfg = cfg_with(v_offset, cap);
        let v = middleway(v_pr, v_gr, &cfg);
        prop_assert!(v <= cap);
        if v_gr <= cap {
            prop_assert!(v >= v_gr);
        }
    }

    #[test]
    fn middleway_monotone(
        v_pr in 0.0..45.0f64, v_gr in 5.0..35.0f64, v_offset in 0.0..8.0f64,
        d1 in 0.0..5.0f64, d2 in 0.0..5.0f64, d3 in 0.0..5.0f64,
    ) {
        let cfg = cfg_with(v_offset, 33.5);
        let base = middleway(v_pr, v_gr, &cfg);
        prop_assert!(middleway(v_pr + d1, v_gr, &cfg) >= base);
        prop_assert!(middleway(v_pr, v_gr + d2, &cfg) >= base);
        prop_assert!(middleway(v_pr, v_gr, &cfg_with(v_offset + d3, 33.5)) <= base);
    }

    #[test]
    fn ramp_step_is_bounded(v_des in -10.0..50.0f64, prev in 0.0..40.0f64, rate in 0.1..5.0f64) {
        let cfg = ControllerConfig { ramp_rate: rate, ..ControllerConfig::default() };
        let next = ramp(v_des, prev, &cfg);
        // The increment is clamped exactly; recovering it as `next - prev`
        // can round by one ulp of the operands.
        let ulp = f64::EPSILON * prev.abs().max(next.abs());
        prop_assert!((next - prev).abs() <= rate * cfg.dt + ulp);
        if (v_des - prev).abs() <= rate * cfg.dt {
            prop_assert_eq!(next, v_des);
        }
    }

    #[test]
    fn one_mode_per_step_and_speed_cap(
        engaged: bool, in_corridor: bool, vsl_valid: bool,
        v in 0.0..40.0f64, v_gr in 8.0..32.0f64, v_pr in 0.0..40.0f64,
        lead in proptest::option::of((0.0..150.0f64, 0.0..40.0f64)),
        steps in 1usize..40,
    ) {
        let cfg = ControllerConfig::default();
        let inputs = ControlInputs {
            engaged, in_corridor, vsl_valid,
            driver_setpoint: 33.5, v, v_gr, v_pr,
            lead: lead.map(|(gap, speed)| Lead { gap, speed }),
        };
        let mut state = ControllerState::default();
        let mut prev_ramp: Option<f64> = None;
        for _ in 0..steps {
            let out = step_controller(&inputs, &mut state, &cfg);
            if engaged {
                if let Some(p) = prev_ramp {
                    prop_assert!((out.v_ramp - p).abs() <= cfg.ramp_rate * cfg.dt + f64::EPSILON * p.abs().max(out.v_ramp.abs()));
                }
                prev_ramp = Some(out.v_ramp);
            }
            prop_assert!(out.u >= cfg.u_min && out.u <= cfg.u_max);
            let valid = in_corridor && vsl_valid;
            match out.mode {
                Mode::Disengaged => prop_assert!(!engaged),
                Mode::Normal => prop_assert!(engaged && !valid),
                Mode::Vsl | Mode::Middleway => prop_assert!(engaged && valid),
                Mode::Cbf => prop_assert!(engaged && inputs.lead.is_some()),
            }
            if engaged && valid {
                prop_assert!(out.v_des <= cfg.v_des_max);
            }
        }
    }

    #[test]
    fn controller_is_deterministic(v in 0.0..40.0f64, v_gr in 8.0..32.0f64, v_pr in 0.0..40.0f64, gap in 0.0..150.0f64) {
        let cfg = ControllerConfig::default();
        let inputs = ControlInputs::in_corridor(v, v_gr, v_pr, 33.5).with_lead(gap, v * 0.9);
        let run = || {
            let mut s = ControllerState::default();
            (0..50).map(|_| step_controller(&inputs, &mut s, &cfg).u.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn radar_reproduces_two_vehicle_scene(x in -1000.0..1000.0f64, gap in 0.0..120.0f64, v in 0.0..40.0f64, vl in 0.0..40.0f64) {
        let ego = VehicleState::new(1, x, v, 0, VehicleKind::Controlled);
        let lead = VehicleState::new(2, x + gap + 5.0, vl, 0, VehicleKind::Human);
        let frame = synthesize_radar(&ego, [&ego, &lead], 120.0, 0.0);
        let got = lead_vehicle(&frame, v).unwrap();
        prop_assert!((got.gap - gap).abs() <= 1e-9 * (1.0 + x.abs()));
        prop_assert!((got.speed - vl).abs() <= 1e-12 * (1.0 + vl));
    }

    #[test]
    fn posted_limits_stay_legal(speeds in proptest::collection::vec(0.0..40.0f64, 0..4), prev in 6u32..=14) {
        let prev = prev * 5;
        let posted = vsl_algorithm(&speeds, prev, &VslSurrogateConfig::default());
        prop_assert!((30..=70).contains(&posted) && posted.is_multiple_of(5));
        prop_assert!(posted.abs_diff(prev) <= 10);
    }

    #[test]
    fn feed_delivers_exactly_after_latency(latency in 0.0..20.0f64, issue_at in 0.0..100.0f64, v in 10.0..35.0f64) {
        let mut feed = FeedClient::new(&FeedConfig { latency, ..FeedConfig::default() }, 0);
        let reading = VslReading { gantry_id: Some(3), v_gr: v, valid: true, fetched_at: issue_at };
        feed.issue(reading);
        if latency > 1e-6 {
            prop_assert!(feed.poll(issue_at + latency - 1e-6).is_none());
        }
        prop_assert_eq!(feed.poll(issue_at + latency), Some(reading));
    }

    #[test]
    fn static_grid_has_zero_error(speed in 0.0..40.0f64, t in 40.0..500.0f64, mm in 60.0..61.9f64, latency in 0.0..30.0f64) {
        let mut grid = RdsGrid::new(0.0, 30.0, vec![60.0, 60.5, 61.0, 61.5, 62.0], 20).unwrap();
        for i in 0..5 {
            for j in 0..20 {
                grid.set(i, j, Some(speed));
            }
        }
        let p = TrajectoryPoint { t, mile_marker: mm, v: speed };
        prop_assert_eq!(ideal_speed(&p, &grid).unwrap(), speed);
        prop_assert_eq!(realtime_speed(&p, &grid, latency).unwrap(), speed);
        let stats = error_stats(&[p], &grid, &[latency], 0.44704);
        prop_assert_eq!(stats[0].std, 0.0);
    }

    #[test]
    fn estimates_stay_within_cell_range(cells in proptest::collection::vec(5.0..35.0f64, 8), t in 30.0..119.0f64, mm in 60.0..60.99f64) {
        let mut grid = RdsGrid::new(0.0, 30.0, vec![60.0, 60.5, 61.0], 4).unwrap();
        let mut k = 0;
        for j in 0..4 {
            for i in 0..2 {
                grid.set(i, j, Some(cells[k]));
                k += 1;
            }
        }
        let lo = cells.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = TrajectoryPoint { t, mile_marker: mm.min(60.49), v: 0.0 };
        for est in [ideal_speed(&p, &grid), realtime_speed(&p, &grid, 0.0)].into_iter().flatten() {
            prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
        }
    }
}
