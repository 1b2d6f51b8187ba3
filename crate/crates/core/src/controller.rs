//! Speed setpoint selection and the low-level speed controller.
//!
//! The controller is a two-level hierarchy. A multiplexer picks the speed
//! setpoint `v_des` from the current speed (disengaged), the driver's cruise
//! setting (outside the VSL corridor) or the middleway law (inside it). The
//! low-level loop rate-limits `v_des`, tracks it with a proportional law and
//! clips the result with a control barrier function on the gap to the lead
//! vehicle:
//!
//! ```text
//! v_mid  = min(max(v_pr - v_offset, v_gr), v_des_max)
//! u_nom  = k_p (v_ramp - v)
//! u_safe = (k_cbf / t_min) (s - (t_min v + s_min)) + (v_l - v) / t_min
//! u      = clamp(min(u_nom, u_safe), u_min, u_max)
//! ```
//!
//! Everything here is a pure function of its arguments; the only carried
//! state is the previous ramp output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{require, ConfigError};
use crate::scalar::{clamp, Scalar};

/// Gains and limits of the speed controller. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct ControllerConfig<T> {
    /// Proportional gain of the nominal speed tracker (1/s).
    pub k_p: T,
    /// Barrier decay rate (1/s).
    pub k_cbf: T,
    /// Time headway in the safe-gap definition (s).
    pub t_min: T,
    /// Standstill gap in the safe-gap definition (m).
    pub s_min: T,
    /// How far below the prevailing speed the middleway setpoint sits (m/s).
    pub v_offset: T,
    /// Cap on the middleway setpoint (m/s).
    pub v_des_max: T,
    /// Setpoint ramp rate limit (m/s per s).
    pub ramp_rate: T,
    pub u_min: T,
    pub u_max: T,
    /// Controller sample time (s).
    pub dt: T,
}

impl<T: Scalar> Default for ControllerConfig<T> {
    fn default() -> Self {
        Self {
            k_p: T::lit(0.8),
            k_cbf: T::lit(0.1),
            t_min: T::lit(2.0),
            s_min: T::lit(15.0),
            v_offset: T::lit(2.0),
            v_des_max: T::lit(33.5),
            ramp_rate: T::lit(1.5),
            u_min: T::lit(-3.0),
            u_max: T::lit(2.0),
            dt: T::lit(0.05),
        }
    }
}

impl<T: Scalar> ControllerConfig<T> {
    /// Drive-mode presets for `v_offset` (sport, normal, eco).
    pub const DRIVE_MODE_OFFSETS: [f64; 3] = [2.0, 4.0, 6.0];

    pub fn validate(&self) -> Result<(), ConfigError> {
        let zero = T::zero();
        let finite = [
            ("k_p", self.k_p),
            ("k_cbf", self.k_cbf),
            ("t_min", self.t_min),
            ("s_min", self.s_min),
            ("v_offset", self.v_offset),
            ("v_des_max", self.v_des_max),
            ("ramp_rate", self.ramp_rate),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("dt", self.dt),
        ];
        for (name, value) in finite {
            require(
                value.is_finite(),
                &format!("controller.{name}"),
                "must be finite",
            )?;
        }
        require(self.k_p > zero, "controller.k_p", "must be > 0")?;
        require(self.k_cbf > zero, "controller.k_cbf", "must be > 0")?;
        require(self.t_min > zero, "controller.t_min", "must be > 0")?;
        require(self.ramp_rate > zero, "controller.ramp_rate", "must be > 0")?;
        require(self.dt > zero, "controller.dt", "must be > 0")?;
        require(self.s_min >= zero, "controller.s_min", "must be >= 0")?;
        require(self.v_offset >= zero, "controller.v_offset", "must be >= 0")?;
        require(self.v_des_max > zero, "controller.v_des_max", "must be > 0")?;
        require(self.u_min < zero, "controller.u_min", "must be < 0")?;
        require(self.u_max > zero, "controller.u_max", "must be > 0")?;
        Ok(())
    }
}

/// Gap and speed of the vehicle immediately ahead in the ego lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lead<T> {
    /// Bumper-to-bumper spacing (m).
    pub gap: T,
    /// Absolute lead speed (m/s).
    pub speed: T,
}

/// Everything the controller reads in one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInputs<T> {
    pub engaged: bool,
    pub in_corridor: bool,
    pub vsl_valid: bool,
    pub driver_setpoint: T,
    /// Ego speed.
    pub v: T,
    /// Posted speed of the active gantry.
    pub v_gr: T,
    /// Prevailing-speed estimate, zero when the estimator is off.
    pub v_pr: T,
    pub lead: Option<Lead<T>>,
}

impl<T: Scalar> ControlInputs<T> {
    /// Engaged, inside the corridor with a valid reading, no lead.
    pub fn in_corridor(v: T, v_gr: T, v_pr: T, driver_setpoint: T) -> Self {
        Self {
            engaged: true,
            in_corridor: true,
            vsl_valid: true,
            driver_setpoint,
            v,
            v_gr,
            v_pr,
            lead: None,
        }
    }

    pub fn with_lead(mut self, gap: T, speed: T) -> Self {
        self.lead = Some(Lead { gap, speed });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Disengaged,
    Normal,
    #[serde(rename = "VSL")]
    Vsl,
    Middleway,
    #[serde(rename = "CBF")]
    Cbf,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Disengaged,
        Mode::Normal,
        Mode::Vsl,
        Mode::Middleway,
        Mode::Cbf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Disengaged => "Disengaged",
            Mode::Normal => "Normal",
            Mode::Vsl => "VSL",
            Mode::Middleway => "Middleway",
            Mode::Cbf => "CBF",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Which multiplexer input produced `v_des`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetpointSource {
    CurrentSpeed,
    DriverSetpoint,
    Middleway,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput<T> {
    /// Commanded acceleration after filtering and clamping.
    pub u: T,
    pub mode: Mode,
    pub source: SetpointSource,
    pub v_des: T,
    pub v_ramp: T,
    pub u_nom: T,
    /// Barrier bound, present whenever a lead is tracked.
    pub u_safe: Option<T>,
}

/// State carried between controller samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState<T> {
    /// Last ramp output; `None` until the first engaged sample, so the ramp
    /// is re-seeded from the current speed on engagement.
    pub v_ramp_prev: Option<T>,
}

/// `min(max(v_pr - v_offset, v_gr), v_des_max)`.
///
/// With the estimator off (`v_pr = 0`) the inner max always picks `v_gr`.
pub fn middleway<T: Scalar>(v_pr: T, v_gr: T, cfg: &ControllerConfig<T>) -> T {
    (v_pr - cfg.v_offset).max(v_gr).min(cfg.v_des_max)
}

pub fn select_setpoint<T: Scalar>(
    inputs: &ControlInputs<T>,
    cfg: &ControllerConfig<T>,
) -> (T, SetpointSource) {
    if !inputs.engaged {
        (inputs.v, SetpointSource::CurrentSpeed)
    } else if !inputs.in_corridor || !inputs.vsl_valid {
        (inputs.driver_setpoint, SetpointSource::DriverSetpoint)
    } else {
        (
            middleway(inputs.v_pr, inputs.v_gr, cfg),
            SetpointSource::Middleway,
        )
    }
}

/// Moves `v_ramp_prev` toward `v_des` by at most `ramp_rate * dt`.
pub fn ramp<T: Scalar>(v_des: T, v_ramp_prev: T, cfg: &ControllerConfig<T>) -> T {
    let step = cfg.ramp_rate * cfg.dt;
    v_ramp_prev + clamp(v_des - v_ramp_prev, -step, step)
}

pub fn nominal<T: Scalar>(v_ramp: T, v: T, cfg: &ControllerConfig<T>) -> T {
    cfg.k_p * (v_ramp - v)
}

/// Barrier value `h = s - (t_min v + s_min)`; the safe set is `h >= 0`.
pub fn barrier<T: Scalar>(gap: T, v: T, cfg: &ControllerConfig<T>) -> T {
    gap - (cfg.t_min * v + cfg.s_min)
}

/// Largest acceleration that keeps `dh/dt >= -k_cbf h`.
pub fn cbf_limit<T: Scalar>(gap: T, v: T, v_lead: T, cfg: &ControllerConfig<T>) -> T {
    cfg.k_cbf / cfg.t_min * barrier(gap, v, cfg) + (v_lead - v) / cfg.t_min
}

/// Pointwise projection onto the single half-space `u <= u_safe`.
pub fn safety_filter<T: Scalar>(u_nom: T, u_safe: Option<T>) -> T {
    match u_safe {
        Some(bound) => u_nom.min(bound),
        None => u_nom,
    }
}

/// Mode label for one sample. `u_filtered` is the barrier-filtered command
/// before actuator clamping; the barrier binds when it is below `u_nom`.
pub fn classify_mode<T: Scalar>(
    inputs: &ControlInputs<T>,
    v_des: T,
    u_nom: T,
    u_filtered: T,
) -> Mode {
    if !inputs.engaged {
        Mode::Disengaged
    } else if inputs.lead.is_some() && u_filtered < u_nom {
        Mode::Cbf
    } else if !inputs.in_corridor || !inputs.vsl_valid {
        Mode::Normal
    } else if v_des > inputs.v_gr {
        Mode::Middleway
    } else {
        Mode::Vsl
    }
}

/// One controller sample: setpoint, ramp, nominal law, barrier filter, clamp.
pub fn step_controller<T: Scalar>(
    inputs: &ControlInputs<T>,
    state: &mut ControllerState<T>,
    cfg: &ControllerConfig<T>,
) -> ControllerOutput<T> {
    let (v_des, source) = select_setpoint(inputs, cfg);
    let u_safe = inputs
        .lead
        .map(|lead| cbf_limit(lead.gap, inputs.v, lead.speed, cfg));

    if !inputs.engaged {
        state.v_ramp_prev = None;
        return ControllerOutput {
            u: T::zero(),
            mode: Mode::Disengaged,
            source,
            v_des,
            v_ramp: inputs.v,
            u_nom: T::zero(),
            u_safe,
        };
    }

    let prev = state.v_ramp_prev.unwrap_or(inputs.v);
    let v_ramp = ramp(v_des, prev, cfg);
    state.v_ramp_prev = Some(v_ramp);

    let u_nom = nominal(v_ramp, inputs.v, cfg);
    let u_filtered = safety_filter(u_nom, u_safe);
    let u = clamp(u_filtered, cfg.u_min, cfg.u_max);
    ControllerOutput {
        u,
        mode: classify_mode(inputs, v_des, u_nom, u_filtered),
        source,
        v_des,
        v_ramp,
        u_nom,
        u_safe,
    }
}

/// Controller instance for one vehicle: configuration plus carried state.
#[derive(Debug, Clone)]
pub struct SpeedController<T> {
    pub config: ControllerConfig<T>,
    pub state: ControllerState<T>,
}

impl<T: Scalar> SpeedController<T> {
    pub fn new(config: ControllerConfig<T>) -> Self {
        Self {
            config,
            state: ControllerState::default(),
        }
    }

    pub fn step(&mut self, inputs: &ControlInputs<T>) -> ControllerOutput<T> {
        step_controller(inputs, &mut self.state, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ControllerConfig<f64> {
        ControllerConfig::default()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn paper_gains_are_defaults() {
        let c = cfg();
        assert_eq!((c.k_p, c.k_cbf, c.t_min, c.s_min), (0.8, 0.1, 2.0, 15.0));
        c.validate().unwrap();
    }

    #[test]
    fn middleway_examples() {
        let mut c = cfg();
        c.v_des_max = 38.0;
        assert!(close(middleway(33.5, 13.4, &c), 31.5));
        assert!(close(middleway(0.0, 22.35, &c), 22.35));
        assert!(close(middleway(15.4, 13.4, &c), 13.4));
        c.v_des_max = 35.0;
        assert!(close(middleway(42.0, 13.4, &c), 35.0));
    }

    #[test]
    fn setpoint_multiplexer() {
        let mut c = cfg();
        c.v_des_max = 38.0;
        let mut inputs = ControlInputs::in_corridor(20.0, 13.4, 33.5, 31.0);
        assert_eq!(
            select_setpoint(&inputs, &c),
            (31.5, SetpointSource::Middleway)
        );
        inputs.in_corridor = false;
        assert_eq!(
            select_setpoint(&inputs, &c),
            (31.0, SetpointSource::DriverSetpoint)
        );
        inputs.in_corridor = true;
        inputs.vsl_valid = false;
        assert_eq!(
            select_setpoint(&inputs, &c),
            (31.0, SetpointSource::DriverSetpoint)
        );
        inputs.engaged = false;
        assert_eq!(
            select_setpoint(&inputs, &c),
            (20.0, SetpointSource::CurrentSpeed)
        );
    }

    #[test]
    fn ramp_examples() {
        let c = cfg();
        let mut c = ControllerConfig {
            ramp_rate: 1.5,
            dt: 0.1,
            ..c
        };
        assert!(close(ramp(30.0, 30.0, &c), 30.0));
        assert!(close(ramp(30.0, 20.0, &c), 20.15));
        assert!(close(ramp(10.0, 20.0, &c), 19.85));
        c.dt = 1.0;
        assert!(close(ramp(20.5, 20.0, &c), 20.5));
    }

    #[test]
    fn nominal_examples() {
        let c = cfg();
        assert!(close(nominal(30.0, 28.0, &c), 1.6));
        assert!(close(nominal(17.0, 17.0, &c), 0.0));
        assert!(close(nominal(25.0, 30.0, &c), -4.0));
    }

    #[test]
    fn cbf_examples() {
        let c = cfg();
        assert!(close(cbf_limit(35.0, 10.0, 10.0, &c), 0.0));
        assert!(close(cbf_limit(55.0, 10.0, 8.0, &c), 0.0));
        assert!(close(cbf_limit(20.0, 10.0, 12.0, &c), 0.25));
    }

    #[test]
    fn converged_vsl_tracking() {
        let c = cfg();
        let inputs = ControlInputs::in_corridor(13.4, 13.4, 0.0, 31.0);
        let mut state = ControllerState {
            v_ramp_prev: Some(13.4),
        };
        let out = step_controller(&inputs, &mut state, &c);
        assert_eq!(out.u, 0.0);
        assert_eq!(out.mode, Mode::Vsl);
    }

    #[test]
    fn barrier_binds_and_labels_cbf() {
        let c = cfg();
        // v_ramp stays at 12 because v_des = 12 and prev = 12: u_nom = 0.8 * 2 = 1.6.
        let inputs = ControlInputs::in_corridor(10.0, 12.0, 0.0, 31.0).with_lead(20.0, 12.0);
        let mut state = ControllerState {
            v_ramp_prev: Some(12.0),
        };
        let out = step_controller(&inputs, &mut state, &c);
        assert!(close(out.u_nom, 1.6));
        assert!(close(out.u, 0.25));
        assert_eq!(out.mode, Mode::Cbf);
        assert!(close(out.u_safe.unwrap(), 0.25));
    }

    #[test]
    fn disengaged_tracks_current_speed() {
        let c = cfg();
        let mut inputs = ControlInputs::in_corridor(20.0, 13.4, 0.0, 31.0);
        inputs.engaged = false;
        let mut state = ControllerState {
            v_ramp_prev: Some(5.0),
        };
        let out = step_controller(&inputs, &mut state, &c);
        assert_eq!((out.v_des, out.u, out.mode), (20.0, 0.0, Mode::Disengaged));
        assert_eq!(state.v_ramp_prev, None);
    }

    #[test]
    fn engagement_reseeds_ramp_from_speed() {
        let c = cfg();
        let mut state = ControllerState::default();
        let inputs = ControlInputs::in_corridor(20.0, 13.4, 0.0, 31.0);
        let out = step_controller(&inputs, &mut state, &c);
        assert!(close(out.v_ramp, 20.0 - 1.5 * 0.05));
    }

    #[test]
    fn mode_classification_cases() {
        let inputs = ControlInputs::in_corridor(13.4, 13.4, 0.0, 31.0);
        assert_eq!(classify_mode(&inputs, 13.4, 0.0, 0.0), Mode::Vsl);
        assert_eq!(classify_mode(&inputs, 20.0, 1.0, 1.0), Mode::Middleway);
        let with_lead = inputs.with_lead(30.0, 10.0);
        assert_eq!(classify_mode(&with_lead, 20.0, 1.0, 0.5), Mode::Cbf);
        let mut outside = with_lead;
        outside.in_corridor = false;
        assert_eq!(classify_mode(&outside, 31.0, 1.0, 0.5), Mode::Cbf);
        assert_eq!(classify_mode(&outside, 31.0, 1.0, 1.0), Mode::Normal);
    }

    #[test]
    fn actuator_clamp_applies_after_filter() {
        let c = cfg();
        let inputs = ControlInputs::in_corridor(30.0, 13.4, 0.0, 31.0);
        let mut state = ControllerState {
            v_ramp_prev: Some(13.4),
        };
        let out = step_controller(&inputs, &mut state, &c);
        assert!(out.u_nom < c.u_min);
        assert_eq!(out.u, c.u_min);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let c = ControllerConfig::<f64> {
            dt: 0.0,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "controller.dt");
        let c = ControllerConfig::<f64> {
            u_min: 1.0,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "controller.u_min");
    }

    #[test]
    fn generic_over_f32() {
        let c = ControllerConfig::<f32> {
            v_des_max: 38.0,
            ..Default::default()
        };
        assert!((middleway(33.5f32, 13.4, &c) - 31.5).abs() < 1e-5);
        assert!((cbf_limit(20.0f32, 10.0, 12.0, &c) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn mode_strings_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
    }
}
