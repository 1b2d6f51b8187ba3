//! Cooperative cruise control that follows variable speed limits when
//! traffic complies, blends toward prevailing traffic speed when it does
//! not, and never violates a control-barrier safe gap.
//!
//! The math in [`controller`], [`perception`] and [`rds`] is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`, which is
//! what the simulator and CLI use.

pub mod controller;
pub mod error;
pub mod infrastructure;
pub mod perception;
pub mod rds;
pub mod scalar;
pub mod simulation;
pub mod units;
pub mod vehicle;

pub use error::ConfigError;
pub use scalar::Scalar;

pub type ControllerConfig = controller::ControllerConfig<f64>;
pub type ControllerConfigF32 = controller::ControllerConfig<f32>;
pub type ControlInputs = controller::ControlInputs<f64>;
pub type ControllerOutput = controller::ControllerOutput<f64>;
pub type SpeedController = controller::SpeedController<f64>;
pub type Lead = controller::Lead<f64>;
pub type RadarFrame = perception::RadarFrame<f64>;
pub type RadarTarget = perception::RadarTarget<f64>;
pub type PrevailingEstimator = perception::PrevailingEstimator<f64>;
pub type RdsGrid = rds::RdsGrid<f64>;
pub type RdsGridF32 = rds::RdsGrid<f32>;
pub type TrajectoryPoint = rds::TrajectoryPoint<f64>;

pub use controller::Mode;
pub use simulation::{run, string_experiment, RunLog, RunReport, ScenarioConfig};
pub use vehicle::{VehicleId, VehicleKind, VehicleState};
