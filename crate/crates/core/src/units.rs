//! Unit conversions used at I/O boundaries. Everything internal is SI.

/// Exact mph to m/s factor.
pub const MPS_PER_MPH: f64 = 0.44704;
/// Meters in one statute mile.
pub const METERS_PER_MILE: f64 = 1609.344;

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPS_PER_MPH
}

pub fn mps_to_mph(mps: f64) -> f64 {
    mps / MPS_PER_MPH
}

pub fn miles_to_meters(mi: f64) -> f64 {
    mi * METERS_PER_MILE
}

pub fn meters_to_miles(m: f64) -> f64 {
    m / METERS_PER_MILE
}
