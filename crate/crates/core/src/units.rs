//! Unit conventions.
//!
//! Configuration values are frequencies ν in MHz; every rate used in the
//! numerics is an angular frequency ω = 2πν in rad/µs. Times are µs internally
//! and ns at the file boundary, so ω·t is dimensionless.

use std::f64::consts::TAU;

/// ν [MHz] → ω [rad/µs].
pub fn angular(mhz: f64) -> f64 {
    TAU * mhz
}

/// ω [rad/µs] → ν [MHz].
pub fn mhz(angular: f64) -> f64 {
    angular / TAU
}

pub fn ns_to_us(ns: f64) -> f64 {
    ns * 1e-3
}

pub fn us_to_ns(us: f64) -> f64 {
    us * 1e3
}
