//! Decibel and squeezing-parameter conversions.
//!
//! Squeezing levels are quoted as negative dB (noise power relative to the
//! vacuum). A level of `db` corresponds to a squeezing parameter
//! `r = -db * ln(10) / 20`, i.e. a variance ratio `e^{-2r} = 10^{db/10}`.

use std::f64::consts::LN_10;

/// Quadrature variance of the vacuum in the `x = (a + a†)/2` convention.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Squeezing parameter for a (non-positive) squeezing level in dB.
pub fn r_from_squeezing_db(db: f64) -> f64 {
    -db * LN_10 / 20.0
}

pub fn squeezing_db_from_r(r: f64) -> f64 {
    -20.0 * r / LN_10
}

/// `10 log10(ratio)`.
pub fn power_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Variance ratio corresponding to a power level in dB.
pub fn ratio_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
