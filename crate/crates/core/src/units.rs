//! Unit conventions.
//!
//! Angular frequencies are carried in rad/ns (so `2π × 1 GHz == TAU`) and
//! times in ns. Conversions happen once, at the I/O boundary.

use std::f64::consts::TAU;

pub fn ghz(f: f64) -> f64 {
    TAU * f
}

pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e-3
}

pub fn to_ghz(w: f64) -> f64 {
    w / TAU
}

pub fn to_mhz(w: f64) -> f64 {
    w / TAU * 1e3
}

/// dBm to linear power in mW.
pub fn dbm_to_mw(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_invert() {
        assert!((to_ghz(ghz(8.103)) - 8.103).abs() < 1e-15);
        assert!((to_mhz(mhz(65.0)) - 65.0).abs() < 1e-12);
        assert!((mhz(1000.0) - ghz(1.0)).abs() < 1e-15);
        assert!((dbm_to_mw(0.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_mw(-10.0) - 0.1).abs() < 1e-15);
    }
}
