use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cone factor `m0` and sheet thickness `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub m0: f64,
    pub h: f64,
}

impl ConeParams {
    pub fn new(m0: f64, h: f64) -> Result<Self> {
        if !(m0 > 0.0 && m0 < 1.0) {
            return Err(Error::InvalidParameter(format!("m0 = {m0} must lie in (0, 1)")));
        }
        if !(h > 0.0 && h < (-1.0f64).exp()) {
            return Err(Error::InvalidParameter(format!("h = {h} must lie in (0, 1/e)")));
        }
        Ok(Self { m0, h })
    }

    /// Leading-order energy constant `2π(1 − m0²)`.
    pub fn c_star(&self) -> f64 {
        c_star(self.m0)
    }

    /// Total Gauss curvature carried by the cone tip, `2π(1 − m0)`.
    pub fn tip_curvature(&self) -> f64 {
        2.0 * PI * (1.0 - self.m0)
    }

    pub fn abs_log_h(&self) -> f64 {
        self.h.ln().abs()
    }
}

pub fn c_star(m0: f64) -> f64 {
    2.0 * PI * (1.0 - m0 * m0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_star_values() {
        assert!((c_star(0.5) - 3.0 * PI / 2.0).abs() < 1e-15);
        assert!((c_star(0.5) - 4.712389).abs() < 1e-6);
        assert!((c_star(0.8) - 2.261947).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ConeParams::new(0.0, 0.1).is_err());
        assert!(ConeParams::new(1.0, 0.1).is_err());
        assert!(ConeParams::new(0.5, 0.0).is_err());
        assert!(ConeParams::new(0.5, 0.37).is_err());
        assert!(ConeParams::new(0.5, 0.36).is_ok());
    }
}
