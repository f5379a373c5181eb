//! Membrane and bending energies of a sampled immersion.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{metric_norm_sq, reference_metric, Geometry, Immersion};
use crate::grid::RADIUS_EPS;
use crate::params::ConeParams;
use crate::error::Result;

/// Which free energy a breakdown refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalTag {
    /// Sup-norm of the squared metric error over `ρ ≥ h`, plus `h²‖Dν‖²`.
    SupMembrane,
    /// `‖g − g0‖_{L²(B₁)} + h²‖Dν‖_{L²(B₁)}`, norms not squared.
    L2Membrane,
}

impl fmt::Display for FunctionalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionalTag::SupMembrane => "sup",
            FunctionalTag::L2Membrane => "l2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub membrane: f64,
    pub bending: f64,
    pub total: f64,
    pub functional: FunctionalTag,
}

impl EnergyBreakdown {
    pub fn new(membrane: f64, bending: f64, functional: FunctionalTag) -> Self {
        Self { membrane, bending, total: membrane + bending, functional }
    }

    pub const CSV_HEADER: &'static str = "m0_dimensionless,h_ref_units,functional,membrane_dimensionless,bending_dimensionless,total_dimensionless";

    pub fn csv_row(&self, p: &ConeParams) -> String {
        format!(
            "{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e}",
            p.m0, p.h, self.functional, self.membrane, self.bending, self.total
        )
    }
}

/// Squared metric error `‖g − g0‖²` per node.
pub fn metric_error_sq(geo: &Geometry, p: &ConeParams) -> Vec<f64> {
    let g0 = reference_metric(p);
    geo.metric.iter().map(|g| metric_norm_sq(&g.sub(&g0))).collect()
}

/// Nodes on or outside the circle `ρ = h`.
pub fn membrane_mask(geo: &Geometry, p: &ConeParams) -> Vec<bool> {
    let nt = geo.grid.n_theta;
    (0..geo.grid.len()).map(|k| geo.grid.rho[k / nt] >= p.h * (1.0 - RADIUS_EPS)).collect()
}

pub fn membrane_sup_geo(geo: &Geometry, p: &ConeParams) -> f64 {
    let err = metric_error_sq(geo, p);
    let mask = membrane_mask(geo, p);
    err.iter().zip(&mask).filter(|(_, &m)| m).map(|(e, _)| *e).fold(0.0, f64::max)
}

pub fn membrane_sup(imm: &Immersion, p: &ConeParams) -> Result<f64> {
    Ok(membrane_sup_geo(&imm.geometry()?, p))
}

/// `h² ∫ |Dν|² dx`.
pub fn bending_geo(geo: &Geometry, p: &ConeParams) -> f64 {
    let dn = geo.normal_jacobian_sq();
    p.h * p.h * crate::geometry::integrate_over_disc(&geo.grid, &dn)
}

pub fn bending(imm: &Immersion, p: &ConeParams) -> Result<f64> {
    Ok(bending_geo(&imm.geometry()?, p))
}

/// `( mean over ρ ≥ h of ‖g − g0‖^{2p} )^{1/p}`, area weighted.
pub fn membrane_pnorm_geo(geo: &Geometry, params: &ConeParams, p: u32) -> f64 {
    assert!(p >= 2, "p-norm exponent must be at least 2");
    let err = metric_error_sq(geo, params);
    let mask = membrane_mask(geo, params);
    let w = geo.grid.node_weights();
    pnorm_mean(&err, &w, &mask, p)
}

pub(crate) fn pnorm_mean(q: &[f64], w: &[f64], mask: &[bool], p: u32) -> f64 {
    let qmax = q.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).fold(0.0, f64::max);
    if qmax == 0.0 {
        return 0.0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..q.len() {
        if mask[k] {
            num += w[k] * (q[k] / qmax).powi(p as i32);
            den += w[k];
        }
    }
    qmax * (num / den).powf(1.0 / p as f64)
}

pub fn membrane_pnorm(imm: &Immersion, params: &ConeParams, p: u32) -> Result<f64> {
    Ok(membrane_pnorm_geo(&imm.geometry()?, params, p))
}

pub fn total_energy_geo(geo: &Geometry, p: &ConeParams, tag: FunctionalTag) -> EnergyBreakdown {
    match tag {
        FunctionalTag::SupMembrane => EnergyBreakdown::new(membrane_sup_geo(geo, p), bending_geo(geo, p), tag),
        FunctionalTag::L2Membrane => {
            let err = metric_error_sq(geo, p);
            let membrane = crate::geometry::integrate_over_disc(&geo.grid, &err).sqrt();
            let dn = geo.normal_jacobian_sq();
            let bend = p.h * p.h * crate::geometry::integrate_over_disc(&geo.grid, &dn).sqrt();
            EnergyBreakdown::new(membrane, bend, tag)
        }
    }
}

pub fn total_energy(imm: &Immersion, p: &ConeParams, tag: FunctionalTag) -> Result<EnergyBreakdown> {
    Ok(total_energy_geo(&imm.geometry()?, p, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{ansatz_energy, sample_ansatz};
    use crate::grid::{PolarGrid, Vec3};

    fn flat(g: &PolarGrid) -> Immersion {
        Immersion::from_fn(g, |r, t| Vec3::new(r * t.cos(), r * t.sin(), 0.0))
    }

    #[test]
    fn flat_disc_energies() {
        let p = ConeParams::new(0.5, 1.0 / 64.0).unwrap();
        let g = PolarGrid::new(64, 32, p.h / 8.0).unwrap();
        let imm = flat(&g);
        let e = total_energy(&imm, &p, FunctionalTag::SupMembrane).unwrap();
        assert!((e.membrane - 0.5625).abs() < 1e-12);
        assert!(e.bending.abs() < 1e-20);
        assert!((e.total - 0.5625).abs() < 1e-12);
        for q in [2, 8, 32] {
            assert!((membrane_pnorm(&imm, &p, q).unwrap() - 0.5625).abs() < 1e-12);
        }
        // L² variant: ‖g − g0‖ = 0.75 pointwise over the unit disc.
        let fine = flat(&PolarGrid::new(400, 16, p.h / 8.0).unwrap());
        let e2 = total_energy(&fine, &p, FunctionalTag::L2Membrane).unwrap();
        assert!((e2.membrane - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn csv_row_has_six_columns() {
        let p = ConeParams::new(0.5, 0.01).unwrap();
        let row = EnergyBreakdown::new(1.0, 2.0, FunctionalTag::SupMembrane).csv_row(&p);
        assert_eq!(row.split(',').count(), 6);
        assert_eq!(EnergyBreakdown::CSV_HEADER.split(',').count(), 6);
    }

    #[test]
    fn sampled_ansatz_has_no_membrane_energy() {
        let p = ConeParams::new(0.5, 1.0 / 256.0).unwrap();
        let g = PolarGrid::new(128, 256, p.h / 8.0).unwrap();
        let imm = sample_ansatz(&g, &p);
        assert!(membrane_sup(&imm, &p).unwrap() <= 1e-8);
    }

    #[test]
    fn sampled_bending_approaches_closed_form() {
        let p = ConeParams::new(0.5, 1.0 / 64.0).unwrap();
        let exact = ansatz_energy(&p, 1e-12).breakdown.bending;
        let mut errs = vec![];
        for n in [400, 800, 1600] {
            let g = PolarGrid::new(n, 16, p.h / 8.0).unwrap();
            let b = bending(&sample_ansatz(&g, &p), &p).unwrap();
            errs.push((b - exact).abs() / exact);
        }
        assert!(errs[2] < 2e-3, "{errs:?}");
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.9, "{errs:?}");
    }
}
