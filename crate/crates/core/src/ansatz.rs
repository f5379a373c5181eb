//! The rotationally symmetric upper-bound construction: a flat disc inside
//! `B_{h/2}`, the exact cone outside `B_h`, glued by a smooth cutoff.

use std::f64::consts::PI;

use nalgebra::Matrix3x2;

use crate::energy::{EnergyBreakdown, FunctionalTag};
use crate::geometry::{Immersion, MetricComponents};
use crate::grid::{PolarGrid, Vec3};
use crate::params::ConeParams;
use crate::quadrature::adaptive_simpson;

/// Sup bounds of the quintic smoothstep on `[1/2, 1]`.
pub const CUTOFF_MAX_DPSI: f64 = 3.75;
pub const CUTOFF_MAX_D2PSI: f64 = 40.0 / 3.0 * 1.7320508075688772;

/// Description of the transition profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub start: f64,
    pub end: f64,
    pub degree: u32,
    pub max_dpsi: f64,
    pub max_d2psi: f64,
}

pub const CUTOFF: CutoffSpec = CutoffSpec {
    start: 0.5,
    end: 1.0,
    degree: 5,
    max_dpsi: CUTOFF_MAX_DPSI,
    max_d2psi: CUTOFF_MAX_D2PSI,
};

/// Quintic smoothstep `ψ` with `ψ = 0` for `t ≤ 1/2`, `ψ = 1` for `t ≥ 1`.
/// Returns `(ψ, ψ', ψ'')`.
pub fn cutoff(t: f64) -> (f64, f64, f64) {
    if t <= 0.5 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let s = 2.0 * (t - 0.5);
    let s2 = s * s;
    let psi = s2 * s * (10.0 + s * (-15.0 + 6.0 * s));
    let dpsi = 2.0 * 30.0 * s2 * (1.0 - s) * (1.0 - s);
    let d2psi = 4.0 * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    (psi, dpsi, d2psi)
}

/// Radial profile quantities at `rho`: `a = ψ + tψ'`, `c = 1 − (1−m0)ψ`,
/// `a' = dA/dρ`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    a: f64,
    da: f64,
    c: f64,
}

fn profile(rho: f64, p: &ConeParams) -> Profile {
    let t = rho / p.h;
    let (psi, dpsi, d2psi) = cutoff(t);
    Profile {
        a: psi + t * dpsi,
        da: (2.0 * dpsi + t * d2psi) / p.h,
        c: 1.0 - (1.0 - p.m0) * psi,
    }
}

fn sin_m0(m0: f64) -> f64 {
    (1.0 - m0 * m0).sqrt()
}

/// `ψ(ρ/h) ρ e_{m0} + (1 − ψ(ρ/h)) ρ e_ρ`.
pub fn ansatz_map(rho: f64, theta: f64, p: &ConeParams) -> Vec3 {
    let (psi, _, _) = cutoff(rho / p.h);
    let radial = rho * (1.0 - (1.0 - p.m0) * psi);
    let z = rho * psi * sin_m0(p.m0);
    Vec3::new(radial * theta.cos(), radial * theta.sin(), z)
}

/// Closed-form induced metric of the ansatz.
pub fn ansatz_metric(rho: f64, p: &ConeParams) -> MetricComponents {
    let q = profile(rho, p);
    let b = 1.0 - q.a;
    MetricComponents::new(q.a * q.a + b * b + 2.0 * p.m0 * q.a * b, 0.0, q.c * q.c)
}

/// `f = |∂ρ ȳ|`, the length of the radial tangent.
fn normal_scale(a: f64, m0: f64) -> f64 {
    let s = sin_m0(m0);
    let k = 1.0 - m0;
    let f = ((a * s).powi(2) + (1.0 - k * a).powi(2)).sqrt();
    assert!(f > 0.0);
    f
}

/// Unit normal of the ansatz.
pub fn ansatz_normal(rho: f64, theta: f64, p: &ConeParams) -> Vec3 {
    let q = profile(rho, p);
    let s = sin_m0(p.m0);
    let f = normal_scale(q.a, p.m0);
    let u = -q.a * s / f;
    let w = (1.0 - (1.0 - p.m0) * q.a) / f;
    Vec3::new(u * theta.cos(), u * theta.sin(), w)
}

/// `(|∂ρ ν|, |ρ⁻¹ ∂θ ν|)` along a ray.
fn normal_derivative_sizes(rho: f64, p: &ConeParams) -> (f64, f64) {
    let q = profile(rho, p);
    let s = sin_m0(p.m0);
    let f = normal_scale(q.a, p.m0);
    (s * q.da / (f * f), s * q.a / (f * rho))
}

/// `Dν` in Cartesian reference coordinates.
pub fn ansatz_normal_jacobian(rho: f64, theta: f64, p: &ConeParams) -> Matrix3x2<f64> {
    let q = profile(rho, p);
    let s = sin_m0(p.m0);
    let f = normal_scale(q.a, p.m0);
    let (c, sn) = (theta.cos(), theta.sin());
    let e_rho = Vec3::new(c, sn, 0.0);
    let e_theta = Vec3::new(-sn, c, 0.0);
    // ν = (u e_ρ + w e_z); rotating direction in the (e_ρ, e_z) plane.
    let u = -q.a * s / f;
    let w = (1.0 - (1.0 - p.m0) * q.a) / f;
    let turn = s * q.da / (f * f);
    let nu_r = (e_rho * w - Vec3::z() * u) * -turn;
    let nu_t = e_theta * (u / rho);
    let d1 = nu_r * c - nu_t * sn;
    let d2 = nu_r * sn + nu_t * c;
    Matrix3x2::from_columns(&[d1, d2])
}

/// `|Dν|²` of the ansatz at radius `rho`.
pub fn ansatz_normal_jacobian_sq(rho: f64, p: &ConeParams) -> f64 {
    let (a, b) = normal_derivative_sizes(rho, p);
    a * a + b * b
}

/// Signed Gauss curvature times area density, `K dA/dx`, at radius `rho`.
pub fn ansatz_curvature_density(rho: f64, p: &ConeParams) -> f64 {
    // ν·(∂ρν × ρ⁻¹∂θν) with both derivatives in the frame.
    let q = profile(rho, p);
    let s = sin_m0(p.m0);
    let f = normal_scale(q.a, p.m0);
    let turn = s * q.da / (f * f);
    let u = -q.a * s / f;
    turn * (-u) / rho
}

/// Curvature enclosed by the chart disc `B_rho`, by symmetry `2π(1 − dJ/dr)`.
pub fn ansatz_enclosed_curvature(rho: f64, p: &ConeParams) -> f64 {
    let q = profile(rho, p);
    let f = normal_scale(q.a, p.m0);
    2.0 * PI * (1.0 - (1.0 - (1.0 - p.m0) * q.a) / f)
}

/// Energy of the ansatz with the bending integral split into the annulus
/// `ρ ≥ h` and the cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzEnergy {
    pub breakdown: EnergyBreakdown,
    pub bending_annulus: f64,
    pub bending_cap: f64,
}

/// Membrane and bending energy of the ansatz by radial quadrature of the
/// closed form. `tol` is the absolute tolerance for each radial piece.
pub fn ansatz_energy(p: &ConeParams, tol: f64) -> AnsatzEnergy {
    let integrand = |r: f64| ansatz_normal_jacobian_sq(r, p) * r;
    let cap = adaptive_simpson(&integrand, 0.5 * p.h, p.h, tol);
    // In log radius the annulus integrand is the constant (1 − m0²).
    let annulus_log = adaptive_simpson(&|s: f64| { let r = s.exp(); integrand(r) * r }, p.h.ln(), 0.0, tol);
    let scale = 2.0 * PI * p.h * p.h;
    let bending_cap = scale * cap;
    let bending_annulus = scale * annulus_log;
    let bending = bending_cap + bending_annulus;
    AnsatzEnergy {
        breakdown: EnergyBreakdown::new(0.0, bending, FunctionalTag::SupMembrane),
        bending_annulus,
        bending_cap,
    }
}

pub fn sample_ansatz(grid: &PolarGrid, p: &ConeParams) -> Immersion {
    Immersion::from_fn(grid, |r, t| ansatz_map(r, t, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::c_star;

    fn params() -> ConeParams {
        ConeParams::new(0.5, 1.0 / 64.0).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff(0.25), (0.0, 0.0, 0.0));
        assert_eq!(cutoff(2.0), (1.0, 0.0, 0.0));
        let (a, b, c) = cutoff(0.75);
        assert!((a - 0.5).abs() < 1e-15 && (b - 3.75).abs() < 1e-14 && c.abs() < 1e-12);
    }

    #[test]
    fn cutoff_derivatives_match_differences() {
        let e = 1e-6;
        for i in 1..50 {
            let t = 0.5 + i as f64 / 100.0;
            let (p0, d0, dd0) = cutoff(t);
            let (pp, dp, _) = cutoff(t + e);
            let (pm, dm, _) = cutoff(t - e);
            assert!(((pp - pm) / (2.0 * e) - d0).abs() < 1e-7);
            assert!(((dp - dm) / (2.0 * e) - dd0).abs() < 1e-5);
            assert!(p0 >= 0.0 && p0 <= 1.0 && d0 <= CUTOFF_MAX_DPSI + 1e-12 && dd0.abs() <= CUTOFF_MAX_D2PSI + 1e-9);
        }
    }

    #[test]
    fn map_branches() {
        let p = params();
        let v = ansatz_map(0.4 * p.h, 0.7, &p);
        let r = 0.4 * p.h;
        assert!((v - Vec3::new(r * 0.7f64.cos(), r * 0.7f64.sin(), 0.0)).norm() < 1e-18);
        let v = ansatz_map(0.3, 0.0, &p);
        assert!((v - Vec3::new(0.15, 0.0, 0.3 * 3f64.sqrt() / 2.0)).norm() < 1e-15);
        assert_eq!(ansatz_map(0.0, 1.0, &p), Vec3::zeros());
    }

    #[test]
    fn metric_branches() {
        let p = params();
        assert_eq!(ansatz_metric(2.0 * p.h, &p), MetricComponents::new(1.0, 0.0, 0.25));
        assert_eq!(ansatz_metric(0.3 * p.h, &p), MetricComponents::new(1.0, 0.0, 1.0));
        let g = ansatz_metric(0.75 * p.h, &p);
        assert!((g.p3 - 0.5625).abs() < 1e-14);
        // |∂ρ ȳ|² by differencing the closed-form map.
        let r = 0.75 * p.h;
        let e = 1e-9;
        let d = (ansatz_map(r + e, 0.0, &p) - ansatz_map(r - e, 0.0, &p)) / (2.0 * e);
        assert!((g.p1 - d.norm_squared()).abs() < 1e-5, "{} {}", g.p1, d.norm_squared());
    }

    #[test]
    fn normal_jacobian_closed_form() {
        let p = params();
        for &r in &[0.55, 0.7, 0.9, 1.5, 10.0] {
            let rho = r * p.h;
            let th = 0.4;
            let j = ansatz_normal_jacobian(rho, th, &p);
            let e = 1e-7 * p.h;
            let x = Vec3::new(rho * th.cos(), rho * th.sin(), 0.0);
            let polar = |v: Vec3| (v.x.hypot(v.y), v.y.atan2(v.x));
            let at = |v: Vec3| { let (a, b) = polar(v); ansatz_normal(a, b, &p) };
            let d1 = (at(x + Vec3::x() * e) - at(x - Vec3::x() * e)) / (2.0 * e);
            let d2 = (at(x + Vec3::y() * e) - at(x - Vec3::y() * e)) / (2.0 * e);
            let scale = j.norm().max(1.0);
            assert!((j.column(0) - d1).norm() < 1e-5 * scale, "{r}");
            assert!((j.column(1) - d2).norm() < 1e-5 * scale, "{r}");
            assert!((j.norm_squared() - ansatz_normal_jacobian_sq(rho, &p)).abs() < 1e-9 * scale * scale);
        }
        let rho = 3.0 * p.h;
        assert!((ansatz_normal_jacobian_sq(rho, &p) * rho * rho - 0.75).abs() < 1e-12);
        assert_eq!(ansatz_normal_jacobian_sq(0.3 * p.h, &p), 0.0);
    }

    #[test]
    fn annulus_bending_is_exact() {
        for &m0 in &[0.5, 0.8] {
            for e in [6, 10, 14] {
                let h = 2f64.powi(-e);
                let p = ConeParams::new(m0, h).unwrap();
                let en = ansatz_energy(&p, 1e-12);
                let want = c_star(m0) * h * h * h.ln().abs();
                assert!((en.bending_annulus - want).abs() < 1e-10 * h * h);
                assert_eq!(en.breakdown.membrane, 0.0);
            }
        }
    }

    #[test]
    fn enclosed_curvature_matches_density() {
        let p = params();
        let c = adaptive_simpson(&|r: f64| 2.0 * PI * r * ansatz_curvature_density(r, &p), 0.5 * p.h, p.h, 1e-12);
        assert!((c - PI).abs() < 1e-9, "{c}");
        assert!((ansatz_enclosed_curvature(p.h, &p) - PI).abs() < 1e-12);
        let mid = 0.8 * p.h;
        let part = adaptive_simpson(&|r: f64| 2.0 * PI * r * ansatz_curvature_density(r, &p), 0.5 * p.h, mid, 1e-12);
        assert!((part - ansatz_enclosed_curvature(mid, &p)).abs() < 1e-8);
    }
}
