//! Closed-form test immersions and smooth random perturbations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Immersion;
use crate::grid::{PolarGrid, Vec3};
use crate::params::ConeParams;

pub fn flat_disc(grid: &PolarGrid) -> Immersion {
    Immersion::from_fn(grid, |r, t| Vec3::new(r * t.cos(), r * t.sin(), 0.0))
}

pub fn dilated_disc(grid: &PolarGrid, factor: f64) -> Immersion {
    Immersion::from_fn(grid, |r, t| Vec3::new(factor * r * t.cos(), factor * r * t.sin(), 0.0))
}

/// `ρ e_{m0}`: an isometric immersion of the cone metric away from the tip.
pub fn exact_cone(grid: &PolarGrid, m0: f64) -> Immersion {
    let s = (1.0 - m0 * m0).sqrt();
    Immersion::from_fn(grid, |r, t| Vec3::new(m0 * r * t.cos(), m0 * r * t.sin(), s * r))
}

fn sphere_point(polar: f64, azimuth: f64) -> Vec3 {
    Vec3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos())
}

/// Geodesic cap of the unit sphere around the north pole with angular radius
/// `radius`; chart radius `ρ` maps to polar angle `radius·ρ`. Its normal is the
/// position itself.
pub fn sphere_cap(grid: &PolarGrid, radius: f64) -> Immersion {
    Immersion::from_fn(grid, |r, t| sphere_point(radius * r, t))
}

/// Cone outside `B_h` with a rounded tip: the ansatz construction with
/// `t ψ(t) = 3t² − 3t³ + t⁴` on `[0, 1]`, so `a = (tψ)'` peaks at `5/4`
/// instead of folding the Gauss map.
pub fn rounded_cone(grid: &PolarGrid, p: &ConeParams) -> Immersion {
    let s = (1.0 - p.m0 * p.m0).sqrt();
    Immersion::from_fn(grid, |rho, theta| {
        let t = rho / p.h;
        let psi = if t >= 1.0 { 1.0 } else { t * (3.0 - 3.0 * t + t * t) };
        let radial = rho * (1.0 - (1.0 - p.m0) * psi);
        Vec3::new(radial * theta.cos(), radial * theta.sin(), rho * psi * s)
    })
}

/// The sphere cap precomposed with `θ ↦ 2θ`: covers its image twice.
pub fn double_wrap_cap(grid: &PolarGrid, radius: f64) -> Immersion {
    Immersion::from_fn(grid, |r, t| sphere_point(radius * r, 2.0 * t))
}

/// A band of the unit sphere, `x ↦ R_y(a x₁) (0, sin b x₂, cos b x₂)`. For
/// `a > π` the geodesic along `x₂ = 0` passes the south pole inside the disc,
/// where the chart stays regular as long as `b < π/2`.
pub fn sphere_band(grid: &PolarGrid, a: f64, b: f64) -> Immersion {
    Immersion::from_fn(grid, |r, t| {
        let (x1, x2) = (r * t.cos(), r * t.sin());
        let (u, v) = (a * x1, b * x2);
        Vec3::new(u.sin() * v.cos(), v.sin(), u.cos() * v.cos())
    })
}

/// One term `ρ^{l+2n} (A cos lθ + B sin lθ)`, a polynomial in `x` vanishing
/// to second order at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub l: u32,
    pub n: u32,
    pub cos_coeff: [f64; 3],
    pub sin_coeff: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierPerturbation {
    pub amplitude: f64,
    pub terms: Vec<FourierTerm>,
}

impl FourierPerturbation {
    /// Random coefficients in `[-1, 1]` for every `(l, n)` with `l ≤ max_l`,
    /// `n ≤ 1` and `l + 2n ≥ 2`.
    pub fn random(rng: &mut impl Rng, amplitude: f64, max_l: u32) -> Self {
        let mut terms = Vec::new();
        for l in 0..=max_l {
            for n in 0..=1 {
                if l + 2 * n < 2 {
                    continue;
                }
                let mut c = [0.0; 3];
                let mut s = [0.0; 3];
                for d in 0..3 {
                    c[d] = rng.gen_range(-1.0..=1.0);
                    s[d] = if l == 0 { 0.0 } else { rng.gen_range(-1.0..=1.0) };
                }
                terms.push(FourierTerm { l, n, cos_coeff: c, sin_coeff: s });
            }
        }
        Self { amplitude, terms }
    }

    pub fn displacement(&self, rho: f64, theta: f64) -> Vec3 {
        let mut out = Vec3::zeros();
        for t in &self.terms {
            let radial = rho.powi((t.l + 2 * t.n) as i32);
            let (c, s) = ((t.l as f64 * theta).cos(), (t.l as f64 * theta).sin());
            out += (Vec3::from(t.cos_coeff) * c + Vec3::from(t.sin_coeff) * s) * radial;
        }
        out * self.amplitude
    }

    pub fn apply(&self, imm: &Immersion) -> Immersion {
        let g = &imm.grid;
        let mut positions = imm.positions.clone();
        for (k, pos) in positions.iter_mut().enumerate() {
            let (i, j) = g.split(k);
            *pos += self.displacement(g.rho[i], g.theta[j]);
        }
        Immersion { grid: g.clone(), positions, center: imm.center }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perturbation_vanishes_to_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = FourierPerturbation::random(&mut rng, 1.0, 3);
        assert!(p.terms.iter().all(|t| t.l + 2 * t.n >= 2));
        for th in [0.0, 1.0, 4.0] {
            let d = p.displacement(1e-4, th).norm();
            assert!(d < 1e-7, "{d}");
        }
    }

    #[test]
    fn perturbation_is_smooth_across_origin() {
        // Each term must be a polynomial in (x1, x2): check x ↦ -x symmetry parity.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = FourierPerturbation::random(&mut rng, 1.0, 3);
        for t in &p.terms {
            assert_eq!((t.l + 2 * t.n) % 2, t.l % 2);
        }
    }

    #[test]
    fn sphere_band_stays_on_sphere() {
        let g = PolarGrid::new(20, 16, 0.01).unwrap();
        let imm = sphere_band(&g, 3.5, 1.0);
        assert!(imm.positions.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        assert!(imm.geometry().is_ok());
    }
}
