//! Immersions of the disc, their induced metric, normal and curvature.

use std::path::Path;

use nalgebra::{Matrix2, Matrix3x2, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiffOps, PolarGrid, Vec3};
use crate::params::ConeParams;

/// Symmetric form `p1 dρ² + 2 p2 ρ dρ dθ + p3 ρ² dθ²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricComponents {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl MetricComponents {
    pub fn new(p1: f64, p2: f64, p3: f64) -> Self {
        Self { p1, p2, p3 }
    }

    pub fn det(&self) -> f64 {
        self.p1 * self.p3 - self.p2 * self.p2
    }

    pub fn is_positive_definite(&self) -> bool {
        self.p1 > 0.0 && self.p3 > 0.0 && self.det() > 0.0
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.p1, self.p2, self.p2, self.p3)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.p1 - other.p1, self.p2 - other.p2, self.p3 - other.p3)
    }
}

pub fn metric_norm_sq(p: &MetricComponents) -> f64 {
    p.p1 * p.p1 + 2.0 * p.p2 * p.p2 + p.p3 * p.p3
}

/// The cone metric `dρ² + m0² ρ² dθ²`.
pub fn reference_metric(params: &ConeParams) -> MetricComponents {
    MetricComponents::new(1.0, 0.0, params.m0 * params.m0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Immersion {
    pub grid: PolarGrid,
    pub positions: Vec<Vec3>,
    pub center: Vec3,
}

#[derive(Serialize, Deserialize)]
struct ImmersionFile {
    n_rho: usize,
    n_theta: usize,
    rho_min: f64,
    center: [f64; 3],
    /// Row-major in (rho index, theta index), three coordinates per node.
    positions: Vec<f64>,
}

impl Immersion {
    pub fn new(grid: PolarGrid, positions: Vec<Vec3>, center: Vec3) -> Result<Self> {
        if positions.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} positions for a grid of {} nodes",
                positions.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, positions, center })
    }

    /// Samples `f(rho, theta)` at every node and at the origin.
    pub fn from_fn(grid: &PolarGrid, f: impl Fn(f64, f64) -> Vec3) -> Self {
        let mut positions = Vec::with_capacity(grid.len());
        for &r in &grid.rho {
            for &t in &grid.theta {
                positions.push(f(r, t));
            }
        }
        Self { grid: grid.clone(), positions, center: f(0.0, 0.0) }
    }

    pub fn ring(&self, i: usize) -> &[Vec3] {
        let nt = self.grid.n_theta;
        &self.positions[i * nt..(i + 1) * nt]
    }

    /// Applies `x ↦ R x + t` to every node.
    pub fn rigid_motion(&self, rot: &Rotation3<f64>, shift: &Vec3) -> Self {
        Self {
            grid: self.grid.clone(),
            positions: self.positions.iter().map(|p| rot * p + shift).collect(),
            center: rot * self.center + shift,
        }
    }

    /// Center position extrapolated from the two innermost ring means
    /// (even in rho for a smooth map, so the linear term drops out).
    pub fn extrapolated_center(&self) -> Vec3 {
        let n = self.grid.n_theta as f64;
        let m0: Vec3 = self.ring(0).iter().sum::<Vec3>() / n;
        let m1: Vec3 = self.ring(1).iter().sum::<Vec3>() / n;
        let (r0, r1) = (self.grid.rho[0], self.grid.rho[1]);
        (m0 * (r1 * r1) - m1 * (r0 * r0)) / (r1 * r1 - r0 * r0)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = ImmersionFile {
            n_rho: self.grid.n_rho,
            n_theta: self.grid.n_theta,
            rho_min: self.grid.rho_min,
            center: [self.center.x, self.center.y, self.center.z],
            positions: self.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ImmersionFile = serde_json::from_str(s)?;
        let grid = PolarGrid::new(file.n_rho, file.n_theta, file.rho_min)?;
        if file.positions.len() != 3 * grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} coordinates, found {}",
                3 * grid.len(),
                file.positions.len()
            )));
        }
        let positions = file.positions.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let [cx, cy, cz] = file.center;
        Self::new(grid, positions, Vec3::new(cx, cy, cz))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self)
    }
}

/// Derivative fields of an immersion in the orthonormal polar frame
/// `(∂ρ, ρ⁻¹∂θ)` of the flat disc.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub grid: PolarGrid,
    pub ops: DiffOps,
    /// `∂ρ y`
    pub y_r: Vec<Vec3>,
    /// `ρ⁻¹ ∂θ y`
    pub y_t: Vec<Vec3>,
    pub metric: Vec<MetricComponents>,
    pub normal: Vec<Vec3>,
    pub nu_r: Vec<Vec3>,
    pub nu_t: Vec<Vec3>,
}

impl Geometry {
    pub fn new(imm: &Immersion) -> Result<Self> {
        let grid = imm.grid.clone();
        let ops = DiffOps::new(&grid);
        let y_r = ops.d_rho(&imm.positions);
        let mut y_t = ops.d_theta_vec3(&imm.positions);
        scale_by_inverse_rho(&grid, &mut y_t);

        let mut metric = Vec::with_capacity(grid.len());
        let mut normal = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let (a, b) = (y_r[k], y_t[k]);
            let p = MetricComponents::new(a.dot(&a), a.dot(&b), b.dot(&b));
            let n = a.cross(&b);
            let len = n.norm();
            let scale = a.norm() * b.norm();
            if !p.is_positive_definite() || !(len > 1e-14 * scale.max(1e-300)) {
                let (i, j) = grid.split(k);
                return Err(Error::Degenerate { node: k, i_rho: i, i_theta: j, what: "rank-deficient Jacobian" });
            }
            metric.push(p);
            normal.push(n / len);
        }
        let nu_r = ops.d_rho(&normal);
        let mut nu_t = ops.d_theta_vec3(&normal);
        scale_by_inverse_rho(&grid, &mut nu_t);
        Ok(Self { grid, ops, y_r, y_t, metric, normal, nu_r, nu_t })
    }

    /// `Dν` in Cartesian reference coordinates.
    pub fn normal_jacobian(&self) -> Vec<Matrix3x2<f64>> {
        (0..self.grid.len())
            .map(|k| {
                let th = self.grid.theta[k % self.grid.n_theta];
                let (c, s) = (th.cos(), th.sin());
                // ∂x1 = c ∂ρ − s ρ⁻¹∂θ, ∂x2 = s ∂ρ + c ρ⁻¹∂θ
                let d1 = self.nu_r[k] * c - self.nu_t[k] * s;
                let d2 = self.nu_r[k] * s + self.nu_t[k] * c;
                Matrix3x2::from_columns(&[d1, d2])
            })
            .collect()
    }

    /// `|Dν|²` per node.
    pub fn normal_jacobian_sq(&self) -> Vec<f64> {
        self.nu_r.iter().zip(&self.nu_t).map(|(a, b)| a.norm_squared() + b.norm_squared()).collect()
    }

    /// Area density `√det(Dyᵀ Dy)` with respect to `dx`.
    pub fn area_density(&self) -> Vec<f64> {
        self.metric.iter().map(|p| p.det().sqrt()).collect()
    }

    /// Gauss curvature `det(Dνᵀ Dy) / det(Dyᵀ Dy)`.
    pub fn gauss_curvature(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|k| {
                let (a, b) = (self.y_r[k], self.y_t[k]);
                let (na, nb) = (self.nu_r[k], self.nu_t[k]);
                let num = na.dot(&a) * nb.dot(&b) - na.dot(&b) * nb.dot(&a);
                num / self.metric[k].det()
            })
            .collect()
    }

    /// `K dA/dx`, the signed area density of the Gauss map.
    pub fn curvature_density(&self) -> Vec<f64> {
        self.gauss_curvature().iter().zip(self.area_density()).map(|(k, a)| k * a).collect()
    }

    /// Signed `∫ K dA` over the whole disc (cap included through the innermost ring).
    pub fn total_curvature(&self) -> f64 {
        let dens = self.curvature_density();
        integrate_over_disc(&self.grid, &dens)
    }

    /// Normal at the origin from the first Fourier modes of the innermost ring.
    pub fn center_frame(imm: &Immersion) -> (Vec3, Vec3, Vec3) {
        let g = &imm.grid;
        let n = g.n_theta as f64;
        let mut e1 = Vec3::zeros();
        let mut e2 = Vec3::zeros();
        for (j, p) in imm.ring(0).iter().enumerate() {
            let th = g.theta[j];
            e1 += p * th.cos();
            e2 += p * th.sin();
        }
        e1 *= 2.0 / (n * g.rho[0]);
        e2 *= 2.0 / (n * g.rho[0]);
        let nrm = e1.cross(&e2).normalize();
        let u = e1.normalize();
        let v = nrm.cross(&u);
        (u, v, nrm)
    }
}

fn scale_by_inverse_rho(grid: &PolarGrid, f: &mut [Vec3]) {
    let nt = grid.n_theta;
    for (i, ring) in f.chunks_mut(nt).enumerate() {
        let inv = 1.0 / grid.rho[i];
        for v in ring {
            *v *= inv;
        }
    }
}

/// `∫ f dx` over `B₁` with the cap `B_rho_min` carried by the innermost ring.
pub fn integrate_over_disc(grid: &PolarGrid, f: &[f64]) -> f64 {
    let w = grid.node_weights();
    let cap = grid.cap_weight();
    let nt = grid.n_theta;
    let mut sum = 0.0;
    for i in 0..grid.n_rho {
        let mut ring = 0.0;
        for j in 0..nt {
            let k = i * nt + j;
            ring += w[k] * f[k];
            if i == 0 {
                ring += cap * f[k];
            }
        }
        sum += ring;
    }
    sum
}
