//! Log-polar discretization of the unit disc and the derivative operators on it.
//!
//! Radii are geometrically spaced in `(rho_min, 1]`, angles are uniform on the
//! circle. Node `(i, j)` (radius index `i`, angle index `j`) lives at flat
//! index `i * n_theta + j`. The origin is not a grid node.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative slack used when classifying nodes against a radius threshold.
pub const RADIUS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_rho: usize,
    pub n_theta: usize,
    pub rho_min: f64,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
}

impl PolarGrid {
    pub fn new(n_rho: usize, n_theta: usize, rho_min: f64) -> Result<Self> {
        if n_rho < 5 {
            return Err(Error::InvalidGrid(format!("n_rho = {n_rho} < 5")));
        }
        if n_theta < 16 {
            return Err(Error::InvalidGrid(format!("n_theta = {n_theta} < 16")));
        }
        if !(rho_min > 0.0 && rho_min < 1.0) {
            return Err(Error::InvalidGrid(format!("rho_min = {rho_min} must lie in (0, 1)")));
        }
        let log_min = rho_min.ln();
        let last = (n_rho - 1) as f64;
        let rho = (0..n_rho)
            .map(|i| {
                if i == n_rho - 1 {
                    1.0
                } else {
                    (log_min * (1.0 - i as f64 / last)).exp()
                }
            })
            .collect();
        let dtheta = 2.0 * PI / n_theta as f64;
        let theta = (0..n_theta).map(|j| j as f64 * dtheta).collect();
        Ok(Self { n_rho, n_theta, rho_min, rho, theta })
    }

    /// Grid with a prescribed number of radial nodes per decade of radius.
    pub fn with_density(rho_min: f64, nodes_per_decade: f64, n_theta: usize) -> Result<Self> {
        if !(nodes_per_decade > 0.0) {
            return Err(Error::InvalidGrid("nodes_per_decade must be positive".into()));
        }
        let decades = -rho_min.log10();
        let n_rho = (decades * nodes_per_decade).ceil() as usize + 1;
        Self::new(n_rho.max(5), n_theta, rho_min)
    }

    pub fn len(&self) -> usize {
        self.n_rho * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.n_theta, k % self.n_theta)
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// Uniform spacing in `ln rho`.
    pub fn dlog(&self) -> f64 {
        -self.rho_min.ln() / (self.n_rho - 1) as f64
    }

    /// Checks that the grid resolves the cap `B_h`: `rho_min <= h/4` and at
    /// least four radii in `[h, 2h]`.
    pub fn check_resolves(&self, h: f64) -> Result<()> {
        if self.rho_min > h / 4.0 * (1.0 + RADIUS_EPS) {
            return Err(Error::InvalidGrid(format!(
                "rho_min = {} exceeds h/4 = {}",
                self.rho_min,
                h / 4.0
            )));
        }
        let count = self
            .rho
            .iter()
            .filter(|&&r| r >= h * (1.0 - RADIUS_EPS) && r <= 2.0 * h * (1.0 + RADIUS_EPS))
            .count();
        if count < 4 {
            return Err(Error::InvalidGrid(format!(
                "only {count} radial samples in [h, 2h] for h = {h}"
            )));
        }
        Ok(())
    }

    /// First radius index with `rho >= r` (within [`RADIUS_EPS`]).
    pub fn first_ring_at_or_above(&self, r: f64) -> usize {
        self.rho
            .iter()
            .position(|&x| x >= r * (1.0 - RADIUS_EPS))
            .unwrap_or(self.n_rho)
    }

    /// Index of the ring closest to `r` in log radius.
    pub fn nearest_ring(&self, r: f64) -> usize {
        let s = r.max(self.rho_min).ln();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &x) in self.rho.iter().enumerate() {
            let d = (x.ln() - s).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Radial quadrature weights for `∫ f rho drho` (trapezoidal in `ln rho`).
    pub fn radial_weights(&self) -> Vec<f64> {
        let ds = self.dlog();
        self.rho
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let end = i == 0 || i == self.n_rho - 1;
                ds * r * r * if end { 0.5 } else { 1.0 }
            })
            .collect()
    }

    /// Area weight of every node for `∫ f dx` over the annulus
    /// `rho_min <= rho <= 1`.
    pub fn node_weights(&self) -> Vec<f64> {
        let dth = self.dtheta();
        let rw = self.radial_weights();
        let mut w = Vec::with_capacity(self.len());
        for wi in rw {
            w.extend(std::iter::repeat(wi * dth).take(self.n_theta));
        }
        w
    }

    /// Weight assigned to each innermost-ring node for the polar cap `B_rho_min`.
    pub fn cap_weight(&self) -> f64 {
        PI * self.rho_min * self.rho_min / self.n_theta as f64
    }
}

/// Number of radii in each radial derivative stencil.
pub const STENCIL: usize = 5;

/// First-derivative weights at `x` for arbitrary distinct `nodes`
/// (Fornberg's recursion).
pub fn derivative_weights(x: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    // c[j][k]: weight of node j for the k-th derivative, k in {0, 1}.
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Three-point derivative weights at `x` for nodes `x0, x1, x2`.
pub fn lagrange_derivative_weights(x: f64, x0: f64, x1: f64, x2: f64) -> [f64; 3] {
    [
        ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2)),
        ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2)),
        ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1)),
    ]
}

/// Radial derivative as [`STENCIL`]-point stencils that reach outward: node
/// `i` uses radii `i..i+STENCIL`; the outermost rings fall back to the last
/// `STENCIL` radii. Data inside a radius never influences derivatives outside it.
#[derive(Debug, Clone)]
pub struct RadialStencil {
    pub start: Vec<usize>,
    pub weights: Vec<[f64; STENCIL]>,
}

impl RadialStencil {
    pub fn new(x: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= STENCIL, "need at least {STENCIL} radii");
        let mut start = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let s = i.min(n - STENCIL);
            let w = derivative_weights(x[i], &x[s..s + STENCIL]);
            let mut arr = [0.0; STENCIL];
            arr.copy_from_slice(&w);
            start.push(s);
            weights.push(arr);
        }
        Self { start, weights }
    }

    /// Derivative of a sampled 1-d function.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..f.len())
            .map(|i| {
                let s = self.start[i];
                (0..STENCIL).map(|m| self.weights[i][m] * f[s + m]).sum()
            })
            .collect()
    }
}

/// Spectral derivative `∂_theta` on a ring of `n` uniform angles.
#[derive(Clone)]
pub struct AngularDerivative {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    factors: Vec<Complex<f64>>,
}

impl std::fmt::Debug for AngularDerivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularDerivative").field("n", &self.n).finish()
    }
}

impl AngularDerivative {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scale = 1.0 / n as f64;
        let factors = (0..n)
            .map(|k| {
                let freq = if 2 * k < n {
                    k as f64
                } else if 2 * k == n {
                    0.0
                } else {
                    k as f64 - n as f64
                };
                Complex::new(0.0, freq * scale)
            })
            .collect();
        Self { n, fwd, inv, factors }
    }

    /// Differentiates two real periodic sequences at once (packed as real and
    /// imaginary parts).
    pub fn apply_pair(&self, a: &mut [f64], b: &mut [f64]) {
        debug_assert_eq!(a.len(), self.n);
        let mut buf: Vec<Complex<f64>> =
            a.iter().zip(b.iter()).map(|(&x, &y)| Complex::new(x, y)).collect();
        self.fwd.process(&mut buf);
        for (c, f) in buf.iter_mut().zip(&self.factors) {
            *c *= *f;
        }
        self.inv.process(&mut buf);
        for ((x, y), c) in a.iter_mut().zip(b.iter_mut()).zip(&buf) {
            *x = c.re;
            *y = c.im;
        }
    }

    pub fn apply(&self, a: &mut [f64]) {
        let mut zero = vec![0.0; self.n];
        self.apply_pair(a, &mut zero);
    }

    /// Applies `∂_theta` to a ring of 3-vectors.
    pub fn apply_vec3(&self, ring: &[Vec3]) -> Vec<Vec3> {
        let n = self.n;
        let mut x: Vec<f64> = ring.iter().map(|v| v.x).collect();
        let mut y: Vec<f64> = ring.iter().map(|v| v.y).collect();
        let mut z: Vec<f64> = ring.iter().map(|v| v.z).collect();
        self.apply_pair(&mut x, &mut y);
        self.apply(&mut z);
        (0..n).map(|j| Vec3::new(x[j], y[j], z[j])).collect()
    }
}

/// Radial and angular derivative operators for one grid.
#[derive(Debug, Clone)]
pub struct DiffOps {
    pub radial: RadialStencil,
    pub angular: AngularDerivative,
    n_rho: usize,
    n_theta: usize,
}

impl DiffOps {
    pub fn new(grid: &PolarGrid) -> Self {
        Self {
            radial: RadialStencil::new(&grid.rho),
            angular: AngularDerivative::new(grid.n_theta),
            n_rho: grid.n_rho,
            n_theta: grid.n_theta,
        }
    }

    /// `∂_rho` of a node field.
    pub fn d_rho<T>(&self, f: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let nt = self.n_theta;
        let mut out = Vec::with_capacity(f.len());
        for i in 0..self.n_rho {
            let s = self.radial.start[i];
            let w = self.radial.weights[i];
            for j in 0..nt {
                let mut acc = f[s * nt + j] * w[0];
                for m in 1..STENCIL {
                    acc = acc + f[(s + m) * nt + j] * w[m];
                }
                out.push(acc);
            }
        }
        out
    }

    /// Transpose of [`DiffOps::d_rho`], accumulated into `acc`.
    pub fn d_rho_adjoint_add(&self, g: &[Vec3], acc: &mut [Vec3]) {
        let nt = self.n_theta;
        for i in 0..self.n_rho {
            let s = self.radial.start[i];
            let w = self.radial.weights[i];
            for j in 0..nt {
                let gij = g[i * nt + j];
                for m in 0..STENCIL {
                    acc[(s + m) * nt + j] += gij * w[m];
                }
            }
        }
    }

    /// `∂_theta` of a scalar node field.
    pub fn d_theta_scalar(&self, f: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        let mut out = f.to_vec();
        let mut rings = out.chunks_mut(nt);
        loop {
            match (rings.next(), rings.next()) {
                (Some(a), Some(b)) => self.angular.apply_pair(a, b),
                (Some(a), None) => {
                    self.angular.apply(a);
                    break;
                }
                _ => break,
            }
        }
        out
    }

    /// `∂_theta` of a vector node field.
    pub fn d_theta_vec3(&self, f: &[Vec3]) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(f.len());
        for ring in f.chunks(self.n_theta) {
            out.extend(self.angular.apply_vec3(ring));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radii_are_log_spaced() {
        let g = PolarGrid::new(33, 32, 1e-3).unwrap();
        assert_eq!(g.rho[32], 1.0);
        assert!((g.rho[0] - 1e-3).abs() < 1e-15);
        let ds = g.dlog();
        for i in 1..g.n_rho {
            assert!(g.rho[i] > g.rho[i - 1]);
            assert!(((g.rho[i] / g.rho[i - 1]).ln() - ds).abs() < 1e-12);
        }
        assert!((g.dtheta() * 32.0 - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn grid_invariants_are_enforced() {
        assert!(PolarGrid::new(10, 8, 0.01).is_err());
        assert!(PolarGrid::new(10, 16, 0.0).is_err());
        assert!(PolarGrid::new(3, 16, 0.1).is_err());
    }

    #[test]
    fn resolves_cap() {
        let h = 1.0 / 64.0;
        let g = PolarGrid::new(64, 16, h / 8.0).unwrap();
        assert!(g.check_resolves(h).is_ok());
        let coarse = PolarGrid::new(8, 16, h / 8.0).unwrap();
        assert!(coarse.check_resolves(h).is_err());
        let wide = PolarGrid::new(64, 16, h / 2.0).unwrap();
        assert!(wide.check_resolves(h).is_err());
    }

    #[test]
    fn fornberg_matches_three_point_formula() {
        let w = derivative_weights(0.3, &[0.1, 0.4, 0.9]);
        let l = lagrange_derivative_weights(0.3, 0.1, 0.4, 0.9);
        for m in 0..3 {
            assert!((w[m] - l[m]).abs() < 1e-12);
        }
        let w = derivative_weights(1.0, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let want = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25];
        for m in 0..5 {
            assert!((w[m] - want[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_stencil_exact_on_quartics() {
        let g = PolarGrid::new(20, 16, 0.01).unwrap();
        let ops = DiffOps::new(&g);
        let f: Vec<f64> = g.rho.iter().flat_map(|&r| std::iter::repeat(r.powi(4) - r).take(16)).collect();
        let df = ops.d_rho(&f);
        for k in 0..g.len() {
            let r = g.rho[g.split(k).0];
            assert!((df[k] - (4.0 * r.powi(3) - 1.0)).abs() < 1e-8, "{k}");
        }
    }

    #[test]
    fn radial_stencil_exact_on_quadratics() {
        let g = PolarGrid::new(20, 16, 0.01).unwrap();
        let ops = DiffOps::new(&g);
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let r = g.rho[g.split(k).0];
                3.0 * r * r - 2.0 * r + 1.0
            })
            .collect();
        let df = ops.d_rho(&f);
        for k in 0..g.len() {
            let r = g.rho[g.split(k).0];
            assert!((df[k] - (6.0 * r - 2.0)).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn spectral_derivative_of_trig_polynomial() {
        let n = 32;
        let d = AngularDerivative::new(n);
        let th: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let mut a: Vec<f64> = th.iter().map(|t| (3.0 * t).sin() + 0.5 * t.cos()).collect();
        let mut b: Vec<f64> = th.iter().map(|t| (7.0 * t).cos()).collect();
        d.apply_pair(&mut a, &mut b);
        for j in 0..n {
            let t = th[j];
            assert!((a[j] - (3.0 * (3.0 * t).cos() - 0.5 * t.sin())).abs() < 1e-12);
            assert!((b[j] + 7.0 * (7.0 * t).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_is_skew() {
        // <u, D v> = -<D u, v> so the adjoint of D is -D.
        let n = 24;
        let d = AngularDerivative::new(n);
        let u: Vec<f64> = (0..n).map(|j| ((j * 7 + 3) % 11) as f64 - 5.0).collect();
        let v: Vec<f64> = (0..n).map(|j| ((j * 5 + 1) % 13) as f64 * 0.3).collect();
        let (mut du, mut dv) = (u.clone(), v.clone());
        d.apply_pair(&mut du, &mut dv);
        let lhs: f64 = u.iter().zip(&dv).map(|(a, b)| a * b).sum();
        let rhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((lhs + rhs).abs() < 1e-10);
    }

    #[test]
    fn quadrature_integrates_inverse_square_exactly() {
        // ∫_{rho_min}^1 rho^{-2} rho drho = |ln rho_min|.
        let g = PolarGrid::new(40, 16, 1e-4).unwrap();
        let s: f64 = g.radial_weights().iter().zip(&g.rho).map(|(w, r)| w / (r * r)).sum();
        assert!((s - 1e-4f64.ln().abs()).abs() < 1e-12);
        let fine = PolarGrid::new(400, 16, 1e-4).unwrap();
        let area: f64 = fine.node_weights().iter().sum::<f64>() + fine.cap_weight() * 16.0;
        assert!((area - PI).abs() < 1e-3, "{area}");
    }
}
