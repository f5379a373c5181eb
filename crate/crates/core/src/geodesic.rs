//! Geodesic polar coordinates around the center of the disc: geodesic
//! shooting on the interpolated induced metric with a co-integrated Jacobi
//! field, the resulting `(r, φ)` fields, the transition matrix `Γ` and the
//! factor `G` with `g = dr² + G² r² dφ²`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Immersion, MetricComponents};
use crate::grid::{AngularDerivative, DiffOps, PolarGrid, RADIUS_EPS};
use crate::interp::{quintic_hermite, FieldInterp, Sample, TrigInterp};
use crate::params::ConeParams;

/// Connection coefficients `c[k][i][j] = Γ^k_ij` in the chart `(ρ, θ)`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// Induced metric and Gauss curvature, interpolated over the chart.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: PolarGrid,
    interp: FieldInterp,
}

/// Chart metric `g_ij` with its first partials and the curvature at a point.
#[derive(Debug, Clone, Copy)]
pub struct LocalMetric {
    pub g: [[f64; 2]; 2],
    /// `dg[l][i][j] = ∂_l g_ij`
    pub dg: [[[f64; 2]; 2]; 2],
    pub components: MetricComponents,
    pub curvature: f64,
    /// `∂ρ p3`, used by the launch protocol.
    pub dp3_drho: f64,
}

impl LocalMetric {
    pub fn christoffel(&self) -> Christoffel {
        let g = self.g;
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        let mut first = [[[0.0; 2]; 2]; 2]; // Γ_{l,ij}
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    first[l][i][j] = 0.5 * (self.dg[i][l][j] + self.dg[j][l][i] - self.dg[l][i][j]);
                }
            }
        }
        let mut c = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    c[k][i][j] = inv[k][0] * first[0][i][j] + inv[k][1] * first[1][i][j];
                }
            }
        }
        c
    }

    pub fn norm_sq(&self, v: [f64; 2]) -> f64 {
        self.g[0][0] * v[0] * v[0] + 2.0 * self.g[0][1] * v[0] * v[1] + self.g[1][1] * v[1] * v[1]
    }
}

impl MetricField {
    pub fn new(grid: &PolarGrid, metric: &[MetricComponents], curvature: &[f64]) -> Result<Self> {
        for (k, p) in metric.iter().enumerate() {
            if !p.is_positive_definite() {
                let (i, j) = grid.split(k);
                return Err(Error::Degenerate { node: k, i_rho: i, i_theta: j, what: "metric not positive definite" });
            }
        }
        let p1: Vec<f64> = metric.iter().map(|p| p.p1).collect();
        let p2: Vec<f64> = metric.iter().map(|p| p.p2).collect();
        let p3: Vec<f64> = metric.iter().map(|p| p.p3).collect();
        let interp = FieldInterp::new(grid, &[&p1, &p2, &p3, curvature]);
        Ok(Self { grid: grid.clone(), interp })
    }

    pub fn from_geometry(geo: &Geometry) -> Result<Self> {
        Self::new(&geo.grid, &geo.metric, &geo.gauss_curvature())
    }

    pub fn local(&self, rho: f64, theta: f64) -> LocalMetric {
        let mut s = [Sample::default(); 4];
        self.interp.eval(rho.ln(), theta, &mut s);
        let [p1, p2, p3, k] = s;
        // ∂ρ = ρ⁻¹ ∂s
        let (p1r, p2r, p3r) = (p1.fs / rho, p2.fs / rho, p3.fs / rho);
        let g = [[p1.f, rho * p2.f], [rho * p2.f, rho * rho * p3.f]];
        let d_rho = [[p1r, p2.f + rho * p2r], [p2.f + rho * p2r, 2.0 * rho * p3.f + rho * rho * p3r]];
        let d_theta = [[p1.ft, rho * p2.ft], [rho * p2.ft, rho * rho * p3.ft]];
        LocalMetric {
            g,
            dg: [d_rho, d_theta],
            components: MetricComponents::new(p1.f, p2.f, p3.f),
            curvature: k.f,
            dp3_drho: p3r,
        }
    }
}

/// Christoffel symbols at every grid node.
pub fn christoffel_field(field: &MetricField) -> Vec<Christoffel> {
    let g = &field.grid;
    (0..g.len())
        .map(|k| {
            let (i, j) = g.split(k);
            field.local(g.rho[i], g.theta[j]).christoffel()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ExitedChart,
    LeftInward,
    ConjugatePoint,
    StepFailure,
    ReachedMaxLength,
}

/// One accepted integrator state with its derivative, enough for quintic
/// dense output between samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub r: f64,
    pub rho: f64,
    pub theta: f64,
    pub v_rho: f64,
    pub v_theta: f64,
    pub j: f64,
    pub dj: f64,
    pub a_rho: f64,
    pub a_theta: f64,
    pub a_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub r: f64,
    pub theta: f64,
    pub j: f64,
    pub v_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicRay {
    /// Launch angle in the tangent plane at the center.
    pub phi0: f64,
    /// Chart angle of the launch node.
    pub theta0: f64,
    pub samples: Vec<RaySample>,
    pub termination: Termination,
    pub conjugate_r: Option<f64>,
    /// Largest `|g(v, v) − 1|` over accepted steps.
    pub max_speed_error: f64,
}

/// Initial data of a ray.
#[derive(Debug, Clone, Copy)]
pub struct Launch {
    pub phi0: f64,
    pub r: f64,
    pub rho: f64,
    pub theta: f64,
    pub v_rho: f64,
    pub v_theta: f64,
    pub j: f64,
    pub dj: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    /// Error allowance per unit of `ln`-arclength.
    pub tolerance: f64,
    pub r_max: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, r_max: 10.0 }
    }
}

type State = [f64; 6];

fn rhs(field: &MetricField, y: &State) -> State {
    let m = field.local(y[0], y[1]);
    let c = m.christoffel();
    let v = [y[2], y[3]];
    let mut a = [0.0; 2];
    for (k, ak) in a.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += c[k][i][j] * v[i] * v[j];
            }
        }
        *ak = -s;
    }
    [y[2], y[3], a[0], a[1], y[5], -m.curvature * y[4]]
}

fn axpy(y: &State, h: f64, k: &State) -> State {
    let mut o = *y;
    for i in 0..6 {
        o[i] += h * k[i];
    }
    o
}

fn rk4(field: &MetricField, y: &State, h: f64) -> State {
    let k1 = rhs(field, y);
    let k2 = rhs(field, &axpy(y, 0.5 * h, &k1));
    let k3 = rhs(field, &axpy(y, 0.5 * h, &k2));
    let k4 = rhs(field, &axpy(y, h, &k3));
    let mut o = *y;
    for i in 0..6 {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

fn sample_of(field: &MetricField, r: f64, y: &State) -> RaySample {
    let d = rhs(field, y);
    RaySample {
        r,
        rho: y[0],
        theta: y[1],
        v_rho: y[2],
        v_theta: y[3],
        j: y[4],
        dj: y[5],
        a_rho: d[2],
        a_theta: d[3],
        a_j: d[5],
    }
}

/// Integrates one geodesic with its Jacobi field until it leaves the chart,
/// hits a conjugate point, or reaches `r_max`.
pub fn shoot_geodesic(field: &MetricField, launch: &Launch, opts: &ShootOptions) -> GeodesicRay {
    let rho_min = field.grid.rho_min;
    let mut y: State = [launch.rho, launch.theta, launch.v_rho, launch.v_theta, launch.j, launch.dj];
    let mut r = launch.r;
    let mut samples = vec![sample_of(field, r, &y)];
    let mut step = 0.05 * launch.rho;
    let mut max_speed_error: f64 = 0.0;
    let mut speed = field.local(y[0], y[1]).norm_sq([y[2], y[3]]);
    let mut conjugate_r = None;
    let termination = loop {
        if r >= opts.r_max {
            break Termination::ReachedMaxLength;
        }
        let rho = y[0];
        let h = step.min(opts.r_max - r).min(0.5 * rho);
        if h < 1e-13 * rho.max(1e-300) {
            break Termination::StepFailure;
        }
        let big = rk4(field, &y, h);
        let mid = rk4(field, &y, 0.5 * h);
        let half = rk4(field, &mid, 0.5 * h);
        let scale = [rho, 1.0, 1.0, 1.0 / rho, rho.max(y[4].abs()), 1.0];
        let mut err: f64 = 0.0;
        for i in 0..6 {
            err = err.max((half[i] - big[i]).abs() / 15.0 / scale[i]);
        }
        if !err.is_finite() || !half.iter().all(|v| v.is_finite()) {
            step = 0.25 * h;
            continue;
        }
        let allowed = opts.tolerance * h / rho;
        if err > allowed {
            step = h * (0.9 * (allowed / err).powf(0.25)).max(0.2);
            continue;
        }
        let mut next = half;
        for i in 0..6 {
            next[i] += (half[i] - big[i]) / 15.0;
        }
        if next[0] <= 0.0 {
            break Termination::StepFailure;
        }
        // Step doubling misses error across kinks of the interpolated metric;
        // drift of the conserved speed catches it.
        let drift = (field.local(next[0], next[1]).norm_sq([next[2], next[3]]) - speed).abs();
        if drift > allowed.max(1e-12) && h > 1e-6 * rho {
            step = 0.5 * h;
            continue;
        }
        step = if err == 0.0 { 2.0 * h } else { h * (0.9 * (allowed / err).powf(0.25)).clamp(0.2, 2.0) };

        if y[4] > 0.0 && next[4] <= 0.0 {
            // Bisect on single RK4 substeps for the zero of J.
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-9 {
                let m = 0.5 * (lo + hi);
                if rk4(field, &y, m)[4] > 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            let yc = rk4(field, &y, hi);
            conjugate_r = Some(r + hi);
            samples.push(sample_of(field, r + hi, &yc));
            break Termination::ConjugatePoint;
        }

        r += h;
        y = next;
        speed = field.local(y[0], y[1]).norm_sq([y[2], y[3]]);
        max_speed_error = max_speed_error.max((speed - 1.0).abs());
        samples.push(sample_of(field, r, &y));
        if y[0] >= 1.0 {
            break Termination::ExitedChart;
        }
        if y[0] < rho_min * (1.0 - RADIUS_EPS) {
            break Termination::LeftInward;
        }
    };
    GeodesicRay {
        phi0: launch.phi0,
        theta0: launch.theta,
        samples,
        termination,
        conjugate_r,
        max_speed_error,
    }
}

impl GeodesicRay {
    /// First crossing of the circle `ρ = target`, by quintic dense output.
    pub fn crossing(&self, target: f64) -> Option<Crossing> {
        let first = self.samples.first()?;
        if (first.rho - target).abs() <= RADIUS_EPS * target {
            return Some(Crossing { r: first.r, theta: first.theta, j: first.j, v_rho: first.v_rho });
        }
        let w = self.samples.windows(2).find(|w| w[0].rho < target && w[1].rho >= target)?;
        Some(interpolate_crossing(&w[0], &w[1], target))
    }

    /// First crossings of an increasing list of radii in one sweep.
    pub fn crossings(&self, radii: &[f64]) -> Vec<Option<Crossing>> {
        let mut out = Vec::with_capacity(radii.len());
        let mut w = 0;
        let s = &self.samples;
        for &target in radii {
            if let Some(first) = s.first() {
                if (first.rho - target).abs() <= RADIUS_EPS * target {
                    out.push(Some(Crossing { r: first.r, theta: first.theta, j: first.j, v_rho: first.v_rho }));
                    continue;
                }
            }
            while w + 1 < s.len() && !(s[w].rho < target && s[w + 1].rho >= target) {
                w += 1;
            }
            if w + 1 < s.len() {
                out.push(Some(interpolate_crossing(&s[w], &s[w + 1], target)));
            } else {
                out.push(None);
            }
        }
        out
    }

    /// `(ρ, θ, J, J')` at arclength `r` by quintic dense output.
    pub fn state_at(&self, r: f64) -> Option<(f64, f64, f64, f64)> {
        let s = &self.samples;
        let first = s.first()?;
        if r < first.r || r > s.last()?.r {
            return None;
        }
        let w = s.partition_point(|x| x.r <= r).clamp(1, s.len() - 1);
        let (a, b) = (&s[w - 1], &s[w]);
        let step = b.r - a.r;
        let t = if step > 0.0 { (r - a.r) / step } else { 0.0 };
        let (rho, _) = quintic_hermite(t, step, [a.rho, a.v_rho, a.a_rho], [b.rho, b.v_rho, b.a_rho]);
        let (theta, _) = quintic_hermite(t, step, [a.theta, a.v_theta, a.a_theta], [b.theta, b.v_theta, b.a_theta]);
        let (j, dj) = quintic_hermite(t, step, [a.j, a.dj, a.a_j], [b.j, b.dj, b.a_j]);
        Some((rho, theta, j, dj))
    }

    pub fn end_r(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.r)
    }
}

fn interpolate_crossing(a: &RaySample, b: &RaySample, target: f64) -> Crossing {
    let step = b.r - a.r;
    let rho_at = |t: f64| quintic_hermite(t, step, [a.rho, a.v_rho, a.a_rho], [b.rho, b.v_rho, b.a_rho]);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if rho_at(m).0 < target {
            lo = m;
        } else {
            hi = m;
        }
    }
    let t = 0.5 * (lo + hi);
    let (theta, _) = quintic_hermite(t, step, [a.theta, a.v_theta, a.a_theta], [b.theta, b.v_theta, b.a_theta]);
    let (j, _) = quintic_hermite(t, step, [a.j, a.dj, a.a_j], [b.j, b.dj, b.a_j]);
    Crossing { r: a.r + t * step, theta, j, v_rho: rho_at(t).1 }
}

/// Rays launched from every node of the innermost ring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicFan {
    pub rays: Vec<GeodesicRay>,
    /// `dφ0/dθ0` at each launch node.
    pub launch_stretch: Vec<f64>,
}

fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI { y + 2.0 * PI } else { y }
}

impl GeodesicFan {
    /// Launches one chart-radial ray per node of the ring `ρ = rho_min`.
    /// The starting arclength is the chord from the center, the launch angle
    /// is the chord's angle in the tangent plane at the center, and the Jacobi
    /// data are those of the circle `ρ = rho_min` measured against `φ0`.
    pub fn shoot(imm: &Immersion, field: &MetricField, opts: &ShootOptions) -> Self {
        let g = &imm.grid;
        let nt = g.n_theta;
        let (e1, e2, _) = Geometry::center_frame(imm);
        let ring = imm.ring(0);
        let mut offsets = Vec::with_capacity(nt);
        let mut chords = Vec::with_capacity(nt);
        for (j, p) in ring.iter().enumerate() {
            let d = p - imm.center;
            let phi = d.dot(&e2).atan2(d.dot(&e1));
            offsets.push(wrap_pi(phi - g.theta[j]));
            chords.push(d.norm());
        }
        let mut stretch = offsets.clone();
        AngularDerivative::new(nt).apply(&mut stretch);
        for s in &mut stretch {
            *s += 1.0;
        }
        let rho = g.rho_min;
        let launches: Vec<Launch> = (0..nt)
            .map(|j| {
                let th = g.theta[j];
                let m = field.local(rho, th);
                let p = m.components;
                let sp1 = p.p1.sqrt();
                let jac = rho * (p.p3 - p.p2 * p.p2 / p.p1).sqrt() / stretch[j];
                let dlog = 1.0 / rho + m.dp3_drho / (2.0 * p.p3);
                Launch {
                    phi0: th + offsets[j],
                    r: chords[j],
                    rho,
                    theta: th,
                    v_rho: 1.0 / sp1,
                    v_theta: 0.0,
                    j: jac,
                    dj: jac * dlog / sp1,
                }
            })
            .collect();
        let rays = launches.par_iter().map(|l| shoot_geodesic(field, l, opts)).collect();
        Self { rays, launch_stretch: stretch }
    }

    /// `r0 = sup r` over the chart circle `ρ = 2h`.
    pub fn r0(&self, h: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for ray in &self.rays {
            let c = ray.crossing(2.0 * h)?;
            best = Some(best.map_or(c.r, |b: f64| b.max(c.r)));
        }
        best
    }

    /// `r* = 1 − 2h + r0 − C1 h |log h|^{1/2}`.
    pub fn r_star(&self, h: f64, c1: f64) -> Option<f64> {
        Some(1.0 - 2.0 * h + self.r0(h)? - c1 * h * h.ln().abs().sqrt())
    }
}

/// Geodesic polar coordinates sampled on the grid.
#[derive(Debug, Clone)]
pub struct PolarFields {
    pub grid: PolarGrid,
    /// Rings `0..valid_rings` carry data.
    pub valid_rings: usize,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub jacobi: Vec<f64>,
    /// Launch chart angle `θ0` of the (interpolated) ray through each node.
    pub launch_param: Vec<f64>,
    /// First ring (and chart angle) where the crossing angle fails to be
    /// monotone in the launch angle.
    pub fold: Option<(usize, f64)>,
}

/// Interpolates ray crossings onto the grid nodes, ring by ring.
pub fn polar_fields(fan: &GeodesicFan, grid: &PolarGrid) -> PolarFields {
    let nt = grid.n_theta;
    let m = fan.rays.len();
    assert_eq!(m, nt, "one ray per launch node");
    let per_ray: Vec<Vec<Option<Crossing>>> = fan.rays.par_iter().map(|ray| ray.crossings(&grid.rho)).collect();
    let launch_theta: Vec<f64> = fan.rays.iter().map(|r| r.theta0).collect();
    let phi_offset = TrigInterp::new(&fan.rays.iter().map(|r| wrap_pi(r.phi0 - r.theta0)).collect::<Vec<_>>());
    let ang = AngularDerivative::new(m);

    type Ring = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, bool);
    let rings: Vec<Option<Ring>> = (0..grid.n_rho)
        .into_par_iter()
        .map(|i| {
            let mut shift = Vec::with_capacity(m);
            let mut rr = Vec::with_capacity(m);
            let mut jj = Vec::with_capacity(m);
            for (k, ray) in per_ray.iter().enumerate() {
                let c = ray[i]?;
                shift.push(wrap_pi(c.theta - launch_theta[k]));
                rr.push(c.r);
                jj.push(c.j);
            }
            let mut slope = shift.clone();
            ang.apply(&mut slope);
            let folded = slope.iter().any(|s| 1.0 + s <= 0.0);
            let ts = TrigInterp::new(&shift);
            let tr = TrigInterp::new(&rr);
            let tj = TrigInterp::new(&jj);
            let mut r = Vec::with_capacity(nt);
            let mut phi = Vec::with_capacity(nt);
            let mut jac = Vec::with_capacity(nt);
            let mut param = Vec::with_capacity(nt);
            for j in 0..nt {
                let target = grid.theta[j];
                let mut x = target - ts.eval(target).0;
                for _ in 0..50 {
                    let (v, d) = ts.eval(x);
                    let f = x + v - target;
                    let dx = f / (1.0 + d);
                    x -= dx;
                    if dx.abs() < 1e-15 {
                        break;
                    }
                }
                r.push(tr.eval(x).0);
                phi.push(x + phi_offset.eval(x).0);
                jac.push(tj.eval(x).0);
                param.push(x);
            }
            Some((r, phi, jac, param, folded))
        })
        .collect();

    let mut out = PolarFields {
        grid: grid.clone(),
        valid_rings: 0,
        r: Vec::new(),
        phi: Vec::new(),
        jacobi: Vec::new(),
        launch_param: Vec::new(),
        fold: None,
    };
    for (i, ring) in rings.into_iter().enumerate() {
        let Some((r, phi, jac, param, folded)) = ring else { break };
        if folded && out.fold.is_none() {
            out.fold = Some((i, grid.theta[0]));
        }
        out.r.extend(r);
        out.phi.extend(phi);
        out.jacobi.extend(jac);
        out.launch_param.extend(param);
        out.valid_rings = i + 1;
    }
    out
}

impl PolarFields {
    pub fn covers_chart(&self) -> bool {
        self.valid_rings == self.grid.n_rho
    }

    /// `max |r − r0 − ρ|` over nodes with `2h ≤ ρ ≤ 1`.
    pub fn linf_deviation(&self, r0: f64, h: f64) -> f64 {
        let nt = self.grid.n_theta;
        let mut worst: f64 = 0.0;
        for i in 0..self.valid_rings {
            let rho = self.grid.rho[i];
            if rho < 2.0 * h * (1.0 - RADIUS_EPS) {
                continue;
            }
            for j in 0..nt {
                worst = worst.max((self.r[i * nt + j] - r0 - rho).abs());
            }
        }
        worst
    }
}

/// `Γ = [[∂ρ r, ρ⁻¹∂θ r], [r ∂ρ φ, r ρ⁻¹ ∂θ φ]]` per node, with its inverse.
#[derive(Debug, Clone)]
pub struct GammaField {
    pub gamma: Vec<Matrix2<f64>>,
    pub gamma_inv: Vec<Matrix2<f64>>,
    pub det: Vec<f64>,
    /// `max |Γ Γ̃ − Id|` (entrywise).
    pub identity_error: f64,
}

pub fn gamma_field(fields: &PolarFields) -> Result<GammaField> {
    if !fields.covers_chart() {
        return Err(Error::AssumptionViolated(format!(
            "geodesic fan covers only {} of {} rings",
            fields.valid_rings, fields.grid.n_rho
        )));
    }
    let g = &fields.grid;
    let nt = g.n_theta;
    let ops = DiffOps::new(g);
    let twist: Vec<f64> = (0..g.len()).map(|k| fields.phi[k] - g.theta[k % nt]).collect();
    let r_rho = ops.d_rho(&fields.r);
    let r_th = ops.d_theta_scalar(&fields.r);
    let t_rho = ops.d_rho(&twist);
    let t_th = ops.d_theta_scalar(&twist);
    let mut gamma = Vec::with_capacity(g.len());
    let mut gamma_inv = Vec::with_capacity(g.len());
    let mut det = Vec::with_capacity(g.len());
    let mut identity_error: f64 = 0.0;
    for k in 0..g.len() {
        let rho = g.rho[k / nt];
        let r = fields.r[k];
        let m = Matrix2::new(r_rho[k], r_th[k] / rho, r * t_rho[k], r * (1.0 + t_th[k]) / rho);
        let d = m.determinant();
        let inv = m.try_inverse().unwrap_or_else(|| Matrix2::from_element(f64::NAN));
        let e = (m * inv - Matrix2::identity()).abs().max();
        identity_error = identity_error.max(if e.is_finite() { e } else { f64::INFINITY });
        gamma.push(m);
        gamma_inv.push(inv);
        det.push(d);
    }
    Ok(GammaField { gamma, gamma_inv, det, identity_error })
}

/// `G` computed from the metric and `Γ̃`, and from the Jacobi field.
#[derive(Debug, Clone)]
pub struct GFactor {
    pub metric: Vec<f64>,
    pub jacobi: Vec<f64>,
}

impl GFactor {
    /// `max |G_metric − G_jacobi|` over nodes with `ρ ≥ rho_from`.
    pub fn max_discrepancy(&self, grid: &PolarGrid, rho_from: f64) -> f64 {
        let nt = grid.n_theta;
        (0..self.metric.len())
            .filter(|k| grid.rho[k / nt] >= rho_from * (1.0 - RADIUS_EPS))
            .map(|k| (self.metric[k] - self.jacobi[k]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn g_factor(metric: &[MetricComponents], fields: &PolarFields, gamma: &GammaField) -> GFactor {
    let n = gamma.gamma.len();
    let mut gm = Vec::with_capacity(n);
    let mut gj = Vec::with_capacity(n);
    for k in 0..n {
        // Frame components of ∂φ / r are the second column of Γ̃.
        let c = gamma.gamma_inv[k].column(1);
        let p = metric[k].matrix();
        gm.push((c.transpose() * p * c)[(0, 0)].sqrt());
        gj.push(fields.jacobi[k] / fields.r[k]);
    }
    GFactor { metric: gm, jacobi: gj }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub pass: bool,
    /// `(φ0, r)` of every ray that reached a conjugate point.
    pub conjugate_points: Vec<(f64, f64)>,
    /// `(φ0, reason)` of rays that stopped before leaving the chart for
    /// other reasons.
    pub early_terminations: Vec<(f64, Termination)>,
    pub fold: Option<(usize, f64)>,
    /// Nodes with `det Γ ≤ 0`.
    pub nonpositive_det: Vec<usize>,
    pub uncovered_from_ring: Option<usize>,
}

pub fn assumption1_report(fan: &GeodesicFan, fields: &PolarFields, gamma: Option<&GammaField>) -> Assumption1Report {
    let mut conjugate_points = Vec::new();
    let mut early = Vec::new();
    for ray in &fan.rays {
        match ray.termination {
            Termination::ExitedChart => {}
            Termination::ConjugatePoint => conjugate_points.push((ray.phi0, ray.conjugate_r.unwrap_or(f64::NAN))),
            t => early.push((ray.phi0, t)),
        }
    }
    let nonpositive_det: Vec<usize> = gamma
        .map(|g| g.det.iter().enumerate().filter(|(_, d)| !(**d > 0.0)).map(|(k, _)| k).collect())
        .unwrap_or_default();
    let uncovered = (!fields.covers_chart()).then_some(fields.valid_rings);
    let pass = conjugate_points.is_empty()
        && early.is_empty()
        && fields.fold.is_none()
        && nonpositive_det.is_empty()
        && uncovered.is_none()
        && gamma.is_some();
    Assumption1Report {
        pass,
        conjugate_points,
        early_terminations: early,
        fold: fields.fold,
        nonpositive_det,
        uncovered_from_ring: uncovered,
    }
}

/// Distance of a 2×2 matrix to the rotation group.
pub fn dist_so2(q: &Matrix2<f64>) -> f64 {
    let angle = (q[(1, 0)] - q[(0, 1)]).atan2(q[(0, 0)] + q[(1, 1)]);
    let (c, s) = (angle.cos(), angle.sin());
    let rot = Matrix2::new(c, -s, s, c);
    (q - rot).norm()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetEstimDiagnostics {
    /// `sup |G det Γ / m0 − 1|` over `ρ ≥ h`.
    pub sup_g_det: f64,
    /// `dist(Q, SO(2))` per node, `Q = diag(1, G) Γ diag(1, m0)⁻¹`.
    pub dist_so2: Vec<f64>,
    pub sup_dist_so2: f64,
    /// `max_θ ∫_{2h}^{R} |∂ρ r − 1| dρ`.
    pub radial_integral: f64,
}

pub fn detestim_diagnostics(
    fields: &PolarFields,
    gamma: &GammaField,
    gf: &GFactor,
    params: &ConeParams,
    upper: f64,
) -> DetEstimDiagnostics {
    let g = &fields.grid;
    let nt = g.n_theta;
    let h = params.h;
    let mut sup_g_det: f64 = 0.0;
    let mut sup_dist: f64 = 0.0;
    let mut dist = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let gk = gf.metric[k];
        let q = Matrix2::new(1.0, 0.0, 0.0, gk) * gamma.gamma[k] * Matrix2::new(1.0, 0.0, 0.0, 1.0 / params.m0);
        let d = dist_so2(&q);
        dist.push(d);
        if g.rho[k / nt] >= h * (1.0 - RADIUS_EPS) {
            sup_g_det = sup_g_det.max((gk * gamma.det[k] / params.m0 - 1.0).abs());
            sup_dist = sup_dist.max(d);
        }
    }
    let lo = 2.0 * h;
    let mut radial_integral: f64 = 0.0;
    for j in 0..nt {
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..g.n_rho {
            let rho = g.rho[i];
            if rho > upper * (1.0 + RADIUS_EPS) {
                break;
            }
            let v = (gamma.gamma[i * nt + j][(0, 0)] - 1.0).abs();
            if rho < lo {
                prev = Some((rho, v));
                continue;
            }
            match prev {
                Some((pr, pv)) if pr >= lo => acc += 0.5 * (rho - pr) * (v + pv),
                Some((pr, pv)) => {
                    // Linear value at ρ = 2h, then the partial cell.
                    let t = (lo - pr) / (rho - pr);
                    let vl = pv + t * (v - pv);
                    acc += 0.5 * (rho - lo) * (v + vl);
                }
                None => {}
            }
            prev = Some((rho, v));
        }
        radial_integral = radial_integral.max(acc);
    }
    DetEstimDiagnostics { sup_g_det, dist_so2: dist, sup_dist_so2: sup_dist, radial_integral }
}

/// Everything the geodesic pipeline produces for one immersion.
#[derive(Debug, Clone)]
pub struct GeodesicAnalysis {
    pub fan: GeodesicFan,
    pub fields: PolarFields,
    pub gamma: Option<GammaField>,
    pub g: Option<GFactor>,
    pub report: Assumption1Report,
}

pub fn analyze(imm: &Immersion, opts: &ShootOptions) -> Result<GeodesicAnalysis> {
    let geo = imm.geometry()?;
    let field = MetricField::from_geometry(&geo)?;
    let fan = GeodesicFan::shoot(imm, &field, opts);
    let fields = polar_fields(&fan, &imm.grid);
    let gamma = gamma_field(&fields).ok();
    let g = gamma.as_ref().map(|gm| g_factor(&geo.metric, &fields, gm));
    let report = assumption1_report(&fan, &fields, gamma.as_ref());
    Ok(GeodesicAnalysis { fan, fields, gamma, g, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces;

    #[test]
    fn euclidean_christoffel_symbols() {
        let g = PolarGrid::new(40, 16, 1e-3).unwrap();
        let m = vec![MetricComponents::new(1.0, 0.0, 1.0); g.len()];
        let field = MetricField::new(&g, &m, &vec![0.0; g.len()]).unwrap();
        for &(r, t) in &[(0.01, 0.2), (0.5, 3.0), (0.9, 6.0)] {
            let c = field.local(r, t).christoffel();
            assert!((c[0][1][1] + r).abs() < 1e-8);
            assert!((c[1][0][1] - 1.0 / r).abs() < 1e-8 && (c[1][1][0] - 1.0 / r).abs() < 1e-8);
            assert!(c[0][0][0].abs() < 1e-8 && c[1][1][1].abs() < 1e-8 && c[1][0][0].abs() < 1e-8);
        }
        let cone = vec![MetricComponents::new(1.0, 0.0, 0.25); g.len()];
        let field = MetricField::new(&g, &cone, &vec![0.0; g.len()]).unwrap();
        let c = field.local(0.3, 1.0).christoffel();
        assert!((c[0][1][1] + 0.25 * 0.3).abs() < 1e-8 && (c[1][0][1] - 1.0 / 0.3).abs() < 1e-8);
    }

    #[test]
    fn constant_cartesian_metric_has_no_connection() {
        // The flat disc written in Cartesian terms: Christoffels of g_ij = δ_ij
        // vanish, so in polar form only the coordinate terms survive. Check the
        // covariant identity Γ^k_ij = 0 after transforming back.
        let g = PolarGrid::new(40, 16, 1e-3).unwrap();
        let m = vec![MetricComponents::new(1.0, 0.0, 1.0); g.len()];
        let field = MetricField::new(&g, &m, &vec![0.0; g.len()]).unwrap();
        let (r, t) = (0.4f64, 0.7f64);
        let c = field.local(r, t).christoffel();
        // x = ρ(cos θ, sin θ); ẍ = 0 along any line means ρ̈ = ρ θ̇², θ̈ = −2 ρ̇ θ̇ / ρ.
        let v = [0.3, -1.2];
        let a_rho = -(c[0][0][0] * v[0] * v[0] + 2.0 * c[0][0][1] * v[0] * v[1] + c[0][1][1] * v[1] * v[1]);
        let a_th = -(c[1][0][0] * v[0] * v[0] + 2.0 * c[1][0][1] * v[0] * v[1] + c[1][1][1] * v[1] * v[1]);
        assert!((a_rho - r * v[1] * v[1]).abs() < 1e-8);
        assert!((a_th + 2.0 * v[0] * v[1] / r).abs() < 1e-8);
    }

    #[test]
    fn flat_disc_is_identity() {
        let g = PolarGrid::new(80, 16, 1e-3).unwrap();
        let imm = surfaces::flat_disc(&g);
        let a = analyze(&imm, &ShootOptions::default()).unwrap();
        assert!(a.report.pass, "{:?}", a.report);
        let gm = a.gamma.as_ref().unwrap();
        let gf = a.g.as_ref().unwrap();
        for k in 0..g.len() {
            let (i, j) = g.split(k);
            assert!((a.fields.r[k] - g.rho[i]).abs() < 1e-6);
            assert!((a.fields.phi[k] - g.theta[j]).abs() < 1e-6);
            assert!((gm.gamma[k] - Matrix2::identity()).abs().max() < 1e-6);
            assert!((gf.metric[k] - 1.0).abs() < 1e-6 && (gf.jacobi[k] - 1.0).abs() < 1e-6);
        }
        for ray in &a.fan.rays {
            assert!(ray.max_speed_error < 1e-6);
            assert!(ray.samples.windows(2).all(|w| w[1].r > w[0].r));
        }
    }

    #[test]
    fn sphere_band_has_conjugate_point() {
        let g = PolarGrid::new(200, 32, 1e-3).unwrap();
        let imm = surfaces::sphere_band(&g, 3.5, 1.0);
        let a = analyze(&imm, &ShootOptions::default()).unwrap();
        assert!(!a.report.pass);
        assert!(!a.report.conjugate_points.is_empty());
        let (_, r) = a.report.conjugate_points[0];
        assert!((r - PI).abs() < 1e-2, "{r}");
    }

    #[test]
    fn dist_so2_examples() {
        let t: f64 = 0.4;
        let rot = Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos());
        assert!(dist_so2(&rot) < 1e-15);
        assert!((dist_so2(&(rot * 2.0)) - 2f64.sqrt()).abs() < 1e-12);
    }
}
