//! Radial bookkeeping of Gauss curvature: enclosed curvature of chart discs,
//! the functions `Ω`, `Ω̄` and `G = 1 − Ω̄` along geodesics, and the auxiliary
//! function `f(r)` with its interpolation inequality.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{GeodesicFan, GeodesicRay, MetricField, PolarFields};
use crate::geometry::Geometry;
use crate::grid::PolarGrid;
use crate::interp::TrigInterp;
use crate::params::ConeParams;
use crate::quadrature::trapezoid;

/// Enclosed curvature `𝒦(B_ρ) = ∫_{B_ρ} K dA` at every grid radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    pub rho_values: Vec<f64>,
    pub kappa_values: Vec<f64>,
    pub area_density: Vec<f64>,
}

/// Cumulative signed curvature by cell quadrature (trapezoidal in `ln ρ`,
/// the cap `B_rho_min` from the innermost ring).
pub fn kappa_profile(curvature: &[f64], area_density: &[f64], grid: &PolarGrid) -> CurvatureProfile {
    let nt = grid.n_theta;
    let dth = grid.dtheta();
    let ring: Vec<f64> = (0..grid.n_rho)
        .map(|i| (0..nt).map(|j| curvature[i * nt + j] * area_density[i * nt + j]).sum::<f64>())
        .collect();
    let ds = grid.dlog();
    let mut kappa = Vec::with_capacity(grid.n_rho);
    let mut acc = grid.cap_weight() * ring[0];
    kappa.push(acc);
    for i in 1..grid.n_rho {
        let (a, b) = (grid.rho[i - 1], grid.rho[i]);
        acc += 0.5 * ds * dth * (a * a * ring[i - 1] + b * b * ring[i]);
        kappa.push(acc);
    }
    CurvatureProfile { rho_values: grid.rho.clone(), kappa_values: kappa, area_density: area_density.to_vec() }
}

pub fn kappa_profile_of(geo: &Geometry) -> CurvatureProfile {
    kappa_profile(&geo.gauss_curvature(), &geo.area_density(), &geo.grid)
}

impl CurvatureProfile {
    /// Piecewise-linear in `ρ`; below the first radius the cap scales like `ρ²`.
    pub fn value_at(&self, rho: f64) -> f64 {
        let r = &self.rho_values;
        let k = &self.kappa_values;
        if rho <= r[0] {
            return k[0] * (rho / r[0]).powi(2);
        }
        if rho >= *r.last().unwrap() {
            return *k.last().unwrap();
        }
        let i = r.partition_point(|&x| x <= rho);
        let t = (rho - r[i - 1]) / (r[i] - r[i - 1]);
        k[i - 1] + t * (k[i] - k[i - 1])
    }

    pub fn total(&self) -> f64 {
        *self.kappa_values.last().unwrap()
    }

    /// `∫_a^b |𝒦(B_ρ) − target| dρ` by the trapezoidal rule on the profile
    /// radii (plus the end points).
    pub fn deviation_integral(&self, a: f64, b: f64, target: f64) -> f64 {
        let mut xs = vec![a];
        xs.extend(self.rho_values.iter().copied().filter(|&x| x > a && x < b));
        xs.push(b);
        let ys: Vec<f64> = xs.iter().map(|&x| (self.value_at(x) - target).abs()).collect();
        trapezoid(&xs, &ys)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho_ref_units,kappa_dimensionless\n");
        for (r, k) in self.rho_values.iter().zip(&self.kappa_values) {
            s.push_str(&format!("{r:.12e},{k:.12e}\n"));
        }
        s
    }
}

/// Admissible `R` for the deviation integral: `[C1 h L^{1/2}, 1 − 2h − C1 h L^{1/2}]`.
pub fn admissible_r_range(params: &ConeParams, c1: f64) -> (f64, f64) {
    let w = c1 * params.h * params.abs_log_h().sqrt();
    (w, 1.0 - 2.0 * params.h - w)
}

/// `∫_{2h}^{2h+R} |𝒦(B_ρ) − 2π(1 − m0)| dρ`.
pub fn kappa_deviation(profile: &CurvatureProfile, params: &ConeParams, big_r: f64, c1: f64) -> Result<f64> {
    let (lo, hi) = admissible_r_range(params, c1);
    if !(big_r >= lo && big_r <= hi) {
        return Err(Error::OutOfRange(format!("R = {big_r} outside admissible [{lo}, {hi}]")));
    }
    let a = 2.0 * params.h;
    Ok(profile.deviation_integral(a, a + big_r, params.tip_curvature()))
}

/// `Ω`, its radial primitive and their slopes along one ray, at the ray's
/// accepted steps.
#[derive(Debug, Clone)]
pub struct OmegaTrack {
    pub r: Vec<f64>,
    pub omega: Vec<f64>,
    /// `∂r Ω = K J`
    pub d_omega: Vec<f64>,
    /// `∫_0^r Ω`
    pub int_omega: Vec<f64>,
}

/// Integrates `Ω = ∫ K dA(∂r, ∂φ) dr` along a ray with Simpson's rule per
/// step (midpoint curvature from the interpolated field).
pub fn omega_track(ray: &GeodesicRay, field: &MetricField) -> OmegaTrack {
    let s = &ray.samples;
    let n = s.len();
    let mut r = Vec::with_capacity(n);
    let mut om = Vec::with_capacity(n);
    let mut dom = Vec::with_capacity(n);
    let mut int = Vec::with_capacity(n);
    let first = &s[0];
    // Before the launch ring the surface is treated as having constant curvature.
    let k0 = if first.j != 0.0 { -first.a_j / first.j } else { 0.0 };
    r.push(first.r);
    om.push(0.5 * k0 * first.r * first.r);
    dom.push(-first.a_j);
    int.push(k0 * first.r.powi(3) / 6.0);
    for w in 1..n {
        let (a, b) = (&s[w - 1], &s[w]);
        let h = b.r - a.r;
        let mid = 0.5 * (a.r + b.r);
        let (rho, theta, j, _) = ray.state_at(mid).expect("midpoint inside ray");
        let f_mid = field.local(rho, theta).curvature * j;
        let (fa, fb) = (-a.a_j, -b.a_j);
        let o_b = om[w - 1] + h / 6.0 * (fa + 4.0 * f_mid + fb);
        let i_b = int[w - 1] + 0.5 * h * (om[w - 1] + o_b) + h * h / 12.0 * (fa - fb);
        r.push(b.r);
        om.push(o_b);
        dom.push(fb);
        int.push(i_b);
    }
    OmegaTrack { r, omega: om, d_omega: dom, int_omega: int }
}

fn cubic_hermite(t: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

impl OmegaTrack {
    fn locate(&self, r: f64) -> Option<(usize, f64, f64)> {
        if r < self.r[0] || r > *self.r.last()? {
            return None;
        }
        let w = self.r.partition_point(|&x| x <= r).clamp(1, self.r.len() - 1);
        let h = self.r[w] - self.r[w - 1];
        let t = if h > 0.0 { (r - self.r[w - 1]) / h } else { 0.0 };
        Some((w, t, h))
    }

    pub fn omega_at(&self, r: f64) -> Option<f64> {
        let (w, t, h) = self.locate(r)?;
        Some(cubic_hermite(t, h, self.omega[w - 1], self.d_omega[w - 1], self.omega[w], self.d_omega[w]))
    }

    /// `Ω̄ = r⁻¹ ∫_0^r Ω`.
    pub fn omega_bar_at(&self, r: f64) -> Option<f64> {
        let (w, t, h) = self.locate(r)?;
        let i = cubic_hermite(t, h, self.int_omega[w - 1], self.omega[w - 1], self.int_omega[w], self.omega[w]);
        Some(i / r)
    }

    pub fn g_curv_at(&self, r: f64) -> Option<f64> {
        Some(1.0 - self.omega_bar_at(r)?)
    }
}

pub fn omega_tracks(fan: &GeodesicFan, field: &MetricField) -> Vec<OmegaTrack> {
    use rayon::prelude::*;
    fan.rays.par_iter().map(|ray| omega_track(ray, field)).collect()
}

/// `Ω`, `Ω̄` and `G_curv = 1 − Ω̄` on the grid nodes covered by the fan.
#[derive(Debug, Clone)]
pub struct OmegaFields {
    pub valid_rings: usize,
    pub omega: Vec<f64>,
    pub omega_bar: Vec<f64>,
    pub g_curv: Vec<f64>,
}

pub fn omega_fields(fan: &GeodesicFan, fields: &PolarFields, tracks: &[OmegaTrack]) -> OmegaFields {
    let g = &fields.grid;
    let nt = g.n_theta;
    let mut out = OmegaFields { valid_rings: fields.valid_rings, omega: vec![], omega_bar: vec![], g_curv: vec![] };
    for i in 0..fields.valid_rings {
        let mut om = Vec::with_capacity(fan.rays.len());
        let mut ob = Vec::with_capacity(fan.rays.len());
        for (ray, tr) in fan.rays.iter().zip(tracks) {
            let c = ray.crossing(g.rho[i]).expect("valid ring has crossings");
            om.push(tr.omega_at(c.r).unwrap_or(f64::NAN));
            ob.push(tr.omega_bar_at(c.r).unwrap_or(f64::NAN));
        }
        let (to, tb) = (TrigInterp::new(&om), TrigInterp::new(&ob));
        for j in 0..nt {
            let x = fields.launch_param[i * nt + j];
            let o = to.eval(x).0;
            let b = tb.eval(x).0;
            out.omega.push(o);
            out.omega_bar.push(b);
            out.g_curv.push(1.0 - b);
        }
    }
    out
}

/// `dφ` weights of the rays: `dφ0/dθ0 · Δθ0`.
fn phi_weights(fan: &GeodesicFan) -> Vec<f64> {
    let n = fan.rays.len() as f64;
    fan.launch_stretch.iter().map(|s| s * 2.0 * PI / n).collect()
}

/// Curvature of the geodesic disc, `𝒦(B̃_r) = ∫ Ω(r, φ) dφ`.
pub fn geodesic_kappa(fan: &GeodesicFan, tracks: &[OmegaTrack], r: f64) -> Option<f64> {
    let w = phi_weights(fan);
    let mut acc = 0.0;
    for (wi, tr) in w.iter().zip(tracks) {
        acc += wi * tr.omega_at(r)?;
    }
    Some(acc)
}

/// `f`, `f'` and `f''` sampled on a uniform grid of geodesic radii.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FSamples {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub d2f: Vec<f64>,
}

impl FSamples {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r_ref_units,f_ref_units,df_dr_dimensionless,d2f_dr2_per_ref_unit\n");
        for i in 0..self.r.len() {
            s.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e}\n", self.r[i], self.f[i], self.df[i], self.d2f[i]));
        }
        s
    }
}

/// `f(r) = r ∫ G/m0 dφ − 2π (r − r0)` on `[r0, r_end]`, with
/// `f' = ∫ (1 − Ω) dφ / m0 − 2π` and `f'' = −∫ K G r dφ / m0`, each by its
/// own quadrature.
pub fn f_function(
    fan: &GeodesicFan,
    tracks: &[OmegaTrack],
    field: &MetricField,
    m0: f64,
    r0: f64,
    r_end: f64,
    n: usize,
) -> Result<FSamples> {
    if !(r_end > r0) || n < 2 {
        return Err(Error::OutOfRange(format!("empty interval [{r0}, {r_end}]")));
    }
    let w = phi_weights(fan);
    let mut out = FSamples { r: vec![], f: vec![], df: vec![], d2f: vec![] };
    for k in 0..n {
        let r = r0 + (r_end - r0) * k as f64 / (n - 1) as f64;
        let (mut sg, mut so, mut sk) = (0.0, 0.0, 0.0);
        for ((ray, tr), wi) in fan.rays.iter().zip(tracks).zip(&w) {
            let missing = || Error::OutOfRange(format!("ray at φ0 = {} ends before r = {r}", ray.phi0));
            let g = tr.g_curv_at(r).ok_or_else(missing)?;
            let om = tr.omega_at(r).ok_or_else(missing)?;
            let (rho, theta, _, _) = ray.state_at(r).ok_or_else(missing)?;
            let kk = field.local(rho, theta).curvature;
            sg += wi * g;
            so += wi * (1.0 - om);
            sk += wi * kk * g * r;
        }
        out.r.push(r);
        out.f.push(r * sg / m0 - 2.0 * PI * (r - r0));
        out.df.push(so / m0 - 2.0 * PI);
        out.d2f.push(-sk / m0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub norm_f: f64,
    pub norm_df: f64,
    pub norm_d2f: f64,
    /// Lower-order term `‖f‖₁ / L²` of the interval inequality.
    pub boundary: f64,
    /// `‖f'‖₁ / (‖f‖₁ ‖f''‖₁)^{1/2}`
    pub ratio: f64,
    /// `‖f'‖₁ / (‖f‖₁ (‖f''‖₁ + ‖f‖₁/L²))^{1/2}`
    pub ratio_with_boundary: f64,
}

pub fn interpolation_check(s: &FSamples) -> Result<InterpolationCheck> {
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    let norm_f = trapezoid(&s.r, &abs(&s.f));
    let norm_df = trapezoid(&s.r, &abs(&s.df));
    let norm_d2f = trapezoid(&s.r, &abs(&s.d2f));
    if norm_f == 0.0 {
        return Err(Error::OutOfRange("f vanishes identically; ratio undefined".into()));
    }
    let len = s.r.last().unwrap() - s.r[0];
    let boundary = norm_f / (len * len);
    Ok(InterpolationCheck {
        norm_f,
        norm_df,
        norm_d2f,
        boundary,
        ratio: norm_df / (norm_f * norm_d2f).sqrt(),
        ratio_with_boundary: norm_df / (norm_f * (norm_d2f + boundary)).sqrt(),
    })
}

/// The two pieces of the change of domain from geodesic discs `B̃_r` to
/// chart discs `B_ρ` over `ρ ∈ [2h, 2h + R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainChange {
    /// `∫ |𝒦(B_ρ) − 2π(1−m0)| dρ`
    pub chart_deviation: f64,
    /// `∫ |𝒦(B_ρ) − 𝒦(B̃_{ρ + r0 − 2h})| dρ`
    pub symmetric_difference: f64,
    /// `∫_{r0}^{r0+R} |𝒦(B̃_r) − 2π(1−m0)| dr`
    pub geodesic_deviation: f64,
}

pub fn domain_change(
    profile: &CurvatureProfile,
    fan: &GeodesicFan,
    tracks: &[OmegaTrack],
    params: &ConeParams,
    r0: f64,
    big_r: f64,
    n: usize,
) -> Result<DomainChange> {
    let a = 2.0 * params.h;
    let target = params.tip_curvature();
    let mut xs = Vec::with_capacity(n);
    let (mut sym, mut geo) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let rho = a + big_r * k as f64 / (n - 1) as f64;
        let kt = geodesic_kappa(fan, tracks, rho + r0 - a)
            .ok_or_else(|| Error::OutOfRange(format!("geodesic disc of radius {} not covered", rho + r0 - a)))?;
        xs.push(rho);
        sym.push((profile.value_at(rho) - kt).abs());
        geo.push((kt - target).abs());
    }
    Ok(DomainChange {
        chart_deviation: profile.deviation_integral(a, a + big_r, target),
        symmetric_difference: trapezoid(&xs, &sym),
        geodesic_deviation: trapezoid(&xs, &geo),
    })
}
