//! Gauss-map analysis on the unit sphere: Brouwer degree of the normal field
//! on chart discs, the isoperimetric function and the lower-bound integrals
//! built from it.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureProfile;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{PolarGrid, Vec3};
use crate::params::ConeParams;

/// `F(x) = √(4πx − x²)`, with the argument clamped to `[0, 4π]`.
pub fn f_iso(x: f64) -> f64 {
    let x = x.clamp(0.0, 4.0 * PI);
    (4.0 * PI * x - x * x).max(0.0).sqrt()
}

/// Distance to the nearest integer multiple of `4π`.
pub fn dist_4pi(x: f64) -> f64 {
    let p = 4.0 * PI;
    (x - p * (x / p).round()).abs()
}

/// `F̃ = F ∘ dist_4pi`.
pub fn f_tilde(x: f64) -> f64 {
    f_iso(dist_4pi(x))
}

/// Equal-area partition of the sphere into latitude bands, each split into
/// equal longitude cells. An optional tilt rotates the raster against the
/// world frame so axisymmetric images do not align with bin edges.
#[derive(Debug, Clone)]
pub struct SphereRaster {
    /// Band edges in `z`, from `1` down to `-1`.
    pub band_z: Vec<f64>,
    pub band_lon: Vec<usize>,
    band_offset: Vec<usize>,
    n_bins: usize,
    tilt: Rotation3<f64>,
}

/// A fixed generic rotation used when a tilted raster is requested.
pub fn default_tilt() -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.37, -0.81, 0.45)), 0.1234)
}

impl SphereRaster {
    pub fn new(target_bins: usize, tilt: Option<Rotation3<f64>>) -> Result<Self> {
        if target_bins < 16 {
            return Err(Error::InvalidParameter(format!("raster needs at least 16 bins, got {target_bins}")));
        }
        let spacing = (4.0 * PI / target_bins as f64).sqrt();
        let n_bands = ((PI / spacing).round() as usize).max(2);
        let dcol = PI / n_bands as f64;
        let band_lon: Vec<usize> = (0..n_bands)
            .map(|k| {
                let mid = (k as f64 + 0.5) * dcol;
                ((2.0 * PI * mid.sin() / dcol).round() as usize).max(1)
            })
            .collect();
        let n_bins: usize = band_lon.iter().sum();
        let mut band_z = Vec::with_capacity(n_bands + 1);
        let mut band_offset = Vec::with_capacity(n_bands + 1);
        let mut cum = 0usize;
        for &n in &band_lon {
            band_z.push(1.0 - 2.0 * cum as f64 / n_bins as f64);
            band_offset.push(cum);
            cum += n;
        }
        band_z.push(-1.0);
        band_offset.push(cum);
        Ok(Self { band_z, band_lon, band_offset, n_bins, tilt: tilt.unwrap_or_else(Rotation3::identity) })
    }

    pub fn len(&self) -> usize {
        self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.n_bins == 0
    }

    pub fn n_bands(&self) -> usize {
        self.band_lon.len()
    }

    pub fn bin_weight(&self) -> f64 {
        4.0 * PI / self.n_bins as f64
    }

    pub fn to_raster_frame(&self, y: &Vec3) -> Vec3 {
        self.tilt * y
    }

    fn band_of_z(&self, z: f64) -> usize {
        // band_z is decreasing
        let k = self.band_z.partition_point(|&b| b > z);
        k.saturating_sub(1).min(self.n_bands() - 1)
    }

    fn lon_index(&self, band: usize, lon: f64) -> usize {
        let n = self.band_lon[band];
        let t = lon.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
        (t as usize).min(n - 1)
    }

    /// Bin containing a point given in raster coordinates.
    pub fn bin_of_raster(&self, p: &Vec3) -> usize {
        let b = self.band_of_z(p.z);
        self.band_offset[b] + self.lon_index(b, p.y.atan2(p.x))
    }

    pub fn bin_of(&self, y: &Vec3) -> usize {
        self.bin_of_raster(&self.to_raster_frame(&y.normalize()))
    }

    pub fn band_and_lon(&self, bin: usize) -> (usize, usize) {
        let b = self.band_offset.partition_point(|&o| o <= bin) - 1;
        (b, bin - self.band_offset[b])
    }

    /// Point at fractional position `(u, v) ∈ [0,1]²` of a bin, in raster
    /// coordinates; uniform in `(u, v)` is uniform in area.
    fn point_in_bin_raster(&self, band: usize, lon: usize, u: f64, v: f64) -> Vec3 {
        let z = self.band_z[band] + (self.band_z[band + 1] - self.band_z[band]) * v;
        let phi = 2.0 * PI * (lon as f64 + u) / self.band_lon[band] as f64;
        let s = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z)
    }

    fn center_raster(&self, bin: usize) -> Vec3 {
        let (b, l) = self.band_and_lon(bin);
        if self.band_lon[b] == 1 {
            // polar caps: the pole itself
            return Vec3::new(0.0, 0.0, if b == 0 { 1.0 } else { -1.0 });
        }
        self.point_in_bin_raster(b, l, 0.5, 0.5)
    }

    /// Bin center in world coordinates.
    pub fn bin_center(&self, bin: usize) -> Vec3 {
        self.tilt.inverse() * self.center_raster(bin)
    }

    /// All bins as `(center, area weight)`.
    pub fn bins(&self) -> Vec<(Vec3, f64)> {
        let w = self.bin_weight();
        (0..self.n_bins).map(|k| (self.bin_center(k), w)).collect()
    }

    /// Bins whose cell may meet the spherical cap of angular radius `radius`
    /// around `c` (raster coordinates).
    fn bins_near_cap(&self, c: &Vec3, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let colat = c.z.clamp(-1.0, 1.0).acos();
        let top = colat - radius;
        let bottom = colat + radius;
        let z_hi = if top <= 0.0 { 1.0 } else { top.cos() };
        let z_lo = if bottom >= PI { -1.0 } else { bottom.cos() };
        let b0 = self.band_of_z(z_hi);
        let b1 = self.band_of_z(z_lo);
        let full = top <= 0.0 || bottom >= PI || radius >= colat.sin();
        let lon_c = c.y.atan2(c.x);
        let half = if full { PI } else { (radius.sin() / colat.sin()).clamp(-1.0, 1.0).asin() };
        for b in b0..=b1 {
            let n = self.band_lon[b];
            let base = self.band_offset[b];
            if full || half >= PI || n == 1 {
                out.extend(base..base + n);
                continue;
            }
            let step = 2.0 * PI / n as f64;
            let lo = ((lon_c - half) / step).floor() as i64;
            let hi = ((lon_c + half) / step).floor() as i64;
            if (hi - lo + 1) as usize >= n {
                out.extend(base..base + n);
                continue;
            }
            for k in lo..=hi {
                out.push(base + k.rem_euclid(n as i64) as usize);
            }
        }
    }

    /// Arcs separating bins of differing value, weighted by the jump:
    /// the perimeter sum `Σ_s ℋ¹(∂{f > s})` of an integer field.
    pub fn jump_length(&self, values: &[i32]) -> f64 {
        let mut total = 0.0;
        for b in 0..self.n_bands() {
            let n = self.band_lon[b];
            let base = self.band_offset[b];
            let (za, zb) = (self.band_z[b], self.band_z[b + 1]);
            let meridian = zb.clamp(-1.0, 1.0).acos() - za.clamp(-1.0, 1.0).acos();
            if n > 1 {
                for l in 0..n {
                    let d = (values[base + l] - values[base + (l + 1) % n]).abs();
                    total += d as f64 * meridian;
                }
            }
            if b + 1 < self.n_bands() {
                // shared latitude circle with the next band
                let m = self.band_lon[b + 1];
                let nb = self.band_offset[b + 1];
                let radius = (1.0 - zb * zb).max(0.0).sqrt();
                let (mut i, mut k) = (0usize, 0usize);
                let mut pos = 0.0f64;
                while i < n && k < m {
                    let ei = (i + 1) as f64 / n as f64;
                    let ek = (k + 1) as f64 / m as f64;
                    let end = ei.min(ek);
                    let d = (values[base + i] - values[nb + k]).abs();
                    total += d as f64 * (end - pos) * 2.0 * PI * radius;
                    pos = end;
                    if ei <= ek {
                        i += 1;
                    }
                    if ek <= ei {
                        k += 1;
                    }
                }
            }
        }
        total
    }
}

/// The normal field on the nodes of a polar grid, closed at the center by
/// the normalized mean of the innermost ring. Triangles are oriented
/// counterclockwise in the chart.
#[derive(Debug, Clone)]
pub struct GaussMap {
    pub grid: PolarGrid,
    pub normals: Vec<Vec3>,
    pub center: Vec3,
}

const CENTER: usize = usize::MAX;

impl GaussMap {
    pub fn new(grid: PolarGrid, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("{} normals for {} nodes", normals.len(), grid.len())));
        }
        let mean: Vec3 = normals[..grid.n_theta].iter().sum();
        if mean.norm() < 1e-12 {
            return Err(Error::Degenerate {
                node: 0,
                i_rho: 0,
                i_theta: 0,
                what: "innermost ring normals average to zero",
            });
        }
        Ok(Self { grid, normals, center: mean.normalize() })
    }

    pub fn from_geometry(geo: &Geometry) -> Result<Self> {
        Self::new(geo.grid.clone(), geo.normal.clone())
    }

    fn node(&self, k: usize) -> Vec3 {
        if k == CENTER {
            self.center
        } else {
            self.normals[k]
        }
    }

    /// Triangles between ring `i−1` and ring `i` (the center fan for `i = 0`).
    fn ring_triangles(&self, i: usize) -> Vec<[usize; 3]> {
        let g = &self.grid;
        let nt = g.n_theta;
        let mut out = Vec::with_capacity(2 * nt);
        for j in 0..nt {
            let jn = (j + 1) % nt;
            if i == 0 {
                out.push([CENTER, g.idx(0, j), g.idx(0, jn)]);
            } else {
                let (a, b, c, d) = (g.idx(i - 1, j), g.idx(i, j), g.idx(i, jn), g.idx(i - 1, jn));
                out.push([a, b, c]);
                out.push([a, c, d]);
            }
        }
        out
    }

    fn image(&self, t: &[usize; 3]) -> [Vec3; 3] {
        [self.node(t[0]), self.node(t[1]), self.node(t[2])]
    }

    /// Largest ring index with `ρ ≤ R` (relative tolerance 1e-12).
    pub fn ring_for_radius(&self, radius: f64) -> Result<usize> {
        let g = &self.grid;
        if radius < g.rho[0] * (1.0 - 1e-12) {
            return Err(Error::OutOfRange(format!("R = {radius} below the innermost ring {}", g.rho[0])));
        }
        Ok(g.rho.partition_point(|&r| r <= radius * (1.0 + 1e-12)) - 1)
    }

    /// Degree at `y` for the map restricted to the disc bounded by ring
    /// `ring`, by preimage counting with signs. Points near the boundary image
    /// or where nearby probes disagree are rejected as non-regular.
    pub fn degree_point(&self, ring: usize, y: &Vec3) -> Result<i32> {
        let y = y.normalize();
        let tol = 1e-7;
        let g = &self.grid;
        let nt = g.n_theta;
        for j in 0..nt {
            let a = self.normals[g.idx(ring, j)];
            let b = self.normals[g.idx(ring, (j + 1) % nt)];
            if arc_distance(&a, &b, &y) < tol {
                return Err(Error::NotRegular(format!("y within {tol} of the boundary image")));
            }
        }
        let d0 = self.degree_count(ring, &y);
        let t1 = if y.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = y.cross(&t1).normalize();
        let e2 = y.cross(&e1);
        for (s, e) in [(1.0, e1), (-1.0, e1), (1.0, e2), (-1.0, e2)] {
            let probe = (y + e * (s * 1e-6)).normalize();
            if self.degree_count(ring, &probe) != d0 {
                return Err(Error::NotRegular("degree changes within 1e-6 of y".into()));
            }
        }
        Ok(d0)
    }

    fn degree_count(&self, ring: usize, y: &Vec3) -> i32 {
        (0..=ring)
            .into_par_iter()
            .map(|i| {
                self.ring_triangles(i)
                    .iter()
                    .map(|t| {
                        let [a, b, c] = self.image(t);
                        inside_signed(&a, &b, &c, y)
                    })
                    .sum::<i32>()
            })
            .sum()
    }

    /// Per-ring signed bin coverage `Σ_triangles sgn · #(bin centers inside)`.
    fn ring_coverage(&self, raster: &SphereRaster, i: usize) -> Result<Vec<(u32, i32, i32)>> {
        let mut out = Vec::new();
        let mut cand = Vec::new();
        for t in self.ring_triangles(i) {
            let im = self.image(&t).map(|v| raster.to_raster_frame(&v));
            let [a, b, c] = im;
            let orient = a.cross(&b).dot(&c);
            if orient == 0.0 {
                continue;
            }
            let sum = a + b + c;
            if sum.norm() < 1e-12 {
                return Err(Error::Resolution("image triangle spans a great circle".into()));
            }
            let m = sum.normalize();
            let radius = [a, b, c].iter().map(|v| m.dot(v).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
            if radius > 0.5 {
                return Err(Error::Resolution(format!(
                    "image of a ring-{i} triangle has angular radius {radius:.3} > 0.5"
                )));
            }
            raster.bins_near_cap(&m, radius, &mut cand);
            for &bin in &cand {
                let (bd, l) = raster.band_and_lon(bin);
                let center = raster.center_raster(bin);
                let dc = inside_signed(&a, &b, &c, &center);
                let mut ds = 0;
                for su in 0..SUB {
                    for sv in 0..SUB {
                        let p = raster.point_in_bin_raster(
                            bd,
                            l,
                            (su as f64 + 0.5) / SUB as f64,
                            (sv as f64 + 0.5) / SUB as f64,
                        );
                        ds += inside_signed(&a, &b, &c, &p);
                    }
                }
                if dc != 0 || ds != 0 {
                    out.push((bin as u32, dc, ds));
                }
            }
        }
        Ok(out)
    }

    /// Degree field of the map restricted to the disc bounded by ring `ring`.
    pub fn degree_raster(&self, ring: usize, raster: &SphereRaster) -> Result<DegreeField> {
        let parts: Vec<Vec<(u32, i32, i32)>> =
            (0..=ring).into_par_iter().map(|i| self.ring_coverage(raster, i)).collect::<Result<_>>()?;
        let mut center = vec![0i32; raster.len()];
        let mut sub = vec![0i32; raster.len()];
        for part in parts {
            for (bin, dc, ds) in part {
                center[bin as usize] += dc;
                sub[bin as usize] += ds;
            }
        }
        let boundary = self.boundary_bins(ring, raster);
        let n_sub = (SUB * SUB) as f64;
        let mut max_interior = 0.0f64;
        let mut max_any = 0.0f64;
        for k in 0..raster.len() {
            let r = (sub[k] as f64 / n_sub - center[k] as f64).abs();
            max_any = max_any.max(r);
            if !boundary[k] {
                max_interior = max_interior.max(r);
            }
        }
        if max_interior > 0.25 {
            return Err(Error::Resolution(format!(
                "degree raster residual {max_interior:.3} away from the boundary image"
            )));
        }
        Ok(DegreeField {
            raster: raster.clone(),
            values: center,
            radius: self.grid.rho[ring],
            ring,
            max_residual: max_any,
            max_interior_residual: max_interior,
        })
    }

    /// Bins touched by the (piecewise great-circle) image of the boundary ring.
    fn boundary_bins(&self, ring: usize, raster: &SphereRaster) -> Vec<bool> {
        let g = &self.grid;
        let nt = g.n_theta;
        let spacing = (raster.bin_weight()).sqrt() / 4.0;
        let mut mark = vec![false; raster.len()];
        for j in 0..nt {
            let a = raster.to_raster_frame(&self.normals[g.idx(ring, j)]);
            let b = raster.to_raster_frame(&self.normals[g.idx(ring, (j + 1) % nt)]);
            let ang = a.dot(&b).clamp(-1.0, 1.0).acos();
            let n = ((ang / spacing).ceil() as usize).max(1);
            for s in 0..=n {
                let t = s as f64 / n as f64;
                let p = slerp(&a, &b, ang, t);
                mark[raster.bin_of_raster(&p)] = true;
            }
        }
        mark
    }

    /// `∫_{S²} deg(·, B_{ρ_i}, ν)` for every ring `i` at once, by accumulating
    /// signed bin-center coverage ring by ring.
    pub fn degree_integral_profile(&self, raster: &SphereRaster) -> Result<Vec<f64>> {
        let w = raster.bin_weight();
        let per_ring: Vec<i64> = (0..self.grid.n_rho)
            .into_par_iter()
            .map(|i| {
                let mut cand = Vec::new();
                let mut acc = 0i64;
                for t in self.ring_triangles(i) {
                    let [a, b, c] = self.image(&t).map(|v| raster.to_raster_frame(&v));
                    if a.cross(&b).dot(&c) == 0.0 {
                        continue;
                    }
                    let sum = a + b + c;
                    if sum.norm() < 1e-12 {
                        return Err(Error::Resolution("image triangle spans a great circle".into()));
                    }
                    let m = sum.normalize();
                    let radius =
                        [a, b, c].iter().map(|v| m.dot(v).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
                    if radius > 0.5 {
                        return Err(Error::Resolution(format!(
                            "image of a ring-{i} triangle has angular radius {radius:.3} > 0.5"
                        )));
                    }
                    raster.bins_near_cap(&m, radius, &mut cand);
                    for &bin in &cand {
                        acc += inside_signed(&a, &b, &c, &raster.center_raster(bin)) as i64;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(per_ring.len());
        let mut cum = 0i64;
        for c in per_ring {
            cum += c;
            out.push(cum as f64 * w);
        }
        Ok(out)
    }
}

const SUB: usize = 3;

fn slerp(a: &Vec3, b: &Vec3, ang: f64, t: f64) -> Vec3 {
    if ang < 1e-12 {
        return *a;
    }
    (a * ((1.0 - t) * ang).sin() + b * (t * ang).sin()) / ang.sin()
}

/// Angular distance from `y` to the minor great-circle arc `ab`.
fn arc_distance(a: &Vec3, b: &Vec3, y: &Vec3) -> f64 {
    let n = a.cross(b);
    let ang = |u: &Vec3, v: &Vec3| u.dot(v).clamp(-1.0, 1.0).acos();
    let end = ang(a, y).min(ang(b, y));
    if n.norm() < 1e-15 {
        return end;
    }
    let n = n.normalize();
    let proj = y - n * n.dot(y);
    if proj.norm() < 1e-15 {
        return end;
    }
    let p = proj.normalize();
    // p lies on the arc iff it is between a and b
    if a.cross(&p).dot(&n) >= 0.0 && p.cross(b).dot(&n) >= 0.0 {
        n.dot(y).abs().asin()
    } else {
        end
    }
}

/// `±1` if `y` lies strictly inside the spherical triangle `abc` (sign of its
/// orientation), else `0`.
fn inside_signed(a: &Vec3, b: &Vec3, c: &Vec3, y: &Vec3) -> i32 {
    let o = a.cross(b).dot(c);
    if o == 0.0 || y.dot(&(a + b + c)) <= 0.0 {
        return 0;
    }
    let s = o.signum();
    if s * a.cross(b).dot(y) > 0.0 && s * b.cross(c).dot(y) > 0.0 && s * c.cross(a).dot(y) > 0.0 {
        s as i32
    } else {
        0
    }
}

/// Integer degree per raster bin for the normal field on `B_R`.
#[derive(Debug, Clone)]
pub struct DegreeField {
    pub raster: SphereRaster,
    pub values: Vec<i32>,
    pub radius: f64,
    pub ring: usize,
    /// Largest `|subsample mean − center value|` over all bins.
    pub max_residual: f64,
    /// The same, excluding bins crossed by the boundary image.
    pub max_interior_residual: f64,
}

impl DegreeField {
    pub fn total_degree_integral(&self) -> f64 {
        self.raster.bin_weight() * self.values.iter().map(|&v| v as f64).sum::<f64>()
    }

    /// Total variation of the field: perimeters of all level sets.
    pub fn level_set_perimeter(&self) -> f64 {
        self.raster.jump_length(&self.values)
    }

    pub fn value_at(&self, y: &Vec3) -> i32 {
        self.values[self.raster.bin_of(y)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lat_rad,lon_rad,degree_count\n");
        for (k, v) in self.values.iter().enumerate() {
            let c = self.raster.bin_center(k);
            s.push_str(&format!("{:.9},{:.9},{}\n", c.z.clamp(-1.0, 1.0).asin(), c.y.atan2(c.x), v));
        }
        s
    }
}

/// `∫_{∂B_{ρ_i}} |∂_τ ν| dℋ¹ = ∫ |∂θ ν| dθ` on ring `i`.
pub fn boundary_variation(geo: &Geometry, ring: usize) -> f64 {
    let g = &geo.grid;
    let rho = g.rho[ring];
    (0..g.n_theta).map(|j| rho * geo.nu_t[g.idx(ring, j)].norm()).sum::<f64>() * g.dtheta()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoperimetricRecord {
    pub radius: f64,
    pub boundary_variation: f64,
    pub kappa: f64,
    pub f_value: f64,
    pub residual: f64,
    pub pass: bool,
}

/// Residual `∫_{∂B_R}|Dν| − F(dist_4pi(𝒦(B_R)))` at every requested ring,
/// with `𝒦` the degree integral of the Gauss map.
pub fn isoperimetric_check(
    geo: &Geometry,
    raster: &SphereRaster,
    rings: &[usize],
    slack: f64,
) -> Result<Vec<IsoperimetricRecord>> {
    let gm = GaussMap::from_geometry(geo)?;
    let kappa = gm.degree_integral_profile(raster)?;
    Ok(rings
        .iter()
        .map(|&i| {
            let bv = boundary_variation(geo, i);
            let fv = f_tilde(kappa[i]);
            let residual = bv - fv;
            IsoperimetricRecord {
                radius: geo.grid.rho[i],
                boundary_variation: bv,
                kappa: kappa[i],
                f_value: fv,
                residual,
                pass: residual >= -slack,
            }
        })
        .collect())
}

/// `(1/2π) ∫_a^b F̃(𝒦(B_ρ))² dρ/ρ`, trapezoidal in `ln ρ` on the profile radii.
pub fn jensen_integral(profile: &CurvatureProfile, a: f64, b: f64) -> f64 {
    let mut s = vec![a.ln()];
    let mut v = vec![f_tilde(profile.value_at(a)).powi(2)];
    for (&r, &k) in profile.rho_values.iter().zip(&profile.kappa_values) {
        if r > a && r < b {
            s.push(r.ln());
            v.push(f_tilde(k).powi(2));
        }
    }
    s.push(b.ln());
    v.push(f_tilde(profile.value_at(b)).powi(2));
    crate::quadrature::trapezoid(&s, &v) / (2.0 * PI)
}

/// The integral over the whole profile range `[ρ_min, 1]`.
pub fn jensen_lower_bound(profile: &CurvatureProfile) -> f64 {
    jensen_integral(profile, profile.rho_values[0], *profile.rho_values.last().unwrap())
}

/// Dyadic bookkeeping of the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicAssembly {
    pub h1: f64,
    pub levels: u32,
    /// `C* log 2^J`
    pub main_term: f64,
    /// `(1/2π) ∫_{h1}^{2^J h1} |F̃(𝒦)² − F̃(2π(1−m0))²| dρ/ρ`, measured.
    pub error_measured: f64,
    /// `Σ_j R_j⁻¹ C h^{1/2} (2R_j)^{1/2} |log h|^{3/4}` with the supplied `C`.
    pub error_bound: f64,
    /// `main_term − error_measured`
    pub estimate: f64,
}

pub fn dyadic_assembly(profile: &CurvatureProfile, params: &ConeParams, c1: f64, c_kappa: f64) -> Result<DyadicAssembly> {
    let h = params.h;
    let l = params.abs_log_h();
    let h1 = 2.0 * c1 * h * l.powf(1.5);
    let upper = 1.0 - c1 * h * l.sqrt();
    if !(h1 > 0.0) || h1 * 2.0 > upper {
        return Err(Error::OutOfRange(format!("no dyadic level fits: h1 = {h1}, upper end {upper}")));
    }
    let levels = (upper / h1).log2().floor() as u32;
    let target = f_tilde(params.tip_curvature()).powi(2);
    let mut err = 0.0;
    let mut bound = 0.0;
    for j in 0..levels {
        let rj = h1 * 2f64.powi(j as i32);
        err += shell_error(profile, rj, 2.0 * rj, target);
        bound += c_kappa * h.sqrt() * (2.0 * rj).sqrt() * l.powf(0.75) / rj;
    }
    let main = params.c_star() * levels as f64 * 2f64.ln();
    Ok(DyadicAssembly { h1, levels, main_term: main, error_measured: err, error_bound: bound, estimate: main - err })
}

fn shell_error(profile: &CurvatureProfile, a: f64, b: f64, target: f64) -> f64 {
    let mut s = vec![a.ln()];
    let mut v = vec![(f_tilde(profile.value_at(a)).powi(2) - target).abs()];
    for (&r, &k) in profile.rho_values.iter().zip(&profile.kappa_values) {
        if r > a && r < b {
            s.push(r.ln());
            v.push((f_tilde(k).powi(2) - target).abs());
        }
    }
    s.push(b.ln());
    v.push((f_tilde(profile.value_at(b)).powi(2) - target).abs());
    crate::quadrature::trapezoid(&s, &v) / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::sample_ansatz;
    use crate::curvature::kappa_profile_of;
    use crate::surfaces;

    #[test]
    fn f_and_dist_values() {
        assert_eq!(f_iso(0.0), 0.0);
        assert!(f_iso(4.0 * PI).abs() < 1e-6);
        assert!((f_iso(2.0 * PI) - 2.0 * PI).abs() < 1e-12);
        assert!(dist_4pi(4.0 * PI).abs() < 1e-12);
        assert!((dist_4pi(2.0 * PI) - 2.0 * PI).abs() < 1e-12);
        assert!((dist_4pi(9.0 * PI) - PI).abs() < 1e-12);
        assert!((f_tilde(PI).powi(2) - 3.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn raster_weights_and_lookup() {
        let r = SphereRaster::new(20_000, Some(default_tilt())).unwrap();
        // compensated sum, so only the weights themselves are tested
        let (mut total, mut comp) = (0.0f64, 0.0f64);
        for (_, w) in r.bins() {
            assert!(w > 0.0);
            let t = total + w;
            comp += if total.abs() >= w.abs() { (total - t) + w } else { (w - t) + total };
            total = t;
        }
        assert!((total + comp - 4.0 * PI).abs() < 1e-12);
        for k in (0..r.len()).step_by(37) {
            assert_eq!(r.bin_of(&r.bin_center(k)), k);
        }
        // area fraction of a polar cap via bin counting
        let n = (0..r.len()).filter(|&k| r.center_raster(k).z > 0.5).count();
        assert!((n as f64 * r.bin_weight() - PI).abs() < 0.05);
    }

    #[test]
    fn jump_length_of_hemisphere_indicator() {
        let r = SphereRaster::new(40_000, None).unwrap();
        let v: Vec<i32> = (0..r.len()).map(|k| (r.center_raster(k).z > 0.0) as i32).collect();
        assert!((r.jump_length(&v) - 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn sphere_cap_degree() {
        let g = PolarGrid::new(60, 128, 1e-3).unwrap();
        let geo = surfaces::sphere_cap(&g, PI / 2.0).geometry().unwrap();
        let gm = GaussMap::from_geometry(&geo).unwrap();
        let raster = SphereRaster::new(50_000, Some(default_tilt())).unwrap();
        let ring = g.n_rho - 1;
        let field = gm.degree_raster(ring, &raster).unwrap();
        assert!((field.total_degree_integral() - 2.0 * PI).abs() < 2e-2);
        assert_eq!(gm.degree_point(ring, &Vec3::z()).unwrap(), 1);
        assert_eq!(gm.degree_point(ring, &-Vec3::z()).unwrap(), 0);
        let on_boundary = gm.normals[g.idx(ring, 5)];
        assert!(gm.degree_point(ring, &on_boundary).is_err());
    }

    #[test]
    fn double_wrap_has_degree_two() {
        let g = PolarGrid::new(60, 128, 1e-3).unwrap();
        let geo = surfaces::double_wrap_cap(&g, 1.0).geometry().unwrap();
        let gm = GaussMap::from_geometry(&geo).unwrap();
        let y = Vec3::new(0.1, 0.2, 1.0);
        assert_eq!(gm.degree_point(g.n_rho - 1, &y).unwrap(), 2);
    }

    #[test]
    fn flat_disc_degree_zero() {
        let g = PolarGrid::new(20, 32, 1e-2).unwrap();
        let geo = surfaces::flat_disc(&g).geometry().unwrap();
        let gm = GaussMap::from_geometry(&geo).unwrap();
        let raster = SphereRaster::new(5_000, Some(default_tilt())).unwrap();
        let f = gm.degree_raster(g.n_rho - 1, &raster).unwrap();
        assert!(f.values.iter().all(|&v| v == 0));
        assert_eq!(f.total_degree_integral(), 0.0);
        assert!(boundary_variation(&geo, g.n_rho - 1) < 1e-12);
    }

    #[test]
    fn ansatz_isoperimetric_and_jensen() {
        let p = ConeParams::new(0.5, 1.0 / 64.0).unwrap();
        let g = PolarGrid::with_density(p.h / 8.0, 60.0, 256).unwrap();
        let geo = sample_ansatz(&g, &p).geometry().unwrap();
        let raster = SphereRaster::new(200_000, Some(default_tilt())).unwrap();
        let rings: Vec<usize> = (0..g.n_rho).filter(|&i| g.rho[i] >= p.h).collect();
        let rec = isoperimetric_check(&geo, &raster, &rings, 1e-2).unwrap();
        for r in &rec {
            assert!(r.pass, "{r:?}");
            assert!((r.kappa - PI).abs() < 5e-3, "{r:?}");
        }
        let prof = kappa_profile_of(&geo);
        let j = jensen_integral(&prof, p.h, 1.0);
        assert!((j - p.c_star() * p.abs_log_h()).abs() < 1e-2 * j);
        let d = dyadic_assembly(&prof, &p, 1.0, 1.0).unwrap();
        assert!(d.levels >= 1 && d.estimate <= p.c_star() * p.abs_log_h());
        assert!(dyadic_assembly(&prof, &ConeParams::new(0.5, 0.3).unwrap(), 2.0, 1.0).is_err());
    }
}
