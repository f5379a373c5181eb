//! Relaxation of the discrete energy over node positions: analytic gradient,
//! limited-memory quasi-Newton descent and continuation in the membrane
//! exponent `p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBreakdown, FunctionalTag};
use crate::error::{Error, Result};
use crate::geodesic::{analyze, Assumption1Report, ShootOptions};
use crate::geometry::Immersion;
use crate::grid::{DiffOps, PolarGrid, Vec3, RADIUS_EPS};
use crate::params::ConeParams;

/// Value of the discrete energy at one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub p: u32,
    /// `p`-mean surrogate of the sup membrane term.
    pub membrane_p: f64,
    pub membrane_sup: f64,
    pub bending: f64,
}

impl EnergyParts {
    pub fn surrogate(&self) -> f64 {
        self.membrane_p + self.bending
    }

    pub fn true_energy(&self) -> EnergyBreakdown {
        EnergyBreakdown::new(self.membrane_sup, self.bending, FunctionalTag::SupMembrane)
    }
}

/// Precomputed operators and weights for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct DiscreteEnergy {
    pub grid: PolarGrid,
    pub params: ConeParams,
    ops: DiffOps,
    membrane_w: Vec<f64>,
    bending_w: Vec<f64>,
    mask: Vec<bool>,
    inv_rho: Vec<f64>,
}

impl DiscreteEnergy {
    pub fn new(grid: &PolarGrid, params: &ConeParams) -> Self {
        let nt = grid.n_theta;
        let w = grid.node_weights();
        let cap = grid.cap_weight();
        let bending_w: Vec<f64> = (0..grid.len()).map(|k| w[k] + if k < nt { cap } else { 0.0 }).collect();
        let mask: Vec<bool> = (0..grid.len()).map(|k| grid.rho[k / nt] >= params.h * (1.0 - RADIUS_EPS)).collect();
        Self {
            grid: grid.clone(),
            params: *params,
            ops: DiffOps::new(grid),
            membrane_w: w,
            bending_w,
            mask,
            inv_rho: grid.rho.iter().map(|r| 1.0 / r).collect(),
        }
    }

    fn scale_rings(&self, f: &mut [Vec3]) {
        let nt = self.grid.n_theta;
        for (i, ring) in f.chunks_mut(nt).enumerate() {
            for v in ring {
                *v *= self.inv_rho[i];
            }
        }
    }

    /// Energy with membrane exponent `p`, and its gradient when requested.
    pub fn evaluate(&self, pos: &[Vec3], p: u32, want_grad: bool) -> Result<(EnergyParts, Option<Vec<Vec3>>)> {
        if p < 2 {
            return Err(Error::InvalidParameter(format!("membrane exponent p = {p} < 2")));
        }
        let g = &self.grid;
        let n = g.len();
        if pos.len() != n {
            return Err(Error::InvalidGrid(format!("{} positions for {} nodes", pos.len(), n)));
        }
        let nt = g.n_theta;
        let m2 = self.params.m0 * self.params.m0;
        let y_r = self.ops.d_rho(pos);
        let mut y_t = self.ops.d_theta_vec3(pos);
        self.scale_rings(&mut y_t);

        // normals and metric error per node
        let per_node: Vec<(Vec3, f64, f64, [f64; 3])> = (0..n)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (y_r[k], y_t[k]);
                let c = a.cross(&b);
                let len = c.norm();
                let (p1, p2, p3) = (a.dot(&a), a.dot(&b), b.dot(&b));
                let q = (p1 - 1.0).powi(2) + 2.0 * p2 * p2 + (p3 - m2).powi(2);
                (c, len, q, [2.0 * (p1 - 1.0), 4.0 * p2, 2.0 * (p3 - m2)])
            })
            .collect();
        let mut nu = Vec::with_capacity(n);
        for (k, (c, len, _, _)) in per_node.iter().enumerate() {
            if !(*len > 1e-14 * (y_r[k].norm() * y_t[k].norm()).max(1e-300)) {
                let (i, j) = g.split(k);
                return Err(Error::Degenerate { node: k, i_rho: i, i_theta: j, what: "rank-deficient Jacobian" });
            }
            nu.push(c / *len);
        }
        let nu_r = self.ops.d_rho(&nu);
        let mut nu_t = self.ops.d_theta_vec3(&nu);
        self.scale_rings(&mut nu_t);

        let h2 = self.params.h * self.params.h;
        let ring_bend: Vec<f64> = (0..g.n_rho)
            .map(|i| {
                (0..nt)
                    .map(|j| {
                        let k = i * nt + j;
                        self.bending_w[k] * (nu_r[k].norm_squared() + nu_t[k].norm_squared())
                    })
                    .sum::<f64>()
            })
            .collect();
        let bending = h2 * ring_bend.iter().sum::<f64>();

        let q: Vec<f64> = per_node.iter().map(|x| x.2).collect();
        let qmax = q.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(v, _)| *v).fold(0.0, f64::max);
        let den: f64 = self.membrane_w.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(w, _)| *w).sum();
        let membrane_p = crate::energy::pnorm_mean(&q, &self.membrane_w, &self.mask, p);
        let parts = EnergyParts { p, membrane_p, membrane_sup: qmax, bending };
        if !want_grad {
            return Ok((parts, None));
        }

        // adjoints of y_r, y_t from the membrane term
        let mut gy_r = vec![Vec3::zeros(); n];
        let mut gy_t = vec![Vec3::zeros(); n];
        if membrane_p > 0.0 {
            for k in 0..n {
                if !self.mask[k] {
                    continue;
                }
                let c = self.membrane_w[k] * (q[k] / membrane_p).powi(p as i32 - 1) / den;
                let [d1, d2, d3] = per_node[k].3;
                gy_r[k] = (y_r[k] * (2.0 * d1) + y_t[k] * d2) * c;
                gy_t[k] = (y_r[k] * d2 + y_t[k] * (2.0 * d3)) * c;
            }
        }

        // bending: ν̄ = D_ρᵀ ν̄_ρ − D_θ(ν̄_θ / ρ), using the skew-symmetry of D_θ
        let mut gnu = vec![Vec3::zeros(); n];
        let g_nr: Vec<Vec3> = (0..n).map(|k| nu_r[k] * (2.0 * h2 * self.bending_w[k])).collect();
        let mut g_nt: Vec<Vec3> = (0..n).map(|k| nu_t[k] * (2.0 * h2 * self.bending_w[k])).collect();
        self.ops.d_rho_adjoint_add(&g_nr, &mut gnu);
        self.scale_rings(&mut g_nt);
        let dt = self.ops.d_theta_vec3(&g_nt);
        for k in 0..n {
            gnu[k] -= dt[k];
        }
        for k in 0..n {
            let (_, len, _, _) = per_node[k];
            let gn = (gnu[k] - nu[k] * nu[k].dot(&gnu[k])) / len;
            gy_r[k] += y_t[k].cross(&gn);
            gy_t[k] += gn.cross(&y_r[k]);
        }

        let mut grad = vec![Vec3::zeros(); n];
        self.ops.d_rho_adjoint_add(&gy_r, &mut grad);
        self.scale_rings(&mut gy_t);
        let dt = self.ops.d_theta_vec3(&gy_t);
        for k in 0..n {
            grad[k] -= dt[k];
        }
        Ok((parts, Some(grad)))
    }
}

impl DiscreteEnergy {
    /// Per-node bending contributions `h² W |Dν|²` and squared metric
    /// errors `q`, so differences of the energy can be formed term by term.
    pub fn node_terms(&self, pos: &[Vec3]) -> Result<(Vec<f64>, Vec<f64>)> {
        let imm = Immersion { grid: self.grid.clone(), positions: pos.to_vec(), center: Vec3::zeros() };
        let geo = imm.geometry()?;
        let h2 = self.params.h * self.params.h;
        let bend = geo.normal_jacobian_sq().iter().zip(&self.bending_w).map(|(d, w)| h2 * w * d).collect();
        Ok((bend, crate::energy::metric_error_sq(&geo, &self.params)))
    }

    pub fn membrane_weights(&self) -> (&[f64], &[bool]) {
        (&self.membrane_w, &self.mask)
    }
}

/// Surrogate energy `membrane_p + bending` of an immersion.
pub fn discrete_energy(imm: &Immersion, params: &ConeParams, p: u32) -> Result<f64> {
    Ok(DiscreteEnergy::new(&imm.grid, params).evaluate(&imm.positions, p, false)?.0.surrogate())
}

/// Gradient of [`discrete_energy`], flattened as `(x, y, z)` per node.
pub fn energy_gradient(imm: &Immersion, params: &ConeParams, p: u32) -> Result<Vec<f64>> {
    let (_, g) = DiscreteEnergy::new(&imm.grid, params).evaluate(&imm.positions, p, true)?;
    Ok(flatten(&g.unwrap()))
}

pub fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|x| [x.x, x.y, x.z]).collect()
}

pub fn unflatten(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub p_schedule: Vec<u32>,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub sufficient_decrease: f64,
    pub backtracking_factor: f64,
    pub max_backtracks: usize,
    pub history: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            p_schedule: vec![2, 8, 32],
            max_iterations: 500,
            gradient_tolerance: 1e-9,
            sufficient_decrease: 1e-4,
            backtracking_factor: 0.5,
            max_backtracks: 40,
            history: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if self.p_schedule.is_empty() {
            return bad("p_schedule", "must not be empty".into());
        }
        if self.p_schedule.iter().any(|&p| p < 2 || p % 2 == 1) {
            return bad("p_schedule", "entries must be even integers ≥ 2".into());
        }
        if self.p_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("p_schedule", "must be strictly increasing".into());
        }
        if !(self.gradient_tolerance > 0.0) {
            return bad("gradient_tolerance", "must be positive".into());
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return bad("sufficient_decrease", "must lie in (0, 1)".into());
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return bad("backtracking_factor", "must lie in (0, 1)".into());
        }
        if self.history == 0 {
            return bad("history", "must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage_p: u32,
    pub iteration: usize,
    pub membrane_sup: f64,
    pub bending: f64,
    pub total_sup: f64,
    pub surrogate: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub rows: Vec<TraceRow>,
}

impl OptimizationTrace {
    pub const CSV_HEADER: &'static str = "stage_p,iteration,membrane_sup_dimensionless,bending_dimensionless,\
total_sup_dimensionless,surrogate_dimensionless,gradient_norm_per_ref_unit,step_dimensionless";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.stage_p, r.iteration, r.membrane_sup, r.bending, r.total_sup, r.surrogate, r.gradient_norm, r.step
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub immersion: Immersion,
    pub energy: EnergyBreakdown,
    pub initial_energy: EnergyBreakdown,
    pub trace: OptimizationTrace,
    /// Set when a line search failed to find a decrease.
    pub line_search_failed: bool,
    /// Assumption-1 diagnostic of the returned iterate, or why it could not be computed.
    pub assumption1: std::result::Result<Assumption1Report, String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with Armijo backtracking for each exponent of the schedule; keeps
/// the iterate with the lowest sup-norm energy seen anywhere.
pub fn minimize(initial: &Immersion, params: &ConeParams, config: &OptimizerConfig) -> Result<MinimizeResult> {
    config.validate()?;
    let de = DiscreteEnergy::new(&initial.grid, params);
    let mut x = flatten(&initial.positions);
    let (start, _) = de.evaluate(&initial.positions, config.p_schedule[0], false)?;
    let initial_energy = start.true_energy();
    let mut best_x = x.clone();
    let mut best = initial_energy;
    let mut trace = OptimizationTrace::default();
    let mut failed = false;
    // Initial inverse-Hessian shape: the bending stiffness of a node grows
    // like (h/ρ)² toward the tip.
    let h2 = params.h * params.h;
    let nt = initial.grid.n_theta;
    let diag: Vec<f64> = (0..3 * initial.grid.len())
        .map(|c| {
            let r2 = initial.grid.rho[c / 3 / nt].powi(2);
            r2 / (r2 + h2)
        })
        .collect();

    let eval = |x: &[f64], p: u32| -> Option<(EnergyParts, Vec<f64>)> {
        let (e, g) = de.evaluate(&unflatten(x), p, true).ok()?;
        let f = e.surrogate();
        if !f.is_finite() {
            return None;
        }
        Some((e, flatten(&g.unwrap())))
    };

    for &p in &config.p_schedule {
        let Some((mut e, mut g)) = eval(&x, p) else {
            return Err(Error::Degenerate { node: 0, i_rho: 0, i_theta: 0, what: "iterate became degenerate" });
        };
        let mut s_hist: Vec<Vec<f64>> = Vec::new();
        let mut y_hist: Vec<Vec<f64>> = Vec::new();
        let g0 = dot(&g, &g).sqrt();
        for it in 0..config.max_iterations {
            let gn = dot(&g, &g).sqrt();
            if gn <= config.gradient_tolerance * g0.max(1.0) {
                break;
            }
            // two-loop recursion
            let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
            let m = s_hist.len();
            let mut alpha = vec![0.0; m];
            for i in (0..m).rev() {
                let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
                alpha[i] = rho * dot(&s_hist[i], &d);
                for (dk, yk) in d.iter_mut().zip(&y_hist[i]) {
                    *dk -= alpha[i] * yk;
                }
            }
            let gamma = if m > 0 {
                let y = &y_hist[m - 1];
                let ydy: f64 = y.iter().zip(&diag).map(|(a, b)| a * a * b).sum();
                dot(&s_hist[m - 1], y) / ydy
            } else {
                1.0 / gn.max(1e-300)
            };
            for (dk, dg) in d.iter_mut().zip(&diag) {
                *dk *= gamma * dg;
            }
            for i in 0..m {
                let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
                let beta = rho * dot(&y_hist[i], &d);
                for (dk, sk) in d.iter_mut().zip(&s_hist[i]) {
                    *dk += (alpha[i] - beta) * sk;
                }
            }
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                d = g.iter().map(|v| -v / gn).collect();
                slope = dot(&g, &d);
                s_hist.clear();
                y_hist.clear();
            }
            let f0 = e.surrogate();
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..config.max_backtracks {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                if let Some((en, gnew)) = eval(&xn, p) {
                    if en.surrogate() <= f0 + config.sufficient_decrease * t * slope {
                        accepted = Some((xn, en, gnew));
                        break;
                    }
                }
                t *= config.backtracking_factor;
            }
            let Some((xn, en, gnew)) = accepted else {
                if !s_hist.is_empty() {
                    // drop the curvature history and retry from a scaled gradient step
                    s_hist.clear();
                    y_hist.clear();
                    continue;
                }
                failed = true;
                break;
            };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
            if dot(&s, &yv) > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
                if s_hist.len() == config.history {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(yv);
            }
            x = xn;
            e = en;
            g = gnew;
            let te = e.true_energy();
            trace.rows.push(TraceRow {
                stage_p: p,
                iteration: it,
                membrane_sup: e.membrane_sup,
                bending: e.bending,
                total_sup: te.total,
                surrogate: e.surrogate(),
                gradient_norm: dot(&g, &g).sqrt(),
                step: t * dot(&d, &d).sqrt(),
            });
            if te.total < best.total {
                best = te;
                best_x.clone_from(&x);
            }
        }
    }

    let immersion = Immersion { grid: initial.grid.clone(), positions: unflatten(&best_x), center: initial.center };
    let assumption1 = analyze(&immersion, &ShootOptions::default()).map(|a| a.report).map_err(|e| e.to_string());
    Ok(MinimizeResult { immersion, energy: best, initial_energy, trace, line_search_failed: failed, assumption1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::sample_ansatz;
    use crate::energy::{bending, membrane_pnorm, membrane_sup};
    use crate::surfaces::{self, FourierPerturbation};
    use nalgebra::{Rotation3, Unit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn perturbed(grid: &PolarGrid, p: &ConeParams) -> Immersion {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        FourierPerturbation::random(&mut rng, 0.01, 3).apply(&sample_ansatz(grid, p))
    }

    #[test]
    fn energy_matches_energy_module() {
        let p = ConeParams::new(0.5, 1.0 / 16.0).unwrap();
        let g = PolarGrid::new(32, 64, p.h / 8.0).unwrap();
        let imm = perturbed(&g, &p);
        let (e, _) = DiscreteEnergy::new(&g, &p).evaluate(&imm.positions, 8, false).unwrap();
        assert!((e.bending - bending(&imm, &p).unwrap()).abs() < 1e-12 * e.bending.max(1.0));
        assert!((e.membrane_sup - membrane_sup(&imm, &p).unwrap()).abs() < 1e-14);
        assert!((e.membrane_p - membrane_pnorm(&imm, &p, 8).unwrap()).abs() < 1e-14);
        let flat = surfaces::flat_disc(&g);
        let ef = discrete_energy(&flat, &p, 8).unwrap();
        assert!((ef - 0.5625).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = ConeParams::new(0.5, 1.0 / 16.0).unwrap();
        let g = PolarGrid::new(32, 64, p.h / 8.0).unwrap();
        let imm = perturbed(&g, &p);
        let de = DiscreteEnergy::new(&g, &p);
        for q in [2, 8, 32] {
            let grad = flatten(&de.evaluate(&imm.positions, q, true).unwrap().1.unwrap());
            let x0 = flatten(&imm.positions);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            use rand::Rng;
            let gmax = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let (w, mask) = de.membrane_weights();
            let (b0, q0) = de.node_terms(&imm.positions).unwrap();
            let s0: f64 = (0..q0.len()).filter(|&k| mask[k]).map(|k| w[k] * q0[k].powi(q as i32)).sum();
            let m0 = de.evaluate(&imm.positions, q, false).unwrap().0.membrane_p;
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let c = rng.gen_range(0..x0.len());
                // fourth-order central difference, step proportional to the node
                // radius; the energy difference is
                // summed term by term to keep rounding local
                let eps = 3e-6 * g.rho[c / 3 / g.n_theta];
                let delta = |d: f64| {
                    let mut x = x0.clone();
                    x[c] += d;
                    let (b, qq) = de.node_terms(&unflatten(&x)).unwrap();
                    let db: f64 = b.iter().zip(&b0).map(|(a, z)| a - z).sum();
                    let ds: f64 = (0..qq.len())
                        .filter(|&k| mask[k])
                        .map(|k| w[k] * (qq[k].powi(q as i32) - q0[k].powi(q as i32)))
                        .sum();
                    db + m0 * ((ds / s0).ln_1p() / q as f64).exp_m1()
                };
                let fd = (8.0 * (delta(eps) - delta(-eps)) - (delta(2.0 * eps) - delta(-2.0 * eps))) / (12.0 * eps);
                let rel = (fd - grad[c]).abs() / grad[c].abs().max(fd.abs()).max(1e-9 * gmax);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-5, "p = {q}: {worst}");
        }
    }

    #[test]
    fn gradient_null_directions() {
        let p = ConeParams::new(0.5, 1.0 / 16.0).unwrap();
        let g = PolarGrid::new(32, 64, p.h / 8.0).unwrap();
        let imm = perturbed(&g, &p);
        let grad = energy_gradient(&imm, &p, 8).unwrap();
        let gv = unflatten(&grad);
        let sum: Vec3 = gv.iter().sum();
        assert!(sum.norm() < 1e-10, "{}", sum.norm());
        for e in [Vec3::x(), Vec3::y(), Vec3::z()] {
            let r: f64 = gv.iter().zip(&imm.positions).map(|(gk, y)| gk.dot(&e.cross(y))).sum();
            assert!(r.abs() < 1e-10, "{r}");
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let p = ConeParams::new(0.5, 1.0 / 16.0).unwrap();
        let g = PolarGrid::new(32, 64, p.h / 8.0).unwrap();
        let imm = perturbed(&g, &p);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, 2.0, -0.5)), 0.7);
        let moved = imm.rigid_motion(&rot, &Vec3::new(0.3, -1.0, 2.0));
        let a = discrete_energy(&imm, &p, 8).unwrap();
        let b = discrete_energy(&moved, &p, 8).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig { p_schedule: vec![8, 2], ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { ref key, .. }) if key == "p_schedule"));
        let bad = OptimizerConfig { p_schedule: vec![3], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn minimizing_does_not_increase_energy() {
        let p = ConeParams::new(0.5, 1.0 / 16.0).unwrap();
        let g = PolarGrid::new(24, 32, p.h / 8.0).unwrap();
        let imm = sample_ansatz(&g, &p);
        let cfg = OptimizerConfig { max_iterations: 30, ..Default::default() };
        let r = minimize(&imm, &p, &cfg).unwrap();
        assert!(r.energy.total <= r.initial_energy.total);
        assert!(!r.trace.rows.is_empty());
    }
}
