//! Interpolation on the log-polar grid and on periodic samples.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::grid::{AngularDerivative, PolarGrid, RadialStencil};

/// Value and first partials `(f, ∂s f, ∂θ f)` with `s = ln ρ`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sample {
    pub f: f64,
    pub fs: f64,
    pub ft: f64,
}

/// Bicubic Hermite interpolation of several node fields in `(ln ρ, θ)`.
/// Angular slopes are spectral; radial slopes use the outward stencils of
/// [`RadialStencil`], so cells outside a radius never see data inside it.
#[derive(Debug, Clone)]
pub struct FieldInterp {
    n_fields: usize,
    n_rho: usize,
    n_theta: usize,
    s0: f64,
    ds: f64,
    dt: f64,
    /// Per node and field: `[f, f_s, f_θ, f_sθ]`.
    data: Vec<[f64; 4]>,
}

impl FieldInterp {
    pub fn new(grid: &PolarGrid, fields: &[&[f64]]) -> Self {
        let (nr, nt) = (grid.n_rho, grid.n_theta);
        let s: Vec<f64> = grid.rho.iter().map(|r| r.ln()).collect();
        let stencil = RadialStencil::new(&s);
        let ang = AngularDerivative::new(nt);
        let nf = fields.len();
        let mut data = vec![[0.0; 4]; grid.len() * nf];
        for (fi, f) in fields.iter().enumerate() {
            assert_eq!(f.len(), grid.len());
            let mut fs = vec![0.0; grid.len()];
            let mut col = vec![0.0; nr];
            for j in 0..nt {
                for i in 0..nr {
                    col[i] = f[i * nt + j];
                }
                let d = stencil.apply(&col);
                for i in 0..nr {
                    fs[i * nt + j] = d[i];
                }
            }
            for i in 0..nr {
                let mut ft: Vec<f64> = f[i * nt..(i + 1) * nt].to_vec();
                let mut fst: Vec<f64> = fs[i * nt..(i + 1) * nt].to_vec();
                ang.apply_pair(&mut ft, &mut fst);
                for j in 0..nt {
                    let k = i * nt + j;
                    data[k * nf + fi] = [f[k], fs[k], ft[j], fst[j]];
                }
            }
        }
        Self {
            n_fields: nf,
            n_rho: nr,
            n_theta: nt,
            s0: s[0],
            ds: grid.dlog(),
            dt: grid.dtheta(),
            data,
        }
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.s0, self.s0 + self.ds * (self.n_rho - 1) as f64)
    }

    /// Evaluates every field at `(s, θ)`; `s` outside the grid is extrapolated
    /// from the end cell.
    pub fn eval(&self, s: f64, theta: f64, out: &mut [Sample]) {
        let x = (s - self.s0) / self.ds;
        let i = (x.floor().max(0.0) as usize).min(self.n_rho - 2);
        let u = x - i as f64;
        let th = theta.rem_euclid(2.0 * PI);
        let y = th / self.dt;
        let j = (y.floor() as usize).min(self.n_theta - 1);
        let v = y - j as f64;
        let j1 = (j + 1) % self.n_theta;

        let (hu, dhu) = hermite_basis(u);
        let (hv, dhv) = hermite_basis(v);
        let nodes = [
            (i * self.n_theta + j, 0, 0),
            ((i + 1) * self.n_theta + j, 1, 0),
            (i * self.n_theta + j1, 0, 1),
            ((i + 1) * self.n_theta + j1, 1, 1),
        ];
        for (fi, o) in out.iter_mut().enumerate().take(self.n_fields) {
            let (mut f, mut fs, mut ft) = (0.0, 0.0, 0.0);
            for &(k, a, b) in &nodes {
                let d = self.data[k * self.n_fields + fi];
                // Value and slope basis functions for this corner.
                let (pu, qu, dpu, dqu) = (hu[2 * a], hu[2 * a + 1] * self.ds, dhu[2 * a], dhu[2 * a + 1] * self.ds);
                let (pv, qv, dpv, dqv) = (hv[2 * b], hv[2 * b + 1] * self.dt, dhv[2 * b], dhv[2 * b + 1] * self.dt);
                f += pu * pv * d[0] + qu * pv * d[1] + pu * qv * d[2] + qu * qv * d[3];
                fs += dpu * pv * d[0] + dqu * pv * d[1] + dpu * qv * d[2] + dqu * qv * d[3];
                ft += pu * dpv * d[0] + qu * dpv * d[1] + pu * dqv * d[2] + qu * dqv * d[3];
            }
            *o = Sample { f, fs: fs / self.ds, ft: ft / self.dt };
        }
    }
}

/// Cubic Hermite basis `[h00, h10, h01, h11]` and derivatives at `u`.
fn hermite_basis(u: f64) -> ([f64; 4], [f64; 4]) {
    let u2 = u * u;
    let u3 = u2 * u;
    (
        [2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2],
        [6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u],
    )
}

/// Quintic Hermite interpolation on `[0, step]` from value, slope and second
/// derivative at both ends. Returns value and slope at fraction `t`.
pub fn quintic_hermite(t: f64, step: f64, y0: [f64; 3], y1: [f64; 3]) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
    ];
    let d = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
        1.5 * t2 - 4.0 * t3 + 2.5 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
    ];
    let c = [y0[0], step * y0[1], step * step * y0[2], step * step * y1[2], step * y1[1], y1[0]];
    let v: f64 = h.iter().zip(&c).map(|(a, b)| a * b).sum();
    let dv: f64 = d.iter().zip(&c).map(|(a, b)| a * b).sum();
    (v, dv / step)
}

/// Trigonometric interpolant of uniform periodic samples on `[0, 2π)`.
#[derive(Debug, Clone)]
pub struct TrigInterp {
    coeffs: Vec<(f64, Complex<f64>)>,
}

impl TrigInterp {
    pub fn new(samples: &[f64]) -> Self {
        let n = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        let coeffs = buf
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let freq = if 2 * k < n {
                    k as f64
                } else if 2 * k == n {
                    0.0
                } else {
                    k as f64 - n as f64
                };
                // Split the Nyquist coefficient so the interpolant stays real.
                let c = if 2 * k == n { Complex::new(0.0, 0.0) } else { *c };
                (freq, c * scale)
            })
            .filter(|(_, c)| c.norm() > 0.0)
            .collect();
        let mut out = Self { coeffs };
        if n % 2 == 0 {
            let nyq = samples.iter().enumerate().map(|(j, x)| if j % 2 == 0 { *x } else { -*x }).sum::<f64>() * scale;
            if nyq != 0.0 {
                out.coeffs.push((n as f64 / 2.0, Complex::new(0.5 * nyq, 0.0)));
                out.coeffs.push((-(n as f64) / 2.0, Complex::new(0.5 * nyq, 0.0)));
            }
        }
        out
    }

    /// Value and derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let (mut v, mut d) = (0.0, 0.0);
        for &(k, c) in &self.coeffs {
            let e = Complex::from_polar(1.0, k * x);
            let t = c * e;
            v += t.re;
            d += (t * Complex::new(0.0, k)).re;
        }
        (v, d)
    }
}
