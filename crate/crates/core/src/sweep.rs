//! Sweeps over the thickness `h` and least-squares scaling fits of `E/h²`
//! against `|log h|`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ansatz_energy, sample_ansatz};
use crate::curvature::kappa_profile_of;
use crate::energy::{total_energy_geo, FunctionalTag};
use crate::error::{Error, Result};
use crate::geodesic::{analyze, ShootOptions};
use crate::geometry::Immersion;
use crate::grid::PolarGrid;
use crate::minimize::{minimize, OptimizerConfig};
use crate::params::{c_star, ConeParams};
use crate::sphere::jensen_integral;
use crate::surfaces::rounded_cone;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub m0: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Residuals of the fitted line.
    pub residuals: Vec<f64>,
    pub c_star_reference: f64,
    /// `E/h² − C*|log h|` per point.
    pub reference_residuals: Vec<f64>,
}

impl ScalingFit {
    pub fn slope_relative_error(&self) -> f64 {
        (self.slope - self.c_star_reference).abs() / self.c_star_reference
    }

    pub fn reference_spread(&self) -> f64 {
        spread(&self.reference_residuals)
    }
}

pub fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// True when the sequence is strictly monotone and its spread exceeds `tol`;
/// variations below `tol` are treated as noise.
pub fn has_monotone_trend(v: &[f64], tol: f64) -> bool {
    if v.len() < 3 || spread(v) <= tol {
        return false;
    }
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

/// Least-squares line through `(|log h|, E/h²)`; needs at least four points.
pub fn scaling_fit(m0: f64, hs: &[f64], energy_over_h2: &[f64]) -> Result<ScalingFit> {
    if hs.len() != energy_over_h2.len() {
        return Err(Error::Fit(format!("{} radii but {} energies", hs.len(), energy_over_h2.len())));
    }
    if hs.len() < 4 {
        return Err(Error::Fit(format!("a scaling fit needs at least 4 sweep points, got {}", hs.len())));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln().abs()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = energy_over_h2.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all sweep points share the same h".into()));
    }
    let sxy: f64 = x.iter().zip(energy_over_h2).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let cs = c_star(m0);
    Ok(ScalingFit {
        m0,
        slope,
        intercept,
        residuals: x.iter().zip(energy_over_h2).map(|(a, b)| b - (slope * a + intercept)).collect(),
        c_star_reference: cs,
        reference_residuals: x.iter().zip(energy_over_h2).map(|(a, b)| b - cs * a).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Ansatz,
    Minimize,
    Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    #[default]
    Ansatz,
    RoundedCone,
}

impl InitialGuess {
    pub fn build(&self, grid: &PolarGrid, p: &ConeParams) -> Immersion {
        match self {
            InitialGuess::Ansatz => sample_ansatz(grid, p),
            InitialGuess::RoundedCone => rounded_cone(grid, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub m0: f64,
    /// Descending thicknesses, each below `1/e`.
    pub h_list: Vec<f64>,
    /// Radial density of the grids for sampling and diagnostics.
    #[serde(default = "default_density")]
    pub nodes_per_decade: f64,
    /// Radial density of the grid the minimizer works on.
    #[serde(default = "default_minimize_density")]
    pub minimize_nodes_per_decade: f64,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<Pipeline>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub initial: InitialGuess,
}

fn default_density() -> f64 {
    400.0
}

fn default_minimize_density() -> f64 {
    20.0
}

fn default_n_theta() -> usize {
    32
}

fn default_pipelines() -> Vec<Pipeline> {
    vec![Pipeline::Ansatz]
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if !(self.m0 > 0.0 && self.m0 < 1.0) {
            return bad("m0", format!("{} must lie in (0, 1)", self.m0));
        }
        if self.h_list.is_empty() {
            return bad("h_list", "must not be empty".into());
        }
        if let Some(h) = self.h_list.iter().find(|&&h| !(h > 0.0 && h < (-1.0f64).exp())) {
            return bad("h_list", format!("{h} is not in (0, 1/e)"));
        }
        if self.h_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad("h_list", "must be strictly descending".into());
        }
        if !(self.nodes_per_decade > 0.0) {
            return bad("nodes_per_decade", "must be positive".into());
        }
        if !(self.minimize_nodes_per_decade > 0.0) {
            return bad("minimize_nodes_per_decade", "must be positive".into());
        }
        if self.n_theta < 16 {
            return bad("n_theta", "must be at least 16".into());
        }
        self.optimizer.validate()
    }

    pub fn grid_for(&self, h: f64) -> Result<PolarGrid> {
        PolarGrid::with_density(h / 8.0, self.nodes_per_decade, self.n_theta)
    }

    pub fn minimize_grid_for(&self, h: f64) -> Result<PolarGrid> {
        PolarGrid::with_density(h / 8.0, self.minimize_nodes_per_decade, self.n_theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub assumption1_pass: bool,
    pub linf_over_h: f64,
    pub g_discrepancy: f64,
    /// Jensen integral over `[h, 1]` divided by `C*|log h|`.
    pub jensen_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub ansatz_energy_over_h2: Option<f64>,
    pub sampled_energy_over_h2: Option<f64>,
    pub minimized_energy_over_h2: Option<f64>,
    pub diagnostics: Option<DiagnosticSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub m0: f64,
    pub rows: Vec<SweepRow>,
    pub fit_ansatz: std::result::Result<ScalingFit, String>,
    pub fit_sampled: std::result::Result<ScalingFit, String>,
    pub fit_minimized: std::result::Result<ScalingFit, String>,
}

fn run_point(cfg: &SweepConfig, h: f64) -> SweepRow {
    let mut row = SweepRow {
        h,
        ansatz_energy_over_h2: None,
        sampled_energy_over_h2: None,
        minimized_energy_over_h2: None,
        diagnostics: None,
        error: None,
    };
    let res: Result<()> = (|| {
        let p = ConeParams::new(cfg.m0, h)?;
        let h2 = h * h;
        if cfg.pipelines.contains(&Pipeline::Ansatz) {
            row.ansatz_energy_over_h2 = Some(ansatz_energy(&p, 1e-11).breakdown.total / h2);
        }
        let needs_grid = cfg.pipelines.iter().any(|x| *x != Pipeline::Ansatz);
        if !needs_grid {
            return Ok(());
        }
        let grid = cfg.grid_for(h)?;
        let imm = sample_ansatz(&grid, &p);
        let geo = imm.geometry()?;
        row.sampled_energy_over_h2 = Some(total_energy_geo(&geo, &p, FunctionalTag::SupMembrane).total / h2);
        if cfg.pipelines.contains(&Pipeline::Minimize) {
            let start = cfg.initial.build(&cfg.minimize_grid_for(h)?, &p);
            let r = minimize(&start, &p, &cfg.optimizer)?;
            row.minimized_energy_over_h2 = Some(r.energy.total / h2);
        }
        if cfg.pipelines.contains(&Pipeline::Diagnostics) {
            let a = analyze(&imm, &ShootOptions::default())?;
            let r0 = a.fan.r0(h).ok_or_else(|| Error::OutOfRange("fan does not reach ρ = 2h".into()))?;
            let linf = a.fields.linf_deviation(r0, h);
            let g_disc = a.g.as_ref().map(|g| g.max_discrepancy(&grid, h)).unwrap_or(f64::NAN);
            let prof = kappa_profile_of(&geo);
            row.diagnostics = Some(DiagnosticSummary {
                assumption1_pass: a.report.pass,
                linf_over_h: linf / h,
                g_discrepancy: g_disc,
                jensen_ratio: jensen_integral(&prof, h, 1.0) / (p.c_star() * p.abs_log_h()),
            });
        }
        Ok(())
    })();
    if let Err(e) = res {
        row.error = Some(e.to_string());
    }
    row
}

fn fit_column(m0: f64, rows: &[SweepRow], pick: impl Fn(&SweepRow) -> Option<f64>) -> std::result::Result<ScalingFit, String> {
    let (hs, es): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| pick(r).map(|e| (r.h, e))).unzip();
    scaling_fit(m0, &hs, &es).map_err(|e| e.to_string())
}

/// Runs every sweep point (in parallel; results keep the order of `h_list`)
/// and fits each energy column. Failures are recorded per point.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let rows: Vec<SweepRow> = cfg.h_list.par_iter().map(|&h| run_point(cfg, h)).collect();
    let res = SweepResult {
        m0: cfg.m0,
        fit_ansatz: fit_column(cfg.m0, &rows, |r| r.ansatz_energy_over_h2),
        fit_sampled: fit_column(cfg.m0, &rows, |r| r.sampled_energy_over_h2),
        fit_minimized: fit_column(cfg.m0, &rows, |r| r.minimized_energy_over_h2),
        rows,
    };
    if let Some(dir) = &cfg.output_dir {
        write_sweep(&res, dir)?;
    }
    Ok(res)
}

pub const SWEEP_CSV_HEADER: &str = "m0,h_ref_units,abs_log_h,ansatz_energy_over_h2_dimensionless,\
sampled_energy_over_h2_dimensionless,minimized_energy_over_h2_dimensionless,assumption1_pass,\
linf_over_h_dimensionless,g_discrepancy_dimensionless,jensen_ratio_dimensionless,error";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub fn sweep_csv(res: &SweepResult) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    for r in &res.rows {
        let d = r.diagnostics;
        s.push_str(&format!(
            "{},{:.12e},{:.12e},{},{},{},{},{},{},{},{}\n",
            res.m0,
            r.h,
            r.h.ln().abs(),
            opt(r.ansatz_energy_over_h2),
            opt(r.sampled_energy_over_h2),
            opt(r.minimized_energy_over_h2),
            d.map(|d| d.assumption1_pass.to_string()).unwrap_or_default(),
            opt(d.map(|d| d.linf_over_h)),
            opt(d.map(|d| d.g_discrepancy)),
            opt(d.map(|d| d.jensen_ratio)),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    s
}

/// Writes `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_sweep(res: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("sweep.csv"), &sweep_csv(res))?;
    write_atomic(&dir.join("fit.json"), &serde_json::to_string_pretty(res)?)?;
    Ok(())
}
