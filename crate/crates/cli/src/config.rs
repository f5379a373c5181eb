use std::path::{Path, PathBuf};

use conesheet::minimize::OptimizerConfig;
use conesheet::surfaces::{self, FourierPerturbation};
use conesheet::{ansatz, ConeParams, Error, Immersion, PolarGrid, Result};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Parses a JSON config, reporting the path of the offending key on failure.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::Config { key, message: e.into_inner().to_string() }
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse(&std::fs::read_to_string(path)?)
}

fn bad<T>(key: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Config { key: key.into(), message: message.into() })
}

/// Either a fixed ring count or a density in rings per decade of `ρ`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rho_min: f64,
    pub n_theta: usize,
    #[serde(default)]
    pub n_rho: Option<usize>,
    #[serde(default)]
    pub nodes_per_decade: Option<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<PolarGrid> {
        match (self.n_rho, self.nodes_per_decade) {
            (Some(n), None) => PolarGrid::new(n, self.n_theta, self.rho_min),
            (None, Some(d)) => PolarGrid::with_density(self.rho_min, d, self.n_theta),
            _ => bad("grid", "give exactly one of `n_rho` and `nodes_per_decade`"),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    #[default]
    Ansatz,
    RoundedCone,
    Flat,
    ExactCone,
    SphereCap { radius: f64 },
    DoubleWrapCap { radius: f64 },
    File { path: PathBuf },
}

/// Random Fourier displacement drawn from the run's seed.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    #[serde(default = "default_max_l")]
    pub max_l: u32,
}

fn default_max_l() -> u32 {
    3
}

impl PerturbationSpec {
    pub fn draw(&self, rng: &mut impl Rng) -> FourierPerturbation {
        FourierPerturbation::random(rng, self.amplitude, self.max_l)
    }
}

/// Fields shared by every command that works on one sampled surface.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceInput {
    pub m0: f64,
    pub h: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
}

impl SurfaceInput {
    pub fn params(&self) -> Result<ConeParams> {
        ConeParams::new(self.m0, self.h)
    }

    pub fn build(&self, rng: &mut impl Rng) -> Result<(ConeParams, Immersion)> {
        let p = self.params()?;
        let imm = match &self.surface {
            SurfaceSpec::File { path } => Immersion::load(path)?,
            other => {
                let grid = self.grid.build()?;
                match other {
                    SurfaceSpec::Ansatz => ansatz::sample_ansatz(&grid, &p),
                    SurfaceSpec::RoundedCone => surfaces::rounded_cone(&grid, &p),
                    SurfaceSpec::Flat => surfaces::flat_disc(&grid),
                    SurfaceSpec::ExactCone => surfaces::exact_cone(&grid, p.m0),
                    SurfaceSpec::SphereCap { radius } => surfaces::sphere_cap(&grid, *radius),
                    SurfaceSpec::DoubleWrapCap { radius } => surfaces::double_wrap_cap(&grid, *radius),
                    SurfaceSpec::File { .. } => unreachable!(),
                }
            }
        };
        Ok(match &self.perturbation {
            Some(spec) => (p, spec.draw(rng).apply(&imm)),
            None => (p, imm),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzEnergyConfig {
    pub m0: f64,
    pub h_list: Vec<f64>,
    #[serde(default = "default_quad_tol")]
    pub tolerance: f64,
}

fn default_quad_tol() -> f64 {
    1e-11
}

impl AnsatzEnergyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_list.is_empty() {
            return bad("h_list", "must not be empty");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub sheet: SurfaceInput,
    #[serde(default)]
    pub save_immersion: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub sheet: SurfaceInput,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicsConfig {
    pub sheet: SurfaceInput,
    #[serde(default = "default_shoot_tol")]
    pub tolerance: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

fn default_shoot_tol() -> f64 {
    1e-8
}

fn default_r_max() -> f64 {
    10.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    pub sheet: SurfaceInput,
    /// Constant in the admissible window for `R`.
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_n_radii")]
    pub n_radii: usize,
    #[serde(default = "default_f_samples")]
    pub f_samples: usize,
}

fn default_c1() -> f64 {
    2.0
}

fn default_n_radii() -> usize {
    20
}

fn default_f_samples() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeConfig {
    pub sheet: SurfaceInput,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_bins")]
    pub raster_bins: usize,
    #[serde(default = "default_true")]
    pub tilt: bool,
    /// Random regular values at which the raster is compared with the
    /// pointwise degree.
    #[serde(default)]
    pub probes: usize,
}

fn default_radius() -> f64 {
    1.0
}

fn default_bins() -> usize {
    20_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationFamily {
    pub count: usize,
    pub amplitude: f64,
    #[serde(default = "default_max_l")]
    pub max_l: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoperimetricConfig {
    pub sheet: SurfaceInput,
    #[serde(default = "default_n_radii")]
    pub n_radii: usize,
    #[serde(default = "default_bins")]
    pub raster_bins: usize,
    #[serde(default = "default_true")]
    pub tilt: bool,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Extra random perturbations of the base surface, checked after it.
    #[serde(default)]
    pub family: Option<PerturbationFamily>,
}

fn default_slack() -> f64 {
    1e-2
}
