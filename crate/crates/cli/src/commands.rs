use std::path::Path;

use conesheet::ansatz::ansatz_energy;
use conesheet::curvature::{
    admissible_r_range, f_function, interpolation_check, kappa_deviation, kappa_profile_of, omega_tracks,
};
use conesheet::energy::{total_energy_geo, EnergyBreakdown, FunctionalTag};
use conesheet::geodesic::{analyze, detestim_diagnostics, MetricField, ShootOptions};
use conesheet::minimize::minimize;
use conesheet::sphere::{default_tilt, isoperimetric_check, jensen_lower_bound, GaussMap, SphereRaster};
use conesheet::sweep::{run_sweep, scaling_fit, write_atomic, SweepConfig};
use conesheet::{Error, Geometry, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::*;

fn e12(x: f64) -> String {
    format!("{x:.12e}")
}

fn write_json(dir: &Path, name: &str, v: &serde_json::Value) -> Result<()> {
    write_atomic(&dir.join(name), &(serde_json::to_string_pretty(v)? + "\n"))
}

/// `n` points spaced evenly in `ln` between `a` and `b`.
fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let mut v: Vec<f64> = (0..n).map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp()).collect();
    v[0] = a;
    v[n - 1] = b;
    v
}

fn raster(bins: usize, tilt: bool) -> Result<SphereRaster> {
    SphereRaster::new(bins, tilt.then(default_tilt))
}

pub fn ansatz_energy_cmd(cfg: &AnsatzEnergyConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let mut csv = String::from(
        "m0_dimensionless,h_ref_units,abs_log_h_dimensionless,bending_cap_over_h2_dimensionless,\
bending_annulus_over_h2_dimensionless,total_over_h2_dimensionless,c_star_abs_log_h_dimensionless\n",
    );
    let mut totals = Vec::new();
    for (k, &h) in cfg.h_list.iter().enumerate() {
        let p = conesheet::ConeParams::new(cfg.m0, h).map_err(|e| Error::Config {
            key: format!("h_list[{k}]"),
            message: e.to_string(),
        })?;
        let a = ansatz_energy(&p, cfg.tolerance);
        let h2 = h * h;
        totals.push(a.breakdown.total / h2);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e12(cfg.m0),
            e12(h),
            e12(p.abs_log_h()),
            e12(a.bending_cap / h2),
            e12(a.bending_annulus / h2),
            e12(a.breakdown.total / h2),
            e12(p.c_star() * p.abs_log_h()),
        ));
    }
    write_atomic(&out.join("ansatz_energy.csv"), &csv)?;
    let fit = match scaling_fit(cfg.m0, &cfg.h_list, &totals) {
        Ok(f) => serde_json::to_value(f)?,
        Err(e) => {
            eprintln!("warning: {e}");
            json!({ "refused": e.to_string() })
        }
    };
    write_json(out, "ansatz_fit.json", &fit)
}

pub fn sample_cmd(cfg: &SampleConfig, rng: &mut ChaCha8Rng, out: &Path) -> Result<()> {
    let (p, imm) = cfg.sheet.build(rng)?;
    let geo = imm.geometry()?;
    let mut csv = format!("{}\n", EnergyBreakdown::CSV_HEADER);
    for tag in [FunctionalTag::SupMembrane, FunctionalTag::L2Membrane] {
        csv.push_str(&total_energy_geo(&geo, &p, tag).csv_row(&p));
        csv.push('\n');
    }
    write_atomic(&out.join("energy.csv"), &csv)?;
    if cfg.save_immersion {
        write_atomic(&out.join("immersion.json"), &imm.to_json_string()?)?;
    }
    Ok(())
}

pub fn minimize_cmd(cfg: &MinimizeConfig, rng: &mut ChaCha8Rng, out: &Path) -> Result<()> {
    cfg.optimizer.validate()?;
    let (p, start) = cfg.sheet.build(rng)?;
    let res = minimize(&start, &p, &cfg.optimizer)?;
    write_atomic(&out.join("trace.csv"), &res.trace.to_csv())?;
    write_atomic(&out.join("immersion.json"), &res.immersion.to_json_string()?)?;
    let h2 = p.h * p.h;
    let report = json!({
        "m0": p.m0,
        "h": p.h,
        "initial_energy": res.initial_energy,
        "energy": res.energy,
        "energy_over_h2": res.energy.total / h2,
        "energy_over_c_star_h2_abs_log_h": res.energy.total / (h2 * p.abs_log_h() * p.c_star()),
        "line_search_failed": res.line_search_failed,
        "assumption1": match &res.assumption1 {
            Ok(r) => serde_json::to_value(r)?,
            Err(e) => json!({ "error": e }),
        },
    });
    write_json(out, "minimize.json", &report)
}

pub fn geodesics_cmd(cfg: &GeodesicsConfig, rng: &mut ChaCha8Rng, out: &Path) -> Result<()> {
    let (p, imm) = cfg.sheet.build(rng)?;
    let opts = ShootOptions { tolerance: cfg.tolerance, r_max: cfg.r_max };
    let a = analyze(&imm, &opts)?;
    let f = &a.fields;
    let g = &f.grid;
    let nt = g.n_theta;
    let mut csv = String::from(
        "rho_ref_units,theta_rad,r_ref_units,phi_rad,jacobi_ref_units,g_metric_dimensionless,g_jacobi_dimensionless\n",
    );
    for k in 0..f.valid_rings * nt {
        let (gm, gj) = a.g.as_ref().map_or((f64::NAN, f64::NAN), |gf| (gf.metric[k], gf.jacobi[k]));
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e12(g.rho[k / nt]),
            e12(g.theta[k % nt]),
            e12(f.r[k]),
            e12(f.phi[k]),
            e12(f.jacobi[k]),
            e12(gm),
            e12(gj),
        ));
    }
    write_atomic(&out.join("polar.csv"), &csv)?;
    let r0 = a.fan.r0(p.h);
    let detestim = match (&a.gamma, &a.g) {
        (Some(gamma), Some(gf)) => {
            let d = detestim_diagnostics(f, gamma, gf, &p, 1.0);
            json!({ "sup_g_det": d.sup_g_det, "sup_dist_so2": d.sup_dist_so2, "radial_integral": d.radial_integral })
        }
        _ => serde_json::Value::Null,
    };
    let report = json!({
        "assumption1": a.report,
        "r0": r0,
        "linf_deviation": r0.map(|r| f.linf_deviation(r, p.h)),
        "g_discrepancy": a.g.as_ref().map(|gf| gf.max_discrepancy(g, p.h)),
        "gamma_identity_error": a.gamma.as_ref().map(|x| x.identity_error),
        "detestim": detestim,
    });
    write_json(out, "geodesics.json", &report)
}

pub fn curvature_cmd(cfg: &CurvatureConfig, rng: &mut ChaCha8Rng, out: &Path) -> Result<()> {
    let (p, imm) = cfg.sheet.build(rng)?;
    let geo = imm.geometry()?;
    let profile = kappa_profile_of(&geo);
    write_atomic(&out.join("kappa_profile.csv"), &profile.to_csv())?;

    let (lo, hi) = admissible_r_range(&p, cfg.c1);
    let mut csv = String::from("big_r_ref_units,deviation_ref_units,deviation_over_scale_dimensionless\n");
    if lo < hi && cfg.n_radii > 0 {
        let scale = |r: f64| (r * p.h).sqrt() * p.abs_log_h().powf(0.75);
        for r in log_space(lo, hi, cfg.n_radii) {
            let d = kappa_deviation(&profile, &p, r, cfg.c1)?;
            csv.push_str(&format!("{},{},{}\n", e12(r), e12(d), e12(d / scale(r))));
        }
    }
    write_atomic(&out.join("kappa_deviation.csv"), &csv)?;

    let f_part = f_samples(&imm, &geo, &p, cfg, out);
    let report = json!({
        "total_curvature": profile.total(),
        "tip_curvature": p.tip_curvature(),
        "jensen_lower_bound": jensen_lower_bound(&profile),
        "c_star_abs_log_h": p.c_star() * p.abs_log_h(),
        "f_function": match f_part {
            Ok(v) => v,
            Err(e) => json!({ "error": e.to_string() }),
        },
    });
    write_json(out, "curvature.json", &report)
}

fn f_samples(
    imm: &conesheet::Immersion,
    geo: &Geometry,
    p: &conesheet::ConeParams,
    cfg: &CurvatureConfig,
    out: &Path,
) -> Result<serde_json::Value> {
    let field = MetricField::from_geometry(geo)?;
    let a = analyze(imm, &ShootOptions::default())?;
    let missing = || Error::OutOfRange("geodesic fan does not reach ρ = 2h".into());
    let r0 = a.fan.r0(p.h).ok_or_else(missing)?;
    let r_end = a.fan.r_star(p.h, cfg.c1).ok_or_else(missing)?;
    let tracks = omega_tracks(&a.fan, &field);
    let s = f_function(&a.fan, &tracks, &field, p.m0, r0, r_end, cfg.f_samples)?;
    write_atomic(&out.join("f_function.csv"), &s.to_csv())?;
    let check = interpolation_check(&s)?;
    Ok(json!({ "r0": r0, "r_end": r_end, "interpolation": check }))
}

pub fn degree_cmd(cfg: &DegreeConfig, rng: &mut ChaCha8Rng, out: &Path) -> Result<()> {
    let (_, imm) = cfg.sheet.build(rng)?;
    let geo = imm.geometry()?;
    let gm = GaussMap::from_geometry(&geo)?;
    let ring = gm.ring_for_radius(cfg.radius)?;
    let field = gm.degree_raster(ring, &raster(cfg.raster_bins, cfg.tilt)?)?;
    write_atomic(&out.join("degree.csv"), &field.to_csv())?;

    let (mut agree, mut disagree, mut singular) = (0usize, 0usize, 0usize);
    for _ in 0..cfg.probes {
        let bin = rng.gen_range(0..field.raster.len());
        match gm.degree_point(ring, &field.raster.bin_center(bin)) {
            Ok(d) if d == field.values[bin] => agree += 1,
            Ok(_) => disagree += 1,
            Err(Error::NotRegular(_)) => singular += 1,
            Err(e) => return Err(e),
        }
    }
    let report = json!({
        "radius": field.radius,
        "ring": field.ring,
        "bins": field.raster.len(),
        "total_degree_integral": field.total_degree_integral(),
        "curvature_integral": kappa_profile_of(&geo).kappa_values[ring],
        "level_set_perimeter": field.level_set_perimeter(),
        "max_residual": field.max_residual,
        "max_interior_residual": field.max_interior_residual,
        "probes": { "agree": agree, "disagree": disagree, "not_regular": singular },
    });
    write_json(out, "degree.json", &report)
}

pub fn isoperimetric_cmd(cfg: &IsoperimetricConfig, rng: &mut ChaCha8Rng, out: &Path) -> Result<()> {
    let (p, base) = cfg.sheet.build(rng)?;
    let grid = base.grid.clone();
    let mut rings: Vec<usize> = log_space(p.h.max(grid.rho_min), 1.0, cfg.n_radii)
        .into_iter()
        .map(|r| grid.nearest_ring(r))
        .collect();
    rings.dedup();
    let rast = raster(cfg.raster_bins, cfg.tilt)?;

    let mut surfaces = vec![base.clone()];
    if let Some(fam) = cfg.family {
        let spec = PerturbationSpec { amplitude: fam.amplitude, max_l: fam.max_l };
        for _ in 0..fam.count {
            surfaces.push(spec.draw(rng).apply(&base));
        }
    }

    let mut csv = String::from(
        "sample,radius_ref_units,boundary_variation_dimensionless,kappa_dimensionless,\
f_tilde_dimensionless,residual_dimensionless,pass\n",
    );
    let (mut worst, mut failures) = (f64::INFINITY, 0usize);
    for (s, imm) in surfaces.iter().enumerate() {
        let geo = imm.geometry()?;
        for rec in isoperimetric_check(&geo, &rast, &rings, cfg.slack)? {
            worst = worst.min(rec.residual);
            failures += usize::from(!rec.pass);
            csv.push_str(&format!(
                "{s},{},{},{},{},{},{}\n",
                e12(rec.radius),
                e12(rec.boundary_variation),
                e12(rec.kappa),
                e12(rec.f_value),
                e12(rec.residual),
                rec.pass
            ));
        }
    }
    write_atomic(&out.join("isoperimetric.csv"), &csv)?;
    let report = json!({
        "samples": surfaces.len(),
        "radii": rings.len(),
        "slack": cfg.slack,
        "min_residual": worst,
        "failures": failures,
    });
    write_json(out, "isoperimetric.json", &report)
}

pub fn sweep_cmd(cfg: &SweepConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.output_dir.get_or_insert_with(|| out.to_path_buf());
    let res = run_sweep(&cfg)?;
    for r in &res.rows {
        if let Some(e) = &r.error {
            eprintln!("warning: h = {}: {e}", r.h);
        }
    }
    Ok(())
}
