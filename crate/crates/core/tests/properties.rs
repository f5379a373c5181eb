use std::f64::consts::{E, PI};

use conesheet::ansatz::{ansatz_metric, cutoff, sample_ansatz};
use conesheet::energy::{bending_geo, membrane_pnorm_geo, membrane_sup_geo, metric_error_sq, total_energy_geo, FunctionalTag};
use conesheet::geodesic::{analyze, ShootOptions};
use conesheet::sphere::{dist_4pi, f_iso, f_tilde, SphereRaster};
use conesheet::surfaces::FourierPerturbation;
use conesheet::{metric_norm_sq, ConeParams, Immersion, MetricComponents, PolarGrid, Vec3};
use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn perturbed_ansatz(m0: f64, h: f64, amp: f64, seed: u64, n_theta: usize) -> (ConeParams, Immersion) {
    let p = ConeParams::new(m0, h).unwrap();
    let g = PolarGrid::with_density(h / 8.0, 40.0, n_theta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let imm = FourierPerturbation::random(&mut rng, amp, 3).apply(&sample_ansatz(&g, &p));
    (p, imm)
}

fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(a.abs()).max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn params_domain(m0 in -0.5f64..1.5, h in -0.1f64..0.6) {
        let ok = m0 > 0.0 && m0 < 1.0 && h > 0.0 && h < 1.0 / E;
        prop_assert_eq!(ConeParams::new(m0, h).is_ok(), ok);
    }

    #[test]
    fn metric_norm_is_nonnegative(p1 in -5.0f64..5.0, p2 in -5.0f64..5.0, p3 in -5.0f64..5.0) {
        let n = metric_norm_sq(&MetricComponents::new(p1, p2, p3));
        prop_assert!(n >= 0.0);
        prop_assert_eq!(n == 0.0, p1 == 0.0 && p2 == 0.0 && p3 == 0.0);
    }

    #[test]
    fn cutoff_shape(t in 0.0f64..2.0) {
        let (psi, d1, _) = cutoff(t);
        prop_assert!((0.0..=1.0).contains(&psi));
        prop_assert!(d1.abs() <= 4.0);
        if t <= 0.5 { prop_assert_eq!(psi, 0.0); }
        if t >= 1.0 { prop_assert_eq!(psi, 1.0); }
        let e = 1e-6;
        let fd = (cutoff(t + e).0 - cutoff(t - e).0) / (2.0 * e);
        prop_assert!((fd - d1).abs() < 1e-6);
    }

    #[test]
    fn ansatz_metric_is_positive_definite(m0 in 0.05f64..0.95, h in 1e-4f64..0.3, s in 0.0f64..1.0) {
        let p = ConeParams::new(m0, h).unwrap();
        let rho = (h / 100.0) * (100.0 / h).powf(s);
        prop_assert!(ansatz_metric(rho, &p).is_positive_definite());
    }

    #[test]
    fn iso_profile_concave_and_periodic(x in 0.0f64..(4.0 * PI), y in 0.0f64..(4.0 * PI), k in -3i32..3) {
        let mid = f_iso(0.5 * (x + y));
        prop_assert!(mid >= 0.5 * (f_iso(x) + f_iso(y)) - 1e-12);
        prop_assert!((f_iso(x) - f_iso(dist_4pi(x))).abs() < 1e-9);
        prop_assert!((f_tilde(x + 4.0 * PI * k as f64) - f_tilde(x)).abs() < 1e-6);
    }

    #[test]
    fn raster_partition(bins in 200usize..20_000, tilted in any::<bool>(), probe in 0usize..1_000_000) {
        let tilt = tilted.then(|| Rotation3::from_euler_angles(0.3, -0.2, 0.9));
        let r = SphereRaster::new(bins, tilt).unwrap();
        // Each band's true area, shared by its cells, must equal the common
        // weight; the weights then add to 4pi up to summation roundoff.
        let w = r.bin_weight();
        prop_assert!(w > 0.0);
        for (b, &n) in r.band_lon.iter().enumerate() {
            let area = 2.0 * PI * (r.band_z[b] - r.band_z[b + 1]) / n as f64;
            prop_assert!((area - w).abs() < 1e-12 * w, "band {} area {} weight {}", b, area, w);
        }
        let (mut total, mut comp) = (0.0f64, 0.0f64);
        for (_, wk) in r.bins() {
            let t = total + wk;
            comp += if total.abs() >= wk.abs() { (total - t) + wk } else { (wk - t) + total };
            total = t;
        }
        prop_assert!((total + comp - 4.0 * PI).abs() < 1e-12);
        let k = probe % r.len();
        prop_assert_eq!(r.bin_of(&r.bin_center(k)), k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fields_are_frame_invariant(
        seed in 0u64..1000,
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.1f64..3.0,
        shift in prop::array::uniform3(-5.0f64..5.0),
    ) {
        prop_assume!(Vec3::from(axis).norm() > 0.1);
        let (p, imm) = perturbed_ansatz(0.5, 1.0 / 16.0, 0.02, seed, 32);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle);
        let moved = imm.rigid_motion(&rot, &Vec3::from(shift));
        let (a, b) = (imm.geometry().unwrap(), moved.geometry().unwrap());
        let (ka, kb) = (a.gauss_curvature(), b.gauss_curvature());
        let (na, nb) = (a.normal_jacobian_sq(), b.normal_jacobian_sq());
        let (ea, eb) = (metric_error_sq(&a, &p), metric_error_sq(&b, &p));
        // Derivative stencils amplify position roundoff by 1/spacing, so the
        // tolerance is tied to the coordinate size and the finest spacing.
        let g = &a.grid;
        let ymax = moved.positions.iter().chain(&imm.positions).fold(0.0f64, |m, y| m.max(y.norm()));
        let spacing = (g.rho[1] - g.rho[0]).min(g.rho_min * g.dtheta());
        let tol = 64.0 * f64::EPSILON * ymax / spacing;
        let kscale = ka.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let nscale = na.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = [0.0f64; 5];
        for k in 0..g.len() {
            for (x, y) in [(a.metric[k].p1, b.metric[k].p1), (a.metric[k].p2, b.metric[k].p2), (a.metric[k].p3, b.metric[k].p3)] {
                worst[0] = worst[0].max((x - y).abs());
            }
            worst[1] = worst[1].max((ea[k] - eb[k]).abs());
            worst[2] = worst[2].max((ka[k] - kb[k]).abs() / kscale);
            worst[3] = worst[3].max((na[k] - nb[k]).abs() / nscale);
            worst[4] = worst[4].max((rot * a.normal[k] - b.normal[k]).norm());
        }
        prop_assert!(worst.iter().all(|&w| w <= tol), "errors {:?}, tolerance {:.2e}", worst, tol);
    }

    #[test]
    fn pnorm_is_monotone_and_below_sup(seed in 0u64..1000, amp in 0.0f64..0.03) {
        let (p, imm) = perturbed_ansatz(0.6, 0.05, amp, seed, 16);
        let geo = imm.geometry().unwrap();
        let sup = membrane_sup_geo(&geo, &p);
        let mut last = 0.0;
        for q in [2u32, 4, 8, 16, 32] {
            let v = membrane_pnorm_geo(&geo, &p, q);
            prop_assert!(v >= last * (1.0 - 1e-12));
            prop_assert!(v <= sup * (1.0 + 1e-12));
            last = v;
        }
    }

    #[test]
    fn energy_ignores_angular_relabeling(seed in 0u64..1000, shift in 1usize..16) {
        let (p, imm) = perturbed_ansatz(0.5, 0.05, 0.02, seed, 16);
        let g = imm.grid.clone();
        let nt = g.n_theta;
        let mut pos = imm.positions.clone();
        for i in 0..g.n_rho {
            pos[i * nt..(i + 1) * nt].rotate_left(shift);
        }
        let rotated = Immersion::new(g, pos, imm.center).unwrap();
        let e0 = total_energy_geo(&imm.geometry().unwrap(), &p, FunctionalTag::SupMembrane);
        let e1 = total_energy_geo(&rotated.geometry().unwrap(), &p, FunctionalTag::SupMembrane);
        prop_assert!(rel_close(e0.total, e1.total, 0.0, 1e-12));
        prop_assert!(rel_close(e0.membrane, e1.membrane, 1e-30, 1e-9));
    }

    #[test]
    fn energy_parts_add_up(seed in 0u64..1000, amp in 0.0f64..0.03) {
        let (p, imm) = perturbed_ansatz(0.4, 0.08, amp, seed, 16);
        let geo = imm.geometry().unwrap();
        let e = total_energy_geo(&geo, &p, FunctionalTag::SupMembrane);
        prop_assert!(e.membrane >= 0.0 && e.bending >= 0.0);
        prop_assert!((e.total - e.membrane - e.bending).abs() <= 1e-15 * e.total);
        prop_assert_eq!(e.bending, bending_geo(&geo, &p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn geodesics_have_unit_speed_and_increasing_distance(seed in 0u64..1000, amp in 0.0f64..0.02) {
        let (_, imm) = perturbed_ansatz(0.5, 1.0 / 16.0, amp, seed, 16);
        let a = analyze(&imm, &ShootOptions::default()).unwrap();
        for ray in &a.fan.rays {
            prop_assert!(ray.max_speed_error <= 1e-6, "speed error {}", ray.max_speed_error);
            prop_assert!(ray.samples.windows(2).all(|w| w[1].r > w[0].r));
        }
    }
}

#[test]
fn ansatz_fields_are_rotationally_symmetric() {
    let p = ConeParams::new(0.5, 1.0 / 32.0).unwrap();
    let g = PolarGrid::with_density(p.h / 8.0, 60.0, 32).unwrap();
    let geo = sample_ansatz(&g, &p).geometry().unwrap();
    let k = geo.gauss_curvature();
    let n = geo.normal_jacobian_sq();
    let kmax = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..g.n_rho {
        let row = |f: &dyn Fn(usize) -> f64| {
            let vals: Vec<f64> = (0..g.n_theta).map(|j| f(g.idx(i, j))).collect();
            let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (hi - lo) / scale
        };
        assert!(row(&|q| geo.metric[q].p1) < 1e-12, "ring {i}");
        assert!(row(&|q| geo.metric[q].p3) < 1e-12, "ring {i}");
        // Second-derivative fields carry radial-stencil roundoff of order
        // eps/spacing; K also vanishes on the cone part, so use its peak.
        let tol = (64.0 * f64::EPSILON / (g.rho[(i + 1).min(g.n_rho - 1)] - g.rho[i.min(g.n_rho - 2)])).max(1e-12);
        assert!(row(&|q| k[q] / kmax) < tol, "ring {i}");
        assert!(row(&|q| n[q]) < tol, "ring {i}");
    }
}
