mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::*;
use pmc_lab::conformal::{ConformalMetric, ConformalProfile};
use pmc_lab::functional::*;
use pmc_lab::prescription::{Constant, GaussianEnhanced, Prescription, Slab, Truncated};
use pmc_lab::{Point, StarRegion};

fn gaussian() -> Arc<dyn Prescription> {
    Arc::new(GaussianEnhanced { c: 2.0, amplitude: 0.5, width: 2.0 })
}

/// Five-point central difference of a scalar function at 0.
fn central(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

/// Worst of `|analytic − fd| / (|fd| + 1e-3)` over the probed partials.
fn gradient_fd_error(region: &StarRegion, p: &dyn Prescription, metric: &Metric, nodes: &[usize]) -> f64 {
    let g = gradient(region, p, metric).unwrap();
    let h = 1e-5;
    let e = |r: &StarRegion| energy(r, p, metric).unwrap().total;
    let mut worst = 0.0f64;
    for &k in nodes {
        let fd = central(
            |s| {
                let mut f = region.log_radius().to_vec();
                f[k] += s;
                e(&region.with_log_radius(f).unwrap())
            },
            h,
        );
        worst = worst.max((g.d_log_radius[k] - fd).abs() / (fd.abs() + 1e-3));
    }
    for i in 0..3 {
        let mut dc = Point::zeros();
        dc[i] = 1.0;
        let fd = central(|s| e(&region.translate(&(dc * s))), h);
        worst = worst.max((g.d_center[i] - fd).abs() / (fd.abs() + 1e-3));
    }
    worst
}

#[test]
fn gradient_matches_differences_on_random_regions() {
    let g = grid(12, 24);
    let mut r = rng(17);
    let conformal = ConformalMetric::new(ConformalProfile::InverseSqrt, 0.2).unwrap().metric();
    let trunc = Truncated::new(gaussian(), 1.5).unwrap();
    let nodes = [0, 5, 40, 100, 143, 200, 287];
    for _ in 0..4 {
        let reg = random_region(&mut r, &g, 1.6, 0.1, 0.3);
        for metric in [Metric::Flat, conformal] {
            let worst = gradient_fd_error(&reg, &trunc, &metric, &nodes);
            assert!(worst < 1e-6, "truncated: {worst}");
            let worst = gradient_fd_error(&reg, &Constant { c: 2.0 }, &metric, &nodes);
            assert!(worst < 1e-6, "constant: {worst}");
        }
    }
}

#[test]
fn gaussian_ball_energy_matches_radial_oracle() {
    let g = grid(32, 64);
    let p = gaussian();
    let b = StarRegion::ball(g, Point::zeros(), 2.0);
    let e = energy(&b, p.as_ref(), &Metric::Flat).unwrap();
    let vol = 4.0 * PI * simpson(&|r: f64| 2.0 * (1.0 + 0.5 * (-r * r / 4.0).exp()) * r * r, 0.0, 2.0, 1e-14);
    assert!((e.area - 16.0 * PI).abs() < 1e-10 * 16.0 * PI);
    assert!((e.prescription_term - vol).abs() < 1e-10 * vol);
}

#[test]
fn critical_radius_is_unique_among_balls() {
    let g = grid(16, 32);
    let p = Constant { c: 2.0 };
    let norms: Vec<(f64, f64)> = (1..=30)
        .map(|i| {
            let s = 0.1 * i as f64;
            let b = StarRegion::ball(g.clone(), Point::zeros(), s);
            (s, gradient(&b, &p, &Metric::Flat).unwrap().norm)
        })
        .collect();
    let critical: Vec<f64> = norms.iter().filter(|(_, n)| *n < 1e-8).map(|(s, _)| *s).collect();
    assert_eq!(critical.len(), 1);
    assert!((critical[0] - 1.0).abs() < 1e-12);
}

#[test]
fn first_variation_matches_flow_differences() {
    let g = grid(32, 64);
    let mut r = rng(8);
    let reg = random_region(&mut r, &g, 1.2, 0.08, 0.1);
    let p = Truncated::new(gaussian(), 3.0).unwrap();
    let field = |x: &Point| Point::new(x.y * 0.3 + 0.1, x.z * x.x * 0.2, 0.5 - 0.1 * x.z);
    let fv = first_variation(&reg, &p, &Metric::Flat, field).unwrap();
    let eps = 1e-4;
    let e = |s: f64| energy(&reg.flow(field, s).unwrap(), &p, &Metric::Flat).unwrap().total;
    let fd = (e(eps) - e(-eps)) / (2.0 * eps);
    assert!((fv - fd).abs() < 1e-5 * fd.abs().max(1.0), "{fv} vs {fd}");
    assert_eq!(first_variation(&reg, &p, &Metric::Flat, |_| Point::zeros()).unwrap(), 0.0);
}

#[test]
fn first_variation_vanishes_on_critical_ball() {
    let g = grid(16, 32);
    let b = StarRegion::ball(g, Point::zeros(), 1.0);
    let p = Constant { c: 2.0 };
    // X = x reproduces d/ds A²(B_s) at s = 1, which is 8π − 8π = 0
    let v = first_variation(&b, &p, &Metric::Flat, |x| *x).unwrap();
    assert!(v.abs() < 1e-10);
    let v = first_variation(&b, &p, &Metric::Flat, |x| Point::new(x.z * x.z, 1.0, x.x)).unwrap();
    assert!(v.abs() < 1e-6);
}

#[test]
fn homothety_identity_on_bumpy_regions() {
    let g = grid(24, 48);
    let mut r = rng(9);
    let p = Truncated::new(gaussian(), 1.5).unwrap();
    for _ in 0..3 {
        let reg = random_region(&mut r, &g, 1.8, 0.1, 0.2);
        let an = homothety_derivative(&reg, &p).unwrap();
        let fd = homothety_derivative_fd(&reg, &p, 1e-5).unwrap();
        assert!((an - fd).abs() < 1e-6 * fd.abs().max(1.0), "{an} vs {fd}");
    }
}

#[test]
fn slab_translation_derivative() {
    let g = grid(24, 48);
    let slab = Slab::new(Point::new(1.0, 0.0, 0.0), 0.0).unwrap();
    let e1 = Point::new(1.0, 0.0, 0.0);
    // deep in the plateau {x·ν ≤ 0}
    let inside = StarRegion::ball(g.clone(), Point::new(-3.0, 0.0, 0.0), 1.0);
    assert!(translation_derivative(&inside, &slab, &e1).unwrap().abs() < 1e-10);
    // straddling: moving along ν lowers h, so the energy rises
    let straddle = StarRegion::ball(g, Point::new(0.2, 0.0, 0.0), 1.0);
    let an = translation_derivative(&straddle, &slab, &e1).unwrap();
    let h = 1e-5;
    let e = |t: f64| energy(&straddle.translate(&(e1 * t)), &slab, &Metric::Flat).unwrap().total;
    let fd = (e(h) - e(-h)) / (2.0 * h);
    assert!(an > 0.0);
    assert!((an - fd).abs() < 1e-6 * fd.abs(), "{an} vs {fd}");
    // towards the decreasing side the derivative is negative
    let back = translation_derivative(&straddle, &slab, &(-e1)).unwrap();
    assert!(back < 0.0);
}

#[test]
fn transition_mass_matches_radial_oracle() {
    let g = grid(16, 32);
    let base: Arc<dyn Prescription> = Arc::new(Constant { c: 2.0 });
    let t = Truncated::new(base, 4.0).unwrap();
    let inside = StarRegion::ball(g.clone(), Point::zeros(), 3.9);
    assert_eq!(transition_mass(&inside, &t).unwrap(), 0.0);
    let full = StarRegion::ball(g.clone(), Point::zeros(), 5.0);
    let oracle = 4.0 * PI * simpson(&|r: f64| 2.0 * t.cutoff.derivative(r - 4.0).abs() * r * r, 4.0, 5.0, 1e-13);
    let m = transition_mass(&full, &t).unwrap();
    assert!((m - oracle).abs() < 1e-9 * oracle, "{m} vs {oracle}");
    let clipped = full.clip_to_ball(t.barrier_radius().unwrap()).unwrap();
    assert!(transition_mass(&clipped, &t).unwrap() < m);
}

#[test]
fn conformal_zero_is_bit_exact() {
    let g = grid(12, 24);
    let mut r = rng(4);
    let reg = random_region(&mut r, &g, 1.3, 0.1, 0.2);
    let m0 = ConformalMetric::new(ConformalProfile::InverseSqrt, 0.0).unwrap().metric();
    let p = Truncated::new(gaussian(), 2.0).unwrap();
    let (a, b) = (energy(&reg, &p, &Metric::Flat).unwrap(), energy(&reg, &p, &m0).unwrap());
    assert_eq!(a.total.to_bits(), b.total.to_bits());
    let (ga, gb) = (gradient(&reg, &p, &Metric::Flat).unwrap(), gradient(&reg, &p, &m0).unwrap());
    assert_eq!(ga.d_log_radius, gb.d_log_radius);
}
