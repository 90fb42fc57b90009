mod common;

use std::f64::consts::PI;

use common::*;
use pmc_lab::region::{flat_distance, flat_distance_with, FlatDistanceMethod};
use pmc_lab::{Point, StarRegion};
use proptest::prelude::*;

#[test]
fn spheroid_area_and_volume_match_revolution_oracle() {
    let g = grid(64, 128);
    let e = spheroid(&g, 1.0, 2.0);
    let (a, v) = (spheroid_area(1.0, 2.0), spheroid_volume(1.0, 2.0));
    assert!((e.area() - a).abs() < 1e-8 * a, "{} vs {a}", e.area());
    assert!((e.volume() - v).abs() < 1e-10 * v, "{} vs {v}", e.volume());
    assert!((v - 8.0 * PI / 3.0).abs() < 1e-12);
}

#[test]
fn spheroid_error_decays_under_refinement() {
    let a = spheroid_area(1.0, 2.0);
    let errs: Vec<f64> = [(8, 16), (16, 32), (32, 64)]
        .iter()
        .map(|&(nt, np)| (spheroid(&grid(nt, np), 1.0, 2.0).area() - a).abs())
        .collect();
    assert!(errs[1] < 0.1 * errs[0] && errs[2] < 0.1 * errs[1], "{errs:?}");
}

#[test]
fn gaussian_over_unit_ball_matches_radial_oracle() {
    let g = grid(32, 64);
    let b = StarRegion::ball(g, Point::zeros(), 1.0);
    let v = b.integrate_interior(|x| (-x.norm_squared()).exp()).unwrap();
    let oracle = 4.0 * PI * simpson(&|r: f64| (-r * r).exp() * r * r, 0.0, 1.0, 1e-15);
    assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
    let c = b.integrate_interior(|_| 2.5).unwrap();
    assert!((c - 2.5 * 4.0 * PI / 3.0).abs() < 1e-12);
}

#[test]
fn gaussian_on_shifted_sphere_matches_axisymmetric_oracle() {
    // ∂B_2(c), |c| = 0.7: |x|² = |c|² + 4 + 4|c| cos t
    let g = grid(32, 64);
    let c = Point::new(0.0, 0.7, 0.0);
    let b = StarRegion::ball(g, c, 2.0);
    let v = b.integrate_boundary(|x, _| (-x.norm_squared()).exp()).unwrap();
    let m = c.norm();
    let oracle = 2.0 * PI * 4.0
        * simpson(&|t: f64| (-(m * m + 4.0 + 4.0 * m * t.cos())).exp() * t.sin(), 0.0, PI, 1e-16);
    assert!((v - oracle).abs() < 1e-10 * oracle.max(1e-3), "{v} vs {oracle}");
    let unit = StarRegion::ball(grid(16, 32), Point::zeros(), 1.0);
    let flux = unit.integrate_boundary(|x, n| x.dot(n)).unwrap();
    assert!((flux - 4.0 * PI).abs() < 1e-11);
    assert!((unit.integrate_boundary(|_, _| 1.0).unwrap() - unit.area()).abs() < 1e-14);
}

#[test]
fn lens_distance_by_monte_carlo() {
    let g = grid(16, 32);
    let a = StarRegion::ball(g.clone(), Point::zeros(), 1.0);
    let b = StarRegion::ball(g, Point::new(1.0, 0.0, 0.0), 1.0);
    let d = flat_distance_with(&a, &b, 400_000, 3).unwrap();
    assert_eq!(d.method, FlatDistanceMethod::MonteCarlo);
    let exact = 2.0 * (4.0 * PI / 3.0 - unit_lens_volume());
    assert!((exact - 11.0 * PI / 6.0).abs() < 1e-14);
    assert!((d.value - exact).abs() < 4.0 * d.std_error, "{} ± {} vs {exact}", d.value, d.std_error);
}

#[test]
fn shifted_ball_distance_by_resampling() {
    // B_1(0) vs B_1(0.2 e_1): resampled about the origin, compared with the
    // lens formula for caps of height (2 − 0.2)/2
    let g = grid(48, 96);
    let a = StarRegion::ball(g.clone(), Point::zeros(), 1.0);
    let b = StarRegion::ball(g, Point::new(0.2, 0.0, 0.0), 1.0);
    let d = flat_distance(&a, &b).unwrap();
    assert_eq!(d.method, FlatDistanceMethod::Resampled);
    let h: f64 = 0.9;
    let lens = 2.0 * PI * h * h * (3.0 - h) / 3.0;
    let exact = 2.0 * (4.0 * PI / 3.0 - lens);
    assert!((d.value - exact).abs() < 2e-3 * exact, "{} vs {exact}", d.value);
}

#[test]
fn clipping_bumpy_region_volume_by_direct_quadrature() {
    let g = grid(24, 48);
    let mut r = rng(5);
    let reg = random_region(&mut r, &g, 2.0, 0.15, 0.2);
    let clipped = reg.clip_to_ball(2.0).unwrap();
    let direct = reg.integrate_interior(|x| if x.norm() < 2.0 { 1.0 } else { 0.0 }).unwrap();
    assert!(clipped.volume() < reg.volume());
    // indicator quadrature converges slowly; a loose band is enough to
    // confirm that the clipped set is the intersection
    assert!((clipped.volume() - direct).abs() < 2e-2 * direct, "{} vs {direct}", clipped.volume());
}

fn same_center_region(seed: u64) -> StarRegion {
    let g = grid(8, 16);
    let mut r = rng(seed);
    let mut reg = random_region(&mut r, &g, 1.0, 0.2, 0.0);
    reg = reg.with_center(Point::zeros());
    reg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flat_distance_is_a_metric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
        let (a, b, c) = (same_center_region(s1), same_center_region(s2), same_center_region(s3));
        let ab = flat_distance(&a, &b).unwrap().value;
        let ba = flat_distance(&b, &a).unwrap().value;
        let bc = flat_distance(&b, &c).unwrap().value;
        let ac = flat_distance(&a, &c).unwrap().value;
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(ab == 0.0, a.log_radius() == b.log_radius());
    }

    #[test]
    fn scaling_and_translation_are_exact(seed in 0u64..1000, s in 0.2f64..5.0, tx in -10.0f64..10.0) {
        let reg = same_center_region(seed);
        let scaled = reg.scale(s).unwrap();
        prop_assert!((scaled.area() - s * s * reg.area()).abs() <= 1e-13 * scaled.area());
        prop_assert!((scaled.volume() - s.powi(3) * reg.volume()).abs() <= 1e-13 * scaled.volume());
        let moved = reg.translate(&Point::new(tx, 0.0, 0.0));
        prop_assert_eq!(moved.area(), reg.area());
        prop_assert_eq!(moved.volume(), reg.volume());
    }

    #[test]
    fn clipping_is_idempotent_and_monotone(seed in 0u64..1000, b in 0.8f64..1.3) {
        let reg = same_center_region(seed);
        let c1 = reg.clip_to_ball(b).unwrap();
        let c2 = c1.clip_to_ball(b).unwrap();
        prop_assert_eq!(c1.log_radius(), c2.log_radius());
        prop_assert!(c1.volume() <= reg.volume());
        prop_assert!(c1.node_support_radius() <= b * (1.0 + 1e-14));
    }
}
