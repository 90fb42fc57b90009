mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::*;
use pmc_lab::engine::*;
use pmc_lab::functional::{
    energy, gradient_mass, homothety_derivative, isoperimetric_certificate, translation_derivative, Metric,
};
use pmc_lab::prescription::{Constant, GaussianEnhanced, Prescription, RadialIncreasing, Slab, Truncated};
use pmc_lab::{flat_distance, Error, Point, RegionPath, StarRegion};
use proptest::prelude::*;

/// `A²(B_r) = 4πr² − (8π/3) r³` in closed form.
fn ball_energy(r: f64) -> f64 {
    4.0 * PI * r * r - 8.0 * PI / 3.0 * r.powi(3)
}

fn constant() -> Arc<dyn Prescription> {
    Arc::new(Constant { c: 2.0 })
}

#[test]
fn discrete_sphere_path_maximum_matches_closed_form() {
    let g = grid(16, 32);
    let p = Constant { c: 2.0 };
    let path = sphere_path(g, &p, &Metric::Flat, Point::zeros(), 10.0, 201).unwrap();
    let best = path
        .nodes
        .iter()
        .map(|n| energy(n, &p, &Metric::Flat).unwrap().total)
        .fold(f64::NEG_INFINITY, f64::max);
    let oracle = (1..201).map(|k| ball_energy(10.0 * k as f64 / 200.0)).fold(f64::NEG_INFINITY, f64::max);
    assert!((best - oracle).abs() < 1e-10);
    assert!((best - 4.0 * PI / 3.0).abs() < 1e-4);
}

#[test]
fn relaxed_constant_width_is_the_ball_energy() {
    let mut cfg = EngineConfig::new(grid(16, 32));
    cfg.nodes = 41;
    let trunc = Truncated::new(constant(), 10.0).unwrap();
    let run = estimate_width(&trunc, &cfg).unwrap();
    assert!(run.estimate.converged);
    assert!((run.estimate.value - 4.0 * PI / 3.0).abs() < 5e-3);
    let (_, a) = isoperimetric_certificate(2.0).unwrap();
    assert!(run.estimate.value >= a - 5e-3);
    let peak = &run.path.nodes[run.estimate.argmax];
    assert!((peak.max_radius() - 1.0).abs() < 1e-6);
}

#[test]
fn sweep_log_is_non_increasing() {
    let mut cfg = EngineConfig::new(grid(12, 24));
    cfg.nodes = 31;
    cfg.perturbations = 1;
    cfg.perturbation_amplitude = 0.1;
    let trunc = Truncated::new(Arc::new(GaussianEnhanced { c: 2.0, amplitude: 0.5, width: 2.0 }), 8.0).unwrap();
    let run = estimate_width(&trunc, &cfg).unwrap();
    let accepted: Vec<f64> = run.estimate.log.iter().filter(|r| r.accepted).map(|r| r.max_energy).collect();
    assert!(accepted.len() >= 2);
    for w in accepted.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
    assert_eq!(run.candidates.len(), 2);
    let best = run.candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    assert_eq!(run.estimate.value, best);
}

#[test]
fn degenerate_and_non_mountain_pass_paths_are_rejected() {
    let g = grid(8, 16);
    let trunc = Truncated::new(constant(), 10.0).unwrap();
    let proxy = StarRegion::proxy(g.clone(), Point::zeros());
    let end = StarRegion::ball(g.clone(), Point::zeros(), 3.0);
    let stuck = RegionPath::new(vec![proxy.clone(), proxy.clone(), proxy.clone(), end], vec![0.0, 0.3, 0.6, 1.0]).unwrap();
    let err = relax_path(&stuck, &trunc, &Metric::Flat, &RelaxSchedule::default()).unwrap_err();
    assert!(matches!(err, Error::DegeneratePath(_)), "{err}");

    let small = StarRegion::ball(g.clone(), Point::zeros(), 1.2);
    let mid = StarRegion::ball(g, Point::zeros(), 0.6);
    let up = RegionPath::new(vec![proxy, mid, small], vec![0.0, 0.5, 1.0]).unwrap();
    let err = relax_path(&up, &trunc, &Metric::Flat, &RelaxSchedule::default()).unwrap_err();
    assert!(matches!(err, Error::NotMountainPass { .. } | Error::DegeneratePath(_)), "{err}");
}

#[test]
fn constant_saddle_is_a_unit_ball_of_index_one() {
    let g = grid(16, 32);
    let trunc = Truncated::new(constant(), 10.0).unwrap();
    let start = StarRegion::ball(g.clone(), Point::new(0.2, 0.0, 0.0), 1.1);
    let s = refine_saddle(&start, &trunc, &Metric::Flat, &SaddleConfig::default()).unwrap();
    assert!(s.converged);
    assert!(s.residual_sup < 1e-4);
    assert!((s.energy - 4.0 * PI / 3.0).abs() < 1e-4);
    assert_eq!(s.index.negative, 1);
    assert_eq!(s.index.zero, 3);
    assert!(homothety_derivative(&s.region, &trunc).unwrap().abs() < 1e-3);
}

#[test]
fn slab_saddle_sits_on_the_plateau() {
    let g = grid(16, 32);
    let slab = Arc::new(Slab::new(Point::new(1.0, 0.0, 0.0), 0.0).unwrap());
    let trunc = Truncated::new(slab.clone(), 10.0).unwrap();
    let mut cfg = EngineConfig::new(g.clone());
    cfg.center_fractions = vec![0.05];
    cfg.path_radius = 4.0;
    let run = estimate_width(&trunc, &cfg).unwrap();
    let s = refine_saddle(&run.path.nodes[run.estimate.argmax], &trunc, &Metric::Flat, &SaddleConfig::default())
        .unwrap();
    assert!(s.converged);
    for i in 0..3 {
        assert!(translation_derivative(&s.region, &trunc, &Point::ith(i, 1.0)).unwrap().abs() < 1e-6);
    }
    assert!(gradient_mass(&s.region, &trunc).unwrap() < 1e-6);
    let ball = StarRegion::ball(g, s.region.barycenter(), 1.0);
    assert!(flat_distance(&s.region, &ball).unwrap().value < 1e-3);
    // the whole ball lies where h = 2
    assert!(s.region.barycenter().x + 1.0 < 0.1);
}

#[test]
fn gaussian_widths_do_not_increase_with_radius() {
    let mut cfg = EngineConfig::new(grid(12, 24));
    cfg.nodes = 41;
    let base: Arc<dyn Prescription> = Arc::new(GaussianEnhanced { c: 2.0, amplitude: 0.5, width: 2.0 });
    let sweep = width_sweep(base, &[5.0, 7.5, 10.0], &cfg, 1e-3).unwrap();
    assert!(sweep.rows.iter().all(|r| !r.monotonicity_violation));
    assert!(sweep.plateau_gap.unwrap() < 5e-3);
    // ω̂ lies below the ball threshold, strictly
    assert!(sweep.rows.iter().all(|r| r.width < 4.0 * PI / 3.0 - 0.1));
    let sel: Vec<usize> = sweep.rows.iter().enumerate().filter(|(_, r)| r.selected).map(|(i, _)| i).collect();
    assert_eq!(sel, vec![1]);
}

#[test]
fn nice_class_flags() {
    let g = grid(8, 16);
    let trunc = Truncated::new(constant(), 5.0).unwrap();
    let inside = sphere_path(g.clone(), &trunc, &Metric::Flat, Point::zeros(), 3.0, 21).unwrap();
    let rep = check_nice_class(&inside, &trunc, &Metric::Flat, 2.0, 0.1, 0.1, 4.0 * PI / 3.0).unwrap();
    assert!(rep.passes());
    assert_eq!(rep.max_transition_mass, 0.0);
    let rep = check_nice_class(&inside, &trunc, &Metric::Flat, 2.0, 0.1, 0.1, 3.0).unwrap();
    assert!(!rep.energy_bounded);

    // balls out to R + 1: the top nodes carry transition mass
    let out = sphere_path(g, &trunc, &Metric::Flat, Point::zeros(), 6.0, 13).unwrap();
    let rep = check_nice_class(&out, &trunc, &Metric::Flat, 10.0 / 5.0, 1e4, 0.0, 0.0).unwrap();
    assert!(!rep.contained);
    assert!(rep.max_transition_mass > 0.0);
}

#[test]
fn drift_classification_of_synthetic_sequences() {
    let g = grid(12, 24);
    let trunc = Truncated::new(constant(), 10.0).unwrap();
    let seed = StarRegion::ball(g.clone(), Point::zeros(), 1.05);
    let unit = refine_saddle(&seed, &trunc, &Metric::Flat, &SaddleConfig::default()).unwrap();
    let at = |c: Point, r: f64| {
        let mut s = unit.clone();
        s.region = unit.region.translate(&c);
        (r, s)
    };
    let e = Point::new(1.0, 0.0, 0.0);
    let drifting: Vec<_> = [5.0, 10.0, 20.0].iter().map(|&r| at(e * (0.7 * r), r)).collect();
    let base = RadialIncreasing { c: 2.0, a: 0.5 };
    let rep = drift_diagnostic(&drifting, &base).unwrap();
    assert_eq!(rep.class, DriftClass::Drifting);
    assert!(rep.energy_gap.unwrap() < 1e-2);
    for row in &rep.rows {
        assert!(row.unit_ball_distance < 1e-3);
    }
    let confined: Vec<_> = [5.0, 10.0, 20.0].iter().map(|&r| at(Point::zeros(), r)).collect();
    assert_eq!(drift_diagnostic(&confined, &base).unwrap().class, DriftClass::Confined);
    assert_eq!(drift_diagnostic(&confined, &Constant { c: 2.0 }).unwrap().class, DriftClass::NeutralDrift);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reparameterization_keeps_endpoints_and_spacing(
        radii in proptest::collection::vec(0.01f64..3.0, 3..9),
    ) {
        let g = grid(6, 12);
        let mut sorted = radii.clone();
        sorted.sort_by(f64::total_cmp);
        let nodes: Vec<_> = sorted.iter().map(|&r| StarRegion::ball(g.clone(), Point::zeros(), r)).collect();
        let out = reparameterize(&nodes);
        prop_assert_eq!(out.len(), nodes.len());
        prop_assert!((out[0].max_radius() - sorted[0]).abs() < 1e-12);
        prop_assert!((out[out.len() - 1].max_radius() - sorted[sorted.len() - 1]).abs() < 1e-12);
        let gaps: Vec<f64> = out.windows(2).map(|w| string_distance(&w[0], &w[1])).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        for d in gaps {
            prop_assert!((d - mean).abs() <= 1e-9 * mean.max(1e-12));
        }
    }

    #[test]
    fn interpolation_hits_both_ends(s in 0.0f64..1.0, ra in 0.2f64..2.0, rb in 0.2f64..2.0) {
        let g = grid(6, 12);
        let a = StarRegion::ball(g.clone(), Point::zeros(), ra);
        let b = StarRegion::ball(g, Point::zeros(), rb);
        let m = interpolate(&a, &b, s);
        prop_assert!((m.max_radius() - (ra + s * (rb - ra))).abs() < 1e-12);
        prop_assert!((interpolate(&a, &b, 0.0).max_radius() - ra).abs() < 1e-12);
        prop_assert!((interpolate(&a, &b, 1.0).max_radius() - rb).abs() < 1e-12);
    }
}
