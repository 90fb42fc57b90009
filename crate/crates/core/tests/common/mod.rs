//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use pmc_lab::{Point, SphereGrid, StarRegion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn grid(n_theta: usize, n_phi: usize) -> Arc<SphereGrid> {
    Arc::new(SphereGrid::new(n_theta, n_phi).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adaptive Simpson, written independently of the crate's quadrature.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Surface area of the spheroid with equatorial semi-axis `a` and polar `c`,
/// as a surface of revolution: `2π ∫₀^π a sin t √(a² cos² t + c² sin² t) dt`.
pub fn spheroid_area(a: f64, c: f64) -> f64 {
    2.0 * PI * simpson(&|t: f64| a * t.sin() * (a * a * t.cos().powi(2) + c * c * t.sin().powi(2)).sqrt(), 0.0, PI, 1e-14)
}

/// Volume of the same spheroid by discs: `∫_{−c}^{c} π a² (1 − z²/c²) dz`.
pub fn spheroid_volume(a: f64, c: f64) -> f64 {
    simpson(&|z: f64| PI * a * a * (1.0 - z * z / (c * c)), -c, c, 1e-14)
}

pub fn spheroid(grid: &Arc<SphereGrid>, a: f64, c: f64) -> StarRegion {
    StarRegion::from_fn(grid.clone(), Point::zeros(), |d| {
        let s2 = d.x * d.x + d.y * d.y;
        1.0 / (s2 / (a * a) + d.z * d.z / (c * c)).sqrt()
    })
    .unwrap()
}

/// Smooth random star-shaped region: log-radius is a random combination of
/// low-degree harmonics around `ln r0`.
pub fn random_region(rng: &mut ChaCha8Rng, grid: &Arc<SphereGrid>, r0: f64, amplitude: f64, center_spread: f64) -> StarRegion {
    let basis = grid.harmonic_basis(4);
    let coeffs: Vec<f64> = (0..basis.len())
        .map(|b| if b == 0 { 0.0 } else { rng.random_range(-amplitude..amplitude) })
        .collect();
    let f = basis.synthesize(&coeffs);
    let center = Point::new(
        rng.random_range(-center_spread..=center_spread),
        rng.random_range(-center_spread..=center_spread),
        rng.random_range(-center_spread..=center_spread),
    );
    StarRegion::new(grid.clone(), center, f.iter().map(|v| r0.ln() + v).collect()).unwrap()
}

/// Volume of the lens `B_1(0) ∩ B_1(e_1)`: two caps of height 1/2.
pub fn unit_lens_volume() -> f64 {
    let h: f64 = 0.5;
    2.0 * PI * h * h * (3.0 - h) / 3.0
}
