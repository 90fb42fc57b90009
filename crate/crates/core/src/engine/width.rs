//! Width estimates: best-of over initial paths, sweeps over the truncation
//! radius, and the monotonicity-trick radius selection.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::path::sphere_path;
use super::string::{relax_path, RelaxSchedule, WidthEstimate};
use crate::error::{Error, Result};
use crate::functional::Metric;
use crate::grid::{Point, SphereGrid};
use crate::prescription::{Prescription, Truncated};
use crate::region::{RegionPath, StarRegion};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub grid: Arc<SphereGrid>,
    pub metric: Metric,
    /// Path node count `m`.
    pub nodes: usize,
    /// Sphere-path centers, as fractions of `R` along `center_direction`.
    pub center_fractions: Vec<f64>,
    pub center_direction: Point,
    /// Largest endpoint radius; the endpoint also stays inside `B_R`.
    pub path_radius: f64,
    /// Randomly perturbed copies of each sphere path.
    pub perturbations: usize,
    pub perturbation_amplitude: f64,
    pub seed: u64,
    pub schedule: RelaxSchedule,
}

impl EngineConfig {
    pub fn new(grid: Arc<SphereGrid>) -> Self {
        EngineConfig {
            grid,
            metric: Metric::Flat,
            nodes: 101,
            center_fractions: vec![0.0],
            center_direction: Point::new(1.0, 0.0, 0.0),
            path_radius: 3.0,
            perturbations: 0,
            perturbation_amplitude: 0.05,
            seed: 0,
            schedule: RelaxSchedule::default(),
        }
    }
}

/// Relaxed path and estimate of the winning initialization.
#[derive(Debug, Clone)]
pub struct WidthRun {
    pub radius: f64,
    pub estimate: WidthEstimate,
    pub path: RegionPath,
    /// Index into the initialization list.
    pub start: usize,
    /// Width of every initialization that produced a mountain pass path.
    pub candidates: Vec<(usize, f64)>,
}

fn perturb(path: &RegionPath, seed: u64, amplitude: f64) -> Result<RegionPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = path.nodes[0].grid().harmonic_basis(4);
    let coeffs: Vec<f64> = basis
        .modes
        .iter()
        .map(|&(l, _)| if l >= 2 { rng.random_range(-1.0..1.0) } else { 0.0 })
        .collect();
    let shape = basis.synthesize(&coeffs);
    let scale = shape.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let m = path.len();
    let nodes = path
        .nodes
        .iter()
        .zip(&path.t)
        .enumerate()
        .map(|(k, (n, &t))| {
            if k == 0 || k + 1 == m {
                return Ok(n.clone());
            }
            let bump = amplitude * (std::f64::consts::PI * t).sin() / scale;
            let f = n.log_radius().iter().zip(&shape).map(|(f, s)| f + bump * s).collect();
            n.with_log_radius(f)
        })
        .collect::<Result<Vec<StarRegion>>>()?;
    RegionPath::new(nodes, path.t.clone())
}

/// Initial paths: sphere paths about each configured center, then perturbed
/// copies. Centers that do not admit a mountain pass sphere path are skipped.
pub fn initial_paths(trunc: &Truncated, config: &EngineConfig) -> Result<Vec<RegionPath>> {
    let p: &dyn Prescription = trunc;
    let dir = config.center_direction.try_normalize(0.0).ok_or_else(|| {
        Error::InvalidArgument("center direction must be non-zero".into())
    })?;
    let mut out = Vec::new();
    for (i, &frac) in config.center_fractions.iter().enumerate() {
        let center = dir * (frac * trunc.radius);
        let r = config.path_radius.min(trunc.radius - center.norm());
        if !(r > 0.0) {
            continue;
        }
        let path = match sphere_path(config.grid.clone(), p, &config.metric, center, r, config.nodes) {
            Ok(path) => path,
            Err(Error::NotMountainPass { .. }) => continue,
            Err(e) => return Err(e),
        };
        for j in 1..=config.perturbations {
            let seed = config.seed.wrapping_add((i * 1000 + j) as u64);
            out.push(perturb(&path, seed, config.perturbation_amplitude)?);
        }
        out.push(path);
    }
    Ok(out)
}

/// `ω̂(R)`: the smallest relaxed maximum over all initial paths.
pub fn estimate_width(trunc: &Truncated, config: &EngineConfig) -> Result<WidthRun> {
    let starts = initial_paths(trunc, config)?;
    if starts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no configured center admits a mountain pass sphere path at R = {}",
            trunc.radius
        )));
    }
    let runs: Vec<(RegionPath, WidthEstimate)> = starts
        .par_iter()
        .map(|path| relax_path(path, trunc, &config.metric, &config.schedule))
        .collect::<Result<_>>()?;
    let candidates: Vec<(usize, f64)> = runs.iter().enumerate().map(|(i, r)| (i, r.1.value)).collect();
    let best = (0..runs.len()).fold(0, |b, i| if runs[i].1.value < runs[b].1.value { i } else { b });
    let (path, estimate) = runs.into_iter().nth(best).expect("non-empty");
    Ok(WidthRun { radius: trunc.radius, estimate, path, start: best, candidates })
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthRow {
    pub radius: f64,
    pub width: f64,
    /// Centered difference slope; `None` at the ends of the table.
    pub slope: Option<f64>,
    pub selected: bool,
    /// `ω̂(R)` exceeds the previous entry by more than the tolerance.
    pub monotonicity_violation: bool,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct WidthSweep {
    pub rows: Vec<WidthRow>,
    pub runs: Vec<WidthRun>,
    /// `|ω̂(R_last) − ω̂(R_prev)|`, the plateau gap used as the limit estimate.
    pub plateau_gap: Option<f64>,
}

/// `ω̂(R)` on a grid of radii, each with the same initialization seeds.
pub fn width_sweep(
    base: Arc<dyn Prescription>,
    radii: &[f64],
    config: &EngineConfig,
    tol: f64,
) -> Result<WidthSweep> {
    let runs: Vec<WidthRun> = radii
        .par_iter()
        .map(|&r| estimate_width(&Truncated::new(base.clone(), r)?, config))
        .collect::<Result<_>>()?;
    let table: Vec<(f64, f64)> = runs.iter().map(|r| (r.radius, r.estimate.value)).collect();
    let slopes = centered_slopes(&table);
    let selected = if table.len() >= 3 { select_monotonicity_radii(&table, tol)? } else { Vec::new() };
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, run)| WidthRow {
            radius: run.radius,
            width: run.estimate.value,
            slope: slopes[i],
            selected: selected.contains(&i),
            monotonicity_violation: i > 0 && run.estimate.value > table[i - 1].1 + tol,
            converged: run.estimate.converged,
        })
        .collect();
    let plateau_gap = (table.len() >= 2).then(|| (table[table.len() - 1].1 - table[table.len() - 2].1).abs());
    Ok(WidthSweep { rows, runs, plateau_gap })
}

fn centered_slopes(table: &[(f64, f64)]) -> Vec<Option<f64>> {
    (0..table.len())
        .map(|i| {
            (i > 0 && i + 1 < table.len())
                .then(|| (table[i + 1].1 - table[i - 1].1) / (table[i + 1].0 - table[i - 1].0))
        })
        .collect()
}

/// Indices of interior table entries whose centered slope lies in
/// `[−2/R − tol, tol]`.
pub fn select_monotonicity_radii(table: &[(f64, f64)], tol: f64) -> Result<Vec<usize>> {
    if table.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "slope selection needs at least 3 table entries, got {}",
            table.len()
        )));
    }
    if table.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument("table radii must increase strictly".into()));
    }
    Ok(centered_slopes(table)
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let r = table[i].0;
            s.filter(|&s| s >= -2.0 / r - tol && s <= tol).map(|_| i)
        })
        .collect())
}
