//! Star-shaped regions: a center and a positive radial field over a
//! [`SphereGrid`], with the discrete geometric integrals used everywhere else.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Point, SphereGrid};
use crate::quadrature::GaussLegendre;

/// Radius of the ball standing in for the empty set.
pub const RHO_MIN: f64 = 1e-3;
/// Gauss points per ray for interior integrals.
pub const RAY_ORDER: usize = 16;

const RESAMPLE_SCAN: usize = 64;
const DEFAULT_MC_SAMPLES: usize = 200_000;
const DEFAULT_MC_SEED: u64 = 0x5eed;

/// Gauss rule on `[0, 1]` for ray integrals.
pub(crate) fn ray_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::unit_interval(RAY_ORDER))
}

/// A piece `[lo, hi]` of a ray `c + sθ`, with the sensitivities of its
/// endpoints to the center. The last piece always ends at `ρ`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RaySegment {
    pub lo: f64,
    pub hi: f64,
    pub dlo_dc: Point,
    pub dhi_dc: Point,
    pub ends_at_rho: bool,
}

/// Split `[0, ρ]` where the ray crosses the spheres `‖x‖ = r_j`, so that the
/// per-ray Gauss rule never straddles a radial transition of the integrand.
pub(crate) fn ray_segments(c: &Point, d: &Point, rho: f64, breaks: &[f64]) -> Vec<RaySegment> {
    let cd = c.dot(d);
    let c2 = c.norm_squared();
    let mut cuts: Vec<(f64, Point)> = Vec::new();
    for &r in breaks {
        let disc = cd * cd - c2 + r * r;
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let dsq = (d * cd - c) / sq;
        for (s, ds) in [(-cd - sq, -d - dsq), (-cd + sq, -d + dsq)] {
            if s > 0.0 && s < rho {
                cuts.push((s, ds));
            }
        }
    }
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let (mut lo, mut dlo) = (0.0, Point::zeros());
    for (s, ds) in cuts {
        out.push(RaySegment { lo, hi: s, dlo_dc: dlo, dhi_dc: ds, ends_at_rho: false });
        lo = s;
        dlo = ds;
    }
    out.push(RaySegment { lo, hi: rho, dlo_dc: dlo, dhi_dc: Point::zeros(), ends_at_rho: true });
    out
}

#[derive(Debug, Clone)]
pub struct StarRegion {
    grid: Arc<SphereGrid>,
    center: Point,
    log_radius: Vec<f64>,
}

/// Per-node radial quantities: `ρ`, tangential gradient `(a, b)` and the
/// area density factor `S = √(ρ² + a² + b²)`.
#[derive(Debug, Clone)]
pub struct RadialGeometry {
    pub rho: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
}

impl StarRegion {
    pub fn new(grid: Arc<SphereGrid>, center: Point, log_radius: Vec<f64>) -> Result<Self> {
        if log_radius.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                log_radius.len(),
                grid.len()
            )));
        }
        if let Some(k) = log_radius.iter().position(|f| !f.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite log-radius at node {k}")));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite center".into()));
        }
        Ok(StarRegion { grid, center, log_radius })
    }

    pub fn ball(grid: Arc<SphereGrid>, center: Point, radius: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite(), "ball radius must be positive");
        let n = grid.len();
        StarRegion { grid, center, log_radius: vec![radius.ln(); n] }
    }

    /// The empty-set proxy `B_{ρ_min}(center)`.
    pub fn proxy(grid: Arc<SphereGrid>, center: Point) -> Self {
        Self::ball(grid, center, RHO_MIN)
    }

    pub fn from_radii(grid: Arc<SphereGrid>, center: Point, radii: &[f64]) -> Result<Self> {
        if let Some(k) = radii.iter().position(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "radius at node {k} is not positive: {}",
                radii[k]
            )));
        }
        Self::new(grid, center, radii.iter().map(|r| r.ln()).collect())
    }

    /// Region with radial function `ρ(θ) = r(θ)` evaluated at every node direction.
    pub fn from_fn<F: Fn(&Point) -> f64>(grid: Arc<SphereGrid>, center: Point, r: F) -> Result<Self> {
        let radii: Vec<f64> = grid.directions().iter().map(r).collect();
        Self::from_radii(grid, center, &radii)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn log_radius(&self) -> &[f64] {
        &self.log_radius
    }

    pub fn radii(&self) -> Vec<f64> {
        self.log_radius.iter().map(|f| f.exp()).collect()
    }

    pub fn with_log_radius(&self, log_radius: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), self.center, log_radius)
    }

    pub fn with_center(&self, center: Point) -> Self {
        StarRegion { grid: self.grid.clone(), center, log_radius: self.log_radius.clone() }
    }

    pub fn max_radius(&self) -> f64 {
        self.log_radius.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp()
    }

    pub fn min_radius(&self) -> f64 {
        self.log_radius.iter().copied().fold(f64::INFINITY, f64::min).exp()
    }

    /// `‖center‖ + max ρ`, an upper bound for `sup_{x∈Ω} ‖x‖`.
    pub fn support_radius(&self) -> f64 {
        self.center.norm() + self.max_radius()
    }

    /// Largest `‖x‖` over the boundary nodes.
    pub fn node_support_radius(&self) -> f64 {
        self.boundary_points().iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn boundary_points(&self) -> Vec<Point> {
        self.grid
            .directions()
            .iter()
            .zip(&self.log_radius)
            .map(|(d, f)| self.center + d * f.exp())
            .collect()
    }

    pub fn geometry(&self) -> RadialGeometry {
        let rho = self.radii();
        let (a, b) = self.grid.tangential_gradient(&rho);
        let s = rho
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(r, (x, y))| (r * r + x * x + y * y).sqrt())
            .collect();
        RadialGeometry { rho, a, b, s }
    }

    /// Outward unit normals at the boundary nodes.
    pub fn normals(&self, geo: &RadialGeometry) -> Vec<Point> {
        let dirs = self.grid.directions();
        let (et, ep) = (self.grid.e_theta(), self.grid.e_phi());
        (0..self.grid.len())
            .map(|k| (dirs[k] * geo.rho[k] - et[k] * geo.a[k] - ep[k] * geo.b[k]) / geo.s[k])
            .collect()
    }

    pub fn area(&self) -> f64 {
        let geo = self.geometry();
        self.grid
            .weights()
            .iter()
            .zip(geo.rho.iter().zip(&geo.s))
            .map(|(w, (r, s))| w * r * s)
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.log_radius)
            .map(|(w, f)| w * (3.0 * f).exp() / 3.0)
            .sum()
    }

    /// `(1/Vol) ∫_Ω x`.
    pub fn barycenter(&self) -> Point {
        let mut m = Point::zeros();
        let mut vol = 0.0;
        for ((w, f), d) in self.grid.weights().iter().zip(&self.log_radius).zip(self.grid.directions()) {
            let r = f.exp();
            vol += w * r * r * r / 3.0;
            m += d * (w * r * r * r * r / 4.0);
        }
        self.center + m / vol
    }

    /// `∫_Ω f` by a fixed Gauss rule along every ray.
    pub fn integrate_interior<F: Fn(&Point) -> f64>(&self, f: F) -> Result<f64> {
        self.integrate_interior_split(f, &[])
    }

    /// `∫_Ω f` with every ray split where it crosses the spheres `‖x‖ = r_j`.
    pub fn integrate_interior_split<F: Fn(&Point) -> f64>(&self, f: F, breaks: &[f64]) -> Result<f64> {
        let (sig, a) = ray_rule();
        let mut total = 0.0;
        for ((w, lf), d) in self.grid.weights().iter().zip(&self.log_radius).zip(self.grid.directions()) {
            let r = lf.exp();
            let mut ray = 0.0;
            for seg in ray_segments(&self.center, d, r, breaks) {
                let len = seg.hi - seg.lo;
                let mut acc = 0.0;
                for (si, ai) in sig.iter().zip(a) {
                    let s = seg.lo + len * si;
                    let x = self.center + d * s;
                    let v = f(&x);
                    if !v.is_finite() {
                        return Err(Error::Evaluation(format!(
                            "integrand is {v} at ({}, {}, {})",
                            x.x, x.y, x.z
                        )));
                    }
                    acc += ai * s * s * v;
                }
                ray += len * acc;
            }
            total += w * ray;
        }
        Ok(total)
    }

    /// `∫_{∂Ω} f(x, ν) dA` with the star-shaped area element.
    pub fn integrate_boundary<F: Fn(&Point, &Point) -> f64>(&self, f: F) -> Result<f64> {
        let geo = self.geometry();
        let normals = self.normals(&geo);
        let mut total = 0.0;
        for k in 0..self.grid.len() {
            let x = self.center + self.grid.directions()[k] * geo.rho[k];
            let v = f(&x, &normals[k]);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!(
                    "integrand is {v} at ({}, {}, {})",
                    x.x, x.y, x.z
                )));
            }
            total += self.grid.weights()[k] * geo.rho[k] * geo.s[k] * v;
        }
        Ok(total)
    }

    /// Homothety `x ↦ s x` about the origin.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {s}")));
        }
        let ls = s.ln();
        Ok(StarRegion {
            grid: self.grid.clone(),
            center: self.center * s,
            log_radius: self.log_radius.iter().map(|f| f + ls).collect(),
        })
    }

    pub fn translate(&self, v: &Point) -> Self {
        self.with_center(self.center + v)
    }

    /// Radial function at an arbitrary direction (interpolated in log space).
    pub fn radius_at(&self, dir: &Point) -> f64 {
        self.grid.interpolate(&self.log_radius, dir).exp()
    }

    pub fn contains(&self, x: &Point) -> bool {
        let d = x - self.center;
        let r = d.norm();
        r == 0.0 || r < self.radius_at(&(d / r))
    }

    /// Image of the region under `x ↦ x + ε X(x)`, resampled as a radial graph
    /// about the same center. For every node direction the preimage boundary
    /// point is found by fixed-point iteration on the sphere.
    pub fn flow<F: Fn(&Point) -> Point>(&self, field: F, eps: f64) -> Result<Self> {
        let mut log_radius = Vec::with_capacity(self.grid.len());
        for (k, target) in self.grid.directions().iter().enumerate() {
            let mut w = *target;
            let mut image = Point::zeros();
            let mut converged = false;
            for _ in 0..200 {
                let x = self.center + w * self.radius_at(&w);
                image = x + field(&x) * eps - self.center;
                let miss = target - image / image.norm();
                if miss.norm() < 1e-15 {
                    converged = true;
                    break;
                }
                w = (w + miss).normalize();
            }
            if !converged {
                return Err(Error::Convergence(format!("flow preimage search failed at node {k}")));
            }
            log_radius.push(image.norm().ln());
        }
        Self::new(self.grid.clone(), self.center, log_radius)
    }

    /// `Ω ∩ B_b(0)`. Exact for star-shaped regions whose center lies inside the
    /// ball, since the ball is convex.
    pub fn clip_to_ball(&self, barrier: f64) -> Result<Self> {
        let c2 = self.center.norm_squared();
        if !(barrier > 0.0) || c2 >= barrier * barrier {
            return Err(Error::InvalidArgument(format!(
                "center at distance {} is not inside the clipping ball of radius {barrier}",
                c2.sqrt()
            )));
        }
        let log_radius = self
            .grid
            .directions()
            .iter()
            .zip(&self.log_radius)
            .map(|(d, &f)| {
                let cd = self.center.dot(d);
                let exit = -cd + (cd * cd - c2 + barrier * barrier).sqrt();
                f.min(exit.ln())
            })
            .collect();
        Ok(StarRegion { grid: self.grid.clone(), center: self.center, log_radius })
    }

    /// The same set described as a radial graph about `new_center`.
    ///
    /// Each ray is scanned for boundary crossings; more than one crossing (or a
    /// center outside the region) means the set is not star-shaped about the
    /// new center.
    pub fn recenter(&self, new_center: Point) -> Result<Self> {
        if new_center == self.center {
            return Ok(self.clone());
        }
        let not_star = |reason: String| Error::NotStarShaped {
            center: [new_center.x, new_center.y, new_center.z],
            reason,
        };
        // signed gap: negative inside
        let gap = |y: &Point| -> f64 {
            let d = y - self.center;
            let r = d.norm();
            if r == 0.0 {
                return -self.min_radius();
            }
            r - self.radius_at(&(d / r))
        };
        if gap(&new_center) >= 0.0 {
            return Err(not_star("new center is not in the interior".into()));
        }
        let reach = 2.0 * ((new_center - self.center).norm() + self.max_radius());
        let mut log_radius = Vec::with_capacity(self.grid.len());
        for (k, d) in self.grid.directions().iter().enumerate() {
            let mut crossing = None;
            let mut prev_s = 0.0;
            let mut prev_g = gap(&new_center);
            for step in 1..=RESAMPLE_SCAN {
                let s = reach * step as f64 / RESAMPLE_SCAN as f64;
                let g = gap(&(new_center + d * s));
                if (prev_g < 0.0) != (g < 0.0) {
                    if crossing.is_some() || g < 0.0 {
                        return Err(not_star(format!("ray {k} meets the boundary more than once")));
                    }
                    crossing = Some((prev_s, s));
                }
                prev_s = s;
                prev_g = g;
            }
            let (mut lo, mut hi) =
                crossing.ok_or_else(|| not_star(format!("ray {k} never leaves the region")))?;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if gap(&(new_center + d * mid)) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            log_radius.push((0.5 * (lo + hi)).ln());
        }
        Ok(StarRegion { grid: self.grid.clone(), center: new_center, log_radius })
    }

    /// Text snapshot: header `2 n_theta n_phi cx cy cz`, then one log-radius
    /// per line in grid order.
    pub fn to_snapshot(&self) -> String {
        let mut out = format!(
            "{} {} {} {:.16e} {:.16e} {:.16e}\n",
            self.grid.dim(),
            self.grid.n_theta(),
            self.grid.n_phi(),
            self.center.x,
            self.center.y,
            self.center.z
        );
        for f in &self.log_radius {
            let _ = writeln!(out, "{f:.16e}");
        }
        out
    }

    /// Parse a snapshot; reuses `grid` when its sizes match, else builds one.
    pub fn from_snapshot(text: &str, grid: Option<Arc<SphereGrid>>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Snapshot("empty snapshot".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Snapshot(format!("header needs 6 fields, got {}", fields.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Snapshot(format!("{s}: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| Error::Snapshot(format!("{s}: {e}")));
        if int(fields[0])? != 2 {
            return Err(Error::Snapshot(format!("unsupported dimension {}", fields[0])));
        }
        let (nt, np) = (int(fields[1])?, int(fields[2])?);
        let center = Point::new(float(fields[3])?, float(fields[4])?, float(fields[5])?);
        let grid = match grid {
            Some(g) if g.n_theta() == nt && g.n_phi() == np => g,
            _ => Arc::new(SphereGrid::new(nt, np)?),
        };
        let log_radius = lines.map(|l| float(l.trim())).collect::<Result<Vec<_>>>()?;
        if log_radius.len() != grid.len() {
            return Err(Error::Snapshot(format!(
                "expected {} values, found {}",
                grid.len(),
                log_radius.len()
            )));
        }
        Self::new(grid, center, log_radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlatDistanceMethod {
    SameCenter,
    Resampled,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy)]
pub struct FlatDistance {
    pub value: f64,
    pub method: FlatDistanceMethod,
    /// Standard error of the Monte Carlo estimate, zero for quadrature.
    pub std_error: f64,
}

/// `Vol(a Δ b)` with the default Monte Carlo fallback settings.
pub fn flat_distance(a: &StarRegion, b: &StarRegion) -> Result<FlatDistance> {
    flat_distance_with(a, b, DEFAULT_MC_SAMPLES, DEFAULT_MC_SEED)
}

pub fn flat_distance_with(
    a: &StarRegion,
    b: &StarRegion,
    mc_samples: usize,
    seed: u64,
) -> Result<FlatDistance> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch("flat distance needs a shared grid".into()));
    }
    if a.center == b.center {
        return Ok(FlatDistance {
            value: same_center_distance(a, b),
            method: FlatDistanceMethod::SameCenter,
            std_error: 0.0,
        });
    }
    if let Ok(rb) = b.recenter(a.center) {
        return Ok(FlatDistance {
            value: same_center_distance(a, &rb),
            method: FlatDistanceMethod::Resampled,
            std_error: 0.0,
        });
    }
    // symmetric difference by rejection sampling in a bounding ball about a's center
    let reach = a.max_radius().max((b.center - a.center).norm() + b.max_radius());
    let bound_vol = 4.0 * std::f64::consts::PI / 3.0 * reach.powi(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..mc_samples {
        let p = loop {
            let p = Point::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if p.norm_squared() <= 1.0 {
                break p;
            }
        };
        let x = a.center + p * reach;
        if a.contains(&x) != b.contains(&x) {
            hits += 1;
        }
    }
    let n = mc_samples as f64;
    let frac = hits as f64 / n;
    Ok(FlatDistance {
        value: bound_vol * frac,
        method: FlatDistanceMethod::MonteCarlo,
        std_error: bound_vol * (frac * (1.0 - frac) / n).sqrt(),
    })
}

fn same_center_distance(a: &StarRegion, b: &StarRegion) -> f64 {
    a.grid
        .weights()
        .iter()
        .zip(a.log_radius.iter().zip(&b.log_radius))
        .map(|(w, (fa, fb))| w * ((3.0 * fa).exp() - (3.0 * fb).exp()).abs() / 3.0)
        .sum()
}

/// Ordered sequence of regions on one grid with parameters `0 = t_0 < … < t_m = 1`.
#[derive(Debug, Clone)]
pub struct RegionPath {
    pub nodes: Vec<StarRegion>,
    pub t: Vec<f64>,
}

impl RegionPath {
    pub fn new(nodes: Vec<StarRegion>, t: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != t.len() {
            return Err(Error::InvalidArgument(format!(
                "path needs >= 2 nodes with matching parameters, got {} nodes and {} parameters",
                nodes.len(),
                t.len()
            )));
        }
        if t[0] != 0.0 || *t.last().unwrap() != 1.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "path parameters must increase strictly from 0 to 1".into(),
            ));
        }
        if nodes.iter().any(|n| !n.grid.same_as(&nodes[0].grid)) {
            return Err(Error::GridMismatch("path nodes must share a grid".into()));
        }
        if nodes[0].max_radius() > RHO_MIN * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(
                "first path node must be the empty-set proxy".into(),
            ));
        }
        Ok(RegionPath { nodes, t })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
