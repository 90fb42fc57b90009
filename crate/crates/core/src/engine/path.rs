//! Mountain pass paths: construction, interpolation along the string and
//! reparameterization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::{energy, Metric};
use crate::grid::{Point, SphereGrid};
use crate::prescription::Prescription;
use crate::region::{RegionPath, StarRegion};

/// Balls `B_{r t_k}(x)` at `t_k = k/(m−1)`, with the empty-set proxy at `t_0`.
pub fn sphere_path(
    grid: Arc<SphereGrid>,
    p: &dyn Prescription,
    metric: &Metric,
    center: Point,
    radius: f64,
    m: usize,
) -> Result<RegionPath> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("a path needs at least 2 nodes, got {m}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("path radius must be positive, got {radius}")));
    }
    let last = StarRegion::ball(grid.clone(), center, radius);
    let e = energy(&last, p, metric)?.total;
    if !(e < 0.0) {
        return Err(Error::NotMountainPass { energy: e });
    }
    let t = uniform_parameters(m);
    let nodes = t
        .iter()
        .map(|&tk| {
            if tk == 0.0 {
                StarRegion::proxy(grid.clone(), center)
            } else {
                StarRegion::ball(grid.clone(), center, (radius * tk).max(crate::region::RHO_MIN))
            }
        })
        .collect();
    RegionPath::new(nodes, t)
}

pub(crate) fn uniform_parameters(m: usize) -> Vec<f64> {
    (0..m).map(|k| if k + 1 == m { 1.0 } else { k as f64 / (m - 1) as f64 }).collect()
}

/// Point on the segment from `a` to `b`: radii and centers blend linearly,
/// so balls about a common center stay balls.
pub fn interpolate(a: &StarRegion, b: &StarRegion, s: f64) -> StarRegion {
    let radii: Vec<f64> = a
        .log_radius()
        .iter()
        .zip(b.log_radius())
        .map(|(fa, fb)| (1.0 - s) * fa.exp() + s * fb.exp())
        .collect();
    let c = a.center() * (1.0 - s) + b.center() * s;
    StarRegion::from_radii(a.grid().clone(), c, &radii).expect("convex blend of positive radii")
}

/// `(Σ_k w_k |x_k^a − x_k^b|²)^{1/2}` over corresponding boundary points.
pub fn string_distance(a: &StarRegion, b: &StarRegion) -> f64 {
    let (ca, cb) = (a.center(), b.center());
    a.grid()
        .directions()
        .iter()
        .zip(a.grid().weights())
        .zip(a.log_radius().iter().zip(b.log_radius()))
        .map(|((d, w), (fa, fb))| w * ((ca - cb) + d * (fa.exp() - fb.exp())).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Redistribute the nodes to equal [`string_distance`] spacing along the
/// piecewise-linear string; endpoints are kept.
pub fn reparameterize(nodes: &[StarRegion]) -> Vec<StarRegion> {
    let m = nodes.len();
    let mut arc = vec![0.0; m];
    for k in 1..m {
        arc[k] = arc[k - 1] + string_distance(&nodes[k - 1], &nodes[k]);
    }
    let total = arc[m - 1];
    if !(total > 0.0) {
        return nodes.to_vec();
    }
    let mut out = Vec::with_capacity(m);
    out.push(nodes[0].clone());
    let mut seg = 0;
    for j in 1..m - 1 {
        let target = total * j as f64 / (m - 1) as f64;
        while seg + 2 < m && arc[seg + 1] < target {
            seg += 1;
        }
        let len = arc[seg + 1] - arc[seg];
        let s = if len > 0.0 { ((target - arc[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(interpolate(&nodes[seg], &nodes[seg + 1], s));
    }
    out.push(nodes[m - 1].clone());
    out
}

/// Maximum of the energy on the two string segments adjacent to node `k`,
/// located by golden-section search. Returns the region and its energy.
pub fn refine_peak(
    nodes: &[StarRegion],
    k: usize,
    p: &dyn Prescription,
    metric: &Metric,
) -> Result<(StarRegion, f64)> {
    let lo = if k > 0 { -1.0 } else { 0.0 };
    let hi = if k + 1 < nodes.len() { 1.0 } else { 0.0 };
    let at = |sigma: f64| -> StarRegion {
        if sigma < 0.0 {
            interpolate(&nodes[k - 1], &nodes[k], 1.0 + sigma)
        } else if sigma > 0.0 {
            interpolate(&nodes[k], &nodes[k + 1], sigma)
        } else {
            nodes[k].clone()
        }
    };
    let f = |sigma: f64| -> Result<f64> { Ok(energy(&at(sigma), p, metric)?.total) };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > 1e-9 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    let (best, fb) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    let e_k = energy(&nodes[k], p, metric)?.total;
    if fb > e_k {
        Ok((at(best), fb))
    } else {
        Ok((nodes[k].clone(), e_k))
    }
}
