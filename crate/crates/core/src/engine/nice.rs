//! Membership of a path in the nice class `𝒩_{R,C,η,θ}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::functional::{energy, transition_mass, Metric};
use crate::prescription::Truncated;
use crate::region::RegionPath;

#[derive(Debug, Clone, Serialize)]
pub struct NiceClassReport {
    pub radius: f64,
    pub c: f64,
    pub eta: f64,
    pub theta: f64,
    pub width: f64,
    /// (i) every node lies in `B_{R+1−ε_R}`.
    pub contained: bool,
    /// (ii) the path maximum is at most `ω̂(R) + θ`.
    pub energy_bounded: bool,
    /// (iii) transition mass at most `C` on `{A ≥ ω̂(R) − η}`.
    pub mass_bounded: bool,
    pub max_support_radius: f64,
    pub max_energy: f64,
    /// Largest transition mass over the high-energy nodes (0 if there are none).
    pub max_transition_mass: f64,
    pub high_energy_nodes: usize,
}

impl NiceClassReport {
    pub fn passes(&self) -> bool {
        self.contained && self.energy_bounded && self.mass_bounded
    }
}

pub fn check_nice_class(
    path: &RegionPath,
    trunc: &Truncated,
    metric: &Metric,
    c: f64,
    eta: f64,
    theta: f64,
    width: f64,
) -> Result<NiceClassReport> {
    let limit = trunc.radius + 1.0 - trunc.epsilon()?;
    let per_node: Vec<(f64, f64, f64)> = path
        .nodes
        .par_iter()
        .map(|n| {
            let e = energy(n, trunc, metric)?.total;
            let mass = if e >= width - eta { transition_mass(n, trunc)? } else { 0.0 };
            Ok((n.support_radius(), e, mass))
        })
        .collect::<Result<_>>()?;
    let max_support_radius = per_node.iter().map(|v| v.0).fold(0.0, f64::max);
    let max_energy = per_node.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let high: Vec<&(f64, f64, f64)> = per_node.iter().filter(|v| v.1 >= width - eta).collect();
    let max_transition_mass = high.iter().map(|v| v.2).fold(0.0, f64::max);
    Ok(NiceClassReport {
        radius: trunc.radius,
        c,
        eta,
        theta,
        width,
        contained: max_support_radius <= limit,
        energy_bounded: max_energy <= width + theta,
        mass_bounded: max_transition_mass <= c,
        max_support_radius,
        max_energy,
        max_transition_mass,
        high_energy_nodes: high.len(),
    })
}
