//! Drift-to-infinity diagnostics for saddle sequences over growing `R`.

use std::f64::consts::PI;

use serde::Serialize;

use super::saddle::SaddleCandidate;
use crate::error::Result;
use crate::prescription::Prescription;
use crate::region::{flat_distance, StarRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DriftClass {
    /// Support stays bounded independently of `R`.
    Confined,
    /// Candidates escape with `R`.
    Drifting,
    /// Translation-invariant prescription: position is arbitrary.
    NeutralDrift,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftRow {
    pub radius: f64,
    pub energy: f64,
    pub support_radius: f64,
    pub barycenter_norm: f64,
    /// Flat distance of the candidate, moved to the origin and scaled to
    /// volume `4π/3`, from the unit ball.
    pub unit_ball_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
    pub class: DriftClass,
    /// `A^c(B_{n/c})`, the limit energy of a drifting sequence.
    pub sphere_energy: Option<f64>,
    /// `|E_last − A^c(B_{n/c})|` for drifting sequences.
    pub energy_gap: Option<f64>,
}

fn unit_ball_distance(region: &StarRegion) -> Result<f64> {
    let moved = region.translate(&(-region.barycenter()));
    let s = (4.0 * PI / 3.0 / moved.volume()).cbrt();
    let scaled = moved.scale(s)?;
    let ball = StarRegion::ball(region.grid().clone(), crate::grid::Point::zeros(), 1.0);
    Ok(flat_distance(&scaled, &ball)?.value)
}

/// Classify a sequence of candidates `(R_j, Σ_j)` ordered by increasing `R_j`.
///
/// Drifting: barycenters move out monotonically and end beyond `R/2`.
/// Confined: the support radius grows by less than a tenth of the growth of `R`.
pub fn drift_diagnostic(
    sequence: &[(f64, SaddleCandidate)],
    base: &dyn Prescription,
) -> Result<DriftReport> {
    let rows = sequence
        .iter()
        .map(|(r, cand)| {
            Ok(DriftRow {
                radius: *r,
                energy: cand.energy,
                support_radius: cand.region.support_radius(),
                barycenter_norm: cand.region.barycenter().norm(),
                unit_ball_distance: unit_ball_distance(&cand.region)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sphere_energy = base
        .asymptotic_constant()
        .filter(|&c| c > 0.0)
        .map(crate::hypotheses::ball_width);
    let class = match (rows.first(), rows.last()) {
        _ if base.is_constant() => DriftClass::NeutralDrift,
        (Some(a), Some(b)) if rows.len() >= 2 && b.radius > a.radius => {
            let outward = rows.windows(2).all(|w| w[1].barycenter_norm > w[0].barycenter_norm);
            let growth = (b.support_radius - a.support_radius) / (b.radius - a.radius);
            if outward && b.barycenter_norm >= 0.5 * b.radius {
                DriftClass::Drifting
            } else if growth < 0.1 && b.support_radius < a.radius {
                DriftClass::Confined
            } else {
                DriftClass::Inconclusive
            }
        }
        _ => DriftClass::Inconclusive,
    };
    let energy_gap = match (class, sphere_energy, rows.last()) {
        (DriftClass::Drifting, Some(e), Some(last)) => Some((last.energy - e).abs()),
        _ => None,
    };
    Ok(DriftReport { rows, class, sphere_energy, energy_gap })
}
