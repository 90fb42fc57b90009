//! String-method relaxation of a mountain pass path with pinned endpoints.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use super::path::{reparameterize, refine_peak, uniform_parameters};
use crate::error::{Error, Result};
use crate::functional::{energy, gradient, transition_mass, Metric};
use crate::grid::HarmonicBasis;
use crate::prescription::{Prescription, Truncated};
use crate::region::{RegionPath, StarRegion};

#[derive(Debug, Clone, Serialize)]
pub struct RelaxSchedule {
    pub max_sweeps: usize,
    /// Highest harmonic degree in the descent direction.
    pub band_limit: usize,
    pub initial_step: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Stop once the path maximum drops by less than this over `patience` sweeps.
    pub tolerance: f64,
    pub patience: usize,
    pub clip: bool,
}

impl Default for RelaxSchedule {
    fn default() -> Self {
        RelaxSchedule {
            max_sweeps: 60,
            band_limit: 6,
            initial_step: 0.05,
            armijo: 1e-4,
            max_backtracks: 12,
            tolerance: 1e-9,
            patience: 3,
            clip: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeDiagnostics {
    pub t: f64,
    pub energy: f64,
    pub transition_mass: f64,
    pub support_radius: f64,
    pub barycenter_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub max_energy: f64,
    pub argmax_t: f64,
    pub mean_step: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub argmax: usize,
    pub nodes: Vec<NodeDiagnostics>,
    /// Path maximum after each accepted sweep; entry 0 is the burn-in.
    pub log: Vec<SweepRecord>,
    pub converged: bool,
    /// Several separated nodes share the maximum.
    pub multi_peak: bool,
}

/// Index of the largest entry; ties go to the smallest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b })
}

/// Largest change of log-radius (or center shift over radius) per step.
const MAX_DEFORMATION: f64 = 0.25;
const MIN_STEP: f64 = 1e-8;

struct Descent<'a> {
    p: &'a dyn Prescription,
    metric: &'a Metric,
    basis: &'a HarmonicBasis,
    schedule: &'a RelaxSchedule,
    barrier: Option<f64>,
}

enum StepOutcome {
    Moved(StarRegion, f64, f64),
    /// The perpendicular gradient vanishes.
    Stationary,
    Failed,
}

impl Descent<'_> {
    /// One Armijo-backtracked step on node `k` along the preconditioned
    /// gradient with its component along the path tangent removed.
    fn step(&self, nodes: &[StarRegion], k: usize, e0: f64, alpha0: f64) -> Result<StepOutcome> {
        let node = &nodes[k];
        let grid = node.grid();
        let g = gradient(node, self.p, self.metric)?;
        let a = self.basis.project_raw(&g.d_log_radius);
        // tangent from the neighbours, in the same coordinates
        let (prev, next) = (&nodes[k - 1], &nodes[k + 1]);
        let tf: Vec<f64> = next
            .log_radius()
            .iter()
            .zip(prev.log_radius())
            .zip(grid.weights())
            .map(|((u, v), w)| w * (u - v))
            .collect();
        let tb = self.basis.project_raw(&tf);
        let tc = next.center() - prev.center();
        let r_eq = (3.0 * node.volume() / (4.0 * PI)).cbrt();
        let kc = 4.0 * PI / (r_eq * r_eq);
        let kb: Vec<f64> = self.basis.modes.iter().map(|&(l, _)| 1.0 + (l * (l + 1)) as f64).collect();

        let mut db: Vec<f64> = a.iter().zip(&kb).map(|(a, k)| -a / k).collect();
        let mut dc = -g.d_center / kc;
        let tt: f64 = tb.iter().zip(&kb).map(|(t, k)| k * t * t).sum::<f64>() + kc * tc.norm_squared();
        if tt > 0.0 {
            let dt = -(a.iter().zip(&tb).map(|(a, t)| a * t).sum::<f64>() + g.d_center.dot(&tc));
            let s = dt / tt;
            for (d, t) in db.iter_mut().zip(&tb) {
                *d -= s * t;
            }
            dc -= tc * s;
        }
        let decrement = -(a.iter().zip(&db).map(|(a, d)| a * d).sum::<f64>() + g.d_center.dot(&dc));
        let scale: f64 = a.iter().zip(&kb).map(|(a, k)| a * a / k).sum::<f64>() + g.d_center.norm_squared() / kc;
        if !(decrement > 1e-20 * scale) || decrement <= 0.0 {
            return Ok(StepOutcome::Stationary);
        }
        let df = self.basis.synthesize(&db);
        // keep one step within a bounded relative deformation
        let reach = df.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(dc.norm() / r_eq);
        let mut alpha = alpha0.min(MAX_DEFORMATION / reach);
        for _ in 0..=self.schedule.max_backtracks {
            let f: Vec<f64> = node.log_radius().iter().zip(&df).map(|(f, d)| f + alpha * d).collect();
            let c = node.center() + dc * alpha;
            if self.barrier.is_none_or(|b| c.norm() < b) {
                let trial = node.with_log_radius(f)?.with_center(c);
                if let Ok(e) = energy(&trial, self.p, self.metric) {
                    if e.total <= e0 - self.schedule.armijo * alpha * decrement {
                        return Ok(StepOutcome::Moved(trial, e.total, alpha));
                    }
                }
            }
            alpha *= 0.5;
        }
        Ok(StepOutcome::Failed)
    }
}

/// Clip to the barrier ball when that does not raise the energy.
fn clip_node(
    node: StarRegion,
    e: f64,
    barrier: f64,
    p: &dyn Prescription,
    metric: &Metric,
) -> Result<(StarRegion, f64)> {
    if node.support_radius() <= barrier || node.center().norm() >= barrier {
        return Ok((node, e));
    }
    let clipped = node.clip_to_ball(barrier)?;
    let ec = energy(&clipped, p, metric)?.total;
    Ok(if ec <= e { (clipped, ec) } else { (node, e) })
}

/// Relax `path` towards a minimal-maximum path for the truncated prescription.
///
/// Each sweep takes one preconditioned descent step per interior node, then
/// reparameterizes, clips to `B_{R+1−2ε_R}` and snaps the node nearest the
/// string maximum onto it. A sweep that would raise the path maximum is
/// rejected and the step lengths shrink.
pub fn relax_path(
    path: &RegionPath,
    trunc: &Truncated,
    metric: &Metric,
    schedule: &RelaxSchedule,
) -> Result<(RegionPath, WidthEstimate)> {
    let m = path.len();
    let first = &path.nodes[0];
    let degenerate = path.nodes[1..m - 1].iter().all(|n| {
        n.center() == first.center() && n.log_radius() == first.log_radius()
    });
    if m < 3 || degenerate {
        return Err(Error::DegeneratePath(
            "no interior node differs from the empty-set proxy".into(),
        ));
    }
    let p: &dyn Prescription = trunc;
    let end_energy = energy(&path.nodes[m - 1], p, metric)?.total;
    if !(end_energy < 0.0) {
        return Err(Error::NotMountainPass { energy: end_energy });
    }
    let barrier = if schedule.clip { Some(trunc.barrier_radius()?) } else { None };
    let basis = path.nodes[0].grid().harmonic_basis(schedule.band_limit);
    let descent = Descent { p, metric, basis: &basis, schedule, barrier };

    let energies = |nodes: &[StarRegion]| -> Result<Vec<f64>> {
        nodes.par_iter().map(|n| Ok(energy(n, p, metric)?.total)).collect()
    };
    let finish = |mut nodes: Vec<StarRegion>, mut e: Vec<f64>, snap: bool| -> Result<(Vec<StarRegion>, Vec<f64>)> {
        if let Some(b) = barrier {
            let clipped: Vec<(StarRegion, f64)> = nodes
                .into_par_iter()
                .zip(e.into_par_iter())
                .map(|(n, en)| clip_node(n, en, b, p, metric))
                .collect::<Result<_>>()?;
            (nodes, e) = clipped.into_iter().unzip();
        }
        if snap {
            let k = argmax(&e);
            if k > 0 && k + 1 < nodes.len() {
                let (peak, ep) = refine_peak(&nodes, k, p, metric)?;
                nodes[k] = peak;
                e[k] = ep;
            }
        }
        Ok((nodes, e))
    };

    let mut nodes = path.nodes.clone();
    let mut e = energies(&nodes)?;
    (nodes, e) = finish(nodes, e, true)?;
    let k0 = argmax(&e);
    let t = uniform_parameters(m);
    let mut log = vec![SweepRecord { sweep: 0, max_energy: e[k0], argmax_t: t[k0], mean_step: 0.0, accepted: true }];
    let mut steps = vec![schedule.initial_step; m];
    let mut converged = false;
    let mut stalled = false;

    for sweep in 1..=schedule.max_sweeps {
        let top = argmax(&e);
        let peak = e[top];
        // past the maximum, negative nodes already end a mountain pass path;
        // moving them further only stretches the string
        let frozen = |k: usize| k == 0 || k + 1 == m || (k > top && e[k] < 0.0);
        let moved: Vec<StepOutcome> = (0..m)
            .into_par_iter()
            .map(|k| {
                if frozen(k) {
                    Ok(StepOutcome::Stationary)
                } else {
                    descent.step(&nodes, k, e[k], steps[k])
                }
            })
            .collect::<Result<_>>()?;
        if moved.iter().all(|o| matches!(o, StepOutcome::Stationary)) {
            converged = true;
            break;
        }
        if moved.iter().all(|o| !matches!(o, StepOutcome::Moved(..))) {
            stalled = true;
            break;
        }
        let mut stepped = nodes.clone();
        let mut e_stepped = e.clone();
        let mut taken = Vec::new();
        for (k, mv) in moved.into_iter().enumerate() {
            match mv {
                StepOutcome::Moved(n, en, a) => {
                    stepped[k] = n;
                    e_stepped[k] = en;
                    taken.push(a);
                    steps[k] = if a == steps[k] { (2.0 * a).min(1.0) } else { a };
                }
                StepOutcome::Failed => steps[k] = (0.25 * steps[k]).max(MIN_STEP),
                StepOutcome::Stationary => {}
            }
        }
        let mean_step = taken.iter().sum::<f64>() / taken.len() as f64;

        let respaced = reparameterize(&stepped);
        let e_respaced = energies(&respaced)?;
        let (cand, e_cand) = finish(respaced, e_respaced, true)?;
        let accepted = e_cand[argmax(&e_cand)] <= peak + 1e-13 * peak.abs().max(1.0);
        if accepted {
            nodes = cand;
            e = e_cand;
        } else {
            // the string lost resolution near its maximum: shorter steps
            for s in &mut steps {
                *s = (0.25 * *s).max(MIN_STEP);
            }
            if steps.iter().all(|&s| s <= MIN_STEP) {
                stalled = true;
            }
        }
        let k = argmax(&e);
        log.push(SweepRecord { sweep, max_energy: e[k], argmax_t: t[k], mean_step, accepted });
        if stalled {
            break;
        }
        let accepted_log: Vec<f64> = log.iter().filter(|r| r.accepted).map(|r| r.max_energy).collect();
        if accepted_log.len() > schedule.patience {
            let then = accepted_log[accepted_log.len() - 1 - schedule.patience];
            if then - e[k] < schedule.tolerance {
                converged = true;
                break;
            }
        }
    }

    let k = argmax(&e);
    let top = e[k];
    let multi_peak = (0..m).any(|j| j.abs_diff(k) > 1 && top - e[j] <= 1e-9 * top.abs().max(1.0));
    let diagnostics = nodes
        .par_iter()
        .zip(e.par_iter())
        .zip(t.par_iter())
        .map(|((n, &en), &tk)| {
            Ok(NodeDiagnostics {
                t: tk,
                energy: en,
                transition_mass: transition_mass(n, trunc)?,
                support_radius: n.support_radius(),
                barycenter_norm: n.barycenter().norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let estimate = WidthEstimate {
        value: top,
        argmax: k,
        nodes: diagnostics,
        log,
        converged: converged && !stalled,
        multi_peak,
    };
    Ok((RegionPath::new(nodes, t)?, estimate))
}
