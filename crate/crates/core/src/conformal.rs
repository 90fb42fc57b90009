//! Conformal asymptotically flat metrics `g_t = (1 + t v)⁴ g_euc` on R³ with a
//! radial profile `v`, and the radial diagnostics of their coordinate spheres.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{energy, EnergyBreakdown, Metric};
use crate::engine::{estimate_width, sphere_path, EngineConfig};
use crate::grid::Point;
use crate::prescription::{Constant, Truncated};
use crate::quadrature::integrate_adaptive;
use crate::region::StarRegion;

const QUAD_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConformalProfile {
    /// `v(r) = (1 + r²)^{−1/2}`.
    InverseSqrt,
    /// `v(r) = erf(r/a)/r`: exactly `1/r` up to Gaussian tails, harmonic
    /// outside a core of size `a`.
    MollifiedInverse { a: f64 },
}

/// `erf(z)/z` by its Taylor series, for small `z`.
fn erf_over_z_series(z: f64) -> (f64, f64) {
    // value and derivative in z
    let z2 = z * z;
    let (mut term, mut v, mut dv) = (1.0, 0.0, 0.0);
    for n in 0..12 {
        let nf = n as f64;
        let c = term / (2.0 * nf + 1.0);
        v += c * z2.powi(n);
        if n > 0 {
            dv += c * 2.0 * nf * z.powi(2 * n - 1);
        }
        term *= -1.0 / (nf + 1.0);
    }
    let k = 2.0 / PI.sqrt();
    (k * v, k * dv)
}

impl ConformalProfile {
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        match (name, params) {
            ("inverse-sqrt", []) => Ok(ConformalProfile::InverseSqrt),
            ("mollified-inverse", [a]) if *a > 0.0 => Ok(ConformalProfile::MollifiedInverse { a: *a }),
            _ => Err(Error::InvalidArgument(format!(
                "unknown conformal profile '{name}' with {} parameters",
                params.len()
            ))),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            ConformalProfile::InverseSqrt => 1.0 / (1.0 + r * r).sqrt(),
            ConformalProfile::MollifiedInverse { a } => {
                let z = r / a;
                if z < 0.5 {
                    erf_over_z_series(z).0 / a
                } else {
                    libm::erf(z) / r
                }
            }
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            ConformalProfile::InverseSqrt => -r / (1.0 + r * r).powf(1.5),
            ConformalProfile::MollifiedInverse { a } => {
                let z = r / a;
                if z < 0.5 {
                    erf_over_z_series(z).1 / (a * a)
                } else {
                    2.0 / (PI.sqrt() * a) * (-z * z).exp() / r - libm::erf(z) / (r * r)
                }
            }
        }
    }

    /// Three-dimensional Laplacian `v″ + 2v′/r`.
    pub fn laplacian(&self, r: f64) -> f64 {
        match *self {
            ConformalProfile::InverseSqrt => -3.0 * (1.0 + r * r).powf(-2.5),
            ConformalProfile::MollifiedInverse { a } => {
                -4.0 / (PI.sqrt() * a * a * a) * (-(r * r) / (a * a)).exp()
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            ConformalProfile::InverseSqrt => "inverse-sqrt".into(),
            ConformalProfile::MollifiedInverse { a } => format!("mollified-inverse(a={a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConformalMetric {
    pub profile: ConformalProfile,
    pub t: f64,
}

impl ConformalMetric {
    pub fn new(profile: ConformalProfile, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
        }
        Ok(ConformalMetric { profile, t })
    }

    /// Conformal factor `u = 1 + t v`.
    pub fn u(&self, r: f64) -> f64 {
        1.0 + self.t * self.profile.value(r)
    }

    pub fn du(&self, r: f64) -> f64 {
        self.t * self.profile.derivative(r)
    }

    pub fn metric(&self) -> Metric {
        Metric::Conformal(*self)
    }
}

/// `A^c` of a region under `g_t`: `u⁴`-weighted area minus `c` times the
/// `u⁶`-weighted volume.
pub fn metric_energy(region: &StarRegion, c: f64, metric: &ConformalMetric) -> Result<EnergyBreakdown> {
    energy(region, &Constant { c }, &metric.metric())
}

/// `∫₀^r v(s) s² ds`.
fn moment(profile: &ConformalProfile, r: f64) -> Result<f64> {
    integrate_adaptive(|s| profile.value(s) * s * s, 0.0, r, QUAD_TOL, QUAD_TOL)
}

/// `d/dt|_{t=0} A²_{g_t}(B_1) = 4∫_{∂B₁} v − 12∫_{B₁} v = 16π v(1) − 48π ∫₀¹ v r² dr`.
pub fn dt_energy_at_zero(profile: &ConformalProfile) -> Result<f64> {
    Ok(16.0 * PI * profile.value(1.0) - 48.0 * PI * moment(profile, 1.0)?)
}

/// `φ(r) = (1/r²)∫_{∂B_r} v − (3/r³)∫_{B_r} v`, divided by `4π`:
/// `v(r) − 3 r^{−3} ∫₀^r v s² ds`.
pub fn phi(profile: &ConformalProfile, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("phi needs r > 0, got {r}")));
    }
    Ok(profile.value(r) - 3.0 * moment(profile, r)? / (r * r * r))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhiOde {
    pub r: f64,
    /// `r³φ′(r) + 3r²φ(r)`, with `φ′` by five-point differences of [`phi`].
    pub lhs: f64,
    /// `r ∫₀^r Δv s² ds`, by quadrature of the Laplacian.
    pub rhs: f64,
}

impl PhiOde {
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Both sides of `r³φ′ + 3r²φ = (r/4π) ∫_{B_r} Δv`.
pub fn phi_ode(profile: &ConformalProfile, r: f64) -> Result<PhiOde> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("phi needs r > 0, got {r}")));
    }
    let h = 1e-2 * r;
    let f = |x: f64| phi(profile, x);
    let dphi = (f(r - 2.0 * h)? - 8.0 * f(r - h)? + 8.0 * f(r + h)? - f(r + 2.0 * h)?) / (12.0 * h);
    let lhs = r * r * r * dphi + 3.0 * r * r * f(r)?;
    let lap = integrate_adaptive(|s| profile.laplacian(s) * s * s, 0.0, r, QUAD_TOL, QUAD_TOL)?;
    Ok(PhiOde { r, lhs, rhs: r * lap })
}

fn positive_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("radius must be positive, got {r}")))
    }
}

/// Mean curvature of the coordinate sphere `S_r` in `g_t`:
/// `u^{−2}(2/r + 4u′/u)`.
pub fn sphere_mean_curvature(metric: &ConformalMetric, r: f64) -> Result<f64> {
    positive_radius(r)?;
    let u = metric.u(r);
    Ok((2.0 / r + 4.0 * metric.du(r) / u) / (u * u))
}

/// `H(S_r)` as the ratio of radial derivatives of the weighted area
/// `4πr²u⁴` and weighted volume, by central differences.
pub fn sphere_mean_curvature_fd(metric: &ConformalMetric, r: f64) -> Result<f64> {
    positive_radius(r)?;
    let h = 1e-4 * r;
    let area = |s: f64| 4.0 * PI * s * s * metric.u(s).powi(4);
    let da = (area(r + h) - area(r - h)) / (2.0 * h);
    let dv = 4.0 * PI * r * r * metric.u(r).powi(6);
    Ok(da / dv)
}

/// `div_g N` for the outward unit normal field `N = u^{−2} ∂_r` of the
/// coordinate-sphere foliation, from `div_g X = u^{−6} r^{−2} ∂_r(r² u⁶ X^r)`.
pub fn normal_divergence(metric: &ConformalMetric, r: f64) -> Result<f64> {
    positive_radius(r)?;
    let flux = |s: f64| s * s * metric.u(s).powi(4);
    let h = 1e-4 * r;
    let d = (-flux(r + 2.0 * h) + 8.0 * flux(r + h) - 8.0 * flux(r - h) + flux(r - 2.0 * h)) / (12.0 * h);
    Ok(d / (r * r * metric.u(r).powi(6)))
}

/// Lapse of the coordinate-sphere foliation, `|∂_r|_g = u²`.
pub fn lapse(metric: &ConformalMetric, r: f64) -> Result<f64> {
    positive_radius(r)?;
    Ok(metric.u(r).powi(2))
}

/// `|∇_g ζ_R|_g = |ζ′(r − R)| / u²` on `S_r`.
pub fn cutoff_gradient_norm(metric: &ConformalMetric, r: f64, radius: f64) -> Result<f64> {
    let z = crate::prescription::Cutoff.derivative(r - radius).abs();
    Ok(z / lapse(metric, r)?)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    /// `max r |r H(S_r) − 2|` over the sampled radii.
    pub mean_curvature_k: f64,
    /// `max r |r div N − 2|`.
    pub divergence_k: f64,
    pub r_min: f64,
    pub r_max: f64,
}

/// Smallest `K` with `|r f(r) − 2| ≤ K/r` on log-spaced radii in `[r_min, r_max]`.
pub fn decay_fit(metric: &ConformalMetric, r_min: f64, r_max: f64, samples: usize) -> Result<DecayFit> {
    let mut kh = 0.0f64;
    let mut kd = 0.0f64;
    let n = samples.max(2);
    for i in 0..n {
        let r = r_min * (r_max / r_min).powf(i as f64 / (n - 1) as f64);
        kh = kh.max(r * (r * sphere_mean_curvature(metric, r)? - 2.0).abs());
        kd = kd.max(r * (r * normal_divergence(metric, r)? - 2.0).abs());
    }
    Ok(DecayFit { mean_curvature_k: kh, divergence_k: kd, r_min, r_max })
}

/// One row of the hypothesis (H) sweep over `t`.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisRow {
    pub t: f64,
    /// Largest `g_t` energy along the coordinate-ball path.
    pub sphere_path_max: f64,
    /// `4π/3 + t · d/dt A²_{g_t}(B₁)|_{t=0}`.
    pub first_order: f64,
    pub width: f64,
    /// `4π/3 − ω̂(g_t)`.
    pub margin: f64,
    /// Margin above `zero_tol`.
    pub holds: bool,
    /// The small-`t` statement only covers `t ≤ t_claim`.
    pub in_scope: bool,
    pub converged: bool,
    pub mean_curvature_k: f64,
    pub divergence_k: f64,
}

/// Widths `ω̂(g_t)` for `h ≡ c` truncated at `radius`, on each `t` of the grid.
pub fn hypothesis_h_check(
    profile: ConformalProfile,
    ts: &[f64],
    config: &EngineConfig,
    c: f64,
    radius: f64,
    zero_tol: f64,
    t_claim: f64,
) -> Result<Vec<HypothesisRow>> {
    let threshold = crate::hypotheses::ball_width(c);
    let slope = dt_energy_at_zero(&profile)?;
    let trunc = Truncated::new(Arc::new(Constant { c }), radius)?;
    ts.iter()
        .map(|&t| {
            let metric = ConformalMetric::new(profile, t)?;
            let mut cfg = config.clone();
            cfg.metric = metric.metric();
            let run = estimate_width(&trunc, &cfg)?;
            let r = config.path_radius.min(radius);
            let start = sphere_path(config.grid.clone(), &trunc, &cfg.metric, Point::zeros(), r, config.nodes)?;
            let sphere_path_max = start
                .nodes
                .iter()
                .map(|node| metric_energy(node, c, &metric).map(|e| e.total))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let decay = decay_fit(&metric, 10.0, 100.0, 32)?;
            let margin = threshold - run.estimate.value;
            Ok(HypothesisRow {
                t,
                sphere_path_max,
                first_order: threshold + t * slope,
                width: run.estimate.value,
                margin,
                holds: margin > zero_tol,
                in_scope: t <= t_claim,
                converged: run.estimate.converged,
                mean_curvature_k: decay.mean_curvature_k,
                divergence_k: decay.divergence_k,
            })
        })
        .collect()
}
