//! The energy `A^h(Ω) = Area(∂Ω) − ∫_Ω h`, its exact discrete gradient,
//! first variation, homothety/translation derivatives and related integrals.
//!
//! Under a conformal metric `g = u⁴ g_euc` the area element carries the
//! weight `u⁴` and the volume element `u⁶`; the flat metric uses weights that
//! are exactly one, so both cases share one code path.

use std::f64::consts::PI;

use serde::Serialize;

use crate::conformal::ConformalMetric;
use crate::error::{Error, Result};
use crate::grid::Point;
use crate::prescription::{Prescription, Truncated, N};
use crate::region::{ray_rule, ray_segments, StarRegion};

#[derive(Debug, Clone, Copy, Default)]
pub enum Metric {
    #[default]
    Flat,
    Conformal(ConformalMetric),
}

/// Metric weights at a point: area weight, its gradient, volume weight, its gradient.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Weights {
    pub area: f64,
    pub area_grad: Point,
    pub vol: f64,
    pub vol_grad: Point,
}

impl Metric {
    pub(crate) fn weights(&self, x: &Point) -> Weights {
        match self {
            Metric::Flat => Weights {
                area: 1.0,
                area_grad: Point::zeros(),
                vol: 1.0,
                vol_grad: Point::zeros(),
            },
            Metric::Conformal(m) => {
                let r = x.norm();
                let u = m.u(r);
                let du = m.du(r);
                let radial = if r > 0.0 { x / r } else { Point::zeros() };
                let u3 = u * u * u;
                Weights {
                    area: u3 * u,
                    area_grad: radial * (4.0 * u3 * du),
                    vol: u3 * u3,
                    vol_grad: radial * (6.0 * u3 * u * u * du),
                }
            }
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Metric::Flat)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub area: f64,
    pub prescription_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ShapeGradient {
    /// `∂A^h/∂f_k` for the log-radius DOFs.
    pub d_log_radius: Vec<f64>,
    pub d_center: Point,
    /// `(Σ_k g_k² / w_k)^{1/2}`, the L² norm of the gradient density.
    pub norm: f64,
}

fn check_finite(v: f64, x: &Point) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("integrand is {v} at ({}, {}, {})", x.x, x.y, x.z)))
    }
}

pub fn energy(region: &StarRegion, p: &dyn Prescription, metric: &Metric) -> Result<EnergyBreakdown> {
    let grid = region.grid();
    let geo = region.geometry();
    let c = region.center();
    let breaks = p.radial_breaks();
    let mut area = 0.0;
    let mut vol_term = 0.0;
    for (k, d) in grid.directions().iter().enumerate() {
        let w = grid.weights()[k];
        let rho = geo.rho[k];
        let xb = c + d * rho;
        area += w * metric.weights(&xb).area * rho * geo.s[k];
        vol_term += w * ray_terms(&c, d, rho, &breaks, p, metric, 0)?.q;
    }
    Ok(EnergyBreakdown { area, prescription_term: vol_term, total: area - vol_term })
}

/// `Q = ∫₀^ρ Φ(c + sθ) s² ds` on one ray, `Φ = h·u⁶`, as evaluated by the
/// split Gauss rule, with its exact derivatives up to `order`.
#[derive(Debug, Clone, Copy, Default)]
struct RayTerms {
    q: f64,
    dq_drho: f64,
    dq_dc: Point,
    d2q_drho2: f64,
}

#[allow(clippy::too_many_arguments)]
fn ray_terms(
    c: &Point,
    d: &Point,
    rho: f64,
    breaks: &[f64],
    p: &dyn Prescription,
    metric: &Metric,
    order: u8,
) -> Result<RayTerms> {
    let (sig, a) = ray_rule();
    let mut out = RayTerms::default();
    for seg in ray_segments(c, d, rho, breaks) {
        let len = seg.hi - seg.lo;
        let (mut s0, mut s_hi, mut s_lo, mut s2) = (0.0, 0.0, 0.0, 0.0);
        let mut sc = Point::zeros();
        for (si, ai) in sig.iter().zip(a) {
            let s = seg.lo + len * si;
            let x = c + d * s;
            let h = p.value(&x);
            let mw = metric.weights(&x);
            let phi = check_finite(h * mw.vol, &x)?;
            s0 += ai * phi * s * s;
            if order == 0 {
                continue;
            }
            let grad_phi = p.gradient(&x) * mw.vol + mw.vol_grad * h;
            let gd = grad_phi.dot(d);
            let g1 = gd * s * s + 2.0 * s * phi;
            s_hi += ai * si * g1;
            s_lo += ai * (1.0 - si) * g1;
            sc += grad_phi * (ai * s * s);
            if order >= 2 && seg.ends_at_rho {
                let g2 = p.directional_second(&x, d) * s * s + 4.0 * s * gd + 2.0 * phi;
                s2 += ai * si * si * g2;
            }
        }
        out.q += len * s0;
        if order == 0 {
            continue;
        }
        let dq_dhi = s0 + len * s_hi;
        let dq_dlo = -s0 + len * s_lo;
        out.dq_dc += seg.dlo_dc * dq_dlo + seg.dhi_dc * dq_dhi + sc * len;
        if seg.ends_at_rho {
            out.dq_drho = dq_dhi;
            out.d2q_drho2 = 2.0 * s_hi + len * s2;
        }
    }
    Ok(out)
}

/// Exact derivative of the discrete energy with respect to every DOF.
pub fn gradient(region: &StarRegion, p: &dyn Prescription, metric: &Metric) -> Result<ShapeGradient> {
    let (g, dc) = radial_gradient(region, p, metric, true)?;
    let d_log_radius: Vec<f64> = g.iter().zip(region.radii()).map(|(g, r)| g * r).collect();
    let norm = d_log_radius
        .iter()
        .zip(region.grid().weights())
        .map(|(g, w)| g * g / w)
        .sum::<f64>()
        .sqrt();
    Ok(ShapeGradient { d_log_radius, d_center: dc, norm })
}

/// Gradient with respect to the radii `ρ_k` (not log-radii), and the center.
fn radial_gradient(
    region: &StarRegion,
    p: &dyn Prescription,
    metric: &Metric,
    with_prescription: bool,
) -> Result<(Vec<f64>, Point)> {
    let grid = region.grid();
    let n = grid.len();
    let geo = region.geometry();
    let c = region.center();
    let breaks = p.radial_breaks();
    let mut out = vec![0.0; n];
    let mut ya = vec![0.0; n];
    let mut yb = vec![0.0; n];
    let mut dc = Point::zeros();
    for (k, d) in grid.directions().iter().enumerate() {
        let w = grid.weights()[k];
        let (rho, sk) = (geo.rho[k], geo.s[k]);
        let xb = c + d * rho;
        let mw = metric.weights(&xb);
        let f = rho * sk;
        let f_rho = sk + rho * rho / sk;
        out[k] += w * (mw.area * f_rho + f * mw.area_grad.dot(d));
        dc += mw.area_grad * (w * f);
        let row = k / grid.n_phi();
        ya[k] = w * mw.area * rho * geo.a[k] / sk;
        yb[k] = w * mw.area * rho * geo.b[k] / sk / grid.sin_theta(row);

        if with_prescription {
            let rt = ray_terms(&c, d, rho, &breaks, p, metric, 1)?;
            out[k] -= w * rt.dq_drho;
            dc -= rt.dq_dc * w;
        }
    }
    grid.d_theta_transpose_add(&ya, &mut out);
    grid.d_phi_transpose_add(&yb, &mut out);
    Ok((out, dc))
}

/// Log-radius gradient of the area term alone.
pub fn area_gradient(region: &StarRegion, metric: &Metric) -> Vec<f64> {
    let dummy = crate::prescription::Constant { c: 0.0 };
    let (g, _) = radial_gradient(region, &dummy, metric, false).expect("area gradient is total");
    g.iter().zip(region.radii()).map(|(g, r)| g * r).collect()
}

/// Volume-element density `w_k ρ_k³ u⁶(x_k)` that converts log-radius
/// partials into pointwise normal densities.
pub fn normal_density(region: &StarRegion, metric: &Metric) -> Vec<f64> {
    let c = region.center();
    region
        .grid()
        .weights()
        .iter()
        .zip(region.grid().directions())
        .zip(region.radii())
        .map(|((w, d), r)| w * r * r * r * metric.weights(&(c + d * r)).vol)
        .collect()
}

/// Discrete mean curvature at the boundary nodes: area gradient density.
pub fn mean_curvature(region: &StarRegion, metric: &Metric) -> Vec<f64> {
    area_gradient(region, metric)
        .iter()
        .zip(normal_density(region, metric))
        .map(|(g, m)| g / m)
        .collect()
}

/// Pointwise `H − h` at the nodes, from the energy gradient.
pub fn curvature_residual(region: &StarRegion, p: &dyn Prescription, metric: &Metric) -> Result<Vec<f64>> {
    let g = gradient(region, p, metric)?;
    Ok(g.d_log_radius
        .iter()
        .zip(normal_density(region, metric))
        .map(|(g, m)| g / m)
        .collect())
}

/// Sup and area-weighted L² norms of `H − h`.
pub fn residual_norms(region: &StarRegion, p: &dyn Prescription, metric: &Metric) -> Result<(f64, f64)> {
    let r = curvature_residual(region, p, metric)?;
    let sup = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let geo = region.geometry();
    let (mut num, mut den) = (0.0, 0.0);
    for (k, v) in r.iter().enumerate() {
        let da = region.grid().weights()[k] * geo.rho[k] * geo.s[k];
        num += da * v * v;
        den += da;
    }
    Ok((sup, (num / den).sqrt()))
}

/// Change of the log-radius field induced by moving the boundary along `X`
/// (center fixed): `δf = X·ν S/ρ²`.
pub fn log_radius_variation<F: Fn(&Point) -> Point>(region: &StarRegion, x_field: F) -> Vec<f64> {
    let geo = region.geometry();
    let normals = region.normals(&geo);
    region
        .boundary_points()
        .iter()
        .enumerate()
        .map(|(k, x)| x_field(x).dot(&normals[k]) * geo.s[k] / (geo.rho[k] * geo.rho[k]))
        .collect()
}

/// `δA^h(X)`, evaluated as the discrete gradient paired with the induced
/// log-radius variation.
pub fn first_variation<F: Fn(&Point) -> Point>(
    region: &StarRegion,
    p: &dyn Prescription,
    metric: &Metric,
    x_field: F,
) -> Result<f64> {
    let g = gradient(region, p, metric)?;
    let df = log_radius_variation(region, x_field);
    Ok(g.d_log_radius.iter().zip(&df).map(|(a, b)| a * b).sum())
}

/// `d/ds|_{s=1} A^h(sΩ) = n·Area − ∫_Ω ((n+1)h + ∇h·x)` in the flat metric.
pub fn homothety_derivative(region: &StarRegion, p: &dyn Prescription) -> Result<f64> {
    let interior = region.integrate_interior_split(
        |x| (N + 1.0) * p.value(x) + p.gradient(x).dot(x),
        &p.radial_breaks(),
    )?;
    Ok(N * region.area() - interior)
}

/// Central difference of `s ↦ A^h(sΩ)` at `s = 1`.
pub fn homothety_derivative_fd(region: &StarRegion, p: &dyn Prescription, step: f64) -> Result<f64> {
    let e = |s: f64| -> Result<f64> { Ok(energy(&region.scale(s)?, p, &Metric::Flat)?.total) };
    Ok((e(1.0 + step)? - e(1.0 - step)?) / (2.0 * step))
}

/// `d/dt A^h(Ω + te) = −∫_Ω ∇h·e` in the flat metric.
pub fn translation_derivative(region: &StarRegion, p: &dyn Prescription, e: &Point) -> Result<f64> {
    if p.is_constant() {
        return Ok(0.0);
    }
    Ok(-region.integrate_interior_split(|x| p.gradient(x).dot(e), &p.radial_breaks())?)
}

/// `∫_Ω |∇h|`; for a slab this is the mass `∫_Ω n|ζ′(x·ν + τ)|` of the
/// transition layer.
pub fn gradient_mass(region: &StarRegion, p: &dyn Prescription) -> Result<f64> {
    region.integrate_interior_split(|x| p.gradient(x).norm(), &p.radial_breaks())
}

/// `∫_Ω |∇ζ_R| h` on the shell `R ≤ ‖x‖ ≤ R + 1`.
///
/// Each ray is intersected with the shell analytically and the pieces are
/// integrated with composite Gauss rules, so regions far inside `B_R` cost
/// nothing and the shell is always resolved.
pub fn transition_mass(region: &StarRegion, trunc: &Truncated) -> Result<f64> {
    const PANELS: usize = 4;
    let (gs, ga) = ray_rule();
    let c = region.center();
    let c2 = c.norm_squared();
    let (r_in, r_out) = (trunc.radius, trunc.radius + 1.0);
    let mut total = 0.0;
    for ((w, d), rho) in region.grid().weights().iter().zip(region.grid().directions()).zip(region.radii()) {
        let cd = c.dot(d);
        let chord = |r: f64| -> Option<(f64, f64)> {
            let disc = cd * cd - c2 + r * r;
            (disc >= 0.0).then(|| (-cd - disc.sqrt(), -cd + disc.sqrt()))
        };
        let Some((o_lo, o_hi)) = chord(r_out) else { continue };
        let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(2);
        match chord(r_in) {
            Some((i_lo, i_hi)) => {
                pieces.push((o_lo, i_lo));
                pieces.push((i_hi, o_hi));
            }
            None => pieces.push((o_lo, o_hi)),
        }
        let mut ray = 0.0;
        for (lo, hi) in pieces {
            let (lo, hi) = (lo.max(0.0), hi.min(rho));
            if hi <= lo {
                continue;
            }
            let len = (hi - lo) / PANELS as f64;
            for panel in 0..PANELS {
                let base = lo + panel as f64 * len;
                for (si, ai) in gs.iter().zip(ga) {
                    let t = base + si * len;
                    let x = c + d * t;
                    let v = trunc.zeta_gradient_norm(&x) * trunc.base.value(&x);
                    ray += ai * len * t * t * check_finite(v, &x)?;
                }
            }
        }
        total += w * ray;
    }
    Ok(total)
}

/// Sharp isoperimetric constant `C` with `Area ≥ C Vol^{n/(n+1)}` (n = 2).
pub fn isoperimetric_constant() -> f64 {
    (36.0 * PI).cbrt()
}

/// Certified lower barrier for the width when `sup h ≤ M`: on `{Vol = v}`
/// every region has `A^h ≥ a`. Returns `(v, a)`.
pub fn isoperimetric_certificate(sup_h: f64) -> Result<(f64, f64)> {
    if !(sup_h > 0.0) {
        return Err(Error::InvalidArgument(format!("sup h must be positive, got {sup_h}")));
    }
    let c = isoperimetric_constant();
    // maximize y^n (C − M y) with y = Vol^{1/(n+1)}
    let y = N * c / ((N + 1.0) * sup_h);
    let v = y.powi(3);
    let a = y * y * c / (N + 1.0);
    Ok((v, a))
}

/// Second derivative of the flat energy along the log-radius direction `v`
/// (center fixed), exact for the discrete formulas.
pub fn hessian_vector(region: &StarRegion, p: &dyn Prescription, v: &[f64]) -> Result<Vec<f64>> {
    let grid = region.grid();
    let n = grid.len();
    let geo = region.geometry();
    let c = region.center();
    let breaks = p.radial_breaks();
    let (g_rho, _) = radial_gradient(region, p, &Metric::Flat, true)?;
    // δρ = ρ ⊙ v
    let drho: Vec<f64> = geo.rho.iter().zip(v).map(|(r, v)| r * v).collect();
    let (da, db) = grid.tangential_gradient(&drho);
    let mut hd = vec![0.0; n];
    let mut ya = vec![0.0; n];
    let mut yb = vec![0.0; n];
    for (k, d) in grid.directions().iter().enumerate() {
        let w = grid.weights()[k];
        let (rho, ak, bk, sk) = (geo.rho[k], geo.a[k], geo.b[k], geo.s[k]);
        let s3 = sk * sk * sk;
        let f_rr = 3.0 * rho / sk - rho.powi(3) / s3;
        let f_ra = ak / sk - rho * rho * ak / s3;
        let f_rb = bk / sk - rho * rho * bk / s3;
        let f_aa = rho / sk - rho * ak * ak / s3;
        let f_bb = rho / sk - rho * bk * bk / s3;
        let f_ab = -rho * ak * bk / s3;
        hd[k] += w * (f_rr * drho[k] + f_ra * da[k] + f_rb * db[k]);
        ya[k] = w * (f_ra * drho[k] + f_aa * da[k] + f_ab * db[k]);
        let row = k / grid.n_phi();
        yb[k] = w * (f_rb * drho[k] + f_ab * da[k] + f_bb * db[k]) / grid.sin_theta(row);

        let q_rr = ray_terms(&c, d, rho, &breaks, p, &Metric::Flat, 2)?.d2q_drho2;
        hd[k] -= w * q_rr * drho[k];
    }
    grid.d_theta_transpose_add(&ya, &mut hd);
    grid.d_phi_transpose_add(&yb, &mut hd);
    // H_f v = ρ⊙(H_ρρ(ρ⊙v)) + ρ⊙G_ρ⊙v
    Ok((0..n).map(|k| geo.rho[k] * hd[k] + geo.rho[k] * g_rho[k] * v[k]).collect())
}
