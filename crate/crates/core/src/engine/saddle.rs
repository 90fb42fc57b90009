//! Refinement of a path maximum to a numerical critical point of index one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::Result;
use crate::functional::{energy, gradient, hessian_vector, residual_norms, Metric};
use crate::grid::{HarmonicBasis, Point};
use crate::prescription::Prescription;
use crate::region::StarRegion;

#[derive(Debug, Clone, Serialize)]
pub struct SaddleConfig {
    /// Highest harmonic degree among the shape unknowns (degree 1 is
    /// replaced by the center).
    pub band_limit: usize,
    pub max_iterations: usize,
    /// Target for the reduced gradient norm over the area.
    pub gradient_tolerance: f64,
    /// Alternative target for the area-weighted RMS of `H − h`.
    pub tolerance: f64,
    /// Longest step along any one Hessian mode.
    pub max_step: f64,
    pub fd_step: f64,
    /// Harmonic degree of the subspace used for the Hessian index.
    pub index_degree: usize,
    pub zero_threshold: f64,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        SaddleConfig {
            band_limit: 8,
            max_iterations: 80,
            tolerance: 1e-10,
            gradient_tolerance: 1e-12,
            max_step: 0.5,
            fd_step: 1e-5,
            index_degree: 8,
            zero_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianIndex {
    pub negative: usize,
    pub zero: usize,
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleCandidate {
    #[serde(skip)]
    pub region: StarRegion,
    pub energy: f64,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub reduced_gradient_norm: f64,
    pub index: HessianIndex,
    pub iterations: usize,
    pub converged: bool,
}

struct Reduced<'a> {
    base: &'a StarRegion,
    basis: HarmonicBasis,
    modes: Vec<usize>,
    p: &'a dyn Prescription,
    metric: &'a Metric,
}

impl Reduced<'_> {
    fn dim(&self) -> usize {
        self.modes.len() + 3
    }

    fn region(&self, z: &DVector<f64>) -> Result<StarRegion> {
        let nm = self.modes.len();
        let mut coeffs = vec![0.0; self.basis.len()];
        for (i, &b) in self.modes.iter().enumerate() {
            coeffs[b] = z[i];
        }
        let df = self.basis.synthesize(&coeffs);
        let f = self.base.log_radius().iter().zip(&df).map(|(a, b)| a + b).collect();
        let c = self.base.center() + Point::new(z[nm], z[nm + 1], z[nm + 2]);
        Ok(self.base.with_log_radius(f)?.with_center(c))
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let g = gradient(&self.region(z)?, self.p, self.metric)?;
        let proj = self.basis.project_raw(&g.d_log_radius);
        let nm = self.modes.len();
        let mut out = DVector::zeros(self.dim());
        for (i, &b) in self.modes.iter().enumerate() {
            out[i] = proj[b];
        }
        for i in 0..3 {
            out[nm + i] = g.d_center[i];
        }
        Ok(out)
    }

    fn hessian(&self, z: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[col] += h;
            zm[col] -= h;
            let d = (self.gradient(&zp)? - self.gradient(&zm)?) / (2.0 * h);
            j.set_column(col, &d);
        }
        Ok((&j + j.transpose()) * 0.5)
    }
}

/// Eigendecomposition of the reduced Hessian with the index of the mode
/// closest to uniform scaling (coordinate 0 is the degree-0 harmonic).
struct Modes {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    up: usize,
}

impl Modes {
    fn new(hess: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(hess.clone());
        let up = (0..eig.eigenvalues.len())
            .max_by(|&a, &b| eig.eigenvectors[(0, a)].abs().total_cmp(&eig.eigenvectors[(0, b)].abs()))
            .unwrap_or(0);
        Modes { eig, up }
    }

    fn scale(&self) -> f64 {
        self.eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300)
    }

    fn up_vector(&self) -> DVector<f64> {
        self.eig.eigenvectors.column(self.up).into_owned()
    }

    /// Newton step for energy descent on the complement of the scaling mode,
    /// using `|λ|` and clamping every modal component to `cap`, so that
    /// nearly flat modes do not shorten the others.
    fn descent(&self, g: &DVector<f64>, cap: f64) -> DVector<f64> {
        let floor = 1e-12 * self.scale();
        let mut step = DVector::zeros(g.len());
        for i in (0..g.len()).filter(|&i| i != self.up) {
            let v = self.eig.eigenvectors.column(i);
            let c = -v.dot(g) / self.eig.eigenvalues[i].abs().max(floor);
            step += v * c.clamp(-cap, cap);
        }
        step
    }
}

/// Drive the reduced gradient to zero from `start`. Each iteration takes a
/// Newton step downhill on the complement of the scaling-like Hessian mode,
/// backtracked on the energy, then a Newton step uphill along that mode,
/// backtracked until the directional derivative shrinks.
pub fn refine_saddle(
    start: &StarRegion,
    p: &dyn Prescription,
    metric: &Metric,
    config: &SaddleConfig,
) -> Result<SaddleCandidate> {
    // about its barycenter a near-round region has a nearly band-limited
    // radius; the rest is filtered out so the unknowns can reach every mode
    let start = start.recenter(start.barycenter()).unwrap_or_else(|_| start.clone());
    let basis = start.grid().harmonic_basis(config.band_limit);
    let weighted: Vec<f64> =
        start.log_radius().iter().zip(start.grid().weights()).map(|(f, w)| f * w).collect();
    let start = start.with_log_radius(basis.synthesize(&basis.project_raw(&weighted)))?;
    let modes = (0..basis.len()).filter(|&b| basis.modes[b].0 != 1).collect();
    let red = Reduced { base: &start, basis, modes, p, metric };
    let energy_at = |z: &DVector<f64>| -> Result<f64> { Ok(energy(&red.region(z)?, p, metric)?.total) };
    let done = |g: &DVector<f64>, z: &DVector<f64>| -> Result<bool> {
        let region = red.region(z)?;
        Ok(g.norm() <= config.gradient_tolerance * region.area()
            || residual_norms(&region, p, metric)?.1 < config.tolerance)
    };
    let mut z = DVector::zeros(red.dim());
    let mut g = red.gradient(&z)?;
    let mut e = energy_at(&z)?;
    let mut converged = done(&g, &z)?;
    let mut iterations = 0;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let modes = Modes::new(&red.hessian(&z, config.fd_step)?);
        let mut moved = false;

        let d = modes.descent(&g, config.max_step);
        let slope = g.dot(&d);
        if slope < 0.0 {
            let mut alpha = 1.0;
            for _ in 0..40 {
                let zn = &z + &d * alpha;
                if let Ok(en) = energy_at(&zn) {
                    if en <= e + 1e-4 * alpha * slope {
                        z = zn;
                        e = en;
                        g = red.gradient(&z)?;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }

        let v = modes.up_vector();
        let gu = v.dot(&g);
        let lam = modes.eig.eigenvalues[modes.up];
        let mut t = gu / lam.abs().max(1e-8 * modes.scale());
        t = t.clamp(-config.max_step, config.max_step);
        for _ in 0..40 {
            let zn = &z + &v * t;
            if let Ok(gn) = red.gradient(&zn) {
                if v.dot(&gn).abs() < gu.abs() {
                    z = zn;
                    g = gn;
                    e = energy_at(&z)?;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        converged = done(&g, &z)?;
    }
    let region = red.region(&z)?;
    let (residual_sup, residual_l2) = residual_norms(&region, p, metric)?;
    Ok(SaddleCandidate {
        energy: energy(&region, p, metric)?.total,
        residual_sup,
        residual_l2,
        reduced_gradient_norm: g.norm(),
        index: hessian_index(&region, p, metric, config.index_degree, config.zero_threshold)?,
        iterations,
        converged,
        region,
    })
}

/// Eigenvalues of the energy Hessian in log-radius DOFs (center fixed),
/// restricted to the span of the harmonics up to `degree`. The harmonics are
/// orthonormal for the grid weights, so the matrix is the Galerkin
/// discretization of the second variation.
pub fn hessian_index(
    region: &StarRegion,
    p: &dyn Prescription,
    metric: &Metric,
    degree: usize,
    zero_threshold: f64,
) -> Result<HessianIndex> {
    let basis = region.grid().harmonic_basis(degree);
    let nb = basis.len();
    let mut h = DMatrix::zeros(nb, nb);
    for b in 0..nb {
        let v = &basis.values[b];
        let hv = if metric.is_flat() {
            hessian_vector(region, p, v)?
        } else {
            let step = 1e-5;
            let shifted = |s: f64| -> Result<Vec<f64>> {
                let f = region.log_radius().iter().zip(v).map(|(f, y)| f + s * y).collect();
                Ok(gradient(&region.with_log_radius(f)?, p, metric)?.d_log_radius)
            };
            let (gp, gm) = (shifted(step)?, shifted(-step)?);
            gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect()
        };
        let col = basis.project_raw(&hv);
        for a in 0..nb {
            h[(a, b)] = col[a];
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(HessianIndex {
        negative: eigenvalues.iter().filter(|&&l| l < -zero_threshold).count(),
        zero: eigenvalues.iter().filter(|&&l| l.abs() <= zero_threshold).count(),
        eigenvalues,
    })
}
