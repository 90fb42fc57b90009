//! Product Gauss–Legendre × uniform-azimuth quadrature grid on the unit
//! sphere S², with tangential differentiation and interpolation stencils.
//!
//! Nodes are stored row-major: polar rows `i` (north to south) times azimuth
//! columns `j`. Polar derivatives use high-order Fornberg stencils along the
//! great circle through azimuths `φ_j` and `φ_j + π`, so the pole never needs
//! special treatment; azimuthal derivatives use the exact Fourier
//! differentiation matrix of the uniform grid.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

pub type Point = Vector3<f64>;

/// Default polar rows and azimuth columns.
pub const DEFAULT_N_THETA: usize = 64;
pub const DEFAULT_N_PHI: usize = 128;
/// Half-width of the polar differentiation stencil (17-point stencil).
pub const DEFAULT_STENCIL_HALF_WIDTH: usize = 8;
const INTERP_HALF_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy)]
struct StencilEntry {
    row: usize,
    opposite: bool,
    weight: f64,
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    n_theta: usize,
    n_phi: usize,
    theta: Vec<f64>,
    sin_theta: Vec<f64>,
    phi: Vec<f64>,
    weights: Vec<f64>,
    directions: Vec<Point>,
    e_theta: Vec<Point>,
    e_phi: Vec<Point>,
    theta_stencils: Vec<Vec<StencilEntry>>,
    phi_kernel: Vec<f64>,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        Self::with_stencil(n_theta, n_phi, DEFAULT_STENCIL_HALF_WIDTH)
    }

    /// The default 64 × 128 grid.
    pub fn default_grid() -> Self {
        Self::new(DEFAULT_N_THETA, DEFAULT_N_PHI).expect("default grid is valid")
    }

    pub fn with_stencil(n_theta: usize, n_phi: usize, half_width: usize) -> Result<Self> {
        if n_theta < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 polar rows, got {n_theta}"
            )));
        }
        if n_phi < 4 || n_phi % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "azimuth count must be even and >= 4, got {n_phi}"
            )));
        }
        if half_width == 0 {
            return Err(Error::InvalidArgument("stencil half-width must be positive".into()));
        }
        let gl = GaussLegendre::new(n_theta);
        // x = cos θ descending so θ ascends from the north pole
        let xs: Vec<f64> = gl.nodes.iter().rev().copied().collect();
        let wx: Vec<f64> = gl.weights.iter().rev().copied().collect();
        let theta: Vec<f64> = xs.iter().map(|x| x.acos()).collect();
        let sin_theta: Vec<f64> = xs.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();

        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut e_theta = Vec::with_capacity(n_theta * n_phi);
        let mut e_phi = Vec::with_capacity(n_theta * n_phi);
        for i in 0..n_theta {
            let (st, ct) = (sin_theta[i], xs[i]);
            for &p in &phi {
                let (sp, cp) = p.sin_cos();
                weights.push(wx[i] * dphi);
                directions.push(Point::new(st * cp, st * sp, ct));
                e_theta.push(Point::new(ct * cp, ct * sp, -st));
                e_phi.push(Point::new(-sp, cp, 0.0));
            }
        }

        let circle = 2 * n_theta;
        let hw = half_width.min((circle - 1) / 2);
        let alpha = |q: usize| -> f64 {
            if q < n_theta {
                theta[q]
            } else {
                2.0 * PI - theta[circle - 1 - q]
            }
        };
        let mut theta_stencils = Vec::with_capacity(n_theta);
        for i in 0..n_theta {
            let a0 = alpha(i);
            let mut pos = Vec::with_capacity(2 * hw + 1);
            let mut offs = Vec::with_capacity(2 * hw + 1);
            for s in 0..=2 * hw {
                let q = (i + circle + s - hw) % circle;
                let mut d = alpha(q) - a0;
                if d > PI {
                    d -= 2.0 * PI;
                } else if d < -PI {
                    d += 2.0 * PI;
                }
                pos.push(q);
                offs.push(d);
            }
            let w = fornberg_weights(0.0, &offs, 1);
            let entries = pos
                .iter()
                .zip(&w[1])
                .map(|(&q, &weight)| {
                    if q < n_theta {
                        StencilEntry { row: q, opposite: false, weight }
                    } else {
                        StencilEntry { row: circle - 1 - q, opposite: true, weight }
                    }
                })
                .collect();
            theta_stencils.push(entries);
        }

        // Fourier differentiation kernel, d[k] multiplies u_{j+k} for u'(φ_j).
        let mut phi_kernel = vec![0.0; n_phi];
        for (k, d) in phi_kernel.iter_mut().enumerate().skip(1) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *d = -0.5 * sign / (k as f64 * dphi / 2.0).tan();
        }

        Ok(SphereGrid {
            n_theta,
            n_phi,
            theta,
            sin_theta,
            phi,
            weights,
            directions,
            e_theta,
            e_phi,
            theta_stencils,
            phi_kernel,
        })
    }

    /// Hypersurface dimension; the grid discretizes S² ⊂ R³.
    pub fn dim(&self) -> usize {
        2
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_phi + col
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn sin_theta(&self, row: usize) -> f64 {
        self.sin_theta[row]
    }

    pub fn e_theta(&self) -> &[Point] {
        &self.e_theta
    }

    pub fn e_phi(&self) -> &[Point] {
        &self.e_phi
    }

    /// Total measure of S² as represented by the weights.
    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn same_as(&self, other: &SphereGrid) -> bool {
        std::ptr::eq(self, other) || (self.n_theta == other.n_theta && self.n_phi == other.n_phi)
    }

    /// Integral over S² of a nodal field.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    #[inline]
    fn opposite_col(&self, col: usize) -> usize {
        (col + self.n_phi / 2) % self.n_phi
    }

    /// Polar derivative ∂_θ of a nodal field.
    pub fn d_theta(&self, values: &[f64], out: &mut [f64]) {
        for i in 0..self.n_theta {
            let st = &self.theta_stencils[i];
            for j in 0..self.n_phi {
                let jo = self.opposite_col(j);
                let mut acc = 0.0;
                for e in st {
                    let c = if e.opposite { jo } else { j };
                    acc += e.weight * values[e.row * self.n_phi + c];
                }
                out[i * self.n_phi + j] = acc;
            }
        }
    }

    /// Transpose of [`Self::d_theta`], accumulated into `out`.
    pub fn d_theta_transpose_add(&self, values: &[f64], out: &mut [f64]) {
        for i in 0..self.n_theta {
            let st = &self.theta_stencils[i];
            for j in 0..self.n_phi {
                let jo = self.opposite_col(j);
                let v = values[i * self.n_phi + j];
                if v == 0.0 {
                    continue;
                }
                for e in st {
                    let c = if e.opposite { jo } else { j };
                    out[e.row * self.n_phi + c] += e.weight * v;
                }
            }
        }
    }

    /// Azimuthal derivative ∂_φ of a nodal field (spectral).
    pub fn d_phi(&self, values: &[f64], out: &mut [f64]) {
        let n = self.n_phi;
        for i in 0..self.n_theta {
            let row = &values[i * n..(i + 1) * n];
            for j in 0..n {
                let mut acc = 0.0;
                for k in 1..n {
                    acc += self.phi_kernel[k] * row[(j + k) % n];
                }
                out[i * n + j] = acc;
            }
        }
    }

    /// Transpose of [`Self::d_phi`] accumulated into `out`. The Fourier
    /// differentiation matrix is antisymmetric.
    pub fn d_phi_transpose_add(&self, values: &[f64], out: &mut [f64]) {
        let n = self.n_phi;
        for i in 0..self.n_theta {
            let row = &values[i * n..(i + 1) * n];
            for j in 0..n {
                let mut acc = 0.0;
                for k in 1..n {
                    acc += self.phi_kernel[k] * row[(j + k) % n];
                }
                out[i * n + j] -= acc;
            }
        }
    }

    /// Tangential gradient components `(∂_θ u, ∂_φ u / sin θ)` at every node.
    pub fn tangential_gradient(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; self.len()];
        let mut b = vec![0.0; self.len()];
        self.d_theta(values, &mut a);
        self.d_phi(values, &mut b);
        for i in 0..self.n_theta {
            let s = self.sin_theta[i];
            for v in &mut b[i * self.n_phi..(i + 1) * self.n_phi] {
                *v /= s;
            }
        }
        (a, b)
    }

    /// Polar angle and azimuth of a unit vector.
    pub fn angles(dir: &Point) -> (f64, f64) {
        let z = dir.z.clamp(-1.0, 1.0);
        let theta = z.acos();
        let mut phi = dir.y.atan2(dir.x);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        (theta, phi)
    }

    /// Interpolate a nodal field at an arbitrary direction with local
    /// tensor-product Lagrange stencils (great circle × azimuth).
    pub fn interpolate(&self, values: &[f64], dir: &Point) -> f64 {
        let norm = dir.norm();
        let (theta, phi) = Self::angles(&(dir / norm));
        let circle = 2 * self.n_theta;
        let hw = INTERP_HALF_WIDTH.min(self.n_theta);
        // nearest row below θ
        let mut i0 = match self.theta.iter().position(|&t| t > theta) {
            Some(p) => p as isize - 1,
            None => self.n_theta as isize - 1,
        };
        if i0 < -1 {
            i0 = -1;
        }
        let alpha = |q: usize| -> f64 {
            if q < self.n_theta {
                self.theta[q]
            } else {
                2.0 * PI - self.theta[circle - 1 - q]
            }
        };
        let mut offs = Vec::with_capacity(2 * hw);
        let mut vals = Vec::with_capacity(2 * hw);
        for s in 0..2 * hw {
            let q = ((i0 + circle as isize + s as isize - hw as isize + 1) as usize) % circle;
            let mut d = alpha(q) - theta;
            if d > PI {
                d -= 2.0 * PI;
            } else if d < -PI {
                d += 2.0 * PI;
            }
            let (row, az) = if q < self.n_theta {
                (q, phi)
            } else {
                (circle - 1 - q, phi + PI)
            };
            offs.push(d);
            vals.push(self.interpolate_row(values, row, az));
        }
        lagrange_eval(&offs, &vals, 0.0)
    }

    fn interpolate_row(&self, values: &[f64], row: usize, az: f64) -> f64 {
        let n = self.n_phi;
        let h = 2.0 * PI / n as f64;
        let a = az.rem_euclid(2.0 * PI);
        let j0 = (a / h).floor() as isize;
        let hw = INTERP_HALF_WIDTH.min(n / 2) as isize;
        let mut offs = Vec::with_capacity(2 * hw as usize);
        let mut vals = Vec::with_capacity(2 * hw as usize);
        for s in (j0 - hw + 1)..=(j0 + hw) {
            let col = s.rem_euclid(n as isize) as usize;
            offs.push(s as f64 * h - a);
            vals.push(values[row * n + col]);
        }
        lagrange_eval(&offs, &vals, 0.0)
    }

    /// Real orthonormal spherical harmonics of degree ≤ `max_degree`,
    /// sampled at the nodes.
    pub fn harmonic_basis(&self, max_degree: usize) -> HarmonicBasis {
        HarmonicBasis::new(self, max_degree)
    }
}

fn lagrange_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (k, (&xk, &yk)) in xs.iter().zip(ys).enumerate() {
        let mut l = 1.0;
        for (m, &xm) in xs.iter().enumerate() {
            if m != k {
                l *= (x - xm) / (xk - xm);
            }
        }
        acc += l * yk;
    }
    acc
}

/// Finite-difference weights for derivatives up to order `m` at `z` from the
/// nodes `x` (Fornberg's recursion). Returns `c[k][j]`.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Real spherical harmonics sampled on a grid, orthonormal in L²(S²).
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    pub max_degree: usize,
    /// (l, m) for every basis function; m < 0 encodes sin(|m|φ).
    pub modes: Vec<(usize, i64)>,
    /// `values[b][node]`
    pub values: Vec<Vec<f64>>,
}

impl HarmonicBasis {
    pub fn new(grid: &SphereGrid, max_degree: usize) -> Self {
        let mut modes = Vec::new();
        for l in 0..=max_degree {
            modes.push((l, 0));
            for m in 1..=l as i64 {
                modes.push((l, m));
                modes.push((l, -m));
            }
        }
        let mut values = vec![vec![0.0; grid.len()]; modes.len()];
        for i in 0..grid.n_theta() {
            let x = grid.theta[i].cos();
            let p = normalized_legendre_table(max_degree, x);
            for j in 0..grid.n_phi() {
                let node = grid.index(i, j);
                let phi = grid.phi[j];
                for (b, &(l, m)) in modes.iter().enumerate() {
                    let am = m.unsigned_abs() as usize;
                    let plm = p[l][am];
                    values[b][node] = match m.cmp(&0) {
                        std::cmp::Ordering::Equal => plm,
                        std::cmp::Ordering::Greater => {
                            std::f64::consts::SQRT_2 * plm * (am as f64 * phi).cos()
                        }
                        std::cmp::Ordering::Less => {
                            std::f64::consts::SQRT_2 * plm * (am as f64 * phi).sin()
                        }
                    };
                }
            }
        }
        HarmonicBasis { max_degree, modes, values }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Nodal field Σ_b coeffs[b] Y_b.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.values.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (c, y) in coeffs.iter().zip(&self.values) {
            if *c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(y) {
                *o += c * v;
            }
        }
        out
    }

    /// Inner products Σ_k v_k Y_b(k) for every basis function (no weights).
    pub fn project_raw(&self, v: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|y| y.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Fully normalized associated Legendre functions `P̄_l^m(x)` including the
/// `1/√(4π)` factor, so that `P̄_l^m(cos θ)·{1, √2 cos mφ, √2 sin mφ}` is
/// orthonormal on S².
fn normalized_legendre_table(lmax: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= -s * ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt();
        }
        p[m][m] = pmm;
        if m < lmax {
            p[m + 1][m] = x * (2.0 * m as f64 + 3.0).sqrt() * pmm;
        }
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sphere_measure() {
        let g = SphereGrid::new(16, 32).unwrap();
        assert!((g.total_measure() - 4.0 * PI).abs() < 1e-12 * 4.0 * PI);
    }

    #[test]
    fn coordinate_functions_integrate_to_zero() {
        let g = SphereGrid::default_grid();
        for c in 0..3 {
            let v: Vec<f64> = g.directions().iter().map(|d| d[c]).collect();
            assert!(g.integrate(&v).abs() < 1e-12);
        }
        let z2: Vec<f64> = g.directions().iter().map(|d| d.z * d.z).collect();
        assert!((g.integrate(&z2) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_odd_azimuth() {
        assert!(SphereGrid::new(8, 15).is_err());
        assert!(SphereGrid::new(1, 16).is_err());
    }

    #[test]
    fn tangential_gradient_of_coordinate_function() {
        // u = z = cos θ: ∂_θ u = -sin θ, ∂_φ u = 0
        // u = x = sin θ cos φ: ∂_θ u = cos θ cos φ, ∂_φ u / sin θ = -sin φ
        let g = SphereGrid::new(24, 48).unwrap();
        let z: Vec<f64> = g.directions().iter().map(|d| d.z).collect();
        let (a, b) = g.tangential_gradient(&z);
        let x: Vec<f64> = g.directions().iter().map(|d| d.x).collect();
        let (ax, bx) = g.tangential_gradient(&x);
        for i in 0..g.n_theta() {
            for j in 0..g.n_phi() {
                let k = g.index(i, j);
                let (t, p) = (g.theta()[i], g.phi()[j]);
                assert!((a[k] + t.sin()).abs() < 1e-11, "{} {}", a[k], -t.sin());
                assert!(b[k].abs() < 1e-11);
                assert!((ax[k] - t.cos() * p.cos()).abs() < 1e-11);
                assert!((bx[k] + p.sin()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transposes_are_adjoint() {
        let g = SphereGrid::new(8, 16).unwrap();
        let n = g.len();
        let u: Vec<f64> = (0..n).map(|k| ((k * 7919) % 101) as f64 / 101.0).collect();
        let v: Vec<f64> = (0..n).map(|k| ((k * 104729) % 97) as f64 / 97.0).collect();
        let mut du = vec![0.0; n];
        g.d_theta(&u, &mut du);
        let mut dtv = vec![0.0; n];
        g.d_theta_transpose_add(&v, &mut dtv);
        let lhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dtv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        g.d_phi(&u, &mut du);
        let mut dpv = vec![0.0; n];
        g.d_phi_transpose_add(&v, &mut dpv);
        let lhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dpv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let g = SphereGrid::new(16, 32).unwrap();
        let basis = g.harmonic_basis(6);
        assert_eq!(basis.len(), 49);
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                let ip: f64 = g
                    .weights()
                    .iter()
                    .zip(basis.values[a].iter().zip(&basis.values[b]))
                    .map(|(w, (x, y))| w * x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "{a} {b} {ip}");
            }
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_field() {
        let g = SphereGrid::new(32, 64).unwrap();
        let f = |d: &Point| (d.x + 0.3 * d.y * d.z).exp();
        let vals: Vec<f64> = g.directions().iter().map(f).collect();
        for dir in [
            Point::new(0.3, -0.2, 0.9),
            Point::new(0.0, 0.0, 1.0),
            Point::new(-0.7, 0.1, -0.7),
            Point::new(1.0, 1e-3, 0.0),
        ] {
            let d = dir.normalize();
            let v = g.interpolate(&vals, &d);
            assert!((v - f(&d)).abs() < 1e-8, "{v} vs {}", f(&d));
        }
    }

    #[test]
    fn fornberg_first_derivative_of_quadratic() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 1);
        assert!((w[1][0] + 0.5).abs() < 1e-15);
        assert!(w[1][1].abs() < 1e-15);
        assert!((w[1][2] - 0.5).abs() < 1e-15);
    }
}
