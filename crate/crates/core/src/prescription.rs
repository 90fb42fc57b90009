//! Prescription functions `h`, the cutoff profile `ζ`, truncations
//! `h_R = ζ(‖x‖ − R) h` and the barrier margin `ε_R`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Point;

/// Hypersurface dimension used throughout (surfaces in R³).
pub const N: f64 = 2.0;

pub trait Prescription: Send + Sync + Debug {
    fn value(&self, x: &Point) -> f64;

    fn gradient(&self, x: &Point) -> Point;

    /// `θᵀ ∇²h(x) θ`; central differences of the gradient unless overridden.
    fn directional_second(&self, x: &Point, dir: &Point) -> f64 {
        let eps = 1e-5 * (1.0 + x.norm());
        (self.gradient(&(x + dir * eps)) - self.gradient(&(x - dir * eps))).dot(dir) / (2.0 * eps)
    }

    /// The constant `c` that `h` converges to at infinity, if any.
    fn asymptotic_constant(&self) -> Option<f64>;

    /// An upper bound for `sup h`.
    fn sup_bound(&self) -> f64;

    fn name(&self) -> String;

    fn is_constant(&self) -> bool {
        false
    }

    /// Radii of spheres across which `h` changes rapidly; ray quadratures
    /// split there.
    fn radial_breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `h ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub c: f64,
}

impl Prescription for Constant {
    fn value(&self, _x: &Point) -> f64 {
        self.c
    }
    fn gradient(&self, _x: &Point) -> Point {
        Point::zeros()
    }
    fn directional_second(&self, _x: &Point, _dir: &Point) -> f64 {
        0.0
    }
    fn asymptotic_constant(&self) -> Option<f64> {
        Some(self.c)
    }
    fn sup_bound(&self) -> f64 {
        self.c
    }
    fn name(&self) -> String {
        format!("constant(c={})", self.c)
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// `h(x) = c (1 + A e^{−‖x‖²/s²})`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianEnhanced {
    pub c: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Prescription for GaussianEnhanced {
    fn value(&self, x: &Point) -> f64 {
        let s2 = self.width * self.width;
        self.c * (1.0 + self.amplitude * (-x.norm_squared() / s2).exp())
    }
    fn gradient(&self, x: &Point) -> Point {
        let s2 = self.width * self.width;
        x * (-2.0 * self.c * self.amplitude * (-x.norm_squared() / s2).exp() / s2)
    }
    fn directional_second(&self, x: &Point, dir: &Point) -> f64 {
        let s2 = self.width * self.width;
        let e = self.c * self.amplitude * (-x.norm_squared() / s2).exp();
        let xd = x.dot(dir);
        e * (4.0 * xd * xd / (s2 * s2) - 2.0 * dir.norm_squared() / s2)
    }
    fn asymptotic_constant(&self) -> Option<f64> {
        Some(self.c)
    }
    fn sup_bound(&self) -> f64 {
        self.c * (1.0 + self.amplitude.max(0.0))
    }
    fn name(&self) -> String {
        format!("gaussian(c={}, A={}, s={})", self.c, self.amplitude, self.width)
    }
}

/// `h(x) = c (1 − a/(1 + ‖x‖²))`: increases towards its limit, so spheres far
/// out are cheaper than spheres near the origin.
#[derive(Debug, Clone, Copy)]
pub struct RadialIncreasing {
    pub c: f64,
    pub a: f64,
}

impl Prescription for RadialIncreasing {
    fn value(&self, x: &Point) -> f64 {
        self.c * (1.0 - self.a / (1.0 + x.norm_squared()))
    }
    fn gradient(&self, x: &Point) -> Point {
        let q = 1.0 + x.norm_squared();
        x * (2.0 * self.c * self.a / (q * q))
    }
    fn directional_second(&self, x: &Point, dir: &Point) -> f64 {
        let q = 1.0 + x.norm_squared();
        let xd = x.dot(dir);
        2.0 * self.c * self.a * (dir.norm_squared() / (q * q) - 4.0 * xd * xd / (q * q * q))
    }
    fn asymptotic_constant(&self) -> Option<f64> {
        Some(self.c)
    }
    fn sup_bound(&self) -> f64 {
        self.c
    }
    fn name(&self) -> String {
        format!("radial-increasing(c={}, a={})", self.c, self.a)
    }
}

/// `h(x) = a + b‖x‖`; unbounded, violates the scaling condition at large `‖x‖`.
#[derive(Debug, Clone, Copy)]
pub struct AffineRadial {
    pub a: f64,
    pub b: f64,
}

impl Prescription for AffineRadial {
    fn value(&self, x: &Point) -> f64 {
        self.a + self.b * x.norm()
    }
    fn gradient(&self, x: &Point) -> Point {
        let r = x.norm();
        if r == 0.0 {
            Point::zeros()
        } else {
            x * (self.b / r)
        }
    }
    fn asymptotic_constant(&self) -> Option<f64> {
        None
    }
    fn sup_bound(&self) -> f64 {
        f64::INFINITY
    }
    fn name(&self) -> String {
        format!("affine-radial(a={}, b={})", self.a, self.b)
    }
}

/// Slab profile `h(x) = n ζ(x·ν + τ)`: equal to `n` on `{x·ν ≤ −τ}`, zero on
/// `{x·ν ≥ 1 − τ}`.
#[derive(Debug, Clone, Copy)]
pub struct Slab {
    pub normal: Point,
    pub offset: f64,
    pub cutoff: Cutoff,
}

impl Slab {
    pub fn new(normal: Point, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0) {
            return Err(Error::InvalidArgument("slab normal must be non-zero".into()));
        }
        Ok(Slab { normal: normal / len, offset, cutoff: Cutoff })
    }
}

impl Prescription for Slab {
    fn value(&self, x: &Point) -> f64 {
        N * self.cutoff.value(x.dot(&self.normal) + self.offset)
    }
    fn gradient(&self, x: &Point) -> Point {
        self.normal * (N * self.cutoff.derivative(x.dot(&self.normal) + self.offset))
    }
    fn asymptotic_constant(&self) -> Option<f64> {
        None
    }
    fn sup_bound(&self) -> f64 {
        N
    }
    fn name(&self) -> String {
        format!(
            "slab(nu=({}, {}, {}), tau={})",
            self.normal.x, self.normal.y, self.normal.z, self.offset
        )
    }
}

/// The smooth step `ζ(r) = σ(1−r) / (σ(1−r) + σ(r))`, `σ(s) = e^{−1/s}` for
/// `s > 0` and zero otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cutoff;

fn sigma(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn sigma_prime(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

pub fn make_standard_cutoff() -> Cutoff {
    Cutoff
}

impl Cutoff {
    pub fn value(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        if r >= 1.0 {
            return 0.0;
        }
        let (p, q) = (sigma(1.0 - r), sigma(r));
        p / (p + q)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 {
            return 0.0;
        }
        let (p, q) = (sigma(1.0 - r), sigma(r));
        let (dp, dq) = (sigma_prime(1.0 - r), sigma_prime(r));
        let d = p + q;
        -(dp * q + p * dq) / (d * d)
    }
}

/// `h_R(x) = ζ(‖x‖ − R) h(x)`.
#[derive(Debug, Clone)]
pub struct Truncated {
    pub base: Arc<dyn Prescription>,
    pub radius: f64,
    pub cutoff: Cutoff,
}

impl Truncated {
    pub fn new(base: Arc<dyn Prescription>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "truncation radius must be positive, got {radius}"
            )));
        }
        Ok(Truncated { base, radius, cutoff: Cutoff })
    }

    /// `ζ(‖x‖ − R)`.
    pub fn zeta(&self, x: &Point) -> f64 {
        self.cutoff.value(x.norm() - self.radius)
    }

    /// `|∇ζ_R(x)| = |ζ′(‖x‖ − R)|`.
    pub fn zeta_gradient_norm(&self, x: &Point) -> f64 {
        self.cutoff.derivative(x.norm() - self.radius).abs()
    }

    pub fn epsilon(&self) -> Result<f64> {
        epsilon_r(&self.cutoff, self.radius)
    }

    /// Clipping radius `R + 1 − 2ε_R`.
    pub fn barrier_radius(&self) -> Result<f64> {
        Ok(self.radius + 1.0 - 2.0 * self.epsilon()?)
    }
}

impl Prescription for Truncated {
    fn value(&self, x: &Point) -> f64 {
        let z = self.zeta(x);
        if z == 0.0 {
            0.0
        } else {
            z * self.base.value(x)
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        let r = x.norm();
        let z = self.cutoff.value(r - self.radius);
        if z == 0.0 {
            return Point::zeros();
        }
        let dz = self.cutoff.derivative(r - self.radius);
        let mut g = self.base.gradient(x) * z;
        if dz != 0.0 {
            g += x * (self.base.value(x) * dz / r);
        }
        g
    }

    /// The constant of the untruncated prescription.
    fn asymptotic_constant(&self) -> Option<f64> {
        self.base.asymptotic_constant()
    }

    fn sup_bound(&self) -> f64 {
        self.base.sup_bound()
    }

    fn name(&self) -> String {
        format!("{} truncated at R={}", self.base.name(), self.radius)
    }

    fn is_constant(&self) -> bool {
        false
    }

    fn radial_breaks(&self) -> Vec<f64> {
        let mut b = self.base.radial_breaks();
        // ζ′ is a narrow bump; one Gauss piece per shell is not enough
        b.extend((0..=SHELL_PANELS).map(|k| self.radius + k as f64 / SHELL_PANELS as f64));
        b
    }
}

const EPS_SAMPLES: usize = 10_000;
const SHELL_PANELS: usize = 4;

/// Barrier margin: `ε ∈ (0, 1/2)` with `ζ(r) < 1/(4(r + R))` for every
/// `r ≥ 1 − 2ε`.
///
/// The crossing of the two curves is bracketed by a dense scan of `[0, 1]`,
/// refined by bisection, nudged inside the admissible side, and then checked
/// again on a dense sample of `[1 − 2ε, 1]` (past `r = 1` the cutoff vanishes).
pub fn epsilon_r(cutoff: &Cutoff, radius: f64) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::RadiusTooSmall(radius));
    }
    let g = |r: f64| cutoff.value(r) - 0.25 / (r + radius);
    let step = 1.0 / EPS_SAMPLES as f64;
    let last_bad = (0..=EPS_SAMPLES)
        .rev()
        .map(|k| k as f64 * step)
        .find(|&r| g(r) >= 0.0)
        .ok_or(Error::RadiusTooSmall(radius))?;
    let (mut lo, mut hi) = (last_bad, (last_bad + step).min(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let eps = 0.5 * (1.0 - hi);
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::RadiusTooSmall(radius));
    }
    let start = 1.0 - 2.0 * eps;
    for k in 0..=EPS_SAMPLES {
        let r = start + (1.0 - start) * k as f64 / EPS_SAMPLES as f64;
        if g(r) >= 0.0 {
            return Err(Error::Convergence(format!(
                "barrier margin failed verification at r = {r} for R = {radius}"
            )));
        }
    }
    Ok(eps)
}

/// Build a prescription from a family name and positional parameters.
///
/// | family | parameters |
/// |---|---|
/// | `constant` | `c` |
/// | `gaussian` | `c, A, s` |
/// | `radial-increasing` | `c, a` |
/// | `affine-radial` | `a, b` |
/// | `slab` | `nx, ny, nz, tau` |
pub fn from_family(family: &str, params: &[f64]) -> Result<Arc<dyn Prescription>> {
    let want = |k: usize| -> Result<()> {
        if params.len() != k {
            Err(Error::InvalidArgument(format!(
                "prescription '{family}' takes {k} parameters, got {}",
                params.len()
            )))
        } else {
            Ok(())
        }
    };
    let positive = |name: &str, v: f64| -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{family}: {name} must be positive, got {v}")))
        }
    };
    Ok(match family {
        "constant" => {
            want(1)?;
            positive("c", params[0])?;
            Arc::new(Constant { c: params[0] })
        }
        "gaussian" => {
            want(3)?;
            positive("c", params[0])?;
            positive("s", params[2])?;
            if params[1] <= -1.0 {
                return Err(Error::InvalidArgument("gaussian: A must exceed -1".into()));
            }
            Arc::new(GaussianEnhanced { c: params[0], amplitude: params[1], width: params[2] })
        }
        "radial-increasing" => {
            want(2)?;
            positive("c", params[0])?;
            if !(0.0..1.0).contains(&params[1]) {
                return Err(Error::InvalidArgument("radial-increasing: a must lie in [0, 1)".into()));
            }
            Arc::new(RadialIncreasing { c: params[0], a: params[1] })
        }
        "affine-radial" => {
            want(2)?;
            Arc::new(AffineRadial { a: params[0], b: params[1] })
        }
        "slab" => {
            want(4)?;
            Arc::new(Slab::new(Point::new(params[0], params[1], params[2]), params[3])?)
        }
        other => {
            return Err(Error::InvalidArgument(format!("unknown prescription family '{other}'")))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(p: &dyn Prescription, x: &Point) -> Point {
        let h = 1e-6;
        let mut g = Point::zeros();
        for i in 0..3 {
            let mut e = Point::zeros();
            e[i] = h;
            g[i] = (p.value(&(x + e)) - p.value(&(x - e))) / (2.0 * h);
        }
        g
    }

    #[test]
    fn cutoff_plateaus_and_symmetry() {
        let z = make_standard_cutoff();
        assert_eq!(z.value(-1.0), 1.0);
        assert_eq!(z.value(2.0), 0.0);
        assert_eq!(z.value(0.5), 0.5);
        // ζ(0.9) = 1 / (1 + e^{1/0.1 − 1/0.9})
        let expect = 1.0 / (1.0 + (10.0f64 - 1.0 / 0.9).exp());
        assert!((z.value(0.9) - expect).abs() < 1e-17);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let r = -0.5 + 2.0 * k as f64 / 1000.0;
            let v = z.value(r);
            assert!(v <= prev);
            assert!(z.derivative(r) <= 0.0);
            prev = v;
        }
    }

    #[test]
    fn cutoff_derivative_matches_differences() {
        let z = Cutoff;
        for r in [0.05, 0.3, 0.5, 0.77, 0.95] {
            let fd = (z.value(r + 1e-6) - z.value(r - 1e-6)) / 2e-6;
            assert!((z.derivative(r) - fd).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn gradients_match_differences() {
        let base: Arc<dyn Prescription> =
            Arc::new(GaussianEnhanced { c: 2.0, amplitude: 0.5, width: 2.0 });
        let fams: Vec<Arc<dyn Prescription>> = vec![
            base.clone(),
            Arc::new(RadialIncreasing { c: 2.0, a: 0.5 }),
            Arc::new(AffineRadial { a: 2.0, b: 1.0 }),
            Arc::new(Slab::new(Point::new(1.0, 0.0, 0.0), 0.3).unwrap()),
            Arc::new(Truncated::new(base, 3.0).unwrap()),
        ];
        let probes = [
            Point::new(0.3, -0.2, 0.1),
            Point::new(1.0, 2.0, 2.5),
            Point::new(-0.1, 0.2, 3.4),
            Point::new(0.2, 0.0, 0.0),
        ];
        for p in &fams {
            for x in &probes {
                let (g, fd) = (p.gradient(x), fd_gradient(p.as_ref(), x));
                assert!((g - fd).norm() <= 1e-6 * (1.0 + g.norm()), "{}: {g} vs {fd}", p.name());
            }
        }
    }

    #[test]
    fn analytic_second_derivatives() {
        let fams: Vec<Box<dyn Prescription>> = vec![
            Box::new(GaussianEnhanced { c: 2.0, amplitude: 0.5, width: 2.0 }),
            Box::new(RadialIncreasing { c: 2.0, a: 0.5 }),
        ];
        let x = Point::new(0.4, -1.1, 0.7);
        let d = Point::new(0.2, 0.5, -0.3).normalize();
        for p in &fams {
            let eps = 1e-5;
            let fd = (p.gradient(&(x + d * eps)) - p.gradient(&(x - d * eps))).dot(&d) / (2.0 * eps);
            assert!((p.directional_second(&x, &d) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn truncation_plateaus() {
        let base: Arc<dyn Prescription> = Arc::new(Constant { c: 2.0 });
        let t = Truncated::new(base, 5.0).unwrap();
        assert_eq!(t.value(&Point::new(4.9, 0.0, 0.0)), 2.0);
        assert_eq!(t.value(&Point::new(0.0, 6.0, 0.0)), 0.0);
        assert_eq!(t.gradient(&Point::new(0.0, 6.5, 0.0)), Point::zeros());
    }

    #[test]
    fn epsilon_r_at_ten() {
        let z = Cutoff;
        let eps = epsilon_r(&z, 10.0).unwrap();
        // independent check: the curves cross at r = 1 − 2ε
        let r = 1.0 - 2.0 * eps;
        assert!((z.value(r) - 0.25 / (r + 10.0)).abs() < 1e-12);
        assert!(eps > 0.05 && eps < 0.15);
        let eps20 = epsilon_r(&z, 20.0).unwrap();
        assert!(eps20 <= eps);
        assert!(matches!(epsilon_r(&z, 0.0), Err(Error::RadiusTooSmall(_))));
        assert!(matches!(epsilon_r(&z, -1.0), Err(Error::RadiusTooSmall(_))));
    }

    #[test]
    fn families_parse() {
        assert!(from_family("constant", &[2.0]).unwrap().is_constant());
        assert!(from_family("gaussian", &[2.0, 0.5]).is_err());
        assert!(from_family("nope", &[]).is_err());
        let s = from_family("slab", &[0.0, 0.0, 2.0, 0.5]).unwrap();
        assert_eq!(s.value(&Point::new(0.0, 0.0, -1.0)), 2.0);
    }
}
