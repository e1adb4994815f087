//! Central-difference tensor calculus on a rectangular 2D chart.
//!
//! Every differential operator here works from point evaluations of its
//! input fields on a 3x3 stencil (reach `h`), so an analytic chart only has
//! to supply values. Operator fields are given by their components in the
//! Gram-Schmidt orthonormal frame `e1 = d_u / |d_u|`, `e2` completing it.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

/// Slack for stencil points that land on the boundary up to rounding.
const DOMAIN_SLACK: f64 = 1e-12;

impl Domain {
    pub fn new(u0: f64, u1: f64, v0: f64, v1: f64) -> Self {
        Self { u0, u1, v0, v1 }
    }

    pub fn contains(&self, u: f64, v: f64, reach: f64) -> bool {
        let s = DOMAIN_SLACK * (1.0 + self.u1.abs().max(self.v1.abs()));
        u - reach >= self.u0 - s
            && u + reach <= self.u1 + s
            && v - reach >= self.v0 - s
            && v + reach <= self.v1 + s
    }

    pub fn check(&self, u: f64, v: f64, reach: f64) -> Result<()> {
        if self.contains(u, v, reach) {
            Ok(())
        } else {
            Err(GeomError::StencilOutOfDomain { u, v, reach })
        }
    }

    pub fn shrink(&self, margin: f64) -> Option<Domain> {
        let d = Domain::new(self.u0 + margin, self.u1 - margin, self.v0 + margin, self.v1 - margin);
        (d.u0 <= d.u1 && d.v0 <= d.v1).then_some(d)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.u0 + self.u1), 0.5 * (self.v0 + self.v1))
    }
}

/// Value, gradient and Hessian of a scalar at a chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2<T> {
    pub value: T,
    pub du: T,
    pub dv: T,
    pub duu: T,
    pub duv: T,
    pub dvv: T,
    /// Step used; 0 for analytic jets.
    pub h: f64,
}

/// Samples `f(u + i h, v + j h)` for `i, j` in `-1..=1`, indexed `[i+1][j+1]`.
pub fn sample9<T, X, F>(mut f: F, u: T, v: T, h: T) -> Result<[[X; 3]; 3]>
where
    T: Real,
    F: FnMut(T, T) -> Result<X>,
{
    let at = |k: usize| T::from_f64(k as f64 - 1.0) * h;
    let mut row = |i: usize| -> Result<[X; 3]> {
        let du = at(i);
        Ok([f(u + du, v - h)?, f(u + du, v)?, f(u + du, v + h)?])
    };
    Ok([row(0)?, row(1)?, row(2)?])
}

impl<T: Real> Jet2<T> {
    pub fn from_samples(s: &[[T; 3]; 3], h: T) -> Self {
        let two = T::from_f64(2.0);
        let four = T::from_f64(4.0);
        Jet2 {
            value: s[1][1],
            du: (s[2][1] - s[0][1]) / (two * h),
            dv: (s[1][2] - s[1][0]) / (two * h),
            duu: (s[2][1] - two * s[1][1] + s[0][1]) / (h * h),
            dvv: (s[1][2] - two * s[1][1] + s[1][0]) / (h * h),
            duv: (s[2][2] - s[2][0] - s[0][2] + s[0][0]) / (four * h * h),
            h: h.to_f64(),
        }
    }

    /// Gap between the diagonal-corner mixed partial and the compact
    /// axis-based one; both are O(h^2) approximations of `d_uv`.
    pub fn mixed_partial_defect(s: &[[T; 3]; 3], h: T) -> T {
        let two = T::from_f64(2.0);
        let corner = (s[2][2] - s[2][0] - s[0][2] + s[0][0]) / (T::from_f64(4.0) * h * h);
        let axis = (s[2][2] - s[2][1] - s[1][2] + two * s[1][1] - s[0][1] - s[1][0] + s[0][0])
            / (two * h * h);
        (corner - axis).abs()
    }
}

/// Finite-difference jet of a scalar field.
pub fn jet<T, F>(f: F, u: T, v: T, h: f64, domain: &Domain) -> Result<Jet2<T>>
where
    T: Real,
    F: FnMut(T, T) -> Result<T>,
{
    domain.check(u.to_f64(), v.to_f64(), h)?;
    let ht = T::from_f64(h);
    let s = sample9(f, u, v, ht)?;
    Ok(Jet2::from_samples(&s, ht))
}

/// A scalar that may know its own exact jet.
pub trait JetSource<T: Real> {
    fn value(&self, u: T, v: T) -> Result<T>;
    fn analytic_jet(&self, _u: T, _v: T) -> Option<Jet2<T>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JetMode {
    Analytic,
    FiniteDifference,
}

/// Jet in the requested mode; analytic mode falls back to differences when
/// the source has no exact jet.
pub fn jet_of<T: Real, S: JetSource<T>>(
    src: &S,
    u: T,
    v: T,
    mode: JetMode,
    h: f64,
    domain: &Domain,
) -> Result<Jet2<T>> {
    if mode == JetMode::Analytic {
        domain.check(u.to_f64(), v.to_f64(), 0.0)?;
        if let Some(j) = src.analytic_jet(u, v) {
            return Ok(j);
        }
    }
    jet(|a, b| src.value(a, b), u, v, h, domain)
}

/// Vector-valued jet (flat coordinates of a chart map and its partials).
#[derive(Debug, Clone, PartialEq)]
pub struct VecJet<T> {
    pub value: Vec<T>,
    pub du: Vec<T>,
    pub dv: Vec<T>,
    pub duu: Vec<T>,
    pub duv: Vec<T>,
    pub dvv: Vec<T>,
    pub h: f64,
}

impl<T: Real> VecJet<T> {
    pub fn from_samples(s: &[[Vec<T>; 3]; 3], h: T) -> Self {
        let dim = s[1][1].len();
        let comp = |k: usize| {
            let sk = [
                [s[0][0][k], s[0][1][k], s[0][2][k]],
                [s[1][0][k], s[1][1][k], s[1][2][k]],
                [s[2][0][k], s[2][1][k], s[2][2][k]],
            ];
            Jet2::from_samples(&sk, h)
        };
        let jets: Vec<Jet2<T>> = (0..dim).map(comp).collect();
        VecJet {
            value: jets.iter().map(|j| j.value).collect(),
            du: jets.iter().map(|j| j.du).collect(),
            dv: jets.iter().map(|j| j.dv).collect(),
            duu: jets.iter().map(|j| j.duu).collect(),
            duv: jets.iter().map(|j| j.duv).collect(),
            dvv: jets.iter().map(|j| j.dvv).collect(),
            h: h.to_f64(),
        }
    }

    /// `d_i d_j x` for `i, j` in `{0 = u, 1 = v}`.
    pub fn second(&self, i: usize, j: usize) -> &[T] {
        match (i, j) {
            (0, 0) => &self.duu,
            (1, 1) => &self.dvv,
            _ => &self.duv,
        }
    }

    pub fn first(&self, i: usize) -> &[T] {
        if i == 0 {
            &self.du
        } else {
            &self.dv
        }
    }
}

/// Symmetric 2x2 array `[[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2<T> {
    pub a11: T,
    pub a12: T,
    pub a22: T,
}

impl<T: Real> Sym2<T> {
    pub fn new(a11: T, a12: T, a22: T) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::one())
    }

    pub fn diag(a: T, b: T) -> Self {
        Self::new(a, T::zero(), b)
    }

    /// `t t^T`.
    pub fn outer(t: [T; 2]) -> Self {
        Self::new(t[0] * t[0], t[0] * t[1], t[1] * t[1])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match (i, j) {
            (0, 0) => self.a11,
            (1, 1) => self.a22,
            _ => self.a12,
        }
    }

    pub fn trace(&self) -> T {
        self.a11 + self.a22
    }

    pub fn det(&self) -> T {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    /// Frobenius norm squared, the off-diagonal entry counted twice.
    pub fn norm_sq(&self) -> T {
        self.a11 * self.a11 + T::from_f64(2.0) * self.a12 * self.a12 + self.a22 * self.a22
    }

    pub fn max_abs(&self) -> T {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }

    pub fn apply(&self, x: [T; 2]) -> [T; 2] {
        [self.a11 * x[0] + self.a12 * x[1], self.a12 * x[0] + self.a22 * x[1]]
    }

    pub fn quad(&self, x: [T; 2], y: [T; 2]) -> T {
        let ax = self.apply(x);
        ax[0] * y[0] + ax[1] * y[1]
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.a11 * k, self.a12 * k, self.a22 * k)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }

    /// Traceless part.
    pub fn traceless(&self) -> Self {
        self.sub(&Self::identity().scale(self.trace() / T::from_f64(2.0)))
    }

    /// Components in the frame rotated by `angle`: `R^T A R`.
    pub fn rotated(&self, angle: T) -> Self {
        let (c, s) = (angle.cos(), angle.sin());
        let e1 = [c, s];
        let e2 = [-s, c];
        Self::new(self.quad(e1, e1), self.quad(e1, e2), self.quad(e2, e2))
    }

    /// Eigenvalues (ascending) with unit eigenvectors.
    pub fn eigen(&self) -> ([T; 2], [[T; 2]; 2]) {
        let two = T::from_f64(2.0);
        let mean = self.trace() / two;
        let half_gap = (self.a11 - self.a22) / two;
        let r = (half_gap * half_gap + self.a12 * self.a12).sqrt();
        let lam = [mean - r, mean + r];
        // angle of the top eigenvector: tan 2phi = 2 a12 / (a11 - a22)
        let (c2, s2) = if r > T::zero() { (half_gap / r, self.a12 / r) } else { (T::one(), T::zero()) };
        let c = ((T::one() + c2) / two).max(T::zero()).sqrt();
        let s = ((T::one() - c2) / two).max(T::zero()).sqrt();
        let s = if s2 < T::zero() { -s } else { s };
        (lam, [[-s, c], [c, s]])
    }

    pub fn to_f64(&self) -> [f64; 3] {
        [self.a11.to_f64(), self.a12.to_f64(), self.a22.to_f64()]
    }
}

/// First fundamental form coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricCoeffs<T> {
    pub e: T,
    pub f: T,
    pub g: T,
}

impl<T: Real> MetricCoeffs<T> {
    pub fn new(e: T, f: T, g: T) -> Self {
        Self { e, f, g }
    }

    pub fn det(&self) -> T {
        self.e * self.g - self.f * self.f
    }

    /// `(g^uu, g^uv, g^vv)`.
    pub fn inverse(&self) -> (T, T, T) {
        let d = self.det();
        (self.g / d, -self.f / d, self.e / d)
    }

    pub fn checked(self, u: f64, v: f64) -> Result<Self> {
        let det = self.det().to_f64();
        if !(self.e.to_f64() > 0.0 && self.g.to_f64() > 0.0 && det > 0.0) {
            return Err(GeomError::DegenerateMetric { u, v, det });
        }
        Ok(self)
    }

    /// Coordinate components `(e1, e2)` of the orthonormal Gram-Schmidt frame.
    pub fn frame(&self) -> [[T; 2]; 2] {
        let a = T::one() / self.e.sqrt();
        let b = (self.e / self.det()).sqrt();
        [[a, T::zero()], [-(b * self.f) / self.e, b]]
    }
}

/// Jets of `E`, `F`, `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricJet<T> {
    pub e: Jet2<T>,
    pub f: Jet2<T>,
    pub g: Jet2<T>,
}

impl<T: Real> MetricJet<T> {
    pub fn coeffs(&self) -> MetricCoeffs<T> {
        MetricCoeffs::new(self.e.value, self.f.value, self.g.value)
    }
}

pub fn metric_jet<T, M>(metric: M, u: T, v: T, h: f64, domain: &Domain) -> Result<MetricJet<T>>
where
    T: Real,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    domain.check(u.to_f64(), v.to_f64(), h)?;
    let ht = T::from_f64(h);
    let s = sample9(|a, b| metric(a, b)?.checked(a.to_f64(), b.to_f64()), u, v, ht)?;
    let pick = |f: fn(&MetricCoeffs<T>) -> T| {
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = f(&s[i][j]);
            }
        }
        Jet2::from_samples(&out, ht)
    };
    Ok(MetricJet { e: pick(|m| m.e), f: pick(|m| m.f), g: pick(|m| m.g) })
}

/// `gamma[k][i][j] = Gamma^k_ij`, coordinate indices `0 = u`, `1 = v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel<T> {
    pub gamma: [[[T; 2]; 2]; 2],
}

impl<T: Real> Christoffel<T> {
    pub fn from_metric_jet(m: &MetricJet<T>) -> Self {
        let (e, f, g) = (m.e.value, m.f.value, m.g.value);
        let (eu, ev) = (m.e.du, m.e.dv);
        let (fu, fv) = (m.f.du, m.f.dv);
        let (gu, gv) = (m.g.du, m.g.dv);
        let two = T::from_f64(2.0);
        let d2 = two * (e * g - f * f);
        let uuu = (g * eu - two * f * fu + f * ev) / d2;
        let vuu = (two * e * fu - e * ev - f * eu) / d2;
        let uuv = (g * ev - f * gu) / d2;
        let vuv = (e * gu - f * ev) / d2;
        let uvv = (two * g * fv - g * gu - f * gv) / d2;
        let vvv = (e * gv - two * f * fv + f * gu) / d2;
        Christoffel { gamma: [[[uuu, uuv], [uuv, uvv]], [[vuu, vuv], [vuv, vvv]]] }
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> T {
        self.gamma[k][i][j]
    }
}

pub fn christoffel<T, M>(metric: M, u: T, v: T, h: f64, domain: &Domain) -> Result<Christoffel<T>>
where
    T: Real,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    Ok(Christoffel::from_metric_jet(&metric_jet(metric, u, v, h, domain)?))
}

/// Gaussian curvature of a metric from its jets (Brioschi's formula).
pub fn brioschi_curvature<T: Real>(m: &MetricJet<T>) -> T {
    let half = T::from_f64(0.5);
    let (e, f, g) = (m.e.value, m.f.value, m.g.value);
    let det3 = |a: [[T; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let first = det3([
        [-half * m.e.dvv + m.f.duv - half * m.g.duu, half * m.e.du, m.f.du - half * m.e.dv],
        [m.f.dv - half * m.g.du, e, f],
        [half * m.g.dv, f, g],
    ]);
    let second = det3([
        [T::zero(), half * m.e.dv, half * m.g.du],
        [half * m.e.dv, e, f],
        [half * m.g.du, f, g],
    ]);
    let d = e * g - f * f;
    (first - second) / (d * d)
}

/// Covariant derivative of an operator field in an orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariantDerivative<T> {
    /// `comps[k] = nabla_{e_k} S` as a symmetric array.
    pub comps: [Sym2<T>; 2],
    /// `sum_{k,i,j} ((nabla_k S)_ij)^2`.
    pub norm_sq: T,
}

impl<T: Real> CovariantDerivative<T> {
    /// `(nabla_{e_k} S) e_i` as a frame vector.
    pub fn applied(&self, k: usize, i: usize) -> [T; 2] {
        [self.comps[k].get(i, 0), self.comps[k].get(i, 1)]
    }
}

/// `nabla S` for an operator field given in the Gram-Schmidt frame.
pub fn covariant_derivative_operator<T, S, M>(
    s_field: S,
    metric: M,
    u: T,
    v: T,
    h: f64,
    domain: &Domain,
) -> Result<CovariantDerivative<T>>
where
    T: Real,
    S: Fn(T, T) -> Result<Sym2<T>>,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    covariant_derivative_rotated(s_field, metric, T::zero(), u, v, h, domain)
}

/// As [`covariant_derivative_operator`], with `s_field` expressed in the
/// Gram-Schmidt frame rotated by the constant `angle`.
pub fn covariant_derivative_rotated<T, S, M>(
    s_field: S,
    metric: M,
    angle: T,
    u: T,
    v: T,
    h: f64,
    domain: &Domain,
) -> Result<CovariantDerivative<T>>
where
    T: Real,
    S: Fn(T, T) -> Result<Sym2<T>>,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    domain.check(u.to_f64(), v.to_f64(), h)?;
    let mj = metric_jet(&metric, u, v, h, domain)?;
    let gam = Christoffel::from_metric_jet(&mj);
    let g0 = mj.coeffs();
    let ht = T::from_f64(h);
    let two = T::from_f64(2.0);

    let s0 = s_field(u, v)?;
    let d = |a: Sym2<T>, b: Sym2<T>| a.sub(&b).scale(T::one() / (two * ht));
    let ds = [d(s_field(u + ht, v)?, s_field(u - ht, v)?), d(s_field(u, v + ht)?, s_field(u, v - ht)?)];

    let base = g0.frame();
    let (c, s) = (angle.cos(), angle.sin());
    let frame = [
        [c * base[0][0] + s * base[1][0], c * base[0][1] + s * base[1][1]],
        [-s * base[0][0] + c * base[1][0], -s * base[0][1] + c * base[1][1]],
    ];
    // connection form omega(d_k) = <nabla_{d_k} e1, e2>, invariant under a
    // constant rotation of the frame
    let w = g0.det().sqrt() / g0.e;
    let omega_coord = [gam.get(1, 0, 0) * w, gam.get(1, 1, 0) * w];

    let mut comps = [Sym2::zero(); 2];
    for (k, ek) in frame.iter().enumerate() {
        let dir = ds[0].scale(ek[0]).add(&ds[1].scale(ek[1]));
        let om = omega_coord[0] * ek[0] + omega_coord[1] * ek[1];
        comps[k] = Sym2::new(
            dir.a11 - two * om * s0.a12,
            dir.a12 + om * (s0.a11 - s0.a22),
            dir.a22 + two * om * s0.a12,
        );
    }
    let norm_sq = comps[0].norm_sq() + comps[1].norm_sq();
    Ok(CovariantDerivative { comps, norm_sq })
}

/// Laplace-Beltrami operator in divergence form
/// `(1/sqrt g) d_i (sqrt g g^ij d_j f)`, fluxes evaluated at half steps.
pub fn laplace_beltrami<T, F, M>(f: F, metric: M, u: T, v: T, h: f64, domain: &Domain) -> Result<T>
where
    T: Real,
    F: Fn(T, T) -> Result<T>,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    domain.check(u.to_f64(), v.to_f64(), h)?;
    let ht = T::from_f64(h);
    let half = ht / T::from_f64(2.0);
    let two = T::from_f64(2.0);
    let s = sample9(&f, u, v, ht)?;
    let m = |a: T, b: T| metric(a, b)?.checked(a.to_f64(), b.to_f64());
    // partials of f at stencil nodes along the axis not being differenced
    let fv_at = |i: usize| (s[i][2] - s[i][0]) / (two * ht);
    let fu_at = |j: usize| (s[2][j] - s[0][j]) / (two * ht);

    let flux_u = |sign: T, i_out: usize| -> Result<T> {
        let g = m(u + sign * half, v)?;
        let (inv_uu, inv_uv, _) = g.inverse();
        let fu = sign * (s[i_out][1] - s[1][1]) / ht;
        let fv = (fv_at(i_out) + fv_at(1)) / two;
        Ok(g.det().sqrt() * (inv_uu * fu + inv_uv * fv))
    };
    let flux_v = |sign: T, j_out: usize| -> Result<T> {
        let g = m(u, v + sign * half)?;
        let (_, inv_uv, inv_vv) = g.inverse();
        let fv = sign * (s[1][j_out] - s[1][1]) / ht;
        let fu = (fu_at(j_out) + fu_at(1)) / two;
        Ok(g.det().sqrt() * (inv_uv * fu + inv_vv * fv))
    };
    let one = T::one();
    let div = (flux_u(one, 2)? - flux_u(-one, 0)?) / ht + (flux_v(one, 2)? - flux_v(-one, 0)?) / ht;
    Ok(div / m(u, v)?.det().sqrt())
}

/// Riemannian Hessian of a scalar field, coordinate components
/// `f_ij - Gamma^k_ij f_k`.
pub fn hessian<T, F, M>(f: F, metric: M, u: T, v: T, h: f64, domain: &Domain) -> Result<Sym2<T>>
where
    T: Real,
    F: Fn(T, T) -> Result<T>,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    let j = jet(f, u, v, h, domain)?;
    let g = christoffel(metric, u, v, h, domain)?;
    let grad = [j.du, j.dv];
    let second = [[j.duu, j.duv], [j.duv, j.dvv]];
    let comp = |a: usize, b: usize| second[a][b] - g.get(0, a, b) * grad[0] - g.get(1, a, b) * grad[1];
    Ok(Sym2::new(comp(0, 0), comp(0, 1), comp(1, 1)))
}

/// Orders below which an observed slope counts as second-order convergence.
pub const ORDER_THRESHOLD: f64 = 1.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum OrderEstimate {
    Measured(f64),
    Saturated,
}

impl OrderEstimate {
    pub fn passes(&self, threshold: f64) -> bool {
        match self {
            OrderEstimate::Saturated => true,
            OrderEstimate::Measured(p) => *p >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub residual: f64,
    /// `residual(prev) / residual(this)` relative to the previous step.
    pub ratio: Option<f64>,
    /// `log(ratio) / log(h_prev / h)`.
    pub pair_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub order: OrderEstimate,
    /// Residuals at or below this are treated as converged to round-off.
    pub floor: f64,
}

impl ConvergenceTable {
    pub fn from_samples(steps: &[f64], residuals: &[f64], floor: f64) -> Result<Self> {
        validate_steps(steps)?;
        if residuals.len() != steps.len() {
            return Err(GeomError::Dimension { expected: steps.len(), got: residuals.len() });
        }
        let mut rows = Vec::with_capacity(steps.len());
        for (k, (&h, &r)) in steps.iter().zip(residuals).enumerate() {
            let (ratio, pair_order) = if k == 0 {
                (None, None)
            } else {
                let ratio = residuals[k - 1] / r;
                (Some(ratio), Some(ratio.ln() / (steps[k - 1] / h).ln()))
            };
            rows.push(ConvergenceRow { h, residual: r, ratio, pair_order });
        }
        let order = if residuals.iter().all(|r| *r <= floor) {
            OrderEstimate::Saturated
        } else {
            OrderEstimate::Measured(log_log_slope(steps, residuals))
        };
        Ok(Self { rows, order, floor })
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.order.passes(threshold)
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

pub fn validate_steps(steps: &[f64]) -> Result<()> {
    if steps.len() < 3 {
        return Err(GeomError::TooFewSteps { needed: 3, got: steps.len() });
    }
    if steps.iter().any(|h| !(*h > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GeomError::StepsNotDecreasing);
    }
    Ok(())
}

/// Least-squares slope of `log r` against `log h`.
fn log_log_slope(steps: &[f64], residuals: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(residuals)
        .map(|(h, r)| (h.ln(), r.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Runs `residual` at each step and tabulates the observed order.
pub fn convergence_order<F>(mut residual: F, steps: &[f64], floor: f64) -> Result<ConvergenceTable>
where
    F: FnMut(f64) -> Result<f64>,
{
    validate_steps(steps)?;
    let values = steps.iter().map(|h| residual(*h)).collect::<Result<Vec<_>>>()?;
    ConvergenceTable::from_samples(steps, &values, floor)
}

/// Richardson extrapolation from values at `h` and `h / ratio` for a method
/// of order `p`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64, p: f64) -> f64 {
    let k = ratio.powf(p);
    (k * fine - coarse) / (k - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Dd;
    use proptest::prelude::*;

    fn big() -> Domain {
        Domain::new(-10.0, 10.0, -10.0, 10.0)
    }

    fn flat(_: f64, _: f64) -> Result<MetricCoeffs<f64>> {
        Ok(MetricCoeffs::new(1.0, 0.0, 1.0))
    }

    fn sphere_metric<T: Real>(u: T, _v: T) -> Result<MetricCoeffs<T>> {
        let s = u.sin();
        Ok(MetricCoeffs::new(T::one(), T::zero(), s * s))
    }

    struct Square;
    impl JetSource<f64> for Square {
        fn value(&self, u: f64, _v: f64) -> Result<f64> {
            Ok(u * u)
        }
        fn analytic_jet(&self, u: f64, _v: f64) -> Option<Jet2<f64>> {
            Some(Jet2 { value: u * u, du: 2.0 * u, dv: 0.0, duu: 2.0, duv: 0.0, dvv: 0.0, h: 0.0 })
        }
    }

    #[test]
    fn jet_examples() {
        let j = jet_of(&Square, 1.0, 0.0, JetMode::Analytic, 1e-3, &big()).unwrap();
        assert_eq!((j.value, j.du, j.duu), (1.0, 2.0, 2.0));
        assert_eq!(j.h, 0.0);

        let j = jet(|u: f64, _| Ok(u.sin()), 0.0, 0.0, 1e-3, &big()).unwrap();
        assert!((j.du - 1.0).abs() < 1e-6);

        let f = |u: f64, v: f64| Ok((u + v).exp());
        let e1 = (jet(f, 0.0, 0.0, 1e-2, &big()).unwrap().duu - 1.0).abs();
        let e2 = (jet(f, 0.0, 0.0, 5e-3, &big()).unwrap().duu - 1.0).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.01, "ratio {}", e1 / e2);
    }

    #[test]
    fn jet_rejects_stencil_outside_domain() {
        let d = Domain::new(0.0, 1.0, 0.0, 1.0);
        let r = jet(|u: f64, _| Ok(u), 0.0005, 0.5, 1e-3, &d);
        assert!(matches!(r, Err(GeomError::StencilOutOfDomain { .. })));
        assert!(jet(|u: f64, _| Ok(u), 0.001, 0.5, 1e-3, &d).is_ok());
    }

    #[test]
    fn mixed_partials_agree() {
        let f = |u: f64, v: f64| (u * v).sin() + u * u * v;
        let h = 1e-3;
        let s = sample9(|a, b| Ok(f(a, b)), 0.4, 0.7, h).unwrap();
        assert!(Jet2::mixed_partial_defect(&s, h) < 10.0 * h * h);
    }

    #[test]
    fn christoffel_examples() {
        let g = christoffel(flat, 0.3, 0.2, 1e-3, &big()).unwrap();
        assert!(g.gamma.iter().flatten().flatten().all(|x| *x == 0.0));

        let u = 0.8;
        let g = christoffel(sphere_metric::<f64>, u, 0.1, 1e-3, &big()).unwrap();
        assert!((g.get(0, 1, 1) + u.sin() * u.cos()).abs() < 1e-6);
        assert!((g.get(1, 0, 1) - u.cos() / u.sin()).abs() < 1e-6);

        let lam = |u: f64, v: f64| 1.0 + 0.3 * u * u + 0.1 * v;
        let conf = |u: f64, v: f64| Ok(MetricCoeffs::new(lam(u, v), 0.0, lam(u, v)));
        let (u, v) = (0.5, -0.2);
        let g = christoffel(conf, u, v, 1e-3, &big()).unwrap();
        assert!((g.get(0, 0, 0) - 0.6 * u / (2.0 * lam(u, v))).abs() < 1e-6);
        for k in 0..2 {
            assert_eq!(g.get(k, 0, 1), g.get(k, 1, 0));
        }
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let bad = |_: f64, _: f64| Ok(MetricCoeffs::new(1.0, 1.0, 1.0));
        assert!(matches!(
            christoffel(bad, 0.0, 0.0, 1e-3, &big()),
            Err(GeomError::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn covariant_derivative_examples() {
        let c = |_: f64, _: f64| Ok(Sym2::new(1.0, 0.25, -1.0));
        let r = covariant_derivative_operator(c, flat, 0.1, 0.2, 1e-3, &big()).unwrap();
        assert!(r.norm_sq.abs() < 1e-20);

        let lin = |u: f64, _: f64| Ok(Sym2::diag(u, -u));
        let r = covariant_derivative_operator(lin, flat, 0.1, 0.2, 1e-3, &big()).unwrap();
        assert!((r.norm_sq - 2.0).abs() < 1e-9);
    }

    #[test]
    fn laplace_beltrami_examples() {
        let d = big();
        let c = laplace_beltrami(|_: f64, _| Ok(3.0), sphere_metric::<f64>, 0.7, 0.0, 1e-3, &d).unwrap();
        assert!(c.abs() < 1e-12);
        let q = laplace_beltrami(|u: f64, v| Ok(u * u + v * v), flat, 0.3, -0.4, 1e-3, &d).unwrap();
        assert!((q - 4.0).abs() < 1e-8);
        let u = 0.9;
        let s = laplace_beltrami(|u: f64, _| Ok(u.cos()), sphere_metric::<f64>, u, 0.0, 1e-3, &d).unwrap();
        assert!((s + 2.0 * u.cos()).abs() < 1e-5, "{s}");
    }

    #[test]
    fn laplace_beltrami_is_second_order_and_matches_flat_laplacian() {
        let f = |u: Dd, v: Dd| Ok((u * Dd::from_f64(1.3)).sin() * v.exp());
        let d = big();
        let exact = {
            let (u, v) = (0.2f64, 0.4f64);
            (1.0 - 1.69) * (1.3 * u).sin() * v.exp()
        };
        let err = |h: f64| {
            let flat = |_: Dd, _: Dd| Ok(MetricCoeffs::new(Dd::one(), Dd::zero(), Dd::one()));
            let r = laplace_beltrami(f, flat, Dd::from_f64(0.2), Dd::from_f64(0.4), h, &d).unwrap();
            Ok((r.to_f64() - exact).abs())
        };
        let t = convergence_order(err, &[1e-2, 5e-3, 2.5e-3], 1e-30).unwrap();
        assert!(t.passes(1.9), "{t:?}");
        let s = laplace_beltrami(
            |u: Dd, _| Ok(u.cos()),
            sphere_metric::<Dd>,
            Dd::from_f64(1.1),
            Dd::zero(),
            1e-3,
            &d,
        )
        .unwrap();
        assert!((s.to_f64() + 2.0 * 1.1f64.cos()).abs() < 1e-6);
    }

    #[test]
    fn brioschi_examples() {
        let d = big();
        let m = metric_jet(flat, 0.0, 0.0, 1e-3, &d).unwrap();
        assert!(brioschi_curvature(&m).abs() < 1e-12);
        let m = metric_jet(sphere_metric::<f64>, 1.0, 0.3, 1e-3, &d).unwrap();
        assert!((brioschi_curvature(&m) - 1.0).abs() < 1e-5);
        // Poincare disk: E = G = 4/(1-r^2)^2, K = -1
        let disk = |u: f64, v: f64| {
            let l = 4.0 / (1.0 - u * u - v * v).powi(2);
            Ok(MetricCoeffs::new(l, 0.0, l))
        };
        let m = metric_jet(disk, 0.2, 0.3, 1e-3, &d).unwrap();
        assert!((brioschi_curvature(&m) + 1.0).abs() < 1e-5);
    }

    #[test]
    fn hessian_of_linear_function_on_flat_chart_vanishes() {
        let h = hessian(|u: f64, v| Ok(2.0 * u - v), flat, 0.1, 0.1, 1e-3, &big()).unwrap();
        assert!(h.max_abs() < 1e-9);
    }

    #[test]
    fn convergence_examples() {
        let t = convergence_order(|h| Ok(h * h), &[1e-2, 5e-3, 2.5e-3], 1e-14).unwrap();
        match t.order {
            OrderEstimate::Measured(p) => assert!((p - 2.0).abs() < 0.01),
            _ => panic!(),
        }
        assert!((t.rows[1].ratio.unwrap() - 4.0).abs() < 1e-9);

        let coarse = convergence_order(|h| Ok(3.0 * h * h + h.powi(4)), &[0.5, 0.25, 0.125], 1e-14).unwrap();
        let fine = convergence_order(|h| Ok(3.0 * h * h + h.powi(4)), &[1e-2, 5e-3, 2.5e-3], 1e-14).unwrap();
        let p = |t: &ConvergenceTable| match t.order {
            OrderEstimate::Measured(p) => p,
            _ => f64::NAN,
        };
        assert!((p(&fine) - 2.0).abs() < (p(&coarse) - 2.0).abs());
        assert!((p(&fine) - 2.0).abs() < 1e-4);

        let sin_err = |h: f64| {
            let j = jet(|u: f64, _| Ok(u.sin()), 0.3, 0.0, h, &big())?;
            Ok((j.du - 0.3f64.cos()).abs())
        };
        let t = convergence_order(sin_err, &[1e-1, 5e-2, 2.5e-2, 1.25e-2], 1e-14).unwrap();
        assert!(t.passes(1.9));

        let sat = convergence_order(|_| Ok(1e-16), &[1e-2, 5e-3, 2.5e-3], 100.0 * f64::EPSILON).unwrap();
        assert_eq!(sat.order, OrderEstimate::Saturated);
    }

    #[test]
    fn step_validation() {
        assert!(matches!(
            convergence_order(|h| Ok(h), &[1e-2, 5e-3], 0.0),
            Err(GeomError::TooFewSteps { .. })
        ));
        assert_eq!(convergence_order(|h| Ok(h), &[1e-2, 5e-3, 5e-3], 0.0), Err(GeomError::StepsNotDecreasing));
        assert_eq!(convergence_order(|h| Ok(h), &[1e-2, 2e-2, 5e-3], 0.0), Err(GeomError::StepsNotDecreasing));
    }

    #[test]
    fn richardson_removes_leading_term() {
        let f = |h: f64| 1.0 + 2.0 * h * h;
        assert!((richardson(f(0.1), f(0.05), 2.0, 2.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let a = Sym2::new(0.3, -0.7, 1.1);
        let (lam, vecs) = a.eigen();
        for k in 0..2 {
            let av = a.apply(vecs[k]);
            assert!((av[0] - lam[k] * vecs[k][0]).abs() < 1e-14);
            assert!((av[1] - lam[k] * vecs[k][1]).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn grad_norm_invariant_under_frame_rotation(
            angle in -3.0..3.0f64,
            a in -1.0..1.0f64, b in -1.0..1.0f64, k in 0.1..0.6f64,
        ) {
            // non-trivial metric and S field; rotated components of the same field
            let metric = move |u: f64, v: f64| Ok(MetricCoeffs::new(1.0 + k * u * u, 0.2 * k * v, 1.5 + k * v.sin()));
            let field = move |u: f64, v: f64| Ok(Sym2::new(a * u + v * v, b * u * v, -(a * u + v * v)));
            let rotated = move |u: f64, v: f64| Ok(field(u, v)?.rotated(angle));
            let d = big();
            let plain = covariant_derivative_operator(field, metric, 0.3, -0.2, 1e-3, &d).unwrap();
            let turned = covariant_derivative_rotated(rotated, metric, angle, 0.3, -0.2, 1e-3, &d).unwrap();
            prop_assert!((plain.norm_sq - turned.norm_sq).abs() < 1e-10);
        }

        #[test]
        fn laplace_beltrami_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let d = big();
            let f = |u: f64, v: f64| Ok((u * v).cos());
            let g = |u: f64, v: f64| Ok(u * u * v);
            let comb = |u: f64, v: f64| Ok(a * f(u, v)? + b * g(u, v)?);
            let lf = laplace_beltrami(f, sphere_metric::<f64>, 0.8, 0.3, 1e-3, &d).unwrap();
            let lg = laplace_beltrami(g, sphere_metric::<f64>, 0.8, 0.3, 1e-3, &d).unwrap();
            let lc = laplace_beltrami(comb, sphere_metric::<f64>, 0.8, 0.3, 1e-3, &d).unwrap();
            prop_assert!((lc - a * lf - b * lg).abs() < 1e-6);
        }
    }
}
