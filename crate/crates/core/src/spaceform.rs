//! Flat-embedding models of the space forms `M^n(c)` and of `M^n(c) x R`.
//!
//! A model point is a vector of `factor_dim()` flat coordinates; the height
//! in the `R` factor is carried separately (or as the trailing coordinate in
//! the packed representation used by the immersion code). The spherical
//! model is the round sphere `<p,p> = 1/c` in Euclidean space, the
//! hyperbolic model the upper sheet `<p,p>_L = 1/c`, `p_0 > 0`, of the
//! hyperboloid in Minkowski space with signature `(-,+,...,+)`.

use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::real::Real;

/// Absolute tolerance on the model constraint, scaled by the model radius.
pub const MODEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Spherical,
    Hyperbolic,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceFormModel {
    c: f64,
    n: usize,
    kind: ModelKind,
}

impl SpaceFormModel {
    pub fn new(c: f64, n: usize) -> Result<Self> {
        if !c.is_finite() {
            return Err(GeomError::InvalidModel(format!("curvature {c} is not finite")));
        }
        if n < 2 {
            return Err(GeomError::InvalidModel(format!("dimension {n} < 2")));
        }
        let kind = if c > 0.0 {
            ModelKind::Spherical
        } else if c < 0.0 {
            ModelKind::Hyperbolic
        } else {
            ModelKind::Euclidean
        };
        Ok(Self { c, n, kind })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Number of flat coordinates of a point of `M^n(c)`.
    pub fn factor_dim(&self) -> usize {
        match self.kind {
            ModelKind::Euclidean => self.n,
            _ => self.n + 1,
        }
    }

    /// Number of packed flat coordinates of `M^n(c) x R` (height last).
    pub fn ambient_dim(&self) -> usize {
        self.factor_dim() + 1
    }

    /// The model inner product on the `M` factor.
    pub fn factor_dot<T: Real>(&self, a: &[T], b: &[T]) -> T {
        let mut acc = T::zero();
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            if i == 0 && self.kind == ModelKind::Hyperbolic {
                acc -= *x * *y;
            } else {
                acc += *x * *y;
            }
        }
        acc
    }

    /// Product metric on packed vectors `(v_M | s)`.
    pub fn dot<T: Real>(&self, a: &[T], b: &[T]) -> T {
        let k = self.factor_dim();
        self.factor_dot(&a[..k], &b[..k]) + a[k] * b[k]
    }

    pub fn norm<T: Real>(&self, a: &[T]) -> T {
        self.dot(a, a).max(T::zero()).sqrt()
    }

    /// Deviation of `<p,p>` from `1/c`, relative to the model scale.
    pub fn constraint_defect<T: Real>(&self, p: &[T]) -> f64 {
        match self.kind {
            ModelKind::Euclidean => 0.0,
            _ => {
                let target = 1.0 / self.c;
                let pp = self.factor_dot(p, p).to_f64();
                (pp - target).abs() / target.abs().max(1.0)
            }
        }
    }

    pub fn check_point<T: Real>(&self, p: &[T]) -> Result<()> {
        if p.len() != self.factor_dim() {
            return Err(GeomError::Dimension { expected: self.factor_dim(), got: p.len() });
        }
        let defect = self.constraint_defect(p);
        let wrong_sheet = self.kind == ModelKind::Hyperbolic && p[0].to_f64() <= 0.0;
        if defect > MODEL_TOL || wrong_sheet || !defect.is_finite() {
            return Err(GeomError::InvalidBasepoint { defect });
        }
        Ok(())
    }

    /// Orthogonal projection of a packed flat vector onto `T_(p,t)(M x R)`.
    /// The height component passes through unchanged.
    pub fn project_packed<T: Real>(&self, p: &[T], w: &mut [T]) {
        if self.kind == ModelKind::Euclidean {
            return;
        }
        let k = self.factor_dim();
        // <p,p> = 1/c, so the radial component of w is c <p,w> p.
        let coef = T::from_f64(self.c) * self.factor_dot(p, &w[..k]);
        for (wi, pi) in w[..k].iter_mut().zip(p) {
            *wi -= coef * *pi;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint<T> {
    pub p: Vec<T>,
    pub t: T,
}

impl<T: Real> AmbientPoint<T> {
    pub fn new(model: &SpaceFormModel, p: Vec<T>, t: T) -> Result<Self> {
        model.check_point(&p)?;
        Ok(Self { p, t })
    }

    /// Packed flat coordinates `(p | t)`.
    pub fn packed(&self) -> Vec<T> {
        let mut out = self.p.clone();
        out.push(self.t);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientVector<T> {
    pub v: Vec<T>,
    pub s: T,
    pub base: AmbientPoint<T>,
}

impl<T: Real> AmbientVector<T> {
    pub fn new(model: &SpaceFormModel, base: &AmbientPoint<T>, v: Vec<T>, s: T) -> Result<Self> {
        model.check_point(&base.p)?;
        if v.len() != model.factor_dim() {
            return Err(GeomError::Dimension { expected: model.factor_dim(), got: v.len() });
        }
        if model.kind() != ModelKind::Euclidean {
            let scale = 1.0 + euclid_norm(&base.p) * euclid_norm(&v);
            let defect = model.factor_dot(&base.p, &v).to_f64().abs();
            if defect > MODEL_TOL * scale {
                return Err(GeomError::NotTangent { defect });
            }
        }
        Ok(Self { v, s, base: base.clone() })
    }

    /// The unit vertical vector `xi` tangent to the `R` factor.
    pub fn xi(model: &SpaceFormModel, base: &AmbientPoint<T>) -> Result<Self> {
        Self::new(model, base, vec![T::zero(); model.factor_dim()], T::one())
    }

    pub fn packed(&self) -> Vec<T> {
        let mut out = self.v.clone();
        out.push(self.s);
        out
    }

    /// Horizontal (`M`-factor) part.
    pub fn horizontal(&self) -> Self {
        Self { v: self.v.clone(), s: T::zero(), base: self.base.clone() }
    }

    pub fn scaled(&self, k: T) -> Self {
        Self { v: self.v.iter().map(|x| *x * k).collect(), s: self.s * k, base: self.base.clone() }
    }

    fn axpy(&self, k: T, other: &Self) -> Self {
        Self {
            v: self.v.iter().zip(&other.v).map(|(a, b)| *a + k * *b).collect(),
            s: self.s + k * other.s,
            base: self.base.clone(),
        }
    }
}

fn euclid_norm<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64() * x.to_f64()).sum::<f64>().sqrt()
}

fn same_base<T: Real>(a: &AmbientVector<T>, b: &AmbientVector<T>) -> Result<()> {
    if a.base != b.base {
        return Err(GeomError::MismatchedBasepoints);
    }
    Ok(())
}

/// `<X_M, Y_M>_model + X_s Y_s`.
pub fn product_metric<T: Real>(
    model: &SpaceFormModel,
    x: &AmbientVector<T>,
    y: &AmbientVector<T>,
) -> Result<T> {
    same_base(x, y)?;
    model.check_point(&x.base.p)?;
    Ok(model.factor_dot(&x.v, &y.v) + x.s * y.s)
}

/// Projects a flat ambient direction `(w | s)` onto the tangent space at `at`.
pub fn project_tangent<T: Real>(
    model: &SpaceFormModel,
    at: &AmbientPoint<T>,
    w: &[T],
    s: T,
) -> Result<AmbientVector<T>> {
    model.check_point(&at.p)?;
    if w.len() != model.factor_dim() {
        return Err(GeomError::Dimension { expected: model.factor_dim(), got: w.len() });
    }
    let mut packed = w.to_vec();
    packed.push(s);
    model.project_packed(&at.p, &mut packed);
    let s = packed.pop().unwrap_or_else(T::zero);
    Ok(AmbientVector { v: packed, s, base: at.clone() })
}

/// Curvature tensor of the product: `c (<Y_h,Z_h> X_h - <X_h,Z_h> Y_h)`.
pub fn ambient_curvature<T: Real>(
    model: &SpaceFormModel,
    x: &AmbientVector<T>,
    y: &AmbientVector<T>,
    z: &AmbientVector<T>,
) -> Result<AmbientVector<T>> {
    same_base(x, y)?;
    same_base(x, z)?;
    model.check_point(&x.base.p)?;
    let (xh, yh, zh) = (x.horizontal(), y.horizontal(), z.horizontal());
    let c = T::from_f64(model.c());
    let yz = model.factor_dot(&yh.v, &zh.v);
    let xz = model.factor_dot(&xh.v, &zh.v);
    Ok(xh.scaled(c * yz).axpy(-(c * xz), &yh))
}
