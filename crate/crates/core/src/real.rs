//! Scalar abstraction used by every geometric routine.
//!
//! Nested finite differences (a second derivative of a field that is itself
//! built from second derivatives of the chart) lose roughly `eps / h^4` to
//! rounding, which swamps the `h^2` truncation signal in plain `f64` at the
//! step sizes used for convergence sweeps. Everything numeric is therefore
//! generic over [`Real`], with [`Dd`] (double-double, ~106-bit mantissa) as
//! the working precision for sweeps and `f64` available for fast runs.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use twofloat::TwoFloat;

pub trait Real:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + PartialOrd
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// Short identifier used in reports.
    const NAME: &'static str;
    /// Unit roundoff of the representation.
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn pi() -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn powi(self, n: u32) -> Self {
        (0..n).fold(Self::one(), |acc, _| acc * self)
    }

    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";
    const EPSILON: f64 = f64::EPSILON;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
}

/// Double-double scalar.
///
/// Arithmetic is delegated to [`TwoFloat`]; the transcendental functions are
/// evaluated here by argument reduction plus Taylor series carried entirely in
/// double-double, because the upstream implementations stop at ~1e-21.
#[derive(Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct Dd(pub TwoFloat);

impl Dd {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.0.hi(), self.0.lo())
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.hi())
    }
}

macro_rules! dd_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $op:tt) => {
        impl $tr for Dd {
            type Output = Dd;
            #[inline]
            fn $m(self, rhs: Dd) -> Dd {
                Dd(self.0 $op rhs.0)
            }
        }
        impl $atr for Dd {
            #[inline]
            fn $am(&mut self, rhs: Dd) {
                self.0 = self.0 $op rhs.0;
            }
        }
    };
}

dd_binop!(Add, add, AddAssign, add_assign, +);
dd_binop!(Sub, sub, SubAssign, sub_assign, -);
dd_binop!(Mul, mul, MulAssign, mul_assign, *);

/// Long division with three quotient limbs. The upstream `TwoFloat / TwoFloat`
/// forms its residual `1 - b*th` without an FMA and only reaches ~1e-17.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

impl Div for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, rhs: Dd) -> Dd {
        Dd(dd_div(self.0, rhs.0))
    }
}

impl DivAssign for Dd {
    #[inline]
    fn div_assign(&mut self, rhs: Dd) {
        self.0 = dd_div(self.0, rhs.0);
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::zero(), |a, b| a + b)
    }
}

/// Stop a series once the term falls below this fraction of the partial sum.
const SERIES_CUTOFF: f64 = 1e-34;

fn scale_pow2(x: TwoFloat, k: i32) -> TwoFloat {
    let s = 2f64.powi(k);
    // Scaling by a power of two is exact on both limbs.
    TwoFloat::try_from((x.hi() * s, x.lo() * s)).unwrap_or_else(|_| TwoFloat::from(x.hi() * s))
}

/// Returns `(sin r, cos r)` for |r| ≲ π/4 via Taylor series.
fn sin_cos_reduced(r: TwoFloat) -> (TwoFloat, TwoFloat) {
    let r2 = r * r;
    let mut sin = r;
    let mut term = r;
    let mut k = 1.0f64;
    loop {
        term = -term * r2 / ((k + 1.0) * (k + 2.0));
        sin += term;
        k += 2.0;
        if term.abs().hi() <= SERIES_CUTOFF * sin.abs().hi().max(1e-300) {
            break;
        }
    }
    let mut cos = TwoFloat::from(1.0);
    let mut term = TwoFloat::from(1.0);
    let mut k = 0.0f64;
    loop {
        term = -term * r2 / ((k + 1.0) * (k + 2.0));
        cos += term;
        k += 2.0;
        if term.abs().hi() <= SERIES_CUTOFF {
            break;
        }
    }
    (sin, cos)
}

fn dd_sin_cos(x: TwoFloat) -> (TwoFloat, TwoFloat) {
    let half_pi = twofloat::consts::FRAC_PI_2;
    let q = (x.hi() / half_pi.hi()).round();
    let r = x - half_pi * q;
    let (s, c) = sin_cos_reduced(r);
    match (q as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

fn dd_exp(x: TwoFloat) -> TwoFloat {
    if x.hi() == 0.0 {
        return TwoFloat::from(1.0);
    }
    let ln2 = twofloat::consts::LN_2;
    let k = (x.hi() / ln2.hi()).round();
    let r = x - ln2 * k;
    let mut sum = TwoFloat::from(1.0);
    let mut term = TwoFloat::from(1.0);
    let mut n = 1.0f64;
    loop {
        term = term * r / n;
        sum += term;
        n += 1.0;
        if term.abs().hi() <= SERIES_CUTOFF * sum.hi() {
            break;
        }
    }
    scale_pow2(sum, k as i32)
}

impl Real for Dd {
    const NAME: &'static str = "double-double";
    const EPSILON: f64 = 4.93e-32;

    fn from_f64(x: f64) -> Self {
        Dd(TwoFloat::from(x))
    }

    fn to_f64(self) -> f64 {
        self.0.hi() + self.0.lo()
    }

    fn sqrt(self) -> Self {
        if self.0.hi() <= 0.0 {
            return Dd(TwoFloat::from(self.0.hi().max(0.0).sqrt()));
        }
        let y = self.0.sqrt();
        // One Newton step to recover the full double-double mantissa.
        Dd(y + dd_div(self.0 - y * y, y * 2.0))
    }

    fn sin(self) -> Self {
        Dd(dd_sin_cos(self.0).0)
    }

    fn cos(self) -> Self {
        Dd(dd_sin_cos(self.0).1)
    }

    fn exp(self) -> Self {
        Dd(dd_exp(self.0))
    }

    fn sinh(self) -> Self {
        if self.0.abs().hi() < 0.5 {
            let x = self.0;
            let x2 = x * x;
            let mut sum = x;
            let mut term = x;
            let mut k = 1.0f64;
            loop {
                term = term * x2 / ((k + 1.0) * (k + 2.0));
                sum += term;
                k += 2.0;
                if term.abs().hi() <= SERIES_CUTOFF * sum.abs().hi().max(1e-300) {
                    break;
                }
            }
            Dd(sum)
        } else {
            let e = dd_exp(self.0);
            Dd((e - dd_div(TwoFloat::from(1.0), e)) / 2.0)
        }
    }

    fn cosh(self) -> Self {
        let e = dd_exp(self.0);
        Dd((e + dd_div(TwoFloat::from(1.0), e)) / 2.0)
    }

    fn pi() -> Self {
        Dd(twofloat::consts::PI)
    }
}
