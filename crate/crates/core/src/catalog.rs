//! Witness surfaces with closed-form geometry.
//!
//! | name                | ambient              | pmc | flat | S = 0 |
//! |---------------------|----------------------|-----|------|-------|
//! | `slice`             | `M^2(c) x {0}`       | yes (minimal) | iff c = 0 | yes |
//! | `cyl_s2`            | circle x R in S^2 x R | yes | yes | no |
//! | `cyl_h2`            | circle x R in H^2 x R | yes | yes | no |
//! | `sphere_s3`         | geodesic sphere in S^3 x {0} | yes | no | yes |
//! | `clifford_small_s3` | Clifford torus in a small S^3 of S^4 | yes | yes | yes |
//! | `graph_control`     | graph `t = lambda u v` over S^2 | no | no | no |
//!
//! Every chart can be padded into a higher-dimensional `M^n(c)` with the
//! `n` parameter; the extra flat coordinates are identically zero.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{Domain, Jet2, JetMode, VecJet};
use crate::error::{GeomError, Result};
use crate::immersion::{frames, pmc_residual, ChartMap, SurfaceChart, EPS_H};
use crate::invariants::{gauss_curvature_extrinsic, gauss_curvature_gauss_eq, s_operator};
use crate::real::Real;
use crate::spaceform::SpaceFormModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperbolicRadius {
    Rho(f64),
    CothRho(f64),
}

impl HyperbolicRadius {
    fn cosh_sinh<T: Real>(&self) -> (T, T) {
        match *self {
            HyperbolicRadius::Rho(r) => {
                let r = T::from_f64(r);
                (r.cosh(), r.sinh())
            }
            HyperbolicRadius::CothRho(k) => {
                let k = T::from_f64(k);
                let s = T::one() / (k * k - T::one()).sqrt();
                (k * s, s)
            }
        }
    }

    fn coth(&self) -> f64 {
        match *self {
            HyperbolicRadius::Rho(r) => 1.0 / r.tanh(),
            HyperbolicRadius::CothRho(k) => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CatalogSurface {
    Slice { c: f64, n: usize },
    CylS2 { theta0: f64, c: f64, n: usize, stretch: f64 },
    CylH2 { radius: HyperbolicRadius, c: f64, n: usize },
    SphereS3 { theta0: f64, c: f64, n: usize },
    CliffordSmallS3 { theta: f64, c: f64, n: usize },
    GraphControl { lambda: f64, c: f64, n: usize },
}

fn jet_const<T: Real>(a: T) -> Jet2<T> {
    Jet2 { value: a, du: T::zero(), dv: T::zero(), duu: T::zero(), duv: T::zero(), dvv: T::zero(), h: 0.0 }
}

fn jet_scale<T: Real>(j: &Jet2<T>, k: T) -> Jet2<T> {
    Jet2 { value: j.value * k, du: j.du * k, dv: j.dv * k, duu: j.duu * k, duv: j.duv * k, dvv: j.dvv * k, h: 0.0 }
}

/// Quotient rule to second order.
fn jet_quot<T: Real>(n: &Jet2<T>, d: &Jet2<T>) -> Jet2<T> {
    let two = T::from_f64(2.0);
    let q = n.value / d.value;
    let qu = (n.du - q * d.du) / d.value;
    let qv = (n.dv - q * d.dv) / d.value;
    let quu = (n.duu - two * qu * d.du - q * d.duu) / d.value;
    let qvv = (n.dvv - two * qv * d.dv - q * d.dvv) / d.value;
    let quv = (n.duv - qu * d.dv - qv * d.du - q * d.duv) / d.value;
    Jet2 { value: q, du: qu, dv: qv, duu: quu, duv: quv, dvv: qvv, h: 0.0 }
}

/// Jets of `(2u, 2v, 1 - r^2) / (1 + r^2)` (inverse stereographic
/// projection) and of `(1 + r^2, 2u, 2v) / (1 - r^2)` (hyperboloid from the
/// Poincare disk, scaled by 1/2 in the disk radius).
fn stereo_jets<T: Real>(u: T, v: T, hyperbolic: bool) -> [Jet2<T>; 3] {
    let (z, one, two) = (T::zero(), T::one(), T::from_f64(2.0));
    let r2 = u * u + v * v;
    let base = Jet2 { value: r2, du: two * u, dv: two * v, duu: two, duv: z, dvv: two, h: 0.0 };
    let plus = Jet2 { value: one + r2, ..base };
    let minus = Jet2 { value: one - r2, ..jet_scale(&base, -one) };
    let two_u = Jet2 { value: two * u, du: two, dv: z, duu: z, duv: z, dvv: z, h: 0.0 };
    let two_v = Jet2 { value: two * v, du: z, dv: two, duu: z, duv: z, dvv: z, h: 0.0 };
    if hyperbolic {
        [jet_quot(&plus, &minus), jet_quot(&two_u, &minus), jet_quot(&two_v, &minus)]
    } else {
        [jet_quot(&two_u, &plus), jet_quot(&two_v, &plus), jet_quot(&minus, &plus)]
    }
}

/// Assemble packed coordinates from per-coordinate jets, padding the `M`
/// factor with zeros up to `factor_dim`.
fn pack_jets<T: Real>(factor: &[Jet2<T>], height: Jet2<T>, factor_dim: usize) -> VecJet<T> {
    let mut all: Vec<Jet2<T>> = factor.to_vec();
    all.resize(factor_dim, jet_const(T::zero()));
    all.push(height);
    VecJet {
        value: all.iter().map(|j| j.value).collect(),
        du: all.iter().map(|j| j.du).collect(),
        dv: all.iter().map(|j| j.dv).collect(),
        duu: all.iter().map(|j| j.duu).collect(),
        duv: all.iter().map(|j| j.duv).collect(),
        dvv: all.iter().map(|j| j.dvv).collect(),
        h: 0.0,
    }
}

/// Jets of `r (cos(s/r), sin(s/r))` with `s` the `u` (or `v`) coordinate.
fn circle_jets<T: Real>(s: T, r: T, along_u: bool) -> [Jet2<T>; 2] {
    let z = T::zero();
    let phi = s / r;
    let (c, si) = (phi.cos(), phi.sin());
    let mk = |val: T, d1: T, d2: T| {
        if along_u {
            Jet2 { value: val, du: d1, dv: z, duu: d2, duv: z, dvv: z, h: 0.0 }
        } else {
            Jet2 { value: val, du: z, dv: d1, duu: z, duv: z, dvv: d2, h: 0.0 }
        }
    };
    [mk(r * c, -si, -c / r), mk(r * si, c, -si / r)]
}

fn radius<T: Real>(c: f64) -> T {
    T::one() / T::from_f64(c.abs()).sqrt()
}

impl CatalogSurface {
    pub fn name(&self) -> &'static str {
        match self {
            CatalogSurface::Slice { .. } => "slice",
            CatalogSurface::CylS2 { .. } => "cyl_s2",
            CatalogSurface::CylH2 { .. } => "cyl_h2",
            CatalogSurface::SphereS3 { .. } => "sphere_s3",
            CatalogSurface::CliffordSmallS3 { .. } => "clifford_small_s3",
            CatalogSurface::GraphControl { .. } => "graph_control",
        }
    }

    pub fn c(&self) -> f64 {
        match *self {
            CatalogSurface::Slice { c, .. }
            | CatalogSurface::CylS2 { c, .. }
            | CatalogSurface::CylH2 { c, .. }
            | CatalogSurface::SphereS3 { c, .. }
            | CatalogSurface::CliffordSmallS3 { c, .. }
            | CatalogSurface::GraphControl { c, .. } => c,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            CatalogSurface::Slice { n, .. }
            | CatalogSurface::CylS2 { n, .. }
            | CatalogSurface::CylH2 { n, .. }
            | CatalogSurface::SphereS3 { n, .. }
            | CatalogSurface::CliffordSmallS3 { n, .. }
            | CatalogSurface::GraphControl { n, .. } => n,
        }
    }

    /// Exact analytic jets of the packed coordinates.
    pub fn jets<T: Real>(&self, u: T, v: T) -> VecJet<T> {
        let k = self.model().factor_dim();
        let z = T::zero();
        let tf = T::from_f64;
        match *self {
            CatalogSurface::Slice { c, .. } => {
                if c == 0.0 {
                    let ju = Jet2 { value: u, du: T::one(), dv: z, duu: z, duv: z, dvv: z, h: 0.0 };
                    let jv = Jet2 { value: v, du: z, dv: T::one(), duu: z, duv: z, dvv: z, h: 0.0 };
                    pack_jets(&[ju, jv], jet_const(z), k)
                } else {
                    let r = radius::<T>(c);
                    let s = stereo_jets(u, v, c < 0.0);
                    let s: Vec<Jet2<T>> = s.iter().map(|j| jet_scale(j, r)).collect();
                    pack_jets(&s, jet_const(z), k)
                }
            }
            CatalogSurface::CylS2 { theta0, c, stretch, .. } => {
                let big_r = radius::<T>(c);
                let th = tf(theta0);
                let rc = big_r * th.sin();
                let [a, b] = circle_jets(u, rc, true);
                let height = Jet2 { value: tf(stretch) * v, du: z, dv: tf(stretch), duu: z, duv: z, dvv: z, h: 0.0 };
                pack_jets(&[a, b, jet_const(big_r * th.cos())], height, k)
            }
            CatalogSurface::CylH2 { radius: rad, c, .. } => {
                let big_r = radius::<T>(c);
                let (ch, sh) = rad.cosh_sinh::<T>();
                let [a, b] = circle_jets(u, big_r * sh, true);
                let height = Jet2 { value: v, du: z, dv: T::one(), duu: z, duv: z, dvv: z, h: 0.0 };
                pack_jets(&[jet_const(big_r * ch), a, b], height, k)
            }
            CatalogSurface::SphereS3 { theta0, c, .. } => {
                let big_r = radius::<T>(c);
                let th = tf(theta0);
                let w = stereo_jets(u, v, false);
                let s = big_r * th.sin();
                let f: Vec<Jet2<T>> = std::iter::once(jet_const(big_r * th.cos()))
                    .chain(w.iter().map(|j| jet_scale(j, s)))
                    .collect();
                pack_jets(&f, jet_const(z), k)
            }
            CatalogSurface::CliffordSmallS3 { theta, c, .. } => {
                let big_r = radius::<T>(c);
                let th = tf(theta);
                let r = big_r * th.sin() / tf(2.0).sqrt();
                let [a, b] = circle_jets(u, r, true);
                let [d, e] = circle_jets(v, r, false);
                pack_jets(&[jet_const(big_r * th.cos()), a, b, d, e], jet_const(z), k)
            }
            CatalogSurface::GraphControl { lambda, c, .. } => {
                let r = radius::<T>(c);
                let (su, cu, sv, cv) = (u.sin(), u.cos(), v.sin(), v.cos());
                let x0 = Jet2 {
                    value: r * su * cv,
                    du: r * cu * cv,
                    dv: -(r * su * sv),
                    duu: -(r * su * cv),
                    duv: -(r * cu * sv),
                    dvv: -(r * su * cv),
                    h: 0.0,
                };
                let x1 = Jet2 {
                    value: r * su * sv,
                    du: r * cu * sv,
                    dv: r * su * cv,
                    duu: -(r * su * sv),
                    duv: r * cu * cv,
                    dvv: -(r * su * sv),
                    h: 0.0,
                };
                let x2 = Jet2 { value: r * cu, du: -(r * su), dv: z, duu: -(r * cu), duv: z, dvv: z, h: 0.0 };
                let l = tf(lambda);
                let height = Jet2 { value: l * u * v, du: l * v, dv: l * u, duu: z, duv: l, dvv: z, h: 0.0 };
                pack_jets(&[x0, x1, x2], height, k)
            }
        }
    }
}

impl ChartMap for CatalogSurface {
    fn model(&self) -> SpaceFormModel {
        SpaceFormModel::new(self.c(), self.dim()).expect("catalog parameters are validated on construction")
    }

    fn domain(&self) -> Domain {
        match self {
            CatalogSurface::Slice { .. } | CatalogSurface::SphereS3 { .. } => Domain::new(-0.5, 0.5, -0.5, 0.5),
            CatalogSurface::CylS2 { .. } | CatalogSurface::CylH2 { .. } => Domain::new(0.0, 2.0, -1.0, 1.0),
            CatalogSurface::CliffordSmallS3 { .. } => Domain::new(0.0, 2.0, 0.0, 2.0),
            CatalogSurface::GraphControl { .. } => Domain::new(0.5, 1.5, 0.0, 1.0),
        }
    }

    fn point<T: Real>(&self, u: T, v: T) -> Vec<T> {
        self.jets(u, v).value
    }

    fn analytic_jet<T: Real>(&self, u: T, v: T) -> Option<VecJet<T>> {
        Some(self.jets(u, v))
    }

    fn isothermal_claim(&self) -> bool {
        match *self {
            CatalogSurface::CylS2 { stretch, .. } => stretch == 1.0,
            CatalogSurface::GraphControl { .. } => false,
            _ => true,
        }
    }
}

/// Closed-form frame data from which `|S|^2` can be recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormFrame {
    /// `(A_H)_11, (A_H)_12, (A_H)_22`.
    pub a_h: [f64; 3],
    pub t: [f64; 2],
    pub abs_h: f64,
    pub c: f64,
}

impl ClosedFormFrame {
    pub fn s_norm_sq(&self) -> f64 {
        let [a11, a12, a22] = self.a_h;
        let t_sq = self.t[0] * self.t[0] + self.t[1] * self.t[1];
        let shift = self.c * t_sq / 2.0 - 2.0 * self.abs_h * self.abs_h;
        let s11 = 2.0 * a11 - self.c * self.t[0] * self.t[0] + shift;
        let s12 = 2.0 * a12 - self.c * self.t[0] * self.t[1];
        let s22 = 2.0 * a22 - self.c * self.t[1] * self.t[1] + shift;
        s11 * s11 + 2.0 * s12 * s12 + s22 * s22
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub abs_h: Option<f64>,
    pub abs_t: Option<f64>,
    pub s_sq: Option<f64>,
    pub k: Option<f64>,
    pub pmc: bool,
    pub flat: Option<bool>,
    pub s_zero: Option<bool>,
    pub theorem_item: Option<u8>,
    pub notes: String,
    pub closed_form: Option<ClosedFormFrame>,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub surface: CatalogSurface,
    pub chart: SurfaceChart<CatalogSurface>,
    pub ground_truth: GroundTruth,
}

impl CatalogEntry {
    pub fn chart_in(&self, mode: JetMode) -> SurfaceChart<CatalogSurface> {
        self.chart.with_mode(mode)
    }

    /// Point at which the negative control's pmc defect is certified.
    pub fn probe_point(&self) -> (f64, f64) {
        self.chart.domain.center()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: Option<f64>,
    pub range: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

const fn p(name: &'static str, default: Option<f64>, range: &'static str) -> ParamSpec {
    ParamSpec { name, default, range }
}

pub fn list_surfaces() -> Vec<SurfaceInfo> {
    vec![
        SurfaceInfo {
            name: "slice",
            description: "totally geodesic slice M^2(c) x {0}; minimal",
            params: vec![p("c", Some(1.0), "any real"), p("n", Some(2.0), "integer >= 2")],
        },
        SurfaceInfo {
            name: "cyl_s2",
            description: "vertical cylinder over a circle of colatitude theta0 in S^2(c)",
            params: vec![
                p("theta0", Some(std::f64::consts::FRAC_PI_4), "(0, pi/2)"),
                p("c", Some(1.0), "> 0"),
                p("n", Some(2.0), "integer >= 2"),
                p("stretch", Some(1.0), "> 0; != 1 gives a non-isothermal chart"),
            ],
        },
        SurfaceInfo {
            name: "cyl_h2",
            description: "vertical cylinder over a geodesic circle of radius rho in H^2(c)",
            params: vec![
                p("rho", None, "> 0 (alternative to coth_rho)"),
                p("coth_rho", Some(2.0), "> 1"),
                p("c", Some(-1.0), "< 0"),
                p("n", Some(2.0), "integer >= 2"),
            ],
        },
        SurfaceInfo {
            name: "sphere_s3",
            description: "geodesic sphere of radius theta0 in S^3(c) x {0}",
            params: vec![
                p("theta0", Some(std::f64::consts::FRAC_PI_4), "(0, pi/2)"),
                p("c", Some(1.0), "> 0"),
                p("n", Some(3.0), "integer >= 3"),
            ],
        },
        SurfaceInfo {
            name: "clifford_small_s3",
            description: "Clifford torus in the hypersphere of radius theta of S^4(c), height 0",
            params: vec![
                p("theta", Some(std::f64::consts::FRAC_PI_4), "(0, pi/2)"),
                p("c", Some(1.0), "> 0"),
                p("n", Some(4.0), "integer >= 4"),
            ],
        },
        SurfaceInfo {
            name: "graph_control",
            description: "graph t = lambda u v over a polar chart of S^2(c); not pmc",
            params: vec![
                p("lambda", Some(0.1), "!= 0"),
                p("c", Some(1.0), "> 0"),
                p("n", Some(2.0), "integer >= 2"),
            ],
        },
    ]
}

struct Params<'a> {
    surface: &'static str,
    given: &'a BTreeMap<String, f64>,
    used: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn get(&mut self, name: &str, default: f64) -> f64 {
        let v = self.given.get(name).copied().unwrap_or(default);
        self.used.insert(name.to_string(), v);
        v
    }

    fn dim(&mut self, min: usize) -> Result<usize> {
        let n = self.get("n", min as f64);
        if n.fract() != 0.0 || n < min as f64 || n > 64.0 {
            return Err(range_err("n", n, &format!("integer in [{min}, 64]")));
        }
        Ok(n as usize)
    }

    fn finish(self, allowed: &[&str]) -> Result<BTreeMap<String, f64>> {
        for k in self.given.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(GeomError::UnknownParameter { surface: self.surface.to_string(), name: k.clone() });
            }
        }
        Ok(self.used)
    }
}

fn range_err(name: &str, value: f64, range: &str) -> GeomError {
    GeomError::ParameterOutOfRange { name: name.to_string(), value, range: range.to_string() }
}

fn require(ok: bool, name: &str, value: f64, range: &str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(range_err(name, value, range))
    }
}

fn open_quarter_turn(name: &str, x: f64) -> Result<()> {
    require(x > 0.0 && x < FRAC_PI_2, name, x, "(0, pi/2)")
}

/// Builds a catalog entry with its closed-form ground truth.
pub fn make_surface(name: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let known = list_surfaces();
    let info = known.iter().find(|s| s.name == name).ok_or_else(|| GeomError::UnknownSurface(name.to_string()))?;
    let mut ps = Params { surface: info.name, given: params, used: BTreeMap::new() };
    let allowed: Vec<&str> = info.params.iter().map(|p| p.name).collect();

    let (surface, gt) = match name {
        "slice" => {
            let c = ps.get("c", 1.0);
            require(c.is_finite(), "c", c, "finite")?;
            let n = ps.dim(2)?;
            let gt = GroundTruth {
                abs_h: Some(0.0),
                abs_t: Some(0.0),
                s_sq: Some(0.0),
                k: Some(c),
                pmc: true,
                flat: Some(c == 0.0),
                s_zero: Some(true),
                theorem_item: None,
                notes: "totally geodesic; minimal, outside the theorem's hypotheses".into(),
                closed_form: Some(ClosedFormFrame { a_h: [0.0; 3], t: [0.0; 2], abs_h: 0.0, c }),
            };
            (CatalogSurface::Slice { c, n }, gt)
        }
        "cyl_s2" => {
            let theta0 = ps.get("theta0", std::f64::consts::FRAC_PI_4);
            open_quarter_turn("theta0", theta0)?;
            let c = ps.get("c", 1.0);
            require(c > 0.0, "c", c, "> 0")?;
            let stretch = ps.get("stretch", 1.0);
            require(stretch > 0.0, "stretch", stretch, "> 0")?;
            let n = ps.dim(2)?;
            let abs_h = 0.5 * c.sqrt() / theta0.tan();
            (CatalogSurface::CylS2 { theta0, c, n, stretch }, cylinder_truth(abs_h, c))
        }
        "cyl_h2" => {
            let c = ps.get("c", -1.0);
            require(c < 0.0, "c", c, "< 0")?;
            let radius = match (params.get("rho"), params.get("coth_rho")) {
                (Some(_), Some(_)) => {
                    return Err(range_err("rho", params["rho"], "give either rho or coth_rho, not both"))
                }
                (Some(_), None) => {
                    let r = ps.get("rho", 1.0);
                    require(r > 0.0, "rho", r, "> 0")?;
                    HyperbolicRadius::Rho(r)
                }
                _ => {
                    let k = ps.get("coth_rho", 2.0);
                    require(k > 1.0, "coth_rho", k, "> 1")?;
                    HyperbolicRadius::CothRho(k)
                }
            };
            let n = ps.dim(2)?;
            let abs_h = 0.5 * (-c).sqrt() * radius.coth();
            (CatalogSurface::CylH2 { radius, c, n }, cylinder_truth(abs_h, c))
        }
        "sphere_s3" => {
            let theta0 = ps.get("theta0", std::f64::consts::FRAC_PI_4);
            open_quarter_turn("theta0", theta0)?;
            let c = ps.get("c", 1.0);
            require(c > 0.0, "c", c, "> 0")?;
            let n = ps.dim(3)?;
            let abs_h = c.sqrt() / theta0.tan();
            let gt = GroundTruth {
                abs_h: Some(abs_h),
                abs_t: Some(0.0),
                s_sq: Some(0.0),
                k: Some(c / theta0.sin().powi(2)),
                pmc: true,
                flat: Some(false),
                s_zero: Some(true),
                theorem_item: Some(3),
                notes: "umbilical; cmc in the totally geodesic S^3 x {0}".into(),
                closed_form: Some(ClosedFormFrame { a_h: [abs_h * abs_h, 0.0, abs_h * abs_h], t: [0.0; 2], abs_h, c }),
            };
            (CatalogSurface::SphereS3 { theta0, c, n }, gt)
        }
        "clifford_small_s3" => {
            let theta = ps.get("theta", std::f64::consts::FRAC_PI_4);
            open_quarter_turn("theta", theta)?;
            let c = ps.get("c", 1.0);
            require(c > 0.0, "c", c, "> 0")?;
            let n = ps.dim(4)?;
            let abs_h = c.sqrt() / theta.tan();
            let gt = GroundTruth {
                abs_h: Some(abs_h),
                abs_t: Some(0.0),
                s_sq: Some(0.0),
                k: Some(0.0),
                pmc: true,
                flat: Some(true),
                s_zero: Some(true),
                theorem_item: Some(2),
                notes: "minimal in the totally umbilical small S^3; A_H = |H|^2 id so S = 0".into(),
                closed_form: Some(ClosedFormFrame { a_h: [abs_h * abs_h, 0.0, abs_h * abs_h], t: [0.0; 2], abs_h, c }),
            };
            (CatalogSurface::CliffordSmallS3 { theta, c, n }, gt)
        }
        "graph_control" => {
            let lambda = ps.get("lambda", 0.1);
            require(lambda != 0.0, "lambda", lambda, "!= 0")?;
            let c = ps.get("c", 1.0);
            require(c > 0.0, "c", c, "> 0")?;
            let n = ps.dim(2)?;
            let gt = GroundTruth {
                abs_h: None,
                abs_t: None,
                s_sq: None,
                k: None,
                pmc: false,
                flat: None,
                s_zero: None,
                theorem_item: None,
                notes: "negative control: |H| varies over the chart".into(),
                closed_form: None,
            };
            (CatalogSurface::GraphControl { lambda, c, n }, gt)
        }
        _ => return Err(GeomError::UnknownSurface(name.to_string())),
    };
    let used = ps.finish(&allowed)?;
    let chart = SurfaceChart::new(surface, JetMode::Analytic);
    Ok(CatalogEntry { name: name.to_string(), params: used, surface, chart, ground_truth: gt })
}

/// Vertical cylinder over a circle of geodesic curvature `2|H|`.
fn cylinder_truth(abs_h: f64, c: f64) -> GroundTruth {
    let s11 = 2.0 * abs_h * abs_h + c / 2.0;
    GroundTruth {
        abs_h: Some(abs_h),
        abs_t: Some(1.0),
        s_sq: Some(2.0 * s11 * s11),
        k: Some(0.0),
        pmc: true,
        flat: Some(true),
        s_zero: Some(s11 == 0.0),
        theorem_item: Some(1),
        notes: "cmc curve times R; vertical rulings are geodesics".into(),
        closed_form: Some(ClosedFormFrame { a_h: [2.0 * abs_h * abs_h, 0.0, 0.0], t: [0.0, 1.0], abs_h, c }),
    }
}

/// `nu x nv` grid, row-major in `u` then `v`, over the domain shrunk by
/// `margin` on every side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub nu: usize,
    pub nv: usize,
}

pub fn grid_points(domain: &Domain, grid: GridSpec, margin: f64) -> Option<Vec<(f64, f64)>> {
    let d = domain.shrink(margin)?;
    let lin = |a: f64, b: f64, n: usize, i: usize| if n == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(grid.nu * grid.nv);
    for i in 0..grid.nu {
        for j in 0..grid.nv {
            out.push((lin(d.u0, d.u1, grid.nu, i), lin(d.v0, d.v1, grid.nv, j)));
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeviationTable {
    pub abs_h: Option<f64>,
    pub abs_t: Option<f64>,
    pub s_sq: Option<f64>,
    pub k: Option<f64>,
    /// Largest pmc residual on the grid (deviation from the pmc value 0).
    pub pmc: f64,
    /// pmc residual at [`CatalogEntry::probe_point`].
    pub probe_pmc: f64,
    pub points: usize,
}

/// Worst-case deviation of computed invariants from the stored ground truth.
pub fn ground_truth_check<T: Real>(entry: &CatalogEntry, grid: GridSpec, h: f64) -> Result<DeviationTable> {
    ground_truth_check_in::<T>(entry, JetMode::Analytic, grid, h)
}

pub fn ground_truth_check_in<T: Real>(
    entry: &CatalogEntry,
    mode: JetMode,
    grid: GridSpec,
    h: f64,
) -> Result<DeviationTable> {
    let chart = entry.chart_in(mode);
    let margin = 2.0 * h;
    let pts = grid_points(&chart.domain, grid, margin)
        .ok_or(GeomError::StencilOutOfDomain { u: f64::NAN, v: f64::NAN, reach: margin })?;
    let gt = &entry.ground_truth;
    let c = entry.surface.c();
    let per_point = pts
        .par_iter()
        .map(|&(u, v)| -> Result<[f64; 5]> {
            let (ut, vt) = (T::from_f64(u), T::from_f64(v));
            let fd = frames(&chart, ut, vt, h)?;
            let s = s_operator(&fd, c);
            let k = if fd.abs_h.to_f64() > EPS_H {
                gauss_curvature_extrinsic(&fd, &s, c)?.k
            } else {
                gauss_curvature_gauss_eq(&fd)?
            };
            let pmc = pmc_residual(&chart, ut, vt, h)?.residual.to_f64();
            let dev = |truth: Option<f64>, got: f64| truth.map_or(0.0, |t| (t - got).abs());
            Ok([
                dev(gt.abs_h, fd.abs_h.to_f64()),
                dev(gt.abs_t, fd.t_sq().sqrt().to_f64()),
                dev(gt.s_sq, s.norm_sq().to_f64()),
                dev(gt.k, k.to_f64()),
                pmc,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = |i: usize| per_point.iter().map(|r| r[i]).fold(0.0, f64::max);
    let (pu, pv) = entry.probe_point();
    let probe_pmc = pmc_residual(&chart, T::from_f64(pu), T::from_f64(pv), h)?.residual.to_f64();
    Ok(DeviationTable {
        abs_h: gt.abs_h.map(|_| worst(0)),
        abs_t: gt.abs_t.map(|_| worst(1)),
        s_sq: gt.s_sq.map(|_| worst(2)),
        k: gt.k.map(|_| worst(3)),
        pmc: worst(4),
        probe_pmc,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{convergence_order, ORDER_THRESHOLD};
    use crate::real::Dd;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};

    fn params(ps: &[(&str, f64)]) -> BTreeMap<String, f64> {
        ps.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn every_entry() -> Vec<CatalogEntry> {
        let mut out: Vec<CatalogEntry> =
            list_surfaces().iter().map(|s| make_surface(s.name, &BTreeMap::new()).unwrap()).collect();
        for ps in [
            vec![("c", -2.0), ("n", 3.0)],
            vec![("c", 0.0)],
        ] {
            out.push(make_surface("slice", &params(&ps)).unwrap());
        }
        out.push(make_surface("cyl_s2", &params(&[("theta0", 0.4), ("c", 2.0), ("n", 4.0), ("stretch", 1.5)])).unwrap());
        out.push(make_surface("cyl_h2", &params(&[("rho", 0.7), ("c", -0.5)])).unwrap());
        out.push(make_surface("sphere_s3", &params(&[("theta0", FRAC_PI_3), ("n", 5.0)])).unwrap());
        out.push(make_surface("clifford_small_s3", &params(&[("theta", 1.1), ("c", 3.0), ("n", 6.0)])).unwrap());
        out
    }

    #[test]
    fn stored_s_norm_matches_closed_form() {
        for e in every_entry() {
            if let (Some(cf), Some(s_sq)) = (e.ground_truth.closed_form, e.ground_truth.s_sq) {
                assert!((cf.s_norm_sq() - s_sq).abs() < 1e-12, "{}", e.name);
            }
        }
    }

    #[test]
    fn points_lie_on_the_model() {
        for e in every_entry() {
            let m = e.surface.model();
            let pts = grid_points(&e.chart.domain, GridSpec { nu: 5, nv: 5 }, 0.0).unwrap();
            for (u, v) in pts {
                let x = e.surface.point::<Dd>(Dd::from_f64(u), Dd::from_f64(v));
                assert_eq!(x.len(), m.ambient_dim());
                assert!(m.constraint_defect(&x[..m.factor_dim()]) < 1e-28, "{}", e.name);
            }
        }
    }

    #[test]
    fn finite_difference_jets_converge_to_closed_forms() {
        for e in every_entry() {
            let fdc = e.chart_in(JetMode::FiniteDifference);
            let (u, v) = e.chart.domain.center();
            let (ut, vt) = (Dd::from_f64(u + 0.03), Dd::from_f64(v - 0.02));
            let exact = e.surface.jets(ut, vt);
            let err = |h: f64| {
                let j = fdc.map_jet(ut, vt, h).unwrap();
                let pairs = [(&j.du, &exact.du), (&j.dv, &exact.dv), (&j.duu, &exact.duu), (&j.duv, &exact.duv), (&j.dvv, &exact.dvv)];
                let e = pairs
                    .iter()
                    .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).abs().to_f64()))
                    .fold(0.0, f64::max);
                Ok(e)
            };
            let table = convergence_order(err, &[4e-3, 2e-3, 1e-3], 1e-20).unwrap();
            assert!(table.passes(ORDER_THRESHOLD), "{} {:?}", e.name, table);
        }
    }

    #[test]
    fn cylinder_ground_truth() {
        let e = make_surface("cyl_s2", &params(&[("theta0", FRAC_PI_4)])).unwrap();
        let gt = &e.ground_truth;
        assert!((gt.abs_h.unwrap() - 0.5).abs() < 1e-15);
        assert!((gt.s_sq.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(gt.k, Some(0.0));
        assert_eq!(gt.theorem_item, Some(1));
        let d = ground_truth_check::<Dd>(&e, GridSpec { nu: 16, nv: 16 }, 1e-5).unwrap();
        assert_eq!(d.points, 256);
        for x in [d.abs_h, d.abs_t, d.s_sq, d.k] {
            assert!(x.unwrap() < 1e-9);
        }
        assert!(d.pmc < 1e-9);
    }

    #[test]
    fn hyperbolic_cylinder_ground_truth() {
        let e = make_surface("cyl_h2", &params(&[("coth_rho", 2.0)])).unwrap();
        let gt = &e.ground_truth;
        assert!((gt.abs_h.unwrap() - 1.0).abs() < 1e-15);
        assert!((gt.s_sq.unwrap() - 4.5).abs() < 1e-14);
        let d = ground_truth_check::<Dd>(&e, GridSpec { nu: 8, nv: 8 }, 1e-5).unwrap();
        assert!(d.k.unwrap() < 1e-9 && d.s_sq.unwrap() < 1e-9);
    }

    #[test]
    fn geodesic_sphere_ground_truth() {
        let e = make_surface("sphere_s3", &params(&[("theta0", FRAC_PI_4)])).unwrap();
        assert!((e.ground_truth.abs_h.unwrap() - 1.0).abs() < 1e-15);
        assert!((e.ground_truth.k.unwrap() - 2.0).abs() < 1e-15);
        let e = make_surface("sphere_s3", &params(&[("theta0", FRAC_PI_3)])).unwrap();
        assert!((e.ground_truth.abs_h.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let d = ground_truth_check::<Dd>(&e, GridSpec { nu: 16, nv: 16 }, 1e-5).unwrap();
        for x in [d.abs_h, d.abs_t, d.s_sq, d.k] {
            assert!(x.unwrap() < 1e-9);
        }
        assert!(d.pmc < 1e-8);
    }

    #[test]
    fn slice_ground_truth() {
        for c in [1.0, -1.0, 0.0] {
            let e = make_surface("slice", &params(&[("c", c)])).unwrap();
            assert_eq!(e.ground_truth.k, Some(c));
            let d = ground_truth_check::<Dd>(&e, GridSpec { nu: 6, nv: 6 }, 1e-5).unwrap();
            for x in [d.abs_h, d.abs_t, d.s_sq, d.k] {
                assert!(x.unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn clifford_ground_truth() {
        let e = make_surface("clifford_small_s3", &params(&[("theta", 0.9), ("n", 5.0)])).unwrap();
        assert!((e.ground_truth.abs_h.unwrap() - 1.0 / 0.9f64.tan()).abs() < 1e-15);
        let d = ground_truth_check::<Dd>(&e, GridSpec { nu: 8, nv: 8 }, 1e-5).unwrap();
        for x in [d.abs_h, d.abs_t, d.s_sq, d.k] {
            assert!(x.unwrap() < 1e-9);
        }
    }

    #[test]
    fn control_is_not_pmc_anywhere_on_a_dense_scan() {
        let e = make_surface("graph_control", &params(&[("lambda", 0.1)])).unwrap();
        let pts = grid_points(&e.chart.domain, GridSpec { nu: 41, nv: 41 }, 1e-3).unwrap();
        let res: Vec<f64> = pts
            .par_iter()
            .map(|&(u, v)| pmc_residual(&e.chart, Dd::from_f64(u), Dd::from_f64(v), 1e-4).unwrap().residual.to_f64())
            .collect();
        assert!(res.iter().all(|r| *r > 1e-3));
        let (pu, pv) = e.probe_point();
        for du in [-0.05, 0.0, 0.05] {
            for dv in [-0.05, 0.0, 0.05] {
                let r = pmc_residual(&e.chart, Dd::from_f64(pu + du), Dd::from_f64(pv + dv), 1e-4).unwrap();
                assert!(r.residual.to_f64() >= 0.01);
            }
        }
        let d = ground_truth_check::<Dd>(&e, GridSpec { nu: 4, nv: 4 }, 1e-4).unwrap();
        assert!(d.probe_pmc >= 0.01);
        assert!(!e.ground_truth.pmc && e.ground_truth.theorem_item.is_none());
    }

    #[test]
    fn parameter_validation() {
        let bad = |name: &str, ps: &[(&str, f64)]| make_surface(name, &params(ps)).unwrap_err();
        assert!(matches!(bad("torus", &[]), GeomError::UnknownSurface(_)));
        assert!(matches!(bad("cyl_s2", &[("rho", 1.0)]), GeomError::UnknownParameter { .. }));
        assert!(matches!(bad("cyl_s2", &[("theta0", 0.0)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("cyl_s2", &[("theta0", FRAC_PI_2)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("cyl_s2", &[("c", -1.0)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("cyl_h2", &[("rho", -1.0)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("cyl_h2", &[("coth_rho", 0.5)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("cyl_h2", &[("rho", 1.0), ("coth_rho", 2.0)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("sphere_s3", &[("n", 2.0)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("clifford_small_s3", &[("n", 3.0)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("slice", &[("n", 2.5)]), GeomError::ParameterOutOfRange { .. }));
        assert!(matches!(bad("graph_control", &[("lambda", 0.0)]), GeomError::ParameterOutOfRange { .. }));
    }

    #[test]
    fn defaults_are_recorded() {
        let e = make_surface("cyl_h2", &BTreeMap::new()).unwrap();
        assert_eq!(e.params.get("coth_rho"), Some(&2.0));
        assert_eq!(e.params.get("c"), Some(&-1.0));
        let e = make_surface("cyl_h2", &params(&[("rho", 1.0)])).unwrap();
        assert!(e.params.contains_key("rho") && !e.params.contains_key("coth_rho"));
        assert_eq!(list_surfaces().len(), 6);
    }

    #[test]
    fn isothermal_claims() {
        let claim = |name: &str, ps: &[(&str, f64)]| make_surface(name, &params(ps)).unwrap().chart.isothermal_claim;
        assert!(claim("cyl_s2", &[]) && !claim("cyl_s2", &[("stretch", 2.0)]));
        assert!(claim("sphere_s3", &[]) && claim("clifford_small_s3", &[]) && !claim("graph_control", &[]));
        for e in every_entry() {
            if !e.chart.isothermal_claim {
                continue;
            }
            let (u, v) = e.chart.domain.center();
            let g = e.chart.metric::<Dd>(Dd::from_f64(u), Dd::from_f64(v), 1e-4).unwrap();
            assert!(((g.e - g.g).abs().max(g.f.abs()) / g.e).to_f64() < 1e-25, "{}", e.name);
        }
    }

    #[test]
    fn grid_is_row_major_in_u() {
        let d = Domain::new(0.0, 1.0, 0.0, 2.0);
        let pts = grid_points(&d, GridSpec { nu: 3, nv: 2 }, 0.0).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 2.0), (0.5, 0.0), (0.5, 2.0), (1.0, 0.0), (1.0, 2.0)]);
        assert!(grid_points(&d, GridSpec { nu: 3, nv: 3 }, 0.6).is_none());
    }
}
