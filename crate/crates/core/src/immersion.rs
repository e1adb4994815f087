//! Frames, second fundamental form and mean curvature of a chart into
//! `M^n(c) x R`.
//!
//! All ambient vectors are packed flat coordinates `(v_M | s)` of length
//! `model.ambient_dim()`; the ambient connection is the flat derivative
//! followed by projection onto the model's tangent space.

use crate::calculus::{Domain, JetMode, MetricCoeffs, Sym2, VecJet};
use crate::error::{GeomError, Result};
use crate::real::Real;
use crate::spaceform::{AmbientPoint, AmbientVector, SpaceFormModel};

/// Threshold on `|H|` below which a point is treated as minimal.
pub const EPS_H: f64 = 1e-8;
/// Candidates for the normal completion shorter than this are skipped.
pub const COMPLETION_SKIP: f64 = 1e-6;
/// Smallest admissible Gram determinant of `(x_u, x_v)`.
pub const MIN_GRAM: f64 = 1e-10;

/// A parametrized map from a rectangle into `M^n(c) x R`.
pub trait ChartMap: Send + Sync {
    fn model(&self) -> SpaceFormModel;
    fn domain(&self) -> Domain;
    /// Packed flat coordinates of the image point.
    fn point<T: Real>(&self, u: T, v: T) -> Vec<T>;
    /// Exact jets of the packed coordinates, when closed forms exist.
    fn analytic_jet<T: Real>(&self, _u: T, _v: T) -> Option<VecJet<T>> {
        None
    }
    fn isothermal_claim(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceChart<M> {
    pub map: M,
    pub domain: Domain,
    pub mode: JetMode,
    pub isothermal_claim: bool,
    model: SpaceFormModel,
}

impl<M: ChartMap> SurfaceChart<M> {
    pub fn new(map: M, mode: JetMode) -> Self {
        let domain = map.domain();
        let isothermal_claim = map.isothermal_claim();
        let model = map.model();
        Self { map, domain, mode, isothermal_claim, model }
    }

    pub fn with_mode(&self, mode: JetMode) -> Self
    where
        M: Clone,
    {
        Self { mode, ..self.clone() }
    }

    pub fn model(&self) -> &SpaceFormModel {
        &self.model
    }

    /// Stencil reach of a single map jet in the current mode.
    pub fn jet_reach(&self, h: f64) -> f64 {
        match self.mode {
            JetMode::Analytic => 0.0,
            JetMode::FiniteDifference => h,
        }
    }

    pub fn point<T: Real>(&self, u: T, v: T) -> Result<Vec<T>> {
        self.domain.check(u.to_f64(), v.to_f64(), 0.0)?;
        Ok(self.map.point(u, v))
    }

    pub fn map_jet<T: Real>(&self, u: T, v: T, h: f64) -> Result<VecJet<T>> {
        if self.mode == JetMode::Analytic {
            self.domain.check(u.to_f64(), v.to_f64(), 0.0)?;
            if let Some(j) = self.map.analytic_jet(u, v) {
                return Ok(j);
            }
        }
        self.domain.check(u.to_f64(), v.to_f64(), h)?;
        let ht = T::from_f64(h);
        let s = crate::calculus::sample9(|a, b| Ok(self.map.point(a, b)), u, v, ht)?;
        Ok(VecJet::from_samples(&s, ht))
    }

    /// Induced metric, from first derivatives only.
    pub fn metric<T: Real>(&self, u: T, v: T, h: f64) -> Result<MetricCoeffs<T>> {
        let (x, xu, xv) = if self.mode == JetMode::Analytic && self.map.analytic_jet::<T>(u, v).is_some() {
            let j = self.map_jet(u, v, h)?;
            (j.value, j.du, j.dv)
        } else {
            self.domain.check(u.to_f64(), v.to_f64(), h)?;
            let ht = T::from_f64(h);
            let two = T::from_f64(2.0);
            let x = self.map.point(u, v);
            let d = |a: Vec<T>, b: Vec<T>| a.iter().zip(&b).map(|(p, q)| (*p - *q) / (two * ht)).collect::<Vec<T>>();
            let xu = d(self.map.point(u + ht, v), self.map.point(u - ht, v));
            let xv = d(self.map.point(u, v + ht), self.map.point(u, v - ht));
            (x, xu, xv)
        };
        let k = self.model.factor_dim();
        let (mut xu, mut xv) = (xu, xv);
        self.model.project_packed(&x[..k], &mut xu);
        self.model.project_packed(&x[..k], &mut xv);
        let m = &self.model;
        MetricCoeffs::new(m.dot(&xu, &xu), m.dot(&xu, &xv), m.dot(&xv, &xv)).checked(u.to_f64(), v.to_f64())
    }
}

/// Order in which flat coordinate directions are tried when completing the
/// normal frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalCompletion {
    #[default]
    Forward,
    Reverse,
}

#[derive(Debug, Clone)]
pub struct FrameData<T> {
    pub u: f64,
    pub v: f64,
    pub model: SpaceFormModel,
    /// Packed image point.
    pub x: Vec<T>,
    /// `e1, e2`, packed.
    pub tangent: [Vec<T>; 2],
    /// `E_3, ..., E_{n+1}`, packed; `normals[0]` is `E_3`.
    pub normals: Vec<Vec<T>>,
    /// `h[a] = (h^{a+3}_ij)`.
    pub sff: Vec<Sym2<T>>,
    /// Mean curvature vector, packed.
    pub mean_curvature: Vec<T>,
    pub abs_h: T,
    /// `t_i = <xi, e_i>`.
    pub t: [T; 2],
    /// `<xi, E_alpha>`.
    pub n: Vec<T>,
    pub metric: MetricCoeffs<T>,
    /// Coordinate components of `e1`, `e2`.
    pub frame_coords: [[T; 2]; 2],
    pub minimal: bool,
}

impl<T: Real> FrameData<T> {
    pub fn normal_count(&self) -> usize {
        self.normals.len()
    }

    /// Highest normal index `n + 1`.
    pub fn max_alpha(&self) -> usize {
        self.normals.len() + 2
    }

    /// `A_alpha` for `alpha` in `3..=n+1`.
    pub fn shape_operator(&self, alpha: usize) -> Result<Sym2<T>> {
        if alpha < 3 || alpha > self.max_alpha() {
            return Err(GeomError::NormalIndex { alpha, max: self.max_alpha() });
        }
        Ok(self.sff[alpha - 3])
    }

    /// `A_H = sum_alpha <H, E_alpha> A_alpha`.
    pub fn a_h(&self) -> Sym2<T> {
        let m = &self.model;
        self.normals
            .iter()
            .zip(&self.sff)
            .fold(Sym2::zero(), |acc, (e, a)| acc.add(&a.scale(m.dot(&self.mean_curvature, e))))
    }

    pub fn t_sq(&self) -> T {
        self.t[0] * self.t[0] + self.t[1] * self.t[1]
    }

    pub fn ambient_point(&self) -> AmbientPoint<T> {
        let k = self.model.factor_dim();
        AmbientPoint { p: self.x[..k].to_vec(), t: self.x[k] }
    }

    /// A packed tangent vector of `M x R` as a typed ambient vector.
    pub fn ambient_vector(&self, packed: &[T]) -> Result<AmbientVector<T>> {
        let k = self.model.factor_dim();
        AmbientVector::new(&self.model, &self.ambient_point(), packed[..k].to_vec(), packed[k])
    }

    /// Normal projection (onto the normal space of the surface inside
    /// `T(M x R)`) of a packed flat vector.
    pub fn normal_part(&self, w: &[T]) -> Vec<T> {
        normal_part(&self.model, &self.x, &self.tangent, w)
    }

    /// Flips normals `E_4, ...` (and `E_3` at minimal points) to agree in
    /// sign with `reference`.
    pub fn align_to(&mut self, reference: &FrameData<T>) {
        let first = if self.minimal { 0 } else { 1 };
        for a in first..self.normals.len().min(reference.normals.len()) {
            if self.model.dot(&self.normals[a], &reference.normals[a]) < T::zero() {
                self.normals[a].iter_mut().for_each(|x| *x = -*x);
                self.sff[a] = self.sff[a].scale(-T::one());
                self.n[a] = -self.n[a];
            }
        }
    }

    /// Worst deviations from the frame invariants.
    pub fn defects(&self) -> FrameDefects {
        let m = &self.model;
        let all: Vec<&Vec<T>> = self.tangent.iter().chain(self.normals.iter()).collect();
        let mut gram = 0.0f64;
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                gram = gram.max((m.dot(a, b).to_f64() - target).abs());
            }
        }
        let n_sq: T = self.n.iter().map(|x| *x * *x).sum();
        let xi_unit = (self.t_sq() + n_sq - T::one()).abs().to_f64();
        let (e3_alignment, trace_a3) = if self.minimal {
            (0.0, 0.0)
        } else {
            let hn: Vec<T> = self.mean_curvature.iter().map(|x| *x / self.abs_h).collect();
            let d = hn.iter().zip(&self.normals[0]).map(|(a, b)| (*a - *b).abs().to_f64()).fold(0.0, f64::max);
            (d, (self.sff[0].trace() - T::from_f64(2.0) * self.abs_h).abs().to_f64())
        };
        let trace_rest = self.sff.iter().skip(1).map(|a| a.trace().abs().to_f64()).fold(0.0, f64::max);
        FrameDefects { gram, xi_unit, e3_alignment, trace_a3, trace_rest }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDefects {
    pub gram: f64,
    pub xi_unit: f64,
    pub e3_alignment: f64,
    /// `|trace A_3 - 2|H||`.
    pub trace_a3: f64,
    /// `max_{alpha > 3} |trace A_alpha|`.
    pub trace_rest: f64,
}

fn normal_part<T: Real>(model: &SpaceFormModel, x: &[T], tangent: &[Vec<T>; 2], w: &[T]) -> Vec<T> {
    let k = model.factor_dim();
    let mut out = w.to_vec();
    model.project_packed(&x[..k], &mut out);
    for e in tangent {
        let c = model.dot(&out, e);
        out.iter_mut().zip(e).for_each(|(o, ei)| *o -= c * *ei);
    }
    out
}

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * *xi);
}

pub fn frames<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<FrameData<T>> {
    frames_with(chart, u, v, h, NormalCompletion::Forward)
}

pub fn frames_with<M: ChartMap, T: Real>(
    chart: &SurfaceChart<M>,
    u: T,
    v: T,
    h: f64,
    order: NormalCompletion,
) -> Result<FrameData<T>> {
    let model = *chart.model();
    let (uf, vf) = (u.to_f64(), v.to_f64());
    let jet = chart.map_jet(u, v, h)?;
    let k = model.factor_dim();
    let x = jet.value.clone();
    model.check_point(&x[..k])?;

    let mut xu = jet.du.clone();
    let mut xv = jet.dv.clone();
    model.project_packed(&x[..k], &mut xu);
    model.project_packed(&x[..k], &mut xv);
    let metric = MetricCoeffs::new(model.dot(&xu, &xu), model.dot(&xu, &xv), model.dot(&xv, &xv));
    let gram = metric.det().to_f64();
    if !(gram > MIN_GRAM) || !(metric.e.to_f64() > 0.0) {
        return Err(GeomError::DegenerateChart { u: uf, v: vf, gram });
    }
    let b = metric.frame();
    let e1: Vec<T> = xu.iter().map(|a| *a * b[0][0]).collect();
    let e2: Vec<T> = xu.iter().zip(&xv).map(|(a, c)| *a * b[1][0] + *c * b[1][1]).collect();
    let tangent = [e1, e2];

    let (inv_uu, inv_uv, inv_vv) = metric.inverse();
    let two = T::from_f64(2.0);
    let mut trace_sigma: Vec<T> = vec![T::zero(); x.len()];
    axpy(&mut trace_sigma, inv_uu, &jet.duu);
    axpy(&mut trace_sigma, two * inv_uv, &jet.duv);
    axpy(&mut trace_sigma, inv_vv, &jet.dvv);
    let mean_curvature: Vec<T> =
        normal_part(&model, &x, &tangent, &trace_sigma).into_iter().map(|c| c / two).collect();
    let abs_h = model.norm(&mean_curvature);
    let minimal = abs_h.to_f64() <= EPS_H;

    let want = model.n() - 1;
    let mut normals: Vec<Vec<T>> = Vec::with_capacity(want);
    if !minimal {
        normals.push(mean_curvature.iter().map(|c| *c / abs_h).collect());
    }
    let dim = x.len();
    let candidates: Vec<usize> = match order {
        NormalCompletion::Forward => (0..dim).collect(),
        NormalCompletion::Reverse => (0..dim).rev().collect(),
    };
    for idx in candidates {
        if normals.len() == want {
            break;
        }
        let mut w = vec![T::zero(); dim];
        w[idx] = T::one();
        let mut w = normal_part(&model, &x, &tangent, &w);
        for _ in 0..2 {
            for e in &normals {
                let c = model.dot(&w, e);
                axpy(&mut w, -c, e);
            }
        }
        let len = model.norm(&w);
        if len.to_f64() > COMPLETION_SKIP {
            normals.push(w.into_iter().map(|c| c / len).collect());
        }
    }
    if normals.len() != want {
        return Err(GeomError::DegenerateChart { u: uf, v: vf, gram });
    }

    let sff: Vec<Sym2<T>> = normals
        .iter()
        .map(|e| {
            let c = [
                [model.dot(&jet.duu, e), model.dot(&jet.duv, e)],
                [model.dot(&jet.duv, e), model.dot(&jet.dvv, e)],
            ];
            let comp = |i: usize, j: usize| {
                let mut acc = T::zero();
                for p in 0..2 {
                    for q in 0..2 {
                        acc += b[i][p] * b[j][q] * c[p][q];
                    }
                }
                acc
            };
            Sym2::new(comp(0, 0), comp(0, 1), comp(1, 1))
        })
        .collect();

    let last = dim - 1;
    let t = [tangent[0][last], tangent[1][last]];
    let n = normals.iter().map(|e| e[last]).collect();

    Ok(FrameData {
        u: uf,
        v: vf,
        model,
        x,
        tangent,
        normals,
        sff,
        mean_curvature,
        abs_h,
        t,
        n,
        metric,
        frame_coords: b,
        minimal,
    })
}

/// `(A_alpha)_ij = h^alpha_ij`.
pub fn shape_operator<T: Real>(fd: &FrameData<T>, alpha: usize) -> Result<Sym2<T>> {
    fd.shape_operator(alpha)
}

/// Frames at the four axis neighbours `(u +- h, v)`, `(u, v +- h)`, sign
/// aligned with `center`. Order: `[u+, u-, v+, v-]`.
fn neighbour_frames<M: ChartMap, T: Real>(
    chart: &SurfaceChart<M>,
    center: &FrameData<T>,
    u: T,
    v: T,
    h: f64,
) -> Result<[FrameData<T>; 4]> {
    chart.domain.check(u.to_f64(), v.to_f64(), h + chart.jet_reach(h))?;
    let ht = T::from_f64(h);
    let at = |a: T, b: T| -> Result<FrameData<T>> {
        let mut f = frames(chart, a, b, h)?;
        f.align_to(center);
        Ok(f)
    };
    Ok([at(u + ht, v)?, at(u - ht, v)?, at(u, v + ht)?, at(u, v - ht)?])
}

/// Directional derivatives `D_{e_i} W` from central differences of a
/// packed vector field.
fn frame_derivatives<T: Real>(
    center: &FrameData<T>,
    plus_minus: [(&[T], &[T]); 2],
    h: f64,
) -> [Vec<T>; 2] {
    let two_h = T::from_f64(2.0 * h);
    let coord: Vec<Vec<T>> = plus_minus
        .iter()
        .map(|(p, m)| p.iter().zip(m.iter()).map(|(a, b)| (*a - *b) / two_h).collect())
        .collect();
    let b = center.frame_coords;
    let dir = |i: usize| {
        coord[0].iter().zip(&coord[1]).map(|(du, dv)| b[i][0] * *du + b[i][1] * *dv).collect::<Vec<T>>()
    };
    [dir(0), dir(1)]
}

/// `max_X |tan(D_X E_alpha) + A_alpha X|` over `X` in `{e1, e2}`.
pub fn weingarten_residual<M: ChartMap, T: Real>(
    chart: &SurfaceChart<M>,
    u: T,
    v: T,
    alpha: usize,
    h: f64,
) -> Result<T> {
    let center = frames(chart, u, v, h)?;
    let a = center.shape_operator(alpha)?;
    let nb = neighbour_frames(chart, &center, u, v, h)?;
    let idx = alpha - 3;
    let d = frame_derivatives(
        &center,
        [(&nb[0].normals[idx], &nb[1].normals[idx]), (&nb[2].normals[idx], &nb[3].normals[idx])],
        h,
    );
    let m = &center.model;
    let mut worst = T::zero();
    for (i, di) in d.iter().enumerate() {
        let mut sq = T::zero();
        for j in 0..2 {
            let r = m.dot(di, &center.tangent[j]) + a.get(i, j);
            sq += r * r;
        }
        worst = worst.max(sq.sqrt());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmcResidual<T> {
    /// `max_i |nabla^perp_{e_i} H|`.
    pub residual: T,
    /// `e_i(|H|)`.
    pub d_abs_h: [T; 2],
    pub minimal: bool,
}

/// Normal-bundle derivative of the mean curvature vector.
pub fn pmc_residual<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<PmcResidual<T>> {
    let center = frames(chart, u, v, h)?;
    if center.minimal {
        return Ok(PmcResidual { residual: T::zero(), d_abs_h: [T::zero(); 2], minimal: true });
    }
    let nb = neighbour_frames(chart, &center, u, v, h)?;
    let d = frame_derivatives(
        &center,
        [(&nb[0].mean_curvature, &nb[1].mean_curvature), (&nb[2].mean_curvature, &nb[3].mean_curvature)],
        h,
    );
    let mut worst = T::zero();
    for di in &d {
        worst = worst.max(center.model.norm(&center.normal_part(di)));
    }
    let two_h = T::from_f64(2.0 * h);
    let du = (nb[0].abs_h - nb[1].abs_h) / two_h;
    let dv = (nb[2].abs_h - nb[3].abs_h) / two_h;
    let b = center.frame_coords;
    let d_abs_h = [b[0][0] * du + b[0][1] * dv, b[1][0] * du + b[1][1] * dv];
    Ok(PmcResidual { residual: worst, d_abs_h, minimal: false })
}

/// Independent check of the symmetry of the second fundamental form:
/// `max_alpha |<D_{e1} e2 - D_{e2} e1, E_alpha>|`.
pub fn sigma_symmetry_defect<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<T> {
    let center = frames(chart, u, v, h)?;
    let nb = neighbour_frames(chart, &center, u, v, h)?;
    let d1 = frame_derivatives(&center, [(&nb[0].tangent[1], &nb[1].tangent[1]), (&nb[2].tangent[1], &nb[3].tangent[1])], h);
    let d2 = frame_derivatives(&center, [(&nb[0].tangent[0], &nb[1].tangent[0]), (&nb[2].tangent[0], &nb[3].tangent[0])], h);
    let bracket: Vec<T> = d1[0].iter().zip(&d2[1]).map(|(a, b)| *a - *b).collect();
    Ok(center
        .normals
        .iter()
        .map(|e| center.model.dot(&bracket, e).abs())
        .fold(T::zero(), |a, b| a.max(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiDecomposition<T> {
    pub t: [T; 2],
    pub n: Vec<T>,
    pub t_sq: T,
    pub n_sq: T,
}

/// Tangential and normal components of the vertical unit vector.
pub fn xi_decomposition<T: Real>(fd: &FrameData<T>) -> XiDecomposition<T> {
    let n_sq = fd.n.iter().map(|x| *x * *x).sum();
    XiDecomposition { t: fd.t, n: fd.n.clone(), t_sq: fd.t_sq(), n_sq }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::make_surface;
    use crate::real::Dd;
    use std::collections::BTreeMap;
    use std::f64::consts::FRAC_PI_4;

    fn chart(name: &str, ps: &[(&str, f64)]) -> SurfaceChart<crate::catalog::CatalogSurface> {
        let p: BTreeMap<String, f64> = ps.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        make_surface(name, &p).unwrap().chart
    }

    fn close(a: Dd, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() < tol
    }

    #[test]
    fn slice_is_minimal() {
        for c in [1.0, -1.0, 0.0] {
            let ch = chart("slice", &[("c", c), ("n", 3.0)]);
            let fd = frames::<_, Dd>(&ch, Dd::from_f64(0.1), Dd::from_f64(-0.2), 1e-3).unwrap();
            assert!(fd.minimal);
            assert!(fd.abs_h.to_f64() < 1e-25);
            assert!(fd.t_sq().to_f64() < 1e-25);
            assert_eq!(fd.normal_count(), 2);
        }
    }

    #[test]
    fn cylinder_frame() {
        let ch = chart("cyl_s2", &[("theta0", FRAC_PI_4)]);
        let fd = frames::<_, Dd>(&ch, Dd::from_f64(0.7), Dd::from_f64(0.3), 1e-3).unwrap();
        assert!(close(fd.abs_h, 0.5, 1e-28));
        assert!(close(fd.t_sq().sqrt(), 1.0, 1e-28));
        assert!(close(fd.t[0].abs(), 0.0, 1e-28));
        let a3 = fd.shape_operator(3).unwrap();
        assert!(close(a3.a11, 1.0, 1e-28) && close(a3.a12, 0.0, 1e-28) && close(a3.a22, 0.0, 1e-28));
        assert!(fd.shape_operator(4).is_err());
        assert!(fd.shape_operator(2).is_err());
    }

    #[test]
    fn geodesic_sphere_is_umbilic() {
        let ch = chart("sphere_s3", &[]);
        let fd = frames::<_, Dd>(&ch, Dd::from_f64(0.2), Dd::from_f64(0.1), 1e-3).unwrap();
        assert!(close(fd.abs_h, 1.0, 1e-28));
        let a3 = fd.shape_operator(3).unwrap();
        assert!(close(a3.a11, 1.0, 1e-28) && close(a3.a12, 0.0, 1e-28) && close(a3.a22, 1.0, 1e-28));
        let a4 = fd.shape_operator(4).unwrap();
        assert!(a4.max_abs().to_f64() < 1e-28);
    }

    #[test]
    fn frame_invariants_hold_everywhere() {
        let cases: &[(&str, &[(&str, f64)])] = &[
            ("slice", &[("c", -1.0), ("n", 4.0)]),
            ("cyl_s2", &[("n", 4.0), ("stretch", 1.7)]),
            ("cyl_h2", &[("rho", 0.8)]),
            ("sphere_s3", &[("n", 5.0)]),
            ("clifford_small_s3", &[("n", 6.0)]),
            ("graph_control", &[("lambda", 0.3)]),
        ];
        for (name, ps) in cases {
            for mode in [JetMode::Analytic, JetMode::FiniteDifference] {
                let ch = chart(name, ps).with_mode(mode);
                let d = ch.domain.shrink(0.05).unwrap();
                for (a, b) in [(0.0, 0.0), (1.0, 1.0), (0.3, 0.8), (0.9, 0.1)] {
                    let u = d.u0 + a * (d.u1 - d.u0);
                    let v = d.v0 + b * (d.v1 - d.v0);
                    let fd = frames::<_, Dd>(&ch, Dd::from_f64(u), Dd::from_f64(v), 1e-3).unwrap();
                    let def = fd.defects();
                    assert!(def.gram < 1e-25, "{name} gram {}", def.gram);
                    assert!(def.xi_unit < 1e-25, "{name} xi {}", def.xi_unit);
                    assert!(def.e3_alignment < 1e-25 && def.trace_a3 < 1e-20, "{name} {def:?}");
                    assert!(def.trace_rest < 1e-20, "{name} {def:?}");
                    assert_eq!(fd.normal_count(), ch.model().n() - 1);
                    let xi = xi_decomposition(&fd);
                    assert!((xi.t_sq + xi.n_sq - Dd::one()).abs().to_f64() < 1e-25);
                }
            }
        }
    }

    #[test]
    fn completion_order_does_not_change_invariants() {
        let ch = chart("clifford_small_s3", &[("n", 6.0)]);
        let (u, v) = (Dd::from_f64(0.4), Dd::from_f64(1.3));
        let a = frames_with(&ch, u, v, 1e-3, NormalCompletion::Forward).unwrap();
        let b = frames_with(&ch, u, v, 1e-3, NormalCompletion::Reverse).unwrap();
        assert!((a.abs_h - b.abs_h).abs().to_f64() < 1e-28);
        assert!(a.a_h().sub(&b.a_h()).max_abs().to_f64() < 1e-28);
        let total = |f: &FrameData<Dd>| f.sff.iter().map(|s| s.norm_sq()).sum::<Dd>();
        let dets = |f: &FrameData<Dd>| f.sff.iter().skip(1).map(|s| s.det()).sum::<Dd>();
        assert!((total(&a) - total(&b)).abs().to_f64() < 1e-28);
        assert!((dets(&a) - dets(&b)).abs().to_f64() < 1e-28);
        let nsq = |f: &FrameData<Dd>| f.n.iter().map(|x| *x * *x).sum::<Dd>();
        assert!((nsq(&a) - nsq(&b)).abs().to_f64() < 1e-28);
    }

    #[test]
    fn weingarten_holds_to_second_order() {
        for (name, alpha) in [("graph_control", 3), ("clifford_small_s3", 3), ("clifford_small_s3", 4), ("sphere_s3", 4)] {
            let ch = chart(name, &[]);
            let (u, v) = ch.domain.center();
            let r = |h: f64| weingarten_residual(&ch, Dd::from_f64(u), Dd::from_f64(v), alpha, h).unwrap().to_f64();
            let (r1, r2) = (r(1e-3), r(5e-4));
            assert!(r1 < 1e-5, "{name} {alpha} {r1}");
            assert!(r2 <= r1 / 3.5 || r2 < 1e-20, "{name} {alpha} {r1} {r2}");
        }
    }

    #[test]
    fn pmc_residuals() {
        let cyl = chart("cyl_s2", &[]);
        let r = pmc_residual(&cyl, Dd::from_f64(1.0), Dd::from_f64(0.2), 1e-4).unwrap();
        assert!(r.residual.to_f64() < 1e-20);
        let sph = chart("sphere_s3", &[]);
        let r = pmc_residual(&sph, Dd::from_f64(0.3), Dd::from_f64(-0.2), 1e-5).unwrap();
        assert!(r.residual.to_f64() < 1e-8);
        let ctl = chart("graph_control", &[]);
        let (u, v) = ctl.domain.center();
        let r = pmc_residual(&ctl, Dd::from_f64(u), Dd::from_f64(v), 1e-4).unwrap();
        assert!(r.residual.to_f64() > 0.01);
        assert!(r.d_abs_h[0].abs().to_f64() + r.d_abs_h[1].abs().to_f64() > 0.01);
        let slice = chart("slice", &[]);
        assert!(pmc_residual(&slice, Dd::zero(), Dd::zero(), 1e-3).unwrap().minimal);
    }

    #[test]
    fn second_fundamental_form_is_symmetric() {
        for name in ["cyl_s2", "graph_control", "clifford_small_s3"] {
            let ch = chart(name, &[]);
            let (u, v) = ch.domain.center();
            let d = sigma_symmetry_defect(&ch, Dd::from_f64(u), Dd::from_f64(v), 1e-4).unwrap();
            assert!(d.to_f64() < 1e-7, "{name} {}", d.to_f64());
        }
    }

    #[test]
    fn stencil_must_fit_in_domain() {
        let ch = chart("cyl_s2", &[]).with_mode(JetMode::FiniteDifference);
        let e = frames::<_, f64>(&ch, 0.0005, 0.0, 1e-3).unwrap_err();
        assert!(matches!(e, GeomError::StencilOutOfDomain { .. }));
        let e = pmc_residual::<_, f64>(&ch, 0.0015, 0.0, 1e-3).unwrap_err();
        assert!(matches!(e, GeomError::StencilOutOfDomain { .. }));
    }

    #[test]
    fn metric_matches_jet() {
        let ch = chart("cyl_s2", &[("stretch", 2.0)]);
        let g = ch.metric::<Dd>(Dd::from_f64(1.0), Dd::from_f64(0.0), 1e-3).unwrap();
        assert!(close(g.e, 1.0, 1e-28) && close(g.f, 0.0, 1e-28) && close(g.g, 4.0, 1e-28));
        let g = ch.with_mode(JetMode::FiniteDifference).metric::<Dd>(Dd::from_f64(1.0), Dd::from_f64(0.0), 1e-3).unwrap();
        assert!(close(g.g, 4.0, 1e-25) && close(g.e, 1.0, 1e-6));
    }
}
