//! The operators `Q` and `S`, the Gauss curvature in its two forms, and the
//! identities and inequalities relating them, all evaluated as residuals.

use serde::Serialize;

use crate::calculus::{
    brioschi_curvature, covariant_derivative_operator, hessian, laplace_beltrami, metric_jet, Domain, MetricCoeffs,
    Sym2,
};
use crate::error::{GeomError, Result};
use crate::immersion::{frames, ChartMap, FrameData, SurfaceChart, EPS_H};
use crate::real::Real;
use crate::spaceform::ambient_curvature;

/// Trace of `S` beyond which a point counts as a frame defect.
pub const TRACE_TOL: f64 = 1e-10;
/// Largest admissible `det A_alpha` for `alpha > 3`.
pub const EXTRA_DET_TOL: f64 = 1e-10;

/// `Q_ij = 2 (A_H)_ij - c t_i t_j`.
pub fn q_form<T: Real>(fd: &FrameData<T>, c: f64) -> Sym2<T> {
    q_from_parts(&fd.a_h(), fd.t, c)
}

pub fn q_from_parts<T: Real>(a_h: &Sym2<T>, t: [T; 2], c: f64) -> Sym2<T> {
    a_h.scale(T::from_f64(2.0)).sub(&Sym2::outer(t).scale(T::from_f64(c)))
}

/// `S = 2 A_H - c t t^T + (c |T|^2 / 2 - 2 |H|^2) id`.
pub fn s_operator<T: Real>(fd: &FrameData<T>, c: f64) -> Sym2<T> {
    s_from_parts(&fd.a_h(), fd.t, fd.abs_h, c)
}

pub fn s_from_parts<T: Real>(a_h: &Sym2<T>, t: [T; 2], abs_h: T, c: f64) -> Sym2<T> {
    let ct = T::from_f64(c);
    let t_sq = t[0] * t[0] + t[1] * t[1];
    let shift = ct * t_sq / T::from_f64(2.0) - T::from_f64(2.0) * abs_h * abs_h;
    q_from_parts(a_h, t, c).add(&Sym2::identity().scale(shift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqRelation {
    /// `max_ij |S - (Q - tr Q / 2 id)|_ij`.
    pub residual: f64,
    /// `S = 0` exactly when the traceless part of `Q` vanishes.
    pub coherent: bool,
}

pub fn sq_relation_residual<T: Real>(q: &Sym2<T>, s: &Sym2<T>, zero_tol: f64) -> SqRelation {
    let tq = q.traceless();
    let residual = s.sub(&tq).max_abs().to_f64();
    let s_zero = s.norm_sq().sqrt().to_f64() < zero_tol;
    let q_zero = tq.norm_sq().sqrt().to_f64() < zero_tol;
    SqRelation { residual, coherent: s_zero == q_zero }
}

/// `||S T|^2 - |T|^2 |S|^2 / 2|` for traceless symmetric `S`.
pub fn st_identity_residual<T: Real>(s: &Sym2<T>, t: [T; 2]) -> Result<T> {
    let tr = s.trace().to_f64();
    if !(tr.abs() < TRACE_TOL) {
        return Err(GeomError::NotTraceless { trace: tr });
    }
    let st = s.apply(t);
    let lhs = st[0] * st[0] + st[1] * st[1];
    let t_sq = t[0] * t[0] + t[1] * t[1];
    Ok((lhs - t_sq * s.norm_sq() / T::from_f64(2.0)).abs())
}

/// `|T|^2 |S| / sqrt 2 - |<S T, T>|`, nonnegative for traceless `S`.
pub fn st_inequality_margin<T: Real>(s: &Sym2<T>, t: [T; 2]) -> T {
    let t_sq = t[0] * t[0] + t[1] * t[1];
    t_sq * s.norm_sq().sqrt() / T::from_f64(2.0).sqrt() - s.quad(t, t).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussExtrinsic<T> {
    pub k: T,
    /// `det A_3` from the component array.
    pub det_a3: T,
    /// `det A_3` from `|H|, |S|, |T|, <ST,T>`.
    pub det_a3_formula: T,
    pub det_a3_residual: T,
    pub st_t: T,
    /// `sum_{alpha > 3} det A_alpha`.
    pub extra_dets: T,
    /// `max_{alpha > 3} det A_alpha`, zero in codimension one.
    pub max_extra_det: T,
}

impl<T: Real> GaussExtrinsic<T> {
    pub fn extra_dets_ok(&self) -> bool {
        self.max_extra_det.to_f64() <= EXTRA_DET_TOL
    }
}

/// Gauss curvature rewritten in terms of `S`:
/// `K = c(1-|T|^2) + |H|^2 - |S|^2/(8|H|^2) - c^2|T|^4/(16|H|^2)
///      - c<ST,T>/(4|H|^2) + sum_{alpha>3} det A_alpha`.
pub fn gauss_curvature_extrinsic<T: Real>(fd: &FrameData<T>, s: &Sym2<T>, c: f64) -> Result<GaussExtrinsic<T>> {
    if fd.minimal || !(fd.abs_h.to_f64() > EPS_H) {
        return Err(GeomError::MinimalSurface { abs_h: fd.abs_h.to_f64(), eps: EPS_H });
    }
    let ct = T::from_f64(c);
    let h2 = fd.abs_h * fd.abs_h;
    let t_sq = fd.t_sq();
    let st_t = s.quad(fd.t, fd.t);
    let det_a3_formula = h2
        - s.norm_sq() / (T::from_f64(8.0) * h2)
        - ct * ct * t_sq * t_sq / (T::from_f64(16.0) * h2)
        - ct * st_t / (T::from_f64(4.0) * h2);
    let det_a3 = fd.sff[0].det();
    let extra: Vec<T> = fd.sff.iter().skip(1).map(|a| a.det()).collect();
    let extra_dets: T = extra.iter().copied().sum();
    let max_extra_det = extra.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let k = ct * (T::one() - t_sq) + det_a3_formula + extra_dets;
    Ok(GaussExtrinsic {
        k,
        det_a3,
        det_a3_formula,
        det_a3_residual: (det_a3 - det_a3_formula).abs(),
        st_t,
        extra_dets,
        max_extra_det,
    })
}

/// `K = <R(e1,e2)e2, e1> + sum_alpha det A_alpha`, valid at minimal points.
pub fn gauss_curvature_gauss_eq<T: Real>(fd: &FrameData<T>) -> Result<T> {
    let e1 = fd.ambient_vector(&fd.tangent[0])?;
    let e2 = fd.ambient_vector(&fd.tangent[1])?;
    let r = ambient_curvature(&fd.model, &e1, &e2, &e2)?;
    let sectional = fd.model.factor_dot(&r.v, &e1.v) + r.s * e1.s;
    Ok(sectional + fd.sff.iter().map(|a| a.det()).sum::<T>())
}

/// Curvature of a metric field from its coefficients alone.
pub fn gauss_curvature_intrinsic<T, M>(metric: M, u: T, v: T, h: f64, domain: &Domain) -> Result<T>
where
    T: Real,
    M: Fn(T, T) -> Result<MetricCoeffs<T>>,
{
    let mj = metric_jet(metric, u, v, h, domain)?;
    Ok(brioschi_curvature(&mj))
}

/// [`gauss_curvature_intrinsic`] for the metric induced by a chart.
pub fn chart_intrinsic_curvature<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<T> {
    gauss_curvature_intrinsic(|a, b| chart.metric(a, b, h), u, v, h, &chart.domain)
}

/// `(u, v) -> S` in the Gram-Schmidt frame.
pub fn s_field<'a, M: ChartMap, T: Real>(
    chart: &'a SurfaceChart<M>,
    h: f64,
) -> impl Fn(T, T) -> Result<Sym2<T>> + 'a {
    let c = chart.model().c();
    move |a, b| Ok(s_operator(&frames(chart, a, b, h)?, c))
}

/// `|(nabla_{e1} S) e2 - (nabla_{e2} S) e1|`.
pub fn codazzi_residual<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<T> {
    let nabla =
        covariant_derivative_operator(s_field(chart, h), |a, b| chart.metric(a, b, h), u, v, h, &chart.domain)?;
    let a = nabla.applied(0, 1);
    let b = nabla.applied(1, 0);
    let (d0, d1) = (a[0] - b[0], a[1] - b[1]);
    Ok((d0 * d0 + d1 * d1).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimonsResidual {
    pub simons: f64,
    pub cheng_yau: f64,
    /// `Delta |S|^2 / 2`.
    pub half_laplacian: f64,
    pub grad_s_sq: f64,
    pub k: f64,
    pub s_sq: f64,
}

/// `|Delta|S|^2/2 - 2K|S|^2 - |nabla S|^2|`, and the general form
/// `|nabla S|^2 + sum_i lambda_i Hess(tr S)(v_i, v_i) + K (lambda_1 - lambda_2)^2`
/// against the same left-hand side. `K` is extrinsic away from minimal
/// points and intrinsic at them.
pub fn simons_residual<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<SimonsResidual> {
    let c = chart.model().c();
    let dom = &chart.domain;
    let metric = |a: T, b: T| chart.metric(a, b, h);
    let sf = s_field(chart, h);
    let fd = frames(chart, u, v, h)?;
    let s = s_operator(&fd, c);
    let k = if fd.minimal { chart_intrinsic_curvature(chart, u, v, h)? } else { gauss_curvature_extrinsic(&fd, &s, c)?.k };

    let lap = laplace_beltrami(|a, b| Ok(sf(a, b)?.norm_sq()), metric, u, v, h, dom)?;
    let half_lap = lap / T::from_f64(2.0);
    let nabla = covariant_derivative_operator(&sf, metric, u, v, h, dom)?;
    let s_sq = s.norm_sq();
    let two = T::from_f64(2.0);
    let simons = (half_lap - two * k * s_sq - nabla.norm_sq).abs();

    let hess_tr = hessian(|a, b| Ok(sf(a, b)?.trace()), metric, u, v, h, dom)?;
    let (lambda, vecs) = s.eigen();
    let b = fd.frame_coords;
    let mut trace_term = T::zero();
    for (l, w) in lambda.iter().zip(vecs.iter()) {
        let coord = [w[0] * b[0][0] + w[1] * b[1][0], w[0] * b[0][1] + w[1] * b[1][1]];
        trace_term += *l * hess_tr.quad(coord, coord);
    }
    let gap = lambda[0] - lambda[1];
    let cheng_yau = (half_lap - nabla.norm_sq - trace_term - k * gap * gap).abs();
    Ok(SimonsResidual {
        simons: simons.to_f64(),
        cheng_yau: cheng_yau.to_f64(),
        half_laplacian: half_lap.to_f64(),
        grad_s_sq: nabla.norm_sq.to_f64(),
        k: k.to_f64(),
        s_sq: s_sq.to_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundMargins {
    /// `K - sum_{alpha>3} det A_alpha` written in terms of `S`.
    pub quadratic: f64,
    /// Positive root of the quadratic inequality in `|S|`.
    pub derived_bound: f64,
    pub derived_margin: f64,
    /// Closed forms as printed in the source, for comparison only.
    pub printed_bound: Option<f64>,
    pub printed_margin: Option<f64>,
}

pub fn bound_margins(c: f64, abs_h: f64, abs_t: f64, abs_s: f64, st_t: f64) -> Result<BoundMargins> {
    if !(abs_h > EPS_H) {
        return Err(GeomError::MinimalSurface { abs_h, eps: EPS_H });
    }
    let h2 = abs_h * abs_h;
    let t_sq = abs_t * abs_t;
    let quadratic = -abs_s * abs_s / (8.0 * h2) - c * st_t / (4.0 * h2) - c * c * t_sq * t_sq / (16.0 * h2)
        + c * (1.0 - t_sq)
        + h2;
    let sqrt2 = std::f64::consts::SQRT_2;
    let derived_bound = if c < 0.0 {
        ((c * c + 16.0 * h2 * h2).sqrt() - c) / sqrt2
    } else {
        ((c * c + 16.0 * c * h2 + 16.0 * h2 * h2).sqrt() + c) / sqrt2
    };
    let printed_bound = if c < 0.0 {
        Some(((c * c + h2).sqrt() - c) / sqrt2)
    } else if c > 0.0 {
        Some(((c * c + 16.0 * c * h2 + 16.0 * h2).sqrt() + c) / sqrt2)
    } else {
        None
    };
    Ok(BoundMargins {
        quadratic,
        derived_bound,
        derived_margin: derived_bound - abs_s,
        printed_bound,
        printed_margin: printed_bound.map(|b| b - abs_s),
    })
}

/// What to do when a chart fails the isothermal test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsothermalPolicy {
    Require,
    ReportOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolomorphicResidual {
    pub residual: f64,
    /// `max(|E - G|, |F|) / E` at the point.
    pub isothermal_defect: f64,
    pub isothermal: bool,
}

/// `q = (Q_uu - Q_vv)/4 - i Q_uv/2` in chart coordinates.
pub fn abresch_rosenberg<M: ChartMap, T: Real>(chart: &SurfaceChart<M>, u: T, v: T, h: f64) -> Result<[T; 2]> {
    let m = chart.model();
    let jet = chart.map_jet(u, v, h)?;
    let fd = frames(chart, u, v, h)?;
    let ct = T::from_f64(m.c());
    let last = jet.value.len() - 1;
    let q = |k: usize, l: usize| {
        T::from_f64(2.0) * m.dot(jet.second(k, l), &fd.mean_curvature) - ct * jet.first(k)[last] * jet.first(l)[last]
    };
    let quarter = T::from_f64(0.25);
    Ok([quarter * (q(0, 0) - q(1, 1)), -(q(0, 1) / T::from_f64(2.0))])
}

/// Cauchy-Riemann defect `|d_u Re q - d_v Im q| + |d_v Re q + d_u Im q|`.
pub fn holomorphicity_residual<M: ChartMap, T: Real>(
    chart: &SurfaceChart<M>,
    u: T,
    v: T,
    h: f64,
    policy: IsothermalPolicy,
    tol: f64,
) -> Result<HolomorphicResidual> {
    let g = chart.metric(u, v, h)?;
    let e = g.e.to_f64();
    let defect = (g.e - g.g).abs().max(g.f.abs()).to_f64() / e;
    let isothermal = defect < tol;
    if !isothermal && policy == IsothermalPolicy::Require {
        return Err(GeomError::NotIsothermal { defect, tol });
    }
    chart.domain.check(u.to_f64(), v.to_f64(), h + chart.jet_reach(h))?;
    let ht = T::from_f64(h);
    let two_h = T::from_f64(2.0 * h);
    let qu = [abresch_rosenberg(chart, u + ht, v, h)?, abresch_rosenberg(chart, u - ht, v, h)?];
    let qv = [abresch_rosenberg(chart, u, v + ht, h)?, abresch_rosenberg(chart, u, v - ht, h)?];
    let d = |p: &[[T; 2]; 2], i: usize| (p[0][i] - p[1][i]) / two_h;
    let r = (d(&qu, 0) - d(&qv, 1)).abs() + (d(&qv, 0) + d(&qu, 1)).abs();
    Ok(HolomorphicResidual { residual: r.to_f64(), isothermal_defect: defect, isothermal })
}

/// Tolerance for the `flat` and `S_zero` flags.
pub fn flag_tolerance(analytic: bool, h: f64) -> f64 {
    if analytic {
        1e-6
    } else {
        100.0 * h * h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Flags {
    pub minimal: bool,
    pub flat: bool,
    pub s_zero: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals {
    pub sq_relation: f64,
    pub trace_s: f64,
    pub codazzi: Option<f64>,
    pub simons: Option<f64>,
    pub cheng_yau: Option<f64>,
    pub holomorphic: Option<f64>,
    pub st_identity: f64,
    pub pmc: Option<f64>,
    pub curvature_gap: Option<f64>,
}

/// Pointwise record of every evaluated quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub u: f64,
    pub v: f64,
    pub q: [f64; 3],
    pub s: [f64; 3],
    pub s_sq: f64,
    pub abs_h: f64,
    pub abs_t: f64,
    pub k_extrinsic: Option<f64>,
    pub k_intrinsic: Option<f64>,
    pub k_gauss_equation: f64,
    pub det_a3_lhs: Option<f64>,
    pub det_a3_rhs: Option<f64>,
    pub max_extra_det: Option<f64>,
    pub st_t: f64,
    pub st_margin: f64,
    /// Eigenvalues of `S`.
    pub lambda: [f64; 2],
    pub sq_coherent: bool,
    pub margins: Option<BoundMargins>,
    pub isothermal_defect: Option<f64>,
    pub residuals: Residuals,
    pub flags: Flags,
}

/// Which of the costlier quantities to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluate {
    pub pmc: bool,
    pub codazzi: bool,
    pub simons: bool,
    pub intrinsic: bool,
    pub bounds: bool,
    pub holomorphic: Option<(IsothermalPolicy, f64)>,
}

impl Evaluate {
    pub fn everything() -> Self {
        Self {
            pmc: true,
            codazzi: true,
            simons: true,
            intrinsic: true,
            bounds: true,
            holomorphic: Some((IsothermalPolicy::ReportOnly, 1e-8)),
        }
    }

    pub fn algebraic() -> Self {
        Self { pmc: false, codazzi: false, simons: false, intrinsic: false, bounds: false, holomorphic: None }
    }
}

pub fn evaluate_point<M: ChartMap, T: Real>(
    chart: &SurfaceChart<M>,
    u: f64,
    v: f64,
    h: f64,
    what: Evaluate,
) -> Result<InvariantReport> {
    let c = chart.model().c();
    let (ut, vt) = (T::from_f64(u), T::from_f64(v));
    let fd = frames(chart, ut, vt, h)?;
    let q = q_form(&fd, c);
    let s = s_operator(&fd, c);
    let analytic = chart.mode == crate::calculus::JetMode::Analytic;
    let tol = flag_tolerance(analytic, h);
    let sq = sq_relation_residual(&q, &s, tol);

    let k_gauss_equation = gauss_curvature_gauss_eq(&fd)?.to_f64();
    let ext = if fd.minimal { None } else { Some(gauss_curvature_extrinsic(&fd, &s, c)?) };
    let k_intrinsic =
        if what.intrinsic { Some(chart_intrinsic_curvature(chart, ut, vt, h)?.to_f64()) } else { None };
    let k_best = ext.map(|e| e.k.to_f64()).unwrap_or(k_gauss_equation);

    let abs_s = s.norm_sq().sqrt().to_f64();
    let st_t = s.quad(fd.t, fd.t).to_f64();
    let abs_t = fd.t_sq().sqrt().to_f64();
    let margins = if what.bounds { Some(bound_margins(c, fd.abs_h.to_f64(), abs_t, abs_s, st_t)?) } else { None };

    let mut residuals = Residuals {
        sq_relation: sq.residual,
        trace_s: s.trace().abs().to_f64(),
        st_identity: match st_identity_residual(&s, fd.t) {
            Ok(r) => r.to_f64(),
            Err(_) => f64::INFINITY,
        },
        ..Residuals::default()
    };
    if what.pmc {
        residuals.pmc = Some(crate::immersion::pmc_residual(chart, ut, vt, h)?.residual.to_f64());
    }
    if what.codazzi {
        residuals.codazzi = Some(codazzi_residual(chart, ut, vt, h)?.to_f64());
    }
    if what.simons {
        let r = simons_residual(chart, ut, vt, h)?;
        residuals.simons = Some(r.simons);
        residuals.cheng_yau = Some(r.cheng_yau);
    }
    if let (Some(e), Some(ki)) = (ext, k_intrinsic) {
        residuals.curvature_gap = Some((e.k.to_f64() - ki).abs());
    }
    let mut isothermal_defect = None;
    if let Some((policy, itol)) = what.holomorphic {
        let r = holomorphicity_residual(chart, ut, vt, h, policy, itol)?;
        residuals.holomorphic = Some(r.residual);
        isothermal_defect = Some(r.isothermal_defect);
    }
    let (lambda, _) = s.eigen();
    Ok(InvariantReport {
        u,
        v,
        q: q.to_f64(),
        s: s.to_f64(),
        s_sq: s.norm_sq().to_f64(),
        abs_h: fd.abs_h.to_f64(),
        abs_t,
        k_extrinsic: ext.map(|e| e.k.to_f64()),
        k_intrinsic,
        k_gauss_equation,
        det_a3_lhs: ext.map(|e| e.det_a3.to_f64()),
        det_a3_rhs: ext.map(|e| e.det_a3_formula.to_f64()),
        max_extra_det: ext.map(|e| e.max_extra_det.to_f64()),
        st_t,
        st_margin: st_inequality_margin(&s, fd.t).to_f64(),
        lambda: [lambda[0].to_f64(), lambda[1].to_f64()],
        sq_coherent: sq.coherent,
        margins,
        isothermal_defect,
        residuals,
        flags: Flags { minimal: fd.minimal, flat: k_best.abs() < tol, s_zero: abs_s < tol },
    })
}
