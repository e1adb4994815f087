//! Config-driven runner behind the `pmcverify` binary.
//!
//! A run evaluates one catalog surface on a grid, at one step (`verify`) or
//! a decreasing step sequence (`sweep`), and assembles a deterministic
//! [`VerificationReport`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{validate_steps, ConvergenceTable, Domain, JetMode, ORDER_THRESHOLD};
use crate::catalog::{make_surface, CatalogEntry, CatalogSurface, GridSpec, GroundTruth};
use crate::error::GeomError;
use crate::immersion::SurfaceChart;
use crate::invariants::{evaluate_point, flag_tolerance, Evaluate, InvariantReport, IsothermalPolicy, EXTRA_DET_TOL};
use crate::real::Dd;

pub const TOOL: &str = "pmcverify";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Pmc,
    Codazzi,
    Simons,
    Gauss,
    Bounds,
    Holomorphic,
    Identities,
}

impl Check {
    pub const ALL: [Check; 7] =
        [Check::Pmc, Check::Codazzi, Check::Simons, Check::Gauss, Check::Bounds, Check::Holomorphic, Check::Identities];

    pub fn name(self) -> &'static str {
        match self {
            Check::Pmc => "pmc",
            Check::Codazzi => "codazzi",
            Check::Simons => "simons",
            Check::Gauss => "gauss",
            Check::Bounds => "bounds",
            Check::Holomorphic => "holomorphic",
            Check::Identities => "identities",
        }
    }

    /// Residual expected to vanish as `h -> 0`.
    pub fn converges(self) -> bool {
        matches!(self, Check::Pmc | Check::Codazzi | Check::Simons | Check::Gauss | Check::Holomorphic)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Check::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check `{s}` (expected one of pmc, codazzi, simons, gauss, bounds, holomorphic, identities)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    #[default]
    Dd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub pmc: f64,
    pub codazzi: f64,
    pub simons: f64,
    pub gauss: f64,
    pub bounds: f64,
    pub holomorphic: f64,
    pub identities: f64,
    /// Relative `|E - G|`, `|F|` admitted by the isothermal test.
    pub isothermal: f64,
    /// Residuals at or below this count as converged.
    pub saturation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pmc: 1e-6,
            codazzi: 1e-6,
            simons: 1e-6,
            gauss: 1e-6,
            bounds: 1e-8,
            holomorphic: 1e-6,
            identities: 1e-10,
            isothermal: 1e-8,
            saturation: 100.0 * f64::EPSILON,
        }
    }
}

impl Tolerances {
    pub fn of(&self, check: Check) -> f64 {
        match check {
            Check::Pmc => self.pmc,
            Check::Codazzi => self.codazzi,
            Check::Simons => self.simons,
            Check::Gauss => self.gauss,
            Check::Bounds => self.bounds,
            Check::Holomorphic => self.holomorphic,
            Check::Identities => self.identities,
        }
    }

    fn all(&self) -> [(&'static str, f64); 9] {
        [
            ("pmc", self.pmc),
            ("codazzi", self.codazzi),
            ("simons", self.simons),
            ("gauss", self.gauss),
            ("bounds", self.bounds),
            ("holomorphic", self.holomorphic),
            ("identities", self.identities),
            ("isothermal", self.isothermal),
            ("saturation", self.saturation),
        ]
    }
}

pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub surface: String,
    pub params: BTreeMap<String, f64>,
    /// Shorthand for `params.c`.
    pub c: Option<f64>,
    pub grid: GridSpec,
    pub step: Option<f64>,
    pub steps: Option<Vec<f64>>,
    pub analytic: bool,
    pub precision: Precision,
    pub checks: Vec<Check>,
    pub tolerances: Tolerances,
    pub isothermal_policy: IsothermalPolicy,
    pub include_points: bool,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            surface: String::new(),
            params: BTreeMap::new(),
            c: None,
            grid: GridSpec { nu: 16, nv: 16 },
            step: None,
            steps: None,
            analytic: false,
            precision: Precision::default(),
            checks: Check::ALL.to_vec(),
            tolerances: Tolerances::default(),
            isothermal_policy: IsothermalPolicy::Require,
            include_points: false,
            out: None,
            csv: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn mode(&self) -> JetMode {
        if self.analytic {
            JetMode::Analytic
        } else {
            JetMode::FiniteDifference
        }
    }

    pub fn merged_params(&self) -> BTreeMap<String, f64> {
        let mut p = self.params.clone();
        if let Some(c) = self.c {
            p.insert("c".into(), c);
        }
        p
    }

    fn validate_common(&self) -> Result<(), RunError> {
        if self.surface.is_empty() {
            return Err(RunError::Config("no surface given".into()));
        }
        if self.grid.nu < 4 || self.grid.nv < 4 {
            return Err(RunError::Config(format!("grid must be at least 4x4, got {}x{}", self.grid.nu, self.grid.nv)));
        }
        if self.checks.is_empty() {
            return Err(RunError::Config("no checks selected".into()));
        }
        for (name, t) in self.tolerances.all() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(RunError::Config(format!("tolerance `{name}` must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn verify_step(&self) -> Result<f64, RunError> {
        self.validate_common()?;
        let h = self.step.or_else(|| self.steps.as_ref().and_then(|s| s.last().copied())).unwrap_or(DEFAULT_STEP);
        if !(h > 0.0 && h.is_finite()) {
            return Err(RunError::Config(format!("step must be positive, got {h}")));
        }
        Ok(h)
    }

    pub fn sweep_steps(&self) -> Result<Vec<f64>, RunError> {
        self.validate_common()?;
        let steps = self.steps.clone().ok_or_else(|| RunError::Config("sweep needs a step sequence".into()))?;
        validate_steps(&steps).map_err(|e| RunError::Config(e.to_string()))?;
        if !(steps[steps.len() - 1] > 0.0) {
            return Err(RunError::Config("steps must be positive".into()));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub status: Status,
    pub reason: Option<String>,
    pub tolerance: f64,
    /// Worst residual at the finest step.
    pub worst: Option<f64>,
    pub mean: Option<f64>,
    pub worst_at: Option<[f64; 2]>,
    /// Points at which the check applies.
    pub applicable_points: usize,
    pub convergence: Option<ConvergenceTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
}

impl Range {
    fn of(xs: impl IntoIterator<Item = f64>) -> Option<Range> {
        let mut it = xs.into_iter().peekable();
        it.peek()?;
        let (mut min, mut max, mut max_abs) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for x in it {
            min = min.min(x);
            max = max.max(x);
            max_abs = max_abs.max(x.abs());
        }
        Some(Range { min, max, max_abs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlagCounts {
    pub minimal: usize,
    pub flat: usize,
    pub s_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub abs_h: Option<Range>,
    pub abs_t: Option<Range>,
    pub s_sq: Option<Range>,
    pub k_extrinsic: Option<Range>,
    pub k_intrinsic: Option<Range>,
    pub k_gauss_equation: Option<Range>,
    pub det_a3_residual: Option<Range>,
    pub max_extra_det: Option<Range>,
    pub quadratic_margin: Option<Range>,
    pub derived_margin: Option<Range>,
    pub derived_bound: Option<Range>,
    pub printed_margin: Option<Range>,
    pub printed_bound: Option<Range>,
    pub isothermal_defect: Option<Range>,
    pub flags: FlagCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceReport {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub c: f64,
    pub n: usize,
    pub mode: JetMode,
    pub precision: Precision,
    pub isothermal_claim: bool,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub nu: usize,
    pub nv: usize,
    pub boundary_margin: f64,
    pub requested_points: usize,
    pub evaluated_points: usize,
    pub excluded_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub surface: SurfaceReport,
    pub grid: GridReport,
    pub steps: Vec<f64>,
    pub tolerances: Tolerances,
    pub order_threshold: f64,
    pub checks: Vec<CheckReport>,
    pub summary: Summary,
    /// Verdict per enabled check; skipped checks do not count.
    pub verdict: Status,
    pub points: Option<Vec<InvariantReport>>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Exit status: 0 on pass, 1 on any failed check.
    pub fn exit_code(&self) -> i32 {
        if self.verdict == Status::Pass {
            0
        } else {
            1
        }
    }

    pub fn check(&self, c: Check) -> Option<&CheckReport> {
        self.checks.iter().find(|r| r.check == c)
    }

    /// `check,h,max_residual,order_estimate` rows for every convergence table.
    pub fn convergence_csv(&self) -> Result<String, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| RunError::Io(e.to_string());
        w.write_record(["check", "h", "max_residual", "order_estimate"]).map_err(io)?;
        for c in &self.checks {
            let Some(t) = &c.convergence else { continue };
            let order = match t.order {
                crate::calculus::OrderEstimate::Saturated => "saturated".to_string(),
                crate::calculus::OrderEstimate::Measured(p) => format!("{p}"),
            };
            for r in &t.rows {
                w.write_record([c.check.name(), &format!("{}", r.h), &format!("{:e}", r.residual), &order]).map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Io(e.to_string()))
    }
}

/// Full-domain `nu x nv` grid (row-major in `u`), minus the points closer
/// than `margin` to the boundary.
pub fn grid_with_exclusion(domain: &Domain, grid: GridSpec, margin: f64) -> (Vec<(f64, f64)>, usize) {
    let lin = |a: f64, b: f64, n: usize, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
    let mut kept = Vec::with_capacity(grid.nu * grid.nv);
    let mut excluded = 0;
    for i in 0..grid.nu {
        for j in 0..grid.nv {
            let (u, v) = (lin(domain.u0, domain.u1, grid.nu, i), lin(domain.v0, domain.v1, grid.nv, j));
            if domain.contains(u, v, margin) {
                kept.push((u, v));
            } else {
                excluded += 1;
            }
        }
    }
    (kept, excluded)
}

struct Plan {
    entry: CatalogEntry,
    chart: SurfaceChart<CatalogSurface>,
    points: Vec<(f64, f64)>,
    grid: GridReport,
    holomorphic_skip: Option<String>,
}

fn plan(cfg: &RunConfig, h_max: f64) -> Result<Plan, RunError> {
    let entry = make_surface(&cfg.surface, &cfg.merged_params())?;
    let chart = entry.chart_in(cfg.mode());
    let margin = 2.0 * h_max;
    let (points, excluded) = grid_with_exclusion(&chart.domain, cfg.grid, margin);
    if points.is_empty() {
        return Err(RunError::Config(format!("no grid point lies {margin} inside the chart domain")));
    }
    let grid = GridReport {
        nu: cfg.grid.nu,
        nv: cfg.grid.nv,
        boundary_margin: margin,
        requested_points: cfg.grid.nu * cfg.grid.nv,
        evaluated_points: points.len(),
        excluded_points: excluded,
    };
    let mut holomorphic_skip = None;
    if cfg.checks.contains(&Check::Holomorphic) && cfg.isothermal_policy == IsothermalPolicy::Require {
        let worst = points
            .par_iter()
            .map(|&(u, v)| -> Result<f64, GeomError> {
                let g = chart.metric::<f64>(u, v, h_max)?;
                Ok((g.e - g.g).abs().max(g.f.abs()) / g.e)
            })
            .collect::<Result<Vec<f64>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        // finite-difference metrics carry an O(h^2) defect of their own
        let tol = cfg.tolerances.isothermal.max(flag_tolerance(cfg.analytic, h_max));
        if !(worst < tol) {
            holomorphic_skip =
                Some(format!("chart is not isothermal: max relative defect {worst:e} exceeds {tol:e}"));
        }
    }
    Ok(Plan { entry, chart, points, grid, holomorphic_skip })
}

fn evaluate_grid(cfg: &RunConfig, p: &Plan, h: f64) -> Result<Vec<InvariantReport>, RunError> {
    let has = |c: Check| cfg.checks.contains(&c);
    let holo = has(Check::Holomorphic) && p.holomorphic_skip.is_none();
    let what = Evaluate {
        pmc: has(Check::Pmc),
        codazzi: has(Check::Codazzi),
        simons: has(Check::Simons),
        intrinsic: has(Check::Gauss),
        bounds: has(Check::Bounds),
        holomorphic: holo.then_some((IsothermalPolicy::ReportOnly, cfg.tolerances.isothermal)),
    };
    let run = |&(u, v): &(f64, f64)| match cfg.precision {
        Precision::Dd => evaluate_point::<_, Dd>(&p.chart, u, v, h, what),
        Precision::F64 => evaluate_point::<_, f64>(&p.chart, u, v, h, what),
    };
    Ok(p.points.par_iter().map(run).collect::<Result<Vec<_>, GeomError>>()?)
}

/// Pointwise residual of `check`, or `None` where it does not apply.
fn residual_of(check: Check, r: &InvariantReport, k_floor: f64) -> Option<f64> {
    let x = &r.residuals;
    match check {
        Check::Pmc => x.pmc,
        Check::Codazzi => x.codazzi,
        Check::Simons => Some(x.simons?.max(x.cheng_yau?)),
        Check::Gauss => {
            let k_int = r.k_intrinsic?;
            let k = r.k_extrinsic.unwrap_or(r.k_gauss_equation);
            let det = match (r.det_a3_lhs, r.det_a3_rhs) {
                (Some(a), Some(b)) => (a - b).abs(),
                _ => 0.0,
            };
            Some((k - k_int).abs().max(det))
        }
        Check::Bounds => {
            let m = r.margins?;
            let k = r.k_extrinsic.unwrap_or(r.k_gauss_equation);
            (k >= -k_floor).then(|| (-m.quadratic).max(-m.derived_margin).max(0.0))
        }
        Check::Holomorphic => x.holomorphic,
        Check::Identities => {
            let coherence = if r.sq_coherent { 0.0 } else { f64::INFINITY };
            Some(x.sq_relation.max(x.trace_s).max(x.st_identity).max((-r.st_margin).max(0.0)).max(coherence))
        }
    }
}

struct Stats {
    worst: f64,
    mean: f64,
    at: [f64; 2],
    count: usize,
}

/// Floor below which a computed curvature still counts as `K >= 0`.
fn k_floor(cfg: &RunConfig, h: f64) -> f64 {
    cfg.tolerances.bounds.max(flag_tolerance(cfg.analytic, h))
}

fn stats(check: Check, reports: &[InvariantReport], k_floor: f64) -> Option<Stats> {
    let mut s = Stats { worst: f64::NEG_INFINITY, mean: 0.0, at: [f64::NAN; 2], count: 0 };
    for r in reports {
        if let Some(x) = residual_of(check, r, k_floor) {
            // NaN is the worst possible outcome
            if x > s.worst || x.is_nan() && !s.worst.is_nan() {
                s.worst = x;
                s.at = [r.u, r.v];
            }
            s.mean += x;
            s.count += 1;
        }
    }
    if s.count == 0 {
        return None;
    }
    s.mean /= s.count as f64;
    Some(s)
}

fn extra_det_failure(reports: &[InvariantReport]) -> Option<f64> {
    let worst = reports.iter().filter_map(|r| r.max_extra_det).fold(f64::NEG_INFINITY, f64::max);
    (worst > EXTRA_DET_TOL).then_some(worst)
}

fn check_report(
    cfg: &RunConfig,
    p: &Plan,
    check: Check,
    per_step: &[(f64, Vec<InvariantReport>)],
) -> Result<CheckReport, RunError> {
    let tol = cfg.tolerances.of(check);
    let skipped = |reason: String| CheckReport {
        check,
        status: Status::Skipped,
        reason: Some(reason),
        tolerance: tol,
        worst: None,
        mean: None,
        worst_at: None,
        applicable_points: 0,
        convergence: None,
    };
    if check == Check::Holomorphic {
        if let Some(reason) = &p.holomorphic_skip {
            return Ok(skipped(reason.clone()));
        }
    }
    let (h_min, finest) = per_step.last().expect("at least one step");
    let Some(st) = stats(check, finest, k_floor(cfg, *h_min)) else {
        let reason = match check {
            Check::Bounds => "no grid point has K >= 0".to_string(),
            _ => "not applicable at any grid point".to_string(),
        };
        return Ok(skipped(reason));
    };
    let mut reason = None;
    let mut convergence = None;
    let mut pass = st.worst <= tol;
    if check == Check::Gauss {
        if let Some(d) = extra_det_failure(finest) {
            pass = false;
            reason = Some(format!("det A_alpha = {d:e} > {EXTRA_DET_TOL:e} for some alpha > 3"));
        }
    }
    if per_step.len() > 1 {
        if check.converges() {
            let steps: Vec<f64> = per_step.iter().map(|(h, _)| *h).collect();
            let worst: Vec<f64> = per_step
                .iter()
                .map(|(h, reps)| stats(check, reps, k_floor(cfg, *h)).map_or(0.0, |s| s.worst))
                .collect();
            let table = ConvergenceTable::from_samples(&steps, &worst, cfg.tolerances.saturation)?;
            pass = table.passes(ORDER_THRESHOLD) && reason.is_none();
            convergence = Some(table);
        } else {
            // every step must satisfy the tolerance
            pass = pass
                && per_step
                    .iter()
                    .all(|(h, reps)| {
                        stats(check, reps, k_floor(cfg, *h)).map_or(true, |s| s.worst <= tol)
                    });
        }
    }
    Ok(CheckReport {
        check,
        status: if pass { Status::Pass } else { Status::Fail },
        reason,
        tolerance: tol,
        worst: Some(st.worst),
        mean: Some(st.mean),
        worst_at: Some(st.at),
        applicable_points: st.count,
        convergence,
    })
}

fn summarize(reports: &[InvariantReport]) -> Summary {
    let range = |f: &dyn Fn(&InvariantReport) -> Option<f64>| Range::of(reports.iter().filter_map(f));
    Summary {
        abs_h: range(&|r| Some(r.abs_h)),
        abs_t: range(&|r| Some(r.abs_t)),
        s_sq: range(&|r| Some(r.s_sq)),
        k_extrinsic: range(&|r| r.k_extrinsic),
        k_intrinsic: range(&|r| r.k_intrinsic),
        k_gauss_equation: range(&|r| Some(r.k_gauss_equation)),
        det_a3_residual: range(&|r| Some((r.det_a3_lhs? - r.det_a3_rhs?).abs())),
        max_extra_det: range(&|r| r.max_extra_det),
        quadratic_margin: range(&|r| Some(r.margins?.quadratic)),
        derived_margin: range(&|r| Some(r.margins?.derived_margin)),
        derived_bound: range(&|r| Some(r.margins?.derived_bound)),
        printed_margin: range(&|r| r.margins?.printed_margin),
        printed_bound: range(&|r| r.margins?.printed_bound),
        isothermal_defect: range(&|r| r.isothermal_defect),
        flags: FlagCounts {
            minimal: reports.iter().filter(|r| r.flags.minimal).count(),
            flat: reports.iter().filter(|r| r.flags.flat).count(),
            s_zero: reports.iter().filter(|r| r.flags.s_zero).count(),
        },
    }
}

fn assemble(cfg: &RunConfig, command: Command, steps: Vec<f64>) -> Result<VerificationReport, RunError> {
    let h_max = steps.iter().copied().fold(0.0, f64::max);
    let p = plan(cfg, h_max)?;
    let mut per_step = Vec::with_capacity(steps.len());
    for &h in &steps {
        per_step.push((h, evaluate_grid(cfg, &p, h)?));
    }
    let mut checks: Vec<Check> = cfg.checks.clone();
    checks.sort();
    checks.dedup();
    let checks = checks.into_iter().map(|c| check_report(cfg, &p, c, &per_step)).collect::<Result<Vec<_>, _>>()?;
    let verdict = if checks.iter().any(|c| c.status == Status::Fail) { Status::Fail } else { Status::Pass };
    let finest = per_step.pop().map(|(_, r)| r).unwrap_or_default();
    let m = p.chart.model();
    Ok(VerificationReport {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command,
        surface: SurfaceReport {
            name: p.entry.name.clone(),
            params: p.entry.params.clone(),
            c: m.c(),
            n: m.n(),
            mode: p.chart.mode,
            precision: cfg.precision,
            isothermal_claim: p.chart.isothermal_claim,
            ground_truth: p.entry.ground_truth.clone(),
        },
        grid: p.grid,
        steps,
        tolerances: cfg.tolerances,
        order_threshold: ORDER_THRESHOLD,
        checks,
        summary: summarize(&finest),
        verdict,
        points: cfg.include_points.then_some(finest),
    })
}

/// Single-step verification.
pub fn run_verify(cfg: &RunConfig) -> Result<VerificationReport, RunError> {
    let h = cfg.verify_step()?;
    assemble(cfg, Command::Verify, vec![h])
}

/// Verification at every step of a decreasing sequence, with measured
/// convergence orders for the differential checks.
pub fn run_convergence(cfg: &RunConfig) -> Result<VerificationReport, RunError> {
    let steps = cfg.sweep_steps()?;
    assemble(cfg, Command::Sweep, steps)
}

/// Writes the report (and the CSV table when configured); returns the JSON.
pub fn emit(cfg: &RunConfig, report: &VerificationReport) -> Result<String, RunError> {
    let json = report.to_json();
    let io = |p: &PathBuf, e: std::io::Error| RunError::Io(format!("{}: {e}", p.display()));
    if let Some(path) = &cfg.out {
        std::fs::write(path, &json).map_err(|e| io(path, e))?;
    }
    if let Some(path) = &cfg.csv {
        std::fs::write(path, report.convergence_csv()?).map_err(|e| io(path, e))?;
    }
    Ok(json)
}

/// Parses `k=v`.
pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("value of `{k}` is not a number: `{v}`"))?;
    Ok((k.trim().to_string(), v))
}

/// Parses `NUxNV`.
pub fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NUxNV, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad grid size `{t}`"));
    Ok(GridSpec { nu: p(a)?, nv: p(b)? })
}

/// Parses a comma-separated list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse::<T>().map_err(|e| e.to_string())).collect()
}

/// Human-readable catalog listing.
pub fn list_surfaces_text() -> String {
    let mut out = String::new();
    for s in crate::catalog::list_surfaces() {
        out.push_str(&format!("{}\n    {}\n", s.name, s.description));
        for p in s.params {
            let d = p.default.map_or("-".to_string(), |d| format!("{d}"));
            out.push_str(&format!("    {:<10} default {:<20} {}\n", p.name, d, p.range));
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(surface: &str) -> RunConfig {
        RunConfig { surface: surface.into(), grid: GridSpec { nu: 5, nv: 5 }, analytic: true, ..RunConfig::default() }
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_param("theta0=0.5").unwrap(), ("theta0".to_string(), 0.5));
        assert!(parse_param("theta0").is_err() && parse_param("a=b").is_err());
        assert_eq!(parse_grid("16x8").unwrap(), GridSpec { nu: 16, nv: 8 });
        assert!(parse_grid("16").is_err());
        assert_eq!(parse_list::<Check>("pmc,gauss").unwrap(), vec![Check::Pmc, Check::Gauss]);
        assert!(parse_list::<Check>("pmc,nope").is_err());
        assert_eq!(parse_list::<f64>("1e-3, 5e-4").unwrap(), vec![1e-3, 5e-4]);
    }

    #[test]
    fn toml_config() {
        let c = RunConfig::from_toml(
            r#"
            surface = "cyl_h2"
            c = -2.0
            checks = ["pmc", "gauss"]
            grid = { nu = 6, nv = 7 }
            steps = [1e-3, 5e-4, 2.5e-4]
            isothermal_policy = "report-only"
            [params]
            coth_rho = 3.0
            [tolerances]
            gauss = 1e-9
            "#,
        )
        .unwrap();
        assert_eq!(c.merged_params().get("c"), Some(&-2.0));
        assert_eq!(c.checks, vec![Check::Pmc, Check::Gauss]);
        assert_eq!(c.tolerances.gauss, 1e-9);
        assert_eq!(c.tolerances.pmc, Tolerances::default().pmc);
        assert_eq!(c.isothermal_policy, IsothermalPolicy::ReportOnly);
        assert_eq!(c.sweep_steps().unwrap().len(), 3);
        assert!(RunConfig::from_toml("surfce = \"slice\"").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg("cyl_s2");
        c.grid = GridSpec { nu: 3, nv: 8 };
        assert!(matches!(run_verify(&c), Err(RunError::Config(_))));
        let mut c = cfg("cyl_s2");
        c.steps = Some(vec![1e-3, 2e-3, 1e-4]);
        assert!(matches!(run_convergence(&c), Err(RunError::Config(_))));
        c.steps = Some(vec![1e-3, 5e-4]);
        assert!(matches!(run_convergence(&c), Err(RunError::Config(_))));
        let mut c = cfg("cyl_s2");
        c.tolerances.pmc = 0.0;
        assert!(matches!(run_verify(&c), Err(RunError::Config(_))));
        let mut c = cfg("cyl_s2");
        c.step = Some(-1.0);
        assert!(matches!(run_verify(&c), Err(RunError::Config(_))));
        assert!(matches!(run_verify(&cfg("")), Err(RunError::Config(_))));
        assert!(matches!(run_verify(&cfg("torus")), Err(RunError::Geometry(GeomError::UnknownSurface(_)))));
    }

    #[test]
    fn boundary_points_are_excluded_and_counted() {
        let d = Domain::new(0.0, 1.0, 0.0, 1.0);
        let (kept, excluded) = grid_with_exclusion(&d, GridSpec { nu: 5, nv: 5 }, 0.01);
        assert_eq!((kept.len(), excluded), (9, 16));
        let r = run_verify(&cfg("cyl_s2")).unwrap();
        assert_eq!(r.grid.requested_points, 25);
        assert_eq!(r.grid.evaluated_points + r.grid.excluded_points, 25);
        assert_eq!(r.grid.boundary_margin, 2.0 * DEFAULT_STEP);
    }

    #[test]
    fn verdict_follows_checks() {
        let r = run_verify(&cfg("cyl_s2")).unwrap();
        assert_eq!(r.verdict, Status::Pass);
        assert_eq!(r.exit_code(), 0);
        assert_eq!(r.checks.len(), 7);
        for c in &r.checks {
            assert_eq!(c.status, Status::Pass, "{c:?}");
            assert!(c.worst.unwrap() <= c.tolerance);
        }
        assert!(r.summary.k_extrinsic.unwrap().max_abs < 1e-8);

        let mut c = cfg("graph_control");
        c.checks = vec![Check::Pmc];
        let r = run_verify(&c).unwrap();
        assert_eq!(r.verdict, Status::Fail);
        assert_eq!(r.exit_code(), 1);
        assert!(r.check(Check::Pmc).unwrap().worst.unwrap() >= 0.01);
    }

    #[test]
    fn minimal_surface_guard() {
        let mut c = cfg("slice");
        c.checks = vec![Check::Bounds];
        let e = run_verify(&c).unwrap_err();
        assert!(matches!(e, RunError::Geometry(GeomError::MinimalSurface { .. })));
        assert_eq!(e.exit_code(), 2);
        c.checks = vec![Check::Pmc, Check::Gauss, Check::Simons, Check::Identities];
        assert_eq!(run_verify(&c).unwrap().verdict, Status::Pass);
    }

    #[test]
    fn non_isothermal_charts_skip_with_reason() {
        let mut c = cfg("cyl_s2");
        c.params.insert("stretch".into(), 2.0);
        c.checks = vec![Check::Holomorphic, Check::Pmc];
        let r = run_verify(&c).unwrap();
        let h = r.check(Check::Holomorphic).unwrap();
        assert_eq!(h.status, Status::Skipped);
        assert!(h.reason.as_deref().unwrap().contains("not isothermal"));
        assert_eq!(r.verdict, Status::Pass);
        c.isothermal_policy = IsothermalPolicy::ReportOnly;
        let r = run_verify(&c).unwrap();
        assert!(r.check(Check::Holomorphic).unwrap().worst.is_some());
    }

    #[test]
    fn sweep_reports_orders_and_csv() {
        let mut c = cfg("sphere_s3");
        c.analytic = false;
        c.checks = vec![Check::Gauss, Check::Bounds];
        c.steps = Some(vec![1e-3, 5e-4, 2.5e-4]);
        let r = run_convergence(&c).unwrap();
        let g = r.check(Check::Gauss).unwrap();
        let t = g.convergence.as_ref().unwrap();
        match t.order {
            crate::calculus::OrderEstimate::Measured(p) => assert!((p - 2.0).abs() < 0.05),
            o => panic!("{o:?}"),
        }
        assert!(r.check(Check::Bounds).unwrap().convergence.is_none());
        let csv = r.convergence_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("check,h,max_residual,order_estimate"));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn sweep_examples_pass() {
        let steps = vec![1e-3, 5e-4, 2.5e-4];
        for (name, mode_analytic, check) in
            [("cyl_s2", false, Check::Simons), ("sphere_s3", true, Check::Codazzi), ("cyl_h2", false, Check::Gauss)]
        {
            let mut c = cfg(name);
            c.analytic = mode_analytic;
            c.checks = vec![check];
            c.steps = Some(steps.clone());
            let r = run_convergence(&c).unwrap();
            let rep = r.check(check).unwrap();
            assert_eq!(rep.status, Status::Pass, "{name}: {rep:?}");
            assert!(rep.convergence.as_ref().unwrap().passes(ORDER_THRESHOLD));
        }
        let mut c = cfg("sphere_s3");
        c.checks = vec![Check::Codazzi];
        c.steps = Some(steps);
        let t = run_convergence(&c).unwrap().check(Check::Codazzi).unwrap().convergence.clone().unwrap();
        assert_eq!(t.order, crate::calculus::OrderEstimate::Saturated);
    }

    #[test]
    fn reports_are_deterministic() {
        let mut c = cfg("clifford_small_s3");
        c.include_points = true;
        let a = run_verify(&c).unwrap().to_json();
        let b = run_verify(&c).unwrap().to_json();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), v["grid"]["evaluated_points"].as_u64().unwrap() as usize);
        assert!(a.starts_with("{\n  \"tool\": \"pmcverify\""));
    }

    #[test]
    fn f64_precision_runs() {
        let mut c = cfg("cyl_s2");
        c.precision = Precision::F64;
        let r = run_verify(&c).unwrap();
        assert_eq!(r.surface.precision, Precision::F64);
        assert_eq!(r.check(Check::Identities).unwrap().status, Status::Pass);
    }
}
