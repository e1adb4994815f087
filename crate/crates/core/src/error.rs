use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("invalid space-form model: {0}")]
    InvalidModel(String),
    #[error("point violates the model constraint (defect {defect:e})")]
    InvalidBasepoint { defect: f64 },
    #[error("vector is not tangent to the model at its basepoint (defect {defect:e})")]
    NotTangent { defect: f64 },
    #[error("vectors are attached to different basepoints")]
    MismatchedBasepoints,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("stencil at ({u}, {v}) with reach {reach} leaves the chart domain")]
    StencilOutOfDomain { u: f64, v: f64, reach: f64 },
    #[error("degenerate metric at ({u}, {v}): EG - F^2 = {det:e}")]
    DegenerateMetric { u: f64, v: f64, det: f64 },
    #[error("degenerate chart point ({u}, {v}): Gram determinant {gram:e}")]
    DegenerateChart { u: f64, v: f64, gram: f64 },
    #[error("normal index {alpha} out of range 3..={max}")]
    NormalIndex { alpha: usize, max: usize },
    #[error("minimal-surface guard: |H| = {abs_h:e} does not exceed {eps:e}")]
    MinimalSurface { abs_h: f64, eps: f64 },
    #[error("chart is not isothermal within tolerance (defect {defect:e} > {tol:e})")]
    NotIsothermal { defect: f64, tol: f64 },
    #[error("operator is not traceless (trace {trace:e})")]
    NotTraceless { trace: f64 },
    #[error("convergence study needs at least {needed} steps, got {got}")]
    TooFewSteps { needed: usize, got: usize },
    #[error("steps must be positive and strictly decreasing")]
    StepsNotDecreasing,
    #[error("unknown surface '{0}'")]
    UnknownSurface(String),
    #[error("parameter '{name}' = {value} outside {range}")]
    ParameterOutOfRange { name: String, value: f64, range: String },
    #[error("unknown parameter '{name}' for surface '{surface}'")]
    UnknownParameter { surface: String, name: String },
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;
