use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("symmetric function order k={0} is outside 1..=4")]
    InvalidOrder(usize),

    #[error("Jacobi eigen-solver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("gradient norm {grad_norm:e} is below the critical-point floor {floor:e}")]
    CriticalPoint { grad_norm: f64, floor: f64 },

    #[error("grid index {idx:?} is closer than {margin} cells to a face")]
    NotInterior { idx: [usize; 4], margin: usize },

    #[error("rho={rho} is outside the supported range: {reason}")]
    RhoOutOfScope { rho: f64, reason: &'static str },

    #[error("no entire radial solution exists for rho={rho}: {reason}")]
    Nonexistence { rho: f64, reason: &'static str },

    #[error("gauge epsilon={epsilon} is not admissible for rho={rho} (admissible interval ({lo}, {hi}))")]
    InadmissibleGauge { rho: f64, epsilon: f64, lo: f64, hi: f64 },

    #[error("radial solution leaves the cone at s={s_break:.6} (requested range ends at s={s_max})")]
    ConeBreakdown { s_break: f64, s_max: f64 },

    #[error("forcing not supported here: {0}")]
    UnsupportedForcing(&'static str),

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("inadmissible parameters: {0}")]
    InadmissibleParameters(String),

    #[error("ODE integration stalled at s={at:.6} (step size {step:e})")]
    OdeStalled { at: f64, step: f64 },

    #[error("ODE integration exceeded {0} steps")]
    OdeTooManySteps(usize),

    #[error("cone condition violated at {count} cells (first at {first:?})")]
    ConeViolation { count: usize, first: [usize; 4] },

    #[error("level set {{u > {t}}} is not compactly contained in the grid interior")]
    LevelTouchesBoundary { t: f64 },

    #[error("level set {{u = {t}}} is empty on the sampled data")]
    EmptyLevelSet { t: f64 },

    #[error("level {t} is outside the profile range [{lo}, {hi}]")]
    LevelOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("data do not solve the equation: relative residual {residual:e} exceeds {tolerance:e}")]
    NotASolution { residual: f64, tolerance: f64 },

    #[error("asymptotic slope {alpha} does not give a finite total integral (need alpha < -1)")]
    InfiniteIntegral { alpha: f64 },

    #[error("insufficient radial range: {0}")]
    InsufficientRange(String),

    #[error("level set at t={t} escapes the annulus: r_max/r_min={ratio} exceeds {bound}")]
    RatioBound { t: f64, ratio: f64, bound: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed field blob: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
