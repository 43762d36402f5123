//! Numerical toolkit for composed complex Henon maps: orbit classification,
//! Julia-set sampling, periodic orbits, expansion rates, topological pressure,
//! and fractal dimension estimates.

pub mod algebra;
pub mod classify;
pub mod cli;
pub mod pressure;
pub mod rates;
pub mod report;
pub mod sampler;

use thiserror::Error;

/// Magnitude cap for orbit coordinates. Anything beyond this is reported as a
/// structured range error instead of silently overflowing to infinity.
pub const MAGNITUDE_CAP: f64 = 1e150;

#[derive(Debug, Error)]
pub enum Error {
    #[error("map must contain at least one factor")]
    EmptyFactorList,
    #[error("factor {index}: twist coefficient a must be nonzero")]
    ZeroTwist { index: usize },
    #[error("factor {index}: polynomial degree must be at least 2, got {degree}")]
    DegreeTooLow { index: usize, degree: usize },
    #[error("factor {index}: leading coefficient must be nonzero")]
    ZeroLeadingCoefficient { index: usize },
    #[error("coordinate magnitude exceeded {cap:e} applying factor {factor} at step {step}")]
    RangeExceeded { factor: usize, step: usize, cap: f64 },
    #[error("backward orbit left the filtration region at step {step} (of {requested})")]
    BackwardOrbitEscapes { step: usize, requested: usize },
    #[error("forward orbit left the filtration region at step {step} (of {requested})")]
    ForwardOrbitEscapes { step: usize, requested: usize },
    #[error("empty sample at depth {depth}: n_max {n_max} or depth too small for this map")]
    EmptySample { depth: u32, n_max: usize },
    #[error("no periodic orbits supplied")]
    EmptyOrbitList,
    #[error("all {total} probes were dropped before reaching n = {n}")]
    AllProbesDropped { n: usize, total: usize },
    #[error("separated set has {got} points, need at least 2 (epsilon too large?)")]
    SeparatedSetTooSmall { got: usize },
    #[error("selftest: {failed} of {total} checks failed")]
    SelftestFailed { failed: usize, total: usize },
    #[error("pressure has no sign change on ({lo}, {hi}); no root bracket")]
    NoRootBracket { lo: f64, hi: f64 },
    #[error("box-count fit needs {need} distinct scales, got {got}")]
    TooFewScales { need: usize, got: usize },
    #[error("degenerate box-count fit: zero variance in scales")]
    DegenerateFit,
    #[error("scale depth {depth} not available in sample (max depth {max_depth})")]
    ScaleUnavailable { depth: u32, max_depth: u32 },
    #[error("newton jacobian singular at seed {seed}")]
    SingularJacobian { seed: usize },
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
