use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("curvature {kappa:e} at x = {x} is below the Frenet threshold")]
    VanishingCurvature { x: f64, kappa: f64 },
    #[error("degenerate parametrization at {at:?}: EG - F^2 = {det:e}")]
    DegenerateParametrization { at: Vec<f64>, det: f64 },
    #[error("curve speed vanishes near t = {t} (speed {speed:e})")]
    SingularCurve { t: f64, speed: f64 },
    #[error("arc-length reparametrization missed unit speed by {deviation:e}")]
    Reparametrization { deviation: f64 },
    #[error("point (x = {x:?}, y = {y:?}) lies outside the chart")]
    OutOfChart { x: Vec<f64>, y: Vec<f64> },
    #[error("pulled-back metric is degenerate at (x = {x:?}, y = {y:?}): det = {det:e}")]
    DegenerateMetric { x: Vec<f64>, y: Vec<f64>, det: f64 },
    #[error("closed-form metric is not available for base `{0}`")]
    UnsupportedBase(String),
    #[error("sample grid contains no point with y != 0")]
    EmptySample,
    #[error("tube radius {eps} must lie in (0, 1)")]
    EpsilonOutOfRange { eps: f64 },
    #[error("sample spacing {spacing:e} exceeds requested resolution {resolution:e}")]
    InsufficientSamples { spacing: f64, resolution: f64 },
    #[error("integrability exponent t = {t} must exceed the codimension k = {k}")]
    BadExponent { t: f64, k: usize },
    #[error("fiber integral of a^(-t) exceeds the overflow cap near base point {at:?}")]
    NonIntegrable { at: Vec<f64> },
    #[error("Sobolev exponent undefined for t = {t}, k = {k}: {reason}")]
    ExponentOutOfRange { t: f64, k: usize, reason: String },
    #[error("mesh edge {edge:e} is longer than R/10 = {limit:e}")]
    MeshTooCoarse { edge: f64, limit: f64 },
    #[error("Picard iteration did not converge in {iterations} steps (last residual {last:e})")]
    NoConvergence { iterations: usize, history: Vec<f64>, last: f64 },
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),
    #[error("missing constant `{0}`")]
    MissingConstant(String),
    #[error("no admissible epsilon: Theta_1({eps:e}) = {theta1:e} already exceeds the target {target:e}")]
    NoAdmissibleEps { eps: f64, theta1: f64, target: f64 },
    #[error("pair not certified: {reason} (residual {residual:e})")]
    NotCertified { reason: String, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown manifold: {0}")]
    UnknownManifold(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
