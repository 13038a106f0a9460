use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid size mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("grid too small: {0} nodes")]
    GridTooSmall(usize),

    /// |lambda * z2| beyond the validity guard of the local model.
    #[error("state outside model validity: |lambda * z2| = {0:.3e} exceeds {limit}", limit = crate::model::EXPONENT_GUARD)]
    ExponentGuard(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("domain collapse: l = {0:e} m")]
    DomainCollapse(f64),

    #[error("cone and length coupling did not converge in the step ending at t = {0} s")]
    FixedPointFailure(f64),

    #[error("linear solve failed: zero pivot at row {0}")]
    LinearSolveFailure(usize),

    #[error("gain condition violated: {0}")]
    GainConditionViolated(String),

    #[error("matrix exponential produced non-finite entries")]
    MatrixExponentialFailure,

    #[error("{what} = {value:e} outside [{lo:e}, {hi:e}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("kernel evaluated outside the Volterra region: x = {x:e} > y = {y:e}")]
    RegionViolation { x: f64, y: f64 },

    #[error("dwell-time integrand denominator non-positive at s = {0}")]
    DwellDenominator(f64),

    #[error("closed-loop ODE matrix is not Hurwitz (eigenvalue real parts {0:?})")]
    NotHurwitz([f64; 2]),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            msg: msg.into(),
        }
    }
}
