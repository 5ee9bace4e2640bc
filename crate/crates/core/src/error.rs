use thiserror::Error;

/// Crate-wide error type. Validation errors name the offending index so a
/// bad model file can be fixed without guesswork.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative off-diagonal at ({0}, {1})")]
    NegativeOffDiagonal(usize, usize),
    #[error("row {0} of Q sums to {1}, expected 0")]
    RowSum(usize, f64),
    #[error("negative rate or scale at state {0}: {1}")]
    NegativeRate(usize, f64),
    #[error("malformed jump law at {0}: {1}")]
    MalformedJumpLaw(String, String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("intensity matrix is reducible or singular beyond rank one")]
    ReducibleChain,
    #[error("stationary distribution is not invariant for Q (residual {0:.3e})")]
    NotInvariant(f64),
    #[error("asymmetric switch jumps require an explicit dual specification")]
    AsymmetricSwitchJumps(usize, usize),
    #[error("jump law {0} has no closed-form characteristic function and no empirical fallback")]
    NoCharacteristicFunction(String),
    #[error("level {level} not crossed by time {t_max} (running max {partial_max})")]
    NotCrossed {
        level: f64,
        t_max: f64,
        partial_max: f64,
    },
    #[error("not-crossed fraction {0:.4} exceeds 1%, aborting ensemble")]
    ExcessiveNotCrossed(f64),
    #[error("ordinate does not drift to -infinity (estimated rate {0:.4}); conditioning undefined")]
    NonNegativeDrift(f64),
    #[error("rejection acceptance rate {0:.2e} below 1e-3; lower the starting level")]
    RejectionTooSlow(f64),
    #[error("zero radius encountered before lifetime at sample {0}")]
    ZeroRadius(usize),
    #[error("path never exits radius {0}")]
    NeverExits(f64),
    #[error("step size underflow near the apex at {0:?}")]
    StepUnderflow((f64, f64)),
    #[error("gamma function pole at non-admissible argument {0}")]
    GammaPole(f64),
    #[error("unsupported dimension d = {0} (simulation requires d = 2)")]
    UnsupportedDimension(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
