use thiserror::Error;

#[derive(Debug, Error)]
pub enum MorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("A is not Hurwitz (max real part {0:.3e})")]
    NotHurwitz(f64),
    #[error("not generalized-stable at gamma={gamma} (max real part {max_real:.3e})")]
    NotGeneralizedStable { gamma: f64, max_real: f64 },
    #[error("problem too large for direct method (n={n}, cap={cap})")]
    TooLarge { n: usize, cap: usize },
    #[error("singular operator")]
    SingularOperator,
    #[error("not stabilizable in range [{lo}, {hi}]")]
    NotStabilizable { lo: f64, hi: f64 },
    #[error("LMI infeasible at tolerance (max eigenvalue {0:.3e})")]
    LmiInfeasible(f64),
    #[error("matrix not PSD (min eigenvalue {min:.3e}, max {max:.3e})")]
    NotPsd { min: f64, max: f64 },
    #[error("PB not positive definite (min eigenvalue {0:.3e})")]
    NotPd(f64),
    #[error("Gramian numerically singular, balancing undefined (rank {rank} of {n})")]
    SingularGramian { rank: usize, n: usize },
    #[error("A22 singular")]
    A22Singular,
    #[error("SPA reduced Gramian unavailable: {0}")]
    SpaGramianUnavailable(String),
    #[error("trace negative beyond tolerance ({0:.3e})")]
    NegativeTrace(f64),
    #[error("gamma mismatch ({0} vs {1})")]
    GammaMismatch(f64, f64),
    #[error("integration diverged at t={0}")]
    Diverged(f64),
    #[error("grid mismatch")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl MorError {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            MorError::Dimension(_)
                | MorError::InvalidArgument(_)
                | MorError::Io(_)
                | MorError::Parse(_)
                | MorError::GammaMismatch(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, MorError>;
