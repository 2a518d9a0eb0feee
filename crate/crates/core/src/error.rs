use thiserror::Error;

/// Errors raised by the kernel, simulation, imputation and identification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel order {0} has no closed form (supported: 1, 2)")]
    UnsupportedOrder(u32),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {tol:e}: estimate {estimate} (error bound {error:e})")]
    QuadratureNotConverged { estimate: f64, error: f64, tol: f64 },

    #[error("unstable coefficients: {0}")]
    Unstable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("predictor is unstable: C(z) has a root of modulus {modulus}")]
    PredictorUnstable { modulus: f64 },

    #[error("kernel matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("coefficient of determination undefined: reference vector is constant")]
    UndefinedCod,

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 usage, 2 data/parse, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedOrder(_) | Error::Domain(_) => 1,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::InsufficientData(_)
            | Error::UndefinedCod => 2,
            Error::QuadratureNotConverged { .. }
            | Error::Unstable(_)
            | Error::GenerationFailed { .. }
            | Error::PredictorUnstable { .. }
            | Error::IllConditioned { .. }
            | Error::OptimizationFailed(_) => 3,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        self.exit_code() == 3
    }
}

pub type Result<T> = std::result::Result<T, Error>;
