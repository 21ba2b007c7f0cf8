use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("system materializes only {available} modes, {requested} requested")]
    Capacity { requested: usize, available: usize },

    #[error("{what} must lie in {domain}, got {value}")]
    Domain {
        what: &'static str,
        domain: &'static str,
        value: f64,
    },

    #[error("numerical integration did not resolve the sampler weight: residual {residual:.3e} > {tol:.3e}")]
    Integration { residual: f64, tol: f64 },

    #[error("feedthrough series not within tolerance after {cap} modes (partial sum norm {partial:.6e})")]
    SeriesTruncation { cap: usize, partial: f64 },

    #[error("no convergence up to order {n_max}: last values {previous:.10e} -> {last:.10e}")]
    NonConvergence {
        n_max: usize,
        previous: f64,
        last: f64,
    },

    #[error("scaled spectral radius {scaled_radius:.6} >= 1, rho0 = {rho0} is too small")]
    Infeasible { rho0: f64, scaled_radius: f64 },

    #[error(
        "matrix powers did not decay within {k_max} steps (last norm {last:.3e}, max {max:.3e})"
    )]
    NonDecay { k_max: usize, last: f64, max: f64 },

    #[error("eigenvalue computation failed for a {0}x{0} matrix")]
    Eigen(usize),

    #[error("signal {signal} has imaginary part {imag:.3e}; closed-loop signals must be real")]
    ComplexSignal { signal: &'static str, imag: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integration { .. }
                | Error::SeriesTruncation { .. }
                | Error::NonConvergence { .. }
                | Error::NonDecay { .. }
                | Error::Eigen(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
