use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} returned a non-finite value at t = {t}, w = {w}")]
    NonFinite { what: String, t: f64, w: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature on [{a}, {b}] did not reach tolerance within {panels} panels (error estimate {estimate:e})")]
    Tolerance {
        a: f64,
        b: f64,
        panels: usize,
        estimate: f64,
    },

    #[error("integrand is negative ({value}) at t = {t}")]
    NegativeIntegrand { t: f64, value: f64 },

    #[error("phi vanishes inside the requested segment near t = {0}")]
    ZeroInSegment(f64),

    #[error("segments [{a0}, {b0}] and [{a1}, {b1}] do not coincide")]
    SegmentMismatch { a0: f64, b0: f64, a1: f64, b1: f64 },

    #[error("output failed: {0}")]
    Output(String),

    #[error("integration exceeded the step budget of {0} steps")]
    StepBudget(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
