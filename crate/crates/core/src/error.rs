use std::fmt;

use thiserror::Error;

/// Hard failures raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported Bessel order {0} (|order| must be <= 64)")]
    UnsupportedOrder(i32),
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("ill-posed problem: {0}")]
    IllPosed(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Soft diagnostics. They never abort a computation but travel with results
/// so callers can decide whether to trust them.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Doubling a grid dimension moved the result by more than 1%.
    GridConvergence { what: String, relative_change: f64 },
    /// The highest retained harmonic is not negligible.
    Truncation { order: i32, relative_weight: f64 },
    /// |O^M| / |O^0| above 1e-3 for the top harmonic of an angular table.
    Aliasing { q: f64, ratio: f64 },
    /// Forward matrix is numerically rank deficient.
    Rank { rank: usize, expected: usize },
    /// Cauchy-Schwarz bound |Φc| <= sqrt(Φs_i Φs_j) violated beyond tolerance.
    CauchySchwarz { excess: f64 },
    /// Harmonic sum of a real observable kept an imaginary part.
    ImaginaryResidual { ratio: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::GridConvergence { what, relative_change } => {
                write!(f, "grid convergence: doubling {what} changed the result by {:.3}%", 100.0 * relative_change)
            }
            Warning::Truncation { order, relative_weight } => {
                write!(f, "truncation: harmonic {order} carries {relative_weight:.3e} of the total")
            }
            Warning::Aliasing { q, ratio } => {
                write!(f, "aliasing: |O^M/O^0| = {ratio:.3e} at q = {q:.4e}")
            }
            Warning::Rank { rank, expected } => {
                write!(f, "rank deficiency: numerical rank {rank} < {expected}")
            }
            Warning::CauchySchwarz { excess } => {
                write!(f, "Cauchy-Schwarz bound exceeded by {excess:.3e}")
            }
            Warning::ImaginaryResidual { ratio } => {
                write!(f, "imaginary residual {ratio:.3e} of the magnitude discarded")
            }
        }
    }
}

/// Accumulates warnings and mirrors them to the `log` facade.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub warnings: Vec<Warning>,
}

impl Diagnostics {
    pub fn push(&mut self, w: Warning) {
        log::warn!("{w}");
        self.warnings.push(w);
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.warnings.extend(other.warnings);
    }

    pub fn is_empty(&self) -> bool {
        self.warnings.is_empty()
    }
}
