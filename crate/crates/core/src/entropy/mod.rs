//! Topological entropy by lap growth, transfer-operator iteration and exact
//! Perron roots, with horseshoe lower bounds.

mod horseshoe;
mod laps;
mod markov;
mod transfer;

use serde::Serialize;
use thiserror::Error;

use crate::map::MapError;
use crate::rational::Rational;

pub use horseshoe::{horseshoe_lower_bound, horseshoe_search, Horseshoe};
pub use laps::{entropy_lap, lap_counts, LapCounts};
pub use markov::{markov_detect, perron_root, MarkovData};
pub use transfer::entropy_transfer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EntropyMethod {
    LapCount,
    Transfer,
    MarkovExact,
    Horseshoe,
}

/// An entropy value in natural-log units with a bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub method: EntropyMethod,
    pub depth: usize,
    pub converged: bool,
    /// Exact bracket on `exp(h)` when one is known.
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "ser_bracket")]
    pub lambda_bracket: Option<(Rational, Rational)>,
}

fn ser_bracket<S: serde::Serializer>(b: &Option<(Rational, Rational)>, s: S) -> Result<S::Ok, S::Error> {
    use crate::rational::format_rational;
    match b {
        Some((lo, hi)) => [format_rational(lo), format_rational(hi)].serialize(s),
        None => s.serialize_none(),
    }
}

impl EntropyEstimate {
    /// `exp(value)`.
    pub fn lambda(&self) -> f64 {
        self.value.exp()
    }

    pub fn width(&self) -> f64 {
        self.upper_bound - self.lower_bound
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntropyError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("interval budget exceeded after {} iterates", .prefix.len())]
    LapBudget { prefix: Vec<u128> },
    #[error("matrix must be square and nonempty")]
    BadMatrix,
}
