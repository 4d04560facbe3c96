//! Iterated re-estimation of P0, Q and R alongside the parameters, the two
//! adaptive alternatives, and the J1–J8 cost suite.

mod adaptive;
mod costs;
mod noise;
mod recipe;

use std::fmt;
use std::str::FromStr;

pub use adaptive::{default_window, ms_estimate, mt_estimate, AdaptiveEstimate};
pub use costs::{compute_costs, CostVector, COST_NAMES};
pub use noise::{
    estimate_q_smoothed, estimate_r_smoothed, process_noise_samples, seed_r, update_p0,
    NoiseEstimate, ProcessNoiseOptions, NOISE_FLOOR,
};
pub use recipe::{
    estimate, reference_recipe, replay, run_recipe, Extrapolation, IterationRecord, NoiseStatistics, ParamPrior,
    RecipeConfig, RecipeOutcome,
};

use crate::error::Error;

/// Which rule refreshes Q and R between passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Smoothed residues and smoothed process-noise samples.
    Reference,
    /// Windowed innovation covariance matching.
    Mt,
    /// Steady-state innovation rule.
    Ms,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Reference, Method::Mt, Method::Ms];

    pub fn label(self) -> &'static str {
        match self {
            Method::Reference => "Ref",
            Method::Mt => "MT",
            Method::Ms => "MS",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ref" | "reference" => Ok(Method::Reference),
            "mt" => Ok(Method::Mt),
            "ms" => Ok(Method::Ms),
            _ => Err(Error::Config(format!("unknown method `{s}` (expected ref, mt or ms)"))),
        }
    }
}
