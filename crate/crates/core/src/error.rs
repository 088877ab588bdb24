// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::analysis::RabiFit;
use crate::model::Frame;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "integrator step {step} too large: fastest term has f_max = {f_max} cycles per unit time, \
         step must be <= {required}"
    )]
    StepTooLarge { step: f64, f_max: f64, required: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("analytic {frame:?} Hamiltonian unavailable: {reason}")]
    FrameUnavailable { frame: Frame, reason: String },

    #[error("fit did not converge after {iterations} iterations (residual norm {residual})")]
    FitNonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<RabiFit>,
    },

    #[error("{what}: target {target} not bracketed, achievable range [{low}, {high}]")]
    NotBracketed {
        what: String,
        target: f64,
        low: f64,
        high: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
