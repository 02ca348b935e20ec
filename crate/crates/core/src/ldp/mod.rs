//! Large-deviations numerics for `M_n(t) / n`.
//!
//! Under the scaling `λ ↦ nλ`, `J ↦ J_n`, the count `M_n(t)` is Poisson with
//! random mean `n φ_t(J_n)`. The rate function is
//! `I(a) = inf_{γ ∈ R(t)} [ell(γ; a) + ψ(γ)]`, where `ell` is the Poisson
//! transform below, `R(t)` the attainable parameters and `ψ` the rate
//! function of `φ_t(J_n)`.

use thiserror::Error;

use crate::background::BackgroundError;
use crate::modulation::ModulationError;
use crate::paths::PathError;

mod attainable;
mod hybrid;
mod poisson;
mod rate;
mod schilder;

pub use attainable::{
    attainable_bounds_dp, attainable_bounds_oracle, dp_bounds, quantize, truncated_upper_bounds, DpLevel, DpReport,
    TruncationReport, DEFAULT_ORACLE_BUDGET,
};
pub use hybrid::{hybrid_ldp_estimate, HybridEstimate};
pub use poisson::{poisson_log_pmf, poisson_tail_log, IntegerSet, RealSet};
pub use rate::{rate_i_general, rate_i_unscaled, PsiSpec, RateFunctionModel};
pub use schilder::{pl_energy, pl_phi, schilder_psi, schilder_refine, SchilderOptions, SchilderSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error("γ = {0} must be non-negative")]
    NegativeGamma(f64),
    #[error("Poisson mean {0} must be finite and non-negative")]
    InvalidMean(f64),
    #[error("invalid set {0}")]
    InvalidSet(String),
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("{0} requires a finite state space")]
    InfiniteStateSpace(&'static str),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("enumeration needs {needed} paths, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("invalid ψ table: {0}")]
    InvalidPsi(String),
    #[error("ψ is infinite everywhere")]
    EmptyPsiDomain,
    #[error("constraint φ = {target} violated by {residual:e} at final penalty weight")]
    ConstraintViolation { target: f64, residual: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// The Poisson transform `ell(γ; a) = sup_θ [θa - γ(e^θ - 1)]`.
pub fn ell(gamma: f64, a: f64) -> Result<f64, LdpError> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(LdpError::NegativeGamma(gamma));
    }
    Ok(if a.is_nan() {
        f64::NAN
    } else if a < 0.0 {
        f64::INFINITY
    } else if a == 0.0 {
        gamma
    } else if gamma == 0.0 || gamma.is_infinite() {
        f64::INFINITY
    } else {
        poisson::bd0(a, gamma)
    })
}

/// The attainable set `R(t) = [a_-, a_+]`, with `a_+ = ∞` allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttainableInterval {
    a_minus: f64,
    a_plus: f64,
}

impl AttainableInterval {
    pub fn new(a_minus: f64, a_plus: f64) -> Result<Self, LdpError> {
        if !(a_minus.is_finite() && a_minus >= 0.0 && a_plus >= a_minus) || a_plus.is_nan() {
            return Err(LdpError::InvalidInterval(a_minus, a_plus));
        }
        Ok(AttainableInterval { a_minus, a_plus })
    }

    pub fn a_minus(&self) -> f64 {
        self.a_minus
    }

    pub fn a_plus(&self) -> f64 {
        self.a_plus
    }

    pub fn is_bounded(&self) -> bool {
        self.a_plus.is_finite()
    }

    pub fn contains(&self, a: f64) -> bool {
        self.a_minus <= a && a <= self.a_plus
    }
}
