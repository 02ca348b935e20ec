//! Empirical large-deviations slopes.
//!
//! Given the background path, `M_n(t)` is exactly Poisson with mean
//! `n φ_t(J_n)`, so `P(M_n(t)/n ∈ F) = E[P(Poisson(n γ) ∈ nF)]` with
//! `γ = φ_t(J_n)`. Only `γ` is sampled; the rare-event factor is evaluated
//! exactly in log space and averaged by a log-sum-exp.

use rayon::prelude::*;

use crate::background::{sample_path, BackgroundSpec};
use crate::modulation::{phi, Modulation};
use crate::rng::{Purpose, StreamFactory};

use super::{poisson_tail_log, LdpError, RealSet};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridEstimate {
    pub n: u64,
    /// `log p̂`, `-∞` when every replica has probability zero.
    pub log_p_hat: f64,
    /// `-log p̂ / n`, `+∞` when `p̂ = 0`.
    pub slope: f64,
    pub replicas: u64,
}

impl HybridEstimate {
    pub fn p_hat(&self) -> f64 {
        self.log_p_hat.exp()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Estimates `P(M_n(t)/n ∈ F)` from `replicas` background paths of the
/// `n`-scaled spec. Replica `r` uses its own stream, and the terms are
/// reduced in replica order, so the result does not depend on the thread count.
pub fn hybrid_ldp_estimate(
    spec: &BackgroundSpec,
    modulation: &Modulation,
    t: f64,
    n: u64,
    set: RealSet,
    replicas: u64,
    streams: &StreamFactory,
) -> Result<HybridEstimate, LdpError> {
    if n < 1 || replicas < 1 {
        return Err(LdpError::BadParameter("need n >= 1 and at least one replica".into()));
    }
    set.validate()?;
    spec.validate()?;
    let scaled = spec.with_scale(n);
    let integers = set.scaled_integers(n as f64);
    let terms = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(Purpose::Hybrid, r);
            let path = sample_path(&scaled, t, &mut rng)?;
            let gamma = phi(&path, modulation, t)?;
            poisson_tail_log(n as f64 * gamma, integers)
        })
        .collect::<Result<Vec<f64>, LdpError>>()?;
    let log_p_hat = log_sum_exp(&terms) - (replicas as f64).ln();
    let slope = if log_p_hat == f64::NEG_INFINITY { f64::INFINITY } else { -log_p_hat / n as f64 };
    Ok(HybridEstimate { n, log_p_hat, slope, replicas })
}
