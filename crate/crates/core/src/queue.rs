//! The modulated infinite-server queue, simulated two ways.
//!
//! [`simulate_direct`] builds the system job by job: arrivals are a unit-rate
//! Poisson process run through the inverse of `Λ(t) = ∫_0^t λ(J(s)) ds`, each
//! job draws an exponential requirement with the rate in force at its
//! arrival, and it is gone by `t` once the server has done that much work.
//! [`simulate_conditional`] only evaluates `φ_t(J)` and draws a Poisson count
//! with that mean. Both consume the same class of background paths, so
//! agreement of their laws is a direct check of the mixed-Poisson
//! representation of `M(t)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::background::{sample_path, BackgroundError, BackgroundSpec};
use crate::modulation::{phi, Modulation, ModulationError};
use crate::paths::StepPath;
use crate::rng::{Purpose, StreamFactory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("Poisson mean {0} must be finite and non-negative")]
    InvalidMean(f64),
    #[error("no samples")]
    EmptySamples,
    #[error("time {0} must be non-negative")]
    NegativeTime(f64),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
}

/// One job of the direct simulation, measured in work units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub arrival: f64,
    /// `Z̄ / κ(J(τ))`, infinite when `κ(J(τ)) = 0`.
    pub requirement: f64,
    /// Work received by the observation time, capped at the requirement.
    pub processed: f64,
}

impl Job {
    pub fn present(&self) -> bool {
        self.processed < self.requirement
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Direct,
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// `M(t)`.
    pub count: u64,
    /// `φ_t(J)` of the sampled path, conditional mode only.
    pub phi_value: Option<f64>,
    pub path: Option<StepPath>,
}

/// All jobs arriving in `[0, t]` on a fixed background path.
pub fn arrival_jobs<R: Rng + ?Sized>(
    path: &StepPath,
    modulation: &Modulation,
    t: f64,
    rng: &mut R,
) -> Result<Vec<Job>, QueueError> {
    if t < 0.0 {
        return Err(QueueError::NegativeTime(t));
    }
    // validates the path against the modulation
    phi(path, modulation, 0.0)?;
    let segments = path.segment_vec(t).map_err(ModulationError::from)?;

    // tail[i] = ∫_{end_i}^t μ(J(r)) dr
    let mut tail = vec![0.0; segments.len()];
    let mut acc = 0.0;
    for (i, seg) in segments.iter().enumerate().rev() {
        tail[i] = acc;
        acc += modulation.mu().eval(seg.state) * seg.len();
    }

    let mut jobs = Vec::new();
    let mut epoch: f64 = Exp1.sample(rng);
    let mut cumulative = 0.0;
    for (seg, &after) in segments.iter().zip(&tail) {
        let r = modulation.rates(seg.state);
        if r.lambda <= 0.0 {
            continue;
        }
        let end = cumulative + r.lambda * seg.len();
        while epoch < end {
            let arrival = (seg.start + (epoch - cumulative) / r.lambda).min(seg.end);
            let base: f64 = Exp1.sample(rng);
            let requirement = if r.kappa > 0.0 { base / r.kappa } else { f64::INFINITY };
            let work = after + r.mu * (seg.end - arrival);
            jobs.push(Job { arrival, requirement, processed: work.min(requirement) });
            let gap: f64 = Exp1.sample(rng);
            epoch += gap;
        }
        cumulative = end;
    }
    Ok(jobs)
}

/// `M(t)` built from individual jobs.
pub fn simulate_direct<R: Rng + ?Sized>(
    spec: &BackgroundSpec,
    modulation: &Modulation,
    t: f64,
    rng: &mut R,
) -> Result<SimResult, QueueError> {
    if t < 0.0 {
        return Err(QueueError::NegativeTime(t));
    }
    let path = sample_path(spec, t, rng)?;
    let jobs = arrival_jobs(&path, modulation, t, rng)?;
    let count = jobs.iter().filter(|j| j.present()).count() as u64;
    Ok(SimResult { count, phi_value: None, path: Some(path) })
}

/// `M(t)` drawn as Poisson(`φ_t(J)`).
pub fn simulate_conditional<R: Rng + ?Sized>(
    spec: &BackgroundSpec,
    modulation: &Modulation,
    t: f64,
    rng: &mut R,
) -> Result<SimResult, QueueError> {
    if t < 0.0 {
        return Err(QueueError::NegativeTime(t));
    }
    let path = sample_path(spec, t, rng)?;
    let gamma = phi(&path, modulation, t)?;
    let count = poisson_sample(gamma, rng)?;
    Ok(SimResult { count, phi_value: Some(gamma), path: Some(path) })
}

/// Runs `replicas` independent simulations, replica `r` on its own derived stream.
/// The output order is the replica order whatever the thread count.
pub fn simulate_replicas(
    spec: &BackgroundSpec,
    modulation: &Modulation,
    t: f64,
    mode: SimMode,
    replicas: u64,
    streams: &StreamFactory,
) -> Result<Vec<SimResult>, QueueError> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut result = match mode {
                SimMode::Direct => simulate_direct(spec, modulation, t, &mut streams.stream(Purpose::Direct, r)),
                SimMode::Conditional => {
                    simulate_conditional(spec, modulation, t, &mut streams.stream(Purpose::Conditional, r))
                }
            }?;
            result.path = None;
            Ok(result)
        })
        .collect()
}

pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64, QueueError> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(QueueError::InvalidMean(mean));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|_| QueueError::InvalidMean(mean))?;
    Ok(dist.sample(rng) as u64)
}

/// Probability mass function on the non-negative integers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pmf(BTreeMap<u64, f64>);

impl Pmf {
    pub fn get(&self, k: u64) -> f64 {
        self.0.get(&k).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.0.iter().map(|(&k, &p)| (k, p))
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn from_map(map: BTreeMap<u64, f64>) -> Self {
        Pmf(map)
    }
}

pub fn empirical_pmf(samples: &[u64]) -> Result<Pmf, QueueError> {
    if samples.is_empty() {
        return Err(QueueError::EmptySamples);
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let n = samples.len() as f64;
    Ok(Pmf(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()))
}

/// `½ Σ_k |p_k - q_k|` over the union of supports.
pub fn tv_distance(p: &Pmf, q: &Pmf) -> f64 {
    let mut keys: Vec<u64> = p.0.keys().chain(q.0.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    0.5 * keys.iter().map(|&k| (p.get(k) - q.get(k)).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi_square_p(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    dist.sf(statistic)
}

/// Two-sample chi-square test of homogeneity. Adjacent counts are pooled until
/// each bin holds at least ten observations from the two samples together.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareTest, QueueError> {
    if a.is_empty() || b.is_empty() {
        return Err(QueueError::EmptySamples);
    }
    let mut table: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &k in a {
        table.entry(k).or_default().0 += 1.0;
    }
    for &k in b {
        table.entry(k).or_default().1 += 1.0;
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut open = (0.0, 0.0);
    for (_, (x, y)) in table {
        open.0 += x;
        open.1 += y;
        if open.0 + open.1 >= 10.0 {
            bins.push(open);
            open = (0.0, 0.0);
        }
    }
    if open.0 + open.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += open.0;
                last.1 += open.1;
            }
            None => bins.push(open),
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let statistic = bins
        .iter()
        .map(|&(x, y)| {
            let row = x + y;
            let (ea, eb) = (row * na / n, row * nb / n);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    let dof = bins.len().saturating_sub(1);
    Ok(ChiSquareTest { statistic, dof, p_value: chi_square_p(statistic, dof) })
}

/// Chi-square goodness of fit of integer samples against a reference pmf.
/// Bins are pooled until each expects at least five observations; the last
/// bin absorbs the whole upper tail.
pub fn chi_square_gof(samples: &[u64], pmf: impl Fn(u64) -> f64) -> Result<ChiSquareTest, QueueError> {
    if samples.is_empty() {
        return Err(QueueError::EmptySamples);
    }
    let n = samples.len() as f64;
    let max = *samples.iter().max().unwrap();
    let mut observed: BTreeMap<u64, f64> = BTreeMap::new();
    for &k in samples {
        *observed.entry(k).or_default() += 1.0;
    }
    // (expected, observed) per pooled bin
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut open = (0.0, 0.0);
    let mut mass = 0.0;
    let mut k = 0u64;
    while k <= max && 1.0 - mass > 1e-15 {
        let p = pmf(k);
        mass += p;
        open.0 += p * n;
        open.1 += observed.get(&k).copied().unwrap_or(0.0);
        if open.0 >= 5.0 {
            bins.push(open);
            open = (0.0, 0.0);
        }
        k += 1;
    }
    // remaining tail mass and observations
    open.0 += (1.0 - mass).max(0.0) * n;
    open.1 += observed.range(k..).map(|(_, c)| c).sum::<f64>();
    if open.0 > 0.0 || open.1 > 0.0 {
        match bins.last_mut() {
            Some(last) if open.0 < 5.0 => {
                last.0 += open.0;
                last.1 += open.1;
            }
            _ => bins.push(open),
        }
    }
    let statistic = bins
        .iter()
        .map(|&(e, o)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = bins.len().saturating_sub(1);
    Ok(ChiSquareTest { statistic, dof, p_value: chi_square_p(statistic, dof) })
}

/// Poisson pmf evaluated in log space.
pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    crate::ldp::poisson_log_pmf(mean, k).exp()
}
