//! The modulation triple `(λ, κ, μ)` and the random Poisson parameter `φ_t`.
//!
//! For a background path `f`, the number of jobs present at time `t` is
//! Poisson with mean
//!
//! ```text
//! φ_t(f) = ∫_0^t λ(f(s)) exp(-κ(f(s)) ∫_s^t μ(f(r)) dr) ds
//! ```
//!
//! On a step path this integral has a closed form per constant segment,
//! evaluated here by one backward pass over the segments.

use std::fmt;

use thiserror::Error;

use crate::paths::{PathError, StateSpace, StepPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulationError {
    #[error("{name}: {reason}")]
    InvalidRateMap { name: &'static str, reason: String },
    #[error("path lives on {path} but the modulation is defined on {modulation}")]
    SpaceMismatch { path: String, modulation: String },
    #[error("time {0} must be non-negative")]
    NegativeTime(f64),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// A non-negative continuous rate function on a state space.
#[derive(Debug, Clone, PartialEq)]
pub enum RateMap {
    Constant(f64),
    /// One value per state of a finite space, indexed by label position.
    Table(Vec<f64>),
    /// `offset + slope * x`.
    Affine { offset: f64, slope: f64 },
    Identity,
    /// `1 - x`.
    OneMinus,
    /// `scale * max(x, 0)`.
    Ramp(f64),
}

impl RateMap {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RateMap::Constant(c) => *c,
            RateMap::Table(values) => values[x as usize],
            RateMap::Affine { offset, slope } => offset + slope * x,
            RateMap::Identity => x,
            RateMap::OneMinus => 1.0 - x,
            RateMap::Ramp(c) => c * x.max(0.0),
        }
    }

    /// `c · self`, staying inside the closed set of forms.
    pub fn scaled(&self, c: f64) -> RateMap {
        match self {
            RateMap::Constant(v) => RateMap::Constant(c * v),
            RateMap::Table(values) => RateMap::Table(values.iter().map(|v| c * v).collect()),
            RateMap::Affine { offset, slope } => RateMap::Affine { offset: c * offset, slope: c * slope },
            RateMap::Identity => RateMap::Affine { offset: 0.0, slope: c },
            RateMap::OneMinus => RateMap::Affine { offset: c, slope: -c },
            RateMap::Ramp(v) => RateMap::Ramp(c * v),
        }
    }

    /// Checks non-negativity over the whole space: tables entrywise, linear
    /// forms at the endpoints of the space.
    pub fn validate(&self, name: &'static str, space: &StateSpace) -> Result<(), ModulationError> {
        let fail = |reason: String| Err(ModulationError::InvalidRateMap { name, reason });
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match (self, space) {
            (RateMap::Constant(c), _) => {
                if !nonneg(*c) {
                    return fail(format!("constant {c} must be finite and non-negative"));
                }
            }
            (RateMap::Table(values), StateSpace::Finite { labels }) => {
                if values.len() != labels.len() {
                    return fail(format!("table has {} entries but the space has {} states", values.len(), labels.len()));
                }
                if let Some(v) = values.iter().find(|v| !nonneg(**v)) {
                    return fail(format!("table entry {v} must be finite and non-negative"));
                }
            }
            (RateMap::Table(_), other) => return fail(format!("table maps need a finite space, not {other}")),
            (RateMap::Ramp(c), _) => {
                if !nonneg(*c) {
                    return fail(format!("ramp scale {c} must be finite and non-negative"));
                }
            }
            (linear, space) => {
                let (offset, slope) = linear.linear_coefficients().expect("remaining forms are linear");
                if !(offset.is_finite() && slope.is_finite()) {
                    return fail("coefficients must be finite".into());
                }
                let ok = match space {
                    StateSpace::Finite { labels } => (0..labels.len()).all(|i| nonneg(offset + slope * i as f64)),
                    StateSpace::NonNegInt => offset >= 0.0 && slope >= 0.0,
                    StateSpace::Interval { lo, hi } => nonneg(offset + slope * lo) && nonneg(offset + slope * hi),
                    StateSpace::Real => offset >= 0.0 && slope == 0.0,
                };
                if !ok {
                    return fail(format!("{linear} takes negative values on {space}"));
                }
            }
        }
        Ok(())
    }

    fn linear_coefficients(&self) -> Option<(f64, f64)> {
        match self {
            RateMap::Affine { offset, slope } => Some((*offset, *slope)),
            RateMap::Identity => Some((0.0, 1.0)),
            RateMap::OneMinus => Some((1.0, -1.0)),
            _ => None,
        }
    }

    /// Largest value over a finite or compact space, `None` when unbounded.
    pub fn max_over(&self, space: &StateSpace) -> Option<f64> {
        match (self, space) {
            (RateMap::Constant(c), _) => Some(*c),
            (RateMap::Table(v), _) => v.iter().copied().reduce(f64::max),
            (_, StateSpace::Finite { labels }) => (0..labels.len()).map(|i| self.eval(i as f64)).reduce(f64::max),
            (_, StateSpace::Interval { lo, hi }) => Some(self.eval(*lo).max(self.eval(*hi))),
            (map, StateSpace::NonNegInt) => match map.linear_coefficients() {
                Some((offset, slope)) if slope == 0.0 => Some(offset),
                _ => None,
            },
            (map, StateSpace::Real) => match map.linear_coefficients() {
                Some((offset, slope)) if slope == 0.0 => Some(offset),
                _ => None,
            },
        }
    }
}

impl fmt::Display for RateMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateMap::Constant(c) => write!(f, "constant {c}"),
            RateMap::Table(values) => {
                let items: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "table [{}]", items.join(", "))
            }
            RateMap::Affine { offset, slope } => write!(f, "affine {offset} {slope}"),
            RateMap::Identity => write!(f, "identity"),
            RateMap::OneMinus => write!(f, "one-minus"),
            RateMap::Ramp(c) => write!(f, "ramp {c}"),
        }
    }
}

/// Arrival intensity `λ`, service-requirement rate `κ` and server work rate `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    lambda: RateMap,
    kappa: RateMap,
    mu: RateMap,
    space: StateSpace,
}

/// Rates evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda: f64,
    pub kappa: f64,
    pub mu: f64,
}

impl Modulation {
    pub fn new(lambda: RateMap, kappa: RateMap, mu: RateMap, space: StateSpace) -> Result<Self, ModulationError> {
        lambda.validate("lambda", &space)?;
        kappa.validate("kappa", &space)?;
        mu.validate("mu", &space)?;
        Ok(Modulation { lambda, kappa, mu, space })
    }

    pub fn lambda(&self) -> &RateMap {
        &self.lambda
    }

    pub fn kappa(&self) -> &RateMap {
        &self.kappa
    }

    pub fn mu(&self) -> &RateMap {
        &self.mu
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn rates(&self, x: f64) -> Rates {
        Rates { lambda: self.lambda.eval(x), kappa: self.kappa.eval(x), mu: self.mu.eval(x) }
    }

    /// The same queue with arrivals sped up, `λ ↦ c λ`.
    pub fn with_arrivals_scaled(&self, c: f64) -> Result<Modulation, ModulationError> {
        Modulation::new(self.lambda.scaled(c), self.kappa.clone(), self.mu.clone(), self.space.clone())
    }

    /// The same rate maps on another space (e.g. a truncated or quantized one).
    pub fn on_space(&self, space: StateSpace) -> Result<Modulation, ModulationError> {
        Modulation::new(self.lambda.clone(), self.kappa.clone(), self.mu.clone(), space)
    }

    pub(crate) fn check_path(&self, path: &StepPath) -> Result<(), ModulationError> {
        let compatible = match (&self.space, path.space()) {
            (a, b) if a == b => true,
            // a finite-space path is indexed by label position, only the size must agree
            (StateSpace::Finite { labels: a }, StateSpace::Finite { labels: b }) => a.len() == b.len(),
            (StateSpace::Real, _) => !path.space().is_finite(),
            (StateSpace::Interval { lo, hi }, StateSpace::Interval { lo: l2, hi: h2 }) => lo <= l2 && h2 <= hi,
            _ => false,
        };
        if compatible {
            Ok(())
        } else {
            Err(ModulationError::SpaceMismatch { path: path.space().to_string(), modulation: self.space.to_string() })
        }
    }
}

/// `(1 - e^{-z}) / z`, continuous at `z = 0`.
pub(crate) fn relaxation_factor(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else if z < 1e-8 {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Contribution of a constant segment of length `len` in state with rates `r`,
/// given the work `tail` still to be done after the segment ends.
#[inline]
pub(crate) fn segment_contribution(r: Rates, len: f64, tail: f64) -> f64 {
    if r.lambda == 0.0 {
        return 0.0;
    }
    r.lambda * (-r.kappa * tail).exp() * len * relaxation_factor(r.kappa * r.mu * len)
}

/// Evaluates `φ_t` on a step path by backward accumulation of the tail work integral.
pub fn phi(path: &StepPath, modulation: &Modulation, t: f64) -> Result<f64, ModulationError> {
    if t < 0.0 {
        return Err(ModulationError::NegativeTime(t));
    }
    modulation.check_path(path)?;
    let segments = path.segment_vec(t)?;
    let mut tail = 0.0;
    let mut total = 0.0;
    for seg in segments.iter().rev() {
        let r = modulation.rates(seg.state);
        total += segment_contribution(r, seg.len(), tail);
        tail += r.mu * seg.len();
    }
    Ok(total)
}

/// `φ_s` for every `s` in an increasing grid.
pub fn phi_profile(path: &StepPath, modulation: &Modulation, grid: &[f64]) -> Result<Vec<f64>, ModulationError> {
    grid.iter().map(|&s| phi(path, modulation, s)).collect()
}

/// `Λ(t) = ∫_0^t λ(f(s)) ds`.
pub fn cumulative_arrival_rate(path: &StepPath, modulation: &Modulation, t: f64) -> Result<f64, ModulationError> {
    modulation.check_path(path)?;
    Ok(path.segments(t)?.map(|s| modulation.lambda.eval(s.state) * s.len()).sum())
}
