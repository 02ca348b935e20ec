//! The attainable interval `R(t) = [inf φ_t, sup φ_t]` for finite state spaces.
//!
//! Reading time backwards from `t`, `u = t - s`, the tail work
//! `R(u) = ∫_{t-u}^t μ(f(r)) dr` evolves as `dR/du = μ(x)` and a path earns
//! `λ(x) e^{-κ(x) R}` per unit of `u`. Extremizing the total over controls
//! `x(u) ∈ E` is a deterministic optimal control problem, solved here by
//! value iteration on a `(u, R)` grid. Within a time step the control is held
//! constant and the reward is integrated exactly, so the only errors are the
//! time-grid restriction on switching and linear interpolation in `R`.

use crate::modulation::{segment_contribution, Modulation, Rates, RateMap};
use crate::paths::StateSpace;

use super::{AttainableInterval, LdpError};

pub const DEFAULT_ORACLE_BUDGET: u128 = 10_000_000;

fn finite_rates(modulation: &Modulation, what: &'static str) -> Result<Vec<Rates>, LdpError> {
    let d = modulation.space().size().ok_or(LdpError::InfiniteStateSpace(what))?;
    Ok((0..d).map(|j| modulation.rates(j as f64)).collect())
}

fn check_horizon(t: f64) -> Result<(), LdpError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(LdpError::BadParameter(format!("horizon {t} must be finite and non-negative")))
    }
}

/// One value-iteration sweep with `m` time steps and `p` tail-work nodes.
/// Returns `(min, max)` of `φ_t` over paths constant on each time step.
pub fn dp_bounds(modulation: &Modulation, t: f64, m: usize, p: usize) -> Result<(f64, f64), LdpError> {
    let rates = finite_rates(modulation, "dynamic programming")?;
    check_horizon(t)?;
    if m < 2 || p < 2 {
        return Err(LdpError::InvalidGrid(format!("need m, p >= 2, got m = {m}, p = {p}")));
    }
    if t == 0.0 {
        return Ok((0.0, 0.0));
    }
    let du = t / m as f64;
    let mu_max = rates.iter().map(|r| r.mu).fold(0.0, f64::max);
    let r_max = if mu_max > 0.0 { mu_max * t } else { 1.0 };
    let h = r_max / (p - 1) as f64;

    struct Control {
        // reward over one step starting at R = i h is gain * decay[i]
        gain: f64,
        decay: Vec<f64>,
        // R + μ du = (i + shift + frac) h
        shift: usize,
        frac: f64,
    }
    let controls: Vec<Control> = rates
        .iter()
        .map(|&r| {
            let gain = segment_contribution(r, du, 0.0);
            let decay = (0..p).map(|i| (-r.kappa * i as f64 * h).exp()).collect();
            let pos = r.mu * du / h;
            let shift = pos.floor();
            Control { gain, decay, shift: shift as usize, frac: pos - shift }
        })
        .collect();

    let interp = |w: &[f64], i: usize, c: &Control| -> f64 {
        let j = i + c.shift;
        if j >= p - 1 {
            return w[p - 1];
        }
        w[j] + c.frac * (w[j + 1] - w[j])
    };

    let mut lo = vec![0.0; p];
    let mut hi = vec![0.0; p];
    let mut next_lo = vec![0.0; p];
    let mut next_hi = vec![0.0; p];
    for _ in 0..m {
        for i in 0..p {
            let mut best_lo = f64::INFINITY;
            let mut best_hi = f64::NEG_INFINITY;
            for c in &controls {
                let reward = c.gain * c.decay[i];
                best_lo = best_lo.min(reward + interp(&lo, i, c));
                best_hi = best_hi.max(reward + interp(&hi, i, c));
            }
            next_lo[i] = best_lo;
            next_hi[i] = best_hi;
        }
        std::mem::swap(&mut lo, &mut next_lo);
        std::mem::swap(&mut hi, &mut next_hi);
    }
    Ok((lo[0], hi[0]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpLevel {
    pub m: usize,
    pub p: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpReport {
    /// Bounds at the finest grid.
    pub interval: AttainableInterval,
    /// Second-order extrapolation from the two finest grids.
    pub richardson: (f64, f64),
    pub levels: Vec<DpLevel>,
    /// Whether the last halving moved both bounds by less than the tolerance.
    pub converged: bool,
}

/// Value iteration with grid halving: both grids are refined until the
/// bounds move by less than `tol` or `max_refinements` halvings have run.
pub fn attainable_bounds_dp(
    modulation: &Modulation,
    t: f64,
    m: usize,
    p: usize,
    tol: f64,
    max_refinements: usize,
) -> Result<DpReport, LdpError> {
    if !(tol > 0.0) {
        return Err(LdpError::BadParameter(format!("tolerance {tol} must be positive")));
    }
    let mut levels = Vec::new();
    let (mut m, mut p) = (m, p);
    let (min, max) = dp_bounds(modulation, t, m, p)?;
    levels.push(DpLevel { m, p, min, max });
    let mut converged = false;
    for _ in 0..max_refinements {
        m *= 2;
        p = 2 * p - 1;
        let (min, max) = dp_bounds(modulation, t, m, p)?;
        let prev = *levels.last().unwrap();
        levels.push(DpLevel { m, p, min, max });
        if (min - prev.min).abs() < tol && (max - prev.max).abs() < tol {
            converged = true;
            break;
        }
    }
    let last = *levels.last().unwrap();
    let richardson = match levels.len() {
        1 => (last.min, last.max),
        n => {
            let prev = levels[n - 2];
            (last.min + (last.min - prev.min) / 3.0, last.max + (last.max - prev.max) / 3.0)
        }
    };
    let a_minus = last.min.max(0.0);
    Ok(DpReport { interval: AttainableInterval::new(a_minus, last.max.max(a_minus))?, richardson, levels, converged })
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of paths with at most `k` jumps at the interior points of a `g`-cell grid.
fn oracle_path_count(d: usize, k: usize, g: usize) -> u128 {
    let (d, slots) = (d as u128, g.saturating_sub(1) as u128);
    (0..=k as u128)
        .map(|j| binomial(slots, j).saturating_mul(d).saturating_mul((d - 1).saturating_pow(j as u32)))
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Builds paths from the last segment backwards. The segment ending at grid
/// index `end` starts at 0 or, if jumps remain, at any earlier grid index, and
/// its state differs from that of the segment after it.
#[allow(clippy::too_many_arguments)]
fn enumerate_backward(
    rates: &[Rates],
    grid: &[f64],
    end: usize,
    jumps_left: usize,
    after: Option<usize>,
    tail: f64,
    total: f64,
    bounds: &mut (f64, f64),
) {
    let first_start = if jumps_left == 0 { 0 } else { end.saturating_sub(1) };
    for x in (0..rates.len()).filter(|&x| Some(x) != after) {
        let r = rates[x];
        for start in (0..=first_start).rev() {
            let len = grid[end] - grid[start];
            let value = total + segment_contribution(r, len, tail);
            if start == 0 {
                bounds.0 = bounds.0.min(value);
                bounds.1 = bounds.1.max(value);
            } else {
                enumerate_backward(rates, grid, start, jumps_left - 1, Some(x), tail + r.mu * len, value, bounds);
            }
        }
    }
}

/// Brute-force bounds: `φ_t` on every step path with at most `k` jumps, each at
/// one of the times `t i / g`, `0 < i < g`. Every value is attained, so the
/// result is an inner approximation of `R(t)`.
pub fn attainable_bounds_oracle(
    modulation: &Modulation,
    t: f64,
    k: usize,
    g: usize,
    budget: u128,
) -> Result<AttainableInterval, LdpError> {
    let rates = finite_rates(modulation, "the enumeration oracle")?;
    check_horizon(t)?;
    if g < 1 {
        return Err(LdpError::InvalidGrid("jump-time grid needs g >= 1".into()));
    }
    let d = rates.len();
    let needed = oracle_path_count(d, k, g);
    if needed > budget {
        return Err(LdpError::BudgetExceeded { needed, budget });
    }
    let grid: Vec<f64> = (0..=g).map(|i| t * i as f64 / g as f64).collect();
    let mut bounds = (f64::INFINITY, f64::NEG_INFINITY);
    enumerate_backward(&rates, &grid, g, k, None, 0.0, 0.0, &mut bounds);
    let (lo, hi) = bounds;
    AttainableInterval::new(lo.max(0.0), hi.max(lo.max(0.0)))
}

/// The modulation restricted to a finite set of states.
/// Intervals are sampled at `levels` evenly spaced points, the non-negative
/// integers are truncated to `{0, ..., levels - 1}`, finite spaces pass through.
/// Returns the finite modulation and the original state of each index.
pub fn quantize(modulation: &Modulation, levels: usize) -> Result<(Modulation, Vec<f64>), LdpError> {
    let points: Vec<f64> = match modulation.space() {
        StateSpace::Finite { .. } => return Ok((modulation.clone(), (0..modulation.space().size().unwrap()).map(|j| j as f64).collect())),
        StateSpace::Interval { lo, hi } => {
            if levels < 2 {
                return Err(LdpError::InvalidGrid("an interval needs at least 2 levels".into()));
            }
            (0..levels).map(|j| lo + (hi - lo) * j as f64 / (levels - 1) as f64).collect()
        }
        StateSpace::NonNegInt => {
            if levels < 1 {
                return Err(LdpError::InvalidGrid("truncation needs at least 1 level".into()));
            }
            (0..levels).map(|j| j as f64).collect()
        }
        StateSpace::Real => return Err(LdpError::InfiniteStateSpace("quantization")),
    };
    let table = |map: &RateMap| RateMap::Table(points.iter().map(|&x| map.eval(x)).collect());
    let q = Modulation::new(
        table(modulation.lambda()),
        table(modulation.kappa()),
        table(modulation.mu()),
        StateSpace::indexed(points.len())?,
    )?;
    Ok((q, points))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    /// Truncation levels `K`; the state set is `{0, ..., K}`.
    pub ks: Vec<usize>,
    pub a_plus: Vec<f64>,
    /// `a_+(K)` keeps growing without a shrinking trend.
    pub diverging: bool,
}

/// `a_+` on the truncations `{0, ..., K}` of a countable state space for
/// `K = k0, 2 k0, 4 k0, ...`. Each truncation is solved by value iteration on
/// an `m × p` grid. Growth counts as divergence when the last increment is
/// at least 0.9 times the one before, i.e. no geometric convergence is visible.
pub fn truncated_upper_bounds(
    modulation: &Modulation,
    t: f64,
    k0: usize,
    doublings: usize,
    m: usize,
    p: usize,
) -> Result<TruncationReport, LdpError> {
    if !matches!(modulation.space(), StateSpace::NonNegInt) {
        return Err(LdpError::BadParameter("truncation applies to the non-negative integers".into()));
    }
    if k0 < 1 || doublings < 2 {
        return Err(LdpError::BadParameter("need k0 >= 1 and at least 2 doublings".into()));
    }
    let mut ks = Vec::new();
    let mut a_plus = Vec::new();
    let mut k = k0;
    for _ in 0..=doublings {
        let (q, _) = quantize(modulation, k + 1)?;
        ks.push(k);
        a_plus.push(dp_bounds(&q, t, m, p)?.1);
        k *= 2;
    }
    let n = a_plus.len();
    let last = a_plus[n - 1] - a_plus[n - 2];
    let prev = a_plus[n - 2] - a_plus[n - 3];
    let scale = a_plus[n - 1].abs().max(1.0);
    let diverging = last > 1e-6 * scale && last >= 0.9 * prev;
    Ok(TruncationReport { ks, a_plus, diverging })
}
