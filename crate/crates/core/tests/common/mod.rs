#![allow(dead_code)]

pub mod checks;

use modinf::background::{BackgroundSpec, Ctmc, GeneratorMatrix, MmisFeed};
use modinf::modulation::{Modulation, RateMap};
use modinf::paths::{StateSpace, StepPath};
use proptest::prelude::*;

pub const E1: f64 = 0.632_120_558_828_557_7;

pub fn two_state_chain(initial: Vec<f64>) -> Ctmc {
    Ctmc::new(GeneratorMatrix::new(vec![-1.0, 1.0, 1.0, -1.0]).unwrap(), initial).unwrap()
}

/// Two-state chain with λ = (1, 2), κ = 1, μ = (2, 1).
pub fn two_state_fixture() -> (BackgroundSpec, Modulation) {
    let m = Modulation::new(
        RateMap::Table(vec![1.0, 2.0]),
        RateMap::Constant(1.0),
        RateMap::Table(vec![2.0, 1.0]),
        StateSpace::indexed(2).unwrap(),
    )
    .unwrap();
    (BackgroundSpec::Ctmc(two_state_chain(vec![0.5, 0.5])), m)
}

/// Reflected Brownian motion on [0, 1] with λ = x, κ = 1, μ = 1 - x.
pub fn rbm_fixture() -> (BackgroundSpec, Modulation) {
    let m = Modulation::new(
        RateMap::Identity,
        RateMap::Constant(1.0),
        RateMap::OneMinus,
        StateSpace::interval(0.0, 1.0).unwrap(),
    )
    .unwrap();
    (BackgroundSpec::reflected_bm(0.5, 1e-3).unwrap(), m)
}

/// Occupancy of an inner modulated queue feeding λ = 1 + x, κ = 1, μ = 1 + x/2.
pub fn mmis_fixture() -> (BackgroundSpec, Modulation) {
    let feed = MmisFeed::new(two_state_chain(vec![1.0, 0.0]), vec![1.0, 3.0], vec![1.0, 2.0]).unwrap();
    let m = Modulation::new(
        RateMap::Affine { offset: 1.0, slope: 1.0 },
        RateMap::Constant(1.0),
        RateMap::Affine { offset: 1.0, slope: 0.5 },
        StateSpace::NonNegInt,
    )
    .unwrap();
    (BackgroundSpec::MmisFeed(feed), m)
}

/// Tables of length `d` with entries drawn from `[0, 5]`.
pub fn finite_modulation(lambda: Vec<f64>, kappa: Vec<f64>, mu: Vec<f64>) -> Modulation {
    let d = lambda.len();
    Modulation::new(RateMap::Table(lambda), RateMap::Table(kappa), RateMap::Table(mu), StateSpace::indexed(d).unwrap())
        .unwrap()
}

pub fn rates(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..5.0f64, d)
}

/// A step path on `{0, .., d-1}` over `[0, horizon]` with at most `max_segments` pieces.
pub fn step_path(d: usize, max_segments: usize, horizon: f64) -> impl Strategy<Value = StepPath> {
    prop::collection::vec((0.01..1.0f64, 0..d), 1..=max_segments).prop_map(move |pieces| {
        let total: f64 = pieces.iter().map(|(w, _)| w).sum();
        let mut t = 0.0;
        let mut bps = Vec::with_capacity(pieces.len());
        for (w, x) in &pieces {
            bps.push((t, *x as f64));
            t += w / total * horizon;
        }
        StepPath::new(StateSpace::indexed(d).unwrap(), &bps, horizon).unwrap()
    })
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `φ_t` by direct quadrature of the defining double integral. The outer
/// integral is split at the jump times and integrated adaptively; the inner
/// work integral of a step function is a finite sum.
pub fn phi_by_quadrature(path: &StepPath, m: &Modulation, t: f64) -> f64 {
    let times = path.times();
    let states = path.states();
    let state_at = |s: f64| {
        let i = times.partition_point(|&u| u <= s).saturating_sub(1);
        states[i]
    };
    let work_after = |s: f64| {
        let mut total = 0.0;
        for i in 0..times.len() {
            let lo = times[i].max(s);
            let hi = times.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
            if hi > lo {
                total += m.mu().eval(states[i]) * (hi - lo);
            }
        }
        total
    };
    let mut total = 0.0;
    for i in 0..times.len() {
        let lo = times[i];
        let hi = times.get(i + 1).copied().unwrap_or(t).min(t);
        if hi <= lo {
            continue;
        }
        let x = state_at(0.5 * (lo + hi));
        let integrand = |s: f64| m.lambda().eval(x) * (-m.kappa().eval(x) * work_after(s)).exp();
        total += adaptive_simpson(&integrand, lo, hi, 1e-14);
    }
    total
}
