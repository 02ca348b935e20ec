//! Background processes `J` and their scalings `J ↦ J_n`.
//!
//! Every sampler returns a [`StepPath`]. Markov chain variants (plain,
//! time-scaled, and the job count of an inner Markov-modulated
//! infinite-server queue) are exact in law. Brownian variants are Euler
//! approximations on a uniform grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::modulation::{relaxation_factor, Modulation};
use crate::paths::{PathError, StateSpace, StepPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackgroundError {
    #[error("generator must be square and non-empty ({0} entries)")]
    NotSquare(usize),
    #[error("generator entry q[{row}][{col}] = {value} is invalid")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("generator row {row} sums to {sum}, not 0")]
    RowSum { row: usize, sum: f64 },
    #[error("generator is not irreducible: state {0} is not mutually reachable with state 0")]
    Reducible(usize),
    #[error("initial distribution is invalid: {0}")]
    BadInitial(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("dimension mismatch: generator has {generator} states, {what} has {other}")]
    DimensionMismatch { generator: usize, what: &'static str, other: usize },
    #[error("stationary system is singular or inaccurate (residual {0:e})")]
    Singular(f64),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Irreducible CTMC generator `Q`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn new(entries: Vec<f64>) -> Result<Self, BackgroundError> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != entries.len() {
            return Err(BackgroundError::NotSquare(entries.len()));
        }
        let q = GeneratorMatrix { dim, entries };
        for i in 0..dim {
            let scale = q.exit_rate(i).max(1.0);
            let mut sum = 0.0;
            for j in 0..dim {
                let v = q.get(i, j);
                if !v.is_finite() || (i != j && v < 0.0) {
                    return Err(BackgroundError::BadEntry { row: i, col: j, value: v });
                }
                sum += v;
            }
            if sum.abs() > 1e-12 * scale {
                return Err(BackgroundError::RowSum { row: i, sum });
            }
        }
        q.check_irreducible()?;
        Ok(q)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, BackgroundError> {
        Self::new(rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    fn check_irreducible(&self) -> Result<(), BackgroundError> {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.dim];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.dim {
                    let rate = if forward { self.get(i, j) } else { self.get(j, i) };
                    if i != j && rate > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        };
        let (fwd, bwd) = (reach(true), reach(false));
        match (0..self.dim).find(|&i| !(fwd[i] && bwd[i])) {
            Some(i) => Err(BackgroundError::Reducible(i)),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.get(i, i)
    }

    /// `c Q`, i.e. the chain run `c` times faster.
    pub fn scaled(&self, c: f64) -> GeneratorMatrix {
        GeneratorMatrix { dim: self.dim, entries: self.entries.iter().map(|q| q * c).collect() }
    }

    fn jump_target<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let total = self.exit_rate(from);
        let mut u = rng.random::<f64>() * total;
        let mut last = from;
        for j in (0..self.dim).filter(|&j| j != from) {
            let rate = self.get(from, j);
            if rate > 0.0 {
                last = j;
                if u < rate {
                    return j;
                }
                u -= rate;
            }
        }
        last
    }
}

fn check_distribution(p: &[f64], dim: usize, what: &'static str) -> Result<(), BackgroundError> {
    if p.len() != dim {
        return Err(BackgroundError::DimensionMismatch { generator: dim, what, other: p.len() });
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(BackgroundError::BadInitial(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(BackgroundError::BadInitial(format!("{what} sums to {sum}")));
    }
    Ok(())
}

fn draw_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// A Markov chain: generator plus initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct Ctmc {
    generator: GeneratorMatrix,
    initial: Vec<f64>,
}

impl Ctmc {
    pub fn new(generator: GeneratorMatrix, initial: Vec<f64>) -> Result<Self, BackgroundError> {
        check_distribution(&initial, generator.dim(), "initial distribution")?;
        Ok(Ctmc { generator, initial })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// One exact trajectory on `[0, horizon]`, with the clock running `speed` times faster.
    fn sample<R: Rng + ?Sized>(&self, speed: f64, horizon: f64, rng: &mut R) -> Result<StepPath, PathError> {
        let q = &self.generator;
        let mut state = draw_index(&self.initial, rng);
        let mut times = vec![0.0];
        let mut states = vec![state as f64];
        let mut now = 0.0;
        loop {
            let rate = q.exit_rate(state) * speed;
            if rate <= 0.0 {
                break;
            }
            let hold: f64 = Exp1.sample(rng);
            now += hold / rate;
            if now > horizon {
                break;
            }
            state = q.jump_target(state, rng);
            times.push(now);
            states.push(state as f64);
        }
        StepPath::from_parts(StateSpace::indexed(q.dim())?, times, states, horizon)
    }
}

/// The background of a Markov-modulated infinite-server queue of Model I type
/// (unit-mean exponential requirements, modulated arrival and work rates).
/// Its job count, started from an empty system, is the outer background.
#[derive(Debug, Clone, PartialEq)]
pub struct MmisFeed {
    chain: Ctmc,
    arrival: Vec<f64>,
    work: Vec<f64>,
}

impl MmisFeed {
    pub fn new(chain: Ctmc, arrival: Vec<f64>, work: Vec<f64>) -> Result<Self, BackgroundError> {
        let d = chain.generator.dim();
        for (what, v) in [("inner lambda", &arrival), ("inner mu", &work)] {
            if v.len() != d {
                return Err(BackgroundError::DimensionMismatch { generator: d, what, other: v.len() });
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(BackgroundError::BadParameter(format!("{what} must be finite and non-negative")));
            }
        }
        Ok(MmisFeed { chain, arrival, work })
    }

    pub fn chain(&self) -> &Ctmc {
        &self.chain
    }

    pub fn arrival(&self) -> &[f64] {
        &self.arrival
    }

    pub fn work(&self) -> &[f64] {
        &self.work
    }

    fn sample<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<StepPath, PathError> {
        let q = &self.chain.generator;
        let mut env = draw_index(&self.chain.initial, rng);
        let mut jobs: u64 = 0;
        let mut times = vec![0.0];
        let mut states = vec![0.0];
        let mut now = 0.0;
        loop {
            let switch = q.exit_rate(env);
            let arrive = self.arrival[env];
            let depart = jobs as f64 * self.work[env];
            let total = switch + arrive + depart;
            if total <= 0.0 {
                break;
            }
            let hold: f64 = Exp1.sample(rng);
            now += hold / total;
            if now > horizon {
                break;
            }
            let u = rng.random::<f64>() * total;
            if u < switch {
                env = q.jump_target(env, rng);
                continue;
            }
            if u < switch + arrive {
                jobs += 1;
            } else {
                jobs = jobs.saturating_sub(1);
            }
            times.push(now);
            states.push(jobs as f64);
        }
        StepPath::from_parts(StateSpace::NonNegInt, times, states, horizon)
    }
}

/// A background process and its scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundSpec {
    Deterministic(StepPath),
    Ctmc(Ctmc),
    /// `J_n(t) = J(n^{1+ε} t)`.
    TimeScaledCtmc { chain: Ctmc, epsilon: f64, n: u64 },
    /// Brownian motion started at `x0`, reflected at 0 and 1, Euler grid `step`.
    ReflectedBm { x0: f64, step: f64 },
    /// `J_n(s) = W(s / n)`, sampled as `W / √n` on grid `step`.
    ScaledBm { n: u64, step: f64 },
    MmisFeed(MmisFeed),
}

impl BackgroundSpec {
    pub fn time_scaled_ctmc(chain: Ctmc, epsilon: f64, n: u64) -> Result<Self, BackgroundError> {
        let spec = BackgroundSpec::TimeScaledCtmc { chain, epsilon, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn reflected_bm(x0: f64, step: f64) -> Result<Self, BackgroundError> {
        let spec = BackgroundSpec::ReflectedBm { x0, step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn scaled_bm(n: u64, step: f64) -> Result<Self, BackgroundError> {
        let spec = BackgroundSpec::ScaledBm { n, step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BackgroundError> {
        let bad = |m: String| Err(BackgroundError::BadParameter(m));
        let check_step = |h: f64| if h.is_finite() && h > 0.0 { Ok(()) } else { bad(format!("grid step {h} must be positive")) };
        match self {
            BackgroundSpec::Deterministic(_) | BackgroundSpec::Ctmc(_) | BackgroundSpec::MmisFeed(_) => Ok(()),
            BackgroundSpec::TimeScaledCtmc { epsilon, n, .. } => {
                if !(epsilon.is_finite() && *epsilon > 0.0) {
                    return bad(format!("epsilon {epsilon} must be positive"));
                }
                if *n == 0 {
                    return bad("scale n must be at least 1".into());
                }
                Ok(())
            }
            BackgroundSpec::ReflectedBm { x0, step } => {
                if !(*x0 > 0.0 && *x0 < 1.0) {
                    return bad(format!("x0 = {x0} must lie strictly inside (0, 1)"));
                }
                check_step(*step)
            }
            BackgroundSpec::ScaledBm { n, step } => {
                if *n == 0 {
                    return bad("scale n must be at least 1".into());
                }
                check_step(*step)
            }
        }
    }

    /// The space sampled paths live on.
    pub fn state_space(&self) -> StateSpace {
        match self {
            BackgroundSpec::Deterministic(p) => p.space().clone(),
            BackgroundSpec::Ctmc(c) | BackgroundSpec::TimeScaledCtmc { chain: c, .. } => {
                StateSpace::indexed(c.generator.dim()).expect("dim >= 1")
            }
            BackgroundSpec::ReflectedBm { .. } => StateSpace::Interval { lo: 0.0, hi: 1.0 },
            BackgroundSpec::ScaledBm { .. } => StateSpace::Real,
            BackgroundSpec::MmisFeed(_) => StateSpace::NonNegInt,
        }
    }

    /// The `n`-th member of the scaled family; unscaled variants are returned as is.
    pub fn with_scale(&self, n: u64) -> BackgroundSpec {
        match self {
            BackgroundSpec::TimeScaledCtmc { chain, epsilon, .. } => {
                BackgroundSpec::TimeScaledCtmc { chain: chain.clone(), epsilon: *epsilon, n }
            }
            BackgroundSpec::ScaledBm { step, .. } => BackgroundSpec::ScaledBm { n, step: *step },
            other => other.clone(),
        }
    }

    /// Whether the law of `J_n` depends on `n`.
    pub fn is_scaled(&self) -> bool {
        matches!(self, BackgroundSpec::TimeScaledCtmc { .. } | BackgroundSpec::ScaledBm { .. })
    }
}

fn fold_unit(y: f64) -> f64 {
    let r = y.rem_euclid(2.0);
    if r > 1.0 {
        2.0 - r
    } else {
        r
    }
}

fn euler_grid<R: Rng + ?Sized>(
    start: f64,
    step: f64,
    sd: f64,
    horizon: f64,
    rng: &mut R,
    fold: impl Fn(f64) -> f64,
) -> Vec<(f64, f64)> {
    let cells = ((horizon / step).ceil() as usize).max(1);
    let mut samples = Vec::with_capacity(cells);
    let mut x = start;
    samples.push((0.0, x));
    for k in 1..cells {
        let z: f64 = StandardNormal.sample(rng);
        x = fold(x + sd * z);
        samples.push((k as f64 * step, x));
    }
    samples
}

/// Draws one realization of the background on `[0, horizon]`.
pub fn sample_path<R: Rng + ?Sized>(
    spec: &BackgroundSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<StepPath, BackgroundError> {
    debug_assert!(spec.validate().is_ok());
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(BackgroundError::BadParameter(format!("horizon {horizon} must be non-negative")));
    }
    let path = match spec {
        BackgroundSpec::Deterministic(p) => p.restrict(horizon)?,
        BackgroundSpec::Ctmc(chain) => chain.sample(1.0, horizon, rng)?,
        BackgroundSpec::TimeScaledCtmc { chain, epsilon, n } => {
            chain.sample((*n as f64).powf(1.0 + epsilon), horizon, rng)?
        }
        BackgroundSpec::ReflectedBm { x0, step } => {
            let samples = euler_grid(*x0, *step, step.sqrt(), horizon, rng, fold_unit);
            StepPath::discretize(spec.state_space(), &samples, horizon)?
        }
        BackgroundSpec::ScaledBm { n, step } => {
            let sd = (step / *n as f64).sqrt();
            let samples = euler_grid(0.0, *step, sd, horizon, rng, |x| x);
            StepPath::discretize(StateSpace::Real, &samples, horizon)?
        }
        BackgroundSpec::MmisFeed(feed) => feed.sample(horizon, rng)?,
    };
    Ok(path)
}

/// Solves `π Q = 0`, `Σ π = 1`.
pub fn stationary_distribution(q: &GeneratorMatrix) -> Result<Vec<f64>, BackgroundError> {
    let d = q.dim();
    if d == 1 {
        return Ok(vec![1.0]);
    }
    // rows of Qᵀ, last one replaced by the normalisation constraint
    let a = DMatrix::from_fn(d, d, |i, j| if i == d - 1 { 1.0 } else { q.get(j, i) });
    let mut b = DVector::zeros(d);
    b[d - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(BackgroundError::Singular(f64::INFINITY))?;
    let pi: Vec<f64> = pi.iter().copied().collect();

    let scale = (0..d).map(|i| q.exit_rate(i)).fold(1.0, f64::max);
    let residual = (0..d)
        .map(|j| (0..d).map(|i| pi[i] * q.get(i, j)).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 * scale || pi.iter().any(|&p| !(p > 0.0)) {
        return Err(BackgroundError::Singular(residual));
    }
    Ok(pi)
}

/// Deterministic limit of `φ_t` under superlinear time scaling of the chain:
/// `Σ_j π_j λ_j / (κ_j μ_∞) (1 - e^{-κ_j μ_∞ t})` with `μ_∞ = Σ_j π_j μ_j`.
pub fn rho_t(q: &GeneratorMatrix, modulation: &Modulation, t: f64) -> Result<f64, BackgroundError> {
    let d = q.dim();
    match modulation.space().size() {
        Some(k) if k == d => {}
        Some(k) => return Err(BackgroundError::DimensionMismatch { generator: d, what: "modulation", other: k }),
        None => {
            return Err(BackgroundError::BadParameter("rho_t needs a modulation on a finite state space".into()))
        }
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(BackgroundError::BadParameter(format!("time {t} must be non-negative")));
    }
    let pi = stationary_distribution(q)?;
    let rates: Vec<_> = (0..d).map(|j| modulation.rates(j as f64)).collect();
    let mu_inf: f64 = pi.iter().zip(&rates).map(|(p, r)| p * r.mu).sum();
    Ok(pi
        .iter()
        .zip(&rates)
        .map(|(p, r)| p * r.lambda * t * relaxation_factor(r.kappa * mu_inf * t))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::RateMap;
    use crate::rng::{Purpose, StreamFactory};

    fn sym() -> GeneratorMatrix {
        GeneratorMatrix::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]).unwrap()
    }

    #[test]
    fn generator_validation() {
        assert!(matches!(GeneratorMatrix::new(vec![0.0; 3]), Err(BackgroundError::NotSquare(3))));
        assert!(matches!(
            GeneratorMatrix::from_rows(&[&[-1.0, 1.0], &[1.0, -2.0]]),
            Err(BackgroundError::RowSum { row: 1, .. })
        ));
        assert!(matches!(
            GeneratorMatrix::from_rows(&[&[1.0, -1.0], &[1.0, -1.0]]),
            Err(BackgroundError::BadEntry { .. })
        ));
        assert!(matches!(
            GeneratorMatrix::from_rows(&[&[0.0, 0.0], &[1.0, -1.0]]),
            Err(BackgroundError::Reducible(1))
        ));
        let three = GeneratorMatrix::from_rows(&[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[1.0, 0.0, -1.0]]);
        assert!(three.is_ok());
        assert!(GeneratorMatrix::new(vec![0.0]).is_ok());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&sym()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let q = GeneratorMatrix::from_rows(&[&[-2.0, 2.0], &[1.0, -1.0]]).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-14 && (pi[1] - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(stationary_distribution(&GeneratorMatrix::new(vec![0.0]).unwrap()).unwrap(), vec![1.0]);
    }

    #[test]
    fn rho_t_examples() {
        let space = StateSpace::indexed(2).unwrap();
        let m = Modulation::new(
            RateMap::Table(vec![1.0, 2.0]),
            RateMap::Constant(1.0),
            RateMap::Constant(1.0),
            space.clone(),
        )
        .unwrap();
        let expected = 1.5 * (1.0 - (-1.0f64).exp());
        assert!((rho_t(&sym(), &m, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!((rho_t(&sym(), &m, 1.0).unwrap() - 0.948181).abs() < 1e-6);
        assert_eq!(rho_t(&sym(), &m, 0.0).unwrap(), 0.0);

        let c = 2.5;
        let flat = Modulation::new(RateMap::Constant(c), RateMap::Constant(1.0), RateMap::Constant(1.0), space).unwrap();
        for t in [0.3, 1.0, 4.0] {
            assert!((rho_t(&sym(), &flat, t).unwrap() - c * (1.0 - (-t as f64).exp())).abs() < 1e-14);
        }

        let three = Modulation::new(
            RateMap::Constant(1.0),
            RateMap::Constant(1.0),
            RateMap::Constant(1.0),
            StateSpace::indexed(3).unwrap(),
        )
        .unwrap();
        assert!(matches!(rho_t(&sym(), &three, 1.0), Err(BackgroundError::DimensionMismatch { .. })));
    }

    #[test]
    fn deterministic_spec_ignores_randomness() {
        let p = StepPath::new(StateSpace::indexed(2).unwrap(), &[(0.0, 0.0), (0.5, 1.0), (1.5, 0.0)], 2.0).unwrap();
        let spec = BackgroundSpec::Deterministic(p.clone());
        let f = StreamFactory::new(1);
        for r in 0..3 {
            let s = sample_path(&spec, 1.0, &mut f.stream(Purpose::Test(0), r)).unwrap();
            assert_eq!(s, p.restrict(1.0).unwrap());
        }
    }

    #[test]
    fn ctmc_jump_count_matches_rate() {
        let spec = BackgroundSpec::Ctmc(Ctmc::new(sym(), vec![1.0, 0.0]).unwrap());
        let f = StreamFactory::new(7);
        let n = 10_000u64;
        let counts: Vec<f64> =
            (0..n).map(|r| sample_path(&spec, 10.0, &mut f.stream(Purpose::Test(1), r)).unwrap().jumps() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn ctmc_occupation_matches_stationary_law() {
        let q = GeneratorMatrix::from_rows(&[&[-2.0, 1.5, 0.5], &[1.0, -1.0, 0.0], &[0.5, 2.0, -2.5]]).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        let spec = BackgroundSpec::Ctmc(Ctmc::new(q, vec![1.0, 0.0, 0.0]).unwrap());
        // long run so the occupation error (a few 1e-3) sits well inside the tolerance
        let horizon = 1e5;
        let path = sample_path(&spec, horizon, &mut StreamFactory::new(3).stream(Purpose::Test(2), 0)).unwrap();
        let mut occupation = [0.0; 3];
        for seg in path.segments(horizon).unwrap() {
            occupation[seg.state as usize] += seg.len() / horizon;
        }
        for j in 0..3 {
            assert!((occupation[j] - pi[j]).abs() < 0.01, "state {j}: {} vs {}", occupation[j], pi[j]);
        }
    }

    #[test]
    fn scaled_bm_variance() {
        let spec = BackgroundSpec::scaled_bm(4, 1e-2).unwrap();
        let f = StreamFactory::new(11);
        let n = 10_000u64;
        let values: Vec<f64> = (0..n)
            .map(|r| sample_path(&spec, 1.0, &mut f.stream(Purpose::Test(3), r)).unwrap().value_at(1.0).unwrap())
            .collect();
        // value at s = 1 is the sum of 99 increments of variance h/n
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = 0.99 / 4.0;
        // standard error of a sample variance of Gaussians: σ² √(2/(n-1))
        let se = target * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "var {var}");
    }

    #[test]
    fn reflected_bm_stays_in_unit_interval() {
        let spec = BackgroundSpec::reflected_bm(0.5, 1e-3).unwrap();
        let f = StreamFactory::new(5);
        for r in 0..50 {
            let p = sample_path(&spec, 3.0, &mut f.stream(Purpose::Test(4), r)).unwrap();
            assert!(p.states().iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(p.len(), 3000);
        }
        assert!(BackgroundSpec::reflected_bm(0.0, 1e-3).is_err());
        assert!(BackgroundSpec::reflected_bm(0.5, 0.0).is_err());
    }

    #[test]
    fn fold_reflects() {
        assert!((fold_unit(1.2) - 0.8).abs() < 1e-15);
        assert!((fold_unit(-0.3) - 0.3).abs() < 1e-15);
        assert!((fold_unit(2.4) - 0.4).abs() < 1e-12);
        assert_eq!(fold_unit(0.7), 0.7);
    }

    #[test]
    fn mmis_feed_without_arrivals_is_empty() {
        let chain = Ctmc::new(sym(), vec![0.5, 0.5]).unwrap();
        let feed = MmisFeed::new(chain, vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let spec = BackgroundSpec::MmisFeed(feed);
        let p = sample_path(&spec, 5.0, &mut StreamFactory::new(2).stream(Purpose::Test(5), 0)).unwrap();
        assert_eq!(p, StepPath::constant(StateSpace::NonNegInt, 0.0, 5.0).unwrap());
    }

    #[test]
    fn mmis_feed_mean_count() {
        // constant inner rates: the job count at t is Poisson(λ(1 - e^{-μ t})/μ)
        let chain = Ctmc::new(sym(), vec![1.0, 0.0]).unwrap();
        let feed = MmisFeed::new(chain, vec![3.0, 3.0], vec![0.5, 0.5]).unwrap();
        let spec = BackgroundSpec::MmisFeed(feed);
        let f = StreamFactory::new(9);
        let n = 20_000u64;
        let v: Vec<f64> = (0..n)
            .map(|r| sample_path(&spec, 2.0, &mut f.stream(Purpose::Test(6), r)).unwrap().value_at(2.0).unwrap())
            .collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let target = 3.0 * (1.0 - (-1.0f64).exp()) / 0.5;
        let se = (target / n as f64).sqrt();
        assert!((mean - target).abs() < 3.5 * se, "mean {mean} vs {target}");
    }

    #[test]
    fn with_scale_only_touches_scaled_variants() {
        let chain = Ctmc::new(sym(), vec![1.0, 0.0]).unwrap();
        let spec = BackgroundSpec::time_scaled_ctmc(chain.clone(), 0.5, 1).unwrap();
        assert!(matches!(spec.with_scale(9), BackgroundSpec::TimeScaledCtmc { n: 9, .. }));
        let plain = BackgroundSpec::Ctmc(chain);
        assert_eq!(plain.with_scale(9), plain);
        assert!(BackgroundSpec::time_scaled_ctmc(Ctmc::new(sym(), vec![1.0, 0.0]).unwrap(), 0.0, 1).is_err());
    }
}
