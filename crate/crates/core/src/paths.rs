//! Càdlàg step paths over a metric state space.
//!
//! A [`StepPath`] is a finite list of `(time, state)` breakpoints with an
//! explicit horizon. The path value at `s` is the state of the last
//! breakpoint with time `<= s`. Every background process in this crate is
//! reduced to a `StepPath` before any downstream computation: CTMC paths are
//! exact, diffusion paths are discretized on a uniform grid.
//!
//! States are stored as `f64`. For finite state spaces the stored value is
//! the label index `0..d`, for the non-negative integers it is the integer
//! itself.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("finite state space needs at least one label")]
    EmptyStateSpace,
    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid interval [{lo}, {hi}]: need finite lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("path has no breakpoints")]
    NoBreakpoints,
    #[error("first breakpoint must be at time 0, got {0}")]
    FirstTimeNotZero(f64),
    #[error("breakpoint times must be strictly increasing (index {index}: {prev} then {next})")]
    NonIncreasingTimes { index: usize, prev: f64, next: f64 },
    #[error("state {state} at index {index} is not in the state space {space}")]
    StateOutOfSpace { index: usize, state: f64, space: String },
    #[error("horizon {horizon} is invalid (last breakpoint at {last})")]
    InvalidHorizon { horizon: f64, last: f64 },
    #[error("time {time} lies outside [0, {horizon}]")]
    OutsideHorizon { time: f64, horizon: f64 },
    #[error("paths live on incompatible state spaces ({0} vs {1})")]
    IncompatibleSpaces(String, String),
    #[error("csv: {0}")]
    Csv(String),
}

/// The space `E` the background process lives in, with its metric.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpace {
    /// `d >= 1` distinct labels, discrete metric.
    Finite { labels: Arc<[String]> },
    /// `{0, 1, 2, ...}` with the Euclidean metric.
    NonNegInt,
    /// `[lo, hi]` with the Euclidean metric.
    Interval { lo: f64, hi: f64 },
    /// The real line.
    Real,
}

impl StateSpace {
    pub fn finite<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, PathError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(PathError::EmptyStateSpace);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(PathError::DuplicateLabel(l.clone()));
            }
        }
        Ok(StateSpace::Finite { labels: labels.into() })
    }

    /// Finite space labelled `0, 1, ..., d-1`.
    pub fn indexed(d: usize) -> Result<Self, PathError> {
        Self::finite((0..d).map(|i| i.to_string()))
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, PathError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PathError::InvalidInterval { lo, hi });
        }
        Ok(StateSpace::Interval { lo, hi })
    }

    /// Number of states for a finite space.
    pub fn size(&self) -> Option<usize> {
        match self {
            StateSpace::Finite { labels } => Some(labels.len()),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, StateSpace::Finite { .. })
    }

    pub fn contains(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            StateSpace::Finite { labels } => x >= 0.0 && x.fract() == 0.0 && (x as usize) < labels.len(),
            StateSpace::NonNegInt => x >= 0.0 && x.fract() == 0.0,
            StateSpace::Interval { lo, hi } => *lo <= x && x <= *hi,
            StateSpace::Real => true,
        }
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match self {
            StateSpace::Finite { .. } => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
            _ => (x - y).abs(),
        }
    }

    /// Parses a state token; finite spaces accept either a label or an index.
    pub fn parse_state(&self, token: &str) -> Option<f64> {
        let token = token.trim();
        if let StateSpace::Finite { labels } = self {
            if let Some(i) = labels.iter().position(|l| l == token) {
                return Some(i as f64);
            }
        }
        let x: f64 = token.parse().ok()?;
        self.contains(x).then_some(x)
    }
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpace::Finite { labels } => write!(f, "finite({})", labels.join(",")),
            StateSpace::NonNegInt => write!(f, "nonneg-int"),
            StateSpace::Interval { lo, hi } => write!(f, "interval[{lo},{hi}]"),
            StateSpace::Real => write!(f, "real"),
        }
    }
}

/// A constant piece `[start, end)` of a step path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub state: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Piecewise-constant càdlàg path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    space: StateSpace,
    times: Vec<f64>,
    states: Vec<f64>,
    horizon: f64,
}

impl StepPath {
    pub fn new(space: StateSpace, breakpoints: &[(f64, f64)], horizon: f64) -> Result<Self, PathError> {
        let (times, states) = breakpoints.iter().copied().unzip();
        Self::from_parts(space, times, states, horizon)
    }

    pub fn from_parts(
        space: StateSpace,
        times: Vec<f64>,
        states: Vec<f64>,
        horizon: f64,
    ) -> Result<Self, PathError> {
        debug_assert_eq!(times.len(), states.len());
        let Some(&first) = times.first() else {
            return Err(PathError::NoBreakpoints);
        };
        if first != 0.0 {
            return Err(PathError::FirstTimeNotZero(first));
        }
        for (i, w) in times.windows(2).enumerate() {
            // also rejects NaN
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(PathError::NonIncreasingTimes { index: i + 1, prev: w[0], next: w[1] });
            }
        }
        for (index, &state) in states.iter().enumerate() {
            if !space.contains(state) {
                return Err(PathError::StateOutOfSpace { index, state, space: space.to_string() });
            }
        }
        let last = *times.last().unwrap();
        if !(horizon.is_finite() && horizon >= last) {
            return Err(PathError::InvalidHorizon { horizon, last });
        }
        Ok(StepPath { space, times, states, horizon })
    }

    pub fn constant(space: StateSpace, state: f64, horizon: f64) -> Result<Self, PathError> {
        Self::from_parts(space, vec![0.0], vec![state], horizon)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }

    /// Number of state changes (breakpoints after the first).
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn value_at(&self, s: f64) -> Result<f64, PathError> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(PathError::OutsideHorizon { time: s, horizon: self.horizon });
        }
        let idx = self.times.partition_point(|&ti| ti <= s);
        Ok(self.states[idx - 1])
    }

    /// Constant pieces covering `[0, t)`, in time order. Empty when `t == 0`.
    pub fn segments(&self, t: f64) -> Result<Segments<'_>, PathError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(PathError::OutsideHorizon { time: t, horizon: self.horizon });
        }
        Ok(Segments { path: self, t, idx: 0 })
    }

    /// Collects [`StepPath::segments`] into a vector.
    pub fn segment_vec(&self, t: f64) -> Result<Vec<Segment>, PathError> {
        Ok(self.segments(t)?.collect())
    }

    /// The same path with a shorter horizon.
    pub fn restrict(&self, horizon: f64) -> Result<StepPath, PathError> {
        if !(0.0..=self.horizon).contains(&horizon) {
            return Err(PathError::OutsideHorizon { time: horizon, horizon: self.horizon });
        }
        let keep = self.times.partition_point(|&ti| ti <= horizon);
        Ok(StepPath {
            space: self.space.clone(),
            times: self.times[..keep].to_vec(),
            states: self.states[..keep].to_vec(),
            horizon,
        })
    }

    /// Merges adjacent breakpoints carrying the same state.
    pub fn minimal_representation(&self) -> StepPath {
        let mut times = Vec::with_capacity(self.times.len());
        let mut states: Vec<f64> = Vec::with_capacity(self.states.len());
        for (t, x) in self.breakpoints() {
            if states.last() != Some(&x) {
                times.push(t);
                states.push(x);
            }
        }
        StepPath { space: self.space.clone(), times, states, horizon: self.horizon }
    }

    /// `1 ∧ min_i (t_i - t_{i-1})` over the minimal representation.
    pub fn truncated_min_step(&self) -> f64 {
        let minimal = self.minimal_representation();
        minimal.times.windows(2).map(|w| w[1] - w[0]).fold(1.0, f64::min)
    }

    /// `sup_{s in [0, T]} ρ(a(s), b(s))`, exact over the merged breakpoint grid.
    pub fn sup_distance(a: &StepPath, b: &StepPath, horizon: f64) -> Result<f64, PathError> {
        if a.space != b.space {
            return Err(PathError::IncompatibleSpaces(a.space.to_string(), b.space.to_string()));
        }
        for p in [a, b] {
            if !(0.0..=p.horizon).contains(&horizon) {
                return Err(PathError::OutsideHorizon { time: horizon, horizon: p.horizon });
            }
        }
        let (mut i, mut j) = (0usize, 0usize);
        let mut sup: f64 = a.space.distance(a.states[0], b.states[0]);
        // walk both breakpoint lists in time order; distance only changes at breakpoints
        loop {
            let next_a = a.times.get(i + 1).copied().filter(|&s| s <= horizon);
            let next_b = b.times.get(j + 1).copied().filter(|&s| s <= horizon);
            match (next_a, next_b) {
                (None, None) => break,
                (Some(sa), Some(sb)) if sa == sb => {
                    i += 1;
                    j += 1;
                }
                (Some(sa), Some(sb)) if sa < sb => i += 1,
                (Some(_), Some(_)) => j += 1,
                (Some(_), None) => i += 1,
                (None, Some(_)) => j += 1,
            }
            sup = sup.max(a.space.distance(a.states[i], b.states[j]));
        }
        Ok(sup)
    }

    /// Holds each uniform-grid sample on `[grid_i, grid_{i+1})`, the last one up to `horizon`.
    pub fn discretize(space: StateSpace, samples: &[(f64, f64)], horizon: f64) -> Result<StepPath, PathError> {
        if samples.is_empty() {
            return Err(PathError::NoBreakpoints);
        }
        Self::new(space, samples, horizon)
    }

    /// Writes the path as CSV: `# horizon=<h>`, a `time,state` header, one row per breakpoint.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# horizon={}", self.horizon)?;
        writeln!(out, "time,state")?;
        for (t, x) in self.breakpoints() {
            writeln!(out, "{t},{x}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn read_csv<R: BufRead>(input: R, space: StateSpace) -> Result<StepPath, PathError> {
        let mut lines = input.lines().enumerate();
        let csv_err = |line: usize, msg: String| PathError::Csv(format!("line {}: {msg}", line + 1));

        let (n, first) = lines.next().ok_or_else(|| csv_err(0, "empty input".into()))?;
        let first = first.map_err(|e| csv_err(n, e.to_string()))?;
        let horizon = first
            .trim()
            .strip_prefix('#')
            .and_then(|rest| rest.trim().strip_prefix("horizon="))
            .ok_or_else(|| csv_err(n, "expected `# horizon=<value>`".into()))?
            .trim()
            .parse::<f64>()
            .map_err(|e| csv_err(n, format!("bad horizon: {e}")))?;

        let (n, header) = lines.next().ok_or_else(|| csv_err(1, "missing header".into()))?;
        let header = header.map_err(|e| csv_err(n, e.to_string()))?;
        if header.trim() != "time,state" {
            return Err(csv_err(n, format!("expected header `time,state`, got `{}`", header.trim())));
        }

        let mut times = Vec::new();
        let mut states = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| csv_err(n, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (t, x) = line.split_once(',').ok_or_else(|| csv_err(n, "expected two columns".into()))?;
            let t: f64 = t.trim().parse().map_err(|e| csv_err(n, format!("bad time: {e}")))?;
            let x = space
                .parse_state(x)
                .ok_or_else(|| csv_err(n, format!("state `{}` not in {space}", x.trim())))?;
            times.push(t);
            states.push(x);
        }
        StepPath::from_parts(space, times, states, horizon)
    }
}

pub struct Segments<'a> {
    path: &'a StepPath,
    t: f64,
    idx: usize,
}

impl Iterator for Segments<'_> {
    type Item = Segment;

    fn next(&mut self) -> Option<Segment> {
        let start = *self.path.times.get(self.idx)?;
        if start >= self.t {
            return None;
        }
        let end = self.path.times.get(self.idx + 1).map_or(self.t, |&e| e.min(self.t));
        let state = self.path.states[self.idx];
        self.idx += 1;
        Some(Segment { start, end, state })
    }
}
