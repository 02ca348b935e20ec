//! Poisson probabilities in log space.
//!
//! Single-point masses use Loader's saddle-point form
//! `log p(k; m) = -stirlerr(k) - bd0(k, m) - ½ log(2πk)`, which keeps full
//! relative precision even when `k` and `m` are large and close together.
//! Set probabilities are summed outward from the most likely point of the
//! set, so every term is compared against the largest one.

use std::f64::consts::PI;

use super::LdpError;

/// `log(n!) - [(n + ½) log n - n + ½ log 2π]` for n = 1..=15.
const STIRLERR_SMALL: [f64; 15] = [
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_770,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_530,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirlerr(k: u64) -> f64 {
    if (1..=15).contains(&k) {
        return STIRLERR_SMALL[(k - 1) as usize];
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n = k as f64;
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// `x log(x/m) + m - x`, accurate when `x ≈ m`.
pub(crate) fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let v2 = v * v;
        let mut ej = 2.0 * x * v;
        let mut j = 1.0;
        loop {
            ej *= v2;
            let next = s + ej / (2.0 * j + 1.0);
            if next == s {
                return s;
            }
            s = next;
            j += 1.0;
        }
    }
    x * (x / m).ln() + m - x
}

/// `log P(Poisson(mean) = k)`, `-∞` outside the support.
pub fn poisson_log_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -mean;
    }
    let x = k as f64;
    -stirlerr(k) - bd0(x, mean) - 0.5 * (2.0 * PI * x).ln()
}

/// A set of non-negative integers: `{lo, lo+1, ..., hi}` with `hi = None` for a half-line.
/// `lo > hi` encodes the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegerSet {
    pub lo: u64,
    pub hi: Option<u64>,
}

impl IntegerSet {
    pub fn at_least(lo: u64) -> Self {
        IntegerSet { lo, hi: None }
    }

    pub fn range(lo: u64, hi: u64) -> Self {
        IntegerSet { lo, hi: Some(hi) }
    }

    pub fn empty() -> Self {
        IntegerSet { lo: 1, hi: Some(0) }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.hi, Some(hi) if hi < self.lo)
    }

    pub fn contains(&self, k: u64) -> bool {
        k >= self.lo && self.hi.is_none_or(|hi| k <= hi)
    }
}

/// A subset of the real line used as a large-deviations event `M_n / n ∈ F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RealSet {
    /// `[a, ∞)`
    AtLeast(f64),
    /// `[a, b]`
    Closed(f64, f64),
    /// `(a, b)`
    Open(f64, f64),
}

/// `x` snapped to the nearest integer when it is within rounding noise of it.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

fn ceil_nonneg(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        snap(x).ceil() as u64
    }
}

impl RealSet {
    pub fn validate(&self) -> Result<(), LdpError> {
        let ok = match *self {
            RealSet::AtLeast(a) => a.is_finite(),
            RealSet::Closed(a, b) => a.is_finite() && b.is_finite() && a <= b,
            RealSet::Open(a, b) => a.is_finite() && b.is_finite() && a < b,
        };
        if ok {
            Ok(())
        } else {
            Err(LdpError::InvalidSet(format!("{self:?}")))
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            RealSet::AtLeast(a) => x >= a,
            RealSet::Closed(a, b) => a <= x && x <= b,
            RealSet::Open(a, b) => a < x && x < b,
        }
    }

    /// `nF ∩ ℤ_{≥0}`.
    pub fn scaled_integers(&self, n: f64) -> IntegerSet {
        match *self {
            RealSet::AtLeast(a) => IntegerSet::at_least(ceil_nonneg(n * a)),
            RealSet::Closed(a, b) => {
                let hi = snap(n * b);
                if hi < 0.0 {
                    return IntegerSet::empty();
                }
                IntegerSet::range(ceil_nonneg(n * a), hi.floor() as u64)
            }
            RealSet::Open(a, b) => {
                let (lo, hi) = (snap(n * a), snap(n * b));
                if hi <= 0.0 {
                    return IntegerSet::empty();
                }
                let lo = if lo < 0.0 { 0 } else { lo.floor() as u64 + 1 };
                let hi = hi.ceil() as u64 - 1;
                IntegerSet::range(lo, hi)
            }
        }
    }

    /// `inf_{a ∈ F} ell(γ, a)`.
    pub fn inf_ell(&self, gamma: f64) -> Result<f64, LdpError> {
        self.validate()?;
        let (lo, hi) = match *self {
            RealSet::AtLeast(a) => (a, f64::INFINITY),
            RealSet::Closed(a, b) | RealSet::Open(a, b) => (a, b),
        };
        if hi < 0.0 || (matches!(self, RealSet::Open(..)) && hi == 0.0) {
            return Ok(f64::INFINITY);
        }
        // ell(γ, ·) is convex with minimum at γ; the infimum over an interval
        // sits at the clamp of γ, open endpoints included as limits.
        let a = gamma.clamp(lo.max(0.0), hi);
        super::ell(gamma, a)
    }
}

/// Sum of `exp(log p(k) - log p(anchor))` over `k ∈ [lo, hi]`, walking outward from the anchor.
fn relative_sum(mean: f64, lo: u64, hi: Option<u64>, anchor: u64) -> f64 {
    let base = poisson_log_pmf(mean, anchor);
    let mut total = 1.0;
    let mut k = anchor;
    while hi.is_none_or(|h| k < h) {
        k += 1;
        let term = (poisson_log_pmf(mean, k) - base).exp();
        total += term;
        if term <= total * 1e-18 {
            break;
        }
    }
    let mut k = anchor;
    while k > lo {
        k -= 1;
        let term = (poisson_log_pmf(mean, k) - base).exp();
        total += term;
        if term <= total * 1e-18 {
            break;
        }
    }
    total
}

/// Direct summation of `log P(Poisson(mean) ∈ set)`.
fn log_prob_direct(mean: f64, set: IntegerSet) -> f64 {
    if set.is_empty() {
        return f64::NEG_INFINITY;
    }
    if mean == 0.0 {
        return if set.contains(0) { 0.0 } else { f64::NEG_INFINITY };
    }
    // the pmf is unimodal with mode floor(mean); the best point of the set is its clamp
    let mode = mean.floor().min(u64::MAX as f64) as u64;
    let anchor = match set.hi {
        Some(hi) => mode.clamp(set.lo, hi),
        None => mode.max(set.lo),
    };
    poisson_log_pmf(mean, anchor) + relative_sum(mean, set.lo, set.hi, anchor).ln()
}

/// `log P(Poisson(mean) ∈ set)`, `-∞` for an impossible event.
pub fn poisson_tail_log(mean: f64, set: IntegerSet) -> Result<f64, LdpError> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(LdpError::InvalidMean(mean));
    }
    let direct = log_prob_direct(mean, set);
    if direct < -std::f64::consts::LN_2 {
        return Ok(direct);
    }
    // Most of the mass is inside: log1p of the complement keeps precision near 0.
    let mut outside = 0.0;
    if set.lo > 0 {
        outside += log_prob_direct(mean, IntegerSet::range(0, set.lo - 1)).exp();
    }
    if let Some(hi) = set.hi {
        outside += log_prob_direct(mean, IntegerSet::at_least(hi + 1)).exp();
    }
    Ok((-outside).ln_1p())
}
