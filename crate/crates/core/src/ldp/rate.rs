//! The rate function `I(a) = inf_γ [ell(γ; a) + ψ(γ)]`.

use crate::modulation::Modulation;

use super::schilder::{schilder_psi, SchilderOptions};
use super::{ell, AttainableInterval, LdpError};

/// The rate function `ψ` of `φ_t(J_n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiSpec {
    /// `ψ = 0` at `rho`, `∞` elsewhere.
    Degenerate(f64),
    /// `ψ` at increasing nodes, linear between neighbouring finite nodes and
    /// `∞` across any gap next to an infinite node.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
    /// `ψ(γ)` from the discretized Schilder problem, tabulated on `points`
    /// evenly spaced targets in `[lo, hi]`. Unattainable targets get `∞`.
    SchilderVariational { modulation: Modulation, t: f64, m: usize, lo: f64, hi: f64, points: usize },
}

impl PsiSpec {
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, LdpError> {
        let spec = PsiSpec::Tabulated { grid, values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LdpError> {
        match self {
            PsiSpec::Degenerate(rho) => {
                if !(rho.is_finite() && *rho >= 0.0) {
                    return Err(LdpError::InvalidPsi(format!("rho = {rho} must be finite and non-negative")));
                }
            }
            PsiSpec::Tabulated { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return Err(LdpError::InvalidPsi(format!(
                        "{} nodes and {} values",
                        grid.len(),
                        values.len()
                    )));
                }
                if grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(LdpError::InvalidPsi("nodes must be non-negative, finite and increasing".into()));
                }
                if values.iter().any(|v| v.is_nan() || *v < 0.0) {
                    return Err(LdpError::InvalidPsi("values must lie in [0, ∞]".into()));
                }
                if values.iter().all(|v| v.is_infinite()) {
                    return Err(LdpError::EmptyPsiDomain);
                }
            }
            PsiSpec::SchilderVariational { t, m, lo, hi, points, .. } => {
                if !(t.is_finite() && *t > 0.0) || *m < 1 || *points < 2 || !(lo.is_finite() && hi > lo) {
                    return Err(LdpError::InvalidPsi("need t > 0, m >= 1, points >= 2 and lo < hi".into()));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the Schilder variant into a table; the other variants pass through.
    pub fn materialize(&self) -> Result<PsiSpec, LdpError> {
        self.validate()?;
        match self {
            PsiSpec::SchilderVariational { modulation, t, m, lo, hi, points } => {
                let grid: Vec<f64> =
                    (0..*points).map(|i| lo.max(0.0) + (hi - lo.max(0.0)) * i as f64 / (*points - 1) as f64).collect();
                let opts = SchilderOptions::default();
                let values = grid
                    .iter()
                    .map(|&a| match schilder_psi(modulation, *t, a, *m, &opts) {
                        Ok(s) => Ok(s.value),
                        Err(LdpError::ConstraintViolation { .. }) => Ok(f64::INFINITY),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                PsiSpec::tabulated(grid, values)
            }
            other => Ok(other.clone()),
        }
    }
}

/// `I` for an unscaled background: `ell(a_-, a)` below `a_-`, zero on
/// `[a_-, a_+]`, `ell(a_+, a)` above `a_+`, infinite for `a < 0`.
pub fn rate_i_unscaled(interval: &AttainableInterval, a: f64) -> f64 {
    if a < 0.0 {
        f64::INFINITY
    } else if a < interval.a_minus() {
        ell(interval.a_minus(), a).expect("a_- >= 0")
    } else if a <= interval.a_plus() {
        0.0
    } else {
        ell(interval.a_plus(), a).expect("a_+ >= 0")
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimizes `ell(γ, a) + ψ(γ)` over one run `[lo, hi]` of finite table
/// nodes, where `psi` is the linear interpolant.
fn minimize_run(psi: &impl Fn(f64) -> f64, nodes: &[f64], a: f64, resolution: usize) -> f64 {
    let objective = |g: f64| ell(g, a).expect("γ >= 0") + psi(g);
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    let mut candidates: Vec<f64> = nodes.to_vec();
    if hi > lo {
        candidates.extend((0..=resolution).map(|i| lo + (hi - lo) * i as f64 / resolution as f64));
        if (lo..=hi).contains(&a) {
            candidates.push(a);
        }
    }
    candidates.sort_by(|x, y| x.total_cmp(y));
    candidates.dedup();
    let values: Vec<f64> = candidates.iter().map(|&g| objective(g)).collect();
    let (best_i, mut best) =
        values.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if candidates.len() > 1 && best.is_finite() {
        let left = candidates[best_i.saturating_sub(1)];
        let right = candidates[(best_i + 1).min(candidates.len() - 1)];
        // polish on each side of the grid argmin, kinks of ψ sit on nodes
        for (l, r) in [(left, candidates[best_i]), (candidates[best_i], right)] {
            if r > l {
                best = best.min(golden_min(&objective, l, r).1);
            }
        }
    }
    best
}

/// `inf_γ [ell(γ, a) + ψ(γ)]` over `{ψ < ∞}`, by a uniform grid with
/// `resolution` cells on each connected piece plus a golden-section polish.
pub fn rate_i_general(psi: &PsiSpec, a: f64, resolution: usize) -> Result<f64, LdpError> {
    psi.validate()?;
    if resolution < 1 {
        return Err(LdpError::InvalidGrid("resolution must be at least 1".into()));
    }
    if a < 0.0 {
        return Ok(f64::INFINITY);
    }
    let table = psi.materialize()?;
    let PsiSpec::Tabulated { grid, values } = &table else {
        let PsiSpec::Degenerate(rho) = table else { unreachable!() };
        return ell(rho, a);
    };
    let mut best = f64::INFINITY;
    let mut i = 0;
    while i < grid.len() {
        if values[i].is_infinite() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < grid.len() && values[i + 1].is_finite() {
            i += 1;
        }
        let (nodes, vals) = (&grid[start..=i], &values[start..=i]);
        let psi_run = |g: f64| {
            let k = nodes.partition_point(|&x| x <= g).clamp(1, nodes.len().max(2) - 1);
            if nodes.len() == 1 {
                return vals[0];
            }
            let (x0, x1) = (nodes[k - 1], nodes[k]);
            let w = ((g - x0) / (x1 - x0)).clamp(0.0, 1.0);
            vals[k - 1] + w * (vals[k] - vals[k - 1])
        };
        best = best.min(minimize_run(&psi_run, nodes, a, resolution));
        i += 1;
    }
    Ok(best)
}

/// `I` in either regime.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunctionModel {
    Unscaled(AttainableInterval),
    General(PsiSpec),
}

impl RateFunctionModel {
    pub fn eval(&self, a: f64, resolution: usize) -> Result<f64, LdpError> {
        match self {
            RateFunctionModel::Unscaled(interval) => Ok(rate_i_unscaled(interval, a)),
            RateFunctionModel::General(psi) => rate_i_general(psi, a, resolution),
        }
    }

    /// `I` on a grid of `a` values. A Schilder `ψ` is solved once, not per point.
    pub fn tabulate(&self, points: &[f64], resolution: usize) -> Result<Vec<f64>, LdpError> {
        let model = match self {
            RateFunctionModel::General(psi) => RateFunctionModel::General(psi.materialize()?),
            other => other.clone(),
        };
        points.iter().map(|&a| model.eval(a, resolution)).collect()
    }
}
