//! Checks shared by the property suites and the acceptance harness. Each
//! returns a short summary on success and the first violation on failure.

use modinf::background::BackgroundSpec;
use modinf::ldp::{
    attainable_bounds_dp, attainable_bounds_oracle, ell, poisson_tail_log, rate_i_general, rate_i_unscaled,
    pl_energy, pl_phi, AttainableInterval, PsiSpec, RealSet, DEFAULT_ORACLE_BUDGET,
};
use modinf::modulation::{phi, Modulation};
use modinf::paths::{StateSpace, StepPath};
use modinf::queue::{chi_square_homogeneity, empirical_pmf, simulate_replicas, tv_distance, SimMode};
use modinf::rng::{Purpose, SimRng, StreamFactory};
use rand::Rng;

pub type Check = Result<String, String>;

fn rng(seed: u64, tag: u64) -> SimRng {
    StreamFactory::new(seed).stream(Purpose::Test(tag), 0)
}

/// `ell(γ1, a) <= ell(γ2, a)` for `a <= γ1` and `>=` for `a >= γ2`, whenever `γ1 <= γ2`.
pub fn ell_ordering(g1: f64, g2: f64, a: f64) -> Result<(), String> {
    let (l1, l2) = (ell(g1, a).unwrap(), ell(g2, a).unwrap());
    if a <= g1 && l1 > l2 {
        return Err(format!("ell({g1}, {a}) = {l1} > ell({g2}, {a}) = {l2}"));
    }
    if a >= g2 && l1 < l2 {
        return Err(format!("ell({g1}, {a}) = {l1} < ell({g2}, {a}) = {l2}"));
    }
    Ok(())
}

pub fn ell_ordering_battery(seed: u64, triples: usize) -> Check {
    let mut r = rng(seed, 1);
    for _ in 0..triples {
        let a: f64 = r.random_range(0.0..10.0);
        let x: f64 = r.random_range(0.0..10.0);
        let y: f64 = r.random_range(0.0..10.0);
        // Two draws in three put `a` inside one of the two ordered regions.
        let (g1, g2) = (x.min(y), x.max(y));
        let a = match r.random_range(0..3) {
            0 => a * g1 / 10.0,
            1 => g2 + a,
            _ => a,
        };
        ell_ordering(g1, g2, a)?;
    }
    Ok(format!("{triples} triples, 0 violations"))
}

/// The closed form of `I` for an unscaled background against the infimum
/// `inf_{γ ∈ [a_-, a_+]} ell(γ, a)` with `ψ = 0` on the interval.
pub fn four_branch(seed: u64, points_per_branch: usize) -> Check {
    let mut r = rng(seed, 2);
    let lo: f64 = r.random_range(0.1..2.0);
    let hi = lo + r.random_range(0.1..2.0);
    let interval = AttainableInterval::new(lo, hi).unwrap();
    let psi = PsiSpec::tabulated(vec![lo, hi], vec![0.0, 0.0]).unwrap();
    let branches: [(f64, f64); 4] = [(-5.0, 0.0), (0.0, lo), (lo, hi), (hi, hi + 6.0)];
    let mut worst: f64 = 0.0;
    for (b, &(from, to)) in branches.iter().enumerate() {
        for i in 0..points_per_branch {
            let a = from + (to - from) * (i as f64 + 0.5) / points_per_branch as f64;
            let closed = rate_i_unscaled(&interval, a);
            let expected = match b {
                0 => f64::INFINITY,
                1 => ell(lo, a).unwrap(),
                2 => 0.0,
                _ => ell(hi, a).unwrap(),
            };
            let inf = rate_i_general(&psi, a, 200).unwrap();
            if closed != expected {
                return Err(format!("branch {b}, a = {a}: closed form {closed}, branch value {expected}"));
            }
            if closed.is_infinite() {
                if inf.is_finite() {
                    return Err(format!("a = {a}: infimum {inf} should be infinite"));
                }
                continue;
            }
            let err = (closed - inf).abs();
            worst = worst.max(err);
            if err > 1e-9 * closed.max(1.0) {
                return Err(format!("a = {a}: closed form {closed} vs infimum {inf}"));
            }
            if b == 2 && closed != 0.0 {
                return Err(format!("a = {a} in [a_-, a_+] but I = {closed}"));
            }
            if b != 2 && a >= 0.0 && closed <= 0.0 {
                return Err(format!("a = {a} outside [a_-, a_+] but I = {closed}"));
            }
        }
    }
    Ok(format!("[{lo:.3}, {hi:.3}], {} points, max |closed - inf| = {worst:.1e}", 4 * points_per_branch))
}

/// `ψ = 0` on `[α, β] ∪ [γ, δ]`, `∞` elsewhere.
pub fn disconnected_fixture(tol: f64) -> Check {
    let (alpha, beta, gamma, delta) = (0.5, 1.0, 2.0, 3.0);
    let psi = PsiSpec::tabulated(vec![alpha, beta, 1.5, gamma, delta], vec![0.0, 0.0, f64::INFINITY, 0.0, 0.0]).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=600 {
        let a = i as f64 * 0.01;
        let expected = if a < alpha {
            ell(alpha, a).unwrap()
        } else if a <= beta || (gamma..=delta).contains(&a) {
            0.0
        } else if a < gamma {
            ell(beta, a).unwrap().min(ell(gamma, a).unwrap())
        } else {
            ell(delta, a).unwrap()
        };
        let got = rate_i_general(&psi, a, 2000).unwrap();
        let err = (got - expected).abs();
        worst = worst.max(err);
        if err > tol {
            return Err(format!("a = {a}: I = {got}, expected {expected}"));
        }
    }
    Ok(format!("601 points, max error {worst:.1e}"))
}

/// Exact enumeration of `P(Poisson(nγ) ∈ nB(x, δ))` over a `γ` grid on
/// `B_+(λ, ε)`: the minimum sits in `(B(λ, ε) ∩ B̄(x, δ)) ∪ {λ_ε^-, λ_ε^+}`.
pub fn restricted_infimum(seed: u64, instances: usize, h: f64) -> Check {
    let mut r = rng(seed, 3);
    for case in 0..instances {
        let n: u64 = r.random_range(1..=6);
        let x: f64 = r.random_range(0.0..3.0);
        let delta: f64 = r.random_range(0.05..1.0);
        let lambda: f64 = r.random_range(0.0..3.0);
        let eps: f64 = r.random_range(0.05..1.0);
        let set = RealSet::Open(x - delta, x + delta).scaled_integers(n as f64);
        let prob = |g: f64| poisson_tail_log(n as f64 * g, set).unwrap().exp();
        let (lo, hi) = ((lambda - eps).max(0.0), lambda + eps);
        let steps = ((hi - lo) / h).ceil() as usize;
        let grid: Vec<f64> = (0..=steps).map(|i| (lo + i as f64 * h).min(hi)).collect();
        let values: Vec<f64> = grid.iter().map(|&g| prob(g)).collect();
        let in_c = |g: f64| g == lo || g == hi || (g - x).abs() <= delta;
        let (argmin, full_min) =
            values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let restricted_min =
            grid.iter().zip(&values).filter(|(g, _)| in_c(**g)).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
        let resolution = values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        let g = grid[argmin];
        let distance = if in_c(g) { 0.0 } else { ((g - x).abs() - delta).min(g - lo).min(hi - g) };
        if distance > h + 1e-12 && values[argmin] < restricted_min - 1e-15 {
            return Err(format!(
                "case {case}: n={n} x={x} δ={delta} λ={lambda} ε={eps}: minimum {full_min} at γ={g}, {distance} away from the restricted set"
            ));
        }
        if restricted_min - full_min > resolution + 1e-15 {
            return Err(format!("case {case}: restricted minimum {restricted_min} vs {full_min}"));
        }
    }
    Ok(format!("{instances} instances, γ grid {h}"))
}

/// `f(γ) = -inf_{a ≥ a0} ell(γ, a)`: grid continuity moduli shrink linearly with the step.
pub fn varadhan_continuity(a0: f64) -> Check {
    let f = |g: f64| -RealSet::AtLeast(a0).inf_ell(g).unwrap();
    let modulus = |h: f64| {
        let steps = (6.0 / h) as usize;
        (0..steps).map(|i| 0.01 + i as f64 * h).map(|g| (f(g + h) - f(g)).abs()).fold(0.0, f64::max)
    };
    let w = [modulus(1e-2), modulus(1e-3), modulus(1e-4)];
    if !(w[0] > w[1] && w[1] > w[2] && w[2] <= 0.2 * w[1] && w[1] <= 0.2 * w[0]) {
        return Err(format!("a0 = {a0}: moduli {w:?} do not shrink with the step"));
    }
    if !(0..1000).map(|i| 0.01 + i as f64 * 0.006).all(|g| f(g).is_finite() && f(g) <= 0.0) {
        return Err(format!("a0 = {a0}: f is not real-valued on the grid"));
    }
    Ok(format!("moduli {:.1e} {:.1e} {:.1e}", w[0], w[1], w[2]))
}

pub fn random_modulation(r: &mut SimRng, d: usize) -> Modulation {
    let mut draw = |hi: f64| (0..d).map(|_| r.random_range(0.0..hi)).collect::<Vec<f64>>();
    let (lambda, kappa, mu) = (draw(5.0), draw(3.0), draw(3.0));
    super::finite_modulation(lambda, kappa, mu)
}

/// Value iteration against path enumeration (3 jumps on a 40-point grid).
pub fn dp_vs_oracle(seed: u64, count: usize, tol: f64) -> Check {
    let mut r = rng(seed, 4);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let d = 2 + case % 2;
        let m = random_modulation(&mut r, d);
        let dp = attainable_bounds_dp(&m, 1.0, 64, 1025, 1e-3, 4).map_err(|e| e.to_string())?;
        let oracle = attainable_bounds_oracle(&m, 1.0, 3, 40, DEFAULT_ORACLE_BUDGET).map_err(|e| e.to_string())?;
        let err = (dp.interval.a_minus() - oracle.a_minus()).abs().max((dp.interval.a_plus() - oracle.a_plus()).abs());
        worst = worst.max(err);
        if err > tol {
            return Err(format!("case {case} ({d} states): dp {:?} vs oracle {oracle:?}", dp.interval));
        }
    }
    Ok(format!("{count} modulations, max gap {worst:.1e}"))
}

pub struct LawComparison {
    pub tv: f64,
    pub p_value: f64,
}

/// Direct and conditional simulation on independent streams.
pub fn law_equivalence(spec: &BackgroundSpec, m: &Modulation, t: f64, replicas: u64, seed: u64) -> LawComparison {
    let streams = StreamFactory::new(seed);
    let counts = |mode| -> Vec<u64> {
        simulate_replicas(spec, m, t, mode, replicas, &streams).unwrap().iter().map(|r| r.count).collect()
    };
    let (direct, conditional) = (counts(SimMode::Direct), counts(SimMode::Conditional));
    let tv = tv_distance(&empirical_pmf(&direct).unwrap(), &empirical_pmf(&conditional).unwrap());
    let chi = chi_square_homogeneity(&direct, &conditional).unwrap();
    LawComparison { tv, p_value: chi.p_value }
}

/// `phi` against quadrature on random step paths with at most ten segments and rates in `[0, 5]`.
pub fn phi_quadrature_battery(seed: u64, count: usize, tol: f64) -> Check {
    let mut r = rng(seed, 5);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let d = r.random_range(1..=4);
        let m = {
            let mut draw = || (0..d).map(|_| r.random_range(0.0..5.0)).collect::<Vec<f64>>();
            let (l, k, u) = (draw(), draw(), draw());
            super::finite_modulation(l, k, u)
        };
        let segments = r.random_range(1..=10);
        let mut cuts: Vec<f64> = (1..segments).map(|_| r.random_range(0.0..1.0)).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut bps = vec![(0.0, r.random_range(0..d) as f64)];
        bps.extend(cuts.into_iter().filter(|&c| c > 0.0).map(|c| (c, r.random_range(0..d) as f64)));
        let path = StepPath::new(StateSpace::indexed(d).unwrap(), &bps, 1.0).unwrap();
        let t = r.random_range(0.05..=1.0);
        let exact = phi(&path, &m, t).unwrap();
        let quad = super::phi_by_quadrature(&path, &m, t);
        if exact == 0.0 && quad == 0.0 {
            continue;
        }
        let rel = (exact - quad).abs() / exact.abs();
        worst = worst.max(rel);
        if !(rel <= tol) {
            return Err(format!("case {case}: phi {exact} vs quadrature {quad}"));
        }
    }
    Ok(format!("{count} paths, max relative error {worst:.1e}"))
}

/// Nodes of `c g(s)` on the uniform grid with `m` cells, `c` chosen so that `φ_t = a`.
pub fn feasible_comparison(m: &Modulation, t: f64, a: f64, cells: usize, g: &dyn Fn(f64) -> f64) -> Option<Vec<f64>> {
    let nodes = |c: f64| (0..=cells).map(|i| c * g(t * i as f64 / cells as f64)).collect::<Vec<f64>>();
    let gap = |c: f64| pl_phi(m, t, &nodes(c)).unwrap() - a;
    let (mut lo, mut hi) = (0.0, 1.0);
    while gap(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    if gap(lo) > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(nodes(0.5 * (lo + hi)))
}

pub fn comparison_shapes() -> Vec<(&'static str, Box<dyn Fn(f64) -> f64>)> {
    vec![
        ("linear", Box::new(|s: f64| s)),
        ("quadratic", Box::new(|s: f64| s * s)),
        ("cubic", Box::new(|s: f64| s.powi(3))),
        ("square root", Box::new(|s: f64| s.sqrt())),
        ("concave parabola", Box::new(|s: f64| s * (2.0 - s))),
        ("quarter sine", Box::new(|s: f64| (std::f64::consts::FRAC_PI_2 * s).sin())),
        ("early ramp", Box::new(|s: f64| (3.0 * s).min(1.0))),
        ("late ramp", Box::new(|s: f64| (2.0 * s - 1.0).max(0.0))),
        ("dip then rise", Box::new(|s: f64| s * s - 0.3 * s * (1.0 - s))),
        ("logistic", Box::new(|s: f64| 1.0 / (1.0 + (-10.0 * (s - 0.5)).exp()) - 1.0 / (1.0 + 5f64.exp()))),
    ]
}

/// The solver's value is at most the energy of every feasible comparison path.
pub fn schilder_battery(m: &Modulation, t: f64, a: f64, cells: usize, value: f64) -> Check {
    let mut smallest = f64::INFINITY;
    for (name, g) in comparison_shapes() {
        let nodes = feasible_comparison(m, t, a, cells, g.as_ref()).ok_or(format!("{name}: no feasible scaling"))?;
        let energy = pl_energy(t, &nodes);
        smallest = smallest.min(energy);
        if value > energy * (1.0 + 1e-9) {
            return Err(format!("{name}: energy {energy} below solver value {value}"));
        }
    }
    Ok(format!("a = {a}: value {value:.6} <= min comparison {smallest:.6}"))
}
