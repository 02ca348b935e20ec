//! `ψ(a) = inf { ½ ∫_0^t |ḟ|² : f(0) = 0, φ_t(f) = a }` for a Brownian background.
//!
//! The infimum is taken over paths that are linear on `m` equal cells, which
//! gives an upper bound on `ψ(a)` that can only drop as `m` is refined.
//! The equality constraint is handled by an augmented Lagrangian. Its inner
//! problems are solved by gradient steps preconditioned with the energy's own
//! stiffness matrix `K`, so a unit step lands on `f = -(ν + ρc) K⁻¹ ∇φ`.

use crate::modulation::Modulation;
use crate::paths::StateSpace;

use super::LdpError;

const GAUSS_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_69),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_34),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_05),
    (-0.183_434_642_495_649_78, 0.362_683_783_378_361_77),
    (0.183_434_642_495_649_78, 0.362_683_783_378_361_77),
    (0.525_532_409_916_329, 0.313_706_645_877_887_05),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_34),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_69),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SchilderOptions {
    /// Allowed `|φ_t(f) - a|`, relative to `max(1, |a|)`.
    pub tol: f64,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative step for central differences of `φ_t`.
    pub fd_step: f64,
}

impl Default for SchilderOptions {
    fn default() -> Self {
        SchilderOptions {
            tol: 1e-10,
            initial_penalty: 10.0,
            max_penalty: 1e12,
            max_outer: 40,
            max_inner: 500,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchilderSolution {
    pub m: usize,
    /// Discretized energy of the returned path, an upper bound on `ψ(a)`.
    pub value: f64,
    /// Node values `f(t i / m)`, `i = 0..=m`, with `f(0) = 0`.
    pub path: Vec<f64>,
    pub residual: f64,
    pub outer_iterations: usize,
}

fn check(modulation: &Modulation, t: f64, m: usize) -> Result<(), LdpError> {
    if !matches!(modulation.space(), StateSpace::Real) {
        return Err(LdpError::BadParameter("the Schilder problem needs a modulation on the real line".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(LdpError::BadParameter(format!("horizon {t} must be positive")));
    }
    if m < 1 {
        return Err(LdpError::InvalidGrid("need at least one cell".into()));
    }
    Ok(())
}

/// `½ ∫ |ḟ|²` of the piecewise-linear path through `nodes` on `[0, t]`.
pub fn pl_energy(t: f64, nodes: &[f64]) -> f64 {
    let h = t / (nodes.len() - 1) as f64;
    0.5 * nodes.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h
}

/// `φ_t` of the piecewise-linear path through `nodes`.
///
/// Cells are split where the path crosses 0, the only kink of the rate maps
/// admitted on the real line, so `μ(f(r))` is affine on every piece and the
/// tail work is integrated exactly. The outer integral uses 8-point
/// Gauss-Legendre on each piece.
pub fn pl_phi(modulation: &Modulation, t: f64, nodes: &[f64]) -> Result<f64, LdpError> {
    check(modulation, t, nodes.len().saturating_sub(1))?;
    Ok(pl_phi_unchecked(modulation, t, nodes))
}

fn pl_phi_unchecked(modulation: &Modulation, t: f64, nodes: &[f64]) -> f64 {
    let m = nodes.len() - 1;
    let h = t / m as f64;
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(2 * m);
    for i in 0..m {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let (fa, fb) = (nodes[i], nodes[i + 1]);
        if fa * fb < 0.0 {
            let s = a + (b - a) * fa / (fa - fb);
            pieces.push((a, s, fa, 0.0));
            pieces.push((s, b, 0.0, fb));
        } else {
            pieces.push((a, b, fa, fb));
        }
    }
    let (lambda, kappa, mu) = (modulation.lambda(), modulation.kappa(), modulation.mu());
    let mut tail = 0.0;
    let mut total = 0.0;
    for &(a, b, fa, fb) in pieces.iter().rev() {
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let mu_b = mu.eval(fb);
        let mut acc = 0.0;
        for &(xi, w) in &GAUSS_8 {
            let u = 0.5 * (1.0 + xi);
            let s = a + len * u;
            let f = fa + (fb - fa) * u;
            let work = tail + (b - s) * 0.5 * (mu.eval(f) + mu_b);
            acc += w * lambda.eval(f) * (-kappa.eval(f) * work).exp();
        }
        total += 0.5 * len * acc;
        tail += len * 0.5 * (mu.eval(fa) + mu_b);
    }
    total
}

/// Central-difference gradient of `φ_t` with respect to the free nodes `f_1..f_m`.
fn phi_gradient(modulation: &Modulation, t: f64, nodes: &[f64], step: f64) -> Vec<f64> {
    let mut work = nodes.to_vec();
    (1..nodes.len())
        .map(|i| {
            let eta = step * nodes[i].abs().max(1.0);
            work[i] = nodes[i] + eta;
            let up = pl_phi_unchecked(modulation, t, &work);
            work[i] = nodes[i] - eta;
            let down = pl_phi_unchecked(modulation, t, &work);
            work[i] = nodes[i];
            (up - down) / (2.0 * eta)
        })
        .collect()
}

/// Solves `K z = g` for the stiffness matrix of `pl_energy` in the free nodes:
/// `K = (1/h) tridiag(-1, 2, -1)` with last diagonal entry `1/h`.
fn stiffness_solve(h: f64, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let diag = |i: usize| if i + 1 == n { 1.0 / h } else { 2.0 / h };
    let off = -1.0 / h;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off / diag(0);
    d[0] = g[0] / diag(0);
    for i in 1..n {
        let denom = diag(i) - off * c[i - 1];
        c[i] = off / denom;
        d[i] = (g[i] - off * d[i - 1]) / denom;
    }
    let mut z = vec![0.0; n];
    z[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        z[i] = d[i] - c[i] * z[i + 1];
    }
    z
}

fn along(nodes: &[f64], dir: &[f64], tau: f64) -> Vec<f64> {
    let mut out = nodes.to_vec();
    for (o, d) in out[1..].iter_mut().zip(dir) {
        *o += tau * d;
    }
    out
}

/// Smallest-magnitude `τ` with `φ_t(nodes + τ dir) = a`, if a sign change is found.
fn line_root(modulation: &Modulation, t: f64, nodes: &[f64], dir: &[f64], a: f64) -> Option<Vec<f64>> {
    let c = |tau: f64| pl_phi_unchecked(modulation, t, &along(nodes, dir, tau)) - a;
    let c0 = c(0.0);
    if c0 == 0.0 {
        return Some(nodes.to_vec());
    }
    let scale = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut step = 1e-6 / scale;
    let mut bracket = None;
    for _ in 0..80 {
        for tau in [step, -step] {
            if c(tau).signum() != c0.signum() {
                bracket = Some(tau);
                break;
            }
        }
        if bracket.is_some() {
            break;
        }
        step *= 2.0;
    }
    let far = bracket?;
    let (mut lo, mut hi) = (0.0, far);
    let mut c_lo = c0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let cm = c(mid);
        if cm == 0.0 || (hi - lo).abs() <= 1e-16 * mid.abs().max(1e-300) {
            lo = mid;
            break;
        }
        if cm.signum() == c_lo.signum() {
            lo = mid;
            c_lo = cm;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with the smaller residual
    let best = if c(lo).abs() <= c(hi).abs() { lo } else { hi };
    Some(along(nodes, dir, best))
}

fn solve(
    modulation: &Modulation,
    t: f64,
    a: f64,
    m: usize,
    start: Option<Vec<f64>>,
    opts: &SchilderOptions,
) -> Result<SchilderSolution, LdpError> {
    check(modulation, t, m)?;
    if !a.is_finite() {
        return Err(LdpError::BadParameter(format!("target {a} must be finite")));
    }
    let h = t / m as f64;
    let tol = opts.tol * a.abs().max(1.0);
    let zero = vec![0.0; m + 1];
    let phi0 = pl_phi_unchecked(modulation, t, &zero);
    if (phi0 - a).abs() <= tol {
        return Ok(SchilderSolution { m, value: 0.0, path: zero, residual: (phi0 - a).abs(), outer_iterations: 0 });
    }

    let energy = |f: &[f64]| pl_energy(t, f);
    let constraint = |f: &[f64]| pl_phi_unchecked(modulation, t, f) - a;
    let direction = |f: &[f64]| stiffness_solve(h, &phi_gradient(modulation, t, f, opts.fd_step));

    // Start on the constraint along the cheapest first-order direction.
    let mut f = match start {
        Some(f) if f.len() == m + 1 => f,
        _ => {
            let mut z = direction(&zero);
            if z.iter().all(|&v| v == 0.0) {
                z = (1..=m).map(|i| i as f64 * h).collect();
            }
            line_root(modulation, t, &zero, &z, a).unwrap_or(zero.clone())
        }
    };

    let mut nu = 0.0;
    let mut rho = opts.initial_penalty;
    let mut c = constraint(&f);
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        // inner: minimize E + ν c + ρ/2 c²
        let lagrangian = |f: &[f64], c: f64| energy(f) + nu * c + 0.5 * rho * c * c;
        let mut l_cur = lagrangian(&f, c);
        for _ in 0..opts.max_inner {
            let z = direction(&f);
            let weight = nu + rho * c;
            // K⁻¹ ∇L = f + (ν + ρc) K⁻¹ ∇φ
            let d: Vec<f64> = f[1..].iter().zip(&z).map(|(fi, zi)| fi + weight * zi).collect();
            let grad_dot_d: f64 = {
                // ∇L · d = dᵀ K d
                let mut kd = vec![0.0; m];
                for i in 0..m {
                    let left = if i == 0 { 0.0 } else { d[i - 1] };
                    let right = if i + 1 < m { d[i + 1] } else { d[i] };
                    kd[i] = (2.0 * d[i] - left - right) / h;
                }
                kd.iter().zip(&d).map(|(a, b)| a * b).sum()
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-12 {
                let trial = along(&f, &d, -alpha);
                let c_trial = constraint(&trial);
                let l_trial = lagrangian(&trial, c_trial);
                if l_trial <= l_cur - 1e-4 * alpha * grad_dot_d {
                    let moved = alpha * d.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
                    f = trial;
                    c = c_trial;
                    l_cur = l_trial;
                    accepted = moved > 1e-13 * (1.0 + f.iter().fold(0.0f64, |mx, v| mx.max(v.abs())));
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if c.abs() <= tol {
            break;
        }
        let previous = c;
        nu += rho * c;
        c = constraint(&f);
        if c.abs() > 0.25 * previous.abs() && rho < opts.max_penalty {
            rho = (rho * 10.0).min(opts.max_penalty);
        }
    }

    if c.abs() > tol {
        if let Some(projected) = line_root(modulation, t, &f, &direction(&f), a) {
            let cp = constraint(&projected);
            if cp.abs() <= tol {
                f = projected;
                c = cp;
            }
        }
    }
    if c.abs() > tol || f.iter().any(|v| !v.is_finite()) {
        return Err(LdpError::ConstraintViolation { target: a, residual: c.abs() });
    }
    Ok(SchilderSolution { m, value: energy(&f), path: f, residual: c.abs(), outer_iterations: outer })
}

/// Discretized `ψ(a)` with `m` cells.
pub fn schilder_psi(
    modulation: &Modulation,
    t: f64,
    a: f64,
    m: usize,
    opts: &SchilderOptions,
) -> Result<SchilderSolution, LdpError> {
    solve(modulation, t, a, m, None, opts)
}

/// Linear interpolation of `nodes` onto `m + 1` equally spaced points.
fn prolong(nodes: &[f64], m: usize) -> Vec<f64> {
    let coarse = nodes.len() - 1;
    (0..=m)
        .map(|i| {
            let x = i as f64 * coarse as f64 / m as f64;
            let k = (x.floor() as usize).min(coarse - 1);
            let w = x - k as f64;
            nodes[k] + w * (nodes[k + 1] - nodes[k])
        })
        .collect()
}

/// Solves on each `m` in turn, warm-starting from the previous path. When
/// each `m` divides the next, the coarse optimum is feasible on the finer
/// grid, so the returned values never increase.
pub fn schilder_refine(
    modulation: &Modulation,
    t: f64,
    a: f64,
    ms: &[usize],
    opts: &SchilderOptions,
) -> Result<Vec<SchilderSolution>, LdpError> {
    let mut out: Vec<SchilderSolution> = Vec::with_capacity(ms.len());
    for &m in ms {
        let solution = match out.last() {
            None => solve(modulation, t, a, m, None, opts)?,
            Some(prev) => {
                let start = prolong(&prev.path, m);
                let start_residual = (pl_phi(modulation, t, &start)? - a).abs();
                let inherited = SchilderSolution {
                    m,
                    value: pl_energy(t, &start),
                    path: start.clone(),
                    residual: start_residual,
                    outer_iterations: 0,
                };
                match solve(modulation, t, a, m, Some(start), opts) {
                    Ok(s) if s.value <= inherited.value || inherited.residual > opts.tol * a.abs().max(1.0) => s,
                    Ok(_) | Err(LdpError::ConstraintViolation { .. })
                        if inherited.residual <= opts.tol * a.abs().max(1.0) =>
                    {
                        inherited
                    }
                    Ok(s) => s,
                    Err(e) => return Err(e),
                }
            }
        };
        out.push(solution);
    }
    Ok(out)
}
