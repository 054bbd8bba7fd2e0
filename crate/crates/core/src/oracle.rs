//! Slow, independent reference computations used to cross-check the fast
//! paths: exact binomial tails, eigenvalue sweeps, bisection inverses and a
//! brute-force search over injection maps. [`verify_suite`] bundles them.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::finite_stats::{p_avg_lower_bound, TrialTally};
use crate::linalg::{c, hermitian_eigen, hermitian_eigenvalues, ComplexMatrix};
use crate::par::Execution;
use crate::quantum::chsh_operator;
use crate::rng::{CounterRng, Stream};
use crate::selftest::{
    alpha_range_for_s, brute_force_min_measurement_fidelity, choi_fidelity, dual_certificate_check, max_s_for_alpha,
    measurement_fidelity_bound, optimal_injection, overlap_operator, qubit_apparatus_fidelity, InjectionMap, SValue,
    TSIRELSON,
};

/// `ln k!` for `k = 0..=n`, by cumulative sums.
pub fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `P(Binomial(n, p) >= c)` by direct summation in log space.
pub fn binomial_tail(n: u64, c: u64, p: f64, ln_fact: &[f64]) -> f64 {
    if c == 0 {
        return 1.0;
    }
    if c > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let nn = n as usize;
    let terms: Vec<f64> = (c as usize..=nn)
        .map(|k| ln_fact[nn] - ln_fact[k] - ln_fact[nn - k] + k as f64 * lp + (nn - k) as f64 * lq)
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    (peak + sum.ln()).exp().min(1.0)
}

/// The `p` with `P(Binomial(n, p) >= c) = target`, by bisection.
pub fn binomial_tail_inverse(n: u64, c: u64, target: f64, ln_fact: &[f64]) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binomial_tail(n, c, mid, ln_fact) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The three-case lower bound on the average winning probability, with
/// every incomplete-beta value replaced by an exact binomial tail.
pub fn oracle_p_avg_lower_bound(n: u64, c: u64, conf_level: f64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let ln_fact = ln_factorials(n);
    let alpha = 1.0 - conf_level;
    let alpha_star = binomial_tail(n, c, (c - 1) as f64 / n as f64, &ln_fact);
    let p = if alpha <= alpha_star {
        binomial_tail_inverse(n, c, alpha, &ln_fact)
    } else {
        (c as f64 - (1.0 - alpha) / (1.0 - alpha_star)) / n as f64
    };
    p.clamp(0.0, c as f64 / n as f64)
}

/// Largest eigenvalue of `M_{alpha,beta}` maximized over `n_beta` points in `[0, pi]`.
pub fn max_s_eigen_sweep(alpha: f64, n_beta: usize) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for k in 0..n_beta {
        let beta = PI * k as f64 / (n_beta - 1).max(1) as f64;
        let ev = hermitian_eigenvalues(&chsh_operator(alpha, beta))?;
        best = best.max(ev[ev.len() - 1]);
    }
    Ok(best)
}

/// Admissible `alpha` interval for `s`, found by bisecting the ceiling
/// `max_s_for_alpha` on `[0, pi/2]` and reflecting about `pi/2`.
pub fn alpha_range_by_bisection(s: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, FRAC_PI_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if max_s_for_alpha(mid)?.value() < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, PI - hi))
}

/// A random valid Choi matrix: `W = G G†` rescaled so that `Tr_1 C = 1`.
pub fn random_choi(rng: &mut CounterRng) -> Result<ComplexMatrix> {
    let data = (0..16).map(|_| c(rng.next_normal(), rng.next_normal())).collect();
    let g = ComplexMatrix::new(4, 4, data)?;
    let w = &g * &g.adjoint();
    let t = w.partial_trace_first();
    let t_inv_sqrt = hermitian_eigen(&t)?.reconstruct_with(|v| 1.0 / v.sqrt());
    let k = ComplexMatrix::identity(2).kron(&t_inv_sqrt);
    Ok(&(&k * &w) * &k)
}

/// Best measurement fidelity found for apparatus angle `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionSearch {
    /// Best over the rotation grid.
    pub best_rotation: f64,
    pub best_theta: f64,
    /// Best fidelity over the random Choi matrices.
    pub best_random: f64,
    /// Largest `Tr(M C) / 4` over the random Choi matrices (the relaxation).
    pub best_random_relaxed: f64,
}

pub fn brute_force_injection(alpha: f64, n_rotations: usize, n_random: usize, seed: u64) -> Result<InjectionSearch> {
    let mut out = InjectionSearch {
        best_rotation: f64::NEG_INFINITY,
        best_theta: 0.0,
        best_random: f64::NEG_INFINITY,
        best_random_relaxed: f64::NEG_INFINITY,
    };
    for k in 0..n_rotations {
        let theta = -FRAC_PI_2 + PI * k as f64 / n_rotations as f64;
        let f = InjectionMap { rotation_theta: theta }.achieved_fidelity(alpha);
        if f > out.best_rotation {
            out.best_rotation = f;
            out.best_theta = theta;
        }
    }
    let m = overlap_operator(alpha);
    let mut rng = CounterRng::new(seed, Stream::Oracle, alpha.to_bits() as u32);
    for _ in 0..n_random {
        let choi = random_choi(&mut rng)?;
        out.best_random = out.best_random.max(choi_fidelity(&choi, alpha));
        out.best_random_relaxed = out.best_random_relaxed.max((&m * &choi).trace().re / 4.0);
    }
    Ok(out)
}

/// Outcome of one cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation or a short summary.
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tolerance {tol:.0e})"),
    }
}

/// Runs the cross-checks between closed forms and oracles.
pub fn verify_suite(seed: u64, exec: Execution) -> Result<Vec<Check>> {
    let scheduler = exec.scheduler();
    let mut out = Vec::new();

    // Dual feasibility and primal-dual tightness.
    let grid: Vec<f64> = (0..1000).map(|k| PI * k as f64 / 999.0).collect();
    let rows = scheduler.map_range(grid.len() as u64, |k| -> Result<(f64, f64, f64)> {
        let a = grid[k as usize];
        let d = dual_certificate_check(a)?;
        let f = qubit_apparatus_fidelity(a);
        let achieved = optimal_injection(a)?.achieved_fidelity(a);
        Ok((-d.min_eigenvalue, (d.dual_value / 4.0 - f).abs(), (achieved - f).abs()))
    });
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let worst = |sel: fn(&(f64, f64, f64)) -> f64| rows.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
    out.push(check("dual certificate is feasible", worst(|r| r.0), 1e-10));
    out.push(check("dual value matches F(alpha)", worst(|r| r.1), 1e-12));
    out.push(check("optimal injection attains F(alpha)", worst(|r| r.2), 1e-9));

    // CHSH ceiling.
    let worst_ceiling = scheduler
        .map_range(50, |i| -> Result<f64> {
            let a = PI * i as f64 / 49.0;
            let mut w = 0.0f64;
            for j in 0..50 {
                let b = PI * j as f64 / 49.0;
                let ev = hermitian_eigenvalues(&chsh_operator(a, b))?;
                w = w.max((ev[3] - 2.0 * (1.0 + a.sin() * b.sin()).sqrt()).abs());
            }
            Ok(w)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(check("CHSH operator spectrum", worst_ceiling, 1e-10));
    let worst_sweep = scheduler
        .map_range(20, |i| -> Result<f64> {
            let a = PI * i as f64 / 19.0;
            Ok((max_s_eigen_sweep(a, 2001)? - max_s_for_alpha(a)?.value()).abs())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(check("CHSH ceiling over beta", worst_sweep, 1e-6));

    // Brute-force injection search.
    let searches = scheduler
        .map_range(5, |i| brute_force_injection(0.2 + 0.6 * i as f64, 10_000, 2_000, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut worst_rot = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for (i, s) in searches.iter().enumerate() {
        let f = qubit_apparatus_fidelity(0.2 + 0.6 * i as f64);
        worst_rot = worst_rot.max((s.best_rotation - f).abs());
        worst_excess = worst_excess.max(s.best_random - f).max(s.best_random_relaxed - f);
    }
    out.push(check("rotation search reaches F(alpha)", worst_rot, 1e-6));
    out.push(Check {
        name: "no random injection beats F(alpha)",
        passed: worst_excess <= 1e-12,
        detail: format!("largest excess {worst_excess:.3e}"),
    });

    // Bound equivalence.
    let mut rng = CounterRng::new(seed, Stream::Oracle, 1 << 20);
    let s_values: Vec<f64> = (0..50).map(|_| 2.0 + (TSIRELSON - 2.0) * rng.next_f64()).collect();
    let worst_bound = scheduler
        .map_range(50, |k| -> Result<f64> {
            let s = SValue::new(s_values[k as usize])?;
            Ok((brute_force_min_measurement_fidelity(s, 100_000)? - measurement_fidelity_bound(s)?).abs())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(check("measurement bound matches grid minimum", worst_bound, 2e-6));
    let worst_range = s_values
        .iter()
        .map(|&s| -> Result<f64> {
            let r = alpha_range_for_s(SValue::new(s)?)?;
            let (lo, hi) = alpha_range_by_bisection(s)?;
            Ok((r.lo - lo).abs().max((r.hi - hi).abs()))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(check("alpha range matches bisection", worst_range, 1e-9));

    // Finite-size bound against exact binomial tails.
    let tuples: Vec<(u64, u64, f64)> = (0..100)
        .map(|_| {
            let n = 1 + (rng.next_f64() * 5000.0) as u64;
            let c = (rng.next_f64() * (n + 1) as f64) as u64;
            let conf = 0.5 + 0.499 * rng.next_f64();
            (n, c.min(n), conf)
        })
        .collect();
    let worst_p = scheduler
        .map_range(tuples.len() as u64, |k| -> Result<f64> {
            let (n, c, conf) = tuples[k as usize];
            let fast = p_avg_lower_bound(&TrialTally::new(n, c)?, conf)?;
            Ok((fast - oracle_p_avg_lower_bound(n, c, conf)).abs())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(check("finite-size bound matches binomial tails", worst_p, 1e-9));

    Ok(out)
}

/// Fails with the first failing check, if any.
pub fn require_all(checks: &[Check]) -> Result<()> {
    match checks.iter().find(|c| !c.passed) {
        Some(c) => Err(Error::Domain(format!("verification failed: {} ({})", c.name, c.detail))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::reg_inc_beta;

    #[test]
    fn binomial_tail_matches_incomplete_beta() {
        let lf = ln_factorials(2000);
        let tail = binomial_tail(2000, 1600, 0.78, &lf);
        let beta = reg_inc_beta(0.78, 1600.0, 401.0).unwrap();
        assert!((tail - beta).abs() < 1e-12, "{tail} vs {beta}");
    }

    #[test]
    fn tail_edges() {
        let lf = ln_factorials(10);
        assert_eq!(binomial_tail(10, 0, 0.3, &lf), 1.0);
        assert!((binomial_tail(10, 10, 0.5, &lf) - 0.5f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn oracle_agrees_at_n_5000() {
        let fast = p_avg_lower_bound(&TrialTally::new(5000, 3900).unwrap(), 0.99).unwrap();
        let slow = oracle_p_avg_lower_bound(5000, 3900, 0.99);
        assert!((fast - slow).abs() < 1e-9);
    }

    #[test]
    fn random_choi_is_valid() {
        let mut rng = CounterRng::new(3, Stream::Oracle, 0);
        for _ in 0..20 {
            let choi = random_choi(&mut rng).unwrap();
            let t = choi.partial_trace_first();
            assert!(t.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
            assert!(hermitian_eigenvalues(&choi).unwrap()[0] > -1e-12);
        }
    }

    #[test]
    fn injection_search_at_one_radian() {
        let s = brute_force_injection(1.0, 10_000, 1_000, 5).unwrap();
        let f = qubit_apparatus_fidelity(1.0);
        assert!((s.best_rotation - f).abs() < 1e-6);
        assert!(s.best_random <= f + 1e-12);
        assert!(s.best_random_relaxed <= f + 1e-12);
    }

    #[test]
    fn ceiling_by_sweep() {
        let a = 0.8;
        let want = TSIRELSON * (a / 2.0 + std::f64::consts::FRAC_PI_4).sin();
        assert!((max_s_eigen_sweep(a, 2001).unwrap() - want).abs() < 1e-6);
    }
}
