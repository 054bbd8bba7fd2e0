//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::Instant;

use chsh_selftest::finite_stats::{certify, p_avg_lower_bound, TrialTally};
use chsh_selftest::linalg::hermitian_eigenvalues;
use chsh_selftest::oracle::oracle_p_avg_lower_bound;
use chsh_selftest::quantum::{chsh_operator, state_fidelity_to_bell};
use chsh_selftest::rng::{CounterRng, Stream};
use chsh_selftest::selftest::{
    brute_force_min_measurement_fidelity, dual_certificate_check, max_s_for_alpha, measurement_fidelity_bound,
    optimal_injection, qubit_apparatus_fidelity, singlet_fidelity_bound, SValue, S_STAR, TSIRELSON,
};
use chsh_selftest::simulator::{find_peaks, linspace, simulate_with, sweep_angle, SimulationSummary};
use chsh_selftest::timing::{light_time_budget, locality_margin, SpaceTimeConfig};
use chsh_selftest::tomography::{
    exact_probabilities, reconstruct_from_probabilities, reconstruct_state, simulate_tomography,
    tomographic_measurement_fidelity, ConfusionMatrix,
};
use chsh_selftest::trial_log::{config_header, LogWriter};
use chsh_selftest::{DensityMatrix, Execution, ExperimentConfig, NoiseModel};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn c1_certified_fidelities() -> Outcome {
    let n = 1u64 << 24;
    let c = (n as f64 * (4.0 + 2.236) / 8.0).round() as u64;
    let tally = TrialTally::new(n, c).unwrap();
    let start = Instant::now();
    let r = certify(&tally, 0.99).unwrap();
    let elapsed = start.elapsed();
    let again = certify(&tally, 0.99).unwrap();
    let deterministic =
        r.f_state.to_bits() == again.f_state.to_bits() && r.f_measurement.to_bits() == again.f_measurement.to_bits();
    let passed = (r.f_state - 0.589).abs() <= 0.002
        && (r.f_measurement - 0.895).abs() <= 0.002
        && deterministic
        && elapsed.as_secs_f64() < 1.0;
    outcome(
        passed,
        format!(
            "n={n} c={c} s_lower={:.6} f_state={:.5} f_measurement={:.5} deterministic={deterministic} time={:?}",
            r.bound.s_lower, r.f_state, r.f_measurement, elapsed
        ),
    )
}

fn c2_threshold_anchors() -> Outcome {
    let fs = |s: f64| singlet_fidelity_bound(SValue::new(s).unwrap()).unwrap();
    let fm = |s: f64| measurement_fidelity_bound(SValue::new(s).unwrap()).unwrap();
    let errs = [
        (fs(S_STAR) - 0.5).abs(),
        (fs(TSIRELSON) - 1.0).abs(),
        (fm(2.0) - (2.0 * SQRT_2 + 4.0) / 8.0).abs(),
        (fm(TSIRELSON) - 1.0).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!(
            "F_s(S*)={} F_s(2√2)={} F_m(2)={:.6} F_m(2√2)={} worst={worst:.1e}",
            fs(S_STAR),
            fs(TSIRELSON),
            fm(2.0),
            fm(TSIRELSON)
        ),
    )
}

fn c3_finite_size_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = CounterRng::new(3, Stream::Oracle, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 1 + (rng.next_f64() * 5000.0) as u64;
        let c = ((rng.next_f64() * (n + 1) as f64) as u64).min(n);
        let conf = 0.5 + 0.499 * rng.next_f64();
        let fast = p_avg_lower_bound(&TrialTally::new(n, c).unwrap(), conf).unwrap();
        worst = worst.max((fast - oracle_p_avg_lower_bound(n, c, conf)).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed.as_secs_f64() < 30.0,
        format!("100 tuples, worst |Δp|={worst:.2e}, time={elapsed:?}"),
    )
}

fn c4_dual_certificate() -> Outcome {
    let (mut min_eig, mut worst_dual, mut worst_inj) = (f64::INFINITY, 0.0f64, 0.0f64);
    for k in 0..1000 {
        let a = PI * k as f64 / 999.0;
        let d = dual_certificate_check(a).unwrap();
        let f = qubit_apparatus_fidelity(a);
        min_eig = min_eig.min(d.min_eigenvalue);
        worst_dual = worst_dual.max((d.dual_value / 4.0 - f).abs());
        worst_inj = worst_inj.max((optimal_injection(a).unwrap().achieved_fidelity(a) - f).abs());
    }
    outcome(
        min_eig >= -1e-10 && worst_dual <= 1e-12 && worst_inj <= 1e-9,
        format!("min eigenvalue={min_eig:.2e} |Tr L/4 - F|≤{worst_dual:.1e} |injection - F|≤{worst_inj:.1e}"),
    )
}

fn top_eigenvalue(alpha: f64, beta: f64) -> f64 {
    hermitian_eigenvalues(&chsh_operator(alpha, beta)).unwrap()[3]
}

/// Golden-section maximization of the top eigenvalue over `[lo, hi]`.
fn refine_beta(alpha: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if top_eigenvalue(alpha, m1) < top_eigenvalue(alpha, m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    top_eigenvalue(alpha, 0.5 * (lo + hi))
}

fn c5_ceiling() -> Outcome {
    let m = 200;
    let step = PI / (m - 1) as f64;
    let (mut worst_top, mut worst_max) = (0.0f64, 0.0f64);
    for i in 0..m {
        let a = i as f64 * step;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for j in 0..m {
            let b = j as f64 * step;
            let top = top_eigenvalue(a, b);
            worst_top = worst_top.max((top - 2.0 * (1.0 + a.sin() * b.sin()).sqrt()).abs());
            if top > best.0 {
                best = (top, b);
            }
        }
        let refined = refine_beta(a, (best.1 - step).max(0.0), (best.1 + step).min(PI));
        worst_max = worst_max.max((refined.max(best.0) - max_s_for_alpha(a).unwrap().value()).abs());
    }
    outcome(
        worst_top <= 1e-10 && worst_max <= 1e-6,
        format!("200x200 grid: |λmax - 2√(1+sinα sinβ)|≤{worst_top:.1e}; |max_β - 2√2 sin(α/2+π/4)|≤{worst_max:.1e}"),
    )
}

fn c6_bound_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = CounterRng::new(6, Stream::Oracle, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let s = SValue::new(2.0 + (TSIRELSON - 2.0) * rng.next_f64()).unwrap();
        let brute = brute_force_min_measurement_fidelity(s, 100_000).unwrap();
        worst = worst.max((brute - measurement_fidelity_bound(s).unwrap()).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 2e-6 && elapsed.as_secs_f64() < 60.0,
        format!("50 random S, worst={worst:.2e}, time={elapsed:?}"),
    )
}

/// Standard error of the correlator-based S estimate.
fn s_standard_error(summary: &SimulationSummary) -> f64 {
    let c = &summary.counts;
    let mut var = 0.0;
    for x in 0..2u8 {
        for y in 0..2u8 {
            let e = c.correlator(x, y);
            var += (1.0 - e * e) / c.setting_total(x, y) as f64;
        }
    }
    var.sqrt()
}

fn log_bytes(config: &ExperimentConfig, exec: Execution) -> Vec<u8> {
    let mut w = LogWriter::new(Vec::new(), &config_header(config)).unwrap();
    simulate_with(config, &mut w, exec).unwrap();
    w.into_inner()
}

fn c7_simulator() -> Outcome {
    let ideal = ExperimentConfig::new(1_000_000, 7, NoiseModel::ideal());
    let mut sink = Vec::new();
    let s_ideal = simulate_with(&ideal, &mut sink, Execution::Parallel).unwrap();
    let se_ideal = s_standard_error(&s_ideal);
    let dev_ideal = s_ideal.counts.s_value() - TSIRELSON;
    let mixed = ExperimentConfig::new(
        1_000_000,
        8,
        NoiseModel {
            bell_fidelity: 0.25,
            ..NoiseModel::ideal()
        },
    );
    let s_mixed = simulate_with(&mixed, Vec::new(), Execution::Parallel).unwrap();
    let se_mixed = s_standard_error(&s_mixed);
    let dev_mixed = s_mixed.counts.s_value();
    let same = log_bytes(&ideal, Execution::Workers(1)) == log_bytes(&ideal, Execution::Workers(8));
    outcome(
        dev_ideal.abs() <= 3.0 * se_ideal && dev_mixed.abs() <= 3.0 * se_mixed && same,
        format!(
            "ideal S-2√2={dev_ideal:+.5} (SE {se_ideal:.5}); mixed S={dev_mixed:+.5} (SE {se_mixed:.5}); 1 vs 8 workers identical={same}"
        ),
    )
}

fn c8_tomography() -> Outcome {
    let rho = DensityMatrix::werner(0.859).unwrap();
    let conf = [
        ConfusionMatrix::from_readout_fidelity(0.989).unwrap(),
        ConfusionMatrix::from_readout_fidelity(0.972).unwrap(),
    ];
    let counts = simulate_tomography(&rho, 100_000, &conf, 8, Execution::Parallel).unwrap();
    let corrected = state_fidelity_to_bell(&reconstruct_state(&counts, true, &conf).unwrap());
    let raw = state_fidelity_to_bell(&reconstruct_state(&counts, false, &conf).unwrap());
    let exact = exact_probabilities(&rho, &conf);
    let exact_corrected = state_fidelity_to_bell(&reconstruct_from_probabilities(&exact, true, &conf).unwrap());
    let exact_raw = state_fidelity_to_bell(&reconstruct_from_probabilities(&exact, false, &conf).unwrap());
    // Sampled estimates must sit within 4 standard errors of the exact-probability oracle.
    let tol = 4.0 * (1.0 / (9.0 * 100_000.0f64)).sqrt();
    let passed = (corrected - 0.859).abs() <= 0.01
        && (raw - 0.839).abs() <= 0.01
        && (corrected - exact_corrected).abs() <= tol
        && (raw - exact_raw).abs() <= tol;
    outcome(
        passed,
        format!("corrected={corrected:.4} (oracle {exact_corrected:.4}), uncorrected={raw:.4} (oracle {exact_raw:.4})"),
    )
}

fn c9_tomographic_bound() -> Outcome {
    let f = tomographic_measurement_fidelity(0.0025, 0.014).unwrap();
    outcome((f - 0.972).abs() <= 0.0005, format!("F ≥ {f:.5}"))
}

fn c10_timing() -> Outcome {
    let budget = light_time_budget(32.928).unwrap();
    let m = locality_margin(&SpaceTimeConfig::new(32.928, 106.7)).unwrap();
    let passed = (budget - 109.84).abs() <= 0.01
        && (m.margin_ns - 3.1).abs() <= 0.05
        && (m.margin_fraction - 0.028).abs() <= 0.001;
    outcome(
        passed,
        format!(
            "budget={budget:.3} ns margin={:.3} ns fraction={:.2}% closed={}",
            m.margin_ns,
            100.0 * m.margin_fraction,
            m.closed
        ),
    )
}

fn c11_angle_sweep() -> Outcome {
    let thetas: Vec<f64> = linspace(0.0, 360.0, 29).into_iter().map(f64::to_radians).collect();
    let step = thetas[1] - thetas[0];
    let points = sweep_angle(&NoiseModel::ideal(), &thetas, 36_157, 11, Execution::Parallel).unwrap();
    let peaks = find_peaks(&points);
    if peaks.len() < 2 {
        return outcome(false, format!("found {} maxima", peaks.len()));
    }
    let sep = (peaks[0].theta - peaks[1].theta).abs();
    let sep = sep.min(2.0 * PI - sep);
    let passed = (sep - PI).abs() <= step && peaks[0].s.abs() > S_STAR && peaks[1].s.abs() > S_STAR;
    outcome(
        passed,
        format!(
            "maxima at {:.1}° (S={:+.4}) and {:.1}° (S={:+.4}), separation {:.1}° (grid step {:.2}°)",
            peaks[0].theta.to_degrees(),
            peaks[0].s,
            peaks[1].theta.to_degrees(),
            peaks[1].s,
            sep.to_degrees(),
            step.to_degrees()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("certified fidelities at 2^24 trials", c1_certified_fidelities),
        ("threshold anchors", c2_threshold_anchors),
        ("finite-size bound vs binomial oracle", c3_finite_size_oracle),
        ("dual certificate and optimal injection", c4_dual_certificate),
        ("CHSH ceiling", c5_ceiling),
        ("measurement bound vs grid minimum", c6_bound_equivalence),
        ("simulator statistics and sharding", c7_simulator),
        ("tomography with and without readout correction", c8_tomography),
        ("tomographic measurement-fidelity bound", c9_tomographic_bound),
        ("locality time budget", c10_timing),
        ("angle sweep maxima", c11_angle_sweep),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let r = run();
        if !r.passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {}",
            k + 1,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
