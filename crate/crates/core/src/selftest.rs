//! Self-testing bounds: certified state and measurement fidelities as
//! functions of the CHSH value, the qubit apparatus fidelity `F(alpha)`, its
//! dual certificate and the optimal injection rotation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, re, ComplexMatrix, C64};
use crate::quantum::basis_pair;

/// Local hidden-variable bound.
pub const S_LHV: f64 = 2.0;
/// Tsirelson bound `2√2`.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;
/// Below this CHSH value the state bound is trivial: `(16 + 14√2) / 17`.
pub const S_STAR: f64 = (16.0 + 14.0 * SQRT_2) / 17.0;
/// Slack for CHSH values that overshoot `2√2` through rounding.
pub const TSIRELSON_SLACK: f64 = 1e-9;
/// `F_m(2) = (2√2 + 4) / 8`, the measurement fidelity any qubit apparatus reaches.
pub const TRIVIAL_MEASUREMENT_FIDELITY: f64 = (2.0 * SQRT_2 + 4.0) / 8.0;

/// A CHSH value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SValue(f64);

impl SValue {
    /// Accepts any value in `[-2√2, 2√2]`, clamping overshoots up to
    /// [`TSIRELSON_SLACK`].
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value.abs() > TSIRELSON + TSIRELSON_SLACK {
            return Err(Error::OutOfRange {
                what: "CHSH value",
                value,
                lo: -TSIRELSON,
                hi: TSIRELSON,
            });
        }
        Ok(Self(value.clamp(-TSIRELSON, TSIRELSON)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The value, if it lies in the certifiable window `[2, 2√2]`.
    pub fn certifiable(self) -> Result<f64> {
        if self.0 < S_LHV {
            return Err(Error::OutOfRange {
                what: "CHSH value",
                value: self.0,
                lo: S_LHV,
                hi: TSIRELSON,
            });
        }
        Ok(self.0)
    }
}

/// Lower bound on the extractable singlet fidelity,
/// `1/2 + 1/2 (S - S*) / (2√2 - S*)`.
pub fn singlet_fidelity_bound(s: SValue) -> Result<f64> {
    let s = s.certifiable()?;
    Ok(0.5 + 0.5 * (s - S_STAR) / (TSIRELSON - S_STAR))
}

/// Minimal measurement fidelity compatible with `S`: `(√2 S + 4) / 8`.
pub fn measurement_fidelity_bound(s: SValue) -> Result<f64> {
    let s = s.certifiable()?;
    Ok((SQRT_2 * s + 4.0) / 8.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=PI).contains(&alpha) {
        return Err(Error::OutOfRange {
            what: "apparatus angle alpha",
            value: alpha,
            lo: 0.0,
            hi: PI,
        });
    }
    Ok(())
}

/// Best fidelity of the qubit apparatus with basis separation `alpha` to the
/// ideal Z/X pair: `(2 + √2 cos(alpha/2) + √2 sin(alpha/2)) / 4`.
pub fn qubit_apparatus_fidelity(alpha: f64) -> f64 {
    let (s, c) = (alpha / 2.0).sin_cos();
    0.25 * (2.0 + SQRT_2 * c + SQRT_2 * s)
}

/// Largest CHSH value an apparatus with separation `alpha` can produce:
/// `2√2 sin(alpha/2 + pi/4)`.
pub fn max_s_for_alpha(alpha: f64) -> Result<SValue> {
    check_alpha(alpha)?;
    SValue::new(TSIRELSON * (alpha / 2.0 + FRAC_PI_4).sin())
}

/// Interval of apparatus angles compatible with an observed CHSH value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
}

impl AlphaRange {
    pub fn contains(&self, alpha: f64) -> bool {
        (self.lo..=self.hi).contains(&alpha)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub fn alpha_range_for_s(s: SValue) -> Result<AlphaRange> {
    let s = s.certifiable()?;
    let half = (s / TSIRELSON).min(1.0).asin();
    let lo = (2.0 * half - FRAC_PI_2).clamp(0.0, PI);
    let hi = (1.5 * PI - 2.0 * half).clamp(0.0, PI);
    // Collapse exactly onto pi/2 at the Tsirelson point.
    if hi < lo {
        return Ok(AlphaRange {
            lo: FRAC_PI_2,
            hi: FRAC_PI_2,
        });
    }
    Ok(AlphaRange { lo, hi })
}

/// `|00><00| + |11><11| + |+_a +><+_a +| + |-_a -><-_a -|`, with the
/// apparatus side as the first tensor factor.
pub fn overlap_operator(alpha: f64) -> ComplexMatrix {
    let zero_one = basis_pair(0.0);
    let alpha_pair = basis_pair(alpha);
    let ideal_x = basis_pair(FRAC_PI_2);
    let mut m = ComplexMatrix::zeros(4, 4);
    for k in 0..2 {
        let z = kron2(&zero_one[k], &zero_one[k]);
        let x = kron2(&alpha_pair[k], &ideal_x[k]);
        m = &m + &ComplexMatrix::projector(&z);
        m = &m + &ComplexMatrix::projector(&x);
    }
    m
}

fn kron2(u: &[C64; 2], v: &[C64; 2]) -> [C64; 4] {
    [u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]]
}

/// The 4x4 matrix whose characteristic polynomial is
/// `X^4 - 4X^2 + 2(1 + cos 2alpha)`; it shares its spectrum with `2M(alpha) - 2`.
pub fn n_matrix(alpha: f64) -> ComplexMatrix {
    let (s, c) = alpha.sin_cos();
    #[rustfmt::skip]
    let entries = [
        1.0, c,   0.0, s,
        c,   -1.0, s,  0.0,
        0.0, s,   -1.0, -c,
        s,   0.0, -c,  1.0,
    ];
    ComplexMatrix::from_real(4, &entries)
}

/// Dual variable `L = (2 + √(2(1 + sin alpha))) / 2 · I`.
pub fn dual_operator(alpha: f64) -> ComplexMatrix {
    let ell = 0.5 * (2.0 + (2.0 * (1.0 + alpha.sin())).sqrt());
    ComplexMatrix::identity(2).scale(re(ell))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualCheck {
    /// Smallest eigenvalue of `I ⊗ L - M(alpha)`; non-negative for a feasible dual.
    pub min_eigenvalue: f64,
    /// `Tr L`, an upper bound on `max Tr(M C)` over Choi matrices.
    pub dual_value: f64,
}

pub fn dual_certificate_check(alpha: f64) -> Result<DualCheck> {
    check_alpha(alpha)?;
    let ell = dual_operator(alpha);
    let slack = &ComplexMatrix::identity(2).kron(&ell) - &overlap_operator(alpha);
    let min_eigenvalue = hermitian_eigenvalues(&slack)?[0];
    Ok(DualCheck {
        min_eigenvalue,
        dual_value: ell.trace().re,
    })
}

/// A real planar rotation `[[cos t, sin t], [-sin t, cos t]]` used as the
/// injection map of an ideal qubit into the apparatus input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionMap {
    pub rotation_theta: f64,
}

impl InjectionMap {
    pub fn rotation(&self) -> ComplexMatrix {
        let (s, c) = self.rotation_theta.sin_cos();
        ComplexMatrix::from_real(2, &[c, s, -s, c])
    }

    /// `C = Σ_ij V(|i><j|) ⊗ |i><j|`, output factor first.
    pub fn choi_matrix(&self) -> ComplexMatrix {
        let r = self.rotation();
        let rt = r.adjoint();
        let mut choi = ComplexMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                let mut eij = ComplexMatrix::zeros(2, 2);
                eij[(i, j)] = re(1.0);
                let image = &(&r * &eij) * &rt;
                choi = &choi + &image.kron(&eij);
            }
        }
        choi
    }

    pub fn achieved_fidelity(&self, alpha: f64) -> f64 {
        choi_fidelity(&self.choi_matrix(), alpha)
    }
}

/// The four overlaps `<00|C|00>, <11|C|11>, <+_a +|C|+_a +>, <-_a -|C|-_a ->`.
pub fn choi_overlaps(choi: &ComplexMatrix, alpha: f64) -> [f64; 4] {
    let z = basis_pair(0.0);
    let a = basis_pair(alpha);
    let x = basis_pair(FRAC_PI_2);
    [
        choi.expectation(&kron2(&z[0], &z[0])).re,
        choi.expectation(&kron2(&z[1], &z[1])).re,
        choi.expectation(&kron2(&a[0], &x[0])).re,
        choi.expectation(&kron2(&a[1], &x[1])).re,
    ]
}

/// Measurement fidelity reached by an injection with Choi matrix `choi`:
/// `(Σ_k √overlap_k)^2 / 16`.
pub fn choi_fidelity(choi: &ComplexMatrix, alpha: f64) -> f64 {
    let sum: f64 = choi_overlaps(choi, alpha).iter().map(|o| o.max(0.0).sqrt()).sum();
    sum * sum / 16.0
}

/// The rotation `theta = pi/8 - alpha/4`, which equalizes the four overlaps
/// and so attains `F(alpha)`.
pub fn optimal_injection(alpha: f64) -> Result<InjectionMap> {
    check_alpha(alpha)?;
    Ok(InjectionMap {
        rotation_theta: PI / 8.0 - alpha / 4.0,
    })
}

/// Minimum of `F(alpha)` over a uniform grid spanning the admissible range
/// for `s` (endpoints included).
pub fn brute_force_min_measurement_fidelity(s: SValue, grid_size: usize) -> Result<f64> {
    if grid_size < 100 {
        return Err(Error::Domain(format!(
            "grid_size must be at least 100 (got {grid_size})"
        )));
    }
    let range = alpha_range_for_s(s)?;
    let step = range.width() / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|k| qubit_apparatus_fidelity(range.lo + step * k as f64))
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> SValue {
        SValue::new(v).unwrap()
    }

    #[test]
    fn state_bound_anchors() {
        assert!((singlet_fidelity_bound(s(S_STAR)).unwrap() - 0.5).abs() < 1e-12);
        assert!((singlet_fidelity_bound(s(TSIRELSON)).unwrap() - 1.0).abs() < 1e-12);
        let f = singlet_fidelity_bound(s(2.2351)).unwrap();
        assert!((f - 0.589).abs() < 1e-3, "{f}");
        assert!(singlet_fidelity_bound(s(1.9)).is_err());
    }

    #[test]
    fn measurement_bound_anchors() {
        let f2 = measurement_fidelity_bound(s(2.0)).unwrap();
        assert!((f2 - TRIVIAL_MEASUREMENT_FIDELITY).abs() < 1e-15);
        assert!((f2 - 0.853_553).abs() < 1e-6);
        assert!((measurement_fidelity_bound(s(TSIRELSON)).unwrap() - 1.0).abs() < 1e-15);
        assert!((measurement_fidelity_bound(s(2.2357)).unwrap() - 0.895).abs() < 5e-4);
    }

    #[test]
    fn tsirelson_overshoot_is_clamped() {
        let v = SValue::new(TSIRELSON + 5e-10).unwrap();
        assert_eq!(v.value(), TSIRELSON);
        assert!(SValue::new(TSIRELSON + 1e-6).is_err());
    }

    #[test]
    fn apparatus_fidelity_anchors() {
        assert!((qubit_apparatus_fidelity(FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert!((qubit_apparatus_fidelity(0.0) - (2.0 + SQRT_2) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn ceiling_anchors() {
        assert!((max_s_for_alpha(FRAC_PI_2).unwrap().value() - TSIRELSON).abs() < 1e-15);
        assert!((max_s_for_alpha(0.0).unwrap().value() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_range_endpoints() {
        let r = alpha_range_for_s(s(TSIRELSON)).unwrap();
        assert!((r.lo - FRAC_PI_2).abs() < 1e-7 && (r.hi - FRAC_PI_2).abs() < 1e-7);
        let r = alpha_range_for_s(s(2.0)).unwrap();
        assert!(r.lo.abs() < 1e-12 && (r.hi - PI).abs() < 1e-12);
        assert!(((r.lo + r.hi) / 2.0 - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn dual_anchors() {
        let d = dual_certificate_check(FRAC_PI_2).unwrap();
        assert!((d.dual_value / 4.0 - 1.0).abs() < 1e-15);
        assert!(d.min_eigenvalue >= -1e-10);
        let d = dual_certificate_check(0.0).unwrap();
        assert!((d.dual_value / 4.0 - 0.853_553_390_593_273_8).abs() < 1e-12);
        assert!(d.min_eigenvalue >= -1e-10);
    }

    #[test]
    fn n_matrix_spectrum_matches_scaled_overlap_operator() {
        for k in 0..=20 {
            let alpha = PI * k as f64 / 20.0;
            let n = hermitian_eigenvalues(&n_matrix(alpha)).unwrap();
            let m = overlap_operator(alpha);
            let shifted = &m.scale(re(2.0)) - &ComplexMatrix::identity(4).scale(re(2.0));
            let m_ev = hermitian_eigenvalues(&shifted).unwrap();
            for (a, b) in n.iter().zip(&m_ev) {
                assert!((a - b).abs() < 1e-12, "alpha = {alpha}: {n:?} vs {m_ev:?}");
            }
        }
    }

    #[test]
    fn injection_anchors() {
        assert!(optimal_injection(FRAC_PI_2).unwrap().rotation_theta.abs() < 1e-15);
        assert!((optimal_injection(0.0).unwrap().rotation_theta - PI / 8.0).abs() < 1e-15);
        let inj = optimal_injection(1.2).unwrap();
        assert!((inj.achieved_fidelity(1.2) - qubit_apparatus_fidelity(1.2)).abs() < 1e-9);
        let o = choi_overlaps(&inj.choi_matrix(), 1.2);
        for k in 1..4 {
            assert!((o[k] - o[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn injection_choi_is_valid_channel() {
        for k in 0..=10 {
            let alpha = PI * k as f64 / 10.0;
            let choi = optimal_injection(alpha).unwrap().choi_matrix();
            assert!(hermitian_eigenvalues(&choi).unwrap()[0] >= -1e-12);
            assert!(choi.partial_trace_first().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        }
    }

    #[test]
    fn brute_force_anchors() {
        let f = brute_force_min_measurement_fidelity(s(2.0), 1000).unwrap();
        assert!((f - TRIVIAL_MEASUREMENT_FIDELITY).abs() < 1e-12);
        let f = brute_force_min_measurement_fidelity(s(TSIRELSON), 1000).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        let f = brute_force_min_measurement_fidelity(s(2.236), 100_000).unwrap();
        assert!((f - 0.89527).abs() < 1e-5, "{f}");
        assert!(brute_force_min_measurement_fidelity(s(2.1), 10).is_err());
    }
}
