//! Two-qubit states, binary projective qubit measurements and CHSH operators.
//!
//! Computational-basis ordering is `|ab>` with node A as the first tensor
//! factor, i.e. index `2a + b`. Measurement outcomes are bits; outcome 0
//! maps to correlator value +1 and outcome 1 to -1.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, re, ComplexMatrix, C64};

const STATE_TRACE_TOL: f64 = 1e-12;
const STATE_HERMITIAN_TOL: f64 = 1e-12;
const STATE_PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
}

pub fn pauli(axis: PauliAxis) -> ComplexMatrix {
    match axis {
        PauliAxis::X => ComplexMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]),
        PauliAxis::Y => ComplexMatrix::new(2, 2, vec![re(0.0), c(0.0, -1.0), c(0.0, 1.0), re(0.0)]).expect("2x2"),
        PauliAxis::Z => ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    A,
    B,
}

/// The `|+_phi>` / `|-_phi>` pair whose Bloch vectors sit at angle `phi`
/// (and `phi + pi`) from +z in the x-z plane.
pub fn basis_pair(phi: f64) -> [[C64; 2]; 2] {
    let (s, co) = (phi / 2.0).sin_cos();
    [[re(co), re(s)], [re(s), re(-co)]]
}

/// A binary qubit apparatus: setting 0 measures in the computational basis,
/// setting 1 in the `|±_alpha>` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitMeasurement {
    pub angle_alpha: f64,
    pub node: Node,
}

impl QubitMeasurement {
    pub fn new(angle_alpha: f64, node: Node) -> Result<Self> {
        if !(0.0..=PI).contains(&angle_alpha) {
            return Err(Error::OutOfRange {
                what: "measurement angle alpha",
                value: angle_alpha,
                lo: 0.0,
                hi: PI,
            });
        }
        Ok(Self { angle_alpha, node })
    }

    pub fn ideal(node: Node) -> Self {
        Self {
            angle_alpha: PI / 2.0,
            node,
        }
    }

    /// Bloch angle of the outcome-0 eigenvector for `setting`.
    pub fn direction(&self, setting: u8) -> f64 {
        if setting == 0 {
            0.0
        } else {
            self.angle_alpha
        }
    }
}

pub fn measurement_projectors(m: &QubitMeasurement, setting: u8) -> (ComplexMatrix, ComplexMatrix) {
    let [plus, minus] = basis_pair(m.direction(setting));
    (ComplexMatrix::projector(&plus), ComplexMatrix::projector(&minus))
}

fn direction_operator(phi: f64) -> ComplexMatrix {
    let (s, co) = phi.sin_cos();
    ComplexMatrix::from_real(2, &[co, s, s, -co])
}

/// `M_{alpha,beta} = Z⊗Z + Z⊗B1 + A1⊗Z - A1⊗B1` with `A1 = cos(alpha) Z + sin(alpha) X`
/// and `B1` likewise in `beta`.
pub fn chsh_operator(alpha: f64, beta: f64) -> ComplexMatrix {
    let z = pauli(PauliAxis::Z);
    let a1 = direction_operator(alpha);
    let b1 = direction_operator(beta);
    let terms = [z.kron(&z), z.kron(&b1), a1.kron(&z)];
    let sum = terms.iter().skip(1).fold(terms[0].clone(), |acc, t| &acc + t);
    &sum - &a1.kron(&b1)
}

/// Largest CHSH value reachable with settings `alpha`, `beta` over all states.
pub fn chsh_operator_max_eigenvalue(alpha: f64, beta: f64) -> f64 {
    let ev = hermitian_eigenvalues(&chsh_operator(alpha, beta)).expect("CHSH operator is Hermitian");
    ev[ev.len() - 1]
}

pub fn phi_plus() -> [C64; 4] {
    [re(FRAC_1_SQRT_2), re(0.0), re(0.0), re(FRAC_1_SQRT_2)]
}

/// A validated two-qubit density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    label: String,
}

impl DensityMatrix {
    pub fn new(mat: ComplexMatrix, label: impl Into<String>) -> Result<Self> {
        if (mat.rows(), mat.cols()) != (4, 4) {
            return Err(Error::InvalidState(format!(
                "expected 4x4, got {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        let herm = mat.hermiticity_error();
        if herm > STATE_HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > STATE_TRACE_TOL || tr.im.abs() > STATE_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min_ev = hermitian_eigenvalues(&mat)?[0];
        if min_ev < -STATE_PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(Self {
            mat,
            label: label.into(),
        })
    }

    pub fn pure(ket: &[C64; 4], label: impl Into<String>) -> Result<Self> {
        let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        let scaled: Vec<C64> = ket.iter().map(|z| z / norm.sqrt()).collect();
        Self::new(ComplexMatrix::projector(&scaled), label)
    }

    pub fn bell_phi_plus() -> Self {
        Self::pure(&phi_plus(), "phi+").expect("phi+ is a valid state")
    }

    pub fn maximally_mixed() -> Self {
        Self::new(ComplexMatrix::identity(4).scale(re(0.25)), "I/4").expect("I/4 is a valid state")
    }

    /// `v |phi+><phi+| + (1 - v) I/4` with `v = (4 F - 1) / 3`, so that the
    /// overlap with `|phi+>` is exactly `target_fidelity`.
    pub fn werner(target_fidelity: f64) -> Result<Self> {
        BellDiagonalParams::new(target_fidelity).map(|p| p.state())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// `Tr(rho O)` for an observable `O` (real part).
    pub fn expectation(&self, observable: &ComplexMatrix) -> f64 {
        (&self.mat * observable).trace().re
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.mat - &other.mat;
        let ev = hermitian_eigenvalues(&diff).expect("difference of states is Hermitian");
        0.5 * ev.iter().map(|x| x.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellDiagonalParams {
    target_fidelity: f64,
}

impl BellDiagonalParams {
    pub fn new(target_fidelity: f64) -> Result<Self> {
        if !(0.25..=1.0).contains(&target_fidelity) {
            return Err(Error::OutOfRange {
                what: "target Bell fidelity",
                value: target_fidelity,
                lo: 0.25,
                hi: 1.0,
            });
        }
        Ok(Self { target_fidelity })
    }

    pub fn target_fidelity(&self) -> f64 {
        self.target_fidelity
    }

    pub fn visibility(&self) -> f64 {
        (4.0 * self.target_fidelity - 1.0) / 3.0
    }

    pub fn state(&self) -> DensityMatrix {
        let v = self.visibility();
        let bell = ComplexMatrix::projector(&phi_plus()).scale(re(v));
        let noise = ComplexMatrix::identity(4).scale(re((1.0 - v) / 4.0));
        DensityMatrix::new(&bell + &noise, format!("werner(F={})", self.target_fidelity))
            .expect("Werner family stays inside the state space")
    }
}

pub fn state_fidelity_to_bell(rho: &DensityMatrix) -> f64 {
    rho.matrix().expectation(&phi_plus()).re
}

/// Joint outcome distribution `p(a, b | x, y)` for one trial.
///
/// Stored as `p[x][y][2a + b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbTable {
    pub p: [[[f64; 4]; 2]; 2],
}

impl ProbTable {
    pub fn uniform() -> Self {
        Self { p: [[[0.25; 4]; 2]; 2] }
    }

    pub fn get(&self, x: u8, y: u8, a: u8, b: u8) -> f64 {
        self.p[x as usize][y as usize][(2 * a + b) as usize]
    }

    pub fn correlator(&self, x: u8, y: u8) -> f64 {
        let q = &self.p[x as usize][y as usize];
        q[0] - q[1] - q[2] + q[3]
    }

    /// `E00 + E01 + E10 - E11`.
    pub fn chsh(&self) -> f64 {
        self.correlator(0, 0) + self.correlator(0, 1) + self.correlator(1, 0) - self.correlator(1, 1)
    }

    /// Average probability of winning the CHSH game under uniform inputs.
    pub fn win_probability(&self) -> f64 {
        let mut total = 0.0;
        for x in 0..2u8 {
            for y in 0..2u8 {
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        if crate::finite_stats::win_condition(x, y, a, b) {
                            total += self.get(x, y, a, b);
                        }
                    }
                }
            }
        }
        total / 4.0
    }

    pub fn marginal_a(&self, x: u8, y: u8, a: u8) -> f64 {
        self.get(x, y, a, 0) + self.get(x, y, a, 1)
    }

    pub fn marginal_b(&self, x: u8, y: u8, b: u8) -> f64 {
        self.get(x, y, 0, b) + self.get(x, y, 1, b)
    }
}

/// Born-rule probabilities for the CHSH trial.
///
/// Node A measures along Bloch angles `{0, alpha_A}`. Node B's pair is
/// `{0, -beta_B}` rotated as a whole by the basis offset `theta`, i.e. it
/// measures along `{theta, theta - beta_B}`. With both angles at pi/2 and a
/// maximally entangled `|phi+>` this gives `S(theta) = 2√2 sin(theta + pi/4)`.
pub fn joint_outcome_probs(
    rho: &DensityMatrix,
    m_a: &QubitMeasurement,
    m_b: &QubitMeasurement,
    theta: f64,
) -> ProbTable {
    let mut table = ProbTable { p: [[[0.0; 4]; 2]; 2] };
    for x in 0..2u8 {
        let pair_a = basis_pair(m_a.direction(x));
        for y in 0..2u8 {
            let pair_b = basis_pair(theta - m_b.direction(y));
            for a in 0..2 {
                for b in 0..2 {
                    let ket = [
                        pair_a[a][0] * pair_b[b][0],
                        pair_a[a][0] * pair_b[b][1],
                        pair_a[a][1] * pair_b[b][0],
                        pair_a[a][1] * pair_b[b][1],
                    ];
                    let p = rho.matrix().expectation(&ket).re;
                    table.p[x as usize][y as usize][2 * a + b] = p.clamp(0.0, 1.0);
                }
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn pauli_basics() {
        let z = pauli(PauliAxis::Z);
        assert_eq!(z, ComplexMatrix::from_diag(&[1.0, -1.0]));
        for axis in PauliAxis::ALL {
            let p = pauli(axis);
            assert!((&p * &p).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
            assert!(p.trace().norm() < 1e-15);
            assert!(p.hermiticity_error() < 1e-15);
        }
    }

    #[test]
    fn projector_pairs() {
        let m = QubitMeasurement::new(PI / 2.0, Node::A).unwrap();
        let (p, q) = measurement_projectors(&m, 1);
        let plus = ComplexMatrix::from_real(2, &[0.5, 0.5, 0.5, 0.5]);
        let minus = ComplexMatrix::from_real(2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(p.max_abs_diff(&plus) < 1e-15);
        assert!(q.max_abs_diff(&minus) < 1e-15);

        let m0 = QubitMeasurement::new(0.0, Node::B).unwrap();
        let (a, b) = measurement_projectors(&m0, 1);
        let (c0, c1) = measurement_projectors(&m0, 0);
        assert!(a.max_abs_diff(&c0) < 1e-15 && b.max_abs_diff(&c1) < 1e-15);
        assert!(c0.max_abs_diff(&ComplexMatrix::from_diag(&[1.0, 0.0])) < 1e-15);
    }

    #[test]
    fn measurement_angle_is_range_checked() {
        assert!(QubitMeasurement::new(-0.1, Node::A).is_err());
        assert!(QubitMeasurement::new(3.2, Node::A).is_err());
    }

    #[test]
    fn chsh_operator_square_identity() {
        let (alpha, beta) = (1.0f64, 0.7f64);
        let m = chsh_operator(alpha, beta);
        let y = pauli(PauliAxis::Y);
        let yy = y.kron(&y).scale(re(alpha.sin() * beta.sin()));
        let expected = (&ComplexMatrix::identity(4) + &yy).scale(re(4.0));
        assert!((&m * &m).max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn chsh_operator_extreme_points() {
        assert!((chsh_operator_max_eigenvalue(PI / 2.0, PI / 2.0) - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((chsh_operator_max_eigenvalue(0.0, 0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chsh_operator_eigenvalues_closed_form() {
        let (alpha, beta) = (1.0f64, 0.7f64);
        let k = alpha.sin() * beta.sin();
        let ev = hermitian_eigenvalues(&chsh_operator(alpha, beta)).unwrap();
        let mut expected = vec![
            -2.0 * (1.0 + k).sqrt(),
            -2.0 * (1.0 - k).sqrt(),
            2.0 * (1.0 - k).sqrt(),
            2.0 * (1.0 + k).sqrt(),
        ];
        expected.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-11, "{got} vs {want}");
        }
    }

    #[test]
    fn tsirelson_realization() {
        let rho = DensityMatrix::bell_phi_plus();
        let t = joint_outcome_probs(
            &rho,
            &QubitMeasurement::ideal(Node::A),
            &QubitMeasurement::ideal(Node::B),
            PI / 4.0,
        );
        for x in 0..2 {
            for y in 0..2 {
                assert!((t.correlator(x, y).abs() - FRAC_1_SQRT_2).abs() < 1e-12);
            }
        }
        assert!((t.chsh() - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((t.win_probability() - (PI / 8.0).cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_is_uniform() {
        let t = joint_outcome_probs(
            &DensityMatrix::maximally_mixed(),
            &QubitMeasurement::ideal(Node::A),
            &QubitMeasurement::ideal(Node::B),
            0.3,
        );
        for x in 0..2 {
            for y in 0..2 {
                for &p in &t.p[x][y] {
                    assert!((p - 0.25).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn werner_chsh_matches_trace_formula() {
        // S = Tr(rho M) with M built from the same four directions.
        let rho = DensityMatrix::werner(0.859).unwrap();
        let t = joint_outcome_probs(
            &rho,
            &QubitMeasurement::ideal(Node::A),
            &QubitMeasurement::ideal(Node::B),
            PI / 4.0,
        );
        let a = [direction_operator(0.0), direction_operator(PI / 2.0)];
        let b = [direction_operator(PI / 4.0), direction_operator(-PI / 4.0)];
        let m = &(&(&a[0].kron(&b[0]) + &a[0].kron(&b[1])) + &a[1].kron(&b[0])) - &a[1].kron(&b[1]);
        let s_trace = rho.expectation(&m);
        assert!((t.chsh() - s_trace).abs() < 1e-12);
        let v = (4.0 * 0.859 - 1.0) / 3.0;
        assert!((s_trace - v * 2.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn fidelity_to_bell() {
        assert!((state_fidelity_to_bell(&DensityMatrix::bell_phi_plus()) - 1.0).abs() < 1e-15);
        assert!((state_fidelity_to_bell(&DensityMatrix::maximally_mixed()) - 0.25).abs() < 1e-15);
        let w = DensityMatrix::werner(0.859).unwrap();
        assert!((state_fidelity_to_bell(&w) - 0.859).abs() < 1e-14);
        assert!(DensityMatrix::werner(0.2).is_err());
    }

    #[test]
    fn invalid_states_are_rejected() {
        let not_unit = ComplexMatrix::identity(4);
        assert!(DensityMatrix::new(not_unit, "I").is_err());
        let negative = ComplexMatrix::from_diag(&[1.5, -0.5, 0.0, 0.0]);
        assert!(DensityMatrix::new(negative, "neg").is_err());
    }
}
