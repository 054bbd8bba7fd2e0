//! Device-dependent baselines: two-qubit state tomography with optional
//! readout-error correction, and the tomographic measurement-fidelity bound.
//!
//! Outcome 0 is the +1 eigenstate of the measured Pauli (the ground state
//! `g` for Z). Counts are indexed `[axis_A][axis_B][2a + b]`, i.e. in the
//! order `gg, ge, eg, ee`.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, re, ComplexMatrix};
use crate::par::Execution;
use crate::quantum::{pauli, DensityMatrix, Node, PauliAxis};
use crate::rng::{CounterRng, Stream};

/// Below this readout fidelity the confusion matrix is treated as singular.
const MIN_READOUT_FIDELITY: f64 = 1e-9;

/// Single-qubit readout channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMatrix {
    /// `p(e|g)`.
    pub p_eg: f64,
    /// `p(g|e)`.
    pub p_ge: f64,
}

impl ConfusionMatrix {
    pub fn new(p_eg: f64, p_ge: f64) -> Result<Self> {
        for (what, p) in [("p(e|g)", p_eg), ("p(g|e)", p_ge)] {
            if !(p.is_finite() && (0.0..0.5).contains(&p)) {
                return Err(Error::OutOfRange {
                    what,
                    value: p,
                    lo: 0.0,
                    hi: 0.5,
                });
            }
        }
        Ok(Self { p_eg, p_ge })
    }

    pub fn perfect() -> Self {
        Self { p_eg: 0.0, p_ge: 0.0 }
    }

    /// Symmetric errors `p(e|g) = p(g|e) = (1 - F_r) / 2`.
    pub fn from_readout_fidelity(readout_fidelity: f64) -> Result<Self> {
        let e = (1.0 - readout_fidelity) / 2.0;
        Self::new(e, e)
    }

    /// `F_r = 1 - p(e|g) - p(g|e)`.
    pub fn readout_fidelity(&self) -> f64 {
        1.0 - self.p_eg - self.p_ge
    }

    /// `c[reported][true]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.p_eg, self.p_ge], [self.p_eg, 1.0 - self.p_ge]]
    }

    pub fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let det = self.readout_fidelity();
        if det <= MIN_READOUT_FIDELITY {
            return Err(Error::SingularConfusion { readout_fidelity: det });
        }
        let c = self.matrix();
        Ok([[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]])
    }
}

/// Confusion channels of nodes A and B.
pub type NodeConfusion = [ConfusionMatrix; 2];

fn node_index(node: Node) -> usize {
    match node {
        Node::A => 0,
        Node::B => 1,
    }
}

/// Outcome counts for the nine Pauli settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TomographyCounts {
    pub shots: u64,
    pub counts: [[[u64; 4]; 3]; 3],
}

/// Outcome probabilities for all nine settings, after readout.
pub type SettingProbs = [[[f64; 4]; 3]; 3];

/// `4 -> 4` map `q'(a', b') = sum m_A[a'][a] m_B[b'][b] q(a, b)`.
fn apply_pair(ma: &[[f64; 2]; 2], mb: &[[f64; 2]; 2], q: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for a in 0..2 {
        for b in 0..2 {
            for ta in 0..2 {
                for tb in 0..2 {
                    out[2 * a + b] += ma[a][ta] * mb[b][tb] * q[2 * ta + tb];
                }
            }
        }
    }
    out
}

/// Exact outcome probabilities of every setting.
pub fn exact_probabilities(rho: &DensityMatrix, confusion: &NodeConfusion) -> SettingProbs {
    let id = ComplexMatrix::identity(2);
    let sig = PauliAxis::ALL.map(pauli);
    let ca = confusion[node_index(Node::A)].matrix();
    let cb = confusion[node_index(Node::B)].matrix();
    let mut out = [[[0.0; 4]; 3]; 3];
    for i in 0..3 {
        let ea = rho.expectation(&sig[i].kron(&id));
        for j in 0..3 {
            let eb = rho.expectation(&id.kron(&sig[j]));
            let eab = rho.expectation(&sig[i].kron(&sig[j]));
            let mut q = [0.0; 4];
            for a in 0..2 {
                let sa = if a == 0 { 1.0 } else { -1.0 };
                for b in 0..2 {
                    let sb = if b == 0 { 1.0 } else { -1.0 };
                    q[2 * a + b] = (0.25 * (1.0 + sa * ea + sb * eb + sa * sb * eab)).max(0.0);
                }
            }
            out[i][j] = apply_pair(&ca, &cb, &q);
        }
    }
    out
}

/// Samples `shots` outcomes per setting. Setting `(i, j)` draws from its own
/// substream `3i + j`, so the counts do not depend on scheduling.
pub fn simulate_tomography(
    rho: &DensityMatrix,
    shots: u64,
    confusion: &NodeConfusion,
    seed: u64,
    exec: Execution,
) -> Result<TomographyCounts> {
    if shots == 0 {
        return Err(Error::InvalidConfig(
            "tomography needs at least one shot per setting".into(),
        ));
    }
    let probs = exact_probabilities(rho, confusion);
    let per_setting = exec.scheduler().map_range(9, |s| {
        let q = &probs[(s / 3) as usize][(s % 3) as usize];
        let total: f64 = q.iter().sum();
        let mut rng = CounterRng::new(seed, Stream::Tomography, s as u32);
        let mut c = [0u64; 4];
        for _ in 0..shots {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut k = 3;
            for (idx, &p) in q.iter().enumerate().take(3) {
                acc += p;
                if target < acc {
                    k = idx;
                    break;
                }
            }
            c[k] += 1;
        }
        c
    });
    let mut counts = [[[0u64; 4]; 3]; 3];
    for (s, c) in per_setting.into_iter().enumerate() {
        counts[s / 3][s % 3] = c;
    }
    Ok(TomographyCounts { shots, counts })
}

impl TomographyCounts {
    pub fn frequencies(&self) -> SettingProbs {
        let mut out = [[[0.0; 4]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..4 {
                    out[i][j][k] = self.counts[i][j][k] as f64 / self.shots as f64;
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.counts {
            for c in row {
                if c.iter().sum::<u64>() != self.shots {
                    return Err(Error::InvalidState(format!(
                        "tomography setting counts {c:?} do not sum to {} shots",
                        self.shots
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Linear-inversion estimate from setting probabilities, projected onto the
/// PSD cone (negative eigenvalues clipped, trace renormalized).
pub fn reconstruct_from_probabilities(
    probs: &SettingProbs,
    correct_readout: bool,
    confusion: &NodeConfusion,
) -> Result<DensityMatrix> {
    let (ia, ib) = if correct_readout {
        (
            confusion[node_index(Node::A)].inverse()?,
            confusion[node_index(Node::B)].inverse()?,
        )
    } else {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        (id, id)
    };
    // r[mu][nu] = <sigma_mu ⊗ sigma_nu>, index 0 is the identity.
    let mut r = [[0.0; 4]; 4];
    r[0][0] = 1.0;
    for i in 0..3 {
        for j in 0..3 {
            let q = apply_pair(&ia, &ib, &probs[i][j]);
            let ea = q[0] + q[1] - q[2] - q[3];
            let eb = q[0] - q[1] + q[2] - q[3];
            let eab = q[0] - q[1] - q[2] + q[3];
            r[i + 1][j + 1] = eab;
            r[i + 1][0] += ea / 3.0;
            r[0][j + 1] += eb / 3.0;
        }
    }
    let sig = [
        ComplexMatrix::identity(2),
        pauli(PauliAxis::X),
        pauli(PauliAxis::Y),
        pauli(PauliAxis::Z),
    ];
    let mut mat = ComplexMatrix::zeros(4, 4);
    for mu in 0..4 {
        for nu in 0..4 {
            mat = &mat + &sig[mu].kron(&sig[nu]).scale(re(r[mu][nu] / 4.0));
        }
    }
    let eig = hermitian_eigen(&mat)?;
    let clipped_trace: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    if clipped_trace <= 0.0 {
        return Err(Error::InvalidState("reconstruction has no positive part".into()));
    }
    let psd = eig.reconstruct_with(|v| v.max(0.0) / clipped_trace);
    let psd = &psd.scale(re(0.5)) + &psd.adjoint().scale(re(0.5));
    let label = if correct_readout {
        "tomography (readout corrected)"
    } else {
        "tomography"
    };
    DensityMatrix::new(psd, label)
}

/// Linear-inversion reconstruction from counts.
pub fn reconstruct_state(
    counts: &TomographyCounts,
    correct_readout: bool,
    confusion: &NodeConfusion,
) -> Result<DensityMatrix> {
    counts.validate()?;
    reconstruct_from_probabilities(&counts.frequencies(), correct_readout, confusion)
}

/// Lower bound `1 - ε_r - ε_z - 2 sqrt(ε_r ε_z)` on the tomographic
/// measurement fidelity, clamped to `[0, 1]`.
pub fn tomographic_measurement_fidelity(eps_r: f64, eps_z: f64) -> Result<f64> {
    for (name, e) in [("eps_r", eps_r), ("eps_z", eps_z)] {
        if !(e.is_finite() && (0.0..1.0).contains(&e)) {
            return Err(Error::Domain(format!("{name} must lie in [0, 1) (got {e})")));
        }
    }
    Ok((1.0 - eps_r - eps_z - 2.0 * (eps_r * eps_z).sqrt()).clamp(0.0, 1.0))
}

/// `ε_z = (1 - F_r) / 2` under symmetric readout errors.
pub fn eps_z_from_readout(readout_fidelity: f64) -> f64 {
    (1.0 - readout_fidelity) / 2.0
}

/// `ε_z` valid for both nodes. The bound decreases in `ε_z`, so the larger
/// node error is the one that holds for both.
pub fn combined_eps_z(eps_z_a: f64, eps_z_b: f64) -> f64 {
    eps_z_a.max(eps_z_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state_fidelity_to_bell;

    fn lab_confusion() -> NodeConfusion {
        [
            ConfusionMatrix::from_readout_fidelity(0.989).unwrap(),
            ConfusionMatrix::from_readout_fidelity(0.972).unwrap(),
        ]
    }

    #[test]
    fn confusion_inverse() {
        let c = ConfusionMatrix::new(0.01, 0.04).unwrap();
        let m = c.matrix();
        let inv = c.inverse().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|k| inv[i][k] * m[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
        assert!(ConfusionMatrix::new(0.5, 0.0).is_err());
        assert!((c.readout_fidelity() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn exact_inversion_recovers_state() {
        let rho = DensityMatrix::werner(0.859).unwrap();
        let conf = lab_confusion();
        let probs = exact_probabilities(&rho, &conf);
        let got = reconstruct_from_probabilities(&probs, true, &conf).unwrap();
        assert!(got.trace_distance(&rho) < 1e-10);
        let plain = reconstruct_from_probabilities(
            &exact_probabilities(&rho, &[ConfusionMatrix::perfect(); 2]),
            false,
            &conf,
        )
        .unwrap();
        assert!(plain.trace_distance(&rho) < 1e-10);
    }

    #[test]
    fn bell_state_zz_has_only_even_outcomes() {
        let counts = simulate_tomography(
            &DensityMatrix::bell_phi_plus(),
            1000,
            &[ConfusionMatrix::perfect(); 2],
            3,
            Execution::Sequential,
        )
        .unwrap();
        let zz = counts.counts[2][2];
        assert_eq!(zz[1] + zz[2], 0);
        assert_eq!(zz[0] + zz[3], 1000);
    }

    #[test]
    fn sampling_is_schedule_independent() {
        let rho = DensityMatrix::werner(0.9).unwrap();
        let a = simulate_tomography(&rho, 5000, &lab_confusion(), 11, Execution::Sequential).unwrap();
        let b = simulate_tomography(&rho, 5000, &lab_confusion(), 11, Execution::Workers(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn correction_raises_fidelity() {
        let rho = DensityMatrix::werner(0.859).unwrap();
        let conf = lab_confusion();
        let counts = simulate_tomography(&rho, 100_000, &conf, 1, Execution::default()).unwrap();
        let fc = state_fidelity_to_bell(&reconstruct_state(&counts, true, &conf).unwrap());
        let fu = state_fidelity_to_bell(&reconstruct_state(&counts, false, &conf).unwrap());
        assert!(fc > fu);
        assert!((fc - 0.859).abs() < 0.01, "{fc}");
    }

    #[test]
    fn measurement_fidelity_bound_values() {
        assert_eq!(tomographic_measurement_fidelity(0.0, 0.0).unwrap(), 1.0);
        let f = tomographic_measurement_fidelity(0.0025, 0.014).unwrap();
        assert!((f - 0.971_667).abs() < 1e-6, "{f}");
        assert!((eps_z_from_readout(0.972) - 0.014).abs() < 1e-15);
        assert_eq!(
            combined_eps_z(eps_z_from_readout(0.989), eps_z_from_readout(0.972)),
            eps_z_from_readout(0.972)
        );
        assert!(tomographic_measurement_fidelity(1.0, 0.0).is_err());
        assert!(tomographic_measurement_fidelity(-0.1, 0.0).is_err());
    }
}
