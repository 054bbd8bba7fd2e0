//! Seeded simulation of two-node CHSH trials.
//!
//! Each trial draws inputs `x`, `y` and a uniform variate from a
//! counter-based generator keyed by `(seed, trial index)`, then samples
//! outcomes from the Born-rule table of a Werner state, passed through each
//! node's readout confusion channel. Trials are generated in parallel chunks
//! and handed to the sink in index order, so the output does not depend on
//! the worker count.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io;

use crate::error::{Error, Result};
use crate::finite_stats::{win_condition, TrialTally};
use crate::linalg::ComplexMatrix;
use crate::par::Execution;
use crate::quantum::{joint_outcome_probs, pauli, DensityMatrix, Node, PauliAxis, ProbTable, QubitMeasurement};
use crate::rng::{self, trial_draw, Stream};

const BATCH: u64 = 1 << 18;
const CHUNK: u64 = 1 << 12;

/// Physical parameters of the simulated devices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Fidelity of the shared Werner state to `|phi+>`.
    pub bell_fidelity: f64,
    /// Separation of node A's two measurement directions.
    pub alpha_a: f64,
    /// Basis offset angle `Θ` of node B relative to node A.
    pub theta_offset: f64,
    /// `p(e|g)`: ground state read as excited, node A.
    pub readout_eg_a: f64,
    /// `p(g|e)`: excited state read as ground, node A.
    pub readout_ge_a: f64,
    pub readout_eg_b: f64,
    pub readout_ge_b: f64,
    /// Peak excursion of `Θ` between recalibrations.
    pub drift_amplitude: f64,
    /// Period of the drift, in trials.
    pub drift_period: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseModel {
    /// Noise-free `|phi+>` at the optimal offset `Θ = pi/4`.
    pub fn ideal() -> Self {
        Self {
            bell_fidelity: 1.0,
            alpha_a: FRAC_PI_2,
            theta_offset: FRAC_PI_4,
            readout_eg_a: 0.0,
            readout_ge_a: 0.0,
            readout_eg_b: 0.0,
            readout_ge_b: 0.0,
            drift_amplitude: 0.0,
            drift_period: 1 << 22,
        }
    }

    /// Bell fidelity 0.859 with readout fidelities 0.989 (A) and 0.972 (B),
    /// each split evenly between the two error directions.
    pub fn lab() -> Self {
        Self {
            bell_fidelity: 0.859,
            ..Self::ideal()
        }
        .with_readout_fidelities(0.989, 0.972)
    }

    /// Sets symmetric readout errors `p(e|g) = p(g|e) = (1 - F_r) / 2` per node.
    pub fn with_readout_fidelities(self, fr_a: f64, fr_b: f64) -> Self {
        let (ea, eb) = ((1.0 - fr_a) / 2.0, (1.0 - fr_b) / 2.0);
        Self {
            readout_eg_a: ea,
            readout_ge_a: ea,
            readout_eg_b: eb,
            readout_ge_b: eb,
            ..self
        }
    }

    pub fn readout_fidelity(&self, node: Node) -> f64 {
        match node {
            Node::A => 1.0 - self.readout_eg_a - self.readout_ge_a,
            Node::B => 1.0 - self.readout_eg_b - self.readout_ge_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: &'static str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && v >= lo && v <= hi {
                Ok(())
            } else {
                Err(Error::OutOfRange { what, value: v, lo, hi })
            }
        };
        check("bell fidelity", self.bell_fidelity, 0.25, 1.0)?;
        check("alpha_a", self.alpha_a, 0.0, PI)?;
        if !self.theta_offset.is_finite() || !self.drift_amplitude.is_finite() {
            return Err(Error::InvalidConfig("angles must be finite".into()));
        }
        for (what, p) in [
            ("readout p(e|g) node A", self.readout_eg_a),
            ("readout p(g|e) node A", self.readout_ge_a),
            ("readout p(e|g) node B", self.readout_eg_b),
            ("readout p(g|e) node B", self.readout_ge_b),
        ] {
            if !(p.is_finite() && (0.0..0.5).contains(&p)) {
                return Err(Error::OutOfRange {
                    what,
                    value: p,
                    lo: 0.0,
                    hi: 0.5,
                });
            }
        }
        if self.drift_period == 0 {
            return Err(Error::InvalidConfig("drift period must be at least one trial".into()));
        }
        Ok(())
    }

    pub fn state(&self) -> Result<DensityMatrix> {
        DensityMatrix::werner(self.bell_fidelity)
    }

    /// `Θ` after `k` trials since the last recalibration.
    pub fn theta_at(&self, k: u64) -> f64 {
        if self.drift_amplitude == 0.0 {
            return self.theta_offset;
        }
        let phase = 2.0 * PI * (k % self.drift_period) as f64 / self.drift_period as f64;
        self.theta_offset + self.drift_amplitude * phase.sin()
    }

    fn confusion(&self, node: Node) -> [[f64; 2]; 2] {
        // c[reported][true]
        let (eg, ge) = match node {
            Node::A => (self.readout_eg_a, self.readout_ge_a),
            Node::B => (self.readout_eg_b, self.readout_ge_b),
        };
        [[1.0 - eg, ge], [eg, 1.0 - ge]]
    }

    /// Passes an ideal outcome table through both nodes' confusion channels.
    pub fn apply_readout(&self, ideal: &ProbTable) -> ProbTable {
        let ca = self.confusion(Node::A);
        let cb = self.confusion(Node::B);
        let mut out = ProbTable { p: [[[0.0; 4]; 2]; 2] };
        for x in 0..2 {
            for y in 0..2 {
                let q = &ideal.p[x][y];
                for a in 0..2 {
                    for b in 0..2 {
                        let mut acc = 0.0;
                        for ta in 0..2 {
                            for tb in 0..2 {
                                acc += ca[a][ta] * cb[b][tb] * q[2 * ta + tb];
                            }
                        }
                        out.p[x][y][2 * a + b] = acc;
                    }
                }
            }
        }
        out
    }
}

/// Outcome distribution after `trials_since_calibration` trials of drift.
pub fn ideal_prob_table(noise: &NoiseModel, trials_since_calibration: u64) -> Result<ProbTable> {
    noise.validate()?;
    let rho = noise.state()?;
    let m_a = QubitMeasurement::new(noise.alpha_a, Node::A)?;
    let m_b = QubitMeasurement::ideal(Node::B);
    let born = joint_outcome_probs(&rho, &m_a, &m_b, noise.theta_at(trials_since_calibration));
    Ok(noise.apply_readout(&born))
}

/// Pauli-basis form of a two-qubit state, for fast per-trial tables.
#[derive(Debug, Clone, Copy)]
struct BlochForm {
    r_a: [f64; 3],
    r_b: [f64; 3],
    t: [[f64; 3]; 3],
}

impl BlochForm {
    fn new(rho: &DensityMatrix) -> Self {
        let id = ComplexMatrix::identity(2);
        let p = PauliAxis::ALL.map(pauli);
        let mut out = BlochForm {
            r_a: [0.0; 3],
            r_b: [0.0; 3],
            t: [[0.0; 3]; 3],
        };
        for i in 0..3 {
            out.r_a[i] = rho.expectation(&p[i].kron(&id));
            out.r_b[i] = rho.expectation(&id.kron(&p[i]));
            for j in 0..3 {
                out.t[i][j] = rho.expectation(&p[i].kron(&p[j]));
            }
        }
        out
    }

    /// Born table for Bloch directions `phi_a[x]` and `phi_b[y]` in the x-z plane.
    fn table(&self, phi_a: [f64; 2], phi_b: [f64; 2]) -> ProbTable {
        let dir = |phi: f64| [phi.sin(), 0.0, phi.cos()];
        let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let mut out = ProbTable { p: [[[0.0; 4]; 2]; 2] };
        for x in 0..2 {
            let na = dir(phi_a[x]);
            let ea = dot(&self.r_a, &na);
            for y in 0..2 {
                let nb = dir(phi_b[y]);
                let eb = dot(&self.r_b, &nb);
                let tn = [dot(&self.t[0], &nb), dot(&self.t[1], &nb), dot(&self.t[2], &nb)];
                let eab = dot(&na, &tn);
                for a in 0..2 {
                    let sa = if a == 0 { 1.0 } else { -1.0 };
                    for b in 0..2 {
                        let sb = if b == 0 { 1.0 } else { -1.0 };
                        let p = 0.25 * (1.0 + sa * ea + sb * eb + sa * sb * eab);
                        out.p[x][y][2 * a + b] = p.clamp(0.0, 1.0);
                    }
                }
            }
        }
        out
    }
}

/// Per-trial table source used by the sampler.
struct TableModel {
    noise: NoiseModel,
    bloch: BlochForm,
    fixed: Option<ProbTable>,
}

impl TableModel {
    fn new(noise: &NoiseModel) -> Result<Self> {
        noise.validate()?;
        let mut model = TableModel {
            noise: *noise,
            bloch: BlochForm::new(&noise.state()?),
            fixed: None,
        };
        if noise.drift_amplitude == 0.0 {
            model.fixed = Some(model.compute(0));
        }
        Ok(model)
    }

    fn compute(&self, k: u64) -> ProbTable {
        let theta = self.noise.theta_at(k);
        let m_b = QubitMeasurement::ideal(Node::B);
        let born = self.bloch.table(
            [0.0, self.noise.alpha_a],
            [theta - m_b.direction(0), theta - m_b.direction(1)],
        );
        self.noise.apply_readout(&born)
    }

    fn table(&self, k: u64) -> ProbTable {
        match &self.fixed {
            Some(t) => *t,
            None => self.compute(k),
        }
    }
}

/// Run parameters for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub n_trials: u64,
    /// Trials between recalibrations; the drift resets at each boundary.
    pub block_size: u64,
    /// Granularity of the per-block S report.
    pub report_size: u64,
    pub seed: u64,
    pub noise: NoiseModel,
    /// Hz, recorded as metadata only.
    pub repetition_rate: f64,
}

impl ExperimentConfig {
    /// A single calibration block reported as a whole.
    pub fn new(n_trials: u64, seed: u64, noise: NoiseModel) -> Self {
        Self {
            n_trials,
            block_size: n_trials,
            report_size: n_trials,
            seed,
            noise,
            repetition_rate: 50e3,
        }
    }

    /// 2^24 trials in 16 calibration blocks of 2^20, reported every 2^17.
    pub fn lab(seed: u64) -> Self {
        Self {
            block_size: 1 << 20,
            report_size: 1 << 17,
            ..Self::new(1 << 24, seed, NoiseModel::lab())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        for (what, size) in [("block size", self.block_size), ("report size", self.report_size)] {
            if size == 0 || !self.n_trials.is_multiple_of(size) {
                return Err(Error::InvalidConfig(format!(
                    "{what} {size} does not divide n_trials {}",
                    self.n_trials
                )));
            }
        }
        if !(self.repetition_rate.is_finite() && self.repetition_rate > 0.0) {
            return Err(Error::InvalidConfig("repetition rate must be positive".into()));
        }
        self.noise.validate()
    }
}

/// One Bell-test trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialRecord {
    pub index: u64,
    pub x: u8,
    pub y: u8,
    pub a: u8,
    pub b: u8,
}

impl TrialRecord {
    pub fn won(&self) -> bool {
        win_condition(self.x, self.y, self.a, self.b)
    }
}

/// Counts of each `(x, y, a, b)` combination, indexed `[x][y][2a + b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub counts: [[[u64; 4]; 2]; 2],
}

impl OutcomeCounts {
    pub fn add(&mut self, r: &TrialRecord) {
        self.counts[r.x as usize][r.y as usize][(2 * r.a + r.b) as usize] += 1;
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        for x in 0..2 {
            for y in 0..2 {
                for k in 0..4 {
                    self.counts[x][y][k] += other.counts[x][y][k];
                }
            }
        }
    }

    pub fn setting_total(&self, x: u8, y: u8) -> u64 {
        self.counts[x as usize][y as usize].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| self.setting_total(x, y))
            .sum()
    }

    pub fn wins(&self) -> u64 {
        let mut c = 0;
        for x in 0..2u8 {
            for y in 0..2u8 {
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        if win_condition(x, y, a, b) {
                            c += self.counts[x as usize][y as usize][(2 * a + b) as usize];
                        }
                    }
                }
            }
        }
        c
    }

    /// Empirical `<a·b>` for setting `(x, y)`; zero when the setting never occurred.
    pub fn correlator(&self, x: u8, y: u8) -> f64 {
        let q = &self.counts[x as usize][y as usize];
        let n = self.setting_total(x, y);
        if n == 0 {
            return 0.0;
        }
        (q[0] as f64 - q[1] as f64 - q[2] as f64 + q[3] as f64) / n as f64
    }

    /// S from the four empirical correlators.
    pub fn s_value(&self) -> f64 {
        self.correlator(0, 0) + self.correlator(0, 1) + self.correlator(1, 0) - self.correlator(1, 1)
    }

    pub fn frequencies(&self) -> ProbTable {
        let mut t = ProbTable { p: [[[0.0; 4]; 2]; 2] };
        for x in 0..2u8 {
            for y in 0..2u8 {
                let n = self.setting_total(x, y).max(1) as f64;
                for k in 0..4 {
                    t.p[x as usize][y as usize][k] = self.counts[x as usize][y as usize][k] as f64 / n;
                }
            }
        }
        t
    }
}

/// Statistics of one contiguous block of trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStats {
    pub first_index: u64,
    pub counts: OutcomeCounts,
}

impl BlockStats {
    pub fn s_value(&self) -> f64 {
        self.counts.s_value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub tally: TrialTally,
    pub counts: OutcomeCounts,
    /// One entry per `report_size` trials.
    pub report_blocks: Vec<BlockStats>,
    /// One entry per calibration block.
    pub calibration_blocks: Vec<BlockStats>,
    /// S of the drift-free model table.
    pub model_s: f64,
}

/// Consumer of simulated trials, fed in index order.
pub trait TrialSink {
    fn accept(&mut self, batch: &[TrialRecord]) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl TrialSink for Vec<TrialRecord> {
    fn accept(&mut self, batch: &[TrialRecord]) -> io::Result<()> {
        self.extend_from_slice(batch);
        Ok(())
    }
}

impl<S: TrialSink + ?Sized> TrialSink for &mut S {
    fn accept(&mut self, batch: &[TrialRecord]) -> io::Result<()> {
        (**self).accept(batch)
    }

    fn finish(&mut self) -> io::Result<()> {
        (**self).finish()
    }
}

/// Discards trials; only the summary is kept.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl TrialSink for NullSink {
    fn accept(&mut self, _: &[TrialRecord]) -> io::Result<()> {
        Ok(())
    }
}

fn sample_cell(cells: &[f64; 4], u: f64) -> usize {
    let total: f64 = cells.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (k, &p) in cells.iter().enumerate().take(3) {
        acc += p;
        if target < acc {
            return k;
        }
    }
    3
}

fn generate(config: &ExperimentConfig, model: &TableModel, start: u64, end: u64) -> Vec<TrialRecord> {
    (start..end)
        .map(|index| {
            let d = trial_draw(config.seed, index);
            let table = model.table(index % config.block_size);
            let k = sample_cell(&table.p[d.x as usize][d.y as usize], d.u);
            TrialRecord {
                index,
                x: d.x,
                y: d.y,
                a: (k >> 1) as u8,
                b: (k & 1) as u8,
            }
        })
        .collect()
}

pub fn simulate<S: TrialSink>(config: &ExperimentConfig, sink: S) -> Result<SimulationSummary> {
    simulate_with(config, sink, Execution::default())
}

/// Simulates `config.n_trials` trials, streaming them into `sink`.
///
/// The records and the summary are identical for every `exec`.
pub fn simulate_with<S: TrialSink>(
    config: &ExperimentConfig,
    mut sink: S,
    exec: Execution,
) -> Result<SimulationSummary> {
    config.validate()?;
    let model = TableModel::new(&config.noise)?;
    let scheduler = exec.scheduler();
    let n = config.n_trials;
    let block = |first_index| BlockStats {
        first_index,
        counts: OutcomeCounts::default(),
    };
    let mut report_blocks: Vec<BlockStats> = (0..n / config.report_size)
        .map(|k| block(k * config.report_size))
        .collect();
    let mut calibration_blocks: Vec<BlockStats> = (0..n / config.block_size)
        .map(|k| block(k * config.block_size))
        .collect();
    let mut counts = OutcomeCounts::default();
    let mut emitted = 0u64;

    let mut start = 0u64;
    while start < n {
        let len = BATCH.min(n - start);
        let chunks = scheduler.map_range(len.div_ceil(CHUNK), |ci| {
            let lo = start + ci * CHUNK;
            generate(config, &model, lo, (lo + CHUNK).min(start + len))
        });
        for chunk in &chunks {
            for r in chunk {
                counts.add(r);
                report_blocks[(r.index / config.report_size) as usize].counts.add(r);
                calibration_blocks[(r.index / config.block_size) as usize].counts.add(r);
            }
            sink.accept(chunk).map_err(|source| Error::SinkFailure {
                trials_emitted: emitted,
                source,
            })?;
            emitted += chunk.len() as u64;
        }
        start += len;
    }
    sink.finish().map_err(|source| Error::SinkFailure {
        trials_emitted: emitted,
        source,
    })?;

    Ok(SimulationSummary {
        tally: TrialTally::new(n, counts.wins())?,
        counts,
        report_blocks,
        calibration_blocks,
        model_s: model.compute(0).chsh(),
    })
}

/// One point of a `Θ` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    /// `[E00, E01, E10, E11]`.
    pub correlators: [f64; 4],
    pub s: f64,
    /// S of the exact model table at this `Θ`.
    pub model_s: f64,
}

/// Seed of sweep point `k`, derived from the run seed.
pub fn sweep_point_seed(seed: u64, k: u64) -> u64 {
    let w = rng::block(seed, k, Stream::Sweep, 0);
    w[0] as u64 | (w[1] as u64) << 32
}

/// Runs a Bell test of `trials_per_point` trials at each offset in `thetas`.
pub fn sweep_angle(
    noise: &NoiseModel,
    thetas: &[f64],
    trials_per_point: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SweepPoint>> {
    if thetas.is_empty() {
        return Err(Error::InvalidConfig("angle sweep needs at least one point".into()));
    }
    noise.validate()?;
    let scheduler = exec.scheduler();
    scheduler
        .map_range(thetas.len() as u64, |k| {
            let point_noise = NoiseModel {
                theta_offset: thetas[k as usize],
                ..*noise
            };
            let config = ExperimentConfig::new(trials_per_point, sweep_point_seed(seed, k), point_noise);
            let summary = simulate_with(&config, NullSink, Execution::Sequential)?;
            let c = &summary.counts;
            Ok(SweepPoint {
                theta: thetas[k as usize],
                correlators: [
                    c.correlator(0, 0),
                    c.correlator(0, 1),
                    c.correlator(1, 0),
                    c.correlator(1, 1),
                ],
                s: c.s_value(),
                model_s: summary.model_s,
            })
        })
        .into_iter()
        .collect()
}

/// A local maximum of `|S|` along a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Refined by a parabola through the peak and its neighbours.
    pub theta: f64,
    pub s: f64,
    /// Index of the grid point the peak was found at.
    pub grid_index: usize,
}

/// Local maxima of `|S|`, strongest first.
///
/// The grid is treated as circular when it spans a full turn (with or
/// without a repeated endpoint).
pub fn find_peaks(points: &[SweepPoint]) -> Vec<Peak> {
    let mut pts: Vec<&SweepPoint> = points.iter().collect();
    if pts.len() < 3 {
        return Vec::new();
    }
    let step = (pts[pts.len() - 1].theta - pts[0].theta) / (pts.len() - 1) as f64;
    let span = pts[pts.len() - 1].theta - pts[0].theta;
    let mut circular = false;
    if (span - 2.0 * PI).abs() < 1e-9 {
        pts.pop();
        circular = true;
    } else if (span + step - 2.0 * PI).abs() < 1e-9 {
        circular = true;
    }
    let m = pts.len();
    let val = |i: usize| pts[i].s.abs();
    let mut peaks = Vec::new();
    for i in 0..m {
        let (l, r) = if circular {
            ((i + m - 1) % m, (i + 1) % m)
        } else if i == 0 || i == m - 1 {
            continue;
        } else {
            (i - 1, i + 1)
        };
        let (y0, y1, y2) = (val(l), val(i), val(r));
        if !(y1 > y0 && y1 >= y2) {
            continue;
        }
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom < 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        let theta = (pts[i].theta + shift * step).rem_euclid(2.0 * PI);
        peaks.push(Peak {
            theta,
            s: pts[i].s,
            grid_index: i,
        });
    }
    peaks.sort_by(|p, q| q.s.abs().total_cmp(&p.s.abs()));
    peaks
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}
