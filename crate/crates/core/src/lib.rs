#![allow(clippy::needless_range_loop)]

//! Device-independent certification of entangled states and qubit
//! measurements from CHSH Bell-test statistics.
//!
//! The crate covers the full pipeline: a seeded simulator of two-node CHSH
//! trials with readout error and drift, the finite-sample lower bound on the
//! CHSH value, the self-testing bounds that turn it into certified state and
//! measurement fidelities, and the device-dependent baselines (state
//! tomography, tomographic measurement fidelity, light-cone timing budget).

pub mod error;
pub mod finite_stats;
pub mod linalg;
pub mod oracle;
mod par;
pub mod quantum;
pub mod rng;
pub mod selftest;
pub mod simulator;
pub mod special;
pub mod timing;
pub mod tomography;
pub mod trial_log;

pub use error::{Error, Result};
pub use finite_stats::{certify, CertificationResult, ConfidenceBound, TrialTally};
pub use par::Execution;
pub use quantum::{DensityMatrix, Node, QubitMeasurement};
pub use selftest::{SValue, S_LHV, S_STAR, TSIRELSON};
pub use simulator::{simulate, simulate_with, ExperimentConfig, NoiseModel, SimulationSummary, TrialRecord, TrialSink};
