//! Finite-sample certification: the CHSH game, a lower confidence bound on
//! the average winning probability that holds without assuming independent
//! and identically distributed trials, and the resulting certified
//! fidelities.

use crate::error::{Error, Result};
use crate::par;
use crate::selftest::{
    measurement_fidelity_bound, singlet_fidelity_bound, SValue, S_LHV, S_STAR, TRIVIAL_MEASUREMENT_FIDELITY,
};
use crate::special::{reg_inc_beta, reg_inc_beta_inv};

/// A round is won iff `x AND y == a XOR b`.
#[inline]
pub fn win_condition(x: u8, y: u8, a: u8, b: u8) -> bool {
    (x & y) == (a ^ b)
}

/// `n` trials of which `c` were won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialTally {
    n: u64,
    c: u64,
}

impl TrialTally {
    pub fn new(n: u64, c: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("tally needs at least one trial".into()));
        }
        if c > n {
            return Err(Error::Domain(format!("win count {c} exceeds trial count {n}")));
        }
        Ok(Self { n, c })
    }

    /// Tally with `c = round(n (4 + S) / 8)`, the expected win count at CHSH value `S`.
    pub fn from_s_value(n: u64, s: f64) -> Result<Self> {
        let c = (n as f64 * (4.0 + s) / 8.0).round();
        Self::new(n, c.clamp(0.0, n as f64) as u64)
    }

    pub fn trials(&self) -> u64 {
        self.n
    }

    pub fn wins(&self) -> u64 {
        self.c
    }

    pub fn win_fraction(&self) -> f64 {
        self.c as f64 / self.n as f64
    }

    /// `8 c / n - 4`.
    pub fn s_value(&self) -> f64 {
        8.0 * self.win_fraction() - 4.0
    }

    pub fn merge(&self, other: &TrialTally) -> TrialTally {
        TrialTally {
            n: self.n + other.n,
            c: self.c + other.c,
        }
    }
}

/// Lower confidence bound on the average winning probability and the
/// matching CHSH value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBound {
    pub conf_level: f64,
    pub p_lower: f64,
    pub s_lower: f64,
}

fn residual(conf_level: f64) -> Result<f64> {
    if !(conf_level > 0.0 && conf_level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0, 1) (got {conf_level})"
        )));
    }
    Ok(1.0 - conf_level)
}

/// Threshold `alpha* = I_{(c-1)/n}(c, n - c + 1)` at which the bound switches
/// from the beta-quantile branch to the linear branch.
pub fn branch_threshold(tally: &TrialTally) -> Result<f64> {
    let (n, c) = (tally.n as f64, tally.c as f64);
    if tally.c == 0 {
        return Ok(0.0);
    }
    reg_inc_beta((c - 1.0) / n, c, n - c + 1.0)
}

/// Lower bound `p` such that the average winning probability is at least
/// `p` with probability `conf_level`:
///
/// * `0` if `c = 0`;
/// * `I^{-1}_α(c, n - c + 1)` if `α <= α*`;
/// * `(c - (1 - α) / (1 - α*)) / n` otherwise,
///
/// where `α = 1 - conf_level`.
pub fn p_avg_lower_bound(tally: &TrialTally, conf_level: f64) -> Result<f64> {
    let alpha = residual(conf_level)?;
    if tally.c == 0 {
        return Ok(0.0);
    }
    let (n, c) = (tally.n as f64, tally.c as f64);
    let alpha_star = branch_threshold(tally)?;
    let p = if alpha <= alpha_star {
        reg_inc_beta_inv(alpha, c, n - c + 1.0)?
    } else {
        (c - (1.0 - alpha) / (1.0 - alpha_star)) / n
    };
    Ok(p.clamp(0.0, c / n))
}

pub fn s_avg_lower_bound(tally: &TrialTally, conf_level: f64) -> Result<ConfidenceBound> {
    let p_lower = p_avg_lower_bound(tally, conf_level)?;
    Ok(ConfidenceBound {
        conf_level,
        p_lower,
        s_lower: 8.0 * p_lower - 4.0,
    })
}

/// Certified fidelities derived from a tally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificationResult {
    pub tally: TrialTally,
    /// `8 c / n - 4`.
    pub s_measured: f64,
    pub bound: ConfidenceBound,
    pub f_state: f64,
    pub f_measurement: f64,
    /// `s_lower <= S*`: the state certificate carries no information.
    pub state_trivial: bool,
    /// `s_lower <= 2`: neither certificate carries information.
    pub measurement_trivial: bool,
}

impl CertificationResult {
    pub fn is_nontrivial(&self) -> bool {
        !self.state_trivial
    }
}

/// Maps a corrected CHSH value to `(f_state, f_measurement, state_trivial,
/// measurement_trivial)`, pinning each fidelity to its trivial value below
/// the relevant threshold.
pub fn fidelities_for_s(s_lower: f64) -> Result<(f64, f64, bool, bool)> {
    let measurement_trivial = s_lower <= S_LHV;
    let state_trivial = s_lower <= S_STAR;
    let f_measurement = if measurement_trivial {
        TRIVIAL_MEASUREMENT_FIDELITY
    } else {
        measurement_fidelity_bound(SValue::new(s_lower)?)?
    };
    let f_state = if state_trivial {
        0.5
    } else {
        singlet_fidelity_bound(SValue::new(s_lower)?)?
    };
    Ok((f_state, f_measurement, state_trivial, measurement_trivial))
}

pub fn certify(tally: &TrialTally, conf_level: f64) -> Result<CertificationResult> {
    let bound = s_avg_lower_bound(tally, conf_level)?;
    let (f_state, f_measurement, state_trivial, measurement_trivial) = fidelities_for_s(bound.s_lower)?;
    Ok(CertificationResult {
        tally: *tally,
        s_measured: tally.s_value(),
        bound,
        f_state,
        f_measurement,
        state_trivial,
        measurement_trivial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSizeRow {
    pub s: f64,
    pub n: u64,
    pub c: u64,
    pub s_lower: f64,
    pub f_state: f64,
    pub f_measurement: f64,
}

/// Certified fidelities over an `(S, n)` grid, assuming the expected win
/// count `c = round(n (4 + S) / 8)` in each cell. Rows are ordered by `S`
/// then `n`.
pub fn finite_size_table(s_values: &[f64], n_values: &[u64], conf_level: f64) -> Result<Vec<FiniteSizeRow>> {
    if s_values.is_empty() || n_values.is_empty() {
        return Err(Error::Domain("finite-size table needs nonempty S and n grids".into()));
    }
    residual(conf_level)?;
    let cells: Vec<(f64, u64)> = s_values
        .iter()
        .flat_map(|&s| n_values.iter().map(move |&n| (s, n)))
        .collect();
    par::map(&cells, |&(s, n)| {
        let tally = TrialTally::from_s_value(n, s)?;
        let cert = certify(&tally, conf_level)?;
        Ok(FiniteSizeRow {
            s,
            n,
            c: tally.wins(),
            s_lower: cert.bound.s_lower,
            f_state: cert.f_state,
            f_measurement: cert.f_measurement,
        })
    })
    .into_iter()
    .collect()
}
