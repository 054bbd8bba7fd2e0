//! Light-cone time budget for the locality loophole.

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const DEFAULT_DISTANCE_SIGMA_NS: f64 = 0.01;
pub const DEFAULT_DURATION_SIGMA_NS: f64 = 0.3;
pub const DEFAULT_K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeConfig {
    /// Shortest start-to-stop distance between the nodes, meters.
    pub separation_distance: f64,
    /// Duration of one trial, ns.
    pub protocol_duration: f64,
    /// Uncertainty of the light-time budget, ns.
    pub distance_sigma: f64,
    /// Uncertainty of the protocol duration, ns.
    pub duration_sigma: f64,
    /// Required margin in combined standard deviations.
    pub k_sigma: f64,
}

impl SpaceTimeConfig {
    pub fn new(separation_distance: f64, protocol_duration: f64) -> Self {
        Self {
            separation_distance,
            protocol_duration,
            distance_sigma: DEFAULT_DISTANCE_SIGMA_NS,
            duration_sigma: DEFAULT_DURATION_SIGMA_NS,
            k_sigma: DEFAULT_K_SIGMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.separation_distance.is_finite() && self.separation_distance > 0.0) {
            return Err(Error::Domain(format!(
                "separation distance must be positive (got {})",
                self.separation_distance
            )));
        }
        for (name, v) in [
            ("protocol duration", self.protocol_duration),
            ("distance sigma", self.distance_sigma),
            ("duration sigma", self.duration_sigma),
            ("k", self.k_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be nonnegative (got {v})")));
            }
        }
        Ok(())
    }

    /// Budget and duration uncertainties added in quadrature, ns.
    pub fn combined_sigma(&self) -> f64 {
        self.distance_sigma.hypot(self.duration_sigma)
    }
}

/// `d / c` in nanoseconds.
pub fn light_time_budget(distance_m: f64) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::Domain(format!("distance must be positive (got {distance_m})")));
    }
    Ok(distance_m / SPEED_OF_LIGHT * 1e9)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalityMargin {
    pub budget_ns: f64,
    pub margin_ns: f64,
    /// `margin > k · combined sigma`.
    pub closed: bool,
    pub margin_fraction: f64,
}

pub fn locality_margin(cfg: &SpaceTimeConfig) -> Result<LocalityMargin> {
    cfg.validate()?;
    let budget_ns = light_time_budget(cfg.separation_distance)?;
    let margin_ns = budget_ns - cfg.protocol_duration;
    Ok(LocalityMargin {
        budget_ns,
        margin_ns,
        closed: margin_ns > cfg.k_sigma * cfg.combined_sigma(),
        margin_fraction: margin_ns / budget_ns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets() {
        assert!((light_time_budget(299.792458).unwrap() - 1000.0).abs() < 1e-9);
        assert!((light_time_budget(0.299792458).unwrap() - 1.0).abs() < 1e-12);
        assert!((light_time_budget(32.928).unwrap() - 109.836).abs() < 0.001);
        assert!(light_time_budget(0.0).is_err());
    }

    #[test]
    fn reference_margin() {
        let m = locality_margin(&SpaceTimeConfig::new(32.928, 106.7)).unwrap();
        assert!((m.margin_ns - 3.1).abs() < 0.05);
        assert!((m.margin_fraction - 0.028).abs() < 0.001);
        assert!(m.closed);
    }

    #[test]
    fn edge_durations() {
        let budget = light_time_budget(10.0).unwrap();
        let at_budget = locality_margin(&SpaceTimeConfig::new(10.0, budget)).unwrap();
        assert_eq!(at_budget.margin_ns, 0.0);
        assert!(!at_budget.closed);
        let zero = locality_margin(&SpaceTimeConfig::new(10.0, 0.0)).unwrap();
        assert_eq!(zero.margin_ns, budget);
    }
}
