//! Photon-statistics classification of a normalized `g2(τ)` series.
//!
//! Bunching on a discrete grid: `g2(τ) < g2(0) − band` must hold on a prefix of
//! the grid after `τ = 0` with at least [`MIN_PREFIX_POINTS`] points; the
//! critical time is the last point of that prefix. Antibunching mirrors it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::correlators::CorrelationSeries;
use crate::error::{Error, Result};

pub const DEFAULT_BAND: f64 = 1e-6;
pub const MIN_PREFIX_POINTS: usize = 2;
/// Multiple of the largest `g2` standard error used as the band for Monte Carlo series.
pub const STOCHASTIC_BAND_SIGMAS: f64 = 3.0;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Poissonian,
    SuperPoissonian,
    SubPoissonian,
}

impl Statistics {
    pub fn of(g2: f64, band: f64) -> Self {
        if g2 > 1.0 + band {
            Statistics::SuperPoissonian
        } else if g2 < 1.0 - band {
            Statistics::SubPoissonian
        } else {
            Statistics::Poissonian
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistics::Poissonian => "Poissonian",
            Statistics::SuperPoissonian => "super-Poissonian",
            Statistics::SubPoissonian => "sub-Poissonian",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bunching {
    Bunched,
    Antibunched,
    Neither,
}

impl fmt::Display for Bunching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bunching::Bunched => "bunched",
            Bunching::Antibunched => "antibunched",
            Bunching::Neither => "neither",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsReport {
    pub classification: Vec<Statistics>,
    pub classification_zero: Statistics,
    pub bunching: Bunching,
    pub critical_time: Option<f64>,
    pub g2_zero: f64,
    pub tolerance_band: f64,
    /// Every `g2(τ) − g2(0)` lies inside the band.
    pub inconclusive: bool,
}

impl fmt::Display for StatisticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}", self.bunching, self.classification_zero)
    }
}

/// Band for a series: [`DEFAULT_BAND`], or three times its largest `g2`
/// standard error when that is larger.
pub fn default_band(series: &CorrelationSeries) -> f64 {
    let sigma = series.g2_error_estimate.iter().cloned().fold(0.0, f64::max);
    DEFAULT_BAND.max(STOCHASTIC_BAND_SIGMAS * sigma)
}

pub fn classify(series: &CorrelationSeries, band: f64) -> Result<StatisticsReport> {
    classify_values(&series.tau, &series.g2, band)
}

/// Classification of normalized `g2` samples on a grid starting at `τ = 0`.
pub fn classify_values(tau: &[f64], g2: &[f64], band: f64) -> Result<StatisticsReport> {
    if tau.is_empty() || tau.len() != g2.len() {
        return Err(Error::InvalidInput("classification needs a nonempty series".into()));
    }
    if !(band > 0.0 && band.is_finite()) {
        return Err(Error::InvalidInput(format!("tolerance band must be > 0, got {band}")));
    }
    if tau[0] != 0.0 {
        return Err(Error::InvalidInput("classification needs g2 at τ = 0 as the first grid point".into()));
    }
    if g2.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("g2 series contains non-finite values".into()));
    }
    let g0 = g2[0];
    let prefix = |below: bool| g2[1..].iter().take_while(|&&v| if below { v < g0 - band } else { v > g0 + band }).count();
    let (down, up) = (prefix(true), prefix(false));
    let (bunching, critical_time) = if down >= MIN_PREFIX_POINTS {
        (Bunching::Bunched, Some(tau[down]))
    } else if up >= MIN_PREFIX_POINTS {
        (Bunching::Antibunched, Some(tau[up]))
    } else {
        (Bunching::Neither, None)
    };
    Ok(StatisticsReport {
        classification: g2.iter().map(|&v| Statistics::of(v, band)).collect(),
        classification_zero: Statistics::of(g0, band),
        bunching,
        critical_time,
        g2_zero: g0,
        tolerance_band: band,
        inconclusive: g2.iter().all(|&v| (v - g0).abs() <= band),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlators::{linear_grid, regression_series, InitialState, SystemSpec};
    use crate::dynamics::{DampingChannel, QuadraticHamiltonian};
    use crate::hilbert::{CoherentAmplitude, FockCutoff};
    use proptest::prelude::*;

    #[test]
    fn thermal_series_is_bunched_to_the_end() {
        let sys = SystemSpec::new(
            QuadraticHamiltonian::harmonic(1.0),
            DampingChannel::new(1.0, 0.5).unwrap(),
            InitialState::Thermal(0.5),
            FockCutoff::new(40).unwrap(),
        );
        let tau = linear_grid(0.0, 4.0, 12);
        let r = classify(&regression_series(&sys, &tau).unwrap(), DEFAULT_BAND).unwrap();
        assert_eq!(r.bunching, Bunching::Bunched);
        assert_eq!(r.classification_zero, Statistics::SuperPoissonian);
        assert_eq!(r.critical_time, Some(4.0));
        assert_eq!(r.to_string(), "bunched, super-Poissonian");
        assert!(!r.inconclusive);
    }

    #[test]
    fn coherent_series_is_poissonian() {
        let sys = SystemSpec::new(
            QuadraticHamiltonian::harmonic(1.0),
            DampingChannel::closed(),
            InitialState::Coherent(CoherentAmplitude::from_parts(1.0, 0.0).unwrap()),
            FockCutoff::new(40).unwrap(),
        );
        let tau = linear_grid(0.0, 6.0, 10);
        let r = classify(&regression_series(&sys, &tau).unwrap(), DEFAULT_BAND).unwrap();
        assert_eq!(r.bunching, Bunching::Neither);
        assert!(r.classification.iter().all(|&s| s == Statistics::Poissonian));
        assert!(r.inconclusive);
    }

    #[test]
    fn driven_single_photon_is_antibunched() {
        let sys = SystemSpec::new(
            QuadraticHamiltonian::new(1.0, Default::default(), num_complex::Complex64::new(0.5, 0.0)).unwrap(),
            DampingChannel::new(1.0, 0.0).unwrap(),
            InitialState::Fock(1),
            FockCutoff::new(40).unwrap(),
        )
        .with_t_prepare(0.0);
        let tau = linear_grid(0.0, 2.0, 10);
        let r = classify(&regression_series(&sys, &tau).unwrap(), DEFAULT_BAND).unwrap();
        assert!(r.g2_zero.abs() < 1e-9);
        assert_eq!(r.to_string(), "antibunched, sub-Poissonian");
    }

    #[test]
    fn single_point_prefix_is_not_enough() {
        let r = classify_values(&[0.0, 1.0, 2.0], &[2.0, 1.0, 2.5], 1e-6).unwrap();
        assert_eq!(r.bunching, Bunching::Neither);
        assert_eq!(r.critical_time, None);
    }

    #[test]
    fn invalid_inputs() {
        assert!(classify_values(&[], &[], 1e-6).is_err());
        assert!(classify_values(&[0.0, 1.0], &[1.0, 1.0], 0.0).is_err());
        assert!(classify_values(&[0.5, 1.0], &[1.0, 1.0], 1e-6).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_rescaling(
            g2u in proptest::collection::vec(0.0f64..5.0, 2..12),
            n in 0.1f64..3.0,
            s in 0.01f64..100.0,
        ) {
            let tau: Vec<f64> = (0..g2u.len()).map(|k| k as f64 * 0.3).collect();
            let norm = |scale: f64| -> Vec<f64> {
                let m = n * scale;
                g2u.iter().map(|v| v * scale * scale / (m * m)).collect()
            };
            let a = classify_values(&tau, &norm(1.0), 1e-3).unwrap();
            let b = classify_values(&tau, &norm(s), 1e-3).unwrap();
            prop_assert_eq!(a.bunching, b.bunching);
            prop_assert_eq!(a.classification_zero, b.classification_zero);
        }
    }
}
