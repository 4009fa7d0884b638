//! Phase-space evaluation of two-time correlators: the coherent-state
//! propagator integral, the two-variable Q-function integral and the
//! normal-order Q-derivative route, with the integration engines they need.

pub mod methods;
pub mod montecarlo;
pub mod polygauss;
pub mod quadrature;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use methods::{
    g2_via_phase_space, g_via_propagator, g_via_q_derivative, g_via_q_two_variable, phase_space_moment, phase_space_series,
    Observable, Ordering, LMAX_TAIL_TOL,
};
pub use polygauss::{Lin, Poly, PolyGaussian, Slot};

pub const DEFAULT_NODES_PER_AXIS: usize = 24;
pub const DEFAULT_SAMPLE_COUNT: usize = 1_000_000;
pub const DEFAULT_IMPORTANCE_WIDTH: f64 = 1.0;
pub const DEFAULT_SEED: u64 = 42;
pub const MIN_NODES_PER_AXIS: usize = 8;
pub const MIN_SAMPLE_COUNT: usize = 10_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    GaussHermiteTensor,
    MonteCarloGaussian,
}

impl Engine {
    pub fn tag(self) -> &'static str {
        match self {
            Engine::GaussHermiteTensor => "gauss_hermite_tensor",
            Engine::MonteCarloGaussian => "monte_carlo_gaussian",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss_hermite_tensor" => Ok(Engine::GaussHermiteTensor),
            "monte_carlo_gaussian" => Ok(Engine::MonteCarloGaussian),
            _ => Err(Error::InvalidInput(format!(
                "unknown engine '{s}', expected gauss_hermite_tensor or monte_carlo_gaussian"
            ))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub engine: Engine,
    pub nodes_per_axis: usize,
    pub sample_count: usize,
    /// Proposal standard deviation per real axis for black-box integrands.
    pub importance_width: f64,
    pub seed: u64,
    /// Propagator route only: integrate the three-variable collapsed form
    /// instead of the five-variable chain.
    pub collapse: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self::quadrature(DEFAULT_NODES_PER_AXIS)
    }
}

impl IntegrationConfig {
    pub fn quadrature(nodes_per_axis: usize) -> Self {
        Self {
            engine: Engine::GaussHermiteTensor,
            nodes_per_axis,
            sample_count: DEFAULT_SAMPLE_COUNT,
            importance_width: DEFAULT_IMPORTANCE_WIDTH,
            seed: DEFAULT_SEED,
            collapse: true,
        }
    }

    pub fn monte_carlo(sample_count: usize, seed: u64) -> Self {
        Self {
            engine: Engine::MonteCarloGaussian,
            sample_count,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.engine {
            Engine::GaussHermiteTensor if self.nodes_per_axis < MIN_NODES_PER_AXIS => Err(Error::InvalidInput(format!(
                "nodes_per_axis = {} below the minimum {MIN_NODES_PER_AXIS}",
                self.nodes_per_axis
            ))),
            Engine::MonteCarloGaussian if self.sample_count < MIN_SAMPLE_COUNT => Err(Error::InvalidInput(format!(
                "sample_count = {} below the minimum {MIN_SAMPLE_COUNT}",
                self.sample_count
            ))),
            _ if !(self.importance_width > 0.0 && self.importance_width.is_finite()) => {
                Err(Error::InvalidInput("importance_width must be > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A value with its standard error (0 for deterministic quadrature).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Complex64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: Complex64) -> Self {
        Self { value, std_error: 0.0 }
    }
}

/// Integrates a [`PolyGaussian`] with the configured engine.
pub fn integrate(pg: &PolyGaussian, cfg: &IntegrationConfig) -> Result<Estimate> {
    cfg.validate()?;
    match cfg.engine {
        Engine::GaussHermiteTensor => quadrature::integrate_quadrature(pg, cfg.nodes_per_axis).map(Estimate::exact),
        Engine::MonteCarloGaussian => montecarlo::integrate_polygauss(pg, cfg.sample_count, cfg.seed),
    }
}

/// Integrates a black-box integrand that decays like a Gaussian around
/// `centers`, sampling each variable with `cfg.importance_width`.
pub fn integrate_black_box<F>(centers: &[Complex64], f: F, cfg: &IntegrationConfig) -> Result<Estimate>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    cfg.validate()?;
    if cfg.engine != Engine::MonteCarloGaussian {
        return Err(Error::Unsupported(
            "black-box integrands need the monte_carlo_gaussian engine".into(),
        ));
    }
    let widths = vec![cfg.importance_width; centers.len()];
    montecarlo::integrate_sampler(centers, &widths, cfg.sample_count, cfg.seed, f)
}
