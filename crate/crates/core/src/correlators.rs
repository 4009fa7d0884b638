//! Two-time correlators by quantum regression on the truncated Fock space.
//!
//! With `ρ = ρ(t)` the prepared state and `M(τ)` the propagated map,
//! `g(τ) = ⟨a†(t+τ)a(t)⟩ = Tr[a† M(τ)(aρ)]` and
//! `G2(τ) = ⟨a†(t)a†(t+τ)a(t+τ)a(t)⟩ = Tr[a†a M(τ)(aρa†)]`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{audit_leakage, evolve_lindblad, evolve_unitary, DampingChannel, MapCache, QuadraticHamiltonian};
use crate::error::{Error, Result};
use crate::hilbert::{annihilation, CMatrix, CoherentAmplitude, DensityMatrix, FockCutoff, DEFAULT_TRACE_LEAKAGE_BUDGET};

/// Mean photon numbers below this make normalized correlators undefined.
pub const ZERO_DENOMINATOR: f64 = 1e-12;
/// Default `κ·t_prepare` for damped scenarios.
pub const STEADY_STATE_KAPPA_T: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    Coherent(CoherentAmplitude),
    Fock(usize),
    Thermal(f64),
    /// Normalized on construction of the density matrix.
    Superposition(Vec<(Complex64, usize)>),
}

impl InitialState {
    pub fn density(&self, cutoff: FockCutoff, trace_budget: f64) -> Result<DensityMatrix> {
        match self {
            InitialState::Coherent(a) => {
                let deficit = crate::hilbert::coherent_norm_deficit(*a, cutoff);
                if deficit > trace_budget {
                    return Err(Error::CutoffTooSmall(format!(
                        "coherent amplitude {} loses {deficit:.3e} of norm at n_max = {}",
                        a.value(),
                        cutoff.n_max()
                    )));
                }
                DensityMatrix::coherent(*a, cutoff)
            }
            InitialState::Fock(n) => DensityMatrix::fock(*n, cutoff),
            InitialState::Thermal(nbar) => DensityMatrix::thermal(*nbar, cutoff, trace_budget),
            InitialState::Superposition(terms) => DensityMatrix::superposition(terms, cutoff),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub hamiltonian: QuadraticHamiltonian,
    pub channel: DampingChannel,
    pub initial: InitialState,
    pub cutoff: FockCutoff,
    pub t_prepare: f64,
    pub trace_leakage_budget: f64,
}

impl SystemSpec {
    /// `t_prepare` defaults to steady state (`κt = 20`) when damped, 0 otherwise.
    pub fn new(hamiltonian: QuadraticHamiltonian, channel: DampingChannel, initial: InitialState, cutoff: FockCutoff) -> Self {
        Self {
            hamiltonian,
            channel,
            initial,
            cutoff,
            t_prepare: default_t_prepare(&channel),
            trace_leakage_budget: DEFAULT_TRACE_LEAKAGE_BUDGET,
        }
    }

    pub fn with_t_prepare(mut self, t: f64) -> Self {
        self.t_prepare = t;
        self
    }

    pub fn with_cutoff(mut self, cutoff: FockCutoff) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn is_closed(&self) -> bool {
        self.channel.is_closed()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_prepare >= 0.0 && self.t_prepare.is_finite()) {
            return Err(Error::InvalidInput(format!("t_prepare = {} must be ≥ 0", self.t_prepare)));
        }
        if !(self.trace_leakage_budget > 0.0) {
            return Err(Error::InvalidInput("trace_leakage_budget must be > 0".into()));
        }
        Ok(())
    }

    pub fn initial_density(&self) -> Result<DensityMatrix> {
        self.initial.density(self.cutoff, self.trace_leakage_budget)
    }

    /// `ρ(t)` after `t_prepare`.
    pub fn prepared_state(&self) -> Result<DensityMatrix> {
        self.validate()?;
        let rho0 = self.initial_density()?;
        let rho = if self.is_closed() {
            evolve_unitary(&rho0, &self.hamiltonian, self.t_prepare, self.trace_leakage_budget)?
        } else {
            evolve_lindblad(&rho0, &self.hamiltonian, &self.channel, self.t_prepare, self.trace_leakage_budget)?
        };
        audit_leakage(&rho, self.trace_leakage_budget)?;
        Ok(rho)
    }
}

pub fn default_t_prepare(channel: &DampingChannel) -> f64 {
    if channel.is_closed() {
        0.0
    } else {
        STEADY_STATE_KAPPA_T / channel.kappa
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Regression,
    Propagator,
    QTwoVariable,
    QDerivative,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Regression, Method::Propagator, Method::QTwoVariable, Method::QDerivative];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Regression => "regression",
            Method::Propagator => "propagator",
            Method::QTwoVariable => "qfunction_two_variable",
            Method::QDerivative => "qfunction_derivative",
        }
    }

    pub fn is_phase_space(self) -> bool {
        self != Method::Regression
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                let tags: Vec<_> = Method::ALL.iter().map(|m| m.tag()).collect();
                Error::InvalidInput(format!("unknown method '{s}', expected one of {}", tags.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub method: Method,
    pub tau: Vec<f64>,
    /// Unnormalized `⟨a†(t+τ)a(t)⟩`.
    pub g: Vec<Complex64>,
    /// `g(τ)/⟨a†a⟩`.
    pub g1: Vec<Complex64>,
    /// Unnormalized `⟨a†(t)a†(t+τ)a(t+τ)a(t)⟩`.
    pub g2_unnormalized: Vec<f64>,
    pub g2: Vec<f64>,
    pub mean_n: f64,
    /// Standard error of `g` (0 for deterministic methods).
    pub error_estimate: Vec<f64>,
    /// Standard error of the normalized `g2`.
    pub g2_error_estimate: Vec<f64>,
    /// Largest top-level population seen while propagating.
    pub leakage: f64,
}

impl CorrelationSeries {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn is_stochastic(&self) -> bool {
        self.error_estimate.iter().chain(&self.g2_error_estimate).any(|&e| e > 0.0)
    }
}

pub fn validate_tau_grid(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::InvalidInput("τ grid is empty".into()));
    }
    if tau.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("τ grid values must be finite and ≥ 0".into()));
    }
    if tau.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("τ grid must be ascending".into()));
    }
    Ok(())
}

/// Uniform grid of `count` points on `[start, stop]`.
pub fn linear_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    stop
                } else {
                    start + (stop - start) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Raw regression output on a τ grid.
#[derive(Clone, Debug)]
pub struct Regressed {
    pub mean_n: f64,
    pub g: Vec<Complex64>,
    pub g2_unnormalized: Vec<f64>,
    pub leakage: f64,
}

/// Propagates `aρ` and `aρa†` along the grid, reusing one map per distinct step.
pub fn regress(sys: &SystemSpec, tau_grid: &[f64]) -> Result<Regressed> {
    validate_tau_grid(tau_grid)?;
    let rho = sys.prepared_state()?;
    let a = annihilation(sys.cutoff);
    let ad = a.adjoint();
    let num = &ad * &a;
    let mean_n = rho.mean_photon_number();
    let cache = MapCache::new(&sys.hamiltonian, &sys.channel, sys.cutoff);
    let mut x1: CMatrix = &a * rho.entries();
    let mut x2: CMatrix = &x1 * &ad;
    let top = sys.cutoff.n_max();
    let mut leakage = rho.top_population().abs();
    let mut prev = 0.0;
    let mut g = Vec::with_capacity(tau_grid.len());
    let mut g2 = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let step = tau - prev;
        if step > 0.0 {
            let map = cache.get(step)?;
            x1 = map.apply(&x1)?;
            x2 = map.apply(&x2)?;
        }
        prev = tau;
        g.push((&ad * &x1).trace());
        let g2v = (&num * &x2).trace();
        g2.push(g2v.re);
        if mean_n > ZERO_DENOMINATOR {
            let norm = x2.trace().re.max(ZERO_DENOMINATOR);
            leakage = leakage.max(x2[(top, top)].re.abs() / norm);
        }
    }
    if leakage > sys.trace_leakage_budget {
        return Err(Error::CutoffTooSmall(format!(
            "regressed operator reached the top level n_max = {top} with population {leakage:.3e} (budget {:.1e})",
            sys.trace_leakage_budget
        )));
    }
    Ok(Regressed {
        mean_n,
        g,
        g2_unnormalized: g2,
        leakage,
    })
}

/// Forward ordering `⟨a†(t)a(t+τ)⟩ = Tr[a M(τ)(ρa†)]`, computed independently.
pub fn forward_g_regression(sys: &SystemSpec, tau_grid: &[f64]) -> Result<Vec<Complex64>> {
    validate_tau_grid(tau_grid)?;
    let rho = sys.prepared_state()?;
    let a = annihilation(sys.cutoff);
    let cache = MapCache::new(&sys.hamiltonian, &sys.channel, sys.cutoff);
    let mut x: CMatrix = rho.entries() * a.adjoint();
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        if tau > prev {
            x = cache.get(tau - prev)?.apply(&x)?;
        }
        prev = tau;
        out.push((&a * &x).trace());
    }
    Ok(out)
}

pub(crate) fn normalize(
    method: Method,
    tau: &[f64],
    mean_n: f64,
    g: Vec<Complex64>,
    g2_unnormalized: Vec<f64>,
    error_estimate: Vec<f64>,
    g2_unnormalized_error: Vec<f64>,
    leakage: f64,
) -> Result<CorrelationSeries> {
    if mean_n < ZERO_DENOMINATOR {
        return Err(Error::ZeroDenominator(mean_n));
    }
    let n2 = mean_n * mean_n;
    Ok(CorrelationSeries {
        method,
        tau: tau.to_vec(),
        g1: g.iter().map(|z| z / mean_n).collect(),
        g,
        g2: g2_unnormalized.iter().map(|v| v / n2).collect(),
        g2_unnormalized,
        mean_n,
        error_estimate,
        g2_error_estimate: g2_unnormalized_error.iter().map(|e| e / n2).collect(),
        leakage,
    })
}

/// Full regression series with `g1(0) = 1` exactly.
pub fn regression_series(sys: &SystemSpec, tau_grid: &[f64]) -> Result<CorrelationSeries> {
    let r = regress(sys, tau_grid)?;
    let zeros = vec![0.0; tau_grid.len()];
    let mut series = normalize(
        Method::Regression,
        tau_grid,
        r.mean_n,
        r.g,
        r.g2_unnormalized,
        zeros.clone(),
        zeros,
        r.leakage,
    )?;
    for (k, &t) in tau_grid.iter().enumerate() {
        if t == 0.0 {
            // Tr[a†aρ] equals Σ n ρ_nn up to round-off
            series.g[k] = Complex64::new(series.mean_n, 0.0);
            series.g1[k] = Complex64::new(1.0, 0.0);
        }
    }
    Ok(series)
}

pub fn g1_regression(sys: &SystemSpec, tau_grid: &[f64]) -> Result<CorrelationSeries> {
    regression_series(sys, tau_grid)
}

pub fn g2_regression(sys: &SystemSpec, tau_grid: &[f64]) -> Result<CorrelationSeries> {
    regression_series(sys, tau_grid)
}

/// Unnormalized `⟨a†(t+τ)a(t)⟩` at a single delay.
pub fn unnormalized_g(sys: &SystemSpec, tau: f64) -> Result<Complex64> {
    Ok(regress(sys, &[tau])?.g[0])
}
