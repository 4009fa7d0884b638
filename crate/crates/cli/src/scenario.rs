//! Scenario files: TOML with dotted sections, resolved against documented
//! defaults. Every default that gets applied is recorded for the report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Deserialize;
use twotime_core::correlators::{default_t_prepare, linear_grid, InitialState, Method, SystemSpec};
use twotime_core::dynamics::{DampingChannel, QuadraticHamiltonian};
use twotime_core::hilbert::{CoherentAmplitude, FockCutoff, DEFAULT_L_MAX, DEFAULT_N_MAX, DEFAULT_TRACE_LEAKAGE_BUDGET};
use twotime_core::phasespace::{Engine, IntegrationConfig};

/// Deterministic cross-validation tolerance on pairwise deviations.
pub const DEFAULT_CROSS_TOLERANCE: f64 = 1e-5;
/// Monte Carlo pairs may also differ by this many combined standard errors.
pub const CROSS_SIGMAS: f64 = 3.0;

/// A real number or `[re, im]`.
#[derive(Copy, Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexValue> for Complex64 {
    fn from(v: ComplexValue) -> Self {
        match v {
            ComplexValue::Real(re) => Complex64::new(re, 0.0),
            ComplexValue::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    methods: Option<Vec<String>>,
    system: RawSystem,
    tau: RawTau,
    #[serde(default)]
    integration: RawIntegration,
    #[serde(default)]
    outputs: RawOutputs,
    #[serde(default)]
    validation: RawValidation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    omega: f64,
    xi: Option<ComplexValue>,
    eta: Option<ComplexValue>,
    kappa: Option<f64>,
    n_thermal: Option<f64>,
    cutoff: Option<usize>,
    t_prepare: Option<f64>,
    trace_leakage_budget: Option<f64>,
    initial: RawInitial,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum RawInitial {
    Coherent { alpha: ComplexValue },
    Fock { n: usize },
    Thermal { nbar: f64 },
    Vacuum,
    /// `terms = [[re, im, n], ...]`
    Superposition { terms: Vec<(f64, f64, usize)> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTau {
    start: f64,
    stop: f64,
    count: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegration {
    engine: Option<String>,
    nodes_per_axis: Option<usize>,
    sample_count: Option<usize>,
    importance_width: Option<f64>,
    seed: Option<u64>,
    l_max: Option<usize>,
    collapse: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    series_path: Option<PathBuf>,
    report_path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidation {
    tolerance: Option<f64>,
}

/// Command-line overrides; they win over file keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub methods: Vec<Method>,
    pub seed: Option<u64>,
    pub cutoff: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub system: SystemSpec,
    pub tau: Vec<f64>,
    pub tau_range: (f64, f64, usize),
    pub methods: Vec<Method>,
    pub integration: IntegrationConfig,
    pub l_max: usize,
    pub cross_tolerance: f64,
    pub series_path: PathBuf,
    pub report_path: PathBuf,
    /// `key = value` for every default applied during resolution.
    pub defaults_applied: Vec<String>,
}

pub fn parse_scenario(path: &Path, ov: &Overrides) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    parse_scenario_str(&text, ov).with_context(|| format!("in scenario {}", path.display()))
}

pub fn parse_scenario_str(text: &str, ov: &Overrides) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).context("schema error")?;
    resolve(raw, ov)
}

fn or_default<T: std::fmt::Debug>(v: Option<T>, default: T, key: &str, log: &mut Vec<String>) -> T {
    v.unwrap_or_else(|| {
        log.push(format!("{key} = {default:?}"));
        default
    })
}

fn resolve(raw: RawScenario, ov: &Overrides) -> Result<Scenario> {
    let mut log = Vec::new();
    let s = raw.system;

    if raw.tau.count < 2 {
        bail!("schema error: tau.count = {} must be ≥ 2", raw.tau.count);
    }
    if !(raw.tau.start >= 0.0 && raw.tau.stop > raw.tau.start && raw.tau.stop.is_finite()) {
        bail!("schema error: tau needs 0 ≤ start < stop (got start = {}, stop = {})", raw.tau.start, raw.tau.stop);
    }

    let methods = if !ov.methods.is_empty() {
        ov.methods.clone()
    } else {
        match raw.methods {
            Some(tags) => tags
                .iter()
                .map(|t| t.parse::<Method>().with_context(|| format!("key `methods`: '{t}'")))
                .collect::<Result<Vec<_>>>()?,
            None => {
                log.push("methods = [\"regression\"]".into());
                vec![Method::Regression]
            }
        }
    };
    if methods.is_empty() {
        bail!("schema error: `methods` must list at least one method");
    }

    let xi: Complex64 = or_default(s.xi, ComplexValue::Real(0.0), "system.xi", &mut log).into();
    let eta: Complex64 = or_default(s.eta, ComplexValue::Real(0.0), "system.eta", &mut log).into();
    let h = QuadraticHamiltonian::new(s.omega, xi, eta).context("system")?;
    let kappa = or_default(s.kappa, 0.0, "system.kappa", &mut log);
    let n_thermal = or_default(s.n_thermal, 0.0, "system.n_thermal", &mut log);
    let channel = DampingChannel::new(kappa, n_thermal).context("system")?;

    if !channel.is_closed() {
        if let Some(m) = methods.iter().find(|m| m.is_phase_space()) {
            bail!(
                "semantic error: method {m} is a phase-space method; phase-space methods require closed dynamics (kappa = 0), got kappa = {kappa}"
            );
        }
    }

    let n_max = match ov.cutoff {
        Some(n) => n,
        None => or_default(s.cutoff, DEFAULT_N_MAX, "system.cutoff", &mut log),
    };
    let cutoff = FockCutoff::new(n_max).context("system.cutoff")?;
    let initial = match s.initial {
        RawInitial::Coherent { alpha } => InitialState::Coherent(CoherentAmplitude::new(alpha.into()).context("system.initial.alpha")?),
        RawInitial::Fock { n } => InitialState::Fock(n),
        RawInitial::Thermal { nbar } => InitialState::Thermal(nbar),
        RawInitial::Vacuum => InitialState::Fock(0),
        RawInitial::Superposition { terms } => {
            InitialState::Superposition(terms.into_iter().map(|(re, im, n)| (Complex64::new(re, im), n)).collect())
        }
    };
    let t_prepare = or_default(s.t_prepare, default_t_prepare(&channel), "system.t_prepare", &mut log);
    let budget = or_default(s.trace_leakage_budget, DEFAULT_TRACE_LEAKAGE_BUDGET, "system.trace_leakage_budget", &mut log);
    let mut system = SystemSpec::new(h, channel, initial, cutoff).with_t_prepare(t_prepare);
    system.trace_leakage_budget = budget;
    system.validate().context("system")?;

    let base = IntegrationConfig::default();
    let i = raw.integration;
    let engine = match i.engine {
        Some(e) => e.parse::<Engine>().context("integration.engine")?,
        None => {
            log.push(format!("integration.engine = \"{}\"", base.engine.tag()));
            base.engine
        }
    };
    let integration = IntegrationConfig {
        engine,
        nodes_per_axis: or_default(i.nodes_per_axis, base.nodes_per_axis, "integration.nodes_per_axis", &mut log),
        sample_count: or_default(i.sample_count, base.sample_count, "integration.sample_count", &mut log),
        importance_width: or_default(i.importance_width, base.importance_width, "integration.importance_width", &mut log),
        seed: match ov.seed {
            Some(seed) => seed,
            None => or_default(i.seed, base.seed, "integration.seed", &mut log),
        },
        collapse: or_default(i.collapse, base.collapse, "integration.collapse", &mut log),
    };
    integration.validate().context("integration")?;
    let l_max = or_default(i.l_max, DEFAULT_L_MAX, "integration.l_max", &mut log);
    let cross_tolerance = or_default(raw.validation.tolerance, DEFAULT_CROSS_TOLERANCE, "validation.tolerance", &mut log);
    if !(cross_tolerance > 0.0) {
        bail!("schema error: validation.tolerance must be > 0");
    }

    let place = |p: Option<PathBuf>, default: String, key: &str, log: &mut Vec<String>| -> PathBuf {
        let p = or_default(p, PathBuf::from(default), key, log);
        match &ov.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    };
    let series_path = place(raw.outputs.series_path, format!("{}.csv", raw.name), "outputs.series_path", &mut log);
    let report_path = place(raw.outputs.report_path, format!("{}_report.txt", raw.name), "outputs.report_path", &mut log);

    Ok(Scenario {
        tau: linear_grid(raw.tau.start, raw.tau.stop, raw.tau.count),
        tau_range: (raw.tau.start, raw.tau.stop, raw.tau.count),
        name: raw.name,
        system,
        methods,
        integration,
        l_max,
        cross_tolerance,
        series_path,
        report_path,
        defaults_applied: log,
    })
}

impl Scenario {
    pub fn uses_phase_space(&self) -> bool {
        self.methods.iter().any(|m| m.is_phase_space())
    }

    /// Effective parameters, one `key = value` per line.
    pub fn describe(&self) -> String {
        let s = &self.system;
        let h = &s.hamiltonian;
        let i = &self.integration;
        let mut out = String::new();
        let tags: Vec<_> = self.methods.iter().map(|m| m.tag()).collect();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "methods = {}", tags.join(", "));
        let _ = writeln!(out, "system.omega = {}", h.omega);
        let _ = writeln!(out, "system.xi = {}", h.xi);
        let _ = writeln!(out, "system.eta = {}", h.eta);
        let _ = writeln!(out, "system.kappa = {}", s.channel.kappa);
        let _ = writeln!(out, "system.n_thermal = {}", s.channel.n_thermal);
        let _ = writeln!(out, "system.cutoff = {}", s.cutoff.n_max());
        let _ = writeln!(out, "system.t_prepare = {}", s.t_prepare);
        let _ = writeln!(out, "system.trace_leakage_budget = {:e}", s.trace_leakage_budget);
        let _ = writeln!(out, "system.initial = {:?}", s.initial);
        let (a, b, n) = self.tau_range;
        let _ = writeln!(out, "tau = {n} points on [{a}, {b}]");
        let _ = writeln!(out, "integration.engine = {}", i.engine.tag());
        let _ = writeln!(out, "integration.nodes_per_axis = {}", i.nodes_per_axis);
        let _ = writeln!(out, "integration.sample_count = {}", i.sample_count);
        let _ = writeln!(out, "integration.importance_width = {}", i.importance_width);
        let _ = writeln!(out, "integration.seed = {}", i.seed);
        let _ = writeln!(out, "integration.collapse = {}", i.collapse);
        let _ = writeln!(out, "integration.l_max = {}", self.l_max);
        let _ = writeln!(out, "validation.tolerance = {:e}", self.cross_tolerance);
        out
    }
}
