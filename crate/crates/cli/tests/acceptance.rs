//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use twotime_cli::run::compute_series;
use twotime_cli::{execute, parse_scenario, Overrides, Scenario};
use twotime_core::analysis::{classify, default_band};
use twotime_core::correlators::{CorrelationSeries, Method};
use twotime_core::dynamics::QuadraticHamiltonian;
use twotime_core::hilbert::{CoherentAmplitude, FockCutoff};
use twotime_core::phasespace::{phase_space_moment, IntegrationConfig, Observable, Ordering};
use twotime_core::propagator::{kernel_quadratic, NumericKernel};

const QUAD_TOL: f64 = 1e-5;
const SIGMAS: f64 = 3.0;
const MC_SAMPLES: usize = 1_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str, ov: &Overrides) -> Scenario {
    parse_scenario(&scenario_dir().join(format!("{name}.toml")), ov).expect("acceptance scenario parses")
}

fn with_methods(methods: &[Method]) -> Overrides {
    Overrides {
        methods: methods.to_vec(),
        ..Default::default()
    }
}

fn mc_collapsed() -> IntegrationConfig {
    IntegrationConfig::monte_carlo(MC_SAMPLES, 42)
}

fn within_budget(elapsed: Duration, budget_s: u64) -> (bool, String) {
    let ok = elapsed <= Duration::from_secs(budget_s);
    (ok, format!("{:.1} s of {budget_s} s", elapsed.as_secs_f64()))
}

fn criterion_1() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let sc = load("coherent_closed", &Overrides::default());
    let out = execute(&sc)?;
    let mut worst = 0.0f64;
    for s in &out.series {
        for v in &s.g2 {
            worst = worst.max((v - 1.0).abs());
        }
    }
    let mut mc = sc.clone();
    mc.integration = mc_collapsed();
    mc.methods = vec![Method::Propagator];
    let s = compute_series(&mc, Method::Propagator)?;
    let mut mc_ok = true;
    let mut worst_sigma = 0.0f64;
    for k in 0..s.len() {
        let se = s.g2_error_estimate[k];
        let z = if se > 0.0 { (s.g2[k] - 1.0).abs() / se } else { 0.0 };
        worst_sigma = worst_sigma.max(z);
        mc_ok &= (s.g2[k] - 1.0).abs() <= SIGMAS * se;
    }
    let (time_ok, time) = within_budget(start.elapsed(), 120);
    Ok(Outcome {
        pass: worst <= QUAD_TOL && mc_ok && time_ok,
        detail: format!(
            "4 methods x {} tau, max |g2-1| = {worst:.2e} (tol {QUAD_TOL:.0e}); MC propagator max {worst_sigma:.2} sigma; {time}",
            sc.tau.len()
        ),
    })
}

fn criterion_2() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let sc = load("fock_antibunching", &Overrides::default());
    let s = compute_series(&sc, Method::Regression)?;
    let report = classify(&s, default_band(&s))?;
    let label = report.to_string();
    let (time_ok, time) = within_budget(start.elapsed(), 10);
    Ok(Outcome {
        pass: s.g2[0].abs() <= 1e-9 && label == "antibunched, sub-Poissonian" && time_ok,
        detail: format!("g2(0) = {:.2e}, classified \"{label}\"; {time}", s.g2[0]),
    })
}

fn criterion_3() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let sc = load("thermal_bunching", &Overrides::default());
    let s = compute_series(&sc, Method::Regression)?;
    let kappa = sc.system.channel.kappa;
    let mut e2 = 0.0f64;
    let mut e1 = 0.0f64;
    for k in 0..s.len() {
        let decay = (-kappa * s.tau[k]).exp();
        e2 = e2.max((s.g2[k] - (1.0 + decay)).abs());
        e1 = e1.max((s.g1[k].norm() - decay.sqrt()).abs());
    }
    let label = classify(&s, default_band(&s))?.to_string();
    let (time_ok, time) = within_budget(start.elapsed(), 30);
    Ok(Outcome {
        pass: s.len() == 20 && e2 <= 1e-4 && e1 <= 1e-6 && label == "bunched, super-Poissonian" && time_ok,
        detail: format!("max g2 err {e2:.2e} (tol 1e-4), max |g1| err {e1:.2e} (tol 1e-6), \"{label}\"; {time}"),
    })
}

fn triangle_scenarios() -> [&'static str; 3] {
    ["coherent_closed", "driven_vacuum", "squeezed_vacuum"]
}

fn criterion_4() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let mut worst_quad = 0.0f64;
    let mut worst_sigma = 0.0f64;
    let mut points = 0;
    for name in triangle_scenarios() {
        let mut sc = load(name, &Overrides::default());
        sc.tau = twotime_core::correlators::linear_grid(sc.tau_range.0, sc.tau_range.1, 10);
        let reg = compute_series(&sc, Method::Regression)?;
        let t = sc.system.t_prepare;
        for m in [Method::Propagator, Method::QTwoVariable, Method::QDerivative] {
            for (k, &tau) in sc.tau.iter().enumerate() {
                let g = phase_space_moment(&sc.system, t, tau, m, Observable::G(Ordering::Delayed), &sc.integration, sc.l_max)?;
                worst_quad = worst_quad.max((g.value - reg.g[k]).norm());
                points += 1;
            }
        }
        for (k, &tau) in sc.tau.iter().enumerate() {
            let g = phase_space_moment(&sc.system, t, tau, Method::Propagator, Observable::G(Ordering::Delayed), &mc_collapsed(), sc.l_max)?;
            worst_sigma = worst_sigma.max((g.value - reg.g[k]).norm() / g.std_error.max(f64::MIN_POSITIVE));
        }
    }
    let (time_ok, time) = within_budget(start.elapsed(), 600);
    Ok(Outcome {
        pass: worst_quad <= QUAD_TOL && worst_sigma <= SIGMAS && time_ok,
        detail: format!(
            "{points} quadrature points max |g - g_reg| = {worst_quad:.2e} (tol {QUAD_TOL:.0e}); MC propagator max {worst_sigma:.2} sigma; {time}"
        ),
    })
}

fn criterion_5() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let c = Complex64::new;
    let alphas = [c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 1.0), c(0.0, 2.0), c(-2.0, 0.0)];
    let betas = [c(0.5, 0.0), c(0.0, -1.5), c(1.0, 1.0), c(-2.0, 0.0), c(1.2, -1.6)];
    let hams = [
        QuadraticHamiltonian::harmonic(1.0),
        QuadraticHamiltonian::new(1.0, c(0.0, 0.0), c(0.5, 0.0))?,
        QuadraticHamiltonian::new(1.0, c(0.2, 0.0), c(0.0, 0.0))?,
    ];
    let cutoff = FockCutoff::new(60)?;
    let t = 1.0;
    let mut worst = 0.0f64;
    for h in &hams {
        let k = kernel_quadratic(h, t)?;
        let numeric = NumericKernel::new(h, t, cutoff);
        for &a in &alphas {
            for &b in &betas {
                let exact = numeric.eval(CoherentAmplitude::new(a)?, CoherentAmplitude::new(b)?)?;
                let closed = k.eval(a, b);
                worst = worst.max((closed - exact).norm() / exact.norm());
            }
        }
    }
    let (time_ok, time) = within_budget(start.elapsed(), 60);
    Ok(Outcome {
        pass: worst <= 1e-6 && time_ok,
        detail: format!("3 Hamiltonians x 25 (alpha, beta) at t = {t}, n_max = 60: max rel err {worst:.2e} (tol 1e-6); {time}"),
    })
}

fn criterion_6() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let sc = load("monte_carlo_propagator", &with_methods(&[Method::Propagator]));
    let quad = IntegrationConfig::default();
    let t = sc.system.t_prepare;
    let mut worst_sigma = 0.0f64;
    let mut worst_rel_se = 0.0f64;
    for &tau in &sc.tau {
        let full = phase_space_moment(&sc.system, t, tau, Method::Propagator, Observable::G(Ordering::Delayed), &sc.integration, sc.l_max)?;
        let collapsed = phase_space_moment(&sc.system, t, tau, Method::Propagator, Observable::G(Ordering::Delayed), &quad, sc.l_max)?;
        worst_sigma = worst_sigma.max((full.value - collapsed.value).norm() / full.std_error);
        worst_rel_se = worst_rel_se.max(full.std_error / collapsed.value.norm());
    }
    let (time_ok, time) = within_budget(start.elapsed(), 300);
    Ok(Outcome {
        pass: worst_sigma <= SIGMAS && time_ok && !sc.integration.collapse,
        detail: format!(
            "{} tau, 5-variable MC ({} samples) vs 3-variable quadrature: max {worst_sigma:.2} sigma, largest relative SE {:.1}%; {time}",
            sc.tau.len(),
            sc.integration.sample_count,
            100.0 * worst_rel_se
        ),
    })
}

fn deterministic_series(sc: &Scenario) -> anyhow::Result<Vec<CorrelationSeries>> {
    sc.methods
        .iter()
        .filter(|m| **m == Method::Regression || sc.integration.engine == twotime_core::phasespace::Engine::GaussHermiteTensor)
        .map(|&m| compute_series(sc, m))
        .collect()
}

fn criterion_7() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for name in ["coherent_closed", "fock_antibunching", "thermal_bunching", "driven_vacuum", "squeezed_vacuum"] {
        let base = load(name, &Overrides::default());
        let wider = load(
            name,
            &Overrides {
                cutoff: Some(base.system.cutoff.n_max() + 10),
                ..Default::default()
            },
        );
        for (a, b) in deterministic_series(&base)?.iter().zip(deterministic_series(&wider)?.iter()) {
            for k in 0..a.len() {
                worst = worst.max((a.g[k] - b.g[k]).norm()).max((a.g2[k] - b.g2[k]).abs());
            }
        }
    }
    let (_, time) = within_budget(start.elapsed(), 600);
    Ok(Outcome {
        pass: worst < 1e-7,
        detail: format!("criteria 1-4 scenarios at n_max and n_max + 10: max shift {worst:.2e} (tol 1e-7); {time}"),
    })
}

fn criterion_8() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_twotime");
    let dir = tempfile::tempdir()?;
    let mut checked = Vec::new();
    let mut all_same = true;
    for name in ["coherent_closed", "thermal_bunching", "monte_carlo_propagator"] {
        let mut csvs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{name}-{run}"));
            let status = Command::new(bin)
                .arg("run")
                .arg(scenario_dir().join(format!("{name}.toml")))
                .arg("--out")
                .arg(&out)
                .env("RUST_LOG", "error")
                .status()?;
            anyhow::ensure!(status.success(), "{name} run {run} exited with {status}");
            csvs.push(std::fs::read(out.join(format!("{name}.csv")))?);
        }
        all_same &= csvs[0] == csvs[1];
        checked.push(name);
    }
    let (_, time) = within_budget(start.elapsed(), 600);
    Ok(Outcome {
        pass: all_same,
        detail: format!("two runs each of {}: CSVs byte-identical = {all_same}; {time}", checked.join(", ")),
    })
}

fn main() {
    let criteria: [(&str, fn() -> anyhow::Result<Outcome>); 8] = [
        ("1 coherent Poissonian law", criterion_1),
        ("2 Fock antibunching", criterion_2),
        ("3 thermal bunching", criterion_3),
        ("4 method triangle", criterion_4),
        ("5 kernel validation", criterion_5),
        ("6 full vs collapsed propagator", criterion_6),
        ("7 truncation stability", criterion_7),
        ("8 determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failed += 1;
        }
        println!("acceptance criterion {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
