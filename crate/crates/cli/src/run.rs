//! Runs a scenario: every requested method, the regression reference,
//! pairwise cross-validation, classification, CSV series and the report.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use twotime_core::analysis::{classify, default_band};
use twotime_core::correlators::{regression_series, CorrelationSeries, Method};
use twotime_core::phasespace::phase_space_series;

use crate::scenario::{Scenario, CROSS_SIGMAS};

pub const CSV_HEADER: &str = "tau,method,g1_re,g1_im,g2,abs_err";

/// A pair of methods whose series disagree beyond tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossFailure {
    pub methods: (Method, Method),
    pub quantity: &'static str,
    pub tau: f64,
    pub deviation: f64,
    pub threshold: f64,
}

impl std::fmt::Display for CrossFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} vs {}: {} deviates by {:.3e} at tau = {} (threshold {:.3e})",
            self.methods.0, self.methods.1, self.quantity, self.deviation, self.tau, self.threshold
        )
    }
}

#[derive(Clone, Debug)]
pub struct PairDeviation {
    pub methods: (Method, Method),
    pub max_g: f64,
    pub max_g2: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub series: Vec<CorrelationSeries>,
    pub reference: CorrelationSeries,
    pub deviations: Vec<PairDeviation>,
    pub failures: Vec<CrossFailure>,
    pub csv: String,
    pub report: String,
}

pub fn compute_series(sc: &Scenario, method: Method) -> Result<CorrelationSeries> {
    let s = match method {
        Method::Regression => regression_series(&sc.system, &sc.tau),
        m => phase_space_series(&sc.system, &sc.tau, m, &sc.integration, sc.l_max),
    };
    s.with_context(|| format!("method {method}"))
}

pub fn execute(sc: &Scenario) -> Result<RunOutcome> {
    let series: Vec<CorrelationSeries> = sc.methods.iter().map(|&m| compute_series(sc, m)).collect::<Result<_>>()?;
    let reference = match series.iter().find(|s| s.method == Method::Regression) {
        Some(s) => s.clone(),
        None => compute_series(sc, Method::Regression)?,
    };
    let (deviations, failures) = cross_validate(&series, sc.cross_tolerance);
    let csv = series_csv(&series, &reference);
    let report = report(sc, &series, &reference, &deviations, &failures)?;
    Ok(RunOutcome {
        series,
        reference,
        deviations,
        failures,
        csv,
        report,
    })
}

fn threshold(tol: f64, a: f64, b: f64) -> f64 {
    tol.max(CROSS_SIGMAS * (a * a + b * b).sqrt())
}

pub fn cross_validate(series: &[CorrelationSeries], tol: f64) -> (Vec<PairDeviation>, Vec<CrossFailure>) {
    let mut deviations = Vec::new();
    let mut failures = Vec::new();
    for (i, a) in series.iter().enumerate() {
        for b in &series[i + 1..] {
            let mut dev = PairDeviation {
                methods: (a.method, b.method),
                max_g: 0.0,
                max_g2: 0.0,
            };
            let mut worst: Option<CrossFailure> = None;
            for k in 0..a.len() {
                let dg = (a.g[k] - b.g[k]).norm();
                let dg2 = (a.g2[k] - b.g2[k]).abs();
                dev.max_g = dev.max_g.max(dg);
                dev.max_g2 = dev.max_g2.max(dg2);
                let checks = [
                    ("g", dg, threshold(tol, a.error_estimate[k], b.error_estimate[k])),
                    ("g2", dg2, threshold(tol, a.g2_error_estimate[k], b.g2_error_estimate[k])),
                ];
                for (quantity, deviation, threshold) in checks {
                    let excess = deviation / threshold;
                    if excess > 1.0 && worst.as_ref().is_none_or(|w| excess > w.deviation / w.threshold) {
                        worst = Some(CrossFailure {
                            methods: (a.method, b.method),
                            quantity,
                            tau: a.tau[k],
                            deviation,
                            threshold,
                        });
                    }
                }
            }
            deviations.push(dev);
            failures.extend(worst);
        }
    }
    (deviations, failures)
}

/// One row per (τ, method); `abs_err` is the larger of the `g1` and `g2`
/// deviations from the regression reference.
pub fn series_csv(series: &[CorrelationSeries], reference: &CorrelationSeries) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for k in 0..reference.len() {
        for s in series {
            let err = (s.g1[k] - reference.g1[k]).norm().max((s.g2[k] - reference.g2[k]).abs());
            let _ = writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.tau[k],
                s.method.tag(),
                s.g1[k].re,
                s.g1[k].im,
                s.g2[k],
                err
            );
        }
    }
    out
}

fn report(
    sc: &Scenario,
    series: &[CorrelationSeries],
    reference: &CorrelationSeries,
    deviations: &[PairDeviation],
    failures: &[CrossFailure],
) -> Result<String> {
    let mut r = String::new();
    let _ = writeln!(r, "twotime report: {}", sc.name);
    let _ = writeln!(r, "\n[parameters]\n{}", sc.describe().trim_end());
    let _ = writeln!(r, "\n[defaults applied]");
    if sc.defaults_applied.is_empty() {
        let _ = writeln!(r, "none");
    }
    for d in &sc.defaults_applied {
        let _ = writeln!(r, "{d}");
    }
    let _ = writeln!(r, "\nrng seed = {}", sc.integration.seed);

    let _ = writeln!(r, "\n[mean photon number]");
    for s in series {
        let _ = writeln!(r, "{} = {:.12e}", s.method, s.mean_n);
    }
    let _ = writeln!(r, "\n[g2(0)]");
    for s in series {
        let _ = writeln!(r, "{} = {:.12e} ± {:.3e}", s.method, s.g2[0], s.g2_error_estimate[0]);
    }

    let _ = writeln!(r, "\n[pairwise max deviation]");
    if deviations.is_empty() {
        let _ = writeln!(r, "single method, nothing to compare");
    }
    for d in deviations {
        let _ = writeln!(r, "{} vs {}: g {:.3e}, g2 {:.3e}", d.methods.0, d.methods.1, d.max_g, d.max_g2);
    }

    let classified = series.iter().find(|s| s.method == Method::Regression).unwrap_or(&series[0]);
    let band = default_band(classified);
    let stats = classify(classified, band)?;
    let _ = writeln!(r, "\n[statistics]");
    let _ = writeln!(r, "source = {}", classified.method);
    let _ = writeln!(r, "classification = {stats}");
    let _ = writeln!(r, "g2(0) = {:.12e}", stats.g2_zero);
    let _ = writeln!(r, "tolerance band = {:.3e}", stats.tolerance_band);
    match stats.critical_time {
        Some(t) => {
            let _ = writeln!(r, "critical time = {t}");
        }
        None => {
            let _ = writeln!(r, "critical time = none");
        }
    }
    if stats.inconclusive {
        let _ = writeln!(r, "inconclusive: every g2(τ) − g2(0) lies inside the band");
    }

    let _ = writeln!(r, "\n[truncation leakage audit]");
    let _ = writeln!(r, "budget = {:e}", sc.system.trace_leakage_budget);
    let _ = writeln!(r, "regression reference = {:.3e}", reference.leakage);
    for s in series.iter().filter(|s| s.method != Method::Regression) {
        let _ = writeln!(r, "{} = {:.3e}", s.method, s.leakage);
    }

    let _ = writeln!(r, "\n[cross-validation]");
    if failures.is_empty() {
        let _ = writeln!(r, "passed (tolerance {:.1e}, or {CROSS_SIGMAS} combined standard errors)", sc.cross_tolerance);
    } else {
        for f in failures {
            let _ = writeln!(r, "FAILED {f}");
        }
    }
    Ok(r)
}

/// Writes through a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_scenario_str, Overrides};

    fn scenario(extra: &str, methods: &str) -> Scenario {
        let text = format!(
            r#"
name = "t"
methods = {methods}
[system]
omega = 1.0
{extra}
[tau]
start = 0.0
stop = 3.0
count = 6
"#
        );
        parse_scenario_str(&text, &Overrides::default()).unwrap()
    }

    #[test]
    fn coherent_all_methods_pass() {
        let sc = scenario(
            r#"initial = { kind = "coherent", alpha = 1.0 }"#,
            r#"["regression", "propagator", "qfunction_two_variable", "qfunction_derivative"]"#,
        );
        let out = execute(&sc).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert!(out.deviations.iter().all(|d| d.max_g < 1e-5 && d.max_g2 < 1e-5));
        assert_eq!(out.csv.lines().count(), 1 + 6 * 4);
        assert!(out.report.contains("neither, Poissonian"));
    }

    #[test]
    fn fock_report_has_zero_g2() {
        let sc = scenario("kappa = 1.0\nt_prepare = 0.0\ninitial = { kind = \"fock\", n = 1 }", r#"["regression"]"#);
        let out = execute(&sc).unwrap();
        assert!(out.reference.g2[0].abs() < 1e-12);
        assert!(out.report.contains("regression = 0.000000000000e0"), "{}", out.report);
    }

    #[test]
    fn cross_failure_names_tau_and_methods() {
        let sc = scenario(r#"initial = { kind = "coherent", alpha = 1.0 }"#, r#"["regression", "propagator"]"#);
        let mut series: Vec<_> = sc.methods.iter().map(|&m| compute_series(&sc, m).unwrap()).collect();
        series[1].g2[3] += 1e-3;
        let (_, failures) = cross_validate(&series, 1e-5);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].tau, sc.tau[3]);
        let msg = failures[0].to_string();
        assert!(msg.contains("regression vs propagator") && msg.contains("g2"), "{msg}");
    }

    #[test]
    fn csv_number_format() {
        let sc = scenario(r#"initial = { kind = "coherent", alpha = 1.0 }"#, r#"["regression"]"#);
        let out = execute(&sc).unwrap();
        let mut lines = out.csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0.0000000000000000e0");
        assert_eq!(row[1], "regression");
        assert_eq!(row.len(), 6);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.csv");
        write_atomic(&p, "a").unwrap();
        write_atomic(&p, "b").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
