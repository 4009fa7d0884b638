//! The three phase-space routes to `g(τ) = ⟨a†(t+τ)a(t)⟩` and its four-operator
//! extension `G2(τ) = ⟨a†(t)a†(t+τ)a(t+τ)a(t)⟩`, for closed dynamics.
//!
//! * Propagator: with `ρ(t) = Û(t)|α₀⟩⟨α₀|Û†(t)` and completeness inserted
//!   around `aρ(t)`,
//!   `g = ∫ d²α d²α₂ d²α₄/π³ · α ᾱ₄ · K(α₄,τ|α,0) K̄(α₄,τ|α₂,0) ⟨α|ρ(t)|α₂⟩`,
//!   with `⟨α|ρ(t)|α₂⟩ = K(α,t|α₀,0) K̄(α₂,t|α₀,0)` (collapsed) or expanded with
//!   two more resolutions of identity through `⟨α₁|α₀⟩⟨α₀|α₃⟩` (full).
//! * Two-variable Q: the same integrand written as
//!   `∫ d²α/π d²α₂ d²α₄ · Q′ · Q · α ᾱ₄` with `Q = ⟨α|ρ(t)|α₂⟩/π` taken from the
//!   Fock-space state and `Q′ = K(α₄,τ|α,0)K̄(α₄,τ|α₂,0)/π`.
//! * Q-derivative: `ρ(t) = Σ C_lm a†ˡaᵐ` makes `Q = Σ C_lm ᾱˡαᵐ/π`, and
//!   `a(τ) = u a + v a† + w` follows from the kernel. Applying the
//!   `(α + ∂/∂ᾱ)` rules term by term gives polynomials that are not integrable
//!   one by one, so the series is resummed first:
//!   `Σ C_lm ᾱˡαᵐ = e^{−|α|²} Σ R_nm ᾱⁿαᵐ`, and then
//!   `⟨X⟩ = Σ_k (1/k!) ∫ d²α (∂_α^k Q)(∂_ᾱ^k X_N)` with `X_N` the normal symbol of
//!   the observable. Every derivative is taken symbolically.
//!
//! `a†a` inside `G2` enters through its anti-normal symbol `|α₄|² − 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::polygauss::{Lin, Poly, PolyGaussian, Slot};
use super::quadrature::{complex_matmul, grids_for, ComplexGrid};
use super::{integrate, integrate_black_box, Engine, Estimate, IntegrationConfig};
use crate::correlators::{normalize, validate_tau_grid, CorrelationSeries, InitialState, Method, SystemSpec};
use crate::dynamics::QuadraticHamiltonian;
use crate::error::{Error, Result};
use crate::hilbert::{coherent_amplitudes, coherent_columns, normal_order_coeffs_projected, CMatrix, DensityMatrix, DEFAULT_L_MAX};
use crate::propagator::{kernel_quadratic, GaussianKernel};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance on the normal-order tail `Σ_{n>L}(n+1)²ρ_nn`.
pub const LMAX_TAIL_TOL: f64 = 1e-6;
/// Deterministic tolerance of the τ = 0 measure self-test; failure needs a
/// mismatch ten times larger.
pub const SELF_TEST_TOL: f64 = 1e-5;

/// Which two-time product is evaluated.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    /// `⟨a†(t+τ)a(t)⟩`
    Delayed,
    /// `⟨a†(t)a(t+τ)⟩`
    Forward,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    G(Ordering),
    /// Unnormalized `⟨a†(t)a†(t+τ)a(t+τ)a(t)⟩`.
    G2,
}

fn require_closed(sys: &SystemSpec) -> Result<()> {
    if !sys.is_closed() {
        return Err(Error::Unsupported("phase-space methods require closed dynamics (kappa = 0)".into()));
    }
    Ok(())
}

fn coherent_initial(sys: &SystemSpec) -> Result<Complex64> {
    match &sys.initial {
        InitialState::Coherent(a) => Ok(a.value()),
        InitialState::Fock(0) => Ok(ZERO),
        _ => Err(Error::Unsupported("the propagator method requires a coherent initial state".into())),
    }
}

fn check_times(t: f64, tau: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite() && tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("times must be finite and ≥ 0 (t = {t}, τ = {tau})")));
    }
    Ok(())
}

fn kernel(h: &QuadraticHamiltonian, t: f64) -> Result<GaussianKernel> {
    kernel_quadratic(h, t)
}

/// Polynomial prefactor over `(α, α₂, α₄)` at indices `(a, a2, a4)`.
fn observable_poly(n: usize, obs: Observable, a: usize, a2: usize, a4: usize) -> Poly {
    let lin = |x| Poly::lin(n, x);
    match obs {
        Observable::G(Ordering::Delayed) => lin(Lin::Z(a)).mul(&lin(Lin::Zbar(a4))),
        Observable::G(Ordering::Forward) => lin(Lin::Zbar(a2)).mul(&lin(Lin::Z(a4))),
        Observable::G2 => {
            let number = lin(Lin::Z(a4)).mul(&lin(Lin::Zbar(a4))).add(&Poly::constant(n, -ONE));
            lin(Lin::Z(a)).mul(&lin(Lin::Zbar(a2))).mul(&number)
        }
    }
}

/// The propagator-route integrand. Variables: `α = 0, α₂ = 1, α₄ = 2`, and in
/// the full form additionally `α₁ = 3, α₃ = 4`.
pub fn propagator_integrand(sys: &SystemSpec, t: f64, tau: f64, obs: Observable, collapse: bool) -> Result<PolyGaussian> {
    require_closed(sys)?;
    check_times(t, tau)?;
    let a0 = coherent_initial(sys)?;
    let kt = kernel(&sys.hamiltonian, t)?;
    let ktau = kernel(&sys.hamiltonian, tau)?;
    let n = if collapse { 3 } else { 5 };
    let mut pg = PolyGaussian::new(n);
    if collapse {
        pg.add_kernel(&kt, Slot::Var(0), Slot::Fixed(a0), false);
        pg.add_kernel(&kt, Slot::Var(1), Slot::Fixed(a0), true);
    } else {
        pg.add_overlap(Slot::Var(3), Slot::Fixed(a0));
        pg.add_overlap(Slot::Fixed(a0), Slot::Var(4));
        pg.add_kernel(&kt, Slot::Var(0), Slot::Var(3), false);
        pg.add_kernel(&kt, Slot::Var(1), Slot::Var(4), true);
    }
    pg.add_kernel(&ktau, Slot::Var(2), Slot::Var(0), false);
    pg.add_kernel(&ktau, Slot::Var(2), Slot::Var(1), true);
    pg.mul_poly(&observable_poly(n, obs, 0, 1, 2));
    pg.scale(Complex64::new(PI.powi(-(n as i32)), 0.0));
    Ok(pg)
}

fn propagator_moment(sys: &SystemSpec, t: f64, tau: f64, obs: Observable, cfg: &IntegrationConfig, collapse: bool) -> Result<Estimate> {
    integrate(&propagator_integrand(sys, t, tau, obs, collapse)?, cfg)
}

/// `⟨a†(t+τ)a(t)⟩` from the coherent-state propagator integral.
pub fn g_via_propagator(sys: &SystemSpec, t: f64, tau: f64, cfg: &IntegrationConfig, collapse: bool) -> Result<Estimate> {
    propagator_moment(sys, t, tau, Observable::G(Ordering::Delayed), cfg, collapse)
}

fn prepared_at(sys: &SystemSpec, t: f64) -> Result<DensityMatrix> {
    require_closed(sys)?;
    sys.clone().with_t_prepare(t).prepared_state()
}

/// Gaussian stand-in for the Q-route integrand: the state is replaced by the
/// coherent state with the same `⟨a⟩`. Only used to place nodes and samples.
fn q_skeleton(rho: &DensityMatrix, ktau: &GaussianKernel) -> PolyGaussian {
    let m = rho.expectation(&crate::hilbert::annihilation(rho.cutoff()));
    let mut pg = PolyGaussian::new(3);
    pg.add_overlap(Slot::Var(0), Slot::Fixed(m));
    pg.add_overlap(Slot::Fixed(m), Slot::Var(1));
    pg.add_kernel(ktau, Slot::Var(2), Slot::Var(0), false);
    pg.add_kernel(ktau, Slot::Var(2), Slot::Var(1), true);
    pg
}

/// Per-variable monomial factors `(f_α, f_α₂, f_α₄)` of the observable.
fn q_factors(obs: Observable) -> [fn(Complex64) -> Complex64; 3] {
    fn one(_: Complex64) -> Complex64 {
        ONE
    }
    fn id(z: Complex64) -> Complex64 {
        z
    }
    fn conj(z: Complex64) -> Complex64 {
        z.conj()
    }
    fn number(z: Complex64) -> Complex64 {
        Complex64::new(z.norm_sqr() - 1.0, 0.0)
    }
    match obs {
        Observable::G(Ordering::Delayed) => [id, one, conj],
        Observable::G(Ordering::Forward) => [one, conj, id],
        Observable::G2 => [id, conj, number],
    }
}

fn q_two_variable_moment(rho: &DensityMatrix, h: &QuadraticHamiltonian, tau: f64, obs: Observable, cfg: &IntegrationConfig) -> Result<Estimate> {
    cfg.validate()?;
    let ktau = kernel(h, tau)?;
    let skeleton = q_skeleton(rho, &ktau);
    let [fa, f2, f4] = q_factors(obs);
    // outer d²α/π, Q's own 1/π and the 1/π inside Q′
    let measure = PI.powi(-3);
    match cfg.engine {
        Engine::GaussHermiteTensor => {
            let grids = grids_for(&skeleton, cfg.nodes_per_axis)?;
            let value = q_two_variable_contract(rho, &ktau, &grids, [fa, f2, f4])?;
            Ok(Estimate::exact(value * measure))
        }
        Engine::MonteCarloGaussian => {
            let mode = skeleton.mode()?;
            let centers: Vec<Complex64> = (0..3).map(|i| Complex64::new(mode[2 * i], mode[2 * i + 1])).collect();
            let d = rho.cutoff().dim();
            let entries = rho.entries();
            integrate_black_box(
                &centers,
                |z| {
                    let (a, a2, a4) = (z[0], z[1], z[2]);
                    let va = coherent_amplitudes(a, d);
                    let v2 = coherent_amplitudes(a2, d);
                    let q = (va.adjoint() * entries * v2)[(0, 0)];
                    fa(a) * f2(a2) * f4(a4) * ktau.eval(a4, a) * ktau.eval(a4, a2).conj() * q * measure
                },
                cfg,
            )
        }
    }
}

/// Quadrature contraction exploiting `⟨α|ρ|α₂⟩ = Σ ⟨α|n⟩ρ_nm⟨m|α₂⟩`:
/// `Σ_{α₄} f₄ [P₁ diag(f_α) V_α†] ρ [V_α₂ diag(f₂) P₂ᵀ]`.
fn q_two_variable_contract(
    rho: &DensityMatrix,
    ktau: &GaussianKernel,
    grids: &[ComplexGrid],
    factors: [fn(Complex64) -> Complex64; 3],
) -> Result<Complex64> {
    let (ga, g2, g4) = (&grids[0], &grids[1], &grids[2]);
    let d = rho.cutoff().dim();
    let [fa, f2, f4] = factors;
    // P₁[k₄, k] diag(w f_α)
    let p1 = CMatrix::from_fn(g4.len(), ga.len(), |k4, k| {
        ktau.eval(g4.points[k4], ga.points[k]) * fa(ga.points[k]) * ga.weights[k]
    });
    // diag(w f₂) P₂ᵀ[k₂, k₄]
    let p2t = CMatrix::from_fn(g2.len(), g4.len(), |k2, k4| {
        ktau.eval(g4.points[k4], g2.points[k2]).conj() * f2(g2.points[k2]) * g2.weights[k2]
    });
    let va = coherent_columns(&ga.points, d);
    let v2 = coherent_columns(&g2.points, d);
    let x = complex_matmul(&p1, &va.adjoint());
    let y = complex_matmul(&v2, &p2t);
    let xr = complex_matmul(&x, rho.entries());
    let mut acc = ZERO;
    for k4 in 0..g4.len() {
        let diag: Complex64 = (0..d).map(|n| xr[(k4, n)] * y[(n, k4)]).sum();
        acc += diag * f4(g4.points[k4]) * g4.weights[k4];
    }
    Ok(acc)
}

/// `⟨a†(t+τ)a(t)⟩` from the two-variable Q-function integral, after the τ = 0
/// measure self-test.
pub fn g_via_q_two_variable(sys: &SystemSpec, t: f64, tau: f64, cfg: &IntegrationConfig) -> Result<Estimate> {
    check_times(t, tau)?;
    let rho = prepared_at(sys, t)?;
    let obs = Observable::G(Ordering::Delayed);
    let at_zero = q_two_variable_moment(&rho, &sys.hamiltonian, 0.0, obs, cfg)?;
    measure_self_test(&at_zero, rho.mean_photon_number(), "qfunction_two_variable")?;
    if tau == 0.0 {
        return Ok(at_zero);
    }
    q_two_variable_moment(&rho, &sys.hamiltonian, tau, obs, cfg)
}

/// Normal symbol of the observable with `a(τ) = u a + v a† + w`.
fn normal_symbol(obs: Observable, u: Complex64, v: Complex64, w: Complex64) -> Poly {
    let lin = |x| Poly::lin(1, x);
    let a = lin(Lin::Z(0));
    let ab = lin(Lin::Zbar(0));
    // symbols of a(τ) and a†(τ)
    let a_tau = a.scale(u).add(&ab.scale(v)).add(&Poly::constant(1, w));
    let ad_tau = ab.scale(u.conj()).add(&a.scale(v.conj())).add(&Poly::constant(1, w.conj()));
    match obs {
        Observable::G(Ordering::Delayed) => ad_tau.mul(&a),
        Observable::G(Ordering::Forward) => ab.mul(&a_tau),
        // a† a†(τ) a(τ) a, with v̄a·va† = |v|²(a†a + 1) reordered
        Observable::G2 => {
            let inner = ad_tau.mul(&a_tau).add(&Poly::constant(1, Complex64::new(v.norm_sqr(), 0.0)));
            ab.mul(&inner).mul(&a)
        }
    }
}

fn q_derivative_moment(rho: &DensityMatrix, h: &QuadraticHamiltonian, tau: f64, l_max: usize, obs: Observable, cfg: &IntegrationConfig) -> Result<Estimate> {
    let expansion = normal_order_coeffs_projected(rho, l_max, LMAX_TAIL_TOL)?;
    let r = expansion.resummed_coeffs();
    let mut qpoly = Poly::zero(1);
    for nb in 0..=l_max {
        for m in 0..=l_max {
            if r[(nb, m)] != ZERO {
                qpoly = qpoly.add(&Poly::monomial(1, &[(0, m as u16)], &[(0, nb as u16)], r[(nb, m)] / PI));
            }
        }
    }
    let mut q = PolyGaussian::new(1);
    q.add_product(-ONE, Lin::Z(0), Lin::Zbar(0));
    let q = q.with_poly(qpoly);
    let hm = kernel(h, tau)?.heisenberg();
    let p = normal_symbol(obs, hm.u, hm.v, hm.w);
    let mut total: Option<PolyGaussian> = None;
    let mut dq = q;
    let mut dp = p;
    let mut fact = 1.0;
    for k in 0.. {
        if dp.is_empty() {
            break;
        }
        if k > 0 {
            fact *= k as f64;
        }
        let mut term = dq.clone();
        term.mul_poly(&dp.scale(Complex64::new(1.0 / fact, 0.0)));
        total = Some(match total {
            None => term,
            Some(acc) => acc.add_same_exponent(&term)?,
        });
        dq = dq.d_z(0);
        dp = dp.d_zbar(0);
    }
    match total {
        Some(pg) => integrate(&pg, cfg),
        None => Ok(Estimate::exact(ZERO)),
    }
}

/// `⟨a†(t+τ)a(t)⟩` from the normal-order Q-function route with `L_max` terms.
pub fn g_via_q_derivative(sys: &SystemSpec, t: f64, tau: f64, l_max: usize, cfg: &IntegrationConfig) -> Result<Estimate> {
    check_times(t, tau)?;
    let rho = prepared_at(sys, t)?;
    q_derivative_moment(&rho, &sys.hamiltonian, tau, l_max, Observable::G(Ordering::Delayed), cfg)
}

/// Fails when the τ = 0 value misses `⟨a†a⟩` by more than ten times the
/// tolerance, naming the power of π if the ratio is one.
pub fn measure_self_test(at_zero: &Estimate, mean_n: f64, route: &str) -> Result<()> {
    let tol = SELF_TEST_TOL.max(3.0 * at_zero.std_error) * mean_n.max(1.0);
    let dev = (at_zero.value - mean_n).norm();
    if dev <= 10.0 * tol {
        return Ok(());
    }
    let mut msg = format!("{route}: τ = 0 value {:.6e} vs mean photon number {mean_n:.6e}", at_zero.value);
    if mean_n > 0.0 && at_zero.value.re > 0.0 {
        let ratio = at_zero.value.re / mean_n;
        let k = (ratio.ln() / PI.ln()).round() as i32;
        if k != 0 && (ratio / PI.powi(k) - 1.0).abs() < 1e-3 {
            msg.push_str(&format!(
                "; ratio is π^{k}: {} factor(s) of 1/π {} the measures",
                k.abs(),
                if k > 0 { "missing from" } else { "too many on" }
            ));
        }
    }
    Err(Error::MeasureConvention(msg))
}

/// One phase-space moment at `(t, τ)` with the chosen route.
pub fn phase_space_moment(
    sys: &SystemSpec,
    t: f64,
    tau: f64,
    method: Method,
    obs: Observable,
    cfg: &IntegrationConfig,
    l_max: usize,
) -> Result<Estimate> {
    check_times(t, tau)?;
    match method {
        Method::Regression => Err(Error::InvalidInput("regression is not a phase-space method".into())),
        Method::Propagator => propagator_moment(sys, t, tau, obs, cfg, cfg.collapse),
        Method::QTwoVariable => q_two_variable_moment(&prepared_at(sys, t)?, &sys.hamiltonian, tau, obs, cfg),
        Method::QDerivative => q_derivative_moment(&prepared_at(sys, t)?, &sys.hamiltonian, tau, l_max, obs, cfg),
    }
}

/// Normalized `g2` at `(t, τ)` with `⟨a†a⟩` from the same route.
pub fn g2_via_phase_space(sys: &SystemSpec, t: f64, tau: f64, method: Method, cfg: &IntegrationConfig) -> Result<Estimate> {
    let n = phase_space_moment(sys, t, 0.0, method, Observable::G(Ordering::Delayed), cfg, DEFAULT_L_MAX)?;
    let g2 = phase_space_moment(sys, t, tau, method, Observable::G2, cfg, DEFAULT_L_MAX)?;
    let mean = n.value.re;
    if mean < crate::correlators::ZERO_DENOMINATOR {
        return Err(Error::ZeroDenominator(mean));
    }
    Ok(Estimate {
        value: Complex64::new(g2.value.re / (mean * mean), 0.0),
        std_error: g2.std_error / (mean * mean) + 2.0 * g2.value.re.abs() * n.std_error / mean.powi(3),
    })
}

/// Full series for a phase-space route at `t = sys.t_prepare`.
pub fn phase_space_series(sys: &SystemSpec, tau_grid: &[f64], method: Method, cfg: &IntegrationConfig, l_max: usize) -> Result<CorrelationSeries> {
    validate_tau_grid(tau_grid)?;
    require_closed(sys)?;
    cfg.validate()?;
    let t = sys.t_prepare;
    let (rho, leakage) = match method {
        Method::Regression => return Err(Error::InvalidInput("regression is not a phase-space method".into())),
        Method::Propagator => {
            coherent_initial(sys)?;
            (None, 0.0)
        }
        _ => {
            let rho = prepared_at(sys, t)?;
            let leak = rho.top_population().abs();
            (Some(rho), leak)
        }
    };
    let h = sys.hamiltonian;
    let moment = |tau: f64, obs: Observable| -> Result<Estimate> {
        match (&rho, method) {
            (None, _) => propagator_moment(sys, t, tau, obs, cfg, cfg.collapse),
            (Some(r), Method::QTwoVariable) => q_two_variable_moment(r, &h, tau, obs, cfg),
            (Some(r), _) => q_derivative_moment(r, &h, tau, l_max, obs, cfg),
        }
    };
    let at_zero = moment(0.0, Observable::G(Ordering::Delayed))?;
    if let Some(r) = &rho {
        measure_self_test(&at_zero, r.mean_photon_number(), method.tag())?;
    }
    let points: Vec<(Estimate, Estimate)> = tau_grid
        .par_iter()
        .map(|&tau| {
            let g = if tau == 0.0 { at_zero } else { moment(tau, Observable::G(Ordering::Delayed))? };
            Ok((g, moment(tau, Observable::G2)?))
        })
        .collect::<Result<_>>()?;
    let mean_n = at_zero.value.re;
    let g = points.iter().map(|p| p.0.value).collect();
    let g_err = points.iter().map(|p| p.0.std_error).collect();
    let g2 = points.iter().map(|p| p.1.value.re).collect();
    let g2_err: Vec<f64> = points
        .iter()
        .map(|p| p.1.std_error + 2.0 * p.1.value.re.abs() * at_zero.std_error / mean_n.abs().max(crate::correlators::ZERO_DENOMINATOR))
        .collect();
    normalize(method, tau_grid, mean_n, g, g2, g_err, g2_err, leakage)
}
