//! Time evolution on the truncated Fock space: quadratic Hamiltonians, unitary
//! evolution and the thermal-damping Lindblad generator
//! `−i[H,ρ] + κ(n̄+1)𝒟[a]ρ + κn̄𝒟[a†]ρ`.
//!
//! Maps act on operators directly (not only on states) so that deformed
//! operators such as `aρ` can be regressed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, FockCutoff};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Taylor step is chosen so that `‖L‖·h ≤ TAYLOR_THETA`.
const TAYLOR_THETA: f64 = 3.0;
const TAYLOR_MAX_TERMS: usize = 80;
const TAYLOR_TOL: f64 = 1e-16;

/// `H = ω a†a + (ξ a†² + ξ̄ a²)/2 + η a† + η̄ a`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticHamiltonian {
    pub omega: f64,
    pub xi: Complex64,
    pub eta: Complex64,
}

impl QuadraticHamiltonian {
    pub fn new(omega: f64, xi: Complex64, eta: Complex64) -> Result<Self> {
        let finite = omega.is_finite() && xi.re.is_finite() && xi.im.is_finite() && eta.re.is_finite() && eta.im.is_finite();
        if !finite {
            return Err(Error::InvalidInput("Hamiltonian parameters must be finite".into()));
        }
        Ok(Self { omega, xi, eta })
    }

    pub fn harmonic(omega: f64) -> Self {
        Self {
            omega,
            xi: ZERO,
            eta: ZERO,
        }
    }

    pub fn is_harmonic(&self) -> bool {
        self.xi == ZERO && self.eta == ZERO
    }
}

/// Single thermal damping channel.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingChannel {
    pub kappa: f64,
    pub n_thermal: f64,
}

impl DampingChannel {
    pub fn new(kappa: f64, n_thermal: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidInput(format!("kappa = {kappa} must be ≥ 0")));
        }
        if !(n_thermal >= 0.0 && n_thermal.is_finite()) {
            return Err(Error::InvalidInput(format!("n_thermal = {n_thermal} must be ≥ 0")));
        }
        Ok(Self { kappa, n_thermal })
    }

    pub fn closed() -> Self {
        Self {
            kappa: 0.0,
            n_thermal: 0.0,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.kappa == 0.0
    }
}

pub fn hamiltonian_matrix(h: &QuadraticHamiltonian, cutoff: FockCutoff) -> CMatrix {
    let d = cutoff.dim();
    let mut m = CMatrix::zeros(d, d);
    for n in 0..d {
        m[(n, n)] = Complex64::new(h.omega * n as f64, 0.0);
        if n + 1 < d {
            let s = ((n + 1) as f64).sqrt();
            m[(n + 1, n)] = h.eta * s;
            m[(n, n + 1)] = h.eta.conj() * s;
        }
        if n + 2 < d {
            let s = (((n + 1) * (n + 2)) as f64).sqrt();
            m[(n + 2, n)] = h.xi * (0.5 * s);
            m[(n, n + 2)] = h.xi.conj() * (0.5 * s);
        }
    }
    m
}

/// `exp(−iHt)` by scaling-and-squaring Padé.
pub fn unitary(h: &QuadraticHamiltonian, t: f64, cutoff: FockCutoff) -> CMatrix {
    if t == 0.0 {
        return CMatrix::identity(cutoff.dim(), cutoff.dim());
    }
    (hamiltonian_matrix(h, cutoff) * Complex64::new(0.0, -t)).exp()
}

/// The Lindblad generator in banded form.
#[derive(Clone, Debug)]
pub struct Generator {
    h: CMatrix,
    cutoff: FockCutoff,
    gamma_down: f64,
    gamma_up: f64,
    sqrt_n: Vec<f64>,
    norm_bound: f64,
}

impl Generator {
    pub fn new(h: &QuadraticHamiltonian, channel: &DampingChannel, cutoff: FockCutoff) -> Self {
        let hm = hamiltonian_matrix(h, cutoff);
        let gamma_down = channel.kappa * (channel.n_thermal + 1.0);
        let gamma_up = channel.kappa * channel.n_thermal;
        let h_norm = (0..cutoff.dim())
            .map(|j| hm.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let n = cutoff.n_max() as f64;
        Self {
            h: hm,
            cutoff,
            gamma_down,
            gamma_up,
            sqrt_n: (0..=cutoff.dim()).map(|k| (k as f64).sqrt()).collect(),
            norm_bound: 2.0 * h_norm + 2.0 * n * (gamma_down + gamma_up),
        }
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn is_closed(&self) -> bool {
        self.gamma_down == 0.0 && self.gamma_up == 0.0
    }

    /// Upper bound on the induced 2-norm of the superoperator.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `L(X)` for an arbitrary operator `X`.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let d = self.cutoff.dim();
        let top = d - 1;
        let sq = &self.sqrt_n;
        let (gd, gu) = (self.gamma_down, self.gamma_up);
        // diagonal of a a† on the truncated space
        let aad = |i: usize| if i == top { 0.0 } else { (i + 1) as f64 };
        CMatrix::from_fn(d, d, |i, j| {
            let mut hx = ZERO;
            for k in i.saturating_sub(2)..(i + 3).min(d) {
                hx += self.h[(i, k)] * x[(k, j)];
            }
            let mut xh = ZERO;
            for k in j.saturating_sub(2)..(j + 3).min(d) {
                xh += x[(i, k)] * self.h[(k, j)];
            }
            let mut val = -I * (hx - xh);
            if gd != 0.0 {
                let jump = if i < top && j < top {
                    x[(i + 1, j + 1)] * (sq[i + 1] * sq[j + 1])
                } else {
                    ZERO
                };
                val += (jump - x[(i, j)] * (0.5 * (i + j) as f64)) * gd;
            }
            if gu != 0.0 {
                let jump = if i > 0 && j > 0 {
                    x[(i - 1, j - 1)] * (sq[i] * sq[j])
                } else {
                    ZERO
                };
                val += (jump - x[(i, j)] * (0.5 * (aad(i) + aad(j)))) * gu;
            }
            val
        })
    }

    /// Dense superoperator acting on column-major `vec(X)`.
    pub fn to_matrix(&self) -> CMatrix {
        let d = self.cutoff.dim();
        let dd = d * d;
        let mut out = CMatrix::zeros(dd, dd);
        for col in 0..dd {
            let mut e = CMatrix::zeros(d, d);
            e[(col % d, col / d)] = Complex64::new(1.0, 0.0);
            let le = self.apply(&e);
            out.column_mut(col).copy_from_slice(le.as_slice());
        }
        out
    }
}

/// `exp(tL)X` by a scaled truncated Taylor series.
pub(crate) fn expm_action(gen: &Generator, t: f64, x: &CMatrix) -> Result<CMatrix> {
    if t == 0.0 {
        return Ok(x.clone());
    }
    let norm = gen.norm_bound().max(1e-300);
    let steps = ((norm * t.abs()) / TAYLOR_THETA).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let ratio_scale = norm * h.abs();
    let mut state = x.clone();
    for step in 0..steps {
        let mut term = state.clone();
        let mut acc = state.clone();
        let mut converged = false;
        for k in 1..=TAYLOR_MAX_TERMS {
            term = gen.apply(&term) * Complex64::new(h / k as f64, 0.0);
            acc += &term;
            let r = ratio_scale / (k + 1) as f64;
            if r < 1.0 && term.norm() * r / (1.0 - r) <= TAYLOR_TOL * acc.norm().max(1e-300) {
                converged = true;
                break;
            }
        }
        if !converged || acc.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::StepSize {
                t: h * step as f64,
                reason: format!("Taylor series failed to converge within {TAYLOR_MAX_TERMS} terms"),
            });
        }
        state = acc;
    }
    Ok(state)
}

/// A reusable linear map `M(τ) = exp(τL)`.
#[derive(Clone, Debug)]
pub struct Propagated {
    generator: Arc<Generator>,
    duration: f64,
    unitary: Option<CMatrix>,
}

impl Propagated {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.generator.cutoff()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// `M(τ)(X)` for any operator `X`.
    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        match &self.unitary {
            Some(u) => Ok(u * x * u.adjoint()),
            None => expm_action(&self.generator, self.duration, x),
        }
    }

    /// Applies the map to a state, Hermitizes round-off and audits the top-level
    /// population against `trace_budget`.
    pub fn apply_state(&self, rho: &DensityMatrix, trace_budget: f64) -> Result<DensityMatrix> {
        let out = self.apply(rho.entries())?;
        finish_state(out, rho.cutoff(), trace_budget)
    }

    /// Dense superoperator on column-major `vec(X)`.
    pub fn to_superoperator(&self) -> Result<CMatrix> {
        let d = self.cutoff().dim();
        let dd = d * d;
        let mut out = CMatrix::zeros(dd, dd);
        for col in 0..dd {
            let mut e = CMatrix::zeros(d, d);
            e[(col % d, col / d)] = Complex64::new(1.0, 0.0);
            let me = self.apply(&e)?;
            out.column_mut(col).copy_from_slice(me.as_slice());
        }
        Ok(out)
    }

    /// Choi matrix `Σ |i⟩⟨j| ⊗ M(|i⟩⟨j|)`.
    pub fn choi_matrix(&self) -> Result<CMatrix> {
        let d = self.cutoff().dim();
        let mut choi = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMatrix::zeros(d, d);
                e[(i, j)] = Complex64::new(1.0, 0.0);
                let me = self.apply(&e)?;
                choi.view_mut((i * d, j * d), (d, d)).copy_from(&me);
            }
        }
        Ok(choi)
    }
}

pub(crate) fn finish_state(mut m: CMatrix, cutoff: FockCutoff, trace_budget: f64) -> Result<DensityMatrix> {
    let herm = (&m + m.adjoint()).scale(0.5);
    m = herm;
    let rho = DensityMatrix::from_entries_unchecked(m, cutoff)?;
    audit_leakage(&rho, trace_budget)?;
    rho.validate(trace_budget)?;
    Ok(rho)
}

pub(crate) fn audit_leakage(rho: &DensityMatrix, trace_budget: f64) -> Result<f64> {
    let leak = rho.top_population().abs();
    if leak > trace_budget {
        return Err(Error::CutoffTooSmall(format!(
            "population {leak:.3e} reached the top level n_max = {} (budget {trace_budget:.1e})",
            rho.cutoff().n_max()
        )));
    }
    Ok(leak)
}

pub fn propagated_map(
    h: &QuadraticHamiltonian,
    channel: &DampingChannel,
    tau: f64,
    cutoff: FockCutoff,
) -> Result<Propagated> {
    let generator = Arc::new(Generator::new(h, channel, cutoff));
    build_map(generator, h, tau)
}

fn build_map(generator: Arc<Generator>, h: &QuadraticHamiltonian, tau: f64) -> Result<Propagated> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("map duration {tau} must be finite and ≥ 0")));
    }
    let unitary = generator
        .is_closed()
        .then(|| unitary(h, tau, generator.cutoff()));
    Ok(Propagated {
        generator,
        duration: tau,
        unitary,
    })
}

/// Maps for one generator, cached by duration.
#[derive(Debug)]
pub struct MapCache {
    h: QuadraticHamiltonian,
    generator: Arc<Generator>,
    maps: Mutex<HashMap<u64, Arc<Propagated>>>,
}

impl MapCache {
    pub fn new(h: &QuadraticHamiltonian, channel: &DampingChannel, cutoff: FockCutoff) -> Self {
        Self {
            h: *h,
            generator: Arc::new(Generator::new(h, channel, cutoff)),
            maps: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, tau: f64) -> Result<Arc<Propagated>> {
        let key = tau.to_bits();
        if let Some(m) = self.maps.lock().expect("map cache poisoned").get(&key) {
            return Ok(Arc::clone(m));
        }
        let map = Arc::new(build_map(Arc::clone(&self.generator), &self.h, tau)?);
        self.maps
            .lock()
            .expect("map cache poisoned")
            .insert(key, Arc::clone(&map));
        Ok(map)
    }
}

/// `ρ(t) = e^{−iHt} ρ₀ e^{iHt}`; negative `t` runs backwards.
pub fn evolve_unitary(
    rho0: &DensityMatrix,
    h: &QuadraticHamiltonian,
    t: f64,
    trace_budget: f64,
) -> Result<DensityMatrix> {
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("evolution time {t} is not finite")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let u = unitary(h, t, rho0.cutoff());
    finish_state(&u * rho0.entries() * u.adjoint(), rho0.cutoff(), trace_budget)
}

pub fn evolve_lindblad(
    rho0: &DensityMatrix,
    h: &QuadraticHamiltonian,
    channel: &DampingChannel,
    t: f64,
    trace_budget: f64,
) -> Result<DensityMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("Lindblad evolution time {t} must be ≥ 0")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let gen = Generator::new(h, channel, rho0.cutoff());
    let out = expm_action(&gen, t, rho0.entries())?;
    finish_state(out, rho0.cutoff(), trace_budget)
}

/// Steady state from the null space of the dense generator, with one row
/// replaced by the trace condition. Intended for moderate cutoffs.
pub fn steady_state(
    h: &QuadraticHamiltonian,
    channel: &DampingChannel,
    cutoff: FockCutoff,
    trace_budget: f64,
) -> Result<DensityMatrix> {
    if channel.is_closed() {
        return Err(Error::InvalidInput("steady state requires kappa > 0".into()));
    }
    let d = cutoff.dim();
    let gen = Generator::new(h, channel, cutoff);
    let mut m = gen.to_matrix();
    let dd = d * d;
    for col in 0..dd {
        m[(0, col)] = ZERO;
    }
    for n in 0..d {
        m[(0, n * d + n)] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = nalgebra::DVector::<Complex64>::zeros(dd);
    rhs[0] = Complex64::new(1.0, 0.0);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput("generator has no unique steady state".into()))?;
    let rho = DMatrix::from_column_slice(d, d, sol.as_slice());
    finish_state(rho, cutoff, trace_budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_vector, CoherentAmplitude};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(cutoff: FockCutoff, seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = cutoff.dim();
        // low-lying support keeps the top level empty
        let support = d / 2;
        let g = CMatrix::from_fn(d, d, |i, j| {
            if i < support && j < support {
                c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            } else {
                ZERO
            }
        });
        let mut m = &g * g.adjoint();
        let tr = m.trace();
        m.unscale_mut(tr.re);
        DensityMatrix::new(m, cutoff, 1e-10).unwrap()
    }

    #[test]
    fn number_diagonal() {
        let m = hamiltonian_matrix(&QuadraticHamiltonian::harmonic(1.0), FockCutoff::new(2).unwrap());
        assert_eq!(m, CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0., 0.), c(1., 0.), c(2., 0.)])));
    }

    #[test]
    fn drive_and_squeeze_elements() {
        let cut = FockCutoff::new(4).unwrap();
        let drive = hamiltonian_matrix(&QuadraticHamiltonian::new(0.0, ZERO, c(1.0, 0.0)).unwrap(), cut);
        assert_eq!(drive[(0, 1)], c(1.0, 0.0));
        assert_eq!(drive[(1, 0)], c(1.0, 0.0));
        // (ξ/2)⟨2|a†²|0⟩ = √2/2
        let sq = hamiltonian_matrix(&QuadraticHamiltonian::new(0.0, c(1.0, 0.0), ZERO).unwrap(), cut);
        assert_abs_diff_eq!(sq[(2, 0)].re, 2f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sq[(0, 2)].re, 2f64.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_hermitian() {
        let h = QuadraticHamiltonian::new(0.7, c(0.2, -0.3), c(-0.5, 0.4)).unwrap();
        let m = hamiltonian_matrix(&h, FockCutoff::new(12).unwrap());
        assert_eq!(m, m.adjoint());
    }

    #[test]
    fn unitary_zero_time_identity() {
        let cut = FockCutoff::new(10).unwrap();
        let rho = random_state(cut, 1);
        let h = QuadraticHamiltonian::new(1.0, c(0.2, 0.0), c(0.3, 0.1)).unwrap();
        assert_eq!(evolve_unitary(&rho, &h, 0.0, 1e-8).unwrap(), rho);
    }

    #[test]
    fn coherent_rotation_quarter_period() {
        let cut = FockCutoff::new(40).unwrap();
        let a0 = CoherentAmplitude::from_parts(1.0, 0.0).unwrap();
        let rho = DensityMatrix::coherent(a0, cut).unwrap();
        let out = evolve_unitary(&rho, &QuadraticHamiltonian::harmonic(1.0), std::f64::consts::FRAC_PI_2, 1e-8).unwrap();
        let target = coherent_vector(CoherentAmplitude::from_parts(0.0, -1.0).unwrap(), cut);
        let expect = &target * target.adjoint();
        assert!((out.entries() - expect).camax() <= 1e-8);
    }

    #[test]
    fn unitary_preserves_purity_and_spectrum() {
        let cut = FockCutoff::new(20).unwrap();
        let h = QuadraticHamiltonian::new(1.0, c(0.1, 0.05), c(0.2, 0.0)).unwrap();
        for seed in 0..3 {
            let rho = random_state(cut, seed);
            let out = evolve_unitary(&rho, &h, 0.8, 1e-8).unwrap();
            assert_abs_diff_eq!(out.purity(), rho.purity(), epsilon = 1e-9);
            assert_abs_diff_eq!(out.trace().re, 1.0, epsilon = 1e-9);
            let mut e0 = rho.eigenvalues();
            let mut e1 = out.eigenvalues();
            e0.sort_by(f64::total_cmp);
            e1.sort_by(f64::total_cmp);
            for (x, y) in e0.iter().zip(&e1) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn lindblad_closed_limit_matches_unitary() {
        let cut = FockCutoff::new(16).unwrap();
        let h = QuadraticHamiltonian::new(1.0, c(0.1, 0.0), c(0.3, -0.2)).unwrap();
        let rho = random_state(cut, 7);
        let u = evolve_unitary(&rho, &h, 1.3, 1e-4).unwrap();
        let gen = Generator::new(&h, &DampingChannel::closed(), cut);
        let l = expm_action(&gen, 1.3, rho.entries()).unwrap();
        assert!((u.entries() - l).camax() <= 1e-8);
    }

    #[test]
    fn damped_coherent_mean_field() {
        let cut = FockCutoff::new(30).unwrap();
        let a0 = c(1.0, 0.5);
        let rho = DensityMatrix::coherent(CoherentAmplitude::new(a0).unwrap(), cut).unwrap();
        let h = QuadraticHamiltonian::harmonic(1.3);
        let ch = DampingChannel::new(0.8, 0.0).unwrap();
        let a = crate::hilbert::annihilation(cut);
        for t in [0.5, 1.0, 2.5] {
            let out = evolve_lindblad(&rho, &h, &ch, t, 1e-8).unwrap();
            let mean = out.expectation(&a);
            // adjoint equation d⟨a⟩/dt = (−iω − κ/2)⟨a⟩
            let expect = a0 * (c(-0.4, -1.3) * t).exp();
            assert!((mean - expect).norm() < 1e-6);
        }
    }

    #[test]
    fn thermal_fixed_point() {
        let cut = FockCutoff::new(30).unwrap();
        let ch = DampingChannel::new(1.0, 0.5).unwrap();
        let out = evolve_lindblad(&DensityMatrix::vacuum(cut), &QuadraticHamiltonian::harmonic(1.0), &ch, 20.0, 1e-8).unwrap();
        assert_abs_diff_eq!(out.mean_photon_number(), 0.5, epsilon = 1e-4);
        let thermal = DensityMatrix::thermal(0.5, cut, 1e-8).unwrap();
        assert!((out.entries() - thermal.entries()).camax() <= 1e-6);
    }

    #[test]
    fn map_identity_at_zero_and_trace_preserving() {
        let cut = FockCutoff::new(8).unwrap();
        let h = QuadraticHamiltonian::new(1.0, c(0.1, 0.0), c(0.2, 0.0)).unwrap();
        let ch = DampingChannel::new(0.7, 0.3).unwrap();
        let m0 = propagated_map(&h, &ch, 0.0, cut).unwrap().to_superoperator().unwrap();
        assert!((m0 - CMatrix::identity(81, 81)).camax() == 0.0);
        let m = propagated_map(&h, &ch, 0.9, cut).unwrap();
        let rho = random_state(cut, 3);
        let out = m.apply(rho.entries()).unwrap();
        assert_abs_diff_eq!(out.trace().re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn semigroup_against_dense_exponential() {
        let cut = FockCutoff::new(10).unwrap();
        let h = QuadraticHamiltonian::new(1.0, c(0.1, 0.0), c(0.3, 0.0)).unwrap();
        let ch = DampingChannel::new(1.0, 0.2).unwrap();
        let m03 = propagated_map(&h, &ch, 0.3, cut).unwrap().to_superoperator().unwrap();
        let m07 = propagated_map(&h, &ch, 0.7, cut).unwrap().to_superoperator().unwrap();
        let m10 = propagated_map(&h, &ch, 1.0, cut).unwrap().to_superoperator().unwrap();
        assert!((&m03 * &m07 - &m10).camax() <= 1e-8);
        // independent route: Padé exponential of the dense generator
        let dense = Generator::new(&h, &ch, cut).to_matrix().exp();
        assert!((dense - m10).camax() <= 1e-8);
    }

    #[test]
    fn steady_state_invariant_and_thermal() {
        let cut = FockCutoff::new(10).unwrap();
        let h = QuadraticHamiltonian::harmonic(1.0);
        let ch = DampingChannel::new(1.0, 0.3).unwrap();
        let ss = steady_state(&h, &ch, cut, 1e-4).unwrap();
        let out = propagated_map(&h, &ch, 2.0, cut).unwrap().apply(ss.entries()).unwrap();
        assert!((out - ss.entries()).camax() <= 1e-8);
        // truncation perturbs only the far tail at n_max = 10
        let th = DensityMatrix::thermal(0.3, cut, 1e-4).unwrap();
        assert!((ss.entries() - th.entries()).camax() <= 1e-6);
    }

    #[test]
    fn choi_positive() {
        let cut = FockCutoff::new(6).unwrap();
        let h = QuadraticHamiltonian::new(1.0, c(0.15, 0.0), c(0.2, 0.1)).unwrap();
        let ch = DampingChannel::new(0.5, 0.4).unwrap();
        let choi = propagated_map(&h, &ch, 0.6, cut).unwrap().choi_matrix().unwrap();
        let herm = (&choi + choi.adjoint()).scale(0.5);
        let min = herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8, "min Choi eigenvalue {min}");
    }

    #[test]
    fn rejects_negative_lindblad_time() {
        let cut = FockCutoff::new(4).unwrap();
        let r = evolve_lindblad(&DensityMatrix::vacuum(cut), &QuadraticHamiltonian::harmonic(1.0), &DampingChannel::closed(), -1.0, 1e-8);
        assert!(r.is_err());
        assert!(DampingChannel::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn leakage_audit_trips() {
        let cut = FockCutoff::new(6).unwrap();
        let rho = DensityMatrix::coherent(CoherentAmplitude::from_parts(1.5, 0.0).unwrap(), cut);
        // coherent |1.5⟩ has ~1e-3 weight at n = 6
        let rho = rho.unwrap();
        assert!(matches!(audit_leakage(&rho, 1e-8), Err(Error::CutoffTooSmall(_))));
    }
}
