//! Truncated Fock-space representation of a single bosonic mode.
//!
//! Everything here lives on the basis `|0⟩ … |n_max⟩`. Coherent states use the
//! normalized convention `⟨β|α⟩ = exp(−|α|²/2 − |β|²/2 + β̄α)`, and the Husimi
//! function carries its own `1/π`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const DEFAULT_N_MAX: usize = 40;
pub const DEFAULT_L_MAX: usize = 12;
pub const DEFAULT_TRACE_LEAKAGE_BUDGET: f64 = 1e-8;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
pub const COHERENT_DEFICIT_WARN: f64 = 1e-6;
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Highest retained Fock level.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockCutoff {
    n_max: usize,
}

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidInput("cutoff n_max must be at least 1".into()));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(self) -> usize {
        self.n_max
    }

    pub fn dim(self) -> usize {
        self.n_max + 1
    }
}

impl Default for FockCutoff {
    fn default() -> Self {
        Self { n_max: DEFAULT_N_MAX }
    }
}

/// A finite complex mode amplitude.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentAmplitude(Complex64);

impl CoherentAmplitude {
    pub fn new(value: Complex64) -> Result<Self> {
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::InvalidInput(format!("coherent amplitude {value} is not finite")));
        }
        Ok(Self(value))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self> {
        Self::new(Complex64::new(re, im))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// `ln(k!)` for `k = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Annihilation and creation matrices, `a[n−1, n] = √n`.
pub fn ladder_matrices(cutoff: FockCutoff) -> (CMatrix, CMatrix) {
    let a = annihilation(cutoff);
    let ad = a.adjoint();
    (a, ad)
}

pub fn annihilation(cutoff: FockCutoff) -> CMatrix {
    let d = cutoff.dim();
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn number_operator(cutoff: FockCutoff) -> CMatrix {
    let d = cutoff.dim();
    CMatrix::from_diagonal(&CVector::from_fn(d, |n, _| Complex64::new(n as f64, 0.0)))
}

/// Raw truncated expansion `c_n = e^{−|α|²/2} αⁿ/√n!`, no renormalization.
pub fn coherent_amplitudes(alpha: Complex64, dim: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    v[0] = c;
    for n in 1..dim {
        c = c * alpha / (n as f64).sqrt();
        v[n] = c;
    }
    v
}

/// `1 − ‖v‖²` for the truncated coherent expansion.
pub fn coherent_norm_deficit(alpha: CoherentAmplitude, cutoff: FockCutoff) -> f64 {
    let v = coherent_amplitudes(alpha.value(), cutoff.dim());
    1.0 - v.norm_squared()
}

/// Truncated coherent state. Coefficients are kept raw unless the norm deficit
/// exceeds `COHERENT_DEFICIT_WARN`, in which case a warning is logged and the
/// vector is renormalized.
pub fn coherent_vector(alpha: CoherentAmplitude, cutoff: FockCutoff) -> CVector {
    let mut v = coherent_amplitudes(alpha.value(), cutoff.dim());
    let deficit = 1.0 - v.norm_squared();
    if deficit.abs() > COHERENT_DEFICIT_WARN {
        log::warn!(
            "coherent state α = {} poorly represented at n_max = {} (norm deficit {:.3e}); renormalizing",
            alpha.value(),
            cutoff.n_max(),
            deficit
        );
        let norm = v.norm();
        v.unscale_mut(norm);
    }
    v
}

/// Closed-form overlap `⟨β|α⟩`.
pub fn coherent_overlap(beta: Complex64, alpha: Complex64) -> Complex64 {
    (-0.5 * alpha.norm_sqr() - 0.5 * beta.norm_sqr() + beta.conj() * alpha).exp()
}

/// Density operator on the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
    cutoff: FockCutoff,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace (within `trace_budget`) and positivity.
    pub fn new(entries: CMatrix, cutoff: FockCutoff, trace_budget: f64) -> Result<Self> {
        let rho = Self::from_entries_unchecked(entries, cutoff)?;
        rho.validate(trace_budget)?;
        Ok(rho)
    }

    pub(crate) fn from_entries_unchecked(entries: CMatrix, cutoff: FockCutoff) -> Result<Self> {
        let d = cutoff.dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::InvalidInput(format!(
                "density matrix is {}x{}, cutoff requires {d}x{d}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { entries, cutoff })
    }

    pub fn validate(&self, trace_budget: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("Hermiticity error {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > trace_budget || tr.im.abs() > HERMITICITY_TOL * self.cutoff.dim() as f64 {
            return Err(Error::InvalidState(format!(
                "trace {tr} deviates from 1 by more than {trace_budget:.1e}"
            )));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < EIGENVALUE_FLOOR {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(())
    }

    pub fn from_state_vector(psi: &CVector, cutoff: FockCutoff) -> Result<Self> {
        let entries = psi * psi.adjoint();
        Self::from_entries_unchecked(entries, cutoff)
    }

    pub fn fock(n: usize, cutoff: FockCutoff) -> Result<Self> {
        if n > cutoff.n_max() {
            return Err(Error::CutoffTooSmall(format!(
                "Fock state |{n}⟩ above n_max = {}",
                cutoff.n_max()
            )));
        }
        let mut m = CMatrix::zeros(cutoff.dim(), cutoff.dim());
        m[(n, n)] = Complex64::new(1.0, 0.0);
        Self::from_entries_unchecked(m, cutoff)
    }

    pub fn vacuum(cutoff: FockCutoff) -> Self {
        Self::fock(0, cutoff).expect("vacuum always representable")
    }

    pub fn coherent(alpha: CoherentAmplitude, cutoff: FockCutoff) -> Result<Self> {
        Self::from_state_vector(&coherent_vector(alpha, cutoff), cutoff)
    }

    /// Bose–Einstein populations `n̄ⁿ/(1+n̄)^{n+1}`, truncated.
    pub fn thermal(n_bar: f64, cutoff: FockCutoff, trace_budget: f64) -> Result<Self> {
        if !(n_bar >= 0.0 && n_bar.is_finite()) {
            return Err(Error::InvalidInput(format!("thermal occupation {n_bar} must be ≥ 0")));
        }
        let ratio = n_bar / (1.0 + n_bar);
        let deficit = ratio.powi(cutoff.dim() as i32);
        if deficit > trace_budget {
            return Err(Error::CutoffTooSmall(format!(
                "thermal n̄ = {n_bar} loses {deficit:.3e} of trace at n_max = {}",
                cutoff.n_max()
            )));
        }
        let d = cutoff.dim();
        let diag = CVector::from_fn(d, |n, _| Complex64::new(ratio.powi(n as i32) / (1.0 + n_bar), 0.0));
        Self::from_entries_unchecked(CMatrix::from_diagonal(&diag), cutoff)
    }

    /// Normalized pure superposition `Σ w_n |n⟩`.
    pub fn superposition(terms: &[(Complex64, usize)], cutoff: FockCutoff) -> Result<Self> {
        let mut psi = CVector::zeros(cutoff.dim());
        for &(w, n) in terms {
            if n > cutoff.n_max() {
                return Err(Error::CutoffTooSmall(format!(
                    "superposition component |{n}⟩ above n_max = {}",
                    cutoff.n_max()
                )));
            }
            psi[n] += w;
        }
        let norm = psi.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidInput("superposition has zero norm".into()));
        }
        psi.unscale_mut(norm);
        Self::from_state_vector(&psi, cutoff)
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.entries.norm_squared()
    }

    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        (op * &self.entries).trace()
    }

    pub fn mean_photon_number(&self) -> f64 {
        (0..self.cutoff.dim()).map(|n| n as f64 * self.entries[(n, n)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.cutoff.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.entries + self.entries.adjoint()).scale(0.5);
        herm.symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Population of the highest retained level, the truncation-leakage proxy.
    pub fn top_population(&self) -> f64 {
        let n = self.cutoff.n_max();
        self.entries[(n, n)].re
    }

    /// Population above level `l`.
    pub fn tail_population(&self, l: usize) -> f64 {
        (l + 1..self.cutoff.dim()).map(|n| self.entries[(n, n)].re.max(0.0)).sum()
    }
}

/// `Q(α) = ⟨α|ρ|α⟩/π`, evaluated from the raw truncated coherent expansion.
pub fn husimi_q(rho: &DensityMatrix, alpha: CoherentAmplitude) -> f64 {
    let v = coherent_amplitudes(alpha.value(), rho.cutoff().dim());
    let q = (v.adjoint() * rho.entries() * &v)[(0, 0)] / PI;
    debug_assert!(q.im.abs() <= 1e-10 * q.re.abs().max(1.0), "Q has imaginary residue {}", q.im);
    q.re
}

/// `Q(α, ᾱ₂) = ⟨α₂|ρ|α⟩/π`; equals `husimi_q` on the diagonal `α₂ = α`.
pub fn two_variable_q(rho: &DensityMatrix, alpha: CoherentAmplitude, alpha2: CoherentAmplitude) -> Complex64 {
    let d = rho.cutoff().dim();
    let v = coherent_amplitudes(alpha.value(), d);
    let w = coherent_amplitudes(alpha2.value(), d);
    (w.adjoint() * rho.entries() * &v)[(0, 0)] / PI
}

/// Batched `⟨l_i|ρ|r_j⟩/π` for node sets, i.e. `two_variable_q(ρ, r_j, l_i)` at
/// entry `(i, j)`.
pub fn two_variable_q_table(rho: &DensityMatrix, left: &[Complex64], right: &[Complex64]) -> CMatrix {
    let d = rho.cutoff().dim();
    let vl = coherent_columns(left, d);
    let vr = coherent_columns(right, d);
    (vl.adjoint() * rho.entries() * vr).unscale(PI)
}

/// Raw truncated coherent expansions as the columns of a `dim × len` matrix.
pub fn coherent_columns(amplitudes: &[Complex64], dim: usize) -> CMatrix {
    let cols: Vec<CVector> = amplitudes.iter().map(|&a| coherent_amplitudes(a, dim)).collect();
    CMatrix::from_columns(&cols)
}

/// Normal-order coefficient table: `ρ = Σ_{l,m ≤ L} C_lm a†ˡ aᵐ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalOrderExpansion {
    coeffs: CMatrix,
    l_max: usize,
}

/// Expands `ρ` (supported on levels `≤ l_max`) in normal-ordered monomials via
/// `|n⟩⟨m| = Σ_k (−1)ᵏ/k! a†^{n+k} a^{m+k} / √(n! m!)`.
///
/// The roundtrip `reconstruct()` is checked against `ρ`; entries outside the
/// `l_max` block count as residual.
pub fn normal_order_coeffs(rho: &DensityMatrix, l_max: usize) -> Result<NormalOrderExpansion> {
    let exp = normal_order_coeffs_unchecked(rho.entries(), l_max, rho.cutoff())?;
    let rec = exp.reconstruct();
    let d = rho.cutoff().dim();
    let mut residual: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let r = if i <= l_max && j <= l_max { rec[(i, j)] } else { ZERO };
            residual = residual.max((r - rho.entries()[(i, j)]).norm());
        }
    }
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::ReconstructionResidual {
            residual,
            tolerance: RECONSTRUCTION_TOL,
        });
    }
    Ok(exp)
}

/// Population-weighted tail `Σ_{n>L} (n+1)² ρ_nn`, which bounds the error that
/// discarding levels above `L` causes in moments up to quartic order.
pub fn normal_order_tail(rho: &DensityMatrix, l_max: usize) -> f64 {
    (l_max + 1..rho.cutoff().dim())
        .map(|n| ((n + 1) * (n + 1)) as f64 * rho.entries()[(n, n)].re.max(0.0))
        .sum()
}

/// Expansion of `ρ` projected onto levels `≤ l_max`. Fails with
/// `LmaxInsufficient` when the discarded tail exceeds `tail_tol`; the block
/// roundtrip is still checked.
pub fn normal_order_coeffs_projected(rho: &DensityMatrix, l_max: usize, tail_tol: f64) -> Result<NormalOrderExpansion> {
    let tail = normal_order_tail(rho, l_max);
    if tail > tail_tol {
        return Err(Error::LmaxInsufficient {
            l_max,
            tail,
            tolerance: tail_tol,
        });
    }
    let exp = normal_order_coeffs_unchecked(rho.entries(), l_max, rho.cutoff())?;
    let rec = exp.reconstruct();
    let block = rho.entries().view((0, 0), (l_max + 1, l_max + 1));
    let residual = (rec - block).camax();
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::ReconstructionResidual {
            residual,
            tolerance: RECONSTRUCTION_TOL,
        });
    }
    Ok(exp)
}

/// Coefficients of the `l_max` block of `entries`, without the roundtrip check.
pub(crate) fn normal_order_coeffs_unchecked(
    entries: &CMatrix,
    l_max: usize,
    cutoff: FockCutoff,
) -> Result<NormalOrderExpansion> {
    if l_max < 1 || l_max > cutoff.n_max() {
        return Err(Error::InvalidInput(format!(
            "L_max = {l_max} must lie in 1..={}",
            cutoff.n_max()
        )));
    }
    let lf = ln_factorials(l_max);
    let mut c = CMatrix::zeros(l_max + 1, l_max + 1);
    for l in 0..=l_max {
        for m in 0..=l_max {
            let mut acc = ZERO;
            for k in 0..=l.min(m) {
                let mag = (-lf[k] - 0.5 * lf[l - k] - 0.5 * lf[m - k]).exp();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                acc += entries[(l - k, m - k)] * (sign * mag);
            }
            c[(l, m)] = acc;
        }
    }
    Ok(NormalOrderExpansion { coeffs: c, l_max })
}

impl NormalOrderExpansion {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coeff(&self, l: usize, m: usize) -> Complex64 {
        self.coeffs[(l, m)]
    }

    pub fn coeffs(&self) -> &CMatrix {
        &self.coeffs
    }

    /// `Σ C_lm a†ˡ aᵐ` on the `(l_max+1)`-dimensional block:
    /// `ρ_ij = Σ_s C_{i−s, j−s} √(i! j!)/s!`.
    pub fn reconstruct(&self) -> CMatrix {
        let l = self.l_max;
        let lf = ln_factorials(l);
        CMatrix::from_fn(l + 1, l + 1, |i, j| {
            let mut acc = ZERO;
            for s in 0..=i.min(j) {
                acc += self.coeffs[(i - s, j - s)] * (0.5 * (lf[i] + lf[j]) - lf[s]).exp();
            }
            acc
        })
    }

    /// The finite polynomial `Σ C_lm ᾱˡ αᵐ / π`. Agrees with the Husimi function
    /// only near the origin; the full series is needed for the Gaussian tail.
    pub fn q_polynomial(&self, alpha: Complex64) -> Complex64 {
        let ac = alpha.conj();
        let mut acc = ZERO;
        let mut pl = Complex64::new(1.0, 0.0);
        for l in 0..=self.l_max {
            let mut pm = Complex64::new(1.0, 0.0);
            for m in 0..=self.l_max {
                acc += self.coeffs[(l, m)] * pl * pm;
                pm *= alpha;
            }
            pl *= ac;
        }
        acc / PI
    }

    /// Coefficients `R_nm` of the resummed symbol
    /// `Σ C_lm ᾱˡ αᵐ = e^{−ᾱα} Σ R_nm ᾱⁿ αᵐ`, i.e. `R = C ⋆ e^{ᾱα}`.
    pub fn resummed_coeffs(&self) -> CMatrix {
        let l = self.l_max;
        let lf = ln_factorials(l);
        CMatrix::from_fn(l + 1, l + 1, |n, m| {
            let mut acc = ZERO;
            for j in 0..=n.min(m) {
                acc += self.coeffs[(n - j, m - j)] * (-lf[j]).exp();
            }
            acc
        })
    }

    /// Husimi function from the resummed expansion, `e^{−|α|²} Σ R_nm ᾱⁿ αᵐ / π`.
    pub fn resummed_q(&self, alpha: Complex64) -> f64 {
        let r = self.resummed_coeffs();
        let ac = alpha.conj();
        let mut acc = ZERO;
        let mut pn = Complex64::new(1.0, 0.0);
        for n in 0..=self.l_max {
            let mut pm = Complex64::new(1.0, 0.0);
            for m in 0..=self.l_max {
                acc += r[(n, m)] * pn * pm;
                pm *= alpha;
            }
            pn *= ac;
        }
        (acc * (-alpha.norm_sqr()).exp() / PI).re
    }
}
