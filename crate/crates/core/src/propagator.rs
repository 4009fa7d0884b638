//! Coherent-state propagator `K(α,t|β,0) = ⟨α|Û(t)|β⟩` for quadratic
//! Hamiltonians, in Gaussian exponential form, plus a truncated-Fock oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{unitary, QuadraticHamiltonian};
use crate::error::{Error, Result};
use crate::hilbert::{coherent_amplitudes, coherent_norm_deficit, CMatrix, CoherentAmplitude, FockCutoff, COHERENT_DEFICIT_WARN};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Local error tolerance of the coefficient integrator.
pub const KERNEL_ODE_TOL: f64 = 1e-12;
/// `|C|` or `|D|` at or above this bound marks a non-normalizable Gaussian.
const INSTABILITY_BOUND: f64 = 0.5 * (1.0 - 1e-9);

/// `K(α,t|β,0) = exp(A + Bᾱβ + Cᾱ² + Dβ² + Eᾱ + Fβ − |α|²/2 − |β|²/2)`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
    pub e: Complex64,
    pub f: Complex64,
    pub duration: f64,
}

/// Heisenberg-picture image `Û†aÛ = u a + v a† + w`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergMap {
    pub u: Complex64,
    pub v: Complex64,
    pub w: Complex64,
}

impl HeisenbergMap {
    pub fn identity() -> Self {
        Self { u: ONE, v: ZERO, w: ZERO }
    }

    /// Expectation `⟨Û†aÛ⟩` given `⟨a⟩`.
    pub fn mean(&self, mean_a: Complex64) -> Complex64 {
        self.u * mean_a + self.v * mean_a.conj() + self.w
    }
}

impl GaussianKernel {
    pub fn identity() -> Self {
        Self {
            a: ZERO,
            b: ONE,
            c: ZERO,
            d: ZERO,
            e: ZERO,
            f: ZERO,
            duration: 0.0,
        }
    }

    /// Exponent without the `−|α|²/2 − |β|²/2` normalization terms.
    pub fn reduced_exponent(&self, alpha: Complex64, beta: Complex64) -> Complex64 {
        let ab = alpha.conj();
        self.a + self.b * ab * beta + self.c * ab * ab + self.d * beta * beta + self.e * ab + self.f * beta
    }

    pub fn ln_eval(&self, alpha: Complex64, beta: Complex64) -> Complex64 {
        self.reduced_exponent(alpha, beta) - 0.5 * (alpha.norm_sqr() + beta.norm_sqr())
    }

    pub fn eval(&self, alpha: Complex64, beta: Complex64) -> Complex64 {
        self.ln_eval(alpha, beta).exp()
    }

    pub fn heisenberg(&self) -> HeisenbergMap {
        let v = 2.0 * self.c / self.b;
        HeisenbergMap {
            u: self.b - 2.0 * v * self.d,
            v,
            w: self.e - v * self.f,
        }
    }

    fn to_array(self) -> [Complex64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    fn from_array(y: [Complex64; 6], duration: f64) -> Self {
        Self {
            a: y[0],
            b: y[1],
            c: y[2],
            d: y[3],
            e: y[4],
            f: y[5],
            duration,
        }
    }
}

/// Closed form for `H = ωa†a`: `B = e^{−iωt}`, all else zero.
pub fn kernel_harmonic(omega: f64, t: f64) -> GaussianKernel {
    GaussianKernel {
        b: (-I * omega * t).exp(),
        duration: t,
        ..GaussianKernel::identity()
    }
}

/// Right-hand side `dy/dt` of the coefficient system, `y = (A,B,C,D,E,F)`.
fn kernel_rhs(h: &QuadraticHamiltonian, y: &[Complex64; 6]) -> [Complex64; 6] {
    let [_, b, c, _, e, _] = *y;
    let (w, xi, xib, eta, etab) = (h.omega, h.xi, h.xi.conj(), h.eta, h.eta.conj());
    let da = xib * (e * e + 2.0 * c) * 0.5 + etab * e;
    let db = w * b + 2.0 * xib * b * c;
    let dc = 2.0 * w * c + 0.5 * xi + 2.0 * xib * c * c;
    let dd = 0.5 * xib * b * b;
    let de = w * e + 2.0 * xib * c * e + eta + 2.0 * etab * c;
    let df = xib * b * e + etab * b;
    [da, db, dc, dd, de, df].map(|z| -I * z)
}

/// Coefficients for a general quadratic Hamiltonian, integrated with an
/// adaptive Dormand–Prince 5(4) scheme. Negative `t` runs backwards.
pub fn kernel_quadratic(h: &QuadraticHamiltonian, t: f64) -> Result<GaussianKernel> {
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("kernel time {t} is not finite")));
    }
    if h.is_harmonic() {
        return Ok(kernel_harmonic(h.omega, t));
    }
    let y = dormand_prince(|y| kernel_rhs(h, y), GaussianKernel::identity().to_array(), t, KERNEL_ODE_TOL, |time, y| {
        let (c, d) = (y[2].norm(), y[3].norm());
        if c >= INSTABILITY_BOUND || d >= INSTABILITY_BOUND || y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            Err(Error::KernelInstability(format!(
                "|C| = {c:.6}, |D| = {d:.6} at t = {time:.6}; Gaussian kernel no longer normalizable"
            )))
        } else {
            Ok(())
        }
    })?;
    Ok(GaussianKernel::from_array(y, t))
}

const N: usize = 6;

/// Dormand–Prince 5(4) for an autonomous system, with FSAL and standard step
/// control. `check` runs after every accepted step.
fn dormand_prince<F, G>(rhs: F, y0: [Complex64; N], t_end: f64, tol: f64, mut check: G) -> Result<[Complex64; N]>
where
    F: Fn(&[Complex64; N]) -> [Complex64; N],
    G: FnMut(f64, &[Complex64; N]) -> Result<()>,
{
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // fifth minus fourth order weights
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;
    const MAX_STEPS: usize = 1_000_000;

    let mut y = y0;
    if t_end == 0.0 {
        return Ok(y);
    }
    let dir = t_end.signum();
    let span = t_end.abs();
    let mut t = 0.0_f64;
    let mut h = (span * 1e-3).min(1e-2);
    let mut k1 = rhs(&y);
    let comb = |y: &[Complex64; N], terms: &[(f64, &[Complex64; N])], h: f64| {
        let mut out = *y;
        for (c, k) in terms {
            for i in 0..N {
                out[i] += k[i] * (c * h);
            }
        }
        out
    };
    for _ in 0..MAX_STEPS {
        if t >= span {
            return Ok(y);
        }
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let hs = dir * h;
        let k2 = rhs(&comb(&y, &[(A21, &k1)], hs));
        let k3 = rhs(&comb(&y, &[(A31, &k1), (A32, &k2)], hs));
        let k4 = rhs(&comb(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
        let k5 = rhs(&comb(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs));
        let k6 = rhs(&comb(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs));
        let y_new = comb(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
        let k7 = rhs(&y_new);
        let mut err: f64 = 0.0;
        for i in 0..N {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
            let scale = tol * (1.0 + y[i].norm().max(y_new[i].norm()));
            err = err.max(e.norm() / scale);
        }
        if !err.is_finite() {
            return Err(Error::StepSize {
                t: dir * t,
                reason: "non-finite error estimate".into(),
            });
        }
        if err <= 1.0 {
            t = if last { span } else { t + h };
            y = y_new;
            k1 = k7;
            check(dir * t, &y)?;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * span.max(1.0) {
            return Err(Error::StepSize {
                t: dir * t,
                reason: format!("step {h:.3e} underflowed while meeting tolerance {tol:.1e}"),
            });
        }
    }
    Err(Error::StepSize {
        t: dir * t,
        reason: format!("exceeded {MAX_STEPS} steps"),
    })
}

/// Truncated-Fock oracle `⟨α|e^{−iHt}|β⟩` with the unitary built once.
#[derive(Clone, Debug)]
pub struct NumericKernel {
    u: CMatrix,
    cutoff: FockCutoff,
}

impl NumericKernel {
    pub fn new(h: &QuadraticHamiltonian, t: f64, cutoff: FockCutoff) -> Self {
        Self {
            u: unitary(h, t, cutoff),
            cutoff,
        }
    }

    pub fn eval(&self, alpha: CoherentAmplitude, beta: CoherentAmplitude) -> Result<Complex64> {
        for z in [alpha, beta] {
            let deficit = coherent_norm_deficit(z, self.cutoff);
            if deficit > COHERENT_DEFICIT_WARN {
                return Err(Error::CutoffTooSmall(format!(
                    "coherent amplitude {} has norm deficit {deficit:.3e} at n_max = {}",
                    z.value(),
                    self.cutoff.n_max()
                )));
            }
        }
        let d = self.cutoff.dim();
        let va = coherent_amplitudes(alpha.value(), d);
        let vb = coherent_amplitudes(beta.value(), d);
        Ok((va.adjoint() * &self.u * vb)[(0, 0)])
    }
}

pub fn kernel_numeric(
    h: &QuadraticHamiltonian,
    t: f64,
    alpha: CoherentAmplitude,
    beta: CoherentAmplitude,
    cutoff: FockCutoff,
) -> Result<Complex64> {
    NumericKernel::new(h, t, cutoff).eval(alpha, beta)
}
