//! Integrands of the form `poly(z, z̄) · exp(E(z, z̄))` with `E` quadratic in
//! a fixed set of complex variables and their conjugates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::CMatrix;
use crate::propagator::GaussianKernel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A linear atom: a variable, its conjugate, or a constant.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Lin {
    Z(usize),
    Zbar(usize),
    Const(Complex64),
}

/// An argument slot of a kernel: an integration variable or a fixed amplitude.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Slot {
    Var(usize),
    Fixed(Complex64),
}

impl Slot {
    /// The slot itself, or its conjugate.
    fn plain(self, conj: bool) -> Lin {
        match (self, conj) {
            (Slot::Var(i), false) => Lin::Z(i),
            (Slot::Var(i), true) => Lin::Zbar(i),
            (Slot::Fixed(c), false) => Lin::Const(c),
            (Slot::Fixed(c), true) => Lin::Const(c.conj()),
        }
    }
}

/// Sparse polynomial in `z_0 … z_{n−1}, z̄_0 … z̄_{n−1}`. A monomial key holds the
/// `n` powers of `z` followed by the `n` powers of `z̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Vec<u16>, Complex64>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(vec![0; 2 * n], c);
        p
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, ONE)
    }

    pub fn lin(n: usize, x: Lin) -> Self {
        match x {
            Lin::Const(c) => Self::constant(n, c),
            Lin::Z(i) => Self::monomial(n, &[(i, 1)], &[], ONE),
            Lin::Zbar(i) => Self::monomial(n, &[], &[(i, 1)], ONE),
        }
    }

    /// `c · Π z_i^p · Π z̄_j^q`.
    pub fn monomial(n: usize, z_pows: &[(usize, u16)], zbar_pows: &[(usize, u16)], c: Complex64) -> Self {
        let mut key = vec![0u16; 2 * n];
        for &(i, p) in z_pows {
            key[i] += p;
        }
        for &(j, q) in zbar_pows {
            key[n + j] += q;
        }
        let mut out = Self::zero(n);
        out.add_term(key, c);
        out
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16], Complex64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, key: Vec<u16>, c: Complex64) {
        debug_assert_eq!(key.len(), 2 * self.n);
        if c == ZERO {
            return;
        }
        let e = self.terms.entry(key).or_insert(ZERO);
        *e += c;
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (k, &v) in &other.terms {
            out.add_term(k.clone(), v);
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> Poly {
        let mut out = Poly::zero(self.n);
        for (k, &v) in &self.terms {
            out.add_term(k.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.n, other.n, "polynomials over different variable sets");
        let mut out = Poly::zero(self.n);
        for (ka, &va) in &self.terms {
            for (kb, &vb) in &other.terms {
                let key: Vec<u16> = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                out.add_term(key, va * vb);
            }
        }
        out
    }

    fn derivative(&self, slot: usize) -> Poly {
        let mut out = Poly::zero(self.n);
        for (k, &v) in &self.terms {
            let p = k[slot];
            if p > 0 {
                let mut key = k.clone();
                key[slot] -= 1;
                out.add_term(key, v * p as f64);
            }
        }
        out
    }

    /// `∂/∂z_i` with `z̄` held fixed (Wirtinger).
    pub fn d_z(&self, i: usize) -> Poly {
        self.derivative(i)
    }

    /// `∂/∂z̄_i` with `z` held fixed.
    pub fn d_zbar(&self, i: usize) -> Poly {
        self.derivative(self.n + i)
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let n = self.n;
        let zb: Vec<Complex64> = z.iter().map(|v| v.conj()).collect();
        self.terms
            .iter()
            .map(|(k, &c)| {
                let mut m = c;
                for i in 0..n {
                    if k[i] > 0 {
                        m *= z[i].powu(k[i] as u32);
                    }
                    if k[n + i] > 0 {
                        m *= zb[i].powu(k[n + i] as u32);
                    }
                }
                m
            })
            .sum()
    }

    /// Largest total degree in `(z_i, z̄_i)` for variable `i`.
    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms
            .keys()
            .map(|k| k[i] as u32 + k[self.n + i] as u32)
            .max()
            .unwrap_or(0)
    }
}

/// `poly · exp(Σ P_ij z_i z_j + Σ Q_ij z̄_i z̄_j + Σ R_ij z̄_i z_j + l·z + m·z̄ + c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyGaussian {
    n: usize,
    zz: CMatrix,
    bb: CMatrix,
    bz: CMatrix,
    lz: Vec<Complex64>,
    lb: Vec<Complex64>,
    c0: Complex64,
    poly: Poly,
}

/// Real-coordinate form `Re E(x) = xᵀSx + bᵀx + c` with `x = (Re z_0, Im z_0, …)`.
#[derive(Clone, Debug)]
pub struct RealForm {
    pub s: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl PolyGaussian {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            zz: CMatrix::zeros(n, n),
            bb: CMatrix::zeros(n, n),
            bz: CMatrix::zeros(n, n),
            lz: vec![ZERO; n],
            lb: vec![ZERO; n],
            c0: ZERO,
            poly: Poly::one(n),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn constant(&self) -> Complex64 {
        self.c0
    }

    pub fn with_poly(mut self, poly: Poly) -> Self {
        assert_eq!(poly.n_vars(), self.n);
        self.poly = poly;
        self
    }

    pub fn add_constant(&mut self, c: Complex64) {
        self.c0 += c;
    }

    pub fn add_linear(&mut self, coef: Complex64, x: Lin) {
        match x {
            Lin::Const(c) => self.c0 += coef * c,
            Lin::Z(i) => self.lz[i] += coef,
            Lin::Zbar(i) => self.lb[i] += coef,
        }
    }

    /// Adds `coef · x · y` to the exponent.
    pub fn add_product(&mut self, coef: Complex64, x: Lin, y: Lin) {
        match (x, y) {
            (Lin::Const(a), other) | (other, Lin::Const(a)) => self.add_linear(coef * a, other),
            (Lin::Z(i), Lin::Z(j)) => self.zz[(i, j)] += coef,
            (Lin::Zbar(i), Lin::Zbar(j)) => self.bb[(i, j)] += coef,
            (Lin::Zbar(i), Lin::Z(j)) | (Lin::Z(j), Lin::Zbar(i)) => self.bz[(i, j)] += coef,
        }
    }

    /// Multiplies by `K(α,t|β,0)`, or by its complex conjugate.
    pub fn add_kernel(&mut self, k: &GaussianKernel, alpha: Slot, beta: Slot, conjugate: bool) {
        let cc = |z: Complex64| if conjugate { z.conj() } else { z };
        // ᾱ in the kernel becomes α under conjugation, β becomes β̄
        let ab = alpha.plain(!conjugate);
        let b = beta.plain(conjugate);
        self.add_constant(cc(k.a));
        self.add_product(cc(k.b), ab, b);
        self.add_product(cc(k.c), ab, ab);
        self.add_product(cc(k.d), b, b);
        self.add_linear(cc(k.e), ab);
        self.add_linear(cc(k.f), b);
        let half = Complex64::new(-0.5, 0.0);
        self.add_product(half, alpha.plain(false), alpha.plain(true));
        self.add_product(half, beta.plain(false), beta.plain(true));
    }

    /// Multiplies by the coherent overlap `⟨β|α⟩`.
    pub fn add_overlap(&mut self, beta: Slot, alpha: Slot) {
        self.add_kernel(&GaussianKernel::identity(), beta, alpha, false);
    }

    pub fn scale(&mut self, c: Complex64) {
        self.poly = self.poly.scale(c);
    }

    pub fn mul_poly(&mut self, p: &Poly) {
        self.poly = self.poly.mul(p);
    }

    /// `self + other` for two integrands sharing the same exponent.
    pub fn add_same_exponent(&self, other: &PolyGaussian) -> Result<PolyGaussian> {
        if self.zz != other.zz || self.bb != other.bb || self.bz != other.bz || self.lz != other.lz || self.lb != other.lb || self.c0 != other.c0 {
            return Err(Error::InvalidInput("PolyGaussian sum requires identical exponents".into()));
        }
        let mut out = self.clone();
        out.poly = self.poly.add(&other.poly);
        Ok(out)
    }

    /// `∂E/∂z_k` as a linear polynomial.
    fn exponent_d_z(&self, k: usize) -> Poly {
        let n = self.n;
        let mut p = Poly::constant(n, self.lz[k]);
        for j in 0..n {
            p = p.add(&Poly::lin(n, Lin::Z(j)).scale(self.zz[(k, j)] + self.zz[(j, k)]));
            p = p.add(&Poly::lin(n, Lin::Zbar(j)).scale(self.bz[(j, k)]));
        }
        p
    }

    fn exponent_d_zbar(&self, k: usize) -> Poly {
        let n = self.n;
        let mut p = Poly::constant(n, self.lb[k]);
        for j in 0..n {
            p = p.add(&Poly::lin(n, Lin::Zbar(j)).scale(self.bb[(k, j)] + self.bb[(j, k)]));
            p = p.add(&Poly::lin(n, Lin::Z(j)).scale(self.bz[(k, j)]));
        }
        p
    }

    /// Exact `∂/∂z_k` of the whole integrand.
    pub fn d_z(&self, k: usize) -> PolyGaussian {
        let mut out = self.clone();
        out.poly = self.poly.d_z(k).add(&self.poly.mul(&self.exponent_d_z(k)));
        out
    }

    /// Exact `∂/∂z̄_k` of the whole integrand.
    pub fn d_zbar(&self, k: usize) -> PolyGaussian {
        let mut out = self.clone();
        out.poly = self.poly.d_zbar(k).add(&self.poly.mul(&self.exponent_d_zbar(k)));
        out
    }

    pub fn exponent(&self, z: &[Complex64]) -> Complex64 {
        let n = self.n;
        let mut e = self.c0;
        for i in 0..n {
            let zi = z[i];
            let zbi = zi.conj();
            e += self.lz[i] * zi + self.lb[i] * zbi;
            for j in 0..n {
                e += self.zz[(i, j)] * zi * z[j] + self.bb[(i, j)] * zbi * z[j].conj() + self.bz[(i, j)] * zbi * z[j];
            }
        }
        e
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.poly.eval(z) * self.exponent(z).exp()
    }

    /// Exponent terms depending on `z_i` alone, without the constant.
    pub(crate) fn unary_exponent(&self, i: usize, z: Complex64) -> Complex64 {
        let zb = z.conj();
        self.zz[(i, i)] * z * z + self.bb[(i, i)] * zb * zb + self.bz[(i, i)] * zb * z + self.lz[i] * z + self.lb[i] * zb
    }

    /// Whether any exponent term couples `z_i` and `z_j`.
    pub(crate) fn coupled(&self, i: usize, j: usize) -> bool {
        self.zz[(i, j)] != ZERO
            || self.zz[(j, i)] != ZERO
            || self.bb[(i, j)] != ZERO
            || self.bb[(j, i)] != ZERO
            || self.bz[(i, j)] != ZERO
            || self.bz[(j, i)] != ZERO
    }

    /// Coupling exponent between `z_i = x` and `z_j = y`, `i ≠ j`.
    pub(crate) fn pair_exponent(&self, i: usize, j: usize, x: Complex64, y: Complex64) -> Complex64 {
        (self.zz[(i, j)] + self.zz[(j, i)]) * x * y
            + (self.bb[(i, j)] + self.bb[(j, i)]) * x.conj() * y.conj()
            + self.bz[(i, j)] * x.conj() * y
            + self.bz[(j, i)] * y.conj() * x
    }

    pub fn real_form(&self) -> RealForm {
        let n = self.n;
        let m = 2 * n;
        // z_i = x_{2i} + i x_{2i+1}
        let j = CMatrix::from_fn(n, m, |i, a| {
            if a == 2 * i {
                ONE
            } else if a == 2 * i + 1 {
                Complex64::new(0.0, 1.0)
            } else {
                ZERO
            }
        });
        let jb = j.map(|z| z.conj());
        let mq = j.transpose() * &self.zz * &j + jb.transpose() * &self.bb * &jb + jb.transpose() * &self.bz * &j;
        let s = DMatrix::from_fn(m, m, |a, b| 0.5 * (mq[(a, b)].re + mq[(b, a)].re));
        let lz = nalgebra::DVector::from_vec(self.lz.clone());
        let lb = nalgebra::DVector::from_vec(self.lb.clone());
        let bc = j.transpose() * lz + jb.transpose() * lb;
        RealForm {
            s,
            b: bc.map(|z| z.re),
            c: self.c0.re,
        }
    }

    /// Cholesky factor of `−S`; fails unless the Gaussian decays in every
    /// direction.
    pub fn check_integrable(&self) -> Result<(RealForm, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let rf = self.real_form();
        let neg = -rf.s.clone();
        match neg.clone().cholesky() {
            Some(ch) => Ok((rf, ch)),
            None => {
                let min = neg.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
                Err(Error::NonIntegrable(format!(
                    "real part of the Gaussian exponent is not negative definite (smallest curvature {min:.3e})"
                )))
            }
        }
    }

    /// Maximizer of `Re E` in real coordinates.
    pub fn mode(&self) -> Result<DVector<f64>> {
        let (rf, ch) = self.check_integrable()?;
        // ∇(xᵀSx + bᵀx) = 2Sx + b = 0  ⇒  (−S)x = b/2
        Ok(ch.solve(&(rf.b * 0.5)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadraticHamiltonian;
    use crate::propagator::kernel_quadratic;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kernel_term_matches_direct_evaluation() {
        let h = QuadraticHamiltonian::new(1.0, c(0.2, 0.1), c(0.3, -0.4)).unwrap();
        let k = kernel_quadratic(&h, 0.7).unwrap();
        let (a, b) = (c(0.4, -0.3), c(-0.7, 0.2));
        let mut pg = PolyGaussian::new(2);
        pg.add_kernel(&k, Slot::Var(0), Slot::Var(1), false);
        assert!((pg.eval(&[a, b]) - k.eval(a, b)).norm() < 1e-14);
        let mut pc = PolyGaussian::new(2);
        pc.add_kernel(&k, Slot::Var(0), Slot::Var(1), true);
        assert!((pc.eval(&[a, b]) - k.eval(a, b).conj()).norm() < 1e-14);
        let mut pf = PolyGaussian::new(1);
        pf.add_kernel(&k, Slot::Var(0), Slot::Fixed(b), false);
        assert!((pf.eval(&[a]) - k.eval(a, b)).norm() < 1e-14);
        let mut pf2 = PolyGaussian::new(1);
        pf2.add_kernel(&k, Slot::Fixed(a), Slot::Var(0), true);
        assert!((pf2.eval(&[b]) - k.eval(a, b).conj()).norm() < 1e-14);
    }

    #[test]
    fn overlap_term() {
        let mut pg = PolyGaussian::new(2);
        pg.add_overlap(Slot::Var(0), Slot::Var(1));
        let (b, a) = (c(0.3, 0.1), c(-0.2, 0.5));
        assert!((pg.eval(&[b, a]) - crate::hilbert::coherent_overlap(b, a)).norm() < 1e-15);
    }

    #[test]
    fn real_form_reproduces_real_part() {
        let h = QuadraticHamiltonian::new(1.0, c(0.2, 0.1), c(0.3, -0.4)).unwrap();
        let k = kernel_quadratic(&h, 0.7).unwrap();
        let mut pg = PolyGaussian::new(2);
        pg.add_kernel(&k, Slot::Var(0), Slot::Var(1), false);
        pg.add_overlap(Slot::Var(1), Slot::Fixed(c(0.5, 0.5)));
        let rf = pg.real_form();
        let z = [c(0.3, -1.1), c(0.8, 0.25)];
        let x = DVector::from_vec(vec![z[0].re, z[0].im, z[1].re, z[1].im]);
        let re = (x.transpose() * &rf.s * &x)[(0, 0)] + rf.b.dot(&x) + rf.c;
        assert!((re - pg.exponent(&z).re).abs() < 1e-13);
        assert!(pg.check_integrable().is_ok());
    }

    #[test]
    fn growing_gaussian_rejected() {
        let mut pg = PolyGaussian::new(1);
        pg.add_product(c(0.1, 0.0), Lin::Z(0), Lin::Zbar(0));
        assert!(matches!(pg.check_integrable(), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn mode_of_shifted_gaussian() {
        // exp(−|z − w|²) has its mode at w
        let w = c(0.7, -0.4);
        let mut pg = PolyGaussian::new(1);
        pg.add_product(c(-1.0, 0.0), Lin::Z(0), Lin::Zbar(0));
        pg.add_linear(w.conj(), Lin::Z(0));
        pg.add_linear(w, Lin::Zbar(0));
        let m = pg.mode().unwrap();
        assert!((m[0] - w.re).abs() < 1e-14 && (m[1] - w.im).abs() < 1e-14);
    }

    #[test]
    fn poly_algebra() {
        let n = 2;
        let p = Poly::lin(n, Lin::Z(0)).add(&Poly::constant(n, c(2.0, 0.0)));
        let q = Poly::lin(n, Lin::Zbar(1));
        let z = [c(0.3, 0.4), c(-1.0, 0.5)];
        assert!((p.mul(&q).eval(&z) - p.eval(&z) * q.eval(&z)).norm() < 1e-15);
        let sq = p.mul(&p);
        assert!((sq.d_z(0).eval(&z) - 2.0 * p.eval(&z)).norm() < 1e-14);
        assert_eq!(sq.d_zbar(0).len(), 0);
        assert_eq!(sq.degree_in(0), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        /// Symbolic Wirtinger derivatives agree with central differences.
        #[test]
        fn derivatives_match_finite_differences(
            xr in -0.8f64..0.8, xi in -0.8f64..0.8, br in -0.5f64..0.5, bi in -0.5f64..0.5,
        ) {
            let h = QuadraticHamiltonian::new(1.0, c(0.15, 0.05), c(0.2, 0.1)).unwrap();
            let k = kernel_quadratic(&h, 0.6).unwrap();
            let mut pg = PolyGaussian::new(1);
            pg.add_kernel(&k, Slot::Var(0), Slot::Fixed(c(br, bi)), false);
            pg.mul_poly(&Poly::lin(1, Lin::Zbar(0)).mul(&Poly::lin(1, Lin::Z(0))));
            let z = c(xr, xi);
            let hstep = 1e-5;
            let f = |w: Complex64| pg.eval(&[w]);
            let dx = (f(z + hstep) - f(z - hstep)) / (2.0 * hstep);
            let dy = (f(z + c(0.0, hstep)) - f(z - c(0.0, hstep))) / (2.0 * hstep);
            // ∂_z = (∂_x − i∂_y)/2, ∂_z̄ = (∂_x + i∂_y)/2
            let dz = (dx - c(0.0, 1.0) * dy) * 0.5;
            let dzb = (dx + c(0.0, 1.0) * dy) * 0.5;
            prop_assert!((pg.d_z(0).eval(&[z]) - dz).norm() < 1e-7);
            prop_assert!((pg.d_zbar(0).eval(&[z]) - dzb).norm() < 1e-7);
        }
    }
}
