//! Tensor Gauss–Hermite quadrature over complex variables, contracted by
//! variable elimination over the pairwise coupling graph.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use nalgebra::DVector;
use num_complex::Complex64;

use super::polygauss::PolyGaussian;
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Gauss–Hermite nodes with scaled weights `λ_k = w_k e^{x_k²}`, so that
/// `∫ f(x) dx ≈ Σ λ_k f(x_k)` for `f` with Gaussian decay.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

/// Nodes seeded by Golub–Welsch, then polished by Newton steps on the
/// orthonormal Hermite function `ψ_n`; scaled weights come from the
/// Christoffel function `1/Σ_{j<n} ψ_j(x)²`, which stays accurate in the tails
/// where the raw weights underflow relative to the largest one.
pub fn hermite_rule(n: usize) -> HermiteRule {
    let n = n.max(1);
    let gh = GaussHermite::new(NonZeroUsize::new(n).expect("n ≥ 1"));
    let mut nodes: Vec<f64> = gh.nodes().copied().collect();
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (psi_n, psi_nm1, _) = hermite_functions(n, *x);
            let dpsi = (2.0 * n as f64).sqrt() * psi_nm1 - *x * psi_n;
            if dpsi != 0.0 {
                *x -= psi_n / dpsi;
            }
        }
    }
    let scaled_weights = nodes.iter().map(|&x| 1.0 / hermite_functions(n, x).2).collect();
    HermiteRule { nodes, scaled_weights }
}

/// `(ψ_n(x), ψ_{n−1}(x), Σ_{j<n} ψ_j(x)²)` by the stable three-term recurrence.
fn hermite_functions(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    let mut sum = 0.0;
    for j in 0..n {
        sum += cur * cur;
        let next = (2.0 / (j + 1) as f64).sqrt() * x * cur - (j as f64 / (j + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev, sum)
}

/// Tensor grid for one complex variable: `z = c + s_x u + i s_y v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub points: Vec<Complex64>,
    /// Includes the Jacobian `s_x s_y`; the measure is `d²z = dx dy`.
    pub weights: Vec<f64>,
}

impl ComplexGrid {
    pub fn new(rule: &HermiteRule, center: Complex64, sx: f64, sy: f64) -> Self {
        let n = rule.nodes.len();
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (u, wu) in rule.nodes.iter().zip(&rule.scaled_weights) {
            for (v, wv) in rule.nodes.iter().zip(&rule.scaled_weights) {
                points.push(center + Complex64::new(sx * u, sy * v));
                weights.push(wu * wv * sx * sy);
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Grids centred on the maximizer of `Re E`, each real axis scaled by its
/// conditional width `1/√(−S_aa)`.
pub fn grids_for(pg: &PolyGaussian, nodes_per_axis: usize) -> Result<Vec<ComplexGrid>> {
    let (rf, _) = pg.check_integrable()?;
    let mode = pg.mode()?;
    let rule = hermite_rule(nodes_per_axis);
    Ok((0..pg.n_vars())
        .map(|i| {
            let (a, b) = (2 * i, 2 * i + 1);
            let sx = 1.0 / (-rf.s[(a, a)]).sqrt();
            let sy = 1.0 / (-rf.s[(b, b)]).sqrt();
            ComplexGrid::new(&rule, Complex64::new(mode[a], mode[b]), sx, sy)
        })
        .collect())
}

/// Sum over all node assignments of `Π unary_i · Π pair_ij` by repeatedly
/// eliminating a variable of minimal degree. Supports coupling graphs whose
/// elimination never meets a variable with more than two live neighbours.
pub(crate) fn contract(mut unary: Vec<CVector>, mut pairs: BTreeMap<(usize, usize), CMatrix>) -> Result<Complex64> {
    let n = unary.len();
    let mut alive = vec![true; n];
    let mut total = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        let neighbours = |v: usize, pairs: &BTreeMap<(usize, usize), CMatrix>| -> Vec<usize> {
            pairs
                .keys()
                .filter_map(|&(i, j)| if i == v { Some(j) } else if j == v { Some(i) } else { None })
                .collect()
        };
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (neighbours(v, &pairs).len(), v))
            .expect("a live variable remains");
        let nb = neighbours(v, &pairs);
        // orient the table so rows index `v`
        let take = |pairs: &mut BTreeMap<(usize, usize), CMatrix>, w: usize| -> CMatrix {
            if v < w {
                pairs.remove(&(v, w)).expect("pair present")
            } else {
                pairs.remove(&(w, v)).expect("pair present").transpose()
            }
        };
        match nb.len() {
            0 => total *= unary[v].sum(),
            1 => {
                let w = nb[0];
                let t = take(&mut pairs, w);
                let msg = t.transpose() * &unary[v];
                unary[w].component_mul_assign(&msg);
            }
            2 => {
                let (a, b) = (nb[0].min(nb[1]), nb[0].max(nb[1]));
                let ta = take(&mut pairs, a);
                let tb = take(&mut pairs, b);
                let mut left = ta.transpose();
                for (k, mut col) in left.column_iter_mut().enumerate() {
                    col *= unary[v][k];
                }
                let m = complex_matmul(&left, &tb);
                match pairs.get_mut(&(a, b)) {
                    Some(existing) => existing.component_mul_assign(&m),
                    None => {
                        pairs.insert((a, b), m);
                    }
                }
            }
            _ => {
                return Err(Error::Unsupported(
                    "quadrature elimination met a variable coupled to three or more others; use the monte_carlo_gaussian engine".into(),
                ))
            }
        }
        alive[v] = false;
    }
    Ok(total)
}

/// `A·B` for complex matrices via four real products with `matrixmultiply`.
pub(crate) fn complex_matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2);
    let split = |x: &CMatrix| -> (Vec<f64>, Vec<f64>) { (x.iter().map(|z| z.re).collect(), x.iter().map(|z| z.im).collect()) };
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let mut rr = vec![0.0; m * n];
    let mut ii = vec![0.0; m * n];
    let mut ri = vec![0.0; m * n];
    let mut ir = vec![0.0; m * n];
    // column-major: row stride 1, column stride = rows
    let gemm = |x: &[f64], y: &[f64], out: &mut [f64]| unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            x.as_ptr(),
            1,
            m as isize,
            y.as_ptr(),
            1,
            k as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            m as isize,
        );
    };
    gemm(&ar, &br, &mut rr);
    gemm(&ai, &bi, &mut ii);
    gemm(&ar, &bi, &mut ri);
    gemm(&ai, &br, &mut ir);
    CMatrix::from_fn(m, n, |r, c| {
        let idx = r + c * m;
        Complex64::new(rr[idx] - ii[idx], ri[idx] + ir[idx])
    })
}

/// Deterministic tensor quadrature of a [`PolyGaussian`].
pub fn integrate_quadrature(pg: &PolyGaussian, nodes_per_axis: usize) -> Result<Complex64> {
    let grids = grids_for(pg, nodes_per_axis)?;
    integrate_on_grids(pg, &grids)
}

pub(crate) fn integrate_on_grids(pg: &PolyGaussian, grids: &[ComplexGrid]) -> Result<Complex64> {
    let n = pg.n_vars();
    let base: Vec<CVector> = (0..n)
        .map(|i| {
            let g = &grids[i];
            DVector::from_iterator(
                g.len(),
                g.points
                    .iter()
                    .zip(&g.weights)
                    .map(|(&z, &w)| pg.unary_exponent(i, z).exp() * w),
            )
        })
        .collect();
    let mut pairs = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            if pg.coupled(i, j) {
                let (gi, gj) = (&grids[i], &grids[j]);
                let t = CMatrix::from_fn(gi.len(), gj.len(), |k, l| pg.pair_exponent(i, j, gi.points[k], gj.points[l]).exp());
                pairs.insert((i, j), t);
            }
        }
    }
    // each monomial is a product of unary powers
    let mut acc = ZERO;
    for (key, coef) in pg.poly().terms() {
        let unary: Vec<CVector> = (0..n)
            .map(|i| {
                let (p, q) = (key[i] as u32, key[n + i] as u32);
                if p == 0 && q == 0 {
                    base[i].clone()
                } else {
                    let g = &grids[i];
                    DVector::from_iterator(
                        g.len(),
                        g.points
                            .iter()
                            .zip(base[i].iter())
                            .map(|(z, b)| b * z.powu(p) * z.conj().powu(q)),
                    )
                }
            })
            .collect();
        acc += coef * contract(unary, pairs.clone())?;
    }
    Ok(acc * pg.constant().exp())
}
