//! Importance-sampled Monte Carlo with deterministic per-chunk substreams.
//!
//! Samples are drawn in fixed-size chunks; chunk `c` uses ChaCha8 seeded with
//! the run seed on stream `c`, and chunk sums are combined in chunk order, so
//! the estimate does not depend on the number of worker threads.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::polygauss::PolyGaussian;
use super::Estimate;
use crate::error::{Error, Result};

pub const CHUNK: usize = 1 << 14;
/// Relative standard error above which a variance warning is logged.
pub const VARIANCE_WARN: f64 = 0.1;

#[derive(Copy, Clone, Default)]
struct Moments {
    n: usize,
    sum: Complex64,
    sum_sq_re: f64,
    sum_sq_im: f64,
}

impl Moments {
    fn push(&mut self, v: Complex64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq_re += v.re * v.re;
        self.sum_sq_im += v.im * v.im;
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq_re += o.sum_sq_re;
        self.sum_sq_im += o.sum_sq_im;
        self
    }

    fn estimate(&self) -> Estimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var_re = ((self.sum_sq_re - n * mean.re * mean.re) / (n - 1.0)).max(0.0);
        let var_im = ((self.sum_sq_im - n * mean.im * mean.im) / (n - 1.0)).max(0.0);
        Estimate {
            value: mean,
            std_error: ((var_re + var_im) / n).sqrt(),
        }
    }
}

/// Mean of `draw(rng)` over `samples` draws, with its standard error.
pub fn sample_mean<F>(samples: usize, seed: u64, draw: F) -> Result<Estimate>
where
    F: Fn(&mut ChaCha8Rng) -> Complex64 + Sync,
{
    if samples < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 2 samples".into()));
    }
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..count {
                m.push(draw(&mut rng));
            }
            m
        })
        .collect();
    let est = parts.into_iter().fold(Moments::default(), Moments::merge).estimate();
    if !(est.value.re.is_finite() && est.value.im.is_finite() && est.std_error.is_finite()) {
        return Err(Error::NonIntegrable("Monte Carlo estimate is not finite".into()));
    }
    warn_variance(&est);
    Ok(est)
}

fn warn_variance(est: &Estimate) {
    let scale = est.value.norm();
    if scale > 0.0 && est.std_error > VARIANCE_WARN * scale {
        log::warn!(
            "Monte Carlo relative standard error {:.1}% exceeds {:.0}%; increase sample_count",
            100.0 * est.std_error / scale,
            100.0 * VARIANCE_WARN
        );
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples the integrand's own Gaussian `exp(Re E)` and averages the remaining
/// polynomial and phase.
pub fn integrate_polygauss(pg: &PolyGaussian, samples: usize, seed: u64) -> Result<Estimate> {
    let (rf, chol) = pg.check_integrable()?;
    let mode = pg.mode()?;
    let m = 2 * pg.n_vars();
    let l = chol.l();
    let sqrt_det: f64 = (0..m).map(|i| l[(i, i)]).product();
    let re_peak = mode.dot(&(&rf.s * &mode)) + rf.b.dot(&mode) + rf.c;
    let norm = std::f64::consts::PI.powf(m as f64 / 2.0) / sqrt_det;
    let lt = l.transpose();
    let n = pg.n_vars();
    let est = sample_mean(samples, seed, |rng| {
        // x − x* = L^{−T} ξ / √2 has covariance (2A)^{−1}, A = −S
        let xi = DVector::from_fn(m, |_, _| normal(rng) * std::f64::consts::FRAC_1_SQRT_2);
        let dx = lt.solve_upper_triangular(&xi).expect("Cholesky factor is nonsingular");
        let z: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(mode[2 * i] + dx[2 * i], mode[2 * i + 1] + dx[2 * i + 1]))
            .collect();
        let phase = Complex64::new(0.0, pg.exponent(&z).im).exp();
        pg.poly().eval(&z) * phase
    })?;
    let scale = norm * re_peak.exp();
    Ok(Estimate {
        value: est.value * scale,
        std_error: est.std_error * scale,
    })
}

/// Black-box integrand over `centers.len()` complex variables, sampled from
/// independent Gaussians of per-axis standard deviation `widths[i]`.
pub fn integrate_sampler<F>(centers: &[Complex64], widths: &[f64], samples: usize, seed: u64, f: F) -> Result<Estimate>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    if centers.len() != widths.len() || widths.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInput("sampler widths must be positive, one per variable".into()));
    }
    let n = centers.len();
    // density of one complex variable: exp(−|z−c|²/2σ²)/(2πσ²)
    let log_norm: f64 = widths.iter().map(|w| (2.0 * std::f64::consts::PI * w * w).ln()).sum();
    sample_mean(samples, seed, |rng| {
        let mut z = Vec::with_capacity(n);
        let mut quad = 0.0;
        for i in 0..n {
            let (a, b) = (normal(rng), normal(rng));
            quad += 0.5 * (a * a + b * b);
            z.push(centers[i] + Complex64::new(a, b) * widths[i]);
        }
        f(&z) * (quad + log_norm).exp()
    })
}
