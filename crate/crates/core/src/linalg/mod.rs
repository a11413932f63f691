//! Dense linear algebra: the matrix type, SVD, norms and spectra.

mod matrix;
mod svd;

pub use matrix::{frobenius_norm, matvec_dense, matvec_transpose, DenseMatrix};
pub(crate) use matrix::{axpy, dot, norm2};
pub use svd::{svd, tail_norms, truncation_rank, SvdFactorization};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;

const POWER_MAX_ITERS: usize = 500;
const POWER_TOL: f64 = 1e-12;
const POWER_SEED: u64 = 0x5eed_0f_5eed;
/// Cap on squarings of the normalized Gram matrix.
const MAX_SQUARINGS: usize = 64;
/// Squaring stops once the normalized power changes by less than this in Frobenius norm.
const SQUARING_TOL: f64 = 1e-14;

/// Largest singular value by power iteration on a power of the Gram matrix.
///
/// `G` is `AᵀA` or `AAᵀ`, whichever is smaller. `G` is normalized and squared
/// until the normalized power stops changing, so one step of the iteration
/// applies `G^(2^s)` and a small gap `σ₂/σ₁` costs `s` squarings instead of
/// thousands of steps. From a fixed start vector, at most 500 steps follow; they
/// stop once the Rayleigh quotient `xᵀGx` changes by less than 1e-12 relative.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let g = if a.cols() <= a.rows() {
        a.transpose().matmul(a)
    } else {
        a.matmul(&a.transpose())
    }
    .expect("Gram shapes agree");
    let k = g.rows();
    let scale = frobenius_norm(&g);
    if k == 0 || scale == 0.0 {
        return 0.0;
    }
    let mut p = g.scaled(1.0 / scale);
    for _ in 0..MAX_SQUARINGS {
        let sq = p.matmul(&p).expect("square");
        let next = sq.scaled(1.0 / frobenius_norm(&sq));
        let change = frobenius_norm(&next.sub(&p).expect("same shape"));
        p = next;
        if change <= SQUARING_TOL {
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut lambda_prev = f64::NAN;
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = matvec_dense(&p, &x).expect("square");
        let ny = norm2(&y);
        if ny == 0.0 {
            break;
        }
        x = y.into_iter().map(|v| v / ny).collect();
        lambda = dot(&x, &matvec_dense(&g, &x).expect("square"));
        if (lambda - lambda_prev).abs() <= POWER_TOL * lambda {
            break;
        }
        lambda_prev = lambda;
    }
    lambda.max(0.0).sqrt()
}

/// Extreme singular values and condition number of a matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `sigma_max / sigma_min`, or `+∞` when the matrix is numerically singular.
    pub condition_number: f64,
}

impl SpectrumReport {
    pub fn is_singular(&self) -> bool {
        self.condition_number.is_infinite()
    }
}

/// Spectrum summary from a full SVD.
///
/// `sigma_min` below `max(m, n) · ε_mach · sigma_max` is treated as zero and
/// reported as an infinite condition number.
pub fn spectrum(a: &DenseMatrix) -> Result<SpectrumReport> {
    let s = svd(a)?;
    Ok(spectrum_from_values(&s.singular_values, a.rows().max(a.cols())))
}

pub(crate) fn spectrum_from_values(sigma: &[f64], max_dim: usize) -> SpectrumReport {
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let sigma_min = sigma.last().copied().unwrap_or(0.0);
    let singular = sigma_max == 0.0 || sigma_min <= sigma_max * max_dim as f64 * f64::EPSILON;
    SpectrumReport {
        sigma_max,
        sigma_min,
        condition_number: if singular {
            f64::INFINITY
        } else {
            sigma_max / sigma_min
        },
    }
}
