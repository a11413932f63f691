//! Deterministic test-matrix families.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// Generator families used by the bound checks and benchmarks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatrixKind {
    /// `A_ij = 1 / (1 + |i - j|)`.
    KernelBand,
    /// `Q₁ diag(d) Q₂ᵀ`, `d` geometric from 1 down to `1/kappa`.
    GeometricSpectrum { kappa: f64 },
    /// Sum of `rank` Gaussian outer products.
    RankK { rank: usize },
    /// I.i.d. standard normal entries.
    RandomDense,
}

impl MatrixKind {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::KernelBand => "kernel_band",
            MatrixKind::GeometricSpectrum { .. } => "geometric_spectrum",
            MatrixKind::RankK { .. } => "rank_k",
            MatrixKind::RandomDense => "random_dense",
        }
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::GeometricSpectrum { kappa } => write!(f, "geometric_spectrum(kappa={kappa:e})"),
            MatrixKind::RankK { rank } => write!(f, "rank_k(k={rank})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `kernel_band`, `random_dense`, `geometric_spectrum[:kappa]`, `rank_k[:k]`.
impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = |what: &str| Error::InvalidArgument(format!("bad {what} in matrix kind '{s}'"));
        match name {
            "kernel_band" => Ok(MatrixKind::KernelBand),
            "random_dense" => Ok(MatrixKind::RandomDense),
            "geometric_spectrum" => {
                let kappa = arg.map_or(Ok(1e6), |a| a.parse::<f64>().map_err(|_| bad("kappa")))?;
                Ok(MatrixKind::GeometricSpectrum { kappa })
            }
            "rank_k" => {
                let rank = arg.map_or(Ok(4), |a| a.parse::<usize>().map_err(|_| bad("rank")))?;
                Ok(MatrixKind::RankK { rank })
            }
            _ => Err(Error::InvalidArgument(format!("unknown matrix kind '{s}'"))),
        }
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Seeded vector of standard normal entries.
pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    normal_vec(&mut rng(seed), n)
}

/// Seeded `rows × cols` matrix of standard normal entries.
pub fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let data = normal_vec(&mut rng(seed), rows * cols);
    DenseMatrix::new(rows, cols, data).expect("normal samples are finite")
}

/// Seeded `n × n` orthogonal matrix (Gram-Schmidt with reorthogonalization on Gaussian columns).
pub fn random_orthogonal(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut w = normal_vec(&mut rng, n);
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&w, c);
                w.iter_mut().zip(c).for_each(|(wi, ci)| *wi -= p * ci);
            }
        }
        let nrm = dot(&w, &w).sqrt();
        if nrm > 1e-10 {
            cols.push(w.into_iter().map(|x| x / nrm).collect());
        }
    }
    DenseMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Builds an `n × n` member of the requested family.
pub fn generate_matrix(kind: MatrixKind, n: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("matrix size must be positive".into()));
    }
    let m = match kind {
        MatrixKind::KernelBand => {
            DenseMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + i.abs_diff(j) as f64))
        }
        MatrixKind::RandomDense => random_dense(n, n, seed),
        MatrixKind::RankK { rank } => {
            let mut rng = rng(seed);
            let mut a = DenseMatrix::zeros(n, n);
            for _ in 0..rank {
                let u = normal_vec(&mut rng, n);
                let v = normal_vec(&mut rng, n);
                for (i, &ui) in u.iter().enumerate() {
                    let row = a.row_mut(i);
                    row.iter_mut().zip(&v).for_each(|(r, vj)| *r += ui * vj);
                }
            }
            a
        }
        MatrixKind::GeometricSpectrum { kappa } => {
            if !(kappa >= 1.0 && kappa.is_finite()) {
                return Err(Error::InvalidArgument(format!("kappa must be >= 1, got {kappa}")));
            }
            let d: Vec<f64> = (0..n)
                .map(|i| if n == 1 { 1.0 } else { kappa.powf(-(i as f64) / (n - 1) as f64) })
                .collect();
            let q1 = random_orthogonal(n, seed);
            let q2 = random_orthogonal(n, seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
            let mut q1d = q1;
            for i in 0..n {
                q1d.row_mut(i).iter_mut().zip(&d).for_each(|(x, di)| *x *= di);
            }
            q1d.matmul(&q2.transpose())?
        }
    };
    Ok(m)
}
