use super::{param_gradient, Network};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// Empirical tangent kernel `Θ_ab = ∇_θ f(x_a) · ∇_θ f(x_b)` over a fixed sample.
#[derive(Clone, Debug, PartialEq)]
pub struct NtkGram {
    pub samples: Vec<Vec<f64>>,
    pub gram: DenseMatrix,
}

impl NtkGram {
    pub fn max_asymmetry(&self) -> f64 {
        let g = &self.gram;
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..i {
                worst = worst.max((g.get(i, j) - g.get(j, i)).abs());
            }
        }
        worst
    }

    /// Positive semidefinite up to `1e-8 · trace / m`: Cholesky of the
    /// shifted matrix succeeds.
    pub fn is_psd(&self) -> bool {
        let m = self.gram.rows();
        let trace: f64 = (0..m).map(|i| self.gram.get(i, i)).sum();
        let shift = 1e-8 * trace.max(0.0) / m as f64 + f64::MIN_POSITIVE;
        let mut l = vec![0.0; m * m];
        for j in 0..m {
            let mut d = self.gram.get(j, j) + shift;
            for k in 0..j {
                d -= l[j * m + k] * l[j * m + k];
            }
            if d <= 0.0 {
                return false;
            }
            let d = d.sqrt();
            l[j * m + j] = d;
            for i in j + 1..m {
                let mut s = 0.5 * (self.gram.get(i, j) + self.gram.get(j, i));
                for k in 0..j {
                    s -= l[i * m + k] * l[j * m + k];
                }
                l[i * m + j] = s / d;
            }
        }
        true
    }
}

/// Tangent kernel of a dense scalar-output network.
pub fn ntk_gram(net: &Network, samples: &[Vec<f64>]) -> Result<NtkGram> {
    if net.output_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "tangent kernels are defined for scalar outputs, network has {}",
            net.output_dim()
        )));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample list".into()));
    }
    let jac = samples
        .iter()
        .map(|x| param_gradient(net, x, &[1.0]))
        .collect::<Result<Vec<_>>>()?;
    let m = samples.len();
    let mut gram = DenseMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let v = dot(&jac[a], &jac[b]);
            gram.set(a, b, v);
            gram.set(b, a, v);
        }
    }
    Ok(NtkGram {
        samples: samples.to_vec(),
        gram,
    })
}
