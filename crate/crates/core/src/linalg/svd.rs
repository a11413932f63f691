//! One-sided Jacobi singular value decomposition.
//!
//! Hestenes' method: orthogonalize the columns of `A` pairwise with plane
//! rotations, accumulating the rotations into `V`. The column norms at
//! convergence are the singular values. There is no random pivoting, so the
//! result depends only on the input bits.

use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, DenseMatrix};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(σ) Vᵀ` with `r = min(rows, cols)` columns in `U` and `V`.
#[derive(Clone, Debug)]
pub struct SvdFactorization {
    /// `m × r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative, length `r`.
    pub singular_values: Vec<f64>,
    /// `n × r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdFactorization {
    pub fn rank_capacity(&self) -> usize {
        self.singular_values.len()
    }

    /// `U_k diag(σ_k) V_kᵀ` from the leading `k` triplets.
    pub fn reconstruct(&self, k: usize) -> DenseMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let k = k.min(self.rank_capacity());
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            let urow = self.u.row(i);
            let orow = out.row_mut(i);
            for l in 0..k {
                let s = urow[l] * self.singular_values[l];
                if s == 0.0 {
                    continue;
                }
                for (j, o) in orow.iter_mut().enumerate() {
                    *o += s * self.v.get(j, l);
                }
            }
        }
        out
    }
}

/// Full thin SVD of a finite matrix.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactorization> {
    if let Some(idx) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: idx / a.cols(),
            col: idx % a.cols(),
            value: a.as_slice()[idx],
        });
    }
    if a.rows() >= a.cols() {
        Ok(jacobi_tall(a))
    } else {
        let t = jacobi_tall(&a.transpose());
        Ok(SvdFactorization {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

/// Smallest `k` with `sqrt(Σ_{i>k} σ_i²) ≤ epsilon`.
///
/// With this rule the Frobenius error of the rank-`k` truncation is exactly the
/// returned tail, so local errors can be read off the spectrum.
pub fn truncation_rank(singular_values: &[f64], epsilon: f64) -> usize {
    let tails = tail_norms(singular_values);
    tails
        .iter()
        .position(|&t| t <= epsilon)
        .unwrap_or(singular_values.len())
}

/// `tails[k] = sqrt(Σ_{i≥k} σ_i²)` for `k = 0..=len`; accumulated from the small end.
pub fn tail_norms(singular_values: &[f64]) -> Vec<f64> {
    let r = singular_values.len();
    let mut sq = vec![0.0; r + 1];
    for k in (0..r).rev() {
        sq[k] = sq[k + 1] + singular_values[k] * singular_values[k];
    }
    sq.into_iter().map(f64::sqrt).collect()
}

fn jacobi_tall(a: &DenseMatrix) -> SvdFactorization {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    // column-major working copy so each column is contiguous
    let mut g = vec![0.0; m * n];
    for i in 0..m {
        for (j, &v) in a.row(i).iter().enumerate() {
            g[j * m + i] = v;
        }
    }
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }
    let tol = (m as f64).sqrt() * f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (head, tail) = g.split_at_mut(q * m);
                let gp = &mut head[p * m..(p + 1) * m];
                let gq = &mut tail[..m];
                let alpha = dot(gp, gp);
                let beta = dot(gq, gq);
                let gamma = dot(gp, gq);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(gp, gq, c, s);
                let (vh, vt) = v.split_at_mut(q * n);
                rotate(&mut vh[p * n..(p + 1) * n], &mut vt[..n], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(&g[j * m..(j + 1) * m], &g[j * m..(j + 1) * m]).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut v_out = DenseMatrix::zeros(n, n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        for i in 0..n {
            v_out.set(i, dst, v[src * n + i]);
        }
        if s > f64::MIN_POSITIVE {
            u_cols.push(g[src * m..(src + 1) * m].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            missing.push(dst);
        }
    }
    complete_orthonormal(&mut u_cols, &missing, m);

    let mut u = DenseMatrix::zeros(m, n);
    for (j, col) in u_cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            u.set(i, j, x);
        }
    }
    SvdFactorization {
        u,
        singular_values: sigma,
        v: v_out,
    }
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the columns listed in `missing` with unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize], m: usize) {
    let mut candidate = 0usize;
    for &slot in missing {
        loop {
            assert!(candidate < m, "ran out of basis vectors during completion");
            let mut w = vec![0.0; m];
            w[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == slot || c.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let proj = dot(&w, c);
                    for (wi, ci) in w.iter_mut().zip(c) {
                        *wi -= proj * ci;
                    }
                }
            }
            let nrm = dot(&w, &w).sqrt();
            if nrm > 1e-8 {
                cols[slot] = w.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::random_dense;
    use crate::linalg::frobenius_norm;

    fn orthonormality_defect(q: &DenseMatrix) -> f64 {
        let qtq = q.transpose().matmul(q).unwrap();
        frobenius_norm(&qtq.sub(&DenseMatrix::identity(q.cols())).unwrap())
    }

    #[test]
    fn identity_zero_and_diagonal() {
        let s = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);

        let s = svd(&DenseMatrix::zeros(4, 2)).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        assert!(orthonormality_defect(&s.u) < 1e-12);

        let a = DenseMatrix::new(2, 2, vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        let s = svd(&a).unwrap();
        assert_eq!(s.singular_values, vec![4.0, 3.0]);
    }

    #[test]
    fn seeded_square_reconstructs() {
        let a = random_dense(8, 8, 11);
        let s = svd(&a).unwrap();
        // explicit U diag(σ) Vᵀ rebuild, independent of `reconstruct`
        let mut rebuilt = DenseMatrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0;
                for l in 0..8 {
                    acc += s.u.get(i, l) * s.singular_values[l] * s.v.get(j, l);
                }
                rebuilt.set(i, j, acc);
            }
        }
        let resid = frobenius_norm(&a.sub(&rebuilt).unwrap());
        assert!(resid <= 1e-10 * frobenius_norm(&a), "residual {resid}");
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn wide_matrix_uses_transpose() {
        let a = random_dense(3, 7, 5);
        let s = svd(&a).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (7, 3));
        let resid = frobenius_norm(&a.sub(&s.reconstruct(3)).unwrap());
        assert!(resid < 1e-12 * frobenius_norm(&a));
        assert!(orthonormality_defect(&s.v) < 1e-12);
    }

    #[test]
    fn rank_deficient_completes_u() {
        // two identical columns plus a zero column
        let a = DenseMatrix::from_fn(5, 3, |i, j| if j < 2 { (i + 1) as f64 } else { 0.0 });
        let s = svd(&a).unwrap();
        assert!(s.singular_values[1] < 1e-12 && s.singular_values[2] == 0.0);
        assert!(orthonormality_defect(&s.u) < 3e-8);
        assert!(orthonormality_defect(&s.v) < 3e-8);
    }

    #[test]
    fn deterministic_bits() {
        let a = random_dense(9, 6, 3);
        let s1 = svd(&a).unwrap();
        let s2 = svd(&a).unwrap();
        assert_eq!(s1.singular_values, s2.singular_values);
        assert_eq!(s1.u, s2.u);
        assert_eq!(s1.v, s2.v);
    }

    #[test]
    fn truncation_rank_small_cases() {
        assert_eq!(truncation_rank(&[4.0, 3.0, 0.0, 0.0], 0.0), 2);
        assert_eq!(truncation_rank(&[4.0, 3.0, 1.0], 1.0), 2);
        assert_eq!(truncation_rank(&[4.0, 3.0, 1.0], 0.0), 3);
        assert_eq!(truncation_rank(&[], 0.0), 0);
        assert_eq!(truncation_rank(&[2.0], 5.0), 0);
    }
}
