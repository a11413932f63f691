use super::build::max_saving_rank;
use super::{BlockKind, BlockNode, HMatrix};
use crate::error::{check_len, Result};
use crate::linalg::{axpy, dot, svd, tail_norms, DenseMatrix};

/// `y = H x`; low-rank leaves apply `U (Vᵀ x)`.
pub fn hmatvec(h: &HMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_len("hmatvec input", h.cols(), x.len())?;
    let mut y = vec![0.0; h.rows()];
    let mut tmp = Vec::new();
    apply(h.root(), x, &mut y, &mut tmp);
    Ok(y)
}

fn apply(node: &BlockNode, x: &[f64], y: &mut [f64], tmp: &mut Vec<f64>) {
    let xs = &x[node.col_span.clone()];
    let ys = &mut y[node.row_span.clone()];
    match &node.kind {
        BlockKind::Branch(children) => {
            for c in children.iter() {
                apply(c, x, y, tmp);
            }
        }
        BlockKind::DenseLeaf(d) => {
            for (i, yi) in ys.iter_mut().enumerate() {
                *yi += dot(d.row(i), xs);
            }
        }
        BlockKind::LowRank(f) => {
            let k = f.rank();
            if k == 0 {
                return;
            }
            tmp.clear();
            tmp.resize(k, 0.0);
            for (j, &xj) in xs.iter().enumerate() {
                axpy(xj, &f.v()[j * k..(j + 1) * k], tmp);
            }
            for (i, yi) in ys.iter_mut().enumerate() {
                *yi += dot(&f.u()[i * k..(i + 1) * k], tmp);
            }
        }
    }
}

/// Dense assembly of all leaves.
pub fn reconstruct(h: &HMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(h.rows(), h.cols());
    h.root().visit(0, &mut |node, _| match &node.kind {
        BlockKind::DenseLeaf(d) => out.set_block(node.row_span.start, node.col_span.start, d),
        BlockKind::LowRank(f) => out.set_block(node.row_span.start, node.col_span.start, &f.to_dense()),
        BlockKind::Branch(_) => {}
    });
    out
}

/// A priori global bound `tol · sqrt(n_r)`.
pub fn error_bound(h: &HMatrix) -> f64 {
    h.tol() * (h.n_r() as f64).sqrt()
}

/// Global and per-leaf errors of an approximation against its source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasuredError {
    /// `‖A − H‖_F`.
    pub global: f64,
    /// `Σ ‖A_i − H_i‖_F` over leaves.
    pub leaf_sum: f64,
    pub max_leaf: f64,
}

impl MeasuredError {
    /// Triangle inequality `global ≤ leaf_sum`, with room for rounding.
    pub fn triangle_holds(&self) -> bool {
        self.global <= self.leaf_sum * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

/// Errors of `h` against `a`, recomputed leaf by leaf.
pub fn measured_error(h: &HMatrix, a: &DenseMatrix) -> Result<MeasuredError> {
    check_len("measured_error rows", h.rows(), a.rows())?;
    check_len("measured_error cols", h.cols(), a.cols())?;
    let mut sq = 0.0;
    let mut leaf_sum = 0.0;
    let mut max_leaf: f64 = 0.0;
    for leaf in h.leaves() {
        let e2 = leaf_error_sq(leaf, a);
        sq += e2;
        leaf_sum += e2.sqrt();
        max_leaf = max_leaf.max(e2.sqrt());
    }
    Ok(MeasuredError {
        global: sq.sqrt(),
        leaf_sum,
        max_leaf,
    })
}

fn leaf_error_sq(node: &BlockNode, a: &DenseMatrix) -> f64 {
    let mut acc = 0.0;
    match &node.kind {
        BlockKind::DenseLeaf(d) => {
            for (li, i) in node.row_span.clone().enumerate() {
                let src = &a.row(i)[node.col_span.clone()];
                acc += src.iter().zip(d.row(li)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
        }
        BlockKind::LowRank(f) => {
            let k = f.rank();
            for (li, i) in node.row_span.clone().enumerate() {
                let ui = &f.u()[li * k..(li + 1) * k];
                for (lj, j) in node.col_span.clone().enumerate() {
                    let d = a.get(i, j) - dot(ui, &f.v()[lj * k..(lj + 1) * k]);
                    acc += d * d;
                }
            }
        }
        BlockKind::Branch(_) => {}
    }
    acc
}

/// Storage and accuracy summary of a build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionReport {
    pub rows: usize,
    pub cols: usize,
    pub stored_scalars: usize,
    pub compression_ratio: f64,
    pub measured_error: f64,
    pub error_bound: f64,
    pub n_r: usize,
    pub dense_leaves: usize,
    pub depth: usize,
    pub rank_sum: usize,
    pub build_time: f64,
}

pub fn storage_stats(h: &HMatrix, a: &DenseMatrix) -> Result<CompressionReport> {
    let err = measured_error(h, a)?;
    let dense_leaves = h.leaves().iter().filter(|n| matches!(n.kind, BlockKind::DenseLeaf(_))).count();
    Ok(CompressionReport {
        rows: h.rows(),
        cols: h.cols(),
        stored_scalars: h.stored_scalars(),
        compression_ratio: h.compression_ratio(),
        measured_error: err.global,
        error_bound: error_bound(h),
        n_r: h.n_r(),
        dense_leaves,
        depth: h.depth(),
        rank_sum: rank_sum(h),
        build_time: h.build_seconds(),
    })
}

/// `Σ rank` over leaves; dense leaves count `min(m, n)`.
pub fn rank_sum(h: &HMatrix) -> usize {
    h.leaves()
        .iter()
        .map(|n| match &n.kind {
            BlockKind::LowRank(f) => f.rank(),
            _ => n.row_span.len().min(n.col_span.len()),
        })
        .sum()
}

/// Error summary for one tree level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelError {
    pub level: usize,
    /// Nodes of any kind at this level.
    pub blocks: usize,
    pub low_rank_leaves: usize,
    /// Largest recomputed leaf error at this level (dense leaves count 0).
    pub max_leaf_error: f64,
    /// Largest error any block at this level would incur as a single
    /// storage-saving factor: the recomputed leaf error for low-rank leaves,
    /// the SVD tail at the largest saving rank for branches and dense leaves.
    pub max_block_error: f64,
}

/// Per-level error maxima of `h` against `a`, root level first.
pub fn depth_error_profile(h: &HMatrix, a: &DenseMatrix) -> Result<Vec<LevelError>> {
    check_len("profile rows", h.rows(), a.rows())?;
    check_len("profile cols", h.cols(), a.cols())?;
    let mut levels: Vec<LevelError> = (0..=h.depth())
        .map(|level| LevelError {
            level,
            blocks: 0,
            low_rank_leaves: 0,
            max_leaf_error: 0.0,
            max_block_error: 0.0,
        })
        .collect();
    let mut nodes = Vec::new();
    h.root().visit(0, &mut |n, d| nodes.push((n, d)));
    for (node, d) in nodes {
        let lvl = &mut levels[d];
        lvl.blocks += 1;
        let block_err = match &node.kind {
            BlockKind::LowRank(_) => {
                lvl.low_rank_leaves += 1;
                let e = leaf_error_sq(node, a).sqrt();
                lvl.max_leaf_error = lvl.max_leaf_error.max(e);
                e
            }
            _ => {
                let (m, n) = (node.row_span.len(), node.col_span.len());
                let s = svd(&a.block(node.row_span.clone(), node.col_span.clone()))?;
                tail_norms(&s.singular_values)[max_saving_rank(m, n)]
            }
        };
        lvl.max_block_error = lvl.max_block_error.max(block_err);
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_matrix, random_vector, MatrixKind};
    use crate::hmatrix::{build_adaptive, BuildConfig};
    use crate::linalg::{frobenius_norm, matvec_dense};

    fn outer(u: &[f64], v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    #[test]
    fn identity_build_is_exact() {
        let a = DenseMatrix::identity(64);
        let h = build_adaptive(&a, &BuildConfig::new(1e-6).unwrap()).unwrap();
        assert_eq!(reconstruct(&h), a);
        assert_eq!(measured_error(&h, &a).unwrap().global, 0.0);
        // the zero off-diagonal quadrants are rank-0 leaves
        let c = h.root().children().expect("identity recurses");
        assert!(matches!(&c[1].kind, BlockKind::LowRank(f) if f.rank() == 0));
        assert!(matches!(&c[2].kind, BlockKind::LowRank(f) if f.rank() == 0));
        let x = random_vector(64, 1);
        let y = hmatvec(&h, &x).unwrap();
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn rank_one_is_single_root_leaf() {
        let u = random_vector(128, 2);
        let v = random_vector(128, 3);
        let a = outer(&u, &v);
        let h = build_adaptive(&a, &BuildConfig::new(1e-8).unwrap()).unwrap();
        assert!(matches!(&h.root().kind, BlockKind::LowRank(f) if f.rank() == 1));
        assert_eq!(h.n_r(), 1);
        assert_eq!(h.compression_ratio(), 256.0 / 16384.0);
        assert_eq!(rank_sum(&h), 1);
        let x = random_vector(128, 4);
        let vx = dot(&v, &x);
        let y = hmatvec(&h, &x).unwrap();
        for (yi, ui) in y.iter().zip(&u) {
            assert!((yi - ui * vx).abs() <= 1e-10 * (ui * vx).abs().max(1.0));
        }
        let err = measured_error(&h, &a).unwrap();
        let BlockKind::LowRank(f) = &h.root().kind else { unreachable!() };
        assert!((err.global - f.local_error).abs() <= 1e-12 + 1e-8 * f.local_error);
    }

    #[test]
    fn kernel_matrix_bound_and_matvec() {
        let a = generate_matrix(MatrixKind::KernelBand, 256, 0).unwrap();
        let h = build_adaptive(&a, &BuildConfig::new(1e-5).unwrap()).unwrap();
        let err = measured_error(&h, &a).unwrap();
        assert!(err.global <= error_bound(&h) + 1e-9 * frobenius_norm(&a));
        assert!(err.triangle_holds());
        let x = random_vector(256, 7);
        let y = hmatvec(&h, &x).unwrap();
        let yd = matvec_dense(&a, &x).unwrap();
        let rel = y.iter().zip(&yd).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
            / yd.iter().map(|q| q * q).sum::<f64>().sqrt();
        assert!(rel < 1e-4, "{rel}");
        // regression fixture for this configuration
        assert!(h.n_r() > 0 && h.compression_ratio() < 1.0);
    }

    #[test]
    fn column_probe_matches_reconstruct() {
        let a = generate_matrix(MatrixKind::KernelBand, 70, 0).unwrap();
        let h = build_adaptive(&a, &BuildConfig::new(1e-3).unwrap().with_min_block(8).unwrap()).unwrap();
        let r = reconstruct(&h);
        for j in 0..70 {
            let mut e = vec![0.0; 70];
            e[j] = 1.0;
            let col = hmatvec(&h, &e).unwrap();
            for i in 0..70 {
                assert!((col[i] - r.get(i, j)).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn error_bound_arithmetic() {
        let a = DenseMatrix::identity(16);
        let h = build_adaptive(&a, &BuildConfig::new(1e-3).unwrap()).unwrap();
        // 16x16 cannot be split at min_block 16 and identity is full rank
        assert_eq!(h.n_r(), 0);
        assert_eq!(error_bound(&h), 0.0);
        let s = storage_stats(&h, &a).unwrap();
        assert_eq!(s.compression_ratio, 1.0);
        assert_eq!(s.dense_leaves, 1);
        assert_eq!(rank_sum(&h), 16);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = DenseMatrix::identity(8);
        let h = build_adaptive(&a, &BuildConfig::new(1e-3).unwrap()).unwrap();
        assert!(hmatvec(&h, &[1.0; 7]).is_err());
        assert!(measured_error(&h, &DenseMatrix::identity(9)).is_err());
    }

    #[test]
    fn profile_shapes() {
        let a = outer(&random_vector(32, 1), &random_vector(32, 2));
        let h = build_adaptive(&a, &BuildConfig::new(1e-6).unwrap()).unwrap();
        let p = depth_error_profile(&h, &a).unwrap();
        assert_eq!(p.len(), 1);
        let a = DenseMatrix::identity(64);
        let h = build_adaptive(&a, &BuildConfig::new(1e-6).unwrap()).unwrap();
        let p = depth_error_profile(&h, &a).unwrap();
        assert!(p.iter().all(|l| l.max_leaf_error == 0.0));
    }
}
