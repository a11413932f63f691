//! Adaptive error-bounded hierarchical matrices.
//!
//! A block is first offered a truncated low-rank factorization. If no
//! storage-saving rank meets the tolerance the block is quadrisected at span
//! midpoints and each child is tried again, down to `min_block` or
//! `max_depth`, where it is stored exactly. Every low-rank leaf therefore has
//! Frobenius error at most `epsilon_tol`, and the global error is at most
//! `epsilon_tol · sqrt(n_r)` where `n_r` counts low-rank leaves.

mod build;
pub(crate) mod codec;
mod diagnostics;
mod ops;

use std::ops::Range;

pub use build::{build_adaptive, compress_block, rebuild_on_perturbed, BlockCompression};
pub use codec::{decode_hmatrix, encode_hmatrix, HMX1_MAGIC};
pub use diagnostics::{
    perturbed_condition, spectral_diagnostics, BoundCheck, PerturbationCheck, SpectralDiagnostics,
    BOUND_REL_TOL,
};
pub use ops::{
    depth_error_profile, error_bound, hmatvec, measured_error, rank_sum, reconstruct,
    storage_stats, CompressionReport, LevelError, MeasuredError,
};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const DEFAULT_MIN_BLOCK: usize = 16;
pub const DEFAULT_MAX_DEPTH: usize = 32;

/// Build parameters: per-block Frobenius tolerance and termination guards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildConfig {
    pub epsilon_tol: f64,
    pub min_block: usize,
    pub max_depth: usize,
}

impl BuildConfig {
    pub fn new(epsilon_tol: f64) -> Result<Self> {
        Self {
            epsilon_tol,
            min_block: DEFAULT_MIN_BLOCK,
            max_depth: DEFAULT_MAX_DEPTH,
        }
        .validated()
    }

    pub fn with_min_block(mut self, min_block: usize) -> Result<Self> {
        self.min_block = min_block;
        self.validated()
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Result<Self> {
        self.max_depth = max_depth;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.epsilon_tol > 0.0 && self.epsilon_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_tol must be positive and finite, got {}",
                self.epsilon_tol
            )));
        }
        if self.min_block < 2 {
            return Err(Error::InvalidArgument(format!(
                "min_block must be at least 2, got {}",
                self.min_block
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be positive".into()));
        }
        Ok(self)
    }
}

/// Low-rank block `U Vᵀ` with `U: m × k`, `V: n × k`, both stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactor {
    rows: usize,
    cols: usize,
    rank: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    /// `‖A_ij − U Vᵀ‖_F` measured against the block this factor was built from.
    pub local_error: f64,
}

impl LowRankFactor {
    pub(crate) fn new(rows: usize, cols: usize, rank: usize, u: Vec<f64>, v: Vec<f64>, local_error: f64) -> Result<Self> {
        if u.len() != rows * rank || v.len() != cols * rank {
            return Err(Error::Format(format!(
                "low-rank factor lengths {}/{} do not match {rows}x{cols} at rank {rank}",
                u.len(),
                v.len()
            )));
        }
        if rank > rows.min(cols) {
            return Err(Error::Format(format!("rank {rank} exceeds block {rows}x{cols}")));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) || !(local_error >= 0.0 && local_error.is_finite()) {
            return Err(Error::Format("non-finite low-rank factor".into()));
        }
        Ok(Self {
            rows,
            cols,
            rank,
            u,
            v,
            local_error,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Row-major `m × k` left factor.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Row-major `n × k` right factor.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn stored_scalars(&self) -> usize {
        self.rank * (self.rows + self.cols)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let k = self.rank;
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            let ui = &self.u[i * k..(i + 1) * k];
            let vj = &self.v[j * k..(j + 1) * k];
            ui.iter().zip(vj).map(|(a, b)| a * b).sum()
        })
    }
}

/// Contents of a block-tree node.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockKind {
    LowRank(LowRankFactor),
    /// Exact copy of the block.
    DenseLeaf(DenseMatrix),
    /// Quadrants in row-major order: top-left, top-right, bottom-left, bottom-right.
    Branch(Box<[BlockNode; 4]>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockNode {
    pub row_span: Range<usize>,
    pub col_span: Range<usize>,
    pub kind: BlockKind,
}

impl BlockNode {
    pub fn is_leaf(&self) -> bool {
        !matches!(self.kind, BlockKind::Branch(_))
    }

    pub fn children(&self) -> Option<&[BlockNode; 4]> {
        match &self.kind {
            BlockKind::Branch(c) => Some(c),
            _ => None,
        }
    }

    /// Preorder walk with node depth (root = 0).
    pub fn visit<'a>(&'a self, depth: usize, f: &mut impl FnMut(&'a BlockNode, usize)) {
        f(self, depth);
        if let BlockKind::Branch(children) = &self.kind {
            for c in children.iter() {
                c.visit(depth + 1, f);
            }
        }
    }
}

/// Hierarchical approximation of a dense matrix.
#[derive(Clone, Debug)]
pub struct HMatrix {
    root: BlockNode,
    rows: usize,
    cols: usize,
    tol: f64,
    n_r: usize,
    stored_scalars: usize,
    depth: usize,
    build_seconds: f64,
}

impl PartialEq for HMatrix {
    fn eq(&self, other: &Self) -> bool {
        // build time is a measurement, not part of the value
        self.rows == other.rows
            && self.cols == other.cols
            && self.tol.to_bits() == other.tol.to_bits()
            && self.root == other.root
    }
}

impl HMatrix {
    /// Wraps a block tree, recomputing the leaf statistics and checking that
    /// the tree tiles `rows × cols` exactly.
    pub fn from_root(root: BlockNode, rows: usize, cols: usize, tol: f64, build_seconds: f64) -> Result<Self> {
        if root.row_span != (0..rows) || root.col_span != (0..cols) {
            return Err(Error::Format("root spans do not cover the matrix".into()));
        }
        check_tiling(&root)?;
        let mut n_r = 0;
        let mut stored = 0;
        let mut depth = 0;
        root.visit(0, &mut |node, d| {
            depth = depth.max(d);
            match &node.kind {
                BlockKind::LowRank(f) => {
                    n_r += 1;
                    stored += f.stored_scalars();
                }
                BlockKind::DenseLeaf(m) => stored += m.len(),
                BlockKind::Branch(_) => {}
            }
        });
        Ok(Self {
            root,
            rows,
            cols,
            tol,
            n_r,
            stored_scalars: stored,
            depth,
            build_seconds,
        })
    }

    pub fn root(&self) -> &BlockNode {
        &self.root
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Tolerance the matrix was built with.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Number of low-rank leaves.
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn stored_scalars(&self) -> usize {
        self.stored_scalars
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn build_seconds(&self) -> f64 {
        self.build_seconds
    }

    pub fn compression_ratio(&self) -> f64 {
        self.stored_scalars as f64 / (self.rows * self.cols) as f64
    }

    pub fn leaves(&self) -> Vec<&BlockNode> {
        let mut out = Vec::new();
        self.root.visit(0, &mut |n, _| {
            if n.is_leaf() {
                out.push(n);
            }
        });
        out
    }
}

fn check_tiling(node: &BlockNode) -> Result<()> {
    let (m, n) = (node.row_span.len(), node.col_span.len());
    if m == 0 || n == 0 {
        return Err(Error::Format("empty block span".into()));
    }
    match &node.kind {
        BlockKind::LowRank(f) => {
            if f.rows() != m || f.cols() != n {
                return Err(Error::Format("low-rank factor does not match its span".into()));
            }
        }
        BlockKind::DenseLeaf(d) => {
            if d.shape() != (m, n) {
                return Err(Error::Format("dense leaf does not match its span".into()));
            }
        }
        BlockKind::Branch(children) => {
            let (rs, cs) = split_spans(&node.row_span, &node.col_span);
            for (idx, c) in children.iter().enumerate() {
                if c.row_span != rs[idx / 2] || c.col_span != cs[idx % 2] {
                    return Err(Error::Format("branch children do not tile the parent".into()));
                }
                check_tiling(c)?;
            }
        }
    }
    Ok(())
}

/// Midpoint split; odd spans give the extra index to the first half.
pub(crate) fn split_spans(rows: &Range<usize>, cols: &Range<usize>) -> ([Range<usize>; 2], [Range<usize>; 2]) {
    let rmid = rows.start + rows.len().div_ceil(2);
    let cmid = cols.start + cols.len().div_ceil(2);
    (
        [rows.start..rmid, rmid..rows.end],
        [cols.start..cmid, cmid..cols.end],
    )
}
