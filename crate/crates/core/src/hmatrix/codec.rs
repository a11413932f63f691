//! `HMX1` binary container: little-endian header and a preorder node list.

use std::ops::Range;

use super::{BlockKind, BlockNode, HMatrix, LowRankFactor};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const HMX1_MAGIC: &[u8; 4] = b"HMX1";

const TAG_BRANCH: u8 = 0;
const TAG_LOW_RANK: u8 = 1;
const TAG_DENSE: u8 = 2;

pub fn encode_hmatrix(h: &HMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * h.stored_scalars() + 64);
    out.extend_from_slice(HMX1_MAGIC);
    put_u64(&mut out, h.rows() as u64);
    put_u64(&mut out, h.cols() as u64);
    out.extend_from_slice(&h.tol().to_le_bytes());
    h.root().visit(0, &mut |node, _| {
        let tag = match &node.kind {
            BlockKind::Branch(_) => TAG_BRANCH,
            BlockKind::LowRank(_) => TAG_LOW_RANK,
            BlockKind::DenseLeaf(_) => TAG_DENSE,
        };
        out.push(tag);
        for v in [node.row_span.start, node.row_span.end, node.col_span.start, node.col_span.end] {
            put_u64(&mut out, v as u64);
        }
        match &node.kind {
            BlockKind::Branch(_) => {}
            BlockKind::LowRank(f) => {
                out.extend_from_slice(&f.local_error.to_le_bytes());
                put_u64(&mut out, f.rank() as u64);
                put_f64s(&mut out, f.u());
                put_f64s(&mut out, f.v());
            }
            BlockKind::DenseLeaf(d) => put_f64s(&mut out, d.as_slice()),
        }
    });
    out
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    put_u64(out, xs.len() as u64);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Byte cursor shared by the binary decoders.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("size {v} out of range")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Format(format!("array length {n} exceeds remaining data")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_hmatrix(bytes: &[u8]) -> Result<HMatrix> {
    let mut r = Reader::new(bytes);
    let h = read_hmatrix(&mut r)?;
    r.finish()?;
    Ok(h)
}

pub(crate) fn read_hmatrix(r: &mut Reader<'_>) -> Result<HMatrix> {
    r.expect_magic(HMX1_MAGIC)?;
    let rows = r.usize()?;
    let cols = r.usize()?;
    let tol = r.f64()?;
    let root = read_node(r, 0)?;
    HMatrix::from_root(root, rows, cols, tol, 0.0)
}

const MAX_DECODE_DEPTH: usize = 128;

fn read_node(r: &mut Reader<'_>, depth: usize) -> Result<BlockNode> {
    if depth > MAX_DECODE_DEPTH {
        return Err(Error::Format("block tree too deep".into()));
    }
    let tag = r.u8()?;
    let span = |r: &mut Reader<'_>| -> Result<Range<usize>> {
        let (a, b) = (r.usize()?, r.usize()?);
        if a > b {
            return Err(Error::Format(format!("inverted span {a}..{b}")));
        }
        Ok(a..b)
    };
    let row_span = span(r)?;
    let col_span = span(r)?;
    let (m, n) = (row_span.len(), col_span.len());
    let kind = match tag {
        TAG_BRANCH => BlockKind::Branch(Box::new([
            read_node(r, depth + 1)?,
            read_node(r, depth + 1)?,
            read_node(r, depth + 1)?,
            read_node(r, depth + 1)?,
        ])),
        TAG_LOW_RANK => {
            let err = r.f64()?;
            let k = r.usize()?;
            let u = r.f64s()?;
            let v = r.f64s()?;
            BlockKind::LowRank(LowRankFactor::new(m, n, k, u, v, err)?)
        }
        TAG_DENSE => {
            let data = r.f64s()?;
            if m == 0 || n == 0 {
                return Err(Error::Format("empty dense leaf".into()));
            }
            BlockKind::DenseLeaf(DenseMatrix::new(m, n, data).map_err(|e| Error::Format(e.to_string()))?)
        }
        t => return Err(Error::Format(format!("unknown node tag {t}"))),
    };
    Ok(BlockNode {
        row_span,
        col_span,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_matrix, MatrixKind};
    use crate::hmatrix::{build_adaptive, BuildConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let a = generate_matrix(MatrixKind::KernelBand, 96, 0).unwrap();
        let h = build_adaptive(&a, &BuildConfig::new(1e-4).unwrap()).unwrap();
        let bytes = encode_hmatrix(&h);
        assert_eq!(&bytes[..4], b"HMX1");
        let back = decode_hmatrix(&bytes).unwrap();
        assert_eq!(back, h);
        assert_eq!(encode_hmatrix(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let h = build_adaptive(&DenseMatrix::identity(40), &BuildConfig::new(1e-4).unwrap()).unwrap();
        let bytes = encode_hmatrix(&h);
        assert!(decode_hmatrix(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_hmatrix(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_hmatrix(&extra).is_err());
        let mut tag = bytes;
        tag[28] = 9;
        assert!(decode_hmatrix(&tag).is_err());
    }
}
