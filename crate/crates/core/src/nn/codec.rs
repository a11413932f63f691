//! `HMXN` network checkpoints: layer count, then per layer the weight shape,
//! a dense or `HMX1`-encoded weight, the bias and an activation tag.

use super::{Activation, Layer, LayerWeight, Network};
use crate::error::{Error, Result};
use crate::hmatrix::codec::{put_f64s, put_u64, read_hmatrix, Reader};
use crate::hmatrix::encode_hmatrix;
use crate::linalg::DenseMatrix;

pub const HMXN_MAGIC: &[u8; 4] = b"HMXN";

const KIND_DENSE: u8 = 0;
const KIND_HMATRIX: u8 = 1;
const ACT_IDENTITY: u8 = 0;
const ACT_TANH: u8 = 1;

pub fn encode_network(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(HMXN_MAGIC);
    put_u64(&mut out, net.layers().len() as u64);
    for l in net.layers() {
        let (m, n) = l.weight.shape();
        put_u64(&mut out, m as u64);
        put_u64(&mut out, n as u64);
        match &l.weight {
            LayerWeight::Dense(w) => {
                out.push(KIND_DENSE);
                put_f64s(&mut out, w.as_slice());
            }
            LayerWeight::Hierarchical(h) => {
                out.push(KIND_HMATRIX);
                let blob = encode_hmatrix(h);
                put_u64(&mut out, blob.len() as u64);
                out.extend_from_slice(&blob);
            }
        }
        put_f64s(&mut out, &l.bias);
        out.push(match l.activation {
            Activation::Identity => ACT_IDENTITY,
            Activation::Tanh => ACT_TANH,
        });
    }
    out
}

pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes);
    r.expect_magic(HMXN_MAGIC)?;
    let count = r.usize()?;
    if count == 0 || count > bytes.len() {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let m = r.usize()?;
        let n = r.usize()?;
        let weight = match r.u8()? {
            KIND_DENSE => {
                let data = r.f64s()?;
                LayerWeight::Dense(DenseMatrix::new(m, n, data).map_err(|e| Error::Format(e.to_string()))?)
            }
            KIND_HMATRIX => {
                let len = r.usize()?;
                let mut inner = Reader::new(r.take(len)?);
                let h = read_hmatrix(&mut inner)?;
                inner.finish()?;
                if h.shape() != (m, n) {
                    return Err(Error::Format("embedded H-matrix shape disagrees with layer header".into()));
                }
                LayerWeight::Hierarchical(h)
            }
            k => return Err(Error::Format(format!("unknown weight kind {k}"))),
        };
        let bias = r.f64s()?;
        let activation = match r.u8()? {
            ACT_IDENTITY => Activation::Identity,
            ACT_TANH => Activation::Tanh,
            a => return Err(Error::Format(format!("unknown activation tag {a}"))),
        };
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    r.finish()?;
    Network::new(layers).map_err(|e| Error::Format(e.to_string()))
}
