//! Comparison compressors: global truncated SVD, magnitude pruning and
//! uniform quantization, plus layerwise error propagation and tradeoff sweeps.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hmatrix::{build_adaptive, reconstruct};
use crate::linalg::{frobenius_norm, svd, tail_norms, truncation_rank, DenseMatrix};
use crate::nn::{forward, layer_build_config, Layer, LayerWeight, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    HMatrix,
    SvdGlobal,
    Prune,
    Quantize,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::HMatrix, Method::SvdGlobal, Method::Prune, Method::Quantize];

    pub fn name(self) -> &'static str {
        match self {
            Method::HMatrix => "hmatrix",
            Method::SvdGlobal => "svd_global",
            Method::Prune => "prune",
            Method::Quantize => "quantize",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// A compressor and its parameter: a tolerance for `hmatrix` and
/// `svd_global`, a sparsity in `[0, 1)` for `prune`, a bit width in `2..=16`
/// for `quantize`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressorSpec {
    pub method: Method,
    pub parameter: f64,
}

impl CompressorSpec {
    pub fn new(method: Method, parameter: f64) -> Result<Self> {
        let ok = match method {
            Method::HMatrix => parameter > 0.0 && parameter.is_finite(),
            Method::SvdGlobal => parameter >= 0.0 && parameter.is_finite(),
            Method::Prune => (0.0..1.0).contains(&parameter),
            Method::Quantize => parameter.fract() == 0.0 && (2.0..=16.0).contains(&parameter),
        };
        if ok {
            Ok(Self { method, parameter })
        } else {
            Err(Error::InvalidArgument(format!("parameter {parameter} out of range for {method}")))
        }
    }
}

/// Effect of one compressor on one matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineReport {
    /// Modeled stored scalars divided by `m·n`.
    pub compression_ratio: f64,
    /// `‖W − W'‖_F`.
    pub error: f64,
    /// Retained rank for the SVD compressor.
    pub rank: Option<usize>,
}

/// Single truncated SVD of the whole matrix at Frobenius tail `epsilon`.
pub fn svd_compress_global(w: &DenseMatrix, epsilon: f64) -> Result<(DenseMatrix, BaselineReport)> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad tolerance {epsilon}")));
    }
    let s = svd(w)?;
    let k = truncation_rank(&s.singular_values, epsilon);
    // No truncation: return the input itself rather than a rounded product.
    let approx = if k == s.singular_values.len() { w.clone() } else { s.reconstruct(k) };
    let (m, n) = w.shape();
    let report = BaselineReport {
        compression_ratio: (k * (m + n)) as f64 / (m * n) as f64,
        error: tail_norms(&s.singular_values)[k],
        rank: Some(k),
    };
    Ok((approx, report))
}

/// Zeroes the `⌊sparsity · m n⌋` entries of smallest magnitude; ties go to
/// the lower row-major index first.
pub fn prune_magnitude(w: &DenseMatrix, sparsity: f64) -> Result<(DenseMatrix, BaselineReport)> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidArgument(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    let total = w.len();
    let drop = ((sparsity * total as f64).floor() as usize).min(total);
    let data = w.as_slice();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| data[a].abs().total_cmp(&data[b].abs()).then(a.cmp(&b)));
    let mut out = data.to_vec();
    for &i in &order[..drop] {
        out[i] = 0.0;
    }
    let pruned = DenseMatrix::new(w.rows(), w.cols(), out)?;
    let error = frobenius_norm(&w.sub(&pruned)?);
    Ok((
        pruned,
        BaselineReport {
            compression_ratio: (total - drop) as f64 / total as f64,
            error,
            rank: None,
        },
    ))
}

/// Quantization step `max|w| / (2^(bits−1) − 1)`.
pub fn quantization_scale(w: &DenseMatrix, bits: u32) -> f64 {
    w.max_abs() / ((1u64 << (bits - 1)) - 1) as f64
}

/// Symmetric uniform quantization with round-half-to-even levels.
pub fn quantize_uniform(w: &DenseMatrix, bits: u32) -> Result<(DenseMatrix, BaselineReport)> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!("bit width must lie in 2..=16, got {bits}")));
    }
    let scale = quantization_scale(w, bits);
    let q: Vec<f64> = if scale == 0.0 {
        vec![0.0; w.len()]
    } else {
        w.as_slice().iter().map(|&x| (x / scale).round_ties_even() * scale).collect()
    };
    let qm = DenseMatrix::new(w.rows(), w.cols(), q)?;
    let error = frobenius_norm(&w.sub(&qm)?);
    Ok((
        qm,
        BaselineReport {
            compression_ratio: bits as f64 / 64.0,
            error,
            rank: None,
        },
    ))
}

/// Applies a compressor to one weight matrix; the H-matrix result is reconstructed densely.
pub fn compress_matrix(w: &DenseMatrix, spec: &CompressorSpec) -> Result<(DenseMatrix, BaselineReport)> {
    match spec.method {
        Method::HMatrix => {
            let h = build_adaptive(w, &layer_build_config(spec.parameter)?)?;
            let r = reconstruct(&h);
            let error = frobenius_norm(&w.sub(&r)?);
            Ok((
                r,
                BaselineReport {
                    compression_ratio: h.compression_ratio(),
                    error,
                    rank: None,
                },
            ))
        }
        Method::SvdGlobal => svd_compress_global(w, spec.parameter),
        Method::Prune => prune_magnitude(w, spec.parameter),
        Method::Quantize => quantize_uniform(w, spec.parameter as u32),
    }
}

/// Network with the first `count` layers compressed by `spec`, and the
/// network-level ratio `Σ stored / Σ dense` over those layers' weights.
pub fn compress_layers(net: &Network, spec: &CompressorSpec, count: usize) -> Result<(Network, f64)> {
    let mut layers = Vec::with_capacity(net.layers().len());
    let mut stored = 0.0;
    let mut dense = 0.0;
    for (i, l) in net.layers().iter().enumerate() {
        let LayerWeight::Dense(w) = &l.weight else {
            return Err(Error::Unsupported(format!("layer {i} is not dense")));
        };
        if i < count {
            let (c, report) = compress_matrix(w, spec)?;
            stored += report.compression_ratio * w.len() as f64;
            dense += w.len() as f64;
            layers.push(Layer::dense(c, l.bias.clone(), l.activation));
        } else {
            layers.push(l.clone());
        }
    }
    let ratio = if dense > 0.0 { stored / dense } else { 1.0 };
    Ok((Network::new(layers)?, ratio))
}

/// Cumulative error after compressing layers `1..=layer`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationRecord {
    pub layer: usize,
    /// `‖F(X) − F̃(X)‖_F / ‖F(X)‖_F` over the probe batch.
    pub cumulative_error: f64,
    pub method: Method,
    pub parameter: f64,
}

fn batch_outputs(net: &Network, probe: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for x in probe {
        out.extend(forward(net, x)?);
    }
    Ok(out)
}

/// Relative output error on `probe` as layers are compressed one more at a time.
pub fn error_propagation(net: &Network, spec: &CompressorSpec, probe: &[Vec<f64>]) -> Result<Vec<PropagationRecord>> {
    if probe.is_empty() {
        return Err(Error::InvalidArgument("empty probe batch".into()));
    }
    let reference = batch_outputs(net, probe)?;
    let ref_norm = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    (1..=net.layers().len())
        .map(|layer| {
            let (c, _) = compress_layers(net, spec, layer)?;
            let out = batch_outputs(&c, probe)?;
            let diff = out.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            Ok(PropagationRecord {
                layer,
                cumulative_error: if ref_norm > 0.0 { diff / ref_norm } else { diff },
                method: spec.method,
                parameter: spec.parameter,
            })
        })
        .collect()
}

/// One row of a tradeoff sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeoffRow {
    pub method: Method,
    pub parameter: f64,
    pub compression_ratio: f64,
    pub metric: f64,
}

/// Compresses every layer with each spec and scores the result with `evaluate`.
pub fn tradeoff_sweep(
    net: &Network,
    evaluate: &dyn Fn(&Network) -> Result<f64>,
    specs: &[CompressorSpec],
) -> Result<Vec<TradeoffRow>> {
    specs
        .iter()
        .map(|spec| {
            let (c, ratio) = compress_layers(net, spec, net.layers().len())?;
            Ok(TradeoffRow {
                method: spec.method,
                parameter: spec.parameter,
                compression_ratio: ratio,
                metric: evaluate(&c)?,
            })
        })
        .collect()
}
