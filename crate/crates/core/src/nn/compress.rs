use super::{ntk_gram, Layer, LayerWeight, Network};
use crate::error::{Error, Result};
use crate::hmatrix::{build_adaptive, storage_stats, BuildConfig, CompressionReport};
use crate::linalg::frobenius_norm;

/// Leaf-size floor for weight matrices; layer widths are far below the
/// default matrix floor.
pub const LAYER_MIN_BLOCK: usize = 4;

pub fn layer_build_config(epsilon_tol: f64) -> Result<BuildConfig> {
    BuildConfig::new(epsilon_tol)?.with_min_block(LAYER_MIN_BLOCK)
}

/// Replaces every weight by its adaptive H-matrix at `epsilon_tol`.
pub fn compress_network(net: &Network, epsilon_tol: f64) -> Result<(Network, Vec<CompressionReport>)> {
    compress_network_with(net, &layer_build_config(epsilon_tol)?)
}

pub fn compress_network_with(net: &Network, cfg: &BuildConfig) -> Result<(Network, Vec<CompressionReport>)> {
    let mut layers = Vec::with_capacity(net.layers().len());
    let mut reports = Vec::with_capacity(net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        let LayerWeight::Dense(w) = &l.weight else {
            return Err(Error::Unsupported(format!("layer {i} is already compressed")));
        };
        let h = build_adaptive(w, cfg)?;
        reports.push(storage_stats(&h, w)?);
        layers.push(Layer {
            weight: LayerWeight::Hierarchical(h),
            bias: l.bias.clone(),
            activation: l.activation,
        });
    }
    Ok((Network::new(layers)?, reports))
}

/// Kernel deviation after compression at one tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct NtkDeviation {
    pub epsilon: f64,
    /// `‖Θ − Θ_H‖_F`.
    pub deviation: f64,
    /// `‖Θ − Θ_H‖_F / ‖Θ‖_F`.
    pub relative: f64,
    /// `‖W_k − H(W_k)‖_F` per layer.
    pub layer_errors: Vec<f64>,
}

/// Compares the tangent kernel of `net` with that of its compressed,
/// densified counterpart for every tolerance in `ladder`.
pub fn ntk_deviation(net: &Network, samples: &[Vec<f64>], ladder: &[f64]) -> Result<Vec<NtkDeviation>> {
    let base = ntk_gram(net, samples)?;
    let base_norm = frobenius_norm(&base.gram);
    ladder
        .iter()
        .map(|&eps| {
            let (compressed, reports) = compress_network(net, eps)?;
            let theta_h = ntk_gram(&compressed.densified(), samples)?;
            let deviation = frobenius_norm(&base.gram.sub(&theta_h.gram)?);
            Ok(NtkDeviation {
                epsilon: eps,
                deviation,
                relative: if base_norm > 0.0 { deviation / base_norm } else { 0.0 },
                layer_errors: reports.iter().map(|r| r.measured_error).collect(),
            })
        })
        .collect()
}
