//! Feed-forward networks with dense or hierarchical weight matrices.
//!
//! Parameters are flattened layer by layer as the row-major weight followed
//! by the bias. Gradients are only defined for dense layers; compressed
//! layers are produced by projection and densified before differentiation.

mod codec;
mod compress;
mod ntk;
mod train;

pub use codec::{decode_network, encode_network, HMXN_MAGIC};
pub use compress::{compress_network, compress_network_with, layer_build_config, ntk_deviation, NtkDeviation, LAYER_MIN_BLOCK};
pub use ntk::{ntk_gram, NtkGram};
pub use train::{
    train_gd, train_projected, Objective, ProjectedRun, ProjectionEvent, RegressionObjective, TrainConfig, TrainRun,
};

use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::generate::rng;
use crate::hmatrix::{hmatvec, reconstruct, HMatrix};
use crate::linalg::{dot, matvec_dense, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerWeight {
    Dense(DenseMatrix),
    Hierarchical(HMatrix),
}

impl LayerWeight {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            LayerWeight::Dense(w) => w.shape(),
            LayerWeight::Hierarchical(h) => h.shape(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            LayerWeight::Dense(w) => w.clone(),
            LayerWeight::Hierarchical(h) => reconstruct(h),
        }
    }

    /// Scalars held by this weight's representation.
    pub fn stored_scalars(&self) -> usize {
        match self {
            LayerWeight::Dense(w) => w.len(),
            LayerWeight::Hierarchical(h) => h.stored_scalars(),
        }
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            LayerWeight::Dense(w) => matvec_dense(w, x),
            LayerWeight::Hierarchical(h) => hmatvec(h, x),
        }
    }
}

/// Affine map followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: LayerWeight,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn dense(weight: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Self {
        Self {
            weight: LayerWeight::Dense(weight),
            bias,
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape().1
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape().0
    }

    pub fn param_count(&self) -> usize {
        self.inputs() * self.outputs() + self.outputs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Checks that dimensions chain, biases fit, and the output layer is linear.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::InvalidArgument("output layer activation must be identity".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            check_len("layer bias", l.outputs(), l.bias.len())?;
            if l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite bias in layer {i}")));
            }
            if i > 0 {
                check_len("layer chaining", layers[i - 1].outputs(), l.inputs())?;
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Layer::outputs)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn is_dense(&self) -> bool {
        self.layers.iter().all(|l| matches!(l.weight, LayerWeight::Dense(_)))
    }

    /// Same network with every hierarchical weight reconstructed densely.
    pub fn densified(&self) -> Network {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer::dense(l.weight.to_dense(), l.bias.clone(), l.activation))
            .collect();
        Network { layers }
    }

    /// Flat parameter vector of a dense network.
    pub fn params(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.param_count());
        for (i, l) in self.layers.iter().enumerate() {
            match &l.weight {
                LayerWeight::Dense(w) => out.extend_from_slice(w.as_slice()),
                LayerWeight::Hierarchical(_) => return Err(hierarchical_layer(i)),
            }
            out.extend_from_slice(&l.bias);
        }
        Ok(out)
    }

    /// Dense network with the same architecture and the given parameters.
    pub fn with_params(&self, theta: &[f64]) -> Result<Network> {
        check_len("parameter vector", self.param_count(), theta.len())?;
        let mut off = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (m, n) = l.weight.shape();
            let w = DenseMatrix::new(m, n, theta[off..off + m * n].to_vec())?;
            off += m * n;
            let b = theta[off..off + m].to_vec();
            off += m;
            layers.push(Layer::dense(w, b, l.activation));
        }
        Network::new(layers)
    }
}

fn hierarchical_layer(i: usize) -> Error {
    Error::Unsupported(format!(
        "layer {i} holds a hierarchical weight; gradients and parameters are defined on dense layers only"
    ))
}

/// Dense network with `N(0, 1/fan_in)` weights, zero biases, tanh hidden
/// layers and a linear output layer.
pub fn init_network(sizes: &[usize], seed: u64) -> Result<Network> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!("need at least two positive layer sizes, got {sizes:?}")));
    }
    let mut rng = rng(seed);
    let last = sizes.len() - 2;
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive variance");
            let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            let act = if i == last { Activation::Identity } else { Activation::Tanh };
            Layer::dense(DenseMatrix::from_vec_unchecked(fan_out, fan_in, data), vec![0.0; fan_out], act)
        })
        .collect();
    Network::new(layers)
}

pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    check_len("network input", net.input_dim(), x.len())?;
    let mut a = x.to_vec();
    for l in net.layers() {
        let mut z = l.weight.apply(&a)?;
        for (zi, bi) in z.iter_mut().zip(&l.bias) {
            *zi = l.activation.apply(*zi + bi);
        }
        a = z;
    }
    Ok(a)
}

/// Reverse-mode gradient of `upstream · f(x)` with respect to all parameters.
pub fn param_gradient(net: &Network, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    check_len("network input", net.input_dim(), x.len())?;
    check_len("output cotangent", net.output_dim(), upstream.len())?;
    let mut weights = Vec::with_capacity(net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        match &l.weight {
            LayerWeight::Dense(w) => weights.push(w),
            LayerWeight::Hierarchical(_) => return Err(hierarchical_layer(i)),
        }
    }
    // activations[0] = x, activations[l + 1] = output of layer l
    let mut acts = Vec::with_capacity(weights.len() + 1);
    acts.push(x.to_vec());
    for (l, w) in net.layers().iter().zip(&weights) {
        let prev = acts.last().expect("nonempty");
        let a = (0..w.rows()).map(|i| l.activation.apply(dot(w.row(i), prev) + l.bias[i])).collect();
        acts.push(a);
    }

    let mut grad = vec![0.0; net.param_count()];
    let mut offsets = Vec::with_capacity(weights.len());
    let mut off = 0;
    for l in net.layers() {
        offsets.push(off);
        off += l.param_count();
    }
    let mut delta_a = upstream.to_vec();
    for li in (0..weights.len()).rev() {
        let (w, layer) = (weights[li], &net.layers()[li]);
        let (m, n) = w.shape();
        let out = &acts[li + 1];
        let input = &acts[li];
        let dz: Vec<f64> = delta_a
            .iter()
            .zip(out)
            .map(|(d, &a)| d * layer.activation.derivative_from_output(a))
            .collect();
        let g = &mut grad[offsets[li]..offsets[li] + m * n + m];
        for i in 0..m {
            let row = &mut g[i * n..(i + 1) * n];
            row.iter_mut().zip(input).for_each(|(gi, xi)| *gi = dz[i] * xi);
        }
        g[m * n..].copy_from_slice(&dz);
        if li > 0 {
            let mut next = vec![0.0; n];
            for (i, &d) in dz.iter().enumerate() {
                if d != 0.0 {
                    next.iter_mut().zip(w.row(i)).for_each(|(s, wij)| *s += d * wij);
                }
            }
            delta_a = next;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::random_vector;

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = init_network(&[1, 1], 5).unwrap();
        assert_eq!(a.param_count(), 2);
        assert_eq!(a, init_network(&[1, 1], 5).unwrap());
        let b = init_network(&[3, 8, 2], 1).unwrap();
        let c = init_network(&[3, 8, 2], 2).unwrap();
        assert_ne!(b.params().unwrap(), c.params().unwrap());
        assert_eq!(b.sizes(), vec![3, 8, 2]);
        assert_eq!(b.layers()[0].activation, Activation::Tanh);
        assert_eq!(b.layers()[1].activation, Activation::Identity);
        assert!(init_network(&[4], 0).is_err());
    }

    #[test]
    fn identity_and_zero_networks() {
        let id = Network::new(vec![Layer::dense(DenseMatrix::identity(3), vec![0.0; 3], Activation::Identity)]).unwrap();
        assert_eq!(forward(&id, &[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let z = Network::new(vec![
            Layer::dense(DenseMatrix::zeros(2, 2), vec![0.3, -0.1], Activation::Tanh),
            Layer::dense(DenseMatrix::zeros(1, 2), vec![0.7], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(forward(&z, &[5.0, 5.0]).unwrap(), vec![0.7]);
    }

    #[test]
    fn rejects_bad_architectures() {
        let tanh_out = vec![Layer::dense(DenseMatrix::identity(2), vec![0.0; 2], Activation::Tanh)];
        assert!(Network::new(tanh_out).is_err());
        let broken = vec![
            Layer::dense(DenseMatrix::zeros(3, 2), vec![0.0; 3], Activation::Tanh),
            Layer::dense(DenseMatrix::zeros(1, 2), vec![0.0], Activation::Identity),
        ];
        assert!(Network::new(broken).is_err());
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let w = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let net = Network::new(vec![Layer::dense(w, vec![0.5, -0.5], Activation::Identity)]).unwrap();
        let x = [0.1, -0.2, 0.3];
        let up = [2.0, -1.0];
        let g = param_gradient(&net, &x, &up).unwrap();
        let expected = [0.2, -0.4, 0.6, -0.1, 0.2, -0.3, 2.0, -1.0];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = param_gradient(&net, &x, &[0.0, 0.0]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let net = init_network(&[2, 6, 5, 1], 13).unwrap();
        let x = random_vector(2, 4);
        let g = param_gradient(&net, &x, &[1.0]).unwrap();
        let theta = net.params().unwrap();
        let h = 1e-5;
        for (k, &gk) in g.iter().enumerate() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fp = forward(&net.with_params(&tp).unwrap(), &x).unwrap()[0];
            let fm = forward(&net.with_params(&tm).unwrap(), &x).unwrap()[0];
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - gk).abs() <= 1e-5 * gk.abs().max(1e-3), "param {k}: {fd} vs {gk}");
        }
    }

    #[test]
    fn params_round_trip() {
        let net = init_network(&[3, 4, 1], 2).unwrap();
        let back = net.with_params(&net.params().unwrap()).unwrap();
        assert_eq!(back, net);
        assert!(net.with_params(&[0.0; 3]).is_err());
    }
}
