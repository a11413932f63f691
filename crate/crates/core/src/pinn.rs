//! One-dimensional Poisson problem `u'' = f` solved by a physics-informed network.
//!
//! Input derivatives are propagated in forward mode as `(u, u', u'')` bundles;
//! the parameter gradient of the residual loss is the hand-written reverse
//! pass through that propagation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::nn::{
    compress_network, forward, init_network, train_projected, Activation, LayerWeight, Network, Objective,
    ProjectionEvent, TrainConfig,
};

/// Boundary penalty weight of the built-in instance.
pub const DEFAULT_BOUNDARY_WEIGHT: f64 = 10.0;
/// Collocation points of the built-in instance.
pub const DEFAULT_COLLOCATION: usize = 64;
/// Evaluation grid for solution errors.
pub const ERROR_GRID: usize = 512;

/// `u'' = f` on `[a, b]` with Dirichlet data, enforced by penalty.
#[derive(Clone, Debug)]
pub struct PoissonProblem {
    pub forcing: fn(f64) -> f64,
    pub exact: Option<fn(f64) -> f64>,
    pub domain: (f64, f64),
    pub boundary: (f64, f64),
    pub collocation: Vec<f64>,
    pub boundary_weight: f64,
}

fn sine_forcing(x: f64) -> f64 {
    -PI * PI * (PI * x).sin()
}

fn sine_solution(x: f64) -> f64 {
    (PI * x).sin()
}

impl PoissonProblem {
    pub fn new(
        forcing: fn(f64) -> f64,
        exact: Option<fn(f64) -> f64>,
        domain: (f64, f64),
        boundary: (f64, f64),
        collocation: Vec<f64>,
        boundary_weight: f64,
    ) -> Result<Self> {
        let (a, b) = domain;
        if !(a < b) {
            return Err(Error::InvalidArgument(format!("empty domain [{a}, {b}]")));
        }
        if collocation.is_empty() || collocation.iter().any(|&x| !(x > a && x < b)) {
            return Err(Error::InvalidArgument("collocation points must lie strictly inside the domain".into()));
        }
        if collocation.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("collocation points must be strictly increasing".into()));
        }
        if !(boundary_weight > 0.0 && boundary_weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad boundary weight {boundary_weight}")));
        }
        Ok(Self {
            forcing,
            exact,
            domain,
            boundary,
            collocation,
            boundary_weight,
        })
    }

    /// `f(x) = −π² sin(πx)` on `[0, 1]`, zero boundary values, exact solution
    /// `sin(πx)`, collocation at `i / (n + 1)`.
    pub fn sine(n_points: usize) -> Self {
        let pts = (1..=n_points).map(|i| i as f64 / (n_points + 1) as f64).collect();
        Self::new(sine_forcing, Some(sine_solution), (0.0, 1.0), (0.0, 0.0), pts, DEFAULT_BOUNDARY_WEIGHT)
            .expect("built-in problem is valid")
    }
}

/// Network output and its first two derivatives in the scalar input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeBundle {
    pub u: f64,
    pub du_dx: f64,
    pub d2u_dx2: f64,
}

fn dense_scalar_weights(net: &Network) -> Result<Vec<DenseMatrix>> {
    if net.input_dim() != 1 || net.output_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "input derivatives need a scalar-in, scalar-out network, got {} -> {}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(net
        .layers()
        .iter()
        .map(|l| match &l.weight {
            LayerWeight::Dense(w) => w.clone(),
            LayerWeight::Hierarchical(h) => crate::hmatrix::reconstruct(h),
        })
        .collect())
}

/// Per-layer forward-mode state kept for the reverse pass.
struct Tape {
    /// Layer inputs `(a, a', a'')`.
    inputs: Vec<[Vec<f64>; 3]>,
    /// Pre-activation derivatives `(z', z'')` and activation values.
    dz: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    out: DerivativeBundle,
}

fn propagate(net: &Network, weights: &[DenseMatrix], x: f64) -> Tape {
    let mut a = vec![x];
    let mut da = vec![1.0];
    let mut d2a = vec![0.0];
    let mut tape = Tape {
        inputs: Vec::with_capacity(weights.len()),
        dz: Vec::with_capacity(weights.len()),
        t: Vec::with_capacity(weights.len()),
        out: DerivativeBundle {
            u: 0.0,
            du_dx: 0.0,
            d2u_dx2: 0.0,
        },
    };
    for (l, w) in net.layers().iter().zip(weights) {
        let m = w.rows();
        let mut na = vec![0.0; m];
        let mut nda = vec![0.0; m];
        let mut nd2a = vec![0.0; m];
        let mut dzv = vec![0.0; m];
        let mut tv = vec![0.0; m];
        for i in 0..m {
            let row = w.row(i);
            let z = dot(row, &a) + l.bias[i];
            let dz = dot(row, &da);
            let d2z = dot(row, &d2a);
            dzv[i] = dz;
            match l.activation {
                Activation::Identity => {
                    na[i] = z;
                    nda[i] = dz;
                    nd2a[i] = d2z;
                    tv[i] = z;
                }
                Activation::Tanh => {
                    let t = z.tanh();
                    let s = 1.0 - t * t;
                    let q = -2.0 * t * s;
                    na[i] = t;
                    nda[i] = s * dz;
                    nd2a[i] = q * dz * dz + s * d2z;
                    tv[i] = t;
                }
            }
        }
        tape.inputs.push([a, da, d2a]);
        tape.dz.push(dzv);
        tape.t.push(tv);
        a = na;
        da = nda;
        d2a = nd2a;
    }
    tape.out = DerivativeBundle {
        u: a[0],
        du_dx: da[0],
        d2u_dx2: d2a[0],
    };
    tape
}

/// Reverse pass of [`propagate`]: accumulates into `grad` the gradient of
/// `bar[0]·u + bar[1]·u' + bar[2]·u''`.
fn backpropagate(net: &Network, weights: &[DenseMatrix], tape: &Tape, bar: [f64; 3], grad: &mut [f64]) {
    let mut offsets = Vec::with_capacity(weights.len());
    let mut off = 0;
    for l in net.layers() {
        offsets.push(off);
        off += l.param_count();
    }
    let mut abar = vec![bar[0]];
    let mut dabar = vec![bar[1]];
    let mut d2abar = vec![bar[2]];
    for li in (0..weights.len()).rev() {
        let w = &weights[li];
        let (m, n) = w.shape();
        let act = net.layers()[li].activation;
        let [a, da, d2a] = &tape.inputs[li];
        let mut zbar = vec![0.0; m];
        let mut dzbar = vec![0.0; m];
        let mut d2zbar = vec![0.0; m];
        for i in 0..m {
            match act {
                Activation::Identity => {
                    zbar[i] = abar[i];
                    dzbar[i] = dabar[i];
                    d2zbar[i] = d2abar[i];
                }
                Activation::Tanh => {
                    let t = tape.t[li][i];
                    let dz = tape.dz[li][i];
                    let s = 1.0 - t * t;
                    let q = -2.0 * t * s;
                    let q1 = -2.0 * s * s + 4.0 * t * t * s;
                    let d2z = dot(w.row(i), d2a);
                    zbar[i] = abar[i] * s + dabar[i] * q * dz + d2abar[i] * (q1 * dz * dz + q * d2z);
                    dzbar[i] = dabar[i] * s + d2abar[i] * 2.0 * q * dz;
                    d2zbar[i] = d2abar[i] * s;
                }
            }
        }
        let g = &mut grad[offsets[li]..offsets[li] + m * n + m];
        for i in 0..m {
            let row = &mut g[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += zbar[i] * a[j] + dzbar[i] * da[j] + d2zbar[i] * d2a[j];
            }
            g[m * n + i] += zbar[i];
        }
        if li > 0 {
            let mut na = vec![0.0; n];
            let mut nda = vec![0.0; n];
            let mut nd2a = vec![0.0; n];
            for i in 0..m {
                for (j, &wij) in w.row(i).iter().enumerate() {
                    na[j] += wij * zbar[i];
                    nda[j] += wij * dzbar[i];
                    nd2a[j] += wij * d2zbar[i];
                }
            }
            abar = na;
            dabar = nda;
            d2abar = nd2a;
        }
    }
}

/// Exact `(u, u', u'')` at `x`.
pub fn forward_with_input_derivatives(net: &Network, x: f64) -> Result<DerivativeBundle> {
    let weights = dense_scalar_weights(net)?;
    Ok(propagate(net, &weights, x).out)
}

/// Mean squared residual over collocation points plus the weighted boundary penalty.
pub fn physics_loss(net: &Network, prob: &PoissonProblem) -> Result<f64> {
    let weights = dense_scalar_weights(net)?;
    let mut acc = 0.0;
    for &x in &prob.collocation {
        let r = propagate(net, &weights, x).out.d2u_dx2 - (prob.forcing)(x);
        acc += r * r;
    }
    let ua = propagate(net, &weights, prob.domain.0).out.u - prob.boundary.0;
    let ub = propagate(net, &weights, prob.domain.1).out.u - prob.boundary.1;
    Ok(acc / prob.collocation.len() as f64 + prob.boundary_weight * (ua * ua + ub * ub))
}

/// [`physics_loss`] and its gradient in the flat parameter layout.
pub fn physics_loss_and_gradient(net: &Network, prob: &PoissonProblem) -> Result<(f64, Vec<f64>)> {
    if !net.is_dense() {
        return Err(Error::Unsupported("gradients are defined on dense networks only".into()));
    }
    let weights = dense_scalar_weights(net)?;
    let mut grad = vec![0.0; net.param_count()];
    let scale = 1.0 / prob.collocation.len() as f64;
    let mut acc = 0.0;
    for &x in &prob.collocation {
        let tape = propagate(net, &weights, x);
        let r = tape.out.d2u_dx2 - (prob.forcing)(x);
        acc += r * r;
        backpropagate(net, &weights, &tape, [0.0, 0.0, 2.0 * scale * r], &mut grad);
    }
    let mut loss = acc * scale;
    for (x, target) in [(prob.domain.0, prob.boundary.0), (prob.domain.1, prob.boundary.1)] {
        let tape = propagate(net, &weights, x);
        let e = tape.out.u - target;
        loss += prob.boundary_weight * e * e;
        backpropagate(net, &weights, &tape, [2.0 * prob.boundary_weight * e, 0.0, 0.0], &mut grad);
    }
    Ok((loss, grad))
}

impl Objective for PoissonProblem {
    fn loss(&self, net: &Network) -> Result<f64> {
        physics_loss(net, self)
    }

    fn loss_and_gradient(&self, net: &Network) -> Result<(f64, Vec<f64>)> {
        physics_loss_and_gradient(net, self)
    }
}

/// Uniform grid of `points` nodes over the closed domain.
pub fn error_grid(prob: &PoissonProblem, points: usize) -> Vec<f64> {
    let (a, b) = prob.domain;
    (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect()
}

/// `‖u_net − u‖₂ / ‖u‖₂` over the evaluation grid.
pub fn relative_l2_error(net: &Network, prob: &PoissonProblem) -> Result<f64> {
    let exact = prob
        .exact
        .ok_or_else(|| Error::Unsupported("problem has no analytic solution".into()))?;
    let mut num = 0.0;
    let mut den = 0.0;
    for x in error_grid(prob, ERROR_GRID) {
        let u = forward(net, &[x])?[0];
        let e = exact(x);
        num += (u - e) * (u - e);
        den += e * e;
    }
    Ok((num / den).sqrt())
}

/// Outcome of [`train_pinn`].
#[derive(Clone, Debug)]
pub struct PinnRun {
    pub net: Network,
    pub losses: Vec<f64>,
    pub projections: Vec<ProjectionEvent>,
    pub relative_l2: f64,
}

/// Full-batch descent on the physics loss from a seeded initialization;
/// projects onto the H-matrix class when `cfg.projection_period ≤ cfg.steps`.
pub fn train_pinn(prob: &PoissonProblem, sizes: &[usize], cfg: &TrainConfig) -> Result<PinnRun> {
    let net = init_network(sizes, cfg.seed)?;
    let run = train_projected(&net, prob, cfg)?;
    let relative_l2 = relative_l2_error(&run.net, prob)?;
    Ok(PinnRun {
        net: run.net,
        losses: run.losses,
        projections: run.projections,
        relative_l2,
    })
}

/// Accuracy and storage of a trained network compressed at one tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedPinnReport {
    pub epsilon: f64,
    pub relative_l2: f64,
    pub physics_loss: f64,
    pub layer_ratios: Vec<f64>,
    /// `Σ stored / Σ dense` over all weights.
    pub compression_ratio: f64,
}

pub fn evaluate_compressed_pinn(trained: &Network, ladder: &[f64], prob: &PoissonProblem) -> Result<Vec<CompressedPinnReport>> {
    ladder
        .iter()
        .map(|&eps| {
            let (c, reports) = compress_network(trained, eps)?;
            let stored: usize = reports.iter().map(|r| r.stored_scalars).sum();
            let dense: usize = reports.iter().map(|r| r.rows * r.cols).sum();
            Ok(CompressedPinnReport {
                epsilon: eps,
                relative_l2: relative_l2_error(&c, prob)?,
                physics_loss: physics_loss(&c, prob)?,
                layer_ratios: reports.iter().map(|r| r.compression_ratio).collect(),
                compression_ratio: stored as f64 / dense as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn identity_net() -> Network {
        Network::new(vec![Layer::dense(DenseMatrix::identity(1), vec![0.0], Activation::Identity)]).unwrap()
    }

    #[test]
    fn identity_network_derivatives() {
        let d = forward_with_input_derivatives(&identity_net(), 0.37).unwrap();
        assert_eq!(d, DerivativeBundle { u: 0.37, du_dx: 1.0, d2u_dx2: 0.0 });
    }

    #[test]
    fn single_tanh_neuron_closed_form() {
        let (w, b) = (1.7, -0.3);
        let net = Network::new(vec![
            Layer::dense(DenseMatrix::new(1, 1, vec![w]).unwrap(), vec![b], Activation::Tanh),
            Layer::dense(DenseMatrix::identity(1), vec![0.0], Activation::Identity),
        ])
        .unwrap();
        for x in [-1.0, 0.0, 0.4, 2.0] {
            let t = (w * x + b).tanh();
            let s = 1.0 - t * t;
            let d = forward_with_input_derivatives(&net, x).unwrap();
            assert!((d.u - t).abs() < 1e-12);
            assert!((d.du_dx - w * s).abs() < 1e-12);
            assert!((d.d2u_dx2 - w * w * (-2.0 * t * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let net = init_network(&[1, 8, 8, 1], 5).unwrap();
        let h = 1e-4;
        for x in [0.1, 0.5, 0.93] {
            let d = forward_with_input_derivatives(&net, x).unwrap();
            let f = |x: f64| forward(&net, &[x]).unwrap()[0];
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            assert!((d.du_dx - d1).abs() <= 1e-5 * d1.abs().max(1.0));
            assert!((d.d2u_dx2 - d2).abs() <= 1e-5 * d2.abs().max(1.0));
        }
    }

    #[test]
    fn exact_linear_solution_has_zero_loss() {
        fn zero(_: f64) -> f64 {
            0.0
        }
        let prob = PoissonProblem::new(zero, None, (0.0, 1.0), (0.0, 1.0), vec![0.25, 0.5, 0.75], 10.0).unwrap();
        assert!(physics_loss(&identity_net(), &prob).unwrap() <= 1e-20);
        let zero_net = Network::new(vec![Layer::dense(DenseMatrix::zeros(1, 1), vec![0.0], Activation::Identity)]).unwrap();
        let homogeneous = PoissonProblem::new(zero, None, (0.0, 1.0), (0.0, 0.0), vec![0.5], 10.0).unwrap();
        assert_eq!(physics_loss(&zero_net, &homogeneous).unwrap(), 0.0);
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let net = init_network(&[1, 6, 1], 3).unwrap();
        let prob = PoissonProblem::sine(8);
        // second derivative by hand for a single hidden layer
        let w1 = net.layers()[0].weight.to_dense();
        let b1 = &net.layers()[0].bias;
        let w2 = net.layers()[1].weight.to_dense();
        let b2 = net.layers()[1].bias[0];
        let u = |x: f64| b2 + (0..6).map(|k| w2.get(0, k) * (w1.get(k, 0) * x + b1[k]).tanh()).sum::<f64>();
        let upp = |x: f64| {
            (0..6)
                .map(|k| {
                    let t = (w1.get(k, 0) * x + b1[k]).tanh();
                    w2.get(0, k) * w1.get(k, 0).powi(2) * (-2.0 * t * (1.0 - t * t))
                })
                .sum::<f64>()
        };
        let mut acc = 0.0;
        for &x in &prob.collocation {
            acc += (upp(x) - sine_forcing(x)).powi(2);
        }
        let expected = acc / 8.0 + 10.0 * (u(0.0).powi(2) + u(1.0).powi(2));
        let got = physics_loss(&net, &prob).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn gradient_matches_differences() {
        let net = init_network(&[1, 5, 4, 1], 21).unwrap();
        let prob = PoissonProblem::sine(10);
        let (loss, g) = physics_loss_and_gradient(&net, &prob).unwrap();
        assert_eq!(loss, physics_loss(&net, &prob).unwrap());
        let theta = net.params().unwrap();
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (physics_loss(&net.with_params(&tp).unwrap(), &prob).unwrap()
                - physics_loss(&net.with_params(&tm).unwrap(), &prob).unwrap())
                / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-2), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn zero_steps_returns_initial_network() {
        let prob = PoissonProblem::sine(16);
        let cfg = TrainConfig::new(1e-3, 0, 4);
        let run = train_pinn(&prob, &[1, 8, 1], &cfg).unwrap();
        assert_eq!(run.net, init_network(&[1, 8, 1], 4).unwrap());
        assert_eq!(run.losses.len(), 1);
        assert_eq!(run.relative_l2, relative_l2_error(&run.net, &prob).unwrap());
    }

    #[test]
    fn rejects_vector_networks_and_bad_problems() {
        let net = init_network(&[2, 3, 1], 0).unwrap();
        assert!(forward_with_input_derivatives(&net, 0.0).is_err());
        assert!(PoissonProblem::new(sine_forcing, None, (0.0, 1.0), (0.0, 0.0), vec![1.0], 10.0).is_err());
        assert!(PoissonProblem::new(sine_forcing, None, (1.0, 0.0), (0.0, 0.0), vec![0.5], 10.0).is_err());
    }
}
