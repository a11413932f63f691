use super::{compress_network_with, forward, layer_build_config, param_gradient, Network};
use crate::error::{check_len, Error, Result};
use crate::hmatrix::CompressionReport;

/// Full-batch training settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Weight of the rank term in the reported composite objective.
    pub lambda: f64,
    /// Steps between projections onto the H-matrix class.
    pub projection_period: usize,
    pub epsilon_tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Plain descent: no projection within `steps`, `λ = 0`.
    pub fn new(learning_rate: f64, steps: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            steps,
            lambda: 0.0,
            projection_period: usize::MAX,
            epsilon_tol: 1e-3,
            seed,
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad lambda {}", self.lambda)));
        }
        if self.projection_period == 0 {
            return Err(Error::InvalidArgument("projection period must be positive".into()));
        }
        if !(self.epsilon_tol > 0.0 && self.epsilon_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad epsilon_tol {}", self.epsilon_tol)));
        }
        Ok(self)
    }
}

/// Differentiable training objective over dense networks.
pub trait Objective {
    fn loss(&self, net: &Network) -> Result<f64>;

    /// Loss and its gradient in the flat parameter layout of [`Network::params`].
    fn loss_and_gradient(&self, net: &Network) -> Result<(f64, Vec<f64>)>;
}

/// Mean squared error `(1/N) Σ ‖f(x_i) − y_i‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionObjective {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl RegressionObjective {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        check_len("regression targets", inputs.len(), targets.len())?;
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty regression set".into()));
        }
        Ok(Self { inputs, targets })
    }
}

impl Objective for RegressionObjective {
    fn loss(&self, net: &Network) -> Result<f64> {
        let mut acc = 0.0;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let f = forward(net, x)?;
            check_len("regression target", f.len(), y.len())?;
            acc += f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(acc / self.inputs.len() as f64)
    }

    fn loss_and_gradient(&self, net: &Network) -> Result<(f64, Vec<f64>)> {
        let scale = 1.0 / self.inputs.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; net.param_count()];
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let f = forward(net, x)?;
            check_len("regression target", f.len(), y.len())?;
            let r: Vec<f64> = f.iter().zip(y).map(|(a, b)| a - b).collect();
            loss += r.iter().map(|v| v * v).sum::<f64>();
            let up: Vec<f64> = r.iter().map(|v| 2.0 * scale * v).collect();
            let g = param_gradient(net, x, &up)?;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((loss * scale, grad))
    }
}

/// Trajectory of plain gradient descent.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub net: Network,
    /// `losses[t]` is the loss after `t` steps; length `steps + 1`.
    pub losses: Vec<f64>,
}

fn checked(loss: f64, step: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence { step, loss })
    }
}

/// `θ ← θ − η ∇L(θ)` for `cfg.steps` steps.
pub fn train_gd(net: &Network, objective: &dyn Objective, cfg: &TrainConfig) -> Result<TrainRun> {
    let cfg = cfg.validated()?;
    let mut theta = net.params()?;
    let mut current = net.clone();
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for step in 0..cfg.steps {
        let (loss, grad) = objective.loss_and_gradient(&current)?;
        losses.push(checked(loss, step)?);
        theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= cfg.learning_rate * g);
        current = current.with_params(&theta)?;
    }
    losses.push(checked(objective.loss(&current)?, cfg.steps)?);
    Ok(TrainRun { net: current, losses })
}

/// State of one projection onto the H-matrix class.
#[derive(Clone, Debug)]
pub struct ProjectionEvent {
    /// Number of gradient steps taken before this projection.
    pub step: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    /// `R(H(W)) = Σ` block ranks over all layers.
    pub rank_sum: usize,
    /// `Σ_k ‖W_k − H(W_k)‖_F`.
    pub error_sum: f64,
    pub layers: Vec<CompressionReport>,
    /// `L + λ R` after projection.
    pub composite: f64,
    /// Parameters after projection.
    pub params: Vec<f64>,
}

/// Trajectory of projected gradient descent.
#[derive(Clone, Debug)]
pub struct ProjectedRun {
    pub net: Network,
    pub losses: Vec<f64>,
    pub projections: Vec<ProjectionEvent>,
    /// `Σ |loss_after − loss_before|` over projections.
    pub cumulative_loss_change: f64,
    /// `τ · #projections`.
    pub tau_budget: f64,
}

/// Gradient descent with every weight replaced by `reconstruct(H(W))` each
/// `projection_period` steps. `losses[t]` is recorded after any projection
/// at step `t`.
pub fn train_projected(net: &Network, objective: &dyn Objective, cfg: &TrainConfig) -> Result<ProjectedRun> {
    let cfg = cfg.validated()?;
    let build = layer_build_config(cfg.epsilon_tol)?;
    let mut theta = net.params()?;
    let mut current = net.clone();
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    let mut projections = Vec::new();
    for step in 0..cfg.steps {
        let (loss, grad) = objective.loss_and_gradient(&current)?;
        losses.push(checked(loss, step)?);
        theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= cfg.learning_rate * g);
        current = current.with_params(&theta)?;
        if (step + 1) % cfg.projection_period == 0 {
            let loss_before = checked(objective.loss(&current)?, step + 1)?;
            let (compressed, layers) = compress_network_with(&current, &build)?;
            current = compressed.densified();
            theta = current.params()?;
            let loss_after = checked(objective.loss(&current)?, step + 1)?;
            let rank_sum = layers.iter().map(|r| r.rank_sum).sum::<usize>();
            projections.push(ProjectionEvent {
                step: step + 1,
                loss_before,
                loss_after,
                rank_sum,
                error_sum: layers.iter().map(|r| r.measured_error).sum(),
                composite: loss_after + cfg.lambda * rank_sum as f64,
                layers,
                params: theta.clone(),
            });
        }
    }
    losses.push(checked(objective.loss(&current)?, cfg.steps)?);
    let cumulative_loss_change = projections.iter().map(|p| (p.loss_after - p.loss_before).abs()).sum();
    let tau_budget = cfg.epsilon_tol * projections.len() as f64;
    Ok(ProjectedRun {
        net: current,
        losses,
        projections,
        cumulative_loss_change,
        tau_budget,
    })
}
