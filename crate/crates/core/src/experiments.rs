//! Experiment drivers shared by the command-line runner and the acceptance suite.
//!
//! Each driver returns plain rows; formatting and file output live with the caller.

use std::time::Instant;

use crate::baselines::{compress_layers, error_propagation, tradeoff_sweep, CompressorSpec, Method, PropagationRecord, TradeoffRow};
use crate::error::{Error, Result};
use crate::generate::{generate_matrix, random_dense, random_vector, MatrixKind};
use crate::hmatrix::{
    build_adaptive, depth_error_profile, error_bound, hmatvec, measured_error, perturbed_condition, rebuild_on_perturbed,
    reconstruct, spectral_diagnostics, BuildConfig, HMatrix, LevelError, PerturbationCheck, SpectralDiagnostics,
};
use crate::linalg::{frobenius_norm, matvec_dense, svd, DenseMatrix};
use crate::nn::{forward, init_network, ntk_deviation, param_gradient, Layer, Network, NtkDeviation, TrainConfig};
use crate::pinn::{evaluate_compressed_pinn, relative_l2_error, train_pinn, CompressedPinnReport, PinnRun, PoissonProblem, DEFAULT_COLLOCATION};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Generator families exercised by the bound checks.
pub fn bound_families() -> [MatrixKind; 4] {
    [
        MatrixKind::KernelBand,
        MatrixKind::GeometricSpectrum { kappa: 1e6 },
        MatrixKind::RankK { rank: 8 },
        MatrixKind::RandomDense,
    ]
}

/// Global error, triangle sum and bound of one build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCase {
    pub kind: MatrixKind,
    pub n: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub n_r: usize,
    pub measured: f64,
    pub leaf_sum: f64,
    /// `ε √n_r`.
    pub bound: f64,
    pub source_norm: f64,
    pub compression_ratio: f64,
}

impl BoundCase {
    pub fn global_bound_holds(&self) -> bool {
        self.measured <= self.bound + 1e-9 * self.source_norm
    }

    pub fn triangle_holds(&self) -> bool {
        self.measured <= self.leaf_sum * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

/// Builds every `(family, seed, ε)` combination and measures it.
pub fn global_bound_cases(kinds: &[MatrixKind], n: usize, seeds: &[u64], epsilons: &[f64]) -> Result<Vec<BoundCase>> {
    let mut out = Vec::new();
    for &kind in kinds {
        for &seed in seeds {
            let a = generate_matrix(kind, n, seed)?;
            let norm = frobenius_norm(&a);
            for &eps in epsilons {
                let h = build_adaptive(&a, &BuildConfig::new(eps)?)?;
                let e = measured_error(&h, &a)?;
                out.push(BoundCase {
                    kind,
                    n,
                    seed,
                    epsilon: eps,
                    n_r: h.n_r(),
                    measured: e.global,
                    leaf_sum: e.leaf_sum,
                    bound: error_bound(&h),
                    source_norm: norm,
                    compression_ratio: h.compression_ratio(),
                });
            }
        }
    }
    Ok(out)
}

/// Seeded Gaussian matrix rescaled to Frobenius norm `delta`.
pub fn frobenius_perturbation(rows: usize, cols: usize, delta: f64, seed: u64) -> DenseMatrix {
    let g = random_dense(rows, cols, seed);
    let s = delta / frobenius_norm(&g);
    g.scaled(s)
}

/// Recompression of a perturbed matrix on the original partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationCase {
    pub seed: u64,
    pub delta: f64,
    pub n_r: usize,
    /// `‖A' − H'‖_F`.
    pub measured: f64,
    /// `τ √n_r + δ`.
    pub consistent_bound: f64,
    /// `τ + δ`.
    pub literal_bound: f64,
}

impl PerturbationCase {
    pub fn holds(&self) -> bool {
        self.measured <= self.consistent_bound
    }
}

/// `δ = frac · ‖A‖_F` for each fraction, one seeded perturbation per seed.
pub fn perturbation_cases(kind: MatrixKind, n: usize, epsilon: f64, seeds: &[u64], delta_fracs: &[f64]) -> Result<Vec<PerturbationCase>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let a = generate_matrix(kind, n, seed)?;
        let h = build_adaptive(&a, &BuildConfig::new(epsilon)?)?;
        let norm = frobenius_norm(&a);
        for &frac in delta_fracs {
            let delta = frac * norm;
            let pseed = seed.wrapping_mul(1_000_003).wrapping_add(frac.to_bits());
            let ap = a.add(&frobenius_perturbation(n, n, delta, pseed))?;
            let hp = rebuild_on_perturbed(&h, &ap)?;
            let measured = measured_error(&hp, &ap)?.global;
            out.push(PerturbationCase {
                seed,
                delta,
                n_r: hp.n_r(),
                measured,
                consistent_bound: error_bound(&hp) + delta,
                literal_bound: epsilon + delta,
            });
        }
    }
    Ok(out)
}

/// Condition-number diagnostics for one `(κ, ε)` configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionCase {
    pub kappa: f64,
    pub epsilon: f64,
    pub diagnostics: SpectralDiagnostics,
}

pub fn condition_cases(kappas: &[f64], n: usize, epsilons: &[f64], seed: u64) -> Result<Vec<ConditionCase>> {
    let mut out = Vec::new();
    for &kappa in kappas {
        let a = generate_matrix(MatrixKind::GeometricSpectrum { kappa }, n, seed)?;
        for &eps in epsilons {
            let h = build_adaptive(&a, &BuildConfig::new(eps)?)?;
            out.push(ConditionCase {
                kappa,
                epsilon: eps,
                diagnostics: spectral_diagnostics(&h, &a)?,
            });
        }
    }
    Ok(out)
}

/// Random spectral-norm perturbations of `reconstruct(H)` at `δ = frac · σ_min(H)`.
pub fn adversarial_cases(h: &HMatrix, frac: f64, seeds: &[u64]) -> Result<Vec<PerturbationCheck>> {
    let hd = reconstruct(h);
    let smin = svd(&hd)?.singular_values.last().copied().unwrap_or(0.0);
    seeds.iter().map(|&s| perturbed_condition(&hd, frac * smin, s)).collect()
}

/// Per-level error profile of a kernel matrix build.
pub fn kernel_depth_profile(n: usize, epsilon: f64) -> Result<(HMatrix, Vec<LevelError>)> {
    let a = generate_matrix(MatrixKind::KernelBand, n, 0)?;
    let h = build_adaptive(&a, &BuildConfig::new(epsilon)?)?;
    let p = depth_error_profile(&h, &a)?;
    Ok((h, p))
}

/// Mean of successive ratios `e[p+1] / e[p]` over levels where both are positive.
pub fn mean_decay_ratio(values: &[f64]) -> Option<f64> {
    let ratios: Vec<f64> = values
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Least-squares slope of `log y` against `log x`; `None` if any value is not positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// Hidden-layer singular values of the tangent-kernel fixture decay by this
/// overall ratio, so every tolerance in `1e-1..1e-5` truncates a different rank.
pub const NTK_FIXTURE_KAPPA: f64 = 1e12;

/// Seeded `[1, 16, 16, 1]` network whose hidden weight has a geometric spectrum.
pub fn ntk_fixture_network(seed: u64) -> Result<Network> {
    let base = init_network(&[1, 16, 16, 1], seed)?;
    let hidden = generate_matrix(MatrixKind::GeometricSpectrum { kappa: NTK_FIXTURE_KAPPA }, 16, seed)?;
    let mut layers: Vec<Layer> = base.layers().to_vec();
    layers[1] = Layer::dense(hidden, layers[1].bias.clone(), layers[1].activation);
    Network::new(layers)
}

/// Eight evenly spaced inputs on `[-1, 1]`.
pub fn ntk_fixture_samples() -> Vec<Vec<f64>> {
    (0..8).map(|i| vec![-1.0 + 2.0 * i as f64 / 7.0]).collect()
}

pub fn ntk_ladder() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}

pub fn ntk_experiment(seed: u64, ladder: &[f64]) -> Result<Vec<NtkDeviation>> {
    ntk_deviation(&ntk_fixture_network(seed)?, &ntk_fixture_samples(), ladder)
}

/// One gradient check against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// `‖g_fd − g‖₂ / ‖g‖₂`.
    pub relative_error: f64,
}

/// Central-difference checks (step `1e-5`) of the reverse-mode gradient on
/// seeded networks no larger than `[2, 16, 16, 1]`.
pub fn gradient_checks(count: usize) -> Result<Vec<GradientCheck>> {
    let archs: [&[usize]; 5] = [&[1, 4, 1], &[2, 8, 1], &[1, 8, 8, 1], &[2, 16, 1], &[2, 16, 16, 1]];
    (0..count)
        .map(|c| {
            let sizes = archs[c % archs.len()];
            let seed = c as u64;
            let net = init_network(sizes, seed)?;
            let x = random_vector(sizes[0], seed + 10_000);
            let g = param_gradient(&net, &x, &[1.0])?;
            let theta = net.params()?;
            let h = 1e-5;
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..theta.len() {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fd = (forward(&net.with_params(&tp)?, &x)?[0] - forward(&net.with_params(&tm)?, &x)?[0]) / (2.0 * h);
                num += (fd - g[k]).powi(2);
                den += g[k] * g[k];
            }
            Ok(GradientCheck {
                sizes: sizes.to_vec(),
                seed,
                relative_error: (num / den).sqrt(),
            })
        })
        .collect()
}

/// Frozen training configuration of the Poisson fixture.
pub fn pinn_fixture_config() -> TrainConfig {
    TrainConfig::new(1e-3, 20_000, 0)
}

pub const PINN_FIXTURE_SIZES: [usize; 4] = [1, 32, 32, 1];

pub fn pinn_fixture() -> Result<(PoissonProblem, PinnRun)> {
    let prob = PoissonProblem::sine(DEFAULT_COLLOCATION);
    let run = train_pinn(&prob, &PINN_FIXTURE_SIZES, &pinn_fixture_config())?;
    Ok((prob, run))
}

/// Loss every `every` steps, including step 0 and the final step.
pub fn checkpoints(losses: &[f64], every: usize) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = losses.iter().copied().enumerate().step_by(every).collect();
    if let Some(last) = losses.len().checked_sub(1) {
        if last % every != 0 {
            out.push((last, losses[last]));
        }
    }
    out
}

/// Compressed-fixture error divided by the uncompressed error.
pub fn degradation_factor(net: &Network, prob: &PoissonProblem, epsilon: f64) -> Result<(f64, CompressedPinnReport)> {
    let base = relative_l2_error(net, prob)?;
    let rep = evaluate_compressed_pinn(net, &[epsilon], prob)?.remove(0);
    Ok((rep.relative_l2 / base, rep))
}

/// Median wall time of hierarchical and dense products for one size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub epsilon: f64,
    pub hmatvec_seconds: f64,
    pub dense_seconds: f64,
    pub stored_scalars: usize,
    /// `‖H x − A x‖ / ‖A x‖` for the probe vector.
    pub relative_error: f64,
    pub build_seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn bench_matvec(n: usize, epsilon: f64, reps: usize, seed: u64) -> Result<BenchRow> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    let a = generate_matrix(MatrixKind::KernelBand, n, seed)?;
    let h = build_adaptive(&a, &BuildConfig::new(epsilon)?)?;
    let x = random_vector(n, seed);
    let yd = matvec_dense(&a, &x)?;
    let yh = hmatvec(&h, &x)?;
    let diff = yh.iter().zip(&yd).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let norm = yd.iter().map(|q| q * q).sum::<f64>().sqrt();
    let mut th = Vec::with_capacity(reps);
    let mut td = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(hmatvec(&h, std::hint::black_box(&x))?);
        th.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        std::hint::black_box(matvec_dense(&a, std::hint::black_box(&x))?);
        td.push(t.elapsed().as_secs_f64());
    }
    Ok(BenchRow {
        n,
        epsilon,
        hmatvec_seconds: median(th),
        dense_seconds: median(td),
        stored_scalars: h.stored_scalars(),
        relative_error: diff / norm,
        build_seconds: h.build_seconds(),
    })
}

/// Matched-ratio comparison of H-matrix and magnitude pruning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DominanceRow {
    pub epsilon: f64,
    pub hmatrix: TradeoffRow,
    pub prune: TradeoffRow,
}

/// For each tolerance, compresses with H-matrices, then prunes to the same
/// network-level ratio and scores both with `evaluate`.
pub fn baseline_dominance(
    net: &Network,
    evaluate: &dyn Fn(&Network) -> Result<f64>,
    epsilons: &[f64],
) -> Result<Vec<DominanceRow>> {
    epsilons
        .iter()
        .map(|&eps| {
            let h = tradeoff_sweep(net, evaluate, &[CompressorSpec::new(Method::HMatrix, eps)?])?.remove(0);
            let sparsity = (1.0 - h.compression_ratio).max(0.0);
            let p = tradeoff_sweep(net, evaluate, &[CompressorSpec::new(Method::Prune, sparsity)?])?.remove(0);
            Ok(DominanceRow {
                epsilon: eps,
                hmatrix: h,
                prune: p,
            })
        })
        .collect()
}

/// Tolerances of the propagation sweep.
pub const PROPAGATION_TOLERANCES: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Probe batch for propagation: 32 evenly spaced scalar inputs on `[0, 1]`.
pub fn propagation_probe() -> Vec<Vec<f64>> {
    (0..32).map(|i| vec![i as f64 / 31.0]).collect()
}

/// Propagation curves for every spec.
pub fn propagation_curves(net: &Network, specs: &[CompressorSpec], probe: &[Vec<f64>]) -> Result<Vec<Vec<PropagationRecord>>> {
    specs.iter().map(|s| error_propagation(net, s, probe)).collect()
}

pub fn is_nondecreasing(curve: &[PropagationRecord]) -> bool {
    curve.windows(2).all(|w| w[1].cumulative_error >= w[0].cumulative_error)
}

/// Ratio of a network compressed in every layer.
pub fn network_ratio(net: &Network, spec: &CompressorSpec) -> Result<f64> {
    Ok(compress_layers(net, spec, net.layers().len())?.1)
}
