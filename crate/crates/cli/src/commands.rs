//! Subcommand implementations. Each writes its CSV files and prints a short
//! summary on stdout.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hmx_core::baselines::{error_propagation, tradeoff_sweep, CompressorSpec, Method, TradeoffRow};
use hmx_core::experiments::{
    adversarial_cases, bench_matvec as bench_row, bound_families, checkpoints, condition_cases, global_bound_cases, loglog_slope,
    network_ratio, ntk_experiment, perturbation_cases, propagation_probe, PINN_FIXTURE_SIZES,
};
use hmx_core::generate::{generate_matrix, MatrixKind};
use hmx_core::hmatrix::{
    build_adaptive, depth_error_profile, encode_hmatrix, measured_error, storage_stats, BoundCheck, BuildConfig,
};
use hmx_core::nn::{decode_network, encode_network, forward, Network, TrainConfig};
use hmx_core::pinn::{error_grid, relative_l2_error, train_pinn, PoissonProblem, DEFAULT_COLLOCATION, ERROR_GRID};

use crate::output::{num, CsvOut};
use crate::textio::{read_matrix, write_matrix};
use crate::{Common, MatrixArgs, NetworkArgs};

/// Perturbation sizes as fractions of `‖A‖_F`.
const DELTA_FRACS: [f64; 3] = [1e-6, 1e-3, 1e-1];
const CONDITION_KAPPAS: [f64; 3] = [1e2, 1e4, 1e6];
/// Adversarial perturbations have `‖ΔH‖₂ = 0.1 σ_min(H)`.
const ADVERSARIAL_FRAC: f64 = 0.1;
const ADVERSARIAL_KAPPA: f64 = 1e4;
const PRUNE_SPARSITIES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const QUANTIZE_BITS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
const TRAJECTORY_EVERY: usize = 10;

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

/// Bit width whose storage fraction is closest to `ratio`.
fn matched_bits(ratio: f64) -> f64 {
    (64.0 * ratio).round().clamp(2.0, 16.0)
}

fn matched_specs(net: &Network, eps: f64) -> Result<[CompressorSpec; 4]> {
    let h = CompressorSpec::new(Method::HMatrix, eps)?;
    let r = network_ratio(net, &h)?;
    Ok([
        h,
        CompressorSpec::new(Method::SvdGlobal, eps)?,
        CompressorSpec::new(Method::Prune, (1.0 - r).max(0.0))?,
        CompressorSpec::new(Method::Quantize, matched_bits(r))?,
    ])
}

pub fn compress(c: &Common, m: &MatrixArgs, eps: f64, min_block: Option<usize>, save: Option<&Path>, save_matrix: Option<&Path>) -> Result<()> {
    let (a, source) = match &m.matrix_file {
        Some(p) => (read_matrix(p)?, format!("file:{}", p.display())),
        None => {
            let kind = m.kind();
            (generate_matrix(kind, m.n, c.seed)?, kind.to_string())
        }
    };
    let mut cfg = BuildConfig::new(eps)?;
    if let Some(mb) = min_block {
        cfg = cfg.with_min_block(mb)?;
    }
    let h = build_adaptive(&a, &cfg)?;
    let rep = storage_stats(&h, &a)?;
    let err = measured_error(&h, &a)?;
    let config = format!("source={source} eps={} min_block={} max_depth={}", num(eps), cfg.min_block, cfg.max_depth);

    let mut out = CsvOut::create(
        &c.out,
        "compress.csv",
        c.seed,
        &config,
        &["build_seconds is wall time and varies between runs"],
        &[
            "rows", "cols", "epsilon", "n_r", "dense_leaves", "depth", "rank_sum", "stored_scalars", "compression_ratio",
            "measured_error", "leaf_error_sum", "error_bound", "build_seconds",
        ],
    )?;
    out.row([
        rep.rows.to_string(),
        rep.cols.to_string(),
        num(eps),
        rep.n_r.to_string(),
        rep.dense_leaves.to_string(),
        rep.depth.to_string(),
        rep.rank_sum.to_string(),
        rep.stored_scalars.to_string(),
        num(rep.compression_ratio),
        num(rep.measured_error),
        num(err.leaf_sum),
        num(rep.error_bound),
        num(rep.build_time),
    ])?;
    out.finish()?;

    let mut prof = CsvOut::create(
        &c.out,
        "compress_profile.csv",
        c.seed,
        &config,
        &[],
        &["level", "blocks", "low_rank_leaves", "max_leaf_error", "max_block_error"],
    )?;
    for l in depth_error_profile(&h, &a)? {
        prof.row([
            l.level.to_string(),
            l.blocks.to_string(),
            l.low_rank_leaves.to_string(),
            num(l.max_leaf_error),
            num(l.max_block_error),
        ])?;
    }
    prof.finish()?;

    if let Some(p) = save_matrix {
        write_matrix(p, &a)?;
    }
    if let Some(p) = save {
        fs::write(p, encode_hmatrix(&h)).with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "{}x{} eps {}: ratio {:.4}, error {:.3e} <= bound {:.3e}, n_r {}, depth {}",
        rep.rows,
        rep.cols,
        num(eps),
        rep.compression_ratio,
        rep.measured_error,
        rep.error_bound,
        rep.n_r,
        rep.depth
    );
    Ok(())
}

pub fn bench_matvec(c: &Common, sizes: &[usize], eps: f64, reps: usize) -> Result<()> {
    let config = format!("family=kernel_band eps={} reps={reps} sizes={sizes:?}", num(eps));
    let mut out = CsvOut::create(
        &c.out,
        "bench_matvec.csv",
        c.seed,
        &config,
        &["seconds are medians of wall time; dense rows use the uncompressed product"],
        &["n", "method", "epsilon", "median_seconds", "stored_scalars", "storage_fraction", "relative_error", "build_seconds"],
    )?;
    for &n in sizes {
        let r = bench_row(n, eps, reps, c.seed)?;
        let nn = (n * n) as f64;
        out.row([
            n.to_string(),
            "hmatrix".into(),
            num(eps),
            num(r.hmatvec_seconds),
            r.stored_scalars.to_string(),
            num(r.stored_scalars as f64 / nn),
            num(r.relative_error),
            num(r.build_seconds),
        ])?;
        out.row([
            n.to_string(),
            "dense".into(),
            num(0.0),
            num(r.dense_seconds),
            (n * n).to_string(),
            num(1.0),
            num(0.0),
            num(0.0),
        ])?;
        println!(
            "n {n}: hmatvec {:.3e} s, dense {:.3e} s, storage {:.4} n^2, relative error {:.2e}",
            r.hmatvec_seconds,
            r.dense_seconds,
            r.stored_scalars as f64 / nn,
            r.relative_error
        );
    }
    out.finish()?;
    Ok(())
}

fn train_fixture(steps: usize, lr: f64, seed: u64) -> Result<(PoissonProblem, hmx_core::pinn::PinnRun)> {
    let prob = PoissonProblem::sine(DEFAULT_COLLOCATION);
    let run = train_pinn(&prob, &PINN_FIXTURE_SIZES, &TrainConfig::new(lr, steps, seed).validated()?)?;
    Ok((prob, run))
}

fn load_network(c: &Common, n: &NetworkArgs) -> Result<(PoissonProblem, Network, String)> {
    match &n.network_file {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let net = decode_network(&bytes).with_context(|| format!("decoding {}", p.display()))?;
            anyhow::ensure!(net.input_dim() == 1 && net.output_dim() == 1, "network must map one input to one output");
            Ok((PoissonProblem::sine(DEFAULT_COLLOCATION), net, format!("network=file:{}", p.display())))
        }
        None => {
            let (prob, run) = train_fixture(n.steps, n.lr, c.seed)?;
            let desc = format!("network=trained sizes={:?} steps={} lr={}", PINN_FIXTURE_SIZES, n.steps, num(n.lr));
            Ok((prob, run.net, desc))
        }
    }
}

fn tradeoff_line(out: &mut CsvOut, tolerance: Option<f64>, row: &TradeoffRow, base: f64) -> Result<()> {
    out.row([
        tolerance.map_or(String::new(), num),
        row.method.name().to_string(),
        num(row.parameter),
        num(row.compression_ratio),
        num(row.metric),
        num(row.metric / base),
    ])
}

pub fn pinn(c: &Common, steps: usize, lr: f64, ladder: &[f64]) -> Result<()> {
    let (prob, run) = train_fixture(steps, lr, c.seed)?;
    let config = format!("sizes={:?} steps={steps} lr={} collocation={DEFAULT_COLLOCATION}", PINN_FIXTURE_SIZES, num(lr));

    let mut traj = CsvOut::create(&c.out, "pinn_trajectory.csv", c.seed, &config, &[], &["step", "physics_loss"])?;
    for (step, loss) in checkpoints(&run.losses, TRAJECTORY_EVERY) {
        traj.row([step.to_string(), num(loss)])?;
    }
    traj.finish()?;

    let exact = prob.exact.context("problem has no exact solution")?;
    let mut sol = CsvOut::create(&c.out, "pinn_solution.csv", c.seed, &config, &[], &["x", "exact", "network"])?;
    for x in error_grid(&prob, ERROR_GRID) {
        sol.row([num(x), num(exact(x)), num(forward(&run.net, &[x])?[0])])?;
    }
    sol.finish()?;

    let eval = |n: &Network| relative_l2_error(n, &prob);
    let mut trade = CsvOut::create(
        &c.out,
        "pinn_tradeoff.csv",
        c.seed,
        &format!("{config} ladder={}", floats(ladder)),
        &[
            "prune sparsity is 1 - r_H; quantize bits round(64 r_H) clamped to [2, 16]",
            "degradation is relative_l2 over that of the uncompressed network",
        ],
        &["tolerance", "method", "parameter", "compression_ratio", "relative_l2", "degradation"],
    )?;
    let base = run.relative_l2;
    trade.row(["".into(), "dense".into(), "".into(), num(1.0), num(base), num(1.0)])?;
    for &eps in ladder {
        for row in tradeoff_sweep(&run.net, &eval, &matched_specs(&run.net, eps)?)? {
            tradeoff_line(&mut trade, Some(eps), &row, base)?;
        }
    }
    trade.finish()?;

    let net_path = c.out.join("pinn_network.hmxn");
    fs::write(&net_path, encode_network(&run.net)).with_context(|| format!("writing {}", net_path.display()))?;
    println!(
        "trained {steps} steps: final loss {:.3e}, relative L2 error {:.4e}",
        run.losses.last().copied().unwrap_or(f64::NAN),
        base
    );
    Ok(())
}

/// One row of the bound battery.
struct BoundRow {
    check: &'static str,
    family: String,
    seed: u64,
    epsilon: f64,
    delta: f64,
    measured: f64,
    bound: f64,
    literal_bound: Option<f64>,
    applicable: bool,
    passed: bool,
}

impl BoundRow {
    fn from_check(check: &'static str, family: String, seed: u64, epsilon: f64, delta: f64, measured: f64, b: BoundCheck) -> Self {
        BoundRow {
            check,
            family,
            seed,
            epsilon,
            delta,
            measured,
            bound: b.bound,
            literal_bound: None,
            applicable: b.applicable,
            passed: b.passed,
        }
    }
}

pub fn bounds(c: &Common, n: usize, count: u64, ladder: &[f64]) -> Result<bool> {
    anyhow::ensure!(count > 0, "need at least one seed");
    let seeds: Vec<u64> = (c.seed..c.seed + count).collect();
    let mut rows = Vec::new();

    for b in global_bound_cases(&bound_families(), n, &seeds, ladder)? {
        let family = b.kind.to_string();
        rows.push(BoundRow {
            check: "global_bound",
            family: family.clone(),
            seed: b.seed,
            epsilon: b.epsilon,
            delta: 0.0,
            measured: b.measured,
            bound: b.bound,
            literal_bound: None,
            applicable: true,
            passed: b.global_bound_holds(),
        });
        rows.push(BoundRow {
            check: "triangle",
            family,
            seed: b.seed,
            epsilon: b.epsilon,
            delta: 0.0,
            measured: b.measured,
            bound: b.leaf_sum,
            literal_bound: None,
            applicable: true,
            passed: b.triangle_holds(),
        });
    }

    let kernel = MatrixKind::KernelBand;
    for &eps in ladder {
        for p in perturbation_cases(kernel, n, eps, &seeds, &DELTA_FRACS)? {
            rows.push(BoundRow {
                check: "perturbation",
                family: kernel.to_string(),
                seed: p.seed,
                epsilon: eps,
                delta: p.delta,
                measured: p.measured,
                bound: p.consistent_bound,
                literal_bound: Some(p.literal_bound),
                applicable: true,
                passed: p.holds(),
            });
        }
    }

    for cc in condition_cases(&CONDITION_KAPPAS, n, ladder, c.seed)? {
        let d = cc.diagnostics;
        let family = MatrixKind::GeometricSpectrum { kappa: cc.kappa }.to_string();
        let kh = d.h.condition_number;
        rows.push(BoundRow::from_check("condition_perturbation", family.clone(), c.seed, cc.epsilon, d.tau_measured, kh, d.perturbation_bound));
        rows.push(BoundRow::from_check("condition_effective", family, c.seed, cc.epsilon, d.tau_measured, kh, d.effective_sigma_bound));
    }

    let adv_kind = MatrixKind::GeometricSpectrum { kappa: ADVERSARIAL_KAPPA };
    let a = generate_matrix(adv_kind, n, c.seed)?;
    for &eps in ladder {
        let h = build_adaptive(&a, &BuildConfig::new(eps)?)?;
        for (p, &s) in adversarial_cases(&h, ADVERSARIAL_FRAC, &seeds)?.iter().zip(&seeds) {
            rows.push(BoundRow::from_check("adversarial", adv_kind.to_string(), s, eps, p.delta, p.kappa_perturbed, p.check));
        }
    }

    let mut out = CsvOut::create(
        &c.out,
        "bounds.csv",
        c.seed,
        &format!("n={n} seeds={seeds:?} ladder={}", floats(ladder)),
        &[
            "perturbation bound is eps*sqrt(n_r) + delta; literal_bound is eps + delta",
            "condition and adversarial rows compare condition numbers; inapplicable rows have bound inf",
        ],
        &["check", "family", "seed", "epsilon", "delta", "measured", "bound", "literal_bound", "applicable", "passed"],
    )?;
    for r in &rows {
        out.row([
            r.check.to_string(),
            r.family.clone(),
            r.seed.to_string(),
            num(r.epsilon),
            num(r.delta),
            num(r.measured),
            num(r.bound),
            r.literal_bound.map_or(String::new(), num),
            r.applicable.to_string(),
            r.passed.to_string(),
        ])?;
    }
    out.finish()?;

    let mut all_ok = true;
    for check in ["global_bound", "triangle", "perturbation", "condition_perturbation", "condition_effective", "adversarial"] {
        let sel: Vec<&BoundRow> = rows.iter().filter(|r| r.check == check).collect();
        let applicable = sel.iter().filter(|r| r.applicable).count();
        let failed = sel.iter().filter(|r| r.applicable && !r.passed).count();
        all_ok &= failed == 0;
        println!(
            "{} {check}: {}/{applicable} applicable rows hold ({} rows)",
            if failed == 0 { "PASS" } else { "FAIL" },
            applicable - failed,
            sel.len()
        );
    }
    Ok(all_ok)
}

pub fn ntk(c: &Common, ladder: &[f64]) -> Result<()> {
    let d = ntk_experiment(c.seed, ladder)?;
    let layers = d.first().map_or(0, |r| r.layer_errors.len());
    let mut cols: Vec<String> = ["epsilon", "deviation", "relative_deviation"].map(String::from).to_vec();
    cols.extend((1..=layers).map(|k| format!("layer{k}_error")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(
        &c.out,
        "ntk.csv",
        c.seed,
        &format!("sizes=[1, 16, 16, 1] hidden=geometric_spectrum(kappa=1e12) samples=8 ladder={}", floats(ladder)),
        &["deviation is the Frobenius norm of the tangent-kernel difference on the samples"],
        &col_refs,
    )?;
    for r in &d {
        let mut row = vec![num(r.epsilon), num(r.deviation), num(r.relative)];
        row.extend(r.layer_errors.iter().map(|e| num(*e)));
        out.row(row)?;
    }
    out.finish()?;
    let devs: Vec<f64> = d.iter().map(|r| r.deviation).collect();
    match loglog_slope(ladder, &devs) {
        Some(s) => println!("log-log slope of deviation against eps: {s:.4}"),
        None => println!("log-log slope undefined (a deviation is zero or fewer than two tolerances)"),
    }
    Ok(())
}

pub fn propagate(c: &Common, n: &NetworkArgs, ladder: &[f64]) -> Result<()> {
    let (_, net, desc) = load_network(c, n)?;
    let probe = propagation_probe();
    let mut out = CsvOut::create(
        &c.out,
        "propagate.csv",
        c.seed,
        &format!("{desc} probe=32 ladder={}", floats(ladder)),
        &[
            "cumulative_error is the relative output error after compressing layers 1..layer",
            "prune and quantize parameters are matched to the hmatrix storage at each tolerance",
        ],
        &["tolerance", "method", "parameter", "layer", "cumulative_error"],
    )?;
    for &eps in ladder {
        for spec in matched_specs(&net, eps)? {
            for r in error_propagation(&net, &spec, &probe)? {
                out.row([num(eps), r.method.name().to_string(), num(r.parameter), r.layer.to_string(), num(r.cumulative_error)])?;
            }
        }
    }
    let path = out.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(c: &Common, n: &NetworkArgs, ladder: &[f64]) -> Result<()> {
    let (prob, net, desc) = load_network(c, n)?;
    let base = relative_l2_error(&net, &prob)?;
    let mut specs = Vec::new();
    for &eps in ladder {
        specs.push(CompressorSpec::new(Method::HMatrix, eps)?);
        specs.push(CompressorSpec::new(Method::SvdGlobal, eps)?);
    }
    for s in PRUNE_SPARSITIES {
        specs.push(CompressorSpec::new(Method::Prune, s)?);
    }
    for b in QUANTIZE_BITS {
        specs.push(CompressorSpec::new(Method::Quantize, b)?);
    }
    let eval = |m: &Network| relative_l2_error(m, &prob);
    let mut out = CsvOut::create(
        &c.out,
        "sweep.csv",
        c.seed,
        &format!(
            "{desc} ladder={} sparsities={} bits={}",
            floats(ladder),
            floats(&PRUNE_SPARSITIES),
            floats(&QUANTIZE_BITS)
        ),
        &["parameter is a tolerance, a sparsity or a bit width by method"],
        &["tolerance", "method", "parameter", "compression_ratio", "relative_l2", "degradation"],
    )?;
    out.row(["".into(), "dense".into(), "".into(), num(1.0), num(base), num(1.0)])?;
    for row in tradeoff_sweep(&net, &eval, &specs)? {
        tradeoff_line(&mut out, None, &row, base)?;
    }
    let path = out.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}
