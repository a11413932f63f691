//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use hmx_core::baselines::{CompressorSpec, Method};
use hmx_core::experiments::*;
use hmx_core::generate::{generate_matrix, MatrixKind};
use hmx_core::hmatrix::{build_adaptive, decode_hmatrix, encode_hmatrix, BuildConfig};
use hmx_core::nn::{compress_network, decode_network, encode_network, init_network, Network};
use hmx_core::pinn::{relative_l2_error, PinnRun, PoissonProblem};

struct Outcome {
    passed: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(passed: bool, summary: impl Into<String>) -> Self {
        Outcome {
            passed,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn detail(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

type Criterion<'a> = (&'static str, Option<Duration>, Box<dyn FnOnce() -> Outcome + 'a>);

fn within(limit: Option<Duration>, elapsed: Duration) -> bool {
    limit.is_none_or(|l| elapsed <= l)
}

fn criterion_1_2() -> (Outcome, Outcome) {
    let fams = bound_families();
    let mut cases = Vec::new();
    for seed in 0..30u64 {
        let kind = fams[seed as usize % fams.len()];
        cases.extend(global_bound_cases(&[kind], 256, &[seed], &[1e-2, 1e-4, 1e-6]).expect("bound cases"));
    }
    let bound_ok = cases.iter().filter(|c| c.global_bound_holds()).count();
    let tri_ok = cases.iter().filter(|c| c.triangle_holds()).count();
    let worst = cases
        .iter()
        .map(|c| (c.measured - c.bound) / c.source_norm)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut o1 = Outcome::new(
        bound_ok == cases.len(),
        format!("{bound_ok}/{} cases within eps*sqrt(n_r) + 1e-9*|A|_F (max excess/|A|_F = {worst:.3e})", cases.len()),
    );
    for kind in fams {
        let n_r: Vec<usize> = cases.iter().filter(|c| c.kind == kind).map(|c| c.n_r).collect();
        o1 = o1.detail(format!("{}: n_r range {:?}..{:?}", kind.name(), n_r.iter().min(), n_r.iter().max()));
    }
    let o2 = Outcome::new(tri_ok == cases.len(), format!("{tri_ok}/{} cases with global error <= sum of leaf errors", cases.len()));
    (o1, o2)
}

fn criterion_3() -> Outcome {
    let seeds: Vec<u64> = (0..20).collect();
    let cases = perturbation_cases(MatrixKind::KernelBand, 256, 1e-4, &seeds, &[1e-6, 1e-3, 1e-1]).expect("perturbation cases");
    let ok = cases.iter().filter(|c| c.holds()).count();
    let literal_ok = cases.iter().filter(|c| c.measured <= c.literal_bound).count();
    let mut o = Outcome::new(
        ok == cases.len(),
        format!("{ok}/{} rebuilds within eps*sqrt(n_r) + delta ({literal_ok}/{} also within literal eps + delta)", cases.len(), cases.len()),
    );
    for c in cases.iter().filter(|c| c.seed == 0) {
        o = o.detail(format!(
            "delta {:.3e}: measured {:.3e}, consistent {:.3e}, literal {:.3e}, n_r {}",
            c.delta, c.measured, c.consistent_bound, c.literal_bound, c.n_r
        ));
    }
    o
}

fn criterion_4() -> Outcome {
    let kappas = [1e2, 1e4, 1e6];
    let cases = condition_cases(&kappas, 128, &[1e-1, 1e-2, 1e-4, 1e-6, 1e-8], 0).expect("condition cases");
    let mut failures = 0;
    let mut applicable_per_kappa = Vec::new();
    let mut o = Outcome::new(true, "");
    for &k in &kappas {
        let rows: Vec<&ConditionCase> = cases.iter().filter(|c| c.kappa == k).collect();
        applicable_per_kappa.push(rows.iter().filter(|c| c.diagnostics.perturbation_bound.applicable).count());
        for c in rows {
            let d = &c.diagnostics;
            for b in [d.perturbation_bound, d.effective_sigma_bound] {
                if b.applicable && !(b.margin >= 0.0) {
                    failures += 1;
                }
            }
            o = o.detail(format!(
                "kappa {:.0e} eps {:.0e}: |A-H|_2 {:.3e}, kappa(H) {:.6e}, perturbation bound {}, effective bound {}",
                k,
                c.epsilon,
                d.tau_measured,
                d.h.condition_number,
                fmt_bound(d.perturbation_bound.applicable, d.perturbation_bound.bound, d.perturbation_bound.margin),
                fmt_bound(d.effective_sigma_bound.applicable, d.effective_sigma_bound.bound, d.effective_sigma_bound.margin),
            ));
        }
    }
    o.passed = failures == 0 && applicable_per_kappa.iter().all(|&n| n > 0);
    o.summary = format!("{failures} applicable rows with negative margin; applicable rows per kappa {applicable_per_kappa:?}");
    o
}

fn fmt_bound(applicable: bool, bound: f64, margin: f64) -> String {
    if applicable {
        format!("{bound:.6e} (margin {margin:.2e})")
    } else {
        "inapplicable".to_string()
    }
}

fn criterion_5() -> Outcome {
    let a = generate_matrix(MatrixKind::GeometricSpectrum { kappa: 1e4 }, 128, 0).expect("matrix");
    let h = build_adaptive(&a, &BuildConfig::new(1e-8).expect("config")).expect("build");
    let seeds: Vec<u64> = (0..20).collect();
    let checks = adversarial_cases(&h, 0.1, &seeds).expect("perturbations");
    let ok = checks.iter().filter(|c| c.check.applicable && c.check.passed).count();
    let min_margin = checks.iter().map(|c| c.check.margin).fold(f64::INFINITY, f64::min);
    Outcome::new(
        ok == checks.len(),
        format!("{ok}/{} perturbations with kappa(H+dH) <= kappa(H)(1 + delta/sigma_min(H)) (min margin {min_margin:.3e})", checks.len()),
    )
}

fn criterion_6() -> Outcome {
    let (h, profile) = kernel_depth_profile(512, 1e-5).expect("profile");
    let block: Vec<f64> = profile.iter().map(|l| l.max_block_error).collect();
    let leaf: Vec<f64> = profile.iter().map(|l| l.max_leaf_error).collect();
    let ratio = mean_decay_ratio(&block);
    let leaf_ratio = mean_decay_ratio(&leaf);
    let mut o = Outcome::new(
        ratio.is_some_and(|r| r <= 0.75),
        format!(
            "mean per-level ratio of max block error {} (leaf-error column {}), ratio {:.4}",
            ratio.map_or("n/a".into(), |r| format!("{r:.4}")),
            leaf_ratio.map_or("n/a".into(), |r| format!("{r:.4}")),
            h.compression_ratio()
        ),
    );
    for l in &profile {
        o = o.detail(format!(
            "level {}: blocks {}, low-rank leaves {}, max block error {:.4e}, max leaf error {:.4e}",
            l.level, l.blocks, l.low_rank_leaves, l.max_block_error, l.max_leaf_error
        ));
    }
    o
}

fn criterion_7() -> Outcome {
    let ladder = ntk_ladder();
    let d = ntk_experiment(0, &ladder).expect("ntk");
    let dev: Vec<f64> = d.iter().map(|r| r.deviation).collect();
    let monotone = dev.windows(2).all(|w| w[1] <= w[0]);
    let slope = loglog_slope(&ladder, &dev);
    let constant = d.iter().map(|r| r.deviation / r.epsilon).fold(0.0, f64::max);
    let mut o = Outcome::new(
        monotone && slope.is_some_and(|s| (0.5..=1.5).contains(&s)),
        format!(
            "monotone {monotone}, log-log slope {}, max |dTheta|/eps {constant:.3e}",
            slope.map_or("n/a".into(), |s| format!("{s:.4}"))
        ),
    );
    for r in &d {
        o = o.detail(format!("eps {:.0e}: |Theta - Theta_H|_F {:.4e} (relative {:.3e})", r.epsilon, r.deviation, r.relative));
    }
    o
}

fn criterion_8() -> Outcome {
    let checks = gradient_checks(50).expect("gradients");
    let ok = checks.iter().filter(|c| c.relative_error <= 1e-5).count();
    let worst = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Outcome::new(ok == checks.len(), format!("{ok}/{} central-difference checks within 1e-5 relative (worst {worst:.3e})", checks.len()))
}

fn criterion_9(prob: &PoissonProblem, run: &PinnRun) -> Outcome {
    let base = run.relative_l2;
    let cps = checkpoints(&run.losses, 100);
    let monotone = cps.windows(2).all(|w| w[1].1 <= w[0].1);
    let (factor, rep) = degradation_factor(&run.net, prob, 1e-3).expect("compressed fixture");
    Outcome::new(
        base < 1e-2 && factor <= 10.0,
        format!("relative L2 {base:.4e}, degradation at eps=1e-3 {factor:.4}x (network ratio {:.4})", rep.compression_ratio),
    )
    .detail(format!(
        "loss {:.4e} -> {:.4e}; checkpoints every 100 steps nonincreasing: {monotone}",
        run.losses[0],
        run.losses[run.losses.len() - 1]
    ))
}

fn criterion_10() -> Outcome {
    let n = 4096;
    let b = bench_matvec(n, 1e-5, 21, 0).expect("bench");
    let cap = 0.35 * (n * n) as f64;
    Outcome::new(
        b.hmatvec_seconds < b.dense_seconds && (b.stored_scalars as f64) < cap,
        format!(
            "hmatvec {:.3e}s vs dense {:.3e}s; stored {} < {cap:.0} ({:.4} n^2); build {:.1}s; relative product error {:.2e}",
            b.hmatvec_seconds,
            b.dense_seconds,
            b.stored_scalars,
            b.stored_scalars as f64 / (n * n) as f64,
            b.build_seconds,
            b.relative_error
        ),
    )
}

/// Tolerance ladder for the matched-ratio comparison.
const DOMINANCE_LADDER: [f64; 6] = [1.0, 0.5, 0.3, 1e-1, 1e-2, 1e-3];

/// Largest H ratio treated as a compressed operating point: within the
/// matching window of `±0.1` the uncompressed network itself is a match.
const MAX_MATCHED_RATIO: f64 = 0.9;

fn criterion_11(prob: &PoissonProblem, net: &Network) -> Outcome {
    let eval = |n: &Network| relative_l2_error(n, prob);
    let rows = baseline_dominance(net, &eval, &DOMINANCE_LADDER).expect("dominance");
    let mut compared = 0;
    let mut wins = 0;
    let mut o = Outcome::new(true, "");
    for r in &rows {
        let matched = (r.hmatrix.compression_ratio - r.prune.compression_ratio).abs() <= 0.1;
        let scored = matched && r.hmatrix.compression_ratio <= MAX_MATCHED_RATIO;
        let h_better = r.hmatrix.metric <= r.prune.metric;
        if scored {
            compared += 1;
            wins += usize::from(h_better);
        }
        o = o.detail(format!(
            "eps {:.0e}: hmatrix ratio {:.4} error {:.4e} | prune ratio {:.4} error {:.4e} | {}",
            r.epsilon,
            r.hmatrix.compression_ratio,
            r.hmatrix.metric,
            r.prune.compression_ratio,
            r.prune.metric,
            match (scored, h_better) {
                (true, true) => "scored, hmatrix <= prune",
                (true, false) => "scored, hmatrix > prune",
                (false, true) => "not scored (ratio > 0.9), hmatrix <= prune",
                (false, false) => "not scored (ratio > 0.9), hmatrix > prune",
            }
        ));
    }
    o.passed = compared > 0 && wins == compared;
    o.summary = format!("hmatrix error <= pruning error at {wins}/{compared} matched operating points with ratio <= {MAX_MATCHED_RATIO}");
    o
}

fn criterion_12(net: &Network) -> (Outcome, Vec<String>) {
    let probe = propagation_probe();
    let mut specs = Vec::new();
    for m in [Method::HMatrix, Method::SvdGlobal] {
        for t in PROPAGATION_TOLERANCES {
            specs.push(CompressorSpec::new(m, t).expect("spec"));
        }
    }
    let curves = propagation_curves(net, &specs, &probe).expect("propagation");
    let mut monotone = 0;
    let mut o = Outcome::new(true, "");
    for c in &curves {
        let m = is_nondecreasing(c);
        monotone += usize::from(m);
        o = o.detail(format!(
            "{} {:.0e}: {:?} nondecreasing {m}",
            c[0].method,
            c[0].parameter,
            c.iter().map(|r| format!("{:.3e}", r.cumulative_error)).collect::<Vec<_>>()
        ));
    }
    let final_at = |m: Method| {
        curves
            .iter()
            .find(|c| c[0].method == m && c[0].parameter == 1e-1)
            .and_then(|c| c.last())
            .map(|r| r.cumulative_error)
            .expect("curve")
    };
    let (h, s) = (final_at(Method::HMatrix), final_at(Method::SvdGlobal));
    o.passed = monotone == curves.len() && h <= s;
    o.summary = format!("{monotone}/{} tolerance curves nondecreasing; final-layer error at 1e-1: hmatrix {h:.4e} <= svd_global {s:.4e}: {}", curves.len(), h <= s);

    let mut info = Vec::new();
    let extra = [(Method::Prune, [0.1, 0.25, 0.5]), (Method::Quantize, [12.0, 8.0, 4.0])];
    for (m, params) in extra {
        for p in params {
            let c = hmx_core::baselines::error_propagation(net, &CompressorSpec::new(m, p).expect("spec"), &probe).expect("curve");
            info.push(format!(
                "{m} {p}: {:?} nondecreasing {}",
                c.iter().map(|r| format!("{:.3e}", r.cumulative_error)).collect::<Vec<_>>(),
                is_nondecreasing(&c)
            ));
        }
    }
    (o, info)
}

fn criterion_13() -> Outcome {
    let fams = bound_families();
    let eps = [1e-2, 1e-4, 1e-6];
    let mut h_ok = 0;
    for s in 0..20u64 {
        let i = s as usize;
        let a = generate_matrix(fams[i % 4], 32 + 16 * (i % 5), s).expect("matrix");
        let cfg = BuildConfig::new(eps[i % 3]).and_then(|c| c.with_min_block(4 + 4 * (i % 3))).expect("config");
        let h = build_adaptive(&a, &cfg).expect("build");
        let bytes = encode_hmatrix(&h);
        if let Ok(back) = decode_hmatrix(&bytes) {
            h_ok += usize::from(back == h && encode_hmatrix(&back) == bytes);
        }
    }
    let mut n_ok = 0;
    for s in 0..20u64 {
        let i = s as usize;
        let sizes = [1 + i % 3, 4 + i % 13, 8 + i % 5, 1];
        let dense = init_network(&sizes, s).expect("network");
        let net = if i % 2 == 0 { compress_network(&dense, eps[i % 3]).expect("compress").0 } else { dense };
        let bytes = encode_network(&net);
        if let Ok(back) = decode_network(&bytes) {
            n_ok += usize::from(back == net && encode_network(&back) == bytes);
        }
    }
    Outcome::new(h_ok == 20 && n_ok == 20, format!("HMX1 {h_ok}/20 and HMXN {n_ok}/20 bit-exact round trips"))
}

fn main() -> ExitCode {
    let fixture = std::cell::OnceCell::new();
    let pinn = || fixture.get_or_init(|| pinn_fixture().expect("trained fixture"));
    let bounds = std::cell::OnceCell::new();
    let bound_pair = || bounds.get_or_init(criterion_1_2);
    let mut info = Vec::new();

    let criteria: Vec<Criterion> = vec![
        ("1 global error bound", Some(Duration::from_secs(120)), Box::new(|| {
            let o = &bound_pair().0;
            Outcome { passed: o.passed, summary: o.summary.clone(), details: o.details.clone() }
        })),
        ("2 triangle bound", None, Box::new(|| {
            let o = &bound_pair().1;
            Outcome { passed: o.passed, summary: o.summary.clone(), details: o.details.clone() }
        })),
        ("3 perturbation stability", None, Box::new(criterion_3)),
        ("4 condition-number bounds", Some(Duration::from_secs(120)), Box::new(criterion_4)),
        ("5 adversarial-form bound", None, Box::new(criterion_5)),
        ("6 refinement decay", None, Box::new(criterion_6)),
        ("7 tangent kernel preservation", Some(Duration::from_secs(60)), Box::new(criterion_7)),
        ("8 gradient correctness", None, Box::new(criterion_8)),
        ("9 poisson fixture", Some(Duration::from_secs(300)), Box::new(|| {
            let (prob, run) = pinn();
            criterion_9(prob, run)
        })),
        ("10 matvec performance", Some(Duration::from_secs(180)), Box::new(criterion_10)),
        ("11 baseline dominance", None, Box::new(|| {
            let (prob, run) = pinn();
            criterion_11(prob, &run.net)
        })),
        ("12 error propagation", None, Box::new(|| {
            let (o, lines) = criterion_12(&pinn().1.net);
            info.extend(lines);
            o
        })),
        ("13 serialization", None, Box::new(criterion_13)),
    ];

    let mut failed = 0;
    for (name, limit, run) in criteria {
        let t = Instant::now();
        let mut o = run();
        let elapsed = t.elapsed();
        if !within(limit, elapsed) {
            o.passed = false;
            o.summary = format!("{} [over time limit {:?}]", o.summary, limit.unwrap_or_default());
        }
        failed += usize::from(!o.passed);
        println!("{} criterion {name}: {} ({:.2}s)", if o.passed { "PASS" } else { "FAIL" }, o.summary, elapsed.as_secs_f64());
        for d in &o.details {
            println!("    {d}");
        }
    }
    for line in &info {
        println!("INFO propagation outside the tolerance sweep: {line}");
    }
    println!("{} of 13 criteria passed", 13 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
