use hmx_core::baselines::{
    error_propagation, prune_magnitude, quantization_scale, quantize_uniform, svd_compress_global, CompressorSpec, Method,
};
use hmx_core::experiments::propagation_probe;
use hmx_core::generate::{generate_matrix, random_dense, MatrixKind};
use hmx_core::hmatrix::{build_adaptive, measured_error, BuildConfig};
use hmx_core::linalg::{frobenius_norm, svd, tail_norms};
use hmx_core::nn::init_network;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_global_error_is_frobenius_tail(m in 1usize..=20, n in 1usize..=20, seed in any::<u64>(), eps in 0.0f64..3.0) {
        let w = random_dense(m, n, seed);
        let (approx, rep) = svd_compress_global(&w, eps).unwrap();
        let tails = tail_norms(&svd(&w).unwrap().singular_values);
        let k = rep.rank.unwrap();
        prop_assert_eq!(rep.error, tails[k]);
        prop_assert!(rep.error <= eps);
        let direct = frobenius_norm(&w.sub(&approx).unwrap());
        prop_assert!((direct - rep.error).abs() <= 1e-9 * frobenius_norm(&w));
    }

    #[test]
    fn prune_keeps_ceiling_of_surviving_fraction(m in 1usize..=20, n in 1usize..=20, seed in any::<u64>(), s in 0.0f64..1.0) {
        let w = random_dense(m, n, seed);
        let (p, rep) = prune_magnitude(&w, s).unwrap();
        let kept = p.as_slice().iter().filter(|v| **v != 0.0).count();
        prop_assert_eq!(kept, ((1.0 - s) * (m * n) as f64).ceil() as usize);
        prop_assert_eq!(rep.compression_ratio, kept as f64 / (m * n) as f64);
        let min_kept = p.as_slice().iter().filter(|v| **v != 0.0).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let max_dropped = w.as_slice().iter().zip(p.as_slice()).filter(|(_, q)| **q == 0.0).map(|(v, _)| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_dropped <= min_kept);
    }

    #[test]
    fn quantize_error_within_half_step(m in 1usize..=20, n in 1usize..=20, seed in any::<u64>(), bits in 2u32..=16) {
        let w = random_dense(m, n, seed);
        let (q, rep) = quantize_uniform(&w, bits).unwrap();
        let scale = quantization_scale(&w, bits);
        for (a, b) in w.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() <= scale / 2.0 + 1e-15);
        }
        prop_assert_eq!(rep.compression_ratio, bits as f64 / 64.0);
    }

    #[test]
    fn tolerance_curves_accumulate(seed in any::<u64>(), method in prop::sample::select(vec![Method::HMatrix, Method::SvdGlobal]), tol in prop::sample::select(vec![1e-1, 1e-2, 1e-3])) {
        let net = init_network(&[1, 16, 16, 1], seed).unwrap();
        let c = error_propagation(&net, &CompressorSpec::new(method, tol).unwrap(), &propagation_probe()).unwrap();
        prop_assert_eq!(c.len(), 3);
        prop_assert!(c.iter().enumerate().all(|(i, r)| r.layer == i + 1));
        prop_assert!(c.iter().all(|r| r.cumulative_error >= 0.0));
        prop_assert!(c.windows(2).all(|w| w[1].cumulative_error >= w[0].cumulative_error), "{:?}", c.iter().map(|r| r.cumulative_error).collect::<Vec<_>>());
    }
}

/// At the storage of the adaptive build, a single global truncation of the
/// banded kernel loses more than the block-wise approximation.
#[test]
fn hmatrix_beats_global_svd_at_equal_storage_on_kernel() {
    for n in [256, 512] {
        let a = generate_matrix(MatrixKind::KernelBand, n, 0).unwrap();
        for eps in [1e-2, 1e-4] {
            let h = build_adaptive(&a, &BuildConfig::new(eps).unwrap()).unwrap();
            let h_err = measured_error(&h, &a).unwrap().global;
            let k = (h.stored_scalars() / (2 * n)).min(n);
            let svd_err = tail_norms(&svd(&a).unwrap().singular_values)[k];
            assert!(h_err <= svd_err, "n {n} eps {eps}: {h_err} > {svd_err} at rank {k}");
        }
    }
}
