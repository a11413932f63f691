use super::{reconstruct, HMatrix};
use crate::error::{check_len, Result};
use crate::generate::random_dense;
use crate::linalg::{spectrum_from_values, svd, DenseMatrix, SpectrumReport};

/// Relative slack allowed when comparing a condition number to its bound.
pub const BOUND_REL_TOL: f64 = 1e-6;

/// One condition-number bound evaluated against the observed `κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    /// `false` when the bound's denominator is not positive.
    pub applicable: bool,
    /// Bound value, `+∞` when inapplicable.
    pub bound: f64,
    /// `(bound − κ) / bound`; nonnegative when the bound holds exactly.
    pub margin: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn evaluate(kappa: f64, bound: Option<f64>) -> Self {
        match bound {
            Some(b) if b.is_finite() && b > 0.0 => {
                let passed = kappa <= b * (1.0 + BOUND_REL_TOL);
                BoundCheck {
                    applicable: true,
                    bound: b,
                    margin: (b - kappa) / b,
                    passed,
                }
            }
            _ => BoundCheck {
                applicable: false,
                bound: f64::INFINITY,
                margin: f64::NAN,
                passed: true,
            },
        }
    }
}

/// Condition numbers of a source matrix and its approximation, with the two
/// a priori bounds on `κ(H)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralDiagnostics {
    pub a: SpectrumReport,
    pub h: SpectrumReport,
    /// `‖A − H‖₂`.
    pub tau_measured: f64,
    /// `σ_min(H)`.
    pub sigma_k_eff: f64,
    /// `κ(A) (1 + e / (σ_min(A) − e))` with `e = ‖A − H‖₂`.
    pub perturbation_bound: BoundCheck,
    /// `κ(A) (1 + e / σ_min(H))`.
    pub effective_sigma_bound: BoundCheck,
}

impl SpectralDiagnostics {
    pub fn a_singular(&self) -> bool {
        self.a.is_singular()
    }

    /// Every applicable bound holds.
    pub fn passed(&self) -> bool {
        self.perturbation_bound.passed && self.effective_sigma_bound.passed
    }
}

/// Evaluates both condition-number bounds for `h` as an approximation of `a`.
///
/// Both bounds are inapplicable when `a` is singular or `σ_min(A) ≤ ‖A − H‖₂`;
/// otherwise `H` is nonsingular by Weyl's inequality.
pub fn spectral_diagnostics(h: &HMatrix, a: &DenseMatrix) -> Result<SpectralDiagnostics> {
    check_len("diagnostics rows", h.rows(), a.rows())?;
    check_len("diagnostics cols", h.cols(), a.cols())?;
    let hd = reconstruct(h);
    let max_dim = a.rows().max(a.cols());
    let sa = spectrum_from_values(&svd(a)?.singular_values, max_dim);
    let sh = spectrum_from_values(&svd(&hd)?.singular_values, max_dim);
    let diff = a.sub(&hd)?;
    let e = svd(&diff)?.singular_values.first().copied().unwrap_or(0.0);

    let usable = !sa.is_singular() && sa.sigma_min > e && !sh.is_singular();
    let b1 = usable.then(|| sa.condition_number * (1.0 + e / (sa.sigma_min - e)));
    let b3 = usable.then(|| sa.condition_number * (1.0 + e / sh.sigma_min));
    Ok(SpectralDiagnostics {
        a: sa,
        h: sh,
        tau_measured: e,
        sigma_k_eff: sh.sigma_min,
        perturbation_bound: BoundCheck::evaluate(sh.condition_number, b1),
        effective_sigma_bound: BoundCheck::evaluate(sh.condition_number, b3),
    })
}

/// Result of perturbing a matrix by a random `ΔH` with `‖ΔH‖₂ = δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationCheck {
    pub kappa: f64,
    pub kappa_perturbed: f64,
    pub delta: f64,
    /// `κ(H) (1 + δ / σ_min(H))`.
    pub check: BoundCheck,
}

/// Seeded Gaussian perturbation rescaled to spectral norm `delta`, and the
/// resulting condition number against `κ(H)(1 + δ/σ_min(H))`.
pub fn perturbed_condition(hd: &DenseMatrix, delta: f64, seed: u64) -> Result<PerturbationCheck> {
    let (m, n) = hd.shape();
    let g = random_dense(m, n, seed);
    let gnorm = svd(&g)?.singular_values[0];
    let p = hd.add(&g.scaled(delta / gnorm))?;
    let max_dim = m.max(n);
    let s0 = spectrum_from_values(&svd(hd)?.singular_values, max_dim);
    let s1 = spectrum_from_values(&svd(&p)?.singular_values, max_dim);
    let bound = (!s0.is_singular() && s0.sigma_min > delta).then(|| s0.condition_number * (1.0 + delta / s0.sigma_min));
    Ok(PerturbationCheck {
        kappa: s0.condition_number,
        kappa_perturbed: s1.condition_number,
        delta,
        check: BoundCheck::evaluate(s1.condition_number, bound),
    })
}
