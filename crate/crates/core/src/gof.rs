//! The information-matrix goodness-of-fit test.
//!
//! Under a correctly specified model the expected Hessian and the expected
//! outer product of the score cancel. The test measures how far their
//! sample counterparts are from cancelling, scaled by an estimate of the
//! asymptotic covariance that accounts for the estimated parameters.

use crate::diff::{information_parts, DiffMethod, InfoParts};
use crate::error::{Result, VineError};
use crate::rng::derive_seed;
use crate::sample::CopulaSample;
use crate::special::chi2_sf;
use crate::vine::{refit, FitOptions, RVineModel};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hessians with a condition number above this are treated as singular.
pub const MAX_HESSIAN_CONDITION: f64 = 1e12;
/// Relative eigenvalue floor used when the covariance estimate is not positive definite.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Largest tolerated fraction of failed bootstrap replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// A model together with the fingerprint of the sample its parameters were estimated on.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub model: RVineModel,
    fingerprint: Option<u64>,
}

impl FittedModel {
    /// Estimate the parameters of `template` on `sample`.
    pub fn fit(template: &RVineModel, sample: &CopulaSample, opts: &FitOptions) -> Result<Self> {
        Ok(FittedModel { model: refit(template, sample, opts)?, fingerprint: Some(sample.fingerprint()) })
    }

    /// Record that `model` was estimated on `sample` elsewhere.
    pub fn fitted_on(model: RVineModel, sample: &CopulaSample) -> Self {
        FittedModel { model, fingerprint: Some(sample.fingerprint()) }
    }

    /// A model with externally supplied parameters.
    pub fn external(model: RVineModel) -> Self {
        FittedModel { model, fingerprint: None }
    }

    pub fn is_fitted_on(&self, sample: &CopulaSample) -> bool {
        self.fingerprint == Some(sample.fingerprint())
    }
}

#[derive(Clone, Debug)]
pub struct GofOptions {
    pub diff: DiffMethod,
    /// Evaluate the statistic even if the parameters were not estimated on the sample.
    pub allow_unfitted: bool,
    /// Estimation used by bootstrap refits.
    pub fit: FitOptions,
}

impl Default for GofOptions {
    fn default() -> Self {
        GofOptions { diff: DiffMethod::Auto, allow_unfitted: false, fit: FitOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_asymptotic: f64,
    pub p_bootstrap: Option<f64>,
    pub regularized: bool,
    /// Ratio of the largest to the smallest eigenvalue of the covariance estimate.
    pub v_condition: f64,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    #[serde(rename = "N")]
    pub big_n: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_failures: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl GofResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

#[derive(Clone, Debug)]
pub struct VhatEstimate {
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl VhatEstimate {
    pub fn condition(&self) -> f64 {
        if self.min_eigenvalue > 0.0 {
            self.max_eigenvalue / self.min_eigenvalue
        } else {
            f64::INFINITY
        }
    }
}

fn invert_hessian(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = h.clone().symmetric_eigen();
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let (lo, hi) = abs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_HESSIAN_CONDITION) {
        return Err(VineError::SingularHessian { condition });
    }
    h.clone().try_inverse().ok_or(VineError::SingularHessian { condition })
}

/// Covariance estimate from precomputed parts; `parts` must carry the d-vector gradient.
pub fn vhat_from_parts(parts: &InfoParts) -> Result<VhatEstimate> {
    let g = parts.grad_d.as_ref().ok_or_else(|| VineError::Unsupported("d-vector gradient not computed".into()))?;
    let hinv = invert_hessian(&parts.h_bar)?;
    let a = g * hinv;
    let r = &parts.d_obs - &parts.scores * a.transpose();
    let mut v = r.transpose() * &r / parts.n as f64;
    v = (&v + v.transpose()) * 0.5;
    let eig = v.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    let max_eigenvalue = eig.eigenvalues.max();
    Ok(VhatEstimate { matrix: v, min_eigenvalue, max_eigenvalue })
}

/// Asymptotic covariance estimate of the scaled mean d-vector at the model's parameters.
pub fn estimate_vhat(model: &RVineModel, sample: &CopulaSample, diff: DiffMethod) -> Result<VhatEstimate> {
    if model.n_params() == 0 {
        return Err(VineError::Unsupported("the test is undefined for a model without parameters".into()));
    }
    vhat_from_parts(&information_parts(model, sample, diff, true)?)
}

/// `n d' V^-1 d` by Cholesky, or by an eigenvalue-floored inverse when
/// `V` is not positive definite. Returns the statistic and whether the
/// floor was used.
fn quadratic_form(v: &VhatEstimate, d: &DVector<f64>, n: usize) -> (f64, bool) {
    if v.min_eigenvalue > 0.0 {
        if let Some(ch) = v.matrix.clone().cholesky() {
            let x = ch.solve(d);
            return ((n as f64 * d.dot(&x)).max(0.0), false);
        }
    }
    let eig = v.matrix.clone().symmetric_eigen();
    let floor = EIGEN_FLOOR * eig.eigenvalues.max().max(0.0);
    let mut t = 0.0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let c = eig.eigenvectors.column(k).dot(d);
        let l = lam.max(floor);
        if l > 0.0 {
            t += c * c / l;
        }
    }
    (n as f64 * t, true)
}

/// Test statistic from precomputed parts.
pub fn statistic_from_parts(parts: &InfoParts) -> Result<GofResult> {
    let p = parts.p;
    if p == 0 {
        return Err(VineError::Unsupported("the test is undefined for a model without parameters".into()));
    }
    let q = p * (p + 1) / 2;
    let v = vhat_from_parts(parts)?;
    let (statistic, regularized) = quadratic_form(&v, &parts.d_bar, parts.n);
    if !statistic.is_finite() {
        return Err(VineError::Numerical("non-finite test statistic".into()));
    }
    let mut warnings = Vec::new();
    if parts.n <= q {
        warnings.push(format!("n = {} does not exceed the {} moment conditions", parts.n, q));
    }
    Ok(GofResult {
        statistic,
        dof: q,
        p_asymptotic: chi2_sf(statistic, q as f64),
        p_bootstrap: None,
        regularized,
        v_condition: v.condition(),
        n: parts.n,
        p,
        b: None,
        big_n: None,
        seed: None,
        bootstrap_failures: None,
        warnings,
    })
}

/// The information-matrix test for a model whose parameters were estimated on `sample`.
pub fn test_statistic(fitted: &FittedModel, sample: &CopulaSample, opts: &GofOptions) -> Result<GofResult> {
    if !fitted.is_fitted_on(sample) && !opts.allow_unfitted {
        return Err(VineError::ParamsNotFitted);
    }
    let model = &fitted.model;
    if model.n_params() == 0 {
        return Err(VineError::Unsupported("the test is undefined for a model without parameters".into()));
    }
    let parts = information_parts(model, sample, opts.diff, true)?;
    let mut r = statistic_from_parts(&parts)?;
    if !fitted.is_fitted_on(sample) {
        r.warnings.push("parameters were not estimated on this sample".into());
    }
    Ok(r)
}

/// Estimate `template` on `sample` and compute the statistic.
pub fn fit_and_test(template: &RVineModel, sample: &CopulaSample, opts: &GofOptions) -> Result<(RVineModel, GofResult)> {
    let fitted = FittedModel::fit(template, sample, &opts.fit)?;
    let r = test_statistic(&fitted, sample, opts)?;
    Ok((fitted.model, r))
}

#[derive(Clone, Copy, Debug)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates.
    pub b: usize,
    /// Size of each bootstrap sample.
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BootstrapOutcome {
    pub result: GofResult,
    /// Statistics of the successful replicates, by replicate index.
    pub replicates: Vec<Option<f64>>,
}

/// Parametric bootstrap: fit `template` to `sample`, then repeatedly
/// simulate from the fitted model, re-estimate the parameters (structure
/// and families fixed) and recompute the statistic. The p-value is the
/// fraction of successful replicates whose statistic is at least the
/// observed one.
pub fn bootstrap_pvalue(
    template: &RVineModel,
    sample: &CopulaSample,
    cfg: BootstrapConfig,
    opts: &GofOptions,
) -> Result<BootstrapOutcome> {
    if cfg.b < 100 {
        return Err(VineError::Config(format!("at least 100 bootstrap replicates are required, got {}", cfg.b)));
    }
    let (fitted, mut result) = fit_and_test(template, sample, opts)?;
    let t_obs = result.statistic;
    let replicates: Vec<Option<f64>> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let x = fitted.simulate(cfg.n, derive_seed(cfg.seed, &[b as u64])).ok()?;
            fit_and_test(&fitted, &x, opts).ok().map(|(_, r)| r.statistic)
        })
        .collect();
    let ok: Vec<f64> = replicates.iter().flatten().copied().collect();
    let failed = cfg.b - ok.len();
    if failed as f64 > MAX_FAILURE_RATE * cfg.b as f64 {
        return Err(VineError::TooManyFailures { failed, total: cfg.b });
    }
    let exceed = ok.iter().filter(|&&t| t >= t_obs).count();
    result.p_bootstrap = Some(exceed as f64 / ok.len() as f64);
    result.b = Some(cfg.b);
    result.big_n = Some(cfg.n);
    result.seed = Some(cfg.seed);
    result.bootstrap_failures = Some(failed);
    Ok(BootstrapOutcome { result, replicates })
}

/// Empirical p-values of `stats` against a reference sample of statistics:
/// the fraction of `reference` at least as large as each value.
pub fn simulated_pvalues_against(reference: &[f64], stats: &[f64]) -> Vec<f64> {
    let mut sorted = reference.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    stats
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&x| x < t);
            (sorted.len() - below) as f64 / r
        })
        .collect()
}

/// Empirical p-value of every statistic within its own sample.
pub fn simulated_pvalues(stats: &[f64]) -> Vec<f64> {
    simulated_pvalues_against(stats, stats)
}
