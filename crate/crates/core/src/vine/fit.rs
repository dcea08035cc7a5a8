//! Parameter estimation: tree-wise (sequential) and joint maximum likelihood.

use super::model::RVineModel;
use super::structure::{EvalPlan, RVineStructure, Source};
use crate::bicop::fit::{from_unconstrained, to_unconstrained};
use crate::bicop::{fit_pair, fit_pair_from, fit_student_fixed_df, BicopFamily, BicopKind, BicopSpec, PairFit};
use crate::diff::{score_sum, DiffMethod};
use crate::error::{Result, VineError};
use crate::optim::{bfgs, brent_min, BfgsOptions};
use crate::sample::CopulaSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMethod {
    /// Tree by tree, each edge by bivariate maximum likelihood.
    #[default]
    Sequential,
    /// Joint maximization over all parameters, started from the sequential estimate.
    Full,
}

impl std::str::FromStr for EstimationMethod {
    type Err = VineError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(EstimationMethod::Sequential),
            "full" | "mle" => Ok(EstimationMethod::Full),
            _ => Err(VineError::Config(format!("unknown estimation method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    pub method: EstimationMethod,
    pub bfgs: BfgsOptions,
    /// Derivatives used for the joint fit's gradient.
    pub diff: DiffMethod,
    /// Extra jittered starting points for the joint fit.
    pub multistart: usize,
}

impl FitOptions {
    pub fn full() -> Self {
        FitOptions { method: EstimationMethod::Full, ..Default::default() }
    }
}

/// Result of a joint fit.
#[derive(Clone, Debug)]
pub struct FullFit {
    pub model: RVineModel,
    pub loglik: f64,
    pub start_loglik: f64,
    pub iterations: usize,
    /// Mean negative log-likelihood after each accepted step.
    pub trace: Vec<f64>,
}

/// Sequential maximum likelihood: each edge of tree 1 is fitted to the
/// data, its h-functions transform the data for tree 2, and so on.
/// `families[i]` belongs to edge id `i`.
pub fn fit_sequential(structure: &RVineStructure, families: &[BicopFamily], sample: &CopulaSample) -> Result<RVineModel> {
    check_inputs(structure, families.len(), sample)?;
    let plan = EvalPlan::new(structure)?;
    let (pairs, _) = sequential_pass(structure, &plan, sample, |id, a, b| fit_pair(families[id], a, b))?;
    RVineModel::new(structure.clone(), pairs)
}

/// Joint maximum likelihood by BFGS in unconstrained coordinates, started
/// from `start` or from the sequential estimate.
pub fn fit_full(
    structure: &RVineStructure,
    families: &[BicopFamily],
    sample: &CopulaSample,
    start: Option<&RVineModel>,
) -> Result<FullFit> {
    check_inputs(structure, families.len(), sample)?;
    let start = match start {
        Some(m) => {
            if m.structure() != structure || m.families() != families {
                return Err(VineError::Config("start model does not match the structure and families".into()));
            }
            m.clone()
        }
        None => fit_sequential(structure, families, sample)?,
    };
    polish(&start, sample, &FitOptions::full())
}

/// Re-estimate the parameters of `template` on `sample`, keeping its
/// structure, families and parameter layout. The template's parameters
/// are the starting values.
pub fn refit(template: &RVineModel, sample: &CopulaSample, opts: &FitOptions) -> Result<RVineModel> {
    let structure = template.structure();
    check_inputs(structure, template.pairs().len(), sample)?;
    let seq = if template.layout().is_tied() {
        fit_shared_df(template, sample)?
    } else {
        let pairs0 = template.pairs();
        let (pairs, _) = sequential_pass(structure, template.plan(), sample, |id, a, b| {
            fit_pair_from(pairs0[id].family(), a, b, Some(&pairs0[id]))
        })?;
        RVineModel::new(structure.clone(), pairs)?
    };
    match opts.method {
        EstimationMethod::Sequential => Ok(seq),
        EstimationMethod::Full => Ok(polish(&seq, sample, opts)?.model),
    }
}

fn check_inputs(structure: &RVineStructure, n_families: usize, sample: &CopulaSample) -> Result<()> {
    if n_families != structure.n_edges() {
        return Err(VineError::InvalidStructure(format!(
            "{n_families} families for {} edges",
            structure.n_edges()
        )));
    }
    if sample.d() != structure.d() {
        return Err(VineError::DegenerateSample(format!("sample has {} columns, structure {}", sample.d(), structure.d())));
    }
    if sample.n() < 2 {
        return Err(VineError::DegenerateSample("at least two observations are needed".into()));
    }
    Ok(())
}

/// Fit every edge tree by tree with `fit_edge(id, first_arg, second_arg)`.
/// Edges within a tree run in parallel. Returns the pair copulas and the
/// total log-likelihood.
pub(crate) fn sequential_pass<F>(
    structure: &RVineStructure,
    plan: &EvalPlan,
    sample: &CopulaSample,
    fit_edge: F,
) -> Result<(Vec<BicopSpec>, f64)>
where
    F: Fn(usize, &[f64], &[f64]) -> Result<PairFit> + Sync,
{
    let cols = sample.columns();
    let m = structure.n_edges();
    let mut h: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = vec![(None, None); m];
    let mut pairs = Vec::with_capacity(m);
    let mut total = 0.0;
    let mut start = 0;
    for tree in structure.trees() {
        let ids = start..start + tree.len();
        let done: Vec<(PairFit, Option<Vec<f64>>, Option<Vec<f64>>)> = {
            let column = |src: Source| -> &[f64] {
                match src {
                    Source::Var(j) => &cols[j],
                    Source::H1(e) => h[e].0.as_deref().expect("lower tree fitted"),
                    Source::H2(e) => h[e].1.as_deref().expect("lower tree fitted"),
                }
            };
            ids.clone()
                .into_par_iter()
                .map(|id| {
                    let (l, r) = plan.args[id];
                    let (a, b) = (column(l), column(r));
                    let fit = fit_edge(id, a, b).map_err(|e| at_edge(e, structure, id))?;
                    let (need1, need2) = (plan.need_h1[id], plan.need_h2[id]);
                    let (mut h1, mut h2) = (Vec::new(), Vec::new());
                    if need1 || need2 {
                        for (&x, &y) in a.iter().zip(b) {
                            let pv = fit.spec.eval(x, y);
                            h1.push(pv.h1);
                            h2.push(pv.h2);
                        }
                    }
                    Ok((fit, need1.then_some(h1), need2.then_some(h2)))
                })
                .collect::<Result<_>>()?
        };
        for (id, (fit, h1, h2)) in ids.zip(done) {
            total += fit.loglik;
            pairs.push(fit.spec);
            h[id] = (h1, h2);
        }
        start += tree.len();
    }
    Ok((pairs, total))
}

fn at_edge(e: VineError, structure: &RVineStructure, id: usize) -> VineError {
    let edge = structure.edge(id).to_string();
    match e {
        VineError::Optimization { reason, .. } => VineError::Optimization { edge, reason },
        other => VineError::Optimization { edge, reason: other.to_string() },
    }
}

const NU_LO: f64 = 2.01;
const NU_HI: f64 = 60.0;

/// Sequential fit with one degrees-of-freedom parameter shared by all t
/// edges: a profile over the shared value, each profile point a full
/// sequential pass with the t edges' degrees of freedom held fixed.
fn fit_shared_df(template: &RVineModel, sample: &CopulaSample) -> Result<RVineModel> {
    let structure = template.structure();
    let plan = template.plan();
    let pairs0 = template.pairs();
    let layout = template.layout();
    let pass = |nu: f64| {
        sequential_pass(structure, plan, sample, |id, a, b| {
            let spec = &pairs0[id];
            if spec.family().kind == BicopKind::StudentT {
                let offset = layout.slots(id)[1].offset;
                fit_student_fixed_df(a, b, nu + offset, Some(spec.params()[0]))
            } else {
                fit_pair_from(spec.family(), a, b, Some(spec))
            }
        })
    };
    let obj = |w: f64| match pass(2.0 + w.exp()) {
        Ok((_, ll)) if ll.is_finite() => -ll,
        _ => f64::MAX,
    };
    let (w, _) = brent_min(obj, (NU_LO - 2.0).ln(), (NU_HI - 2.0).ln(), 1e-4, 100);
    let (pairs, _) = pass(2.0 + w.exp())?;
    RVineModel::new(structure.clone(), pairs)?.with_shared_df()
}

/// Kind and within-edge slot of every global parameter.
fn param_kinds(model: &RVineModel) -> Vec<(BicopKind, usize)> {
    let mut out = vec![None; model.n_params()];
    for (i, p) in model.pairs().iter().enumerate() {
        for (slot, s) in model.layout().slots(i).iter().enumerate() {
            out[s.index].get_or_insert((p.family().kind, slot));
        }
    }
    out.into_iter().map(|k| k.expect("every parameter has a slot")).collect()
}

/// Joint BFGS from `start` on the mean negative log-likelihood.
fn polish(start: &RVineModel, sample: &CopulaSample, opts: &FitOptions) -> Result<FullFit> {
    let n = sample.n() as f64;
    let start_loglik = start.loglik(sample)?;
    let p = start.n_params();
    if p == 0 {
        return Ok(FullFit { model: start.clone(), loglik: start_loglik, start_loglik, iterations: 0, trace: vec![] });
    }
    let kinds = param_kinds(start);
    // the start must be a valid point in unconstrained coordinates
    let theta0 = start.params();
    let z0: Vec<f64> = kinds.iter().zip(&theta0).map(|(&(k, s), &x)| to_unconstrained(k, s, x)).collect();
    let objective = |z: &[f64]| -> Option<(f64, Vec<f64>)> {
        let mut theta = Vec::with_capacity(p);
        let mut jac = Vec::with_capacity(p);
        for (&(k, s), &zi) in kinds.iter().zip(z) {
            let (x, dx) = from_unconstrained(k, s, zi);
            theta.push(x);
            jac.push(dx);
        }
        let m = start.with_params(&theta).ok()?;
        let (ll, g) = score_sum(&m, sample, opts.diff).ok()?;
        let grad = g.iter().zip(&jac).map(|(gi, di)| -gi * di / n).collect();
        Some((-ll / n, grad))
    };
    let finish = |z: &[f64]| -> Result<RVineModel> {
        let theta: Vec<f64> = kinds.iter().zip(z).map(|(&(k, s), &zi)| from_unconstrained(k, s, zi).0).collect();
        start.with_params(&theta)
    };
    let mut best = bfgs(&objective, &z0, &opts.bfgs).map_err(|e| VineError::Optimization {
        edge: "all parameters".into(),
        reason: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..opts.multistart {
        let z: Vec<f64> = z0.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        if let Ok(r) = bfgs(&objective, &z, &opts.bfgs) {
            if r.value < best.value {
                best = r;
            }
        }
    }
    if !best.converged {
        let tail: Vec<String> = best.trace.iter().rev().take(5).map(|v| format!("{v:.8}")).collect();
        return Err(VineError::Optimization {
            edge: "all parameters".into(),
            reason: format!("no convergence after {} iterations; last objective values {}", best.iterations, tail.join(", ")),
        });
    }
    let model = finish(&best.x)?;
    let loglik = model.loglik(sample)?;
    Ok(FullFit { model, loglik, start_loglik, iterations: best.iterations, trace: best.trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_lab::fixtures::{study_one_model, study_three_mvt, TauLevel};

    fn gauss_pair(rho: f64) -> RVineModel {
        let s = RVineStructure::dvine(&[1, 2]).unwrap();
        RVineModel::new(s, vec![BicopSpec::new(BicopFamily::GAUSS, &[rho]).unwrap()]).unwrap()
    }

    #[test]
    fn single_gauss_edge_recovers_rho() {
        let truth = gauss_pair(0.7071);
        let x = truth.simulate(2000, 11).unwrap();
        let m = fit_sequential(truth.structure(), &truth.families(), &x).unwrap();
        assert!((m.params()[0] - 0.7071).abs() < 0.03);
    }

    #[test]
    fn independence_has_nothing_to_fit() {
        let s = RVineStructure::dvine(&[1, 2, 3]).unwrap();
        let x = RVineModel::independence(s.clone()).unwrap().simulate(50, 1).unwrap();
        let m = fit_sequential(&s, &[BicopFamily::INDEPENDENCE; 3], &x).unwrap();
        assert_eq!(m.n_params(), 0);
        assert_eq!(m.loglik(&x).unwrap(), 0.0);
    }

    #[test]
    fn sequential_recovers_mixed_fixture_taus() {
        let truth = study_one_model(TauLevel::Mixed);
        let x = truth.simulate(1000, 21).unwrap();
        let m = fit_sequential(truth.structure(), &truth.families(), &x).unwrap();
        for (a, b) in m.pairs().iter().zip(truth.pairs()) {
            assert!((a.tau() - b.tau()).abs() < 0.08, "{a} vs {b}");
        }
    }

    #[test]
    fn sequential_loglik_is_sum_of_edge_fits() {
        let truth = study_one_model(TauLevel::Low);
        let x = truth.simulate(300, 2).unwrap();
        let (pairs, ll) = sequential_pass(truth.structure(), truth.plan(), &x, |id, a, b| {
            fit_pair(truth.pairs()[id].family(), a, b)
        })
        .unwrap();
        let m = RVineModel::new(truth.structure().clone(), pairs).unwrap();
        assert!((m.loglik(&x).unwrap() - ll).abs() < 1e-8 * ll.abs());
    }

    #[test]
    fn full_fit_improves_on_sequential() {
        let truth = study_one_model(TauLevel::Mixed);
        let x = truth.simulate(500, 3).unwrap();
        let f = fit_full(truth.structure(), &truth.families(), &x, None).unwrap();
        assert!(f.loglik >= f.start_loglik - 1e-6);
        // first-order optimality
        let (_, g) = score_sum(&f.model, &x, DiffMethod::Analytic).unwrap();
        assert!(g.iter().all(|v| v.abs() / 500.0 < 1e-4), "{g:?}");
    }

    #[test]
    fn full_fit_of_one_parameter_matches_sequential() {
        let truth = gauss_pair(0.4);
        let x = truth.simulate(400, 8).unwrap();
        let seq = fit_sequential(truth.structure(), &truth.families(), &x).unwrap();
        let full = fit_full(truth.structure(), &truth.families(), &x, None).unwrap();
        assert!((seq.params()[0] - full.model.params()[0]).abs() < 1e-5);
    }

    #[test]
    fn full_fit_from_a_poor_start_reaches_the_same_optimum() {
        let truth = study_one_model(TauLevel::Low);
        let x = truth.simulate(400, 9).unwrap();
        let good = fit_full(truth.structure(), &truth.families(), &x, None).unwrap();
        let poor: Vec<BicopSpec> = truth
            .pairs()
            .iter()
            .map(|p| BicopSpec::from_tau(p.family(), if p.tau() > 0.0 { 0.6 } else { -0.6 }, None).unwrap())
            .collect();
        let poor = RVineModel::new(truth.structure().clone(), poor).unwrap();
        let other = fit_full(truth.structure(), &truth.families(), &x, Some(&poor)).unwrap();
        assert!((good.loglik - other.loglik).abs() < 1e-4, "{} vs {}", good.loglik, other.loglik);
    }

    #[test]
    fn refit_keeps_shared_df_layout() {
        let truth = study_three_mvt();
        let x = truth.simulate(800, 4).unwrap();
        let m = refit(&truth, &x, &FitOptions::default()).unwrap();
        assert_eq!(m.layout(), truth.layout());
        let k = m.param_labels().iter().position(|l| l == "nu(shared)").unwrap();
        let nu = m.params()[k];
        assert!(nu > 3.0 && nu < 30.0, "nu = {nu}");
        for (a, b) in m.pairs().iter().zip(truth.pairs()) {
            assert!((a.params()[0] - b.params()[0]).abs() < 0.1);
        }
    }

    #[test]
    fn refit_reproduces_sequential_fit() {
        let truth = study_one_model(TauLevel::Medium);
        let x = truth.simulate(300, 6).unwrap();
        let a = refit(&truth, &x, &FitOptions::default()).unwrap();
        let b = fit_sequential(truth.structure(), &truth.families(), &x).unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            assert!((p - q).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let truth = gauss_pair(0.5);
        let x = truth.simulate(100, 1).unwrap();
        let err = fit_sequential(truth.structure(), &[], &x).unwrap_err();
        assert!(matches!(err, VineError::InvalidStructure(_)));
        let y = study_one_model(TauLevel::Low).simulate(10, 1).unwrap();
        assert!(fit_sequential(truth.structure(), &truth.families(), &y).is_err());
    }

    #[test]
    fn edge_errors_name_the_edge() {
        let s = RVineStructure::dvine(&[1, 2, 3]).unwrap();
        let e = at_edge(VineError::Numerical("x".into()), &s, 2);
        assert!(matches!(e, VineError::Optimization { ref edge, .. } if edge == &s.edge(2).to_string()));
    }
}
