//! Monte Carlo size and power studies of the information-matrix test.
//!
//! A study fixes a true model M1 and a list of alternatives. Each
//! alternative is estimated once on a pre-run sample from M1 and then held
//! fixed. Every replicate simulates from M1 and from each alternative,
//! estimates M1's parameters on both samples and records the statistic.
//! Simulated p-values rank each statistic against the M1 statistics.

pub mod fixtures;
mod output;
mod studies;

pub use output::{write_outputs, PowerRow};
pub use studies::{study_config, StudyId};

use crate::bicop::{BicopFamily, FitCriterion};
use crate::diff::DiffMethod;
use crate::error::{Result, VineError};
use crate::gof::{fit_and_test, simulated_pvalues_against, GofOptions, MAX_FAILURE_RATE};
use crate::margins::{fit_margins, ifm_transform, pseudo_observations, MarginFamily};
use crate::rng::{derive_seed, tag};
use crate::sample::CopulaSample;
use crate::special::norm_quantile;
use crate::vine::{fit_sequential, refit, select_families, select_mst, FitOptions, RVineModel, RVineStructure};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicate index reserved for the pre-run stream.
const PRERUN: u64 = u64::MAX;

/// How copula data is obtained from a simulated sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Margins {
    /// Use the simulated uniforms directly.
    Known,
    /// Replace each column by its ranks over `n + 1`.
    RankBased,
    /// Map column `j` to a centred normal with standard deviation `sigmas[j]`,
    /// estimate mean and standard deviation by moments and transform back.
    Ifm(Vec<f64>),
}

impl Margins {
    pub fn apply(&self, u: &CopulaSample) -> Result<CopulaSample> {
        match self {
            Margins::Known => Ok(u.clone()),
            Margins::RankBased => pseudo_observations(&u.columns()),
            Margins::Ifm(sigmas) => {
                if sigmas.len() != u.d() {
                    return Err(VineError::Config(format!("{} margin scales for {} variables", sigmas.len(), u.d())));
                }
                let raw: Vec<Vec<f64>> = u
                    .columns()
                    .into_iter()
                    .zip(sigmas)
                    .map(|(c, s)| c.into_iter().map(|v| s * norm_quantile(v)).collect())
                    .collect();
                let fitted = fit_margins(&raw, &vec![MarginFamily::Normal; raw.len()])?;
                ifm_transform(&raw, &fitted)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMode {
    #[default]
    Simulated,
    Asymptotic,
    Both,
}

impl PValueMode {
    pub fn simulated(self) -> bool {
        self != PValueMode::Asymptotic
    }
    pub fn asymptotic(self) -> bool {
        self != PValueMode::Simulated
    }
}

impl std::str::FromStr for PValueMode {
    type Err = VineError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simulated" | "sim" => Ok(PValueMode::Simulated),
            "asymptotic" | "asy" => Ok(PValueMode::Asymptotic),
            "both" => Ok(PValueMode::Both),
            _ => Err(VineError::Config(format!("unknown p-value mode '{s}'"))),
        }
    }
}

/// Where an alternative model comes from.
#[derive(Clone, Debug)]
pub enum AltSource {
    /// A fully specified model, used as is.
    Fixed(RVineModel),
    /// M1's structure with every pair Gauss, estimated on the pre-run.
    GaussPaired,
    /// Families chosen by `criterion` on the pre-run, on a fixed structure
    /// or on one found by maximum spanning tree search.
    Selected { structure: Option<RVineStructure>, families: Vec<BicopFamily>, criterion: FitCriterion },
    /// Given structure and families, parameters estimated on the pre-run.
    Families { structure: RVineStructure, families: Vec<BicopFamily> },
    /// All pairs Student-t with one shared degrees-of-freedom parameter.
    SharedT { structure: RVineStructure },
}

#[derive(Clone, Debug)]
pub struct Alternative {
    pub name: String,
    pub source: AltSource,
}

impl Alternative {
    pub fn new(name: &str, source: AltSource) -> Self {
        Alternative { name: name.into(), source }
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub name: String,
    pub truth: RVineModel,
    pub alternatives: Vec<Alternative>,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    pub margins: Margins,
    pub pvalue_mode: PValueMode,
    /// Estimation of M1's parameters in every replicate.
    pub fit: FitOptions,
    pub diff: DiffMethod,
    /// Size of the sample the alternatives are estimated on.
    pub prerun_n: usize,
}

impl StudyConfig {
    pub fn new(name: &str, truth: RVineModel, alternatives: Vec<Alternative>) -> Self {
        StudyConfig {
            name: name.into(),
            truth,
            alternatives,
            n: 500,
            r: 200,
            seed: 1,
            margins: Margins::Known,
            pvalue_mode: PValueMode::Simulated,
            fit: FitOptions::default(),
            diff: DiffMethod::Auto,
            prerun_n: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(VineError::Config(format!("R = {} replicates, at least 2 needed", self.r)));
        }
        if self.n < 50 {
            return Err(VineError::Config(format!("n = {}, at least 50 needed", self.n)));
        }
        if self.prerun_n < 50 {
            return Err(VineError::Config(format!("pre-run size {}, at least 50 needed", self.prerun_n)));
        }
        if let Margins::Ifm(s) = &self.margins {
            if s.len() != self.truth.d() || s.iter().any(|&v| !(v > 0.0)) {
                return Err(VineError::Config("margin scales must be positive, one per variable".into()));
            }
        }
        let mut names: Vec<&str> = self.alternatives.iter().map(|a| a.name.as_str()).collect();
        names.push("M1");
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(VineError::Config("arm names must be unique and differ from 'M1'".into()));
        }
        Ok(())
    }
}

/// Statistics of one arm, by replicate; failed replicates are `None`.
#[derive(Clone, Debug)]
pub struct ArmResult {
    pub name: String,
    pub statistics: Vec<Option<f64>>,
    pub p_asymptotic: Vec<Option<f64>>,
    pub p_simulated: Vec<Option<f64>>,
    pub regularized: usize,
}

impl ArmResult {
    pub fn failures(&self) -> usize {
        self.statistics.iter().filter(|s| s.is_none()).count()
    }

    /// Fraction of successful replicates with p-value at most `alpha`.
    pub fn rejection_rate(&self, alpha: f64, asymptotic: bool) -> f64 {
        let p = if asymptotic { &self.p_asymptotic } else { &self.p_simulated };
        empirical_cdf(&p.iter().flatten().copied().collect::<Vec<_>>(), alpha)
    }
}

/// Empirical distribution functions of the p-values on the alpha grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveData {
    pub alpha: Vec<f64>,
    /// Column name and values; the first column is M1.
    pub columns: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    pub config: StudyConfig,
    /// The alternatives as estimated on the pre-run.
    pub alternative_models: Vec<RVineModel>,
    /// M1 first, then the alternatives in configuration order.
    pub arms: Vec<ArmResult>,
    pub curves: CurveData,
}

impl StudyResult {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Rejection rate of an arm at `alpha` with the study's preferred p-values.
    pub fn rate(&self, name: &str, alpha: f64) -> Option<f64> {
        Some(self.arm(name)?.rejection_rate(alpha, !self.config.pvalue_mode.simulated()))
    }
}

/// Test levels: 0.001 to 0.010 by 0.001, 0.015 to 0.990 by 0.005, 0.991 to 0.999 by 0.001.
pub fn alpha_grid() -> Vec<f64> {
    (1..=10).chain((15..=990).step_by(5)).chain(991..=999).map(|k| k as f64 / 1000.0).collect()
}

/// Fraction of `pvalues` at most `alpha`.
pub fn empirical_cdf(pvalues: &[f64], alpha: f64) -> f64 {
    if pvalues.is_empty() {
        return f64::NAN;
    }
    pvalues.iter().filter(|&&p| p <= alpha).count() as f64 / pvalues.len() as f64
}

/// Empirical distribution function of `pvalues` at each grid point.
pub fn empirical_cdf_curve(pvalues: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    grid.iter().map(|&a| sorted.partition_point(|&p| p <= a) as f64 / r).collect()
}

/// Half-width of the Dvoretzky-Kiefer-Wolfowitz band with coverage `1 - delta` for `r` draws.
pub fn dkw_halfwidth(r: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * r as f64)).sqrt()
}

/// Estimate the alternatives on a pre-run sample from the true model.
/// The margin treatment applies to the replicates only, so the
/// alternatives do not depend on it.
pub fn prepare_alternatives(config: &StudyConfig) -> Result<Vec<RVineModel>> {
    let x = config.truth.simulate(config.prerun_n, derive_seed(config.seed, &[tag(&config.name), PRERUN]))?;
    let truth = &config.truth;
    config
        .alternatives
        .iter()
        .map(|alt| {
            let m = match &alt.source {
                AltSource::Fixed(m) => Ok(m.clone()),
                AltSource::GaussPaired => {
                    fit_sequential(truth.structure(), &vec![BicopFamily::GAUSS; truth.structure().n_edges()], &x)
                }
                AltSource::Selected { structure: Some(s), families, criterion } => {
                    select_families(s, &x, families, *criterion)
                }
                AltSource::Selected { structure: None, families, criterion } => select_mst(&x, families, *criterion),
                AltSource::Families { structure, families } => fit_sequential(structure, families, &x),
                AltSource::SharedT { structure } => {
                    let t = fit_sequential(structure, &vec![BicopFamily::STUDENT_T; structure.n_edges()], &x)?;
                    refit(&t.with_shared_df()?, &x, &FitOptions::default())
                }
            }?;
            if m.d() != truth.d() {
                return Err(VineError::Config(format!("alternative '{}' has dimension {}", alt.name, m.d())));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()
}

/// Statistic and asymptotic p-value of M1 estimated on a sample from `source`.
fn one_arm(config: &StudyConfig, source: &RVineModel, seed: u64, opts: &GofOptions) -> Option<(f64, f64, bool)> {
    let u = source.simulate(config.n, seed).ok()?;
    let x = config.margins.apply(&u).ok()?;
    let (_, r) = fit_and_test(&config.truth, &x, opts).ok()?;
    Some((r.statistic, r.p_asymptotic, r.regularized))
}

/// Run a study end to end.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let alternative_models = prepare_alternatives(config)?;
    let opts = GofOptions { diff: config.diff, allow_unfitted: false, fit: config.fit.clone() };
    let sources: Vec<&RVineModel> = std::iter::once(&config.truth).chain(&alternative_models).collect();
    let study = tag(&config.name);
    let rows: Vec<Vec<Option<(f64, f64, bool)>>> = (0..config.r)
        .into_par_iter()
        .map(|r| {
            sources
                .iter()
                .enumerate()
                .map(|(arm, src)| one_arm(config, src, derive_seed(config.seed, &[study, r as u64, arm as u64]), &opts))
                .collect()
        })
        .collect();
    let names: Vec<String> =
        std::iter::once("M1".to_string()).chain(config.alternatives.iter().map(|a| a.name.clone())).collect();
    let mut arms: Vec<ArmResult> = names
        .into_iter()
        .enumerate()
        .map(|(a, name)| ArmResult {
            name,
            statistics: rows.iter().map(|row| row[a].map(|v| v.0)).collect(),
            p_asymptotic: rows.iter().map(|row| row[a].map(|v| v.1)).collect(),
            p_simulated: Vec::new(),
            regularized: rows.iter().filter(|row| row[a].is_some_and(|v| v.2)).count(),
        })
        .collect();
    for arm in &arms {
        let failed = arm.failures();
        if failed as f64 > MAX_FAILURE_RATE * config.r as f64 {
            return Err(VineError::TooManyFailures { failed, total: config.r });
        }
    }
    let reference: Vec<f64> = arms[0].statistics.iter().flatten().copied().collect();
    for arm in &mut arms {
        let ok: Vec<f64> = arm.statistics.iter().flatten().copied().collect();
        let mut p = simulated_pvalues_against(&reference, &ok).into_iter();
        arm.p_simulated = arm.statistics.iter().map(|s| s.and_then(|_| p.next())).collect();
    }
    let curves = curves(&arms, config.pvalue_mode);
    Ok(StudyResult { config: config.clone(), alternative_models, arms, curves })
}

fn curves(arms: &[ArmResult], mode: PValueMode) -> CurveData {
    let alpha = alpha_grid();
    let mut columns = Vec::new();
    for (asy, on) in [(false, mode.simulated()), (true, mode.asymptotic())] {
        if !on {
            continue;
        }
        for arm in arms {
            let p: Vec<f64> = if asy { &arm.p_asymptotic } else { &arm.p_simulated }.iter().flatten().copied().collect();
            let base = if arm.name == "M1" { "F_M1".to_string() } else { arm.name.clone() };
            let name = if asy && mode == PValueMode::Both { format!("{base}_asy") } else { base };
            columns.push((name, empirical_cdf_curve(&p, &alpha)));
        }
    }
    CurveData { alpha, columns }
}

#[cfg(test)]
mod tests;
