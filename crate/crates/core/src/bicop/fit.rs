//! Maximum likelihood for a single pair copula and family selection.

use super::{BicopFamily, BicopKind, BicopSpec, Rotation};
use crate::error::{Result, VineError};
use crate::jet::{Jet, Real};
use crate::optim::brent_min;
use crate::special;
use crate::stats::kendall_tau;
use serde::{Deserialize, Serialize};

const RHO_MAX: f64 = 0.9999;
const THETA_MAX: f64 = 50.0;
const CLAYTON_MIN: f64 = 1e-4;
const GUMBEL_JOE_MIN: f64 = 1.0 + 1e-6;
const FRANK_MIN_ABS: f64 = 1e-5;
const NU_MIN: f64 = 2.01;
const NU_MAX: f64 = 60.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitCriterion {
    #[default]
    Aic,
    Bic,
}

impl std::str::FromStr for FitCriterion {
    type Err = VineError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(FitCriterion::Aic),
            "bic" => Ok(FitCriterion::Bic),
            _ => Err(VineError::Config(format!("unknown criterion '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PairFit {
    pub spec: BicopSpec,
    pub loglik: f64,
    pub n: usize,
}

impl PairFit {
    pub fn aic(&self) -> f64 {
        -2.0 * self.loglik + 2.0 * self.spec.n_params() as f64
    }

    pub fn bic(&self) -> f64 {
        -2.0 * self.loglik + self.spec.n_params() as f64 * (self.n as f64).ln()
    }

    pub fn score(&self, c: FitCriterion) -> f64 {
        match c {
            FitCriterion::Aic => self.aic(),
            FitCriterion::Bic => self.bic(),
        }
    }
}

/// Maximum likelihood fit of one family to paired copula data.
pub fn fit_pair(family: BicopFamily, u: &[f64], v: &[f64]) -> Result<PairFit> {
    fit_pair_from(family, u, v, None)
}

/// As [`fit_pair`], starting from `start` when its family matches.
pub fn fit_pair_from(
    family: BicopFamily,
    u: &[f64],
    v: &[f64],
    start: Option<&BicopSpec>,
) -> Result<PairFit> {
    if u.len() != v.len() || u.is_empty() {
        return Err(VineError::DegenerateSample("empty or unequal columns".into()));
    }
    let start = start.filter(|s| s.family() == family).map(|s| s.params().to_vec());
    let start = match start {
        Some(p) => p,
        None => {
            let tau = kendall_tau(u, v);
            match family.kind {
                BicopKind::Independence => vec![],
                BicopKind::StudentT => vec![start_theta(family, tau), 5.0],
                _ => vec![start_theta(family, tau)],
            }
        }
    };
    let n = u.len();
    let fail = |reason: &str| VineError::Optimization { edge: family.to_string(), reason: reason.into() };
    let spec = match family.kind {
        BicopKind::Independence => BicopSpec::independence(),
        BicopKind::StudentT => fit_student(family, u, v, start[0]).ok_or_else(|| fail("no finite optimum"))?,
        _ => fit_one_param(family, u, v, start[0]).ok_or_else(|| fail("no finite optimum"))?,
    };
    let loglik = pair_loglik(&spec, u, v);
    if !loglik.is_finite() {
        return Err(fail("non-finite log-likelihood at the optimum"));
    }
    Ok(PairFit { spec, loglik, n })
}

/// Fit every candidate compatible with the sign of the empirical tau and
/// keep the best by `criterion`. Ties keep the earlier candidate.
pub fn select_family(
    families: &[BicopFamily],
    u: &[f64],
    v: &[f64],
    criterion: FitCriterion,
) -> Result<PairFit> {
    let tau = kendall_tau(u, v);
    let mut best: Option<PairFit> = None;
    let mut last_err = None;
    for &fam in families {
        if fam.kind.rotatable() {
            let positive = matches!(fam.rotation, Rotation::R0 | Rotation::R180);
            if positive != (tau >= 0.0) {
                continue;
            }
        }
        match fit_pair(fam, u, v) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.score(criterion) < b.score(criterion)) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| VineError::Optimization {
            edge: "pair".into(),
            reason: "no admissible family in the candidate set".into(),
        })
    })
}

pub(crate) fn pair_loglik(spec: &BicopSpec, u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| spec.eval(a, b).log_pdf).sum()
}

fn start_theta(family: BicopFamily, tau: f64) -> f64 {
    let base = if family.rotation.negates_tau() { -tau } else { tau };
    let t = match family.kind {
        BicopKind::Gauss | BicopKind::StudentT => tau.clamp(-0.95, 0.95),
        BicopKind::Frank => {
            let a = tau.abs().clamp(0.02, 0.95);
            if tau < 0.0 {
                -a
            } else {
                a
            }
        }
        _ => base.clamp(0.02, 0.95),
    };
    let fam = BicopFamily { kind: family.kind, rotation: Rotation::R0 };
    super::tau_to_param(fam, t).unwrap_or(1.5)
}

/// Map between a family parameter and an unconstrained coordinate.
#[derive(Clone, Copy)]
enum Transform {
    Tanh,
    Exp,
    ExpPlusOne,
    Identity,
}

impl Transform {
    fn for_kind(kind: BicopKind) -> Self {
        match kind {
            BicopKind::Gauss | BicopKind::StudentT => Transform::Tanh,
            BicopKind::Clayton => Transform::Exp,
            BicopKind::Gumbel | BicopKind::Joe => Transform::ExpPlusOne,
            _ => Transform::Identity,
        }
    }

    fn to_z(self, t: f64) -> f64 {
        match self {
            Transform::Tanh => t.atanh(),
            Transform::Exp => t.ln(),
            Transform::ExpPlusOne => (t - 1.0).ln(),
            Transform::Identity => t,
        }
    }

    /// theta and its first two derivatives in z.
    fn from_z(self, z: f64) -> (f64, f64, f64) {
        match self {
            Transform::Tanh => {
                let t = z.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            Transform::Exp => {
                let e = z.exp();
                (e, e, e)
            }
            Transform::ExpPlusOne => {
                let e = z.exp();
                (1.0 + e, e, e)
            }
            Transform::Identity => (z, 1.0, 0.0),
        }
    }
}

/// Unconstrained coordinate of parameter `slot` of a `kind` copula.
pub(crate) fn to_unconstrained(kind: BicopKind, slot: usize, x: f64) -> f64 {
    if slot == 1 {
        (x - 2.0).ln()
    } else {
        Transform::for_kind(kind).to_z(x)
    }
}

/// Inverse of [`to_unconstrained`] with its first derivative.
pub(crate) fn from_unconstrained(kind: BicopKind, slot: usize, z: f64) -> (f64, f64) {
    if slot == 1 {
        (2.0 + z.exp(), z.exp())
    } else {
        let (x, d, _) = Transform::for_kind(kind).from_z(z);
        (x, d)
    }
}

fn theta_bounds(kind: BicopKind) -> (f64, f64) {
    match kind {
        BicopKind::Gauss | BicopKind::StudentT => (-RHO_MAX, RHO_MAX),
        BicopKind::Clayton => (CLAYTON_MIN, THETA_MAX),
        BicopKind::Gumbel | BicopKind::Joe => (GUMBEL_JOE_MIN, THETA_MAX),
        _ => (-THETA_MAX, THETA_MAX),
    }
}

/// Damped Newton ascent on a scalar objective in an interval.
/// `eval(z)` returns the objective with its first two derivatives.
pub(crate) fn newton_max(
    eval: impl Fn(f64) -> Option<(f64, f64, f64)>,
    z0: f64,
    lo: f64,
    hi: f64,
) -> Option<(f64, f64)> {
    let mut z = z0.clamp(lo, hi);
    let (mut f, mut g, mut h) = eval(z)?;
    for _ in 0..100 {
        let mut step = if h < 0.0 { -g / h } else { 0.5 * g.signum() };
        step = step.clamp(-2.0, 2.0);
        let mut accepted = None;
        for _ in 0..40 {
            let zn = (z + step).clamp(lo, hi);
            if let Some((fnew, gn, hn)) = eval(zn) {
                if fnew.is_finite() && fnew >= f - 1e-12 * f.abs() {
                    accepted = Some((zn, fnew, gn, hn));
                    break;
                }
            }
            step *= 0.5;
        }
        let (zn, fnew, gn, hn) = accepted?;
        let moved = (zn - z).abs();
        z = zn;
        f = fnew;
        g = gn;
        h = hn;
        let at_bound = (z == lo && g < 0.0) || (z == hi && g > 0.0);
        if moved < 1e-9 || at_bound || g.abs() < 1e-9 {
            return Some((z, f));
        }
    }
    Some((z, f))
}

fn fit_one_param(family: BicopFamily, u: &[f64], v: &[f64], theta0: f64) -> Option<BicopSpec> {
    let kind = family.kind;
    let tr = Transform::for_kind(kind);
    let (tlo, thi) = theta_bounds(kind);
    let (zlo, zhi) = (tr.to_z(tlo), tr.to_z(thi));
    let proto = BicopSpec { family, params: [theta0, 0.0] };
    let eval = |z: f64| -> Option<(f64, f64, f64)> {
        let (mut theta, d1, d2) = tr.from_z(z);
        if kind == BicopKind::Frank && theta.abs() < FRANK_MIN_ABS {
            theta = FRANK_MIN_ABS.copysign(if theta == 0.0 { 1.0 } else { theta });
        }
        let th = Jet::<1>::variable(theta, 0);
        let mut acc = Jet::<1>::constant(0.0);
        for (&a, &b) in u.iter().zip(v) {
            acc = acc + proto.eval_generic(Jet::constant(a), Jet::constant(b), th).log_pdf;
        }
        if !acc.v.is_finite() || !acc.g[0].is_finite() || !acc.h[0][0].is_finite() {
            return None;
        }
        Some((acc.v, acc.g[0] * d1, acc.h[0][0] * d1 * d1 + acc.g[0] * d2))
    };
    let z0 = tr.to_z(theta0.clamp(tlo, thi));
    let z = match newton_max(eval, z0, zlo, zhi) {
        Some((z, _)) => z,
        None => {
            let obj = |z: f64| {
                let (t, _, _) = tr.from_z(z);
                let s = BicopSpec { family, params: [t, 0.0] };
                let ll = pair_loglik(&s, u, v);
                if ll.is_finite() {
                    -ll
                } else {
                    f64::MAX
                }
            };
            brent_min(obj, zlo, zhi, 1e-10, 200).0
        }
    };
    let mut theta = tr.from_z(z).0.clamp(tlo, thi);
    if kind == BicopKind::Frank && theta.abs() < FRANK_MIN_ABS {
        theta = FRANK_MIN_ABS.copysign(theta);
    }
    BicopSpec::new(family, &[theta]).ok()
}

/// Maximum over rho of the Student-t log-likelihood with `nu` held fixed.
/// Returns `(rho, loglik)`.
pub(crate) fn student_profile(u: &[f64], v: &[f64], nu: f64, rho_start: f64) -> Option<(f64, f64)> {
    let n = u.len() as f64;
    let xs: Vec<f64> = u.iter().map(|&a| special::t_quantile(super::clamp_unit(a), nu)).collect();
    let ys: Vec<f64> = v.iter().map(|&b| special::t_quantile(super::clamp_unit(b), nu)).collect();
    let konst = special::ln_gamma(0.5 * (nu + 2.0)) + special::ln_gamma(0.5 * nu)
        - 2.0 * special::ln_gamma(0.5 * (nu + 1.0));
    let margins: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| 0.5 * (nu + 1.0) * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p()))
        .sum();
    let eval = |z: f64| -> Option<(f64, f64, f64)> {
        let rho = Jet::<1>::variable(z.tanh(), 0);
        let one_m = rho.square().one_minus();
        let mut acc = one_m.ln() * (-0.5 * n);
        for (&x, &y) in xs.iter().zip(&ys) {
            let q = (-(rho * (2.0 * x * y)) + (x * x + y * y)) / (one_m * nu);
            acc = acc - q.ln_1p() * (0.5 * (nu + 2.0));
        }
        let (_, d1, d2) = Transform::Tanh.from_z(z);
        acc.v.is_finite().then(|| (acc.v, acc.g[0] * d1, acc.h[0][0] * d1 * d1 + acc.g[0] * d2))
    };
    let zmax = RHO_MAX.atanh();
    let (z, f) = newton_max(eval, rho_start.clamp(-RHO_MAX, RHO_MAX).atanh(), -zmax, zmax)?;
    Some((z.tanh(), f + margins + n * konst))
}

/// Student-t: profile likelihood in nu, exact Newton in rho for each nu.
fn fit_student(family: BicopFamily, u: &[f64], v: &[f64], rho0: f64) -> Option<BicopSpec> {
    let cell = std::cell::Cell::new(rho0);
    let obj = |w: f64| {
        let nu = 2.0 + w.exp();
        match student_profile(u, v, nu, cell.get()) {
            Some((rho, ll)) => {
                cell.set(rho);
                -ll
            }
            None => f64::MAX,
        }
    };
    let (wlo, whi) = ((NU_MIN - 2.0).ln(), (NU_MAX - 2.0).ln());
    let (w, _) = brent_min(obj, wlo, whi, 1e-5, 100);
    let nu = 2.0 + w.exp();
    let (rho, _) = student_profile(u, v, nu, cell.get())?;
    BicopSpec::new(family, &[rho, nu]).ok()
}

/// Student-t fit with the degrees of freedom held at `nu`.
pub fn fit_student_fixed_df(u: &[f64], v: &[f64], nu: f64, rho_start: Option<f64>) -> Result<PairFit> {
    let rho0 = rho_start.unwrap_or_else(|| start_theta(BicopFamily::STUDENT_T, kendall_tau(u, v)));
    let fail = || VineError::Optimization { edge: "t".into(), reason: "no finite optimum".into() };
    let (rho, loglik) = student_profile(u, v, nu, rho0).ok_or_else(fail)?;
    Ok(PairFit { spec: BicopSpec::new(BicopFamily::STUDENT_T, &[rho, nu])?, loglik, n: u.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(spec: &BicopSpec, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.random();
            let w: f64 = rng.random();
            u.push(a);
            v.push(spec.hinv2(w, a).unwrap());
        }
        (u, v)
    }

    #[test]
    fn recovers_gauss_rho() {
        let truth = BicopSpec::new(BicopFamily::GAUSS, &[0.7071]).unwrap();
        let (u, v) = sample(&truth, 2000, 1);
        let fit = fit_pair(BicopFamily::GAUSS, &u, &v).unwrap();
        assert!((fit.spec.params()[0] - 0.7071).abs() < 0.03);
    }

    #[test]
    fn newton_result_is_a_brent_optimum() {
        for code in ["clayton", "gumbel@90", "frank", "joe@180"] {
            let fam: BicopFamily = code.parse().unwrap();
            let tau = if fam.rotation.negates_tau() { -0.4 } else { 0.4 };
            let truth = BicopSpec::from_tau(fam, tau, None).unwrap();
            let (u, v) = sample(&truth, 500, 7);
            let fit = fit_pair(fam, &u, &v).unwrap();
            let (lo, hi) = theta_bounds(fam.kind);
            let (t, _) = brent_min(
                |t| -pair_loglik(&BicopSpec { family: fam, params: [t, 0.0] }, &u, &v),
                lo,
                hi.min(30.0),
                1e-12,
                500,
            );
            let ll_brent = pair_loglik(&BicopSpec { family: fam, params: [t, 0.0] }, &u, &v);
            assert!(fit.loglik >= ll_brent - 1e-7, "{code}: {} < {}", fit.loglik, ll_brent);
        }
    }

    #[test]
    fn student_fit_finds_heavy_tails() {
        let truth = BicopSpec::new(BicopFamily::STUDENT_T, &[0.5, 4.0]).unwrap();
        let (u, v) = sample(&truth, 2000, 3);
        let fit = fit_pair(BicopFamily::STUDENT_T, &u, &v).unwrap();
        let p = fit.spec.params();
        assert!((p[0] - 0.5).abs() < 0.05, "rho {}", p[0]);
        assert!(p[1] > 2.5 && p[1] < 8.0, "nu {}", p[1]);
    }

    #[test]
    fn selection_prefers_true_family() {
        let truth: BicopSpec = BicopSpec::from_tau("clayton@180".parse().unwrap(), 0.5, None).unwrap();
        let (u, v) = sample(&truth, 2000, 11);
        let all = BicopFamily::all();
        let fit = select_family(&all, &u, &v, FitCriterion::Aic).unwrap();
        assert_eq!(fit.spec.family().to_string(), "clayton@180");
    }

    #[test]
    fn independent_data_picks_independence_under_bic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
        let v: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
        let fit = select_family(&BicopFamily::all(), &u, &v, FitCriterion::Bic).unwrap();
        assert_eq!(fit.spec.family(), BicopFamily::INDEPENDENCE);
    }
}
