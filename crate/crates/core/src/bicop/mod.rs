//! Bivariate copula families.
//!
//! Densities, h-functions and their inverses, Kendall's tau conversions,
//! and parameter derivatives of the log density. Rotations follow a fixed
//! convention: 90 degrees maps `(u, v)` to `(1 - u, v)`, 180 degrees to
//! `(1 - u, 1 - v)` and 270 degrees to `(u, 1 - v)`.

pub(crate) mod fit;
mod formulas;
mod tau;

pub use fit::{fit_pair, fit_pair_from, fit_student_fixed_df, select_family, FitCriterion, PairFit};
pub use tau::{param_to_tau, tau_to_param};

use crate::error::{Result, VineError};
use crate::jet::{Jet, Real};
use formulas::{base_cdf, base_eval, base_hinv_closed};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Inputs are clamped to `[U_EPS, 1 - U_EPS]` before any evaluation.
pub const U_EPS: f64 = 1e-10;

/// Fitted Student-t pair copulas with at least this many degrees of
/// freedom are replaced by the Gauss copula.
pub const T_DF_GAUSS_THRESHOLD: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BicopKind {
    Independence,
    Gauss,
    StudentT,
    Clayton,
    Gumbel,
    Frank,
    Joe,
}

impl BicopKind {
    pub const ALL: [BicopKind; 7] = [
        BicopKind::Independence,
        BicopKind::Gauss,
        BicopKind::StudentT,
        BicopKind::Clayton,
        BicopKind::Gumbel,
        BicopKind::Frank,
        BicopKind::Joe,
    ];

    pub fn code(self) -> &'static str {
        match self {
            BicopKind::Independence => "indep",
            BicopKind::Gauss => "gauss",
            BicopKind::StudentT => "t",
            BicopKind::Clayton => "clayton",
            BicopKind::Gumbel => "gumbel",
            BicopKind::Frank => "frank",
            BicopKind::Joe => "joe",
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            BicopKind::Independence => 0,
            BicopKind::StudentT => 2,
            _ => 1,
        }
    }

    /// Whether rotations other than 0 degrees are admissible.
    pub fn rotatable(self) -> bool {
        matches!(self, BicopKind::Clayton | BicopKind::Gumbel | BicopKind::Joe)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    fn flips_first(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R180)
    }

    fn flips_second(self) -> bool {
        matches!(self, Rotation::R180 | Rotation::R270)
    }

    /// Rotation of the copula of `(V, U)` when this is the copula of `(U, V)`.
    pub fn transposed(self) -> Rotation {
        match self {
            Rotation::R90 => Rotation::R270,
            Rotation::R270 => Rotation::R90,
            r => r,
        }
    }

    /// 90 and 270 degree rotations carry negative dependence.
    pub fn negates_tau(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BicopFamily {
    pub kind: BicopKind,
    pub rotation: Rotation,
}

impl BicopFamily {
    pub const INDEPENDENCE: BicopFamily = BicopFamily::plain(BicopKind::Independence);
    pub const GAUSS: BicopFamily = BicopFamily::plain(BicopKind::Gauss);
    pub const STUDENT_T: BicopFamily = BicopFamily::plain(BicopKind::StudentT);

    pub const fn plain(kind: BicopKind) -> Self {
        BicopFamily { kind, rotation: Rotation::R0 }
    }

    pub fn new(kind: BicopKind, rotation: Rotation) -> Result<Self> {
        if rotation != Rotation::R0 && !kind.rotatable() {
            return Err(VineError::InvalidParameter {
                family: kind.code().into(),
                reason: format!("rotation {} not admissible", rotation.degrees()),
            });
        }
        Ok(BicopFamily { kind, rotation })
    }

    pub fn n_params(self) -> usize {
        self.kind.n_params()
    }

    pub fn transposed(self) -> Self {
        BicopFamily { kind: self.kind, rotation: self.rotation.transposed() }
    }

    /// Every admissible family, rotations included.
    pub fn all() -> Vec<BicopFamily> {
        let mut out = Vec::new();
        for kind in BicopKind::ALL {
            out.push(BicopFamily::plain(kind));
            if kind.rotatable() {
                for r in [Rotation::R90, Rotation::R180, Rotation::R270] {
                    out.push(BicopFamily { kind, rotation: r });
                }
            }
        }
        out
    }
}

impl fmt::Display for BicopFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rotation {
            Rotation::R0 => write!(f, "{}", self.kind.code()),
            r => write!(f, "{}@{}", self.kind.code(), r.degrees()),
        }
    }
}

impl FromStr for BicopFamily {
    type Err = VineError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || VineError::InvalidParameter {
            family: s.to_string(),
            reason: "unknown family code".into(),
        };
        let (name, rot) = match s.split_once('@') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        let kind = BicopKind::ALL
            .into_iter()
            .find(|k| k.code() == name)
            .ok_or_else(bad)?;
        let rotation = match rot {
            None => Rotation::R0,
            Some("90") => Rotation::R90,
            Some("180") => Rotation::R180,
            Some("270") => Rotation::R270,
            Some(_) => return Err(bad()),
        };
        BicopFamily::new(kind, rotation)
    }
}

/// One parametrized pair copula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicopSpec {
    family: BicopFamily,
    params: [f64; 2],
}

/// Log density and both h-functions at one point.
#[derive(Clone, Copy, Debug)]
pub struct PairValues<T> {
    pub log_pdf: T,
    /// F(u | v) = dC(u, v)/dv
    pub h1: T,
    /// F(v | u) = dC(u, v)/du
    pub h2: T,
}

/// Local second-order expansion of a pair copula in `(u, v, params...)`.
///
/// Slot 0 is `u`, slot 1 is `v`, slots 2.. are the family parameters.
#[derive(Clone, Copy, Debug)]
pub struct LocalJet {
    pub log_pdf: Jet<4>,
    pub h1: Jet<4>,
    pub h2: Jet<4>,
}

/// Parameter gradient and Hessian of the log density.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDerivs {
    pub gradient: Vec<f64>,
    /// Row-major `k x k`, empty when only first order was requested.
    pub hessian: Vec<f64>,
}

pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(U_EPS, 1.0 - U_EPS)
}

fn clamp_real<T: Real>(x: T) -> T {
    let v = x.value();
    let c = clamp_unit(v);
    if c == v {
        x
    } else {
        x + (c - v)
    }
}

fn check_unit(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || x.is_nan() {
        return Err(VineError::Domain { value: x });
    }
    Ok(clamp_unit(x))
}

impl BicopSpec {
    pub fn new(family: BicopFamily, params: &[f64]) -> Result<Self> {
        let n = family.n_params();
        if params.len() != n {
            return Err(VineError::InvalidParameter {
                family: family.to_string(),
                reason: format!("expected {} parameters, got {}", n, params.len()),
            });
        }
        let mut p = [0.0; 2];
        p[..n].copy_from_slice(params);
        check_params(family.kind, &p[..n]).map_err(|reason| VineError::InvalidParameter {
            family: family.to_string(),
            reason,
        })?;
        Ok(BicopSpec { family, params: p })
    }

    pub fn independence() -> Self {
        BicopSpec { family: BicopFamily::INDEPENDENCE, params: [0.0; 2] }
    }

    /// Spec whose association parameter matches Kendall's `tau`.
    /// `nu` is required for the Student-t family and ignored otherwise.
    pub fn from_tau(family: BicopFamily, tau: f64, nu: Option<f64>) -> Result<Self> {
        match family.kind {
            BicopKind::Independence => Ok(Self::independence()),
            BicopKind::StudentT => {
                let nu = nu.ok_or_else(|| VineError::InvalidParameter {
                    family: family.to_string(),
                    reason: "degrees of freedom required".into(),
                })?;
                Self::new(family, &[tau_to_param(family, tau)?, nu])
            }
            _ => Self::new(family, &[tau_to_param(family, tau)?]),
        }
    }

    pub fn family(&self) -> BicopFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params[..self.family.n_params()]
    }

    pub fn n_params(&self) -> usize {
        self.family.n_params()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::new(self.family, params)
    }

    pub fn tau(&self) -> f64 {
        param_to_tau(self)
    }

    /// Whether parameter derivatives are available in closed form.
    pub fn has_closed_form_derivatives(&self) -> bool {
        self.family.kind != BicopKind::StudentT
    }

    fn nu(&self) -> f64 {
        if self.family.kind == BicopKind::StudentT {
            self.params[1]
        } else {
            0.0
        }
    }

    /// Evaluate at already clamped arguments; `theta` is the first
    /// parameter, possibly carrying derivative information.
    pub(crate) fn eval_generic<T: Real>(&self, u: T, v: T, theta: T) -> PairValues<T> {
        let rot = self.family.rotation;
        let u = clamp_real(u);
        let v = clamp_real(v);
        let a = if rot.flips_first() { u.one_minus() } else { u };
        let b = if rot.flips_second() { v.one_minus() } else { v };
        let base = base_eval(self.family.kind, a, b, theta, self.nu());
        PairValues {
            log_pdf: base.log_pdf,
            h1: if rot.flips_first() { base.h_a_given_b.one_minus() } else { base.h_a_given_b },
            h2: if rot.flips_second() { base.h_b_given_a.one_minus() } else { base.h_b_given_a },
        }
    }

    /// Plain evaluation without domain checks; inputs are clamped.
    pub(crate) fn eval(&self, u: f64, v: f64) -> PairValues<f64> {
        self.eval_generic(u, v, self.params[0])
    }

    pub fn pdf(&self, u: f64, v: f64) -> Result<f64> {
        Ok(self.log_pdf(u, v)?.exp())
    }

    pub fn log_pdf(&self, u: f64, v: f64) -> Result<f64> {
        let (u, v) = (check_unit(u)?, check_unit(v)?);
        Ok(self.eval(u, v).log_pdf)
    }

    /// h-function F(u | v) = dC(u, v)/dv.
    pub fn hfunc(&self, u: f64, v: f64) -> Result<f64> {
        let (u, v) = (check_unit(u)?, check_unit(v)?);
        Ok(self.eval(u, v).h1.clamp(0.0, 1.0))
    }

    /// Conditional cdf of V given U, dC(u, v)/du.
    pub fn hfunc2(&self, u: f64, v: f64) -> Result<f64> {
        let (u, v) = (check_unit(u)?, check_unit(v)?);
        Ok(self.eval(u, v).h2.clamp(0.0, 1.0))
    }

    /// Copula distribution function, for the families with a closed form.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        let (u, v) = (check_unit(u)?, check_unit(v)?);
        let kind = self.family.kind;
        let c = |a: f64, b: f64| {
            base_cdf(kind, a, b, self.params[0]).ok_or_else(|| {
                VineError::Unsupported(format!("no closed-form cdf for {}", self.family))
            })
        };
        Ok(match self.family.rotation {
            Rotation::R0 => c(u, v)?,
            Rotation::R90 => v - c(1.0 - u, v)?,
            Rotation::R180 => u + v - 1.0 + c(1.0 - u, 1.0 - v)?,
            Rotation::R270 => u - c(u, 1.0 - v)?,
        })
    }

    /// Inverse of `u -> hfunc(u, v)`.
    pub fn hinv(&self, w: f64, v: f64) -> Result<f64> {
        let (w, v) = (check_unit(w)?, check_unit(v)?);
        let rot = self.family.rotation;
        let b = if rot.flips_second() { 1.0 - v } else { v };
        let out = if rot.flips_first() {
            1.0 - self.base_hinv(1.0 - w, b)?
        } else {
            self.base_hinv(w, b)?
        };
        Ok(clamp_unit(out))
    }

    /// Inverse of `v -> hfunc2(u, v)`.
    pub fn hinv2(&self, w: f64, u: f64) -> Result<f64> {
        let (w, u) = (check_unit(w)?, check_unit(u)?);
        let rot = self.family.rotation;
        let a = if rot.flips_first() { 1.0 - u } else { u };
        let out = if rot.flips_second() {
            1.0 - self.base_hinv(1.0 - w, a)?
        } else {
            self.base_hinv(w, a)?
        };
        Ok(clamp_unit(out))
    }

    fn base_hinv(&self, w: f64, b: f64) -> Result<f64> {
        let kind = self.family.kind;
        let theta = self.params[0];
        if let Some(x) = base_hinv_closed(kind, w, b, theta, self.nu()) {
            if x.is_finite() {
                return Ok(x);
            }
        }
        let base = BicopSpec { family: BicopFamily::plain(kind), params: self.params };
        invert_monotone(
            |a| {
                let vals = base.eval(a, b);
                (vals.h1, vals.log_pdf.exp())
            },
            w,
        )
    }

    /// Second-order expansion in `(u, v, params)`.
    ///
    /// Closed-form families are differentiated exactly. The Student-t
    /// family is exact in `(u, v, rho)` and uses central differences in
    /// its degrees of freedom.
    pub fn local_jet(&self, u: f64, v: f64) -> LocalJet {
        let u = clamp_unit(u);
        let v = clamp_unit(v);
        match self.family.kind {
            BicopKind::StudentT => self.student_local_jet(u, v),
            _ => {
                let vals = self.eval_generic(
                    Jet::<3>::variable(u, 0),
                    Jet::<3>::variable(v, 1),
                    Jet::<3>::variable(self.params[0], 2),
                );
                LocalJet { log_pdf: widen(vals.log_pdf), h1: widen(vals.h1), h2: widen(vals.h2) }
            }
        }
    }

    fn student_local_jet(&self, u: f64, v: f64) -> LocalJet {
        let rho = self.params[0];
        let nu = self.params[1];
        let step = 1e-4 * nu.max(1.0);
        let at = |nu: f64| {
            let s = BicopSpec { family: self.family, params: [rho, nu] };
            s.eval_generic(
                Jet::<3>::variable(u, 0),
                Jet::<3>::variable(v, 1),
                Jet::<3>::variable(rho, 2),
            )
        };
        let (lo, mid, hi) = (at(nu - step), at(nu), at(nu + step));
        let merge = |lo: Jet<3>, mid: Jet<3>, hi: Jet<3>| {
            let mut out = widen(mid);
            out.g[3] = (hi.v - lo.v) / (2.0 * step);
            out.h[3][3] = (hi.v - 2.0 * mid.v + lo.v) / (step * step);
            for i in 0..3 {
                let d = (hi.g[i] - lo.g[i]) / (2.0 * step);
                out.h[i][3] = d;
                out.h[3][i] = d;
            }
            out
        };
        LocalJet {
            log_pdf: merge(lo.log_pdf, mid.log_pdf, hi.log_pdf),
            h1: merge(lo.h1, mid.h1, hi.h1),
            h2: merge(lo.h2, mid.h2, hi.h2),
        }
    }

    /// Gradient (and Hessian when `order == 2`) of `ln c(u, v)` in the
    /// family parameters.
    pub fn loglik_derivs(&self, u: f64, v: f64, order: u8) -> Result<ParamDerivs> {
        let (u, v) = (check_unit(u)?, check_unit(v)?);
        let k = self.n_params();
        if k == 0 {
            return Ok(ParamDerivs { gradient: vec![], hessian: vec![] });
        }
        let jet = self.local_jet(u, v).log_pdf;
        let gradient: Vec<f64> = (0..k).map(|i| jet.g[2 + i]).collect();
        let hessian = if order >= 2 {
            (0..k * k).map(|ij| jet.h[2 + ij / k][2 + ij % k]).collect()
        } else {
            vec![]
        };
        if gradient.iter().chain(&hessian).any(|x| !x.is_finite()) {
            return Err(VineError::Numerical(format!("non-finite derivative for {}", self.family)));
        }
        Ok(ParamDerivs { gradient, hessian })
    }

    /// Central finite-difference version of [`Self::loglik_derivs`].
    /// Gradient step `1e-5 max(1, |theta|)`, Hessian step `1e-4 max(1, |theta|)`.
    pub fn loglik_derivs_fd(&self, u: f64, v: f64, order: u8) -> Result<ParamDerivs> {
        let (u, v) = (check_unit(u)?, check_unit(v)?);
        let k = self.n_params();
        let base = self.params;
        let f = |p: &[f64]| -> f64 {
            let s = BicopSpec { family: self.family, params: [p[0], p.get(1).copied().unwrap_or(0.0)] };
            s.eval(u, v).log_pdf
        };
        let kind = self.family.kind;
        let mut gradient = vec![0.0; k];
        for i in 0..k {
            let h = 1e-5 * base[i].abs().max(1.0);
            gradient[i] = fd_first(&base[..k], i, h, kind, &f);
        }
        let mut hessian = vec![];
        if order >= 2 {
            hessian = vec![0.0; k * k];
            for i in 0..k {
                let hi = 1e-4 * base[i].abs().max(1.0);
                for j in 0..k {
                    let hj = 1e-4 * base[j].abs().max(1.0);
                    let g = |p: &[f64]| fd_first(p, j, hj, kind, &f);
                    hessian[i * k + j] = fd_first(&base[..k], i, hi, kind, &g);
                }
            }
        }
        if gradient.iter().chain(&hessian).any(|x| !x.is_finite()) {
            return Err(VineError::Numerical(format!("non-finite difference for {}", self.family)));
        }
        Ok(ParamDerivs { gradient, hessian })
    }
}

impl fmt::Display for BicopSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family)?;
        for (i, p) in self.params().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

fn widen(j: Jet<3>) -> Jet<4> {
    let mut out = Jet::<4>::constant(j.v);
    for i in 0..3 {
        out.g[i] = j.g[i];
        for k in 0..3 {
            out.h[i][k] = j.h[i][k];
        }
    }
    out
}

/// Whether `x` lies in the admissible range of parameter `index`.
pub(crate) fn param_in_domain(kind: BicopKind, index: usize, x: f64) -> bool {
    match (kind, index) {
        (BicopKind::Gauss | BicopKind::StudentT, 0) => x > -1.0 && x < 1.0,
        (BicopKind::StudentT, 1) => x > 2.0,
        (BicopKind::Clayton, 0) => x > 0.0,
        (BicopKind::Gumbel | BicopKind::Joe, 0) => x >= 1.0,
        (BicopKind::Frank, 0) => x != 0.0,
        _ => false,
    }
}

fn check_params(kind: BicopKind, p: &[f64]) -> std::result::Result<(), String> {
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || !param_in_domain(kind, i, x) {
            return Err(format!("parameter {} = {} out of range", i + 1, x));
        }
    }
    Ok(())
}

/// Central difference in coordinate `i`, switching to a one-sided
/// three-point stencil when a side leaves the parameter domain.
pub(crate) fn fd_first(
    p: &[f64],
    i: usize,
    h: f64,
    kind: BicopKind,
    f: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let mut q = p.to_vec();
    let x = p[i];
    let at = |q: &mut Vec<f64>, x: f64| {
        q[i] = x;
        f(q)
    };
    let lo_ok = param_in_domain(kind, i, x - h);
    let hi_ok = param_in_domain(kind, i, x + h);
    if lo_ok && hi_ok {
        (at(&mut q, x + h) - at(&mut q, x - h)) / (2.0 * h)
    } else if hi_ok {
        (-3.0 * at(&mut q, x) + 4.0 * at(&mut q, x + h) - at(&mut q, x + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * at(&mut q, x) - 4.0 * at(&mut q, x - h) + at(&mut q, x - 2.0 * h)) / (2.0 * h)
    }
}

/// Solve `g(a) = w` on (0, 1) for nondecreasing `g`, given `(g, g')`.
/// Newton steps safeguarded by bisection.
fn invert_monotone(g: impl Fn(f64) -> (f64, f64), w: f64) -> Result<f64> {
    const MAX_ITER: usize = 200;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = w.clamp(U_EPS, 1.0 - U_EPS);
    for _ in 0..MAX_ITER {
        let (gx, dg) = g(x);
        let r = gx - w;
        if r.abs() <= 1e-14 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON {
            return Ok(x);
        }
        let newton = x - r / dg;
        let next = if dg > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x {
            return Ok(x);
        }
        x = next;
    }
    Err(VineError::Convergence { iterations: MAX_ITER })
}
