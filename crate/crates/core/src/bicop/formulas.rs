//! Unrotated pair-copula formulas, generic over [`Real`].
//!
//! Every family here is exchangeable, so `h(b | a)` is the same function as
//! `h(a | b)` with its arguments swapped.

use super::BicopKind;
use crate::jet::Real;
use crate::special;

/// Log density and both conditional distribution functions of an
/// unrotated pair copula at `(a, b)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BaseValues<T> {
    pub log_pdf: T,
    /// h(a | b) = dC/db
    pub h_a_given_b: T,
    /// h(b | a) = dC/da
    pub h_b_given_a: T,
}

/// `theta` is the copula parameter (rho for the elliptical families).
/// `nu` is only read by the Student-t family and is held fixed.
pub(crate) fn base_eval<T: Real>(kind: BicopKind, a: T, b: T, theta: T, nu: f64) -> BaseValues<T> {
    match kind {
        BicopKind::Independence => BaseValues {
            log_pdf: T::cst(0.0),
            h_a_given_b: a,
            h_b_given_a: b,
        },
        BicopKind::Gauss => gauss(a, b, theta),
        BicopKind::StudentT => student(a, b, theta, nu),
        BicopKind::Clayton => clayton(a, b, theta),
        BicopKind::Gumbel => gumbel(a, b, theta),
        BicopKind::Frank => frank(a, b, theta),
        BicopKind::Joe => joe(a, b, theta),
    }
}

fn gauss<T: Real>(a: T, b: T, rho: T) -> BaseValues<T> {
    let x = a.norm_quantile();
    let y = b.norm_quantile();
    let one_m = rho.square().one_minus();
    let s = one_m.sqrt();
    let log_pdf = -one_m.ln() * 0.5
        - (rho.square() * (x.square() + y.square()) - rho * x * y * 2.0) / (one_m * 2.0);
    BaseValues {
        log_pdf,
        h_a_given_b: ((x - rho * y) / s).norm_cdf(),
        h_b_given_a: ((y - rho * x) / s).norm_cdf(),
    }
}

fn student<T: Real>(a: T, b: T, rho: T, nu: f64) -> BaseValues<T> {
    let x = a.t_quantile(nu);
    let y = b.t_quantile(nu);
    let one_m = rho.square().one_minus();
    let konst = special::ln_gamma(0.5 * (nu + 2.0)) + special::ln_gamma(0.5 * nu)
        - 2.0 * special::ln_gamma(0.5 * (nu + 1.0));
    let quad = (x.square() + y.square() - rho * x * y * 2.0) / (one_m * nu);
    let log_pdf = -one_m.ln() * 0.5 - quad.ln_1p() * (0.5 * (nu + 2.0))
        + ((x.square() / nu).ln_1p() + (y.square() / nu).ln_1p()) * (0.5 * (nu + 1.0))
        + konst;
    let scale_b = ((y.square() + nu) * one_m / (nu + 1.0)).sqrt();
    let scale_a = ((x.square() + nu) * one_m / (nu + 1.0)).sqrt();
    BaseValues {
        log_pdf,
        h_a_given_b: ((x - rho * y) / scale_b).t_cdf(nu + 1.0),
        h_b_given_a: ((y - rho * x) / scale_a).t_cdf(nu + 1.0),
    }
}

/// log(e^p + e^q - 1) for p, q >= 0 without overflow.
fn log_sum_exp_minus_one<T: Real>(p: T, q: T) -> T {
    let m = if p.value() >= q.value() { p } else { q };
    m + ((p - m).exp() + (q - m).exp() - (-m).exp()).ln()
}

fn clayton<T: Real>(a: T, b: T, theta: T) -> BaseValues<T> {
    let la = a.ln();
    let lb = b.ln();
    // log S with S = a^-theta + b^-theta - 1
    let ls = log_sum_exp_minus_one(-theta * la, -theta * lb);
    let inv = theta.recip();
    let log_pdf = (theta + 1.0).ln() - (theta + 1.0) * (la + lb) - (inv + 2.0) * ls;
    let h = |lcond: T| (-(theta + 1.0) * lcond - (inv + 1.0) * ls).exp();
    BaseValues { log_pdf, h_a_given_b: h(lb), h_b_given_a: h(la) }
}

fn gumbel<T: Real>(a: T, b: T, theta: T) -> BaseValues<T> {
    let x = -a.ln();
    let y = -b.ln();
    let lx = x.ln();
    let ly = y.ln();
    let p = theta * lx;
    let q = theta * ly;
    let m = if p.value() >= q.value() { p } else { q };
    let lt = m + ((p - m).exp() + (q - m).exp()).ln();
    let inv = theta.recip();
    let big_a = (lt * inv).exp();
    let log_pdf = -big_a + (theta - 1.0) * (lx + ly) + x + y + (inv - 2.0) * lt
        + (big_a + theta - 1.0).ln();
    let common = -big_a + (inv - 1.0) * lt;
    BaseValues {
        log_pdf,
        h_a_given_b: (common + (theta - 1.0) * ly + y).exp(),
        h_b_given_a: (common + (theta - 1.0) * lx + x).exp(),
    }
}

fn frank<T: Real>(a: T, b: T, theta: T) -> BaseValues<T> {
    let ea = (-theta * a).exp_m1();
    let eb = (-theta * b).exp_m1();
    let e1 = (-theta).exp_m1();
    // denominator (1 - e^-theta) - (1 - e^-theta a)(1 - e^-theta b)
    let den = -e1 - ea * eb;
    let log_pdf = (theta * -e1).ln() - theta * (a + b) - den.square().ln();
    let base = e1 + ea * eb;
    BaseValues {
        log_pdf,
        h_a_given_b: (-theta * b).exp() * ea / base,
        h_b_given_a: (-theta * a).exp() * eb / base,
    }
}

fn joe<T: Real>(a: T, b: T, theta: T) -> BaseValues<T> {
    let la = a.one_minus().ln();
    let lb = b.one_minus().ln();
    let pa = (theta * la).exp();
    let pb = (theta * lb).exp();
    let s = pa + pb - pa * pb;
    let ls = s.ln();
    let inv = theta.recip();
    let log_pdf = (inv - 2.0) * ls + (theta - 1.0) * (la + lb) + (s + theta - 1.0).ln();
    let common = (inv - 1.0) * ls;
    BaseValues {
        log_pdf,
        h_a_given_b: (common + (theta - 1.0) * lb).exp() * pa.one_minus(),
        h_b_given_a: (common + (theta - 1.0) * la).exp() * pb.one_minus(),
    }
}

/// Closed-form copula cdf, where one exists.
pub(crate) fn base_cdf(kind: BicopKind, a: f64, b: f64, theta: f64) -> Option<f64> {
    Some(match kind {
        BicopKind::Independence => a * b,
        BicopKind::Clayton => {
            let ls = log_sum_exp_minus_one(-theta * a.ln(), -theta * b.ln());
            (-ls / theta).exp()
        }
        BicopKind::Gumbel => {
            let t = (-a.ln()).powf(theta) + (-b.ln()).powf(theta);
            (-t.powf(1.0 / theta)).exp()
        }
        BicopKind::Frank => {
            let num = (-theta * a).exp_m1() * (-theta * b).exp_m1();
            -(num / (-theta).exp_m1()).ln_1p() / theta
        }
        BicopKind::Joe => {
            let pa = (1.0 - a).powf(theta);
            let pb = (1.0 - b).powf(theta);
            1.0 - (pa + pb - pa * pb).powf(1.0 / theta)
        }
        BicopKind::Gauss | BicopKind::StudentT => return None,
    })
}

/// Closed-form inverse of `a -> h(a | b)`, where one exists.
pub(crate) fn base_hinv_closed(kind: BicopKind, w: f64, b: f64, theta: f64, nu: f64) -> Option<f64> {
    Some(match kind {
        BicopKind::Independence => w,
        BicopKind::Gauss => {
            let s = (1.0 - theta * theta).sqrt();
            special::norm_cdf(special::norm_quantile(w) * s + theta * special::norm_quantile(b))
        }
        BicopKind::StudentT => {
            let y = special::t_quantile(b, nu);
            let s = ((nu + y * y) * (1.0 - theta * theta) / (nu + 1.0)).sqrt();
            special::t_cdf(special::t_quantile(w, nu + 1.0) * s + theta * y, nu)
        }
        BicopKind::Clayton => {
            let lb = b.ln();
            let t1 = -theta / (1.0 + theta) * (w.ln() + (theta + 1.0) * lb);
            let t2 = -theta * lb;
            let ls = t1 + (-(t2 - t1).exp() + (-t1).exp()).ln_1p();
            (-ls / theta).exp()
        }
        BicopKind::Frank => {
            let e1 = (-theta).exp_m1();
            let eb = (-theta * b).exp();
            -(w * e1 / (w + (1.0 - w) * eb)).ln_1p() / theta
        }
        BicopKind::Gumbel | BicopKind::Joe => return None,
    })
}
