use super::{BicopFamily, BicopKind, BicopSpec, Rotation};
use crate::error::{Result, VineError};
use crate::optim::brent_root;
use crate::special::debye1;
use std::f64::consts::FRAC_PI_2;

/// Kendall's tau implied by a pair copula.
pub fn param_to_tau(spec: &BicopSpec) -> f64 {
    let fam = spec.family();
    if fam.kind == BicopKind::Independence {
        return 0.0;
    }
    let t = base_tau(fam.kind, spec.params()[0]);
    if fam.rotation.negates_tau() {
        -t
    } else {
        t
    }
}

pub(crate) fn base_tau(kind: BicopKind, theta: f64) -> f64 {
    match kind {
        BicopKind::Independence => 0.0,
        BicopKind::Gauss | BicopKind::StudentT => theta.asin() / FRAC_PI_2,
        BicopKind::Clayton => theta / (theta + 2.0),
        BicopKind::Gumbel => 1.0 - 1.0 / theta,
        BicopKind::Frank => frank_tau(theta),
        BicopKind::Joe => joe_tau(theta),
    }
}

fn frank_tau(theta: f64) -> f64 {
    if theta.abs() < 0.1 {
        let t2 = theta * theta;
        return theta * (1.0 / 9.0 - t2 * (1.0 / 900.0 - t2 * (1.0 / 52920.0 - t2 / 2_721_600.0)));
    }
    1.0 - 4.0 / theta + 4.0 * debye1(theta) / theta
}

fn joe_tau(theta: f64) -> f64 {
    const TERMS: usize = 4000;
    let mut s = 0.0;
    for k in (1..=TERMS).rev() {
        let k = k as f64;
        s += 1.0 / (k * (theta * k + 2.0) * (theta * (k - 1.0) + 2.0));
    }
    let tail = 1.0 / (2.0 * theta * theta * (TERMS as f64 + 0.5).powi(2));
    1.0 - 4.0 * (s + tail)
}

/// Association parameter (rho or theta) for a given Kendall's tau.
/// For the Student-t family only rho is determined.
pub fn tau_to_param(family: BicopFamily, tau: f64) -> Result<f64> {
    let incompatible = || VineError::IncompatibleTau { family: family.to_string(), tau };
    if !(tau > -1.0 && tau < 1.0) {
        return Err(incompatible());
    }
    let base = if family.rotation.negates_tau() { -tau } else { tau };
    let theta = match family.kind {
        BicopKind::Independence => {
            return if tau == 0.0 { Ok(0.0) } else { Err(incompatible()) };
        }
        BicopKind::Gauss | BicopKind::StudentT => (FRAC_PI_2 * tau).sin(),
        BicopKind::Clayton => {
            if base <= 0.0 {
                return Err(incompatible());
            }
            2.0 * base / (1.0 - base)
        }
        BicopKind::Gumbel => {
            if base < 0.0 {
                return Err(incompatible());
            }
            1.0 / (1.0 - base)
        }
        BicopKind::Joe => {
            if base < 0.0 {
                return Err(incompatible());
            }
            if base == 0.0 {
                1.0
            } else {
                invert_increasing(joe_tau, base, 1.0)?
            }
        }
        BicopKind::Frank => {
            if base == 0.0 {
                return Err(incompatible());
            }
            let t = invert_increasing(frank_tau, base.abs(), 0.0)?;
            t.copysign(base)
        }
    };
    debug_assert!(family.rotation == Rotation::R0 || family.kind.rotatable());
    Ok(theta)
}

/// Solve `f(theta) = target` for increasing `f` on `(lower, inf)`.
fn invert_increasing(f: fn(f64) -> f64, target: f64, lower: f64) -> Result<f64> {
    let mut hi = lower + 1.0;
    while f(hi) < target {
        hi = lower + 2.0 * (hi - lower);
        if hi > 1e6 {
            return Err(VineError::Convergence { iterations: 0 });
        }
    }
    brent_root(|x| f(x) - target, lower, hi, 1e-14, 200)
}
