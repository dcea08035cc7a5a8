//! Scalar special functions: normal and Student-t distribution helpers,
//! the chi-square tail, the Debye function used by Frank's tau, and
//! Gauss-Legendre nodes.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::{beta, erf, gamma};
use std::f64::consts::{PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    let d = norm_pdf(x);
    if d > 0.0 {
        let r = (norm_cdf(x) - p) / d;
        x -= r / (1.0 + 0.5 * x * r);
    }
    x
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Density of the standard Student t distribution with `nu` degrees of freedom.
pub fn t_pdf(x: f64, nu: f64) -> f64 {
    t_ln_pdf(x, nu).exp()
}

pub fn t_ln_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
        - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

pub fn t_cdf(x: f64, nu: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let x2 = x * x;
    if x2 < nu {
        // small |x|: the complementary incomplete beta is accurate around 0.5
        let half = 0.5 * beta::beta_reg(0.5, 0.5 * nu, x2 / (nu + x2));
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    } else {
        let tail = 0.5 * beta::beta_reg(0.5 * nu, 0.5, nu / (nu + x2));
        if x >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

pub fn t_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, nu).expect("nu > 0");
    let mut x = dist.inverse_cdf(p);
    // polish with Newton steps; the incomplete-beta inverse loses digits in the tails
    for _ in 0..3 {
        let f = t_cdf(x, nu) - p;
        let d = t_pdf(x, nu);
        if d <= 0.0 || !d.is_finite() {
            break;
        }
        let step = f / d;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Upper tail P(X >= x) of a chi-square variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    gamma::gamma_ur(0.5 * dof, 0.5 * x)
}

pub fn chi2_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return 1.0;
    }
    gamma::gamma_lr(0.5 * dof, 0.5 * x)
}

pub fn digamma(x: f64) -> f64 {
    gamma::digamma(x)
}

/// Debye function of order one, D1(x) = (1/x) * integral_0^x t / (e^t - 1) dt.
pub fn debye1(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x < 0.0 {
        return debye1(-x) - 0.5 * x;
    }
    let (nodes, weights) = gauss_legendre_unit(64);
    // split [0, x] into panels of width <= 4 so the integrand stays smooth per panel
    let panels = (x / 4.0).ceil().max(1.0) as usize;
    let width = x / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 * width;
        for (t, w) in nodes.iter().zip(&weights) {
            let s = a + t * width;
            let f = if s < 1e-8 { 1.0 - 0.5 * s } else { s / s.exp_m1() };
            total += w * width * f;
        }
    }
    total / x
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}
