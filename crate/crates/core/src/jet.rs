//! Second-order forward-mode differentiation.
//!
//! Pair-copula formulas are written once against [`Real`] and evaluated
//! either on plain `f64` or on a [`Jet`], which carries the value together
//! with its gradient and Hessian with respect to `N` seeded inputs.

use crate::special;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn exp_m1(self) -> Self;
    fn sqrt(self) -> Self;
    fn recip(self) -> Self;
    fn powf(self, e: Self) -> Self {
        (e * self.ln()).exp()
    }
    fn powc(self, e: f64) -> Self;
    fn norm_cdf(self) -> Self;
    fn norm_quantile(self) -> Self;
    /// Student-t cdf with fixed degrees of freedom.
    fn t_cdf(self, nu: f64) -> Self;
    /// Student-t quantile with fixed degrees of freedom.
    fn t_quantile(self, nu: f64) -> Self;

    fn one_minus(self) -> Self {
        -self + 1.0
    }
    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn powc(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    fn norm_cdf(self) -> Self {
        special::norm_cdf(self)
    }
    fn norm_quantile(self) -> Self {
        special::norm_quantile(self)
    }
    fn t_cdf(self, nu: f64) -> Self {
        special::t_cdf(self, nu)
    }
    fn t_quantile(self, nu: f64) -> Self {
        special::t_quantile(self, nu)
    }
}

/// Value, gradient and Hessian with respect to `N` inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; N], h: [[0.0; N]; N] }
    }

    /// Independent input number `i`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Jet { v: f0, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = f1 * self.g[i];
        }
        for i in 0..N {
            for j in 0..=i {
                let x = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
            for j in 0..N {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..N {
            self.g[i] -= o.g[i];
            for j in 0..N {
                self.h[i][j] -= o.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut out = Jet { v: self.v * o.v, g: [0.0; N], h: [[0.0; N]; N] };
        for i in 0..N {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
        }
        for i in 0..N {
            for j in 0..=i {
                let x = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for i in 0..N {
            self.g[i] = -self.g[i];
            for j in 0..N {
                self.h[i][j] = -self.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..N {
            self.g[i] *= c;
            for j in 0..N {
                self.h[i][j] *= c;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

impl<const N: usize> Real for Jet<N> {
    fn cst(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }
    fn ln_1p(self) -> Self {
        let r = 1.0 / (1.0 + self.v);
        self.chain(self.v.ln_1p(), r, -r * r)
    }
    fn exp_m1(self) -> Self {
        let e = self.v.exp();
        self.chain(self.v.exp_m1(), e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn powc(self, e: f64) -> Self {
        let p = self.v.powf(e - 2.0);
        self.chain(p * self.v * self.v, e * p * self.v, e * (e - 1.0) * p)
    }
    fn norm_cdf(self) -> Self {
        let d = special::norm_pdf(self.v);
        self.chain(special::norm_cdf(self.v), d, -self.v * d)
    }
    fn norm_quantile(self) -> Self {
        let q = special::norm_quantile(self.v);
        let r = 1.0 / special::norm_pdf(q);
        self.chain(q, r, q * r * r)
    }
    fn t_cdf(self, nu: f64) -> Self {
        let d = special::t_pdf(self.v, nu);
        let x = self.v;
        self.chain(special::t_cdf(x, nu), d, -(nu + 1.0) * x / (nu + x * x) * d)
    }
    fn t_quantile(self, nu: f64) -> Self {
        let q = special::t_quantile(self.v, nu);
        let r = 1.0 / special::t_pdf(q, nu);
        self.chain(q, r, (nu + 1.0) * q / (nu + q * q) * r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f<T: Real>(x: T, y: T) -> T {
        (x * y).exp() / (x.square() + 1.0) + y.sqrt().ln_1p() - x.powf(y)
    }

    #[test]
    fn jet_matches_finite_differences() {
        let (x0, y0) = (0.7, 1.3);
        let j = f(Jet::<2>::variable(x0, 0), Jet::<2>::variable(y0, 1));
        assert_relative_eq!(j.v, f(x0, y0), epsilon = 1e-14);
        let h = 1e-5;
        let gx = (f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h);
        let gy = (f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h);
        assert_relative_eq!(j.g[0], gx, epsilon = 1e-8);
        assert_relative_eq!(j.g[1], gy, epsilon = 1e-8);
        let h = 1e-4;
        let hxy = (f(x0 + h, y0 + h) - f(x0 + h, y0 - h) - f(x0 - h, y0 + h)
            + f(x0 - h, y0 - h))
            / (4.0 * h * h);
        let hxx = (f(x0 + h, y0) - 2.0 * f(x0, y0) + f(x0 - h, y0)) / (h * h);
        assert_relative_eq!(j.h[0][1], hxy, epsilon = 1e-6);
        assert_relative_eq!(j.h[1][0], hxy, epsilon = 1e-6);
        assert_relative_eq!(j.h[0][0], hxx, epsilon = 1e-6);
    }

    #[test]
    fn quantile_derivatives() {
        let p = 0.83;
        let jn = Jet::<1>::variable(p, 0).norm_quantile();
        let jt = Jet::<1>::variable(p, 0).t_quantile(4.5);
        let h = 1e-4;
        let fd2 = |f: &dyn Fn(f64) -> f64| (f(p + h) - 2.0 * f(p) + f(p - h)) / (h * h);
        let fd1 = |f: &dyn Fn(f64) -> f64| (f(p + 1e-5) - f(p - 1e-5)) / 2e-5;
        let qn = |u: f64| special::norm_quantile(u);
        let qt = |u: f64| special::t_quantile(u, 4.5);
        assert_relative_eq!(jn.g[0], fd1(&qn), max_relative = 1e-7);
        assert_relative_eq!(jn.h[0][0], fd2(&qn), max_relative = 1e-5);
        assert_relative_eq!(jt.g[0], fd1(&qt), max_relative = 1e-7);
        assert_relative_eq!(jt.h[0][0], fd2(&qt), max_relative = 1e-5);
    }
}
