//! Truncated Taylor arithmetic.
//!
//! A [`Jet`] holds normalized Taylor coefficients `c[i] = f^(i)(x0) / i!` up to
//! `order`. Composition through the operations below propagates exact
//! derivatives, which is how every profile derivative beyond the closed forms
//! is produced.

use std::ops::{Add, Mul, Neg, Sub};

/// Highest derivative order a jet can carry.
pub const MAX_ORDER: usize = 7;
const LEN: usize = MAX_ORDER + 1;

const FACTORIAL: [f64; LEN] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; LEN],
    order: usize,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = [0.0; LEN];
        c[0] = value;
        Jet { c, order: order.min(MAX_ORDER) }
    }

    /// The identity map expanded at `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut j = Jet::constant(x0, order);
        if j.order >= 1 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn from_derivatives(d: &[f64], order: usize) -> Self {
        let mut j = Jet::constant(0.0, order);
        for i in 0..=j.order.min(d.len().saturating_sub(1)) {
            j.c[i] = d[i] / FACTORIAL[i];
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.c[i]
    }

    /// `f^(i)(x0)`.
    pub fn derivative(&self, i: usize) -> f64 {
        if i > self.order {
            return 0.0;
        }
        self.c[i] * FACTORIAL[i]
    }

    pub fn derivatives(&self) -> [f64; LEN] {
        let mut d = [0.0; LEN];
        for (i, slot) in d.iter_mut().enumerate().take(self.order + 1) {
            *slot = self.c[i] * FACTORIAL[i];
        }
        d
    }

    pub fn scale(mut self, s: f64) -> Self {
        for v in self.c.iter_mut() {
            *v *= s;
        }
        self
    }

    pub fn add_const(mut self, s: f64) -> Self {
        self.c[0] += s;
        self
    }

    pub fn recip(&self) -> Self {
        let n = self.order;
        let a0 = self.c[0];
        let mut r = Jet::constant(1.0 / a0, n);
        for k in 1..=n {
            let mut s = 0.0;
            for j in 1..=k {
                s += self.c[j] * r.c[k - j];
            }
            r.c[k] = -s / a0;
        }
        r
    }

    pub fn exp(&self) -> Self {
        let n = self.order;
        let mut e = Jet::constant(self.c[0].exp(), n);
        for k in 1..=n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * e.c[k - j];
            }
            e.c[k] = s / k as f64;
        }
        e
    }

    /// Natural logarithm; requires a positive constant term.
    pub fn ln(&self) -> Self {
        let n = self.order;
        let a0 = self.c[0];
        let mut l = Jet::constant(a0.ln(), n);
        for k in 1..=n {
            let mut s = 0.0;
            for j in 1..k {
                s += j as f64 * l.c[j] * self.c[k - j];
            }
            l.c[k] = (self.c[k] - s / k as f64) / a0;
        }
        l
    }

    /// `self^p` for a positive constant term.
    pub fn powf(&self, p: f64) -> Self {
        let n = self.order;
        let a0 = self.c[0];
        let mut r = Jet::constant(a0.powf(p), n);
        // a * r' = p * a' * r, matched coefficient by coefficient.
        for k in 1..=n {
            let mut s = 0.0;
            for j in 1..=k {
                s += (p * j as f64 - (k - j) as f64) * self.c[j] * r.c[k - j];
            }
            r.c[k] = s / (k as f64 * a0);
        }
        r
    }

    pub fn square(&self) -> Self {
        *self * *self
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.order = self.order.min(rhs.order);
        for i in 0..LEN {
            self.c[i] += rhs.c[i];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self.order = self.order.min(rhs.order);
        for i in 0..LEN {
            self.c[i] -= rhs.c[i];
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let n = self.order.min(rhs.order);
        let mut out = Jet::constant(0.0, n);
        for k in 0..=n {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.c[j] * rhs.c[k - j];
            }
            out.c[k] = s;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_of_variable_matches_exp_derivatives() {
        let x = Jet::variable(0.3, MAX_ORDER);
        let e = x.exp();
        for k in 0..=MAX_ORDER {
            assert_relative_eq!(e.derivative(k), 0.3f64.exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn powf_matches_falling_factorial() {
        let x = Jet::variable(1.7, 5);
        let p = -1.5;
        let r = x.powf(p);
        let mut fall = 1.0;
        for k in 0..=5 {
            assert_relative_eq!(r.derivative(k), fall * 1.7f64.powf(p - k as f64), max_relative = 1e-13);
            fall *= p - k as f64;
        }
    }

    #[test]
    fn recip_and_ln_are_consistent() {
        let x = Jet::variable(2.0, 6);
        let f = (x.square().add_const(1.0)).ln();
        // d/dx ln(1+x^2) = 2x/(1+x^2)
        assert_relative_eq!(f.derivative(1), 4.0 / 5.0, max_relative = 1e-14);
        let g = x.recip();
        assert_relative_eq!(g.derivative(3), -6.0 / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn order_truncation_propagates() {
        let a = Jet::variable(1.0, 2);
        let b = Jet::variable(1.0, 5);
        assert_eq!((a * b).order(), 2);
        assert_eq!((a + b).order(), 2);
        assert_eq!(a.derivative(4), 0.0);
    }
}
