//! Scalar carrying its gradient with respect to the predicted corners.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Diff {
    pub v: f64,
    pub g: [f64; 4],
}

impl Diff {
    pub const fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 4] }
    }

    pub const fn new(v: f64, g: [f64; 4]) -> Self {
        Self { v, g }
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.v * k, self.g.map(|d| d * k))
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, self.g.map(|d| d * e))
    }

    /// `self^p` for a positive base.
    pub fn powf(self, p: f64) -> Self {
        let v = self.v.powf(p);
        let dv = p * self.v.powf(p - 1.0);
        Self::new(v, self.g.map(|d| d * dv))
    }

    pub fn atan(self) -> Self {
        let k = 1.0 / (1.0 + self.v * self.v);
        Self::new(self.v.atan(), self.g.map(|d| d * k))
    }

    /// Drops the gradient, keeping the value.
    pub fn detach(self) -> Self {
        Self::constant(self.v)
    }
}

impl Add for Diff {
    type Output = Diff;
    fn add(self, o: Diff) -> Diff {
        Diff::new(self.v + o.v, std::array::from_fn(|i| self.g[i] + o.g[i]))
    }
}

impl Sub for Diff {
    type Output = Diff;
    fn sub(self, o: Diff) -> Diff {
        Diff::new(self.v - o.v, std::array::from_fn(|i| self.g[i] - o.g[i]))
    }
}

impl Mul for Diff {
    type Output = Diff;
    fn mul(self, o: Diff) -> Diff {
        Diff::new(
            self.v * o.v,
            std::array::from_fn(|i| self.g[i] * o.v + self.v * o.g[i]),
        )
    }
}

impl Div for Diff {
    type Output = Diff;
    fn div(self, o: Diff) -> Diff {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Diff::new(q, std::array::from_fn(|i| (self.g[i] - q * o.g[i]) * inv))
    }
}

impl Neg for Diff {
    type Output = Diff;
    fn neg(self) -> Diff {
        self.scale(-1.0)
    }
}

impl Add<f64> for Diff {
    type Output = Diff;
    fn add(self, k: f64) -> Diff {
        Diff::new(self.v + k, self.g)
    }
}

impl Sub<Diff> for f64 {
    type Output = Diff;
    fn sub(self, d: Diff) -> Diff {
        Diff::new(self - d.v, d.g.map(|x| -x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let a = Diff::new(2.0, [1.0, 0.0, 0.0, 0.0]);
        let b = Diff::new(4.0, [0.0, 1.0, 0.0, 0.0]);
        let p = a * b;
        assert_eq!(p.v, 8.0);
        assert_eq!(p.g, [4.0, 2.0, 0.0, 0.0]);
        let q = a / b;
        assert_eq!(q.v, 0.5);
        assert_eq!(q.g, [0.25, -0.125, 0.0, 0.0]);
    }

    #[test]
    fn elementary_functions() {
        let x = Diff::new(0.5, [1.0, 0.0, 0.0, 0.0]);
        assert!((x.exp().g[0] - 0.5f64.exp()).abs() < 1e-15);
        assert!((x.atan().g[0] - 1.0 / 1.25).abs() < 1e-15);
        assert!((x.powf(0.5).g[0] - 0.5 / 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(x.detach().g, [0.0; 4]);
    }
}
