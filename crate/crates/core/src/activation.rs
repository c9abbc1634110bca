//! Scalar activations and a first-order dual number.
//!
//! The network code is generic over [`Scalar`], so running the hand-written
//! backward pass on [`Dual`] inputs seeded with a direction `v` yields the
//! exact directional derivative of the gradient (a Hessian-vector product).

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(s: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * s * s).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(s: f64) -> f64 {
    0.5 * libm::erfc(-s / std::f64::consts::SQRT_2)
}

/// `x Φ(x / spread)`.
pub fn gelu(x: f64, spread: f64) -> f64 {
    x * normal_cdf(x / spread)
}

pub fn gelu_d1(x: f64, spread: f64) -> f64 {
    let s = x / spread;
    normal_cdf(s) + s * normal_pdf(s)
}

pub fn gelu_d2(x: f64, spread: f64) -> f64 {
    let s = x / spread;
    normal_pdf(s) * (2.0 - s * s) / spread
}

/// `1 / (1 + e^{-t})`, evaluated without overflow.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)`, evaluated without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> + AddAssign
{
    fn constant(value: f64) -> Self;
    fn value(self) -> f64;
    fn gelu(self, spread: f64) -> Self;
    fn gelu_slope(self, spread: f64) -> Self;
    fn logistic(self) -> Self;
    fn softplus(self) -> Self;
}

impl Scalar for f64 {
    fn constant(value: f64) -> Self {
        value
    }
    fn value(self) -> f64 {
        self
    }
    fn gelu(self, spread: f64) -> Self {
        gelu(self, spread)
    }
    fn gelu_slope(self, spread: f64) -> Self {
        gelu_d1(self, spread)
    }
    fn logistic(self) -> Self {
        logistic(self)
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
}

/// `re + du·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.du + rhs.du)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, rhs: Self) {
        self.re += rhs.re;
        self.du += rhs.du;
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.du - rhs.du)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.re * rhs.re, self.re * rhs.du + self.du * rhs.re)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl Scalar for Dual {
    fn constant(value: f64) -> Self {
        Self::new(value, 0.0)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn gelu(self, spread: f64) -> Self {
        Self::new(gelu(self.re, spread), gelu_d1(self.re, spread) * self.du)
    }
    fn gelu_slope(self, spread: f64) -> Self {
        Self::new(gelu_d1(self.re, spread), gelu_d2(self.re, spread) * self.du)
    }
    fn logistic(self) -> Self {
        let s = logistic(self.re);
        Self::new(s, s * (1.0 - s) * self.du)
    }
    fn softplus(self) -> Self {
        Self::new(softplus(self.re), logistic(self.re) * self.du)
    }
}
