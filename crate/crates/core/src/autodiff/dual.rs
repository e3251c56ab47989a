use std::ops::{Add, Mul, Neg, Sub};

/// Value paired with its derivative along one input direction (here: time).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualScalar {
    pub value: f64,
    pub d_dt: f64,
}

impl DualScalar {
    pub const fn new(value: f64, d_dt: f64) -> Self {
        Self { value, d_dt }
    }

    pub const fn constant(value: f64) -> Self {
        Self { value, d_dt: 0.0 }
    }
}

impl Add for DualScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.d_dt + rhs.d_dt)
    }
}

impl Sub for DualScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.d_dt - rhs.d_dt)
    }
}

impl Mul for DualScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.d_dt * rhs.value + self.value * rhs.d_dt,
        )
    }
}

impl Neg for DualScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d_dt)
    }
}

/// The arithmetic a dense forward pass needs. Implemented for plain `f64` and
/// for [`DualScalar`], so both evaluations run the same operation sequence and
/// their values agree bit for bit.
pub trait Scalar: Copy + Add<Output = Self> {
    fn from_f64(x: f64) -> Self;
    /// `self * w` for a constant weight.
    fn scale(self, w: f64) -> Self;
    fn tanh(self) -> Self;
    fn value(self) -> f64;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn scale(self, w: f64) -> Self {
        self * w
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn value(self) -> f64 {
        self
    }
}

impl Scalar for DualScalar {
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn scale(self, w: f64) -> Self {
        Self::new(self.value * w, self.d_dt * w)
    }
    fn tanh(self) -> Self {
        let y = self.value.tanh();
        Self::new(y, (1.0 - y * y) * self.d_dt)
    }
    fn value(self) -> f64 {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let a = DualScalar::new(3.0, 2.0);
        let b = DualScalar::new(-1.5, 0.5);
        let p = a * b;
        assert_eq!(p.value, -4.5);
        assert_eq!(p.d_dt, 2.0 * -1.5 + 3.0 * 0.5);
    }

    #[test]
    fn tanh_chain_rule_matches_finite_difference() {
        let t0 = 0.37;
        let f = |t: f64| (2.0 * t - 0.1).tanh();
        let x = DualScalar::new(2.0 * t0 - 0.1, 2.0).tanh();
        let h = 1e-6;
        let fd = (f(t0 + h) - f(t0 - h)) / (2.0 * h);
        assert!((x.d_dt - fd).abs() < 1e-9);
        assert_eq!(x.value, f(t0));
    }
}
