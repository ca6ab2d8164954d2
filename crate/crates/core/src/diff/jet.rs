//! Truncated Taylor arithmetic for input derivatives of order ≤ 2.

use std::ops::{Add, Mul, Neg, Sub};

use super::Scalar;

/// Value with first and second derivative along one input direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2<S> {
    pub value: S,
    pub d1: S,
    pub d2: S,
}

impl<S: Scalar> Jet2<S> {
    pub fn new(value: S, d1: S, d2: S) -> Self {
        Self { value, d1, d2 }
    }

    pub fn constant(value: S) -> Self {
        let zero = value.lift(0.0);
        Self {
            value,
            d1: zero,
            d2: zero,
        }
    }

    /// The seed `x + t` for the coordinate being differentiated.
    pub fn variable(value: S) -> Self {
        Self {
            value,
            d1: value.lift(1.0),
            d2: value.lift(0.0),
        }
    }

    fn chain(self, s0: S, s1: S, s2: S) -> Self {
        Self {
            value: s0,
            d1: s1 * self.d1,
            d2: s2 * self.d1 * self.d1 + s1 * self.d2,
        }
    }
}

impl<S: Scalar> Add for Jet2<S> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Self::new(self.value + r.value, self.d1 + r.d1, self.d2 + r.d2)
    }
}

impl<S: Scalar> Sub for Jet2<S> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Self::new(self.value - r.value, self.d1 - r.d1, self.d2 - r.d2)
    }
}

impl<S: Scalar> Mul for Jet2<S> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        let two = self.value.lift(2.0);
        Self::new(
            self.value * r.value,
            self.d1 * r.value + self.value * r.d1,
            self.d2 * r.value + two * self.d1 * r.d1 + self.value * r.d2,
        )
    }
}

impl<S: Scalar> Neg for Jet2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2)
    }
}

impl<S: Scalar> Scalar for Jet2<S> {
    fn lift(&self, c: f64) -> Self {
        Self::constant(self.value.lift(c))
    }

    fn primal(&self) -> f64 {
        self.value.primal()
    }

    fn sigmoid(self) -> Self {
        let s = self.value.sigmoid();
        let one = s.lift(1.0);
        let two = s.lift(2.0);
        let s1 = s * (one - s);
        let s2 = s1 * (one - two * s);
        self.chain(s, s1, s2)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        let one = t.lift(1.0);
        let two = t.lift(2.0);
        let t1 = one - t * t;
        let t2 = -(two * t * t1);
        self.chain(t, t1, t2)
    }
}

/// Two-direction jet: first derivatives along `a` and `b` plus the mixed
/// second derivative `aᵀ H b` (the cross term of a two-parameter expansion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiJet<S> {
    pub value: S,
    pub da: S,
    pub db: S,
    pub dab: S,
}

impl<S: Scalar> BiJet<S> {
    pub fn new(value: S, da: S, db: S, dab: S) -> Self {
        Self { value, da, db, dab }
    }

    pub fn constant(value: S) -> Self {
        let zero = value.lift(0.0);
        Self::new(value, zero, zero, zero)
    }
}

impl<S: Scalar> Add for BiJet<S> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Self::new(self.value + r.value, self.da + r.da, self.db + r.db, self.dab + r.dab)
    }
}

impl<S: Scalar> Sub for BiJet<S> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Self::new(self.value - r.value, self.da - r.da, self.db - r.db, self.dab - r.dab)
    }
}

impl<S: Scalar> Mul for BiJet<S> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Self::new(
            self.value * r.value,
            self.da * r.value + self.value * r.da,
            self.db * r.value + self.value * r.db,
            self.dab * r.value + self.da * r.db + self.db * r.da + self.value * r.dab,
        )
    }
}

impl<S: Scalar> Neg for BiJet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.da, -self.db, -self.dab)
    }
}

impl<S: Scalar> BiJet<S> {
    fn chain(self, s0: S, s1: S, s2: S) -> Self {
        Self::new(
            s0,
            s1 * self.da,
            s1 * self.db,
            s2 * self.da * self.db + s1 * self.dab,
        )
    }
}

impl<S: Scalar> Scalar for BiJet<S> {
    fn lift(&self, c: f64) -> Self {
        Self::constant(self.value.lift(c))
    }

    fn primal(&self) -> f64 {
        self.value.primal()
    }

    fn sigmoid(self) -> Self {
        let s = self.value.sigmoid();
        let one = s.lift(1.0);
        let two = s.lift(2.0);
        let s1 = s * (one - s);
        let s2 = s1 * (one - two * s);
        self.chain(s, s1, s2)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        let one = t.lift(1.0);
        let two = t.lift(2.0);
        let t1 = one - t * t;
        let t2 = -(two * t * t1);
        self.chain(t, t1, t2)
    }
}
