//! Dual numbers for forward-mode differentiation.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// A value `a + εb` with `ε² = 0`.
///
/// Arithmetic on duals carries the first derivative alongside the primal:
/// seeding an input with tangent 1 and pushing it through a computation
/// yields the directional derivative in the tangent slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub primal: f64,
    pub tangent: f64,
}

impl Dual {
    pub fn new(primal: f64, tangent: f64) -> Self {
        Dual { primal, tangent }
    }

    /// A value with zero tangent.
    pub fn constant(primal: f64) -> Self {
        Dual {
            primal,
            tangent: 0.0,
        }
    }

    /// A variable seeded with unit tangent.
    pub fn variable(primal: f64) -> Self {
        Dual {
            primal,
            tangent: 1.0,
        }
    }

    pub fn ln(self) -> Self {
        Dual::new(self.primal.ln(), self.tangent / self.primal)
    }

    pub fn sin(self) -> Self {
        Dual::new(self.primal.sin(), self.tangent * self.primal.cos())
    }

    pub fn cos(self) -> Self {
        Dual::new(self.primal.cos(), -self.tangent * self.primal.sin())
    }

    pub fn exp(self) -> Self {
        let e = self.primal.exp();
        Dual::new(e, self.tangent * e)
    }

    pub fn tanh(self) -> Self {
        let t = self.primal.tanh();
        Dual::new(t, self.tangent * (1.0 - t * t))
    }

    pub fn sigmoid(self) -> Self {
        let s = crate::autodiff::sigmoid(self.primal);
        Dual::new(s, self.tangent * s * (1.0 - s))
    }

    /// Rectified linear unit; the derivative at 0 is taken as 0.
    pub fn relu(self) -> Self {
        if self.primal > 0.0 {
            self
        } else {
            Dual::new(0.0, 0.0)
        }
    }

    pub fn powi(self, n: i32) -> Self {
        Dual::new(
            self.primal.powi(n),
            self.tangent * f64::from(n) * self.primal.powi(n - 1),
        )
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.primal + rhs.primal, self.tangent + rhs.tangent)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.primal - rhs.primal, self.tangent - rhs.tangent)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        // (a+εb)(c+εd) = ac + ε(ad + bc)
        Dual::new(
            self.primal * rhs.primal,
            self.primal * rhs.tangent + self.tangent * rhs.primal,
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let q = self.primal / rhs.primal;
        Dual::new(q, (self.tangent - q * rhs.tangent) / rhs.primal)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.primal, -self.tangent)
    }
}
