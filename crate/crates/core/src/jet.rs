//! Third-order jets of one-dimensional maps.
//!
//! A [`Jet3`] carries the value of a map at a point together with its first
//! three derivatives. Jets compose with the order-3 chain rule, which is all
//! the nonlinearity and the Schwarzian derivative need.

use std::fmt;

/// Value and first three derivatives of a map at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Jet3 {
    pub const fn new(value: f64, d1: f64, d2: f64, d3: f64) -> Self {
        Self { value, d1, d2, d3 }
    }

    /// Jet of the identity map at `x`.
    pub const fn identity(x: f64) -> Self {
        Self::new(x, 1.0, 0.0, 0.0)
    }

    /// Jet of `outer ∘ inner`, where `self` is the jet of `inner` at `x` and
    /// `outer` is the jet of the outer map taken at `inner(x)`.
    pub fn then(self, outer: Jet3) -> Jet3 {
        let (g1, g2, g3) = (self.d1, self.d2, self.d3);
        let (f1, f2, f3) = (outer.d1, outer.d2, outer.d3);
        Jet3 {
            value: outer.value,
            d1: f1 * g1,
            d2: f2 * g1 * g1 + f1 * g2,
            d3: f3 * g1 * g1 * g1 + 3.0 * f2 * g1 * g2 + f1 * g3,
        }
    }

    /// Jet of the inverse map at `self.value`, with value `x`.
    pub fn inverse_at(self, x: f64) -> Jet3 {
        let f1 = self.d1;
        let f2 = self.d2;
        let f3 = self.d3;
        Jet3 {
            value: x,
            d1: 1.0 / f1,
            d2: -f2 / (f1 * f1 * f1),
            d3: (3.0 * f2 * f2 - f1 * f3) / f1.powi(5),
        }
    }

    /// Affine post-composition `y ↦ scale * (y - shift)`.
    pub fn scaled(self, shift: f64, scale: f64) -> Jet3 {
        Jet3 {
            value: scale * (self.value - shift),
            d1: scale * self.d1,
            d2: scale * self.d2,
            d3: scale * self.d3,
        }
    }

    /// Nonlinearity `f''/f'`.
    pub fn nonlinearity(&self) -> f64 {
        self.d2 / self.d1
    }

    /// Schwarzian derivative `f'''/f' - 3/2 (f''/f')^2`.
    pub fn schwarzian(&self) -> f64 {
        let n = self.d2 / self.d1;
        self.d3 / self.d1 - 1.5 * n * n
    }
}

impl fmt::Display for Jet3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet3({}, {}, {}, {})", self.value, self.d1, self.d2, self.d3)
    }
}

/// Truncated Taylor series `c[0] + c[1] h + c[2] h^2 + c[3] h^3`.
///
/// Coefficients are normalized (`c[k] = f^(k)(x) / k!`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Taylor(pub [f64; 4]);

impl Taylor {
    pub fn add(self, o: Taylor) -> Taylor {
        let mut c = [0.0; 4];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = self.0[k] + o.0[k];
        }
        Taylor(c)
    }

    pub fn scale(self, s: f64) -> Taylor {
        Taylor(self.0.map(|v| v * s))
    }

    pub fn mul(self, o: Taylor) -> Taylor {
        let a = self.0;
        let b = o.0;
        let mut c = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 - i {
                c[i + j] += a[i] * b[j];
            }
        }
        Taylor(c)
    }

    pub fn recip(self) -> Taylor {
        let a = self.0;
        let mut r = [0.0; 4];
        r[0] = 1.0 / a[0];
        for k in 1..4 {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[j] * r[k - j];
            }
            r[k] = -s / a[0];
        }
        Taylor(r)
    }

    /// Jet of the antiderivative (with value `value`) of the function whose
    /// series is `self`, truncated to order three.
    pub fn integrate_to_jet(self, value: f64) -> Jet3 {
        Jet3::new(value, self.0[0], self.0[1], 2.0 * self.0[2])
    }
}
