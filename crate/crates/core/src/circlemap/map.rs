use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet3, Taylor};

/// Reduces a real number to the circle coordinate `[0, 1)`.
pub fn wrap01(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed circular displacement from `from` to `to`, in `(-1/2, 1/2]`.
pub fn circ_diff(to: f64, from: f64) -> f64 {
    let d = wrap01(to - from);
    if d > 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Circular distance between two circle coordinates.
pub fn circ_dist(a: f64, b: f64) -> f64 {
    circ_diff(a, b).abs()
}

/// Projective chart `t = tan(π(θ - 1/2))`.
pub fn theta_to_t(theta: f64) -> f64 {
    (PI * (theta - 0.5)).tan()
}

/// Inverse of [`theta_to_t`]; `t = ±∞` maps to `θ = 0`.
pub fn t_to_theta(t: f64) -> f64 {
    wrap01(0.5 + t.atan() / PI)
}

/// Anything that can be differentiated to third order at a real point.
///
/// The returned value is a lift: continuous in `x`, never reduced mod 1.
pub trait JetMap {
    fn jet(&self, x: f64) -> Jet3;
}

impl<F: Fn(f64) -> Jet3> JetMap for F {
    fn jet(&self, x: f64) -> Jet3 {
        self(x)
    }
}

/// An element of `PSL(2, ℝ)` acting on the projective line, normalized to
/// determinant one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mobius {
    m: [f64; 4],
    lift0: f64,
}

impl Mobius {
    /// Builds the map from a row-major matrix, normalizing the determinant.
    pub fn new(m: [f64; 4]) -> Result<Self> {
        let det = m[0] * m[3] - m[1] * m[2];
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::InvalidMap(format!(
                "Möbius matrix {m:?} must have positive determinant (got {det})"
            )));
        }
        let s = det.sqrt();
        let m = m.map(|v| v / s);
        let mut out = Mobius { m, lift0: 0.0 };
        out.lift0 = out.value(0.0);
        Ok(out)
    }

    pub fn identity() -> Self {
        Mobius { m: [1.0, 0.0, 0.0, 1.0], lift0: 0.0 }
    }

    pub fn matrix(&self) -> [f64; 4] {
        self.m
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Mobius) -> Mobius {
        let [a, b, c, d] = self.m;
        let [e, f, g, h] = other.m;
        let m = [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h];
        let mut out = Mobius { m, lift0: 0.0 };
        out.lift0 = out.value(0.0);
        out
    }

    /// Adjugate inverse (determinant one).
    pub fn inverse(&self) -> Mobius {
        let [a, b, c, d] = self.m;
        let mut out = Mobius { m: [d, -b, -c, a], lift0: 0.0 };
        out.lift0 = out.value(0.0);
        out
    }

    pub fn trace(&self) -> f64 {
        self.m[0] + self.m[3]
    }

    /// Circle coordinate of `M · (-cos πθ, sin πθ)`.
    fn value(&self, theta: f64) -> f64 {
        let [a, b, c, d] = self.m;
        let (s, co) = (PI * theta).sin_cos();
        let (vx, vy) = (-co, s);
        let wx = a * vx + b * vy;
        let wy = c * vx + d * vy;
        wrap01(wy.atan2(-wx) / PI)
    }

    /// Jet in the circle coordinate, with the value reduced to `[0, 1)`.
    pub fn jet_reduced(&self, theta: f64) -> Jet3 {
        let [a, b, c, d] = self.m;
        let (s, co) = (PI * theta).sin_cos();
        let cos_h = Taylor([1.0, 0.0, -PI * PI / 2.0, 0.0]);
        let sin_h = Taylor([0.0, PI, 0.0, -PI * PI * PI / 6.0]);
        let vx = cos_h.scale(-co).add(sin_h.scale(s));
        let vy = cos_h.scale(s).add(sin_h.scale(co));
        let wx = vx.scale(a).add(vy.scale(b));
        let wy = vx.scale(c).add(vy.scale(d));
        let q = wx.mul(wx).add(wy.mul(wy));
        let value = wrap01(wy.0[0].atan2(-wx.0[0]) / PI);
        q.recip().integrate_to_jet(value)
    }

    fn lift_offset(&self, frac: f64, reduced: f64) -> f64 {
        let mut d = wrap01(reduced - self.lift0);
        if frac > 0.5 && d < 1e-12 {
            d = 1.0;
        } else if frac < 0.5 && d > 1.0 - 1e-12 {
            d = 0.0;
        }
        self.lift0 + d
    }

    pub fn jet_lift(&self, x: f64) -> Jet3 {
        let n = x.floor();
        let frac = x - n;
        let mut j = self.jet_reduced(frac);
        j.value = n + self.lift_offset(frac, j.value);
        j
    }

    /// Jet of `t ↦ (at + b)/(ct + d)` in the projective coordinate.
    pub fn jet_projective(&self, t: f64) -> Jet3 {
        let [a, b, c, d] = self.m;
        let den = c * t + d;
        Jet3::new(
            (a * t + b) / den,
            1.0 / (den * den),
            -2.0 * c / den.powi(3),
            6.0 * c * c / den.powi(4),
        )
    }

    /// Fixed points in the circle coordinate (eigendirections), if any.
    pub fn fixed_points(&self) -> Vec<f64> {
        let [a, b, c, d] = self.m;
        // Solve c t^2 + (d - a) t - b = 0 in t, plus t = ∞ when c = 0.
        let mut out = Vec::new();
        let scale = self.m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let eps = 1e-14 * scale.max(1.0);
        if c.abs() <= eps {
            out.push(0.0);
            if (d - a).abs() > eps {
                out.push(t_to_theta(b / (d - a)));
            }
        } else {
            let disc = (d - a) * (d - a) + 4.0 * b * c;
            if disc >= -eps {
                let r = disc.max(0.0).sqrt();
                out.push(t_to_theta((-(d - a) + r) / (2.0 * c)));
                if r > eps {
                    out.push(t_to_theta((-(d - a) - r) / (2.0 * c)));
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

/// `x ↦ x + c0 + Σ a_k sin(2πkx) + b_k cos(2πkx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigMap {
    c0: f64,
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl TrigMap {
    pub fn new(c0: f64, sin: Vec<f64>, cos: Vec<f64>) -> Result<Self> {
        let bound: f64 = 2.0
            * PI
            * (0..sin.len().max(cos.len()))
                .map(|k| {
                    let a = sin.get(k).copied().unwrap_or(0.0).abs();
                    let b = cos.get(k).copied().unwrap_or(0.0).abs();
                    (k + 1) as f64 * (a + b)
                })
                .sum::<f64>();
        if !(bound < 1.0) {
            return Err(Error::InvalidMap(format!(
                "trig coefficients violate monotonicity bound: 2π Σ k(|a_k|+|b_k|) = {bound}"
            )));
        }
        let map = TrigMap { c0, sin, cos };
        for i in 0..1024 {
            let x = i as f64 / 1024.0;
            let d1 = map.jet(x).d1;
            if !(d1 > 0.0) {
                return Err(Error::InvalidMap(format!("derivative {d1} at {x} is not positive")));
            }
        }
        Ok(map)
    }

    pub fn rotation(alpha: f64) -> Self {
        TrigMap { c0: alpha, sin: Vec::new(), cos: Vec::new() }
    }

    pub fn is_rotation(&self) -> bool {
        self.sin.iter().chain(&self.cos).all(|v| *v == 0.0)
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn jet(&self, x: f64) -> Jet3 {
        let mut j = Jet3::new(x + self.c0, 1.0, 0.0, 0.0);
        let n = self.sin.len().max(self.cos.len());
        for k in 0..n {
            let a = self.sin.get(k).copied().unwrap_or(0.0);
            let b = self.cos.get(k).copied().unwrap_or(0.0);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let w = 2.0 * PI * (k + 1) as f64;
            let (s, c) = (w * x).sin_cos();
            j.value += a * s + b * c;
            j.d1 += w * (a * c - b * s);
            j.d2 += -w * w * (a * s + b * c);
            j.d3 += -w * w * w * (a * c - b * s);
        }
        j
    }
}

/// A circle diffeomorphism in closed form or as a composition.
#[derive(Clone, Debug)]
pub enum CircleMap {
    Mobius(Mobius),
    Trig(TrigMap),
    /// Numerical inverse of a map, evaluated by a bracketed Newton solve.
    Inverse(Arc<CircleMap>),
    /// Composition in product order: the last factor acts first.
    Compose(Vec<Arc<CircleMap>>),
}

impl CircleMap {
    pub fn identity() -> Self {
        CircleMap::Compose(Vec::new())
    }

    pub fn rotation(alpha: f64) -> Self {
        CircleMap::Trig(TrigMap::rotation(alpha))
    }

    pub fn mobius(m: [f64; 4]) -> Result<Self> {
        Ok(CircleMap::Mobius(Mobius::new(m)?))
    }

    pub fn trig(c0: f64, sin: Vec<f64>, cos: Vec<f64>) -> Result<Self> {
        Ok(CircleMap::Trig(TrigMap::new(c0, sin, cos)?))
    }

    /// Product `factors[0] ∘ factors[1] ∘ …`, merging adjacent Möbius factors
    /// into a single matrix.
    pub fn compose(factors: impl IntoIterator<Item = Arc<CircleMap>>) -> CircleMap {
        let mut out: Vec<Arc<CircleMap>> = Vec::new();
        let push = |f: Arc<CircleMap>, out: &mut Vec<Arc<CircleMap>>| {
            if let (Some(last), CircleMap::Mobius(m)) = (out.last(), f.as_ref()) {
                if let CircleMap::Mobius(prev) = last.as_ref() {
                    let merged = prev.mul(m);
                    out.pop();
                    out.push(Arc::new(CircleMap::Mobius(merged)));
                    return;
                }
            }
            out.push(f);
        };
        for f in factors {
            match f.as_ref() {
                CircleMap::Compose(inner) => {
                    for g in inner {
                        push(g.clone(), &mut out);
                    }
                }
                _ => push(f, &mut out),
            }
        }
        if out.len() == 1 {
            return (*out[0]).clone();
        }
        CircleMap::Compose(out)
    }

    /// Declared inverse: adjugate matrix, negated rotation, reversed
    /// composition, or the numerical inverse for general trig maps.
    pub fn invert(&self) -> CircleMap {
        match self {
            CircleMap::Mobius(m) => CircleMap::Mobius(m.inverse()),
            CircleMap::Trig(t) if t.is_rotation() => CircleMap::rotation(-t.c0()),
            CircleMap::Trig(_) => CircleMap::Inverse(Arc::new(self.clone())),
            CircleMap::Inverse(f) => (**f).clone(),
            CircleMap::Compose(fs) => CircleMap::Compose(
                fs.iter().rev().map(|f| Arc::new(f.invert())).collect(),
            ),
        }
    }

    pub fn as_mobius(&self) -> Option<Mobius> {
        match self {
            CircleMap::Mobius(m) => Some(*m),
            CircleMap::Compose(fs) if fs.is_empty() => Some(Mobius::identity()),
            _ => None,
        }
    }

    /// Jet of the lift at a real point.
    pub fn jet_lift(&self, x: f64) -> Jet3 {
        match self {
            CircleMap::Mobius(m) => m.jet_lift(x),
            CircleMap::Trig(t) => t.jet(x),
            CircleMap::Inverse(f) => inverse_jet(f, x),
            CircleMap::Compose(fs) => {
                let mut j = Jet3::identity(x);
                for f in fs.iter().rev() {
                    let outer = f.jet_lift(j.value);
                    j = j.then(outer);
                }
                j
            }
        }
    }

    /// Jet at a circle coordinate with the value reduced to `[0, 1)`.
    pub fn eval_jet(&self, x: f64) -> Jet3 {
        let mut j = self.jet_lift(x);
        j.value = wrap01(j.value);
        j
    }

    /// Point image on the circle.
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            CircleMap::Mobius(m) => m.value(wrap01(x)),
            CircleMap::Trig(t) => wrap01(t.jet(x).value),
            CircleMap::Compose(fs) => fs.iter().rev().fold(x, |y, f| f.apply(y)),
            CircleMap::Inverse(_) => self.eval_jet(x).value,
        }
    }

    pub fn lift(&self, x: f64) -> f64 {
        match self {
            CircleMap::Trig(t) => t.jet(x).value,
            _ => self.jet_lift(x).value,
        }
    }
}

impl JetMap for CircleMap {
    fn jet(&self, x: f64) -> Jet3 {
        self.jet_lift(x)
    }
}

fn inverse_jet(f: &CircleMap, y: f64) -> Jet3 {
    let disp0 = f.lift(0.0);
    let mut lo = y - disp0 - 1.0;
    let mut hi = y - disp0 + 1.0;
    // Widen the bracket if the lift convention put it off by one.
    while f.lift(lo) > y {
        lo -= 1.0;
    }
    while f.lift(hi) < y {
        hi += 1.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f.lift(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let j = f.jet_lift(x);
        let step = (j.value - y) / j.d1;
        if !step.is_finite() {
            break;
        }
        let nx = x - step;
        if nx < lo - 1e-12 || nx > hi + 1e-12 {
            break;
        }
        x = nx;
    }
    f.jet_lift(x).inverse_at(x)
}

impl fmt::Display for CircleMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CircleMap::Mobius(m) => write!(f, "mobius{:?}", m.matrix()),
            CircleMap::Trig(t) => write!(f, "trig(c0={}, sin={:?}, cos={:?})", t.c0, t.sin, t.cos),
            CircleMap::Inverse(g) => write!(f, "inverse({g})"),
            CircleMap::Compose(fs) => {
                write!(f, "compose(")?;
                for (i, g) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ∘ ")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: &CircleMap, x: f64, h: f64) -> (f64, f64, f64) {
        let v = |k: f64| f.lift(x + k * h);
        let d1 = (v(1.0) - v(-1.0)) / (2.0 * h);
        let d2 = (v(1.0) - 2.0 * v(0.0) + v(-1.0)) / (h * h);
        let d3 = (v(2.0) - 2.0 * v(1.0) + 2.0 * v(-1.0) - v(-2.0)) / (2.0 * h * h * h);
        (d1, d2, d3)
    }

    #[test]
    fn rotation_jet() {
        let r = CircleMap::rotation(0.25);
        let j = r.eval_jet(0.1);
        assert!((j.value - 0.35).abs() < 1e-15);
        assert_eq!((j.d1, j.d2, j.d3), (1.0, 0.0, 0.0));
    }

    #[test]
    fn identity_word_jet() {
        let id = CircleMap::identity();
        assert_eq!(id.eval_jet(0.42), Jet3::identity(0.42));
    }

    #[test]
    fn trig_jet_closed_form() {
        let f = CircleMap::trig(0.0, vec![0.05], vec![]).unwrap();
        let j = f.eval_jet(0.0);
        let w = 2.0 * PI;
        assert!(j.value.abs() < 1e-15);
        assert!((j.d1 - (1.0 + 0.1 * PI)).abs() < 1e-14);
        assert!(j.d2.abs() < 1e-14);
        assert!((j.d3 + 0.05 * w * w * w).abs() < 1e-12);
        let (d1, d2, d3) = central(&f, 0.0, 1e-5);
        assert!((d1 - j.d1).abs() < 1e-8);
        assert!((d2 - j.d2).abs() < 1e-4);
        assert!((d3 - j.d3).abs() / j.d3.abs() < 1e-3);
    }

    #[test]
    fn mobius_jet_matches_differences() {
        let m = CircleMap::mobius([2.0, 1.0, 1.0, 1.0]).unwrap();
        for &x in &[0.05, 0.3, 0.5, 0.77, 0.95] {
            let j = m.jet_lift(x);
            let (d1, _, _) = central(&m, x, 1e-5);
            let (_, d2, d3) = central(&m, x, 1e-3);
            assert!((d1 - j.d1).abs() / j.d1 < 1e-5, "{x}: {d1} {}", j.d1);
            assert!((d2 - j.d2).abs() < 1e-3 * (1.0 + j.d2.abs()));
            assert!((d3 - j.d3).abs() < 1e-2 * (1.0 + j.d3.abs()));
        }
    }

    #[test]
    fn mobius_value_matches_projective_action() {
        let m = Mobius::new([2.0, 1.0, 1.0, 1.0]).unwrap();
        for &t in &[-3.0, -0.4, 0.0, 0.7, 5.0] {
            let theta = t_to_theta(t);
            let got = theta_to_t(m.jet_reduced(theta).value);
            assert!((got - (2.0 * t + 1.0) / (t + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mobius_lift_is_monotone_and_periodic() {
        let m = CircleMap::mobius([3.0, 0.0, 0.0, 1.0 / 3.0]).unwrap();
        let mut prev = m.lift(-1.0);
        for i in 1..=4000 {
            let x = -1.0 + i as f64 / 2000.0;
            let v = m.lift(x);
            assert!(v > prev, "lift not increasing at {x}");
            prev = v;
        }
        assert!((m.lift(0.3) + 1.0 - m.lift(1.3)).abs() < 1e-12);
    }

    #[test]
    fn inverse_round_trips() {
        let f = CircleMap::trig(0.1, vec![0.03], vec![0.02]).unwrap();
        let g = f.invert();
        for i in 0..50 {
            let x = i as f64 / 50.0;
            let y = g.apply(f.apply(x));
            assert!(circ_dist(x, y) < 1e-12);
        }
        let m = CircleMap::mobius([2.0, 1.0, 1.0, 1.0]).unwrap();
        let mi = m.invert();
        if let CircleMap::Mobius(inv) = &mi {
            assert_eq!(inv.matrix(), [1.0, -1.0, -1.0, 2.0]);
        } else {
            panic!("expected matrix inverse");
        }
    }

    #[test]
    fn trig_rejects_non_monotone() {
        assert!(TrigMap::new(0.0, vec![0.2], vec![]).is_err());
    }

    #[test]
    fn fixed_points_of_parabolic_and_hyperbolic() {
        let t = Mobius::new([1.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.fixed_points(), vec![0.0]);
        let a = Mobius::new([3.0, 0.0, 0.0, 1.0 / 3.0]).unwrap();
        assert_eq!(a.fixed_points(), vec![0.0, 0.5]);
    }
}
