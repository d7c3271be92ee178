use serde::Serialize;

use super::map::{wrap01, CircleMap};
use crate::error::{Error, Result};

/// Positive arc of the circle starting at `left` with the given length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub left: f64,
    pub length: f64,
}

impl Interval {
    pub fn new(left: f64, length: f64) -> Result<Self> {
        if !(length > 0.0 && length < 1.0) || !left.is_finite() {
            return Err(Error::InvalidInterval(format!("left {left}, length {length}")));
        }
        Ok(Interval { left, length })
    }

    /// Arc from `a` to `b` in the positive direction.
    pub fn from_endpoints(a: f64, b: f64) -> Result<Self> {
        Interval::new(wrap01(a), wrap01(b - a))
    }

    pub fn right(&self) -> f64 {
        self.left + self.length
    }

    pub fn midpoint(&self) -> f64 {
        self.left + 0.5 * self.length
    }

    /// `n` equally spaced points from `left` to `right` inclusive, unreduced.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|i| self.left + self.length * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// `n` points strictly inside the arc.
    pub fn interior_grid(&self, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| self.left + self.length * i as f64 / (n + 1) as f64)
            .collect()
    }

    /// Closed-arc membership with absolute slack.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        let o = wrap01(x - self.left);
        o <= self.length + slack || o >= 1.0 - slack
    }

    /// Open-arc membership.
    pub fn contains_open(&self, x: f64) -> bool {
        let o = wrap01(x - self.left);
        o > 0.0 && o < self.length
    }

    /// Offset of `x` from `left` along the arc, in `[0, 1)`.
    pub fn offset(&self, x: f64) -> f64 {
        wrap01(x - self.left)
    }

    pub fn image(&self, map: &CircleMap) -> Interval {
        let a = map.lift(self.left);
        let b = map.lift(self.left + self.length);
        Interval { left: wrap01(a), length: b - a }
    }

    /// Longest common sub-arc, if any.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let o = wrap01(other.left - self.left);
        let mut best: Option<(f64, f64)> = None;
        for start in [o, o - 1.0] {
            let lo = start.max(0.0);
            let hi = (start + other.length).min(self.length);
            if hi > lo && best.is_none_or(|(a, b)| hi - lo > b - a) {
                best = Some((lo, hi));
            }
        }
        best.map(|(lo, hi)| Interval { left: wrap01(self.left + lo), length: hi - lo })
    }

    pub fn shrink(&self, factor: f64) -> Interval {
        let len = self.length * factor;
        Interval { left: wrap01(self.left + 0.5 * (self.length - len)), length: len }
    }
}
