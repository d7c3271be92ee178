//! Koenigs linearizing chart at a hyperbolic contracting fixed point.

use std::sync::Arc;

use super::interval::Interval;
use super::map::{circ_diff, circ_dist, wrap01, JetMap};
use crate::error::{Error, Result};
use crate::jet::Jet3;

/// Contraction margin defining the chart domain.
const MARGIN: f64 = 1e-3;
/// Displacement below which the cubic local chart gives the value of `φ`.
const VALUE_SCALE: f64 = 1e-4;
/// Smaller displacement used for the derivatives, where truncating the local
/// polynomial costs more.
const JET_SCALE: f64 = 1e-6;
const DOMAIN_STEPS: usize = 4096;

/// Linearizing chart `φ` of `f` around `p`, with `φ(p) = 0`, `φ'(p) = 1` and
/// `φ ∘ f = μ φ`.
#[derive(Clone)]
pub struct Chart {
    f: Arc<dyn JetMap + Send + Sync>,
    p: f64,
    shift: f64,
    mu: f64,
    radius: f64,
    n_max: usize,
    a2: f64,
    a3: f64,
    residual: f64,
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chart")
            .field("p", &self.p)
            .field("mu", &self.mu)
            .field("radius", &self.radius)
            .field("residual", &self.residual)
            .finish()
    }
}

/// Builds the chart, failing when the conjugacy residual exceeds `tol`.
pub fn koenigs_chart(
    f: Arc<dyn JetMap + Send + Sync>,
    p: f64,
    n_max: usize,
    tol: f64,
) -> Result<Chart> {
    let jp = f.jet(p);
    let shift = (jp.value - p).round();
    if (jp.value - shift - p).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "{p} is not fixed (image {})",
            jp.value - shift
        )));
    }
    let mu = jp.d1;
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Precondition(format!("multiplier {mu} is not in (0, 1)")));
    }
    let mut radius = 0.0;
    for k in 1..DOMAIN_STEPS {
        let r = 0.5 * k as f64 / DOMAIN_STEPS as f64;
        if f.jet(p - r).d1 > 1.0 - MARGIN || f.jet(p + r).d1 > 1.0 - MARGIN {
            break;
        }
        radius = r;
    }
    if radius == 0.0 {
        return Err(Error::Precondition("empty contraction domain".into()));
    }
    let g2 = jp.d2 / 2.0;
    let g3 = jp.d3 / 6.0;
    let a2 = g2 / (mu * (1.0 - mu));
    let a3 = (g3 + 2.0 * mu * a2 * g2) / (mu * (1.0 - mu * mu));
    let mut chart = Chart { f, p, shift, mu, radius, n_max, a2, a3, residual: 0.0 };
    chart.residual = chart.conjugacy_residual(64)?;
    if chart.residual > tol {
        return Err(Error::NoConvergence(format!(
            "Koenigs residual {:.3e} above {tol:.1e}",
            chart.residual
        )));
    }
    Ok(chart)
}

impl Chart {
    pub fn fixed_point(&self) -> f64 {
        self.p
    }

    pub fn multiplier(&self) -> f64 {
        self.mu
    }

    pub fn domain(&self) -> Interval {
        Interval { left: wrap01(self.p - self.radius), length: 2.0 * self.radius }
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Whether `x` lies in the open chart domain.
    pub fn contains(&self, x: f64) -> bool {
        circ_dist(x, self.p) < self.radius
    }

    fn local(&self, x: f64) -> f64 {
        self.p + circ_diff(x, self.p)
    }

    /// Jet of `φ` at `x` (any lift of a domain point).
    pub fn phi(&self, x: f64) -> Result<Jet3> {
        let mut j = Jet3::identity(self.local(x));
        let mut n = 0;
        let mut value = None;
        loop {
            let u = j.value - self.p;
            if value.is_none() && u.abs() < VALUE_SCALE {
                value = Some(self.local_poly(j, n).value);
            }
            if u.abs() < JET_SCALE {
                break;
            }
            if n == self.n_max {
                return Err(Error::NoConvergence(format!(
                    "iterate of {x} still at distance {:.3e} after {n} steps",
                    u.abs()
                )));
            }
            let mut next = self.f.jet(j.value);
            next.value -= self.shift;
            j = j.then(next);
            n += 1;
        }
        let mut out = self.local_poly(j, n);
        out.value = value.unwrap_or(out.value);
        Ok(out)
    }

    /// `μ⁻ⁿ P(j)` with `P` the cubic local chart at `p`.
    fn local_poly(&self, j: Jet3, n: usize) -> Jet3 {
        let u = j.value - self.p;
        let poly = Jet3::new(
            u + self.a2 * u * u + self.a3 * u * u * u,
            1.0 + 2.0 * self.a2 * u + 3.0 * self.a3 * u * u,
            2.0 * self.a2 + 6.0 * self.a3 * u,
            6.0 * self.a3,
        );
        let mut out = j.then(poly);
        let scale = self.mu.powi(-(n as i32));
        out.value *= scale;
        out.d1 *= scale;
        out.d2 *= scale;
        out.d3 *= scale;
        out
    }

    /// Jet of `φ⁻¹` at `y`, returned near `p`.
    pub fn phi_inv(&self, y: f64) -> Result<Jet3> {
        let mut lo = self.p - self.radius;
        let mut hi = self.p + self.radius;
        let (vlo, vhi) = (self.phi(lo)?.value, self.phi(hi)?.value);
        if !(y > vlo && y < vhi) {
            return Err(Error::Precondition(format!("{y} outside chart image")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.phi(mid)?.value < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 {
                break;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..4 {
            let j = self.phi(x)?;
            let nx = x - (j.value - y) / j.d1;
            if !(nx > lo - 1e-9 && nx < hi + 1e-9) {
                break;
            }
            x = nx;
        }
        Ok(self.phi(x)?.inverse_at(x))
    }

    /// `sup |φ f φ⁻¹(y) − μ y|` over a grid of `φ(I)`.
    pub fn conjugacy_residual(&self, grid: usize) -> Result<f64> {
        let lo = self.phi(self.p - self.radius)?.value;
        let hi = self.phi(self.p + self.radius)?.value;
        let mut worst: f64 = 0.0;
        for i in 1..grid {
            let y = lo + (hi - lo) * i as f64 / grid as f64;
            let x = self.phi_inv(y)?.value;
            let fx = self.f.jet(x).value - self.shift;
            let z = self.phi(fx)?.value;
            worst = worst.max((z - self.mu * y).abs());
        }
        Ok(worst)
    }
}
