//! Distortion, nonlinearity and Schwarzian derivative.

use super::interval::Interval;
use super::map::JetMap;

/// Default number of grid points used for distortion suprema.
pub const DEFAULT_GRID: usize = 256;

/// Grid supremum of `|log(g'(x)/g'(y))|` over `x, y ∈ J`.
pub fn distortion_coeff(map: &impl JetMap, j: &Interval, grid: usize) -> f64 {
    let (lo, hi) = j.grid(grid).into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        let l = map.jet(x).d1.ln();
        (lo.min(l), hi.max(l))
    });
    hi - lo
}

/// Nonlinearity `N = f''/f'` and Schwarzian `S` at `x` from one jet.
pub fn differential_invariants(map: &impl JetMap, x: f64) -> (f64, f64) {
    let j = map.jet(x);
    (j.nonlinearity(), j.schwarzian())
}

/// `∫_J N(g) = log g'(right) - log g'(left)`.
pub fn integral_nonlinearity(map: &impl JetMap, j: &Interval) -> f64 {
    map.jet(j.right()).d1.ln() - map.jet(j.left).d1.ln()
}

/// Adaptive Simpson quadrature of `N(g)` over `J`, as a cross-check of the
/// closed form.
pub fn integral_nonlinearity_quadrature(map: &impl JetMap, j: &Interval, tol: f64) -> f64 {
    let f = |x: f64| map.jet(x).nonlinearity();
    adaptive_simpson(&f, j.left, j.right(), tol)
}

pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circlemap::CircleMap;
    use crate::jet::Jet3;

    fn square(x: f64) -> Jet3 {
        Jet3::new(x * x, 2.0 * x, 2.0, 0.0)
    }

    #[test]
    fn rotation_has_no_distortion() {
        let r = CircleMap::rotation(0.3);
        let j = Interval::new(0.1, 0.4).unwrap();
        assert_eq!(distortion_coeff(&r, &j, 64), 0.0);
        assert_eq!(integral_nonlinearity(&r, &j), 0.0);
    }

    #[test]
    fn square_map_values() {
        let j = Interval::new(0.5, 0.5).unwrap();
        assert!((distortion_coeff(&square, &j, 2) - 2f64.ln()).abs() < 1e-15);
        assert!((integral_nonlinearity(&square, &j) - 2f64.ln()).abs() < 1e-15);
        let (n, s) = differential_invariants(&square, 0.7);
        assert!((n - 1.0 / 0.7).abs() < 1e-14);
        assert!((s + 1.5 / 0.49).abs() < 1e-13);
    }

    #[test]
    fn identity_invariants_vanish() {
        assert_eq!(differential_invariants(&CircleMap::identity(), 0.3), (0.0, 0.0));
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let f = CircleMap::trig(0.2, vec![0.04, 0.01], vec![0.02]).unwrap();
        let j = Interval::new(0.15, 0.6).unwrap();
        let q = integral_nonlinearity_quadrature(&f, &j, 1e-12);
        assert!((q - integral_nonlinearity(&f, &j)).abs() < 1e-10);
    }
}
