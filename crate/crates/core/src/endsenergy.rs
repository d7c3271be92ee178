//! Energy `E`, Schwarzian energy `Q`, gap nonlinearity `N`, end limits along
//! rays, projective holonomy and projective atlases.

use std::io::Write;

use serde::Serialize;

use crate::circlemap::{circ_diff, circ_dist, distortion_coeff, wrap01, Chart, CircleMap, GeneratorSet, Interval};
use crate::error::{Error, Result};
use crate::groupaction::{default_ball, stabilizer_probe, Orbit};
use crate::jet::Jet3;
use crate::markov::fixed_points;
use crate::par::{par_map, par_range};
use crate::word::{Letter, Word};

/// Moduli below this are treated as zero and values kept as plain reals.
pub const ZERO_MODULUS: f64 = 1e-12;
pub const PLATEAU_INCREMENT: f64 = 1e-6;
pub const CAUCHY_TAIL: f64 = 1e-3;
pub const MIN_RAY_LEN: usize = 6;
pub const GAP_CELL: f64 = 1e-5;
pub const GAP_MIN_LEN: f64 = 1e-4;

/// Representative of `v` in `[0, |b|)`, or `v` itself when `b` vanishes.
pub fn reduce_mod(v: f64, b: f64) -> f64 {
    if b.abs() < ZERO_MODULUS {
        v
    } else {
        v.rem_euclid(b.abs())
    }
}

/// Distance between `u` and `v` in `ℝ/bℤ`.
pub fn dist_mod(u: f64, v: f64, b: f64) -> f64 {
    if b.abs() < ZERO_MODULUS {
        return (u - v).abs();
    }
    let r = (u - v).rem_euclid(b.abs());
    r.min(b.abs() - r)
}

/// Representative of `v` mod `b` closest to `prev`.
fn nearest_lift(prev: f64, v: f64, b: f64) -> f64 {
    if b.abs() < ZERO_MODULUS {
        return v;
    }
    let b = b.abs();
    v + ((prev - v) / b).round() * b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Point,
    Gap,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizerData {
    #[serde(skip)]
    pub h: Word,
    pub h_text: String,
    pub b: f64,
    pub mode: Mode,
    /// Base point, or left endpoint of the base gap.
    pub base: f64,
    pub gap: Option<Interval>,
    /// `h'` at the base point (point mode).
    pub h_derivative: f64,
}

/// Stabilizer data at a point: `h` the shortest stabilizing word found at
/// `radius`, `b = S(h)(x0)`. A trivial stabilizer gives `h = id`, `b = 0`.
pub fn point_stabilizer(gens: &GeneratorSet, x0: f64, radius: usize, tol: f64) -> Result<StabilizerData> {
    let rep = stabilizer_probe(gens, x0, radius, tol)?;
    if let Some(k) = rep.finite_order {
        return Err(Error::Precondition(format!("stabilizer of {x0} has finite order {k}")));
    }
    if !rep.cyclic_consistent {
        return Err(Error::Precondition(format!("stabilizer of {x0} is not cyclic at radius {radius}")));
    }
    let h = rep.generator.unwrap_or_else(Word::identity);
    let j = gens.word_jet(&h, x0);
    Ok(StabilizerData {
        h_text: gens.format_word(&h),
        h,
        b: j.schwarzian(),
        mode: Mode::Point,
        base: wrap01(x0),
        gap: None,
        h_derivative: j.d1,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyRecord {
    pub position: f64,
    pub distance: usize,
    /// `g'(x0)`; point mode only.
    pub e: Option<f64>,
    /// `Q` or `N` representative mod `b`.
    pub qmod: Option<f64>,
    #[serde(skip)]
    pub witness: Word,
}

/// `E(g(x0)) = g'(x0)` for the witness `g` of an orbit point.
pub fn energy(gens: &GeneratorSet, x0: f64, witness: &Word) -> f64 {
    gens.word_derivative(witness, x0)
}

/// Checks `|E₁ − E₂| ≤ tol` for two witnesses of the same point.
pub fn check_energy_pair(gens: &GeneratorSet, x0: f64, w1: &Word, w2: &Word, tol: f64) -> Result<f64> {
    let r = (energy(gens, x0, w1) - energy(gens, x0, w2)).abs();
    if r > tol {
        return Err(Error::Inconsistent {
            what: "energy",
            residual: r,
            first: gens.format_word(w1),
            second: gens.format_word(w2),
        });
    }
    Ok(r)
}

/// `Q(g(x0)) = S(g)(x0)`, not yet reduced.
pub fn schwarzian_raw(gens: &GeneratorSet, x0: f64, witness: &Word) -> f64 {
    gens.word_jet(witness, x0).schwarzian()
}

pub fn schwarzian_energy(gens: &GeneratorSet, stab: &StabilizerData, witness: &Word) -> f64 {
    reduce_mod(schwarzian_raw(gens, stab.base, witness), stab.b)
}

/// Distance mod `b` of `S(g₁)(x0) − S(g₂)(x0)` from `bℤ`, failing above `tol`.
pub fn check_q_pair(gens: &GeneratorSet, stab: &StabilizerData, w1: &Word, w2: &Word, tol: f64) -> Result<f64> {
    let r = dist_mod(schwarzian_raw(gens, stab.base, w1), schwarzian_raw(gens, stab.base, w2), stab.b);
    if r > tol {
        return Err(Error::Inconsistent {
            what: "Schwarzian energy",
            residual: r,
            first: gens.format_word(w1),
            second: gens.format_word(w2),
        });
    }
    Ok(r)
}

/// Energy and `Q` for every orbit point.
pub fn point_records(gens: &GeneratorSet, orbit: &Orbit, stab: &StabilizerData) -> Vec<EnergyRecord> {
    par_map(&orbit.points, |p| {
        let j = gens.word_jet(&p.witness, stab.base);
        EnergyRecord {
            position: p.position,
            distance: p.distance,
            e: Some(j.d1),
            qmod: Some(reduce_mod(j.schwarzian(), stab.b)),
            witness: p.witness.clone(),
        }
    })
}

/// Word representing `f(x)` for `x = w(x0)`: the orbit witness when the image
/// is in the truncation, else `f·w`.
fn step_witness(orbit: Option<&Orbit>, gens: &GeneratorSet, w: &Word, f: Letter, base: f64) -> Word {
    let direct = w.prepend(f);
    match orbit.and_then(|o| o.find(gens.apply_word(&direct, base))) {
        Some(i) => orbit.unwrap().points[i].witness.clone(),
        None => direct,
    }
}

/// Residual of `Q(f(x)) = E(x)² S(f)(x) + Q(x)` mod `b`, with `x = w(x0)`.
pub fn q_increment_residual(
    gens: &GeneratorSet,
    stab: &StabilizerData,
    orbit: Option<&Orbit>,
    w: &Word,
    f: Letter,
) -> f64 {
    let jx = gens.word_jet(w, stab.base);
    let sf = gens.letter_map(f).jet_lift(jx.value).schwarzian();
    let lhs = schwarzian_raw(gens, stab.base, &step_witness(orbit, gens, w, f, stab.base));
    dist_mod(lhs, jx.d1 * jx.d1 * sf + jx.schwarzian(), stab.b)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesReport {
    pub radius: usize,
    pub shell_sizes: Vec<usize>,
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub max_e2: f64,
    /// First shell with increment below the plateau threshold.
    pub plateau_radius: Option<usize>,
    /// Every energy equals 1: the action is isometric along the orbit.
    pub degenerate: bool,
}

/// Partial sums of `Σ E(x)²` by graph distance.
pub fn energy_series(gens: &GeneratorSet, orbit: &Orbit) -> SeriesReport {
    let e: Vec<f64> = par_map(&orbit.points, |p| energy(gens, orbit.base, &p.witness));
    let radius = orbit.points.iter().map(|p| p.distance).max().unwrap_or(0);
    let mut shell_sizes = vec![0usize; radius + 1];
    let mut increments = vec![0.0; radius + 1];
    for (p, &ei) in orbit.points.iter().zip(&e) {
        shell_sizes[p.distance] += 1;
        increments[p.distance] += ei * ei;
    }
    let mut partial_sums = Vec::with_capacity(radius + 1);
    let mut s = 0.0;
    for &inc in &increments {
        s += inc;
        partial_sums.push(s);
    }
    SeriesReport {
        radius,
        plateau_radius: (1..=radius).find(|&d| increments[d] < PLATEAU_INCREMENT),
        max_e2: e.iter().map(|v| v * v).fold(0.0, f64::max),
        degenerate: e.iter().all(|v| (v - 1.0).abs() < 1e-12),
        shell_sizes,
        increments,
        partial_sums,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub cell: f64,
    pub min_len: f64,
    pub orbit_points: usize,
    pub occupied_cells: usize,
    /// Gaps sorted by decreasing length.
    pub gaps: Vec<Interval>,
}

/// Complementary arcs of the closure of an orbit, on a grid of cells.
pub fn detect_gaps(orbit: &Orbit, cell: f64, min_len: f64) -> Result<GapReport> {
    let n = (1.0 / cell).round() as usize;
    let mut occ = vec![false; n];
    for p in &orbit.points {
        occ[((p.position * n as f64) as usize).min(n - 1)] = true;
    }
    let occupied = occ.iter().filter(|&&o| o).count();
    let Some(start) = occ.iter().position(|&o| o) else {
        return Err(Error::Precondition("empty orbit".into()));
    };
    let mut gaps = Vec::new();
    let mut run = 0usize;
    for k in 1..=n {
        let i = (start + k) % n;
        if occ[i] {
            if run as f64 * cell > min_len {
                let left = ((i + n - run) % n) as f64 * cell;
                gaps.push(Interval::new(left, run as f64 * cell)?);
            }
            run = 0;
        } else {
            run += 1;
        }
    }
    gaps.sort_by(|a, b| b.length.total_cmp(&a.length).then(a.left.total_cmp(&b.left)));
    Ok(GapReport { cell, min_len, orbit_points: orbit.len(), occupied_cells: occupied, gaps })
}

/// Newton refinement of a fixed point of `m` near `x`.
fn refine_fixed(m: &CircleMap, x: f64) -> f64 {
    let mut x = x;
    for _ in 0..50 {
        let j = m.jet_lift(x);
        let d = circ_diff(j.value, x);
        if d.abs() < 1e-15 || (j.d1 - 1.0).abs() < 1e-12 {
            break;
        }
        x -= d / (j.d1 - 1.0);
    }
    wrap01(x)
}

/// Shortest ball word with fixed points near both endpoints of a coarse gap.
/// The gap is replaced by the arc between the refined fixed points and
/// `b = ∫_{J0} N(h)`.
pub fn gap_stabilizer(gens: &GeneratorSet, coarse: &Interval, radius: usize, slack: f64) -> Result<StabilizerData> {
    let ball = default_ball(gens, radius)?;
    let (l, r) = (coarse.left, coarse.right());
    for w in ball.words().iter().filter(|w| !w.is_empty()) {
        let m = gens.word_map(w);
        let fps = fixed_points(&m, 4096);
        let near = |t: f64| fps.iter().copied().filter(|&f| circ_dist(f, t) <= slack).min_by(|a, b| {
            circ_dist(*a, t).total_cmp(&circ_dist(*b, t))
        });
        let (Some(fl), Some(fr)) = (near(l), near(r)) else { continue };
        let (fl, fr) = (refine_fixed(&m, fl), refine_fixed(&m, fr));
        let j0 = Interval::from_endpoints(fl, fr)?;
        if !j0.contains_open(coarse.midpoint()) {
            continue;
        }
        let b = (m.jet_lift(fr).d1).ln() - (m.jet_lift(fl).d1).ln();
        return Ok(StabilizerData {
            h_text: gens.format_word(w),
            h: w.clone(),
            b,
            mode: Mode::Gap,
            base: fl,
            gap: Some(j0),
            h_derivative: m.jet_lift(fl).d1,
        });
    }
    Err(Error::Precondition(format!("no gap stabilizer found at radius {radius}")))
}

/// `∫_{J0} N(g) = log g'(right) − log g'(left)`, unreduced.
pub fn gap_raw(gens: &GeneratorSet, j0: &Interval, witness: &Word) -> f64 {
    gens.word_derivative(witness, j0.right()).ln() - gens.word_derivative(witness, j0.left).ln()
}

/// `N(g(J0))` mod `b`.
pub fn gap_energy(gens: &GeneratorSet, stab: &StabilizerData, witness: &Word) -> Result<f64> {
    let j0 = stab.gap.ok_or_else(|| Error::Precondition("gap energy needs gap mode".into()))?;
    Ok(reduce_mod(gap_raw(gens, &j0, witness), stab.b))
}

/// `N` for every gap in the orbit of the left endpoint of `J0`.
pub fn gap_records(gens: &GeneratorSet, orbit: &Orbit, stab: &StabilizerData) -> Result<Vec<EnergyRecord>> {
    let j0 = stab.gap.ok_or_else(|| Error::Precondition("gap records need gap mode".into()))?;
    Ok(par_map(&orbit.points, |p| EnergyRecord {
        position: p.position,
        distance: p.distance,
        e: None,
        qmod: Some(reduce_mod(gap_raw(gens, &j0, &p.witness), stab.b)),
        witness: p.witness.clone(),
    }))
}

/// Residual of `N(f(J)) = ∫_J N(f) + N(J)` mod `b`, with `J = w(J0)`.
pub fn nonl_increment_residual(
    gens: &GeneratorSet,
    stab: &StabilizerData,
    orbit: Option<&Orbit>,
    w: &Word,
    f: Letter,
) -> Result<f64> {
    let j0 = stab.gap.ok_or_else(|| Error::Precondition("gap increments need gap mode".into()))?;
    let (wl, wr) = (gens.apply_word(w, j0.left), gens.apply_word(w, j0.right()));
    let fm = gens.letter_map(f);
    let int_f = fm.jet_lift(wr).d1.ln() - fm.jet_lift(wl).d1.ln();
    let lhs = gap_raw(gens, &j0, &step_witness(orbit, gens, w, f, stab.base));
    Ok(dist_mod(lhs, int_f + gap_raw(gens, &j0, w), stab.b))
}

/// Cauchy diagnostics of values along a ray.
#[derive(Clone, Debug, Serialize)]
pub struct EndLimit {
    /// Values lifted continuously from their classes mod `b`.
    pub values: Vec<f64>,
    pub differences: Vec<f64>,
    /// Envelope `d_n ≤ c ρⁿ`.
    pub rho: f64,
    pub c: f64,
    /// Envelope sum beyond the last value.
    pub tail: f64,
    pub cauchy: bool,
    pub limit: f64,
}

pub fn end_limit(values: &[f64], b: f64) -> Result<EndLimit> {
    if values.len() < MIN_RAY_LEN {
        return Err(Error::Precondition(format!(
            "ray has {} vertices, need at least {MIN_RAY_LEN}",
            values.len()
        )));
    }
    let mut lifted = vec![values[0]];
    for &v in &values[1..] {
        let prev = *lifted.last().unwrap();
        lifted.push(nearest_lift(prev, v, b));
    }
    let d: Vec<f64> = lifted.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let m = d.len();
    let tail_idx: Vec<usize> = (m / 2..m).collect();
    let pts: Vec<(f64, f64)> = tail_idx
        .iter()
        .filter(|&&i| d[i] > 1e-300)
        .map(|&i| (i as f64, d[i].ln()))
        .collect();
    let (rho, c, tail) = if pts.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let slope = if pts.len() == 1 {
            // A single nonzero difference: the envelope through it and the
            // preceding zero is degenerate, use its own ratio to 1.
            pts[0].1 / pts[0].0.max(1.0)
        } else {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            sxy / sxx
        };
        let rho = slope.exp();
        let c = tail_idx.iter().map(|&i| d[i] / rho.powi(i as i32)).fold(0.0, f64::max);
        let tail = if rho < 1.0 { c * rho.powi(m as i32) / (1.0 - rho) } else { f64::INFINITY };
        (rho, c, tail)
    };
    Ok(EndLimit {
        limit: *lifted.last().unwrap(),
        values: lifted,
        differences: d,
        rho,
        c,
        cauchy: rho < 1.0 && tail < CAUCHY_TAIL,
        tail,
    })
}

/// A chart on an arc: the Koenigs chart, or the identity coordinate.
pub trait LocalChart: Sync {
    fn domain(&self) -> Interval;
    fn phi(&self, x: f64) -> Result<Jet3>;
    fn phi_inv(&self, y: f64) -> Result<Jet3>;
}

impl LocalChart for Chart {
    fn domain(&self) -> Interval {
        Chart::domain(self)
    }

    fn phi(&self, x: f64) -> Result<Jet3> {
        Chart::phi(self, x)
    }

    fn phi_inv(&self, y: f64) -> Result<Jet3> {
        Chart::phi_inv(self, y)
    }
}

/// The coordinate `x ↦ left + offset(x)` on an arc.
#[derive(Clone, Copy, Debug)]
pub struct IdentityChart(pub Interval);

impl LocalChart for IdentityChart {
    fn domain(&self) -> Interval {
        self.0
    }

    fn phi(&self, x: f64) -> Result<Jet3> {
        Ok(Jet3::identity(self.0.left + self.0.offset(x)))
    }

    fn phi_inv(&self, y: f64) -> Result<Jet3> {
        Ok(Jet3::identity(y))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyReport {
    pub domain: Interval,
    pub grid: usize,
    pub max_abs_schwarzian: f64,
    pub argmax: f64,
}

fn is_identity(m: &CircleMap) -> bool {
    matches!(m, CircleMap::Compose(v) if v.is_empty())
}

/// `max |S(φ γ φ⁻¹)|` over a grid of `φ(I_γ)`, `I_γ = γ⁻¹(I) ∩ I`.
pub fn projective_holonomy_test(chart: &dyn LocalChart, gamma: &CircleMap, grid: usize) -> Result<HolonomyReport> {
    let dom = chart.domain();
    let pre = dom.image(&gamma.invert());
    let ig = dom
        .intersect(&pre)
        .ok_or_else(|| Error::Precondition("empty holonomy domain".into()))?
        .shrink(0.98);
    if is_identity(gamma) {
        return Ok(HolonomyReport { domain: ig, grid, max_abs_schwarzian: 0.0, argmax: chart.phi(ig.midpoint())?.value });
    }
    let lo = chart.phi(ig.left)?.value;
    let hi = chart.phi(ig.left + ig.length)?.value;
    let ys: Vec<f64> = (1..=grid).map(|i| lo + (hi - lo) * i as f64 / (grid + 1) as f64).collect();
    let vals = par_map(&ys, |&y| -> Result<f64> {
        let j1 = chart.phi_inv(y)?;
        let j2 = gamma.jet_lift(j1.value);
        let j3 = chart.phi(j2.value)?;
        Ok(j1.then(j2).then(j3).schwarzian())
    });
    let mut best = (0.0, ys[0]);
    for (v, &y) in vals.into_iter().zip(&ys) {
        let v = v?.abs();
        if v > best.0 {
            best = (v, y);
        }
    }
    Ok(HolonomyReport { domain: ig, grid, max_abs_schwarzian: best.0, argmax: best.1 })
}

#[derive(Clone, Debug, Serialize)]
pub struct AtlasChart {
    pub interval: Interval,
    pub word: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtlasReport {
    pub search_radius: usize,
    pub charts: Vec<AtlasChart>,
    pub overlap_pairs: usize,
    pub overlap_max: f64,
    pub generator_pairs: usize,
    pub generator_max: f64,
}

const ATLAS_SHRINK: f64 = 0.9;
const ATLAS_OVERLAP: f64 = 0.2;
const ATLAS_SAMPLES: usize = 24;
/// Pulled-back charts with more distortion lose the transition Schwarzian
/// to rounding.
const ATLAS_MAX_DISTORTION: f64 = 6.0;

/// Greedy cover of the circle by arcs `I_j = g_j⁻¹(I')` with `I'` a shrunk
/// chart domain, then the Schwarzian of every transition and every
/// generator expressed in the charts `φ_j = φ ∘ g_j`.
pub fn build_projective_atlas(
    gens: &GeneratorSet,
    max_charts: usize,
    chart: &dyn LocalChart,
    radius: usize,
) -> Result<AtlasReport> {
    let target = chart.domain().shrink(ATLAS_SHRINK);
    let ball = default_ball(gens, radius)?;
    let cands: Vec<(Interval, Word)> = ball
        .words()
        .iter()
        .map(|w| (target.image(&gens.word_map(&w.inverse())), w.clone()))
        .filter(|(i, _)| i.length > 0.0 && i.length < 1.0)
        .filter(|(i, w)| distortion_coeff(&gens.word_map(w), i, 64) <= ATLAS_MAX_DISTORTION)
        .collect();
    let first = cands
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.length.total_cmp(&b.1 .0.length).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Precondition("no candidate arcs".into()))?;
    let start = cands[first].0.left;
    let mut chosen = vec![first];
    // Reach in unwrapped coordinates relative to `start`.
    let mut reach = cands[first].0.length;
    let closing = 1.0 + ATLAS_OVERLAP * cands[first].0.length;
    while reach < closing {
        if chosen.len() >= max_charts {
            return Err(Error::Precondition(format!(
                "{max_charts} charts do not cover the circle; uncovered arc from {}",
                wrap01(start + reach)
            )));
        }
        let prev_len = cands[*chosen.last().unwrap()].0.length;
        let anchor = start + reach - ATLAS_OVERLAP * prev_len.min(reach);
        let mut best: Option<(usize, f64)> = None;
        for (i, (iv, _)) in cands.iter().enumerate() {
            if !iv.contains_open(anchor) {
                continue;
            }
            let r = anchor + iv.length - iv.offset(anchor) - start;
            if r > reach + 1e-9 && best.is_none_or(|(_, br)| r > br) {
                best = Some((i, r));
            }
        }
        let Some((i, r)) = best else {
            return Err(Error::Precondition(format!(
                "cover search stuck at radius {radius}; uncovered arc from {}",
                wrap01(start + reach)
            )));
        };
        chosen.push(i);
        reach = r;
    }
    let charts: Vec<(Interval, Word)> = chosen.iter().map(|&i| cands[i].clone()).collect();
    let chart_jet = |j: usize, x: f64| -> Result<Jet3> {
        let jg = gens.word_jet(&charts[j].1, x);
        Ok(jg.then(chart.phi(jg.value)?))
    };
    let nc = charts.len();
    let overlap = par_range(nc * nc, |idx| -> Result<(usize, f64)> {
        let (j, k) = (idx / nc, idx % nc);
        if j == k {
            return Ok((0, 0.0));
        }
        let Some(both) = charts[j].0.intersect(&charts[k].0) else { return Ok((0, 0.0)) };
        let mut worst: f64 = 0.0;
        for x in both.interior_grid(ATLAS_SAMPLES) {
            let jj = chart_jet(j, x)?;
            let s = jj.inverse_at(x).then(chart_jet(k, x)?).schwarzian();
            worst = worst.max(s.abs());
        }
        Ok((1, worst))
    });
    let letters = gens.letters();
    let gen_pairs = par_range(nc * nc * letters.len(), |idx| -> Result<(usize, f64)> {
        let (j, k, l) = (idx / (nc * letters.len()), (idx / letters.len()) % nc, letters[idx % letters.len()]);
        let g = gens.letter_map(l);
        let pre = charts[k].0.image(&g.invert());
        let Some(dom) = charts[j].0.intersect(&pre) else { return Ok((0, 0.0)) };
        let mut worst: f64 = 0.0;
        for x in dom.interior_grid(ATLAS_SAMPLES) {
            let jj = chart_jet(j, x)?;
            let jgx = g.jet_lift(x);
            let s = jj.inverse_at(x).then(jgx).then(chart_jet(k, jgx.value)?).schwarzian();
            worst = worst.max(s.abs());
        }
        Ok((1, worst))
    });
    let fold = |v: Vec<Result<(usize, f64)>>| -> Result<(usize, f64)> {
        v.into_iter().try_fold((0, 0.0f64), |(n, m), r| r.map(|(c, w)| (n + c, m.max(w))))
    };
    let (overlap_pairs, overlap_max) = fold(overlap)?;
    let (generator_pairs, generator_max) = fold(gen_pairs)?;
    Ok(AtlasReport {
        search_radius: radius,
        charts: charts
            .iter()
            .map(|(i, w)| AtlasChart { interval: *i, word: gens.format_word(w) })
            .collect(),
        overlap_pairs,
        overlap_max,
        generator_pairs,
        generator_max,
    })
}

/// CSV table `position,distance,E,Qmod,witness`.
pub fn write_records_csv(records: &[EnergyRecord], gens: &GeneratorSet, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["position", "distance", "E", "Qmod", "witness"])?;
    for r in records {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.position.to_string(),
            r.distance.to_string(),
            opt(r.e),
            opt(r.qmod),
            gens.format_word(&r.witness),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circlemap::GeneratorSpec;
    use crate::groupaction::orbit;

    fn rotations() -> GeneratorSet {
        GeneratorSet::new(vec![GeneratorSpec::new("R", CircleMap::rotation(0.5f64.sqrt() - 0.5))]).unwrap()
    }

    #[test]
    fn modular_helpers() {
        assert_eq!(reduce_mod(2.5, 0.0), 2.5);
        assert!((reduce_mod(-0.25, 1.0) - 0.75).abs() < 1e-15);
        assert!((dist_mod(0.05, 0.95, 1.0) - 0.1).abs() < 1e-12);
        assert!((nearest_lift(3.1, 0.2, 1.0) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn rotation_series_is_degenerate() {
        let g = rotations();
        let o = orbit(&g, 0.1, 5, 1e-9, 1000).unwrap();
        let s = energy_series(&g, &o);
        assert!(s.degenerate);
        assert_eq!(s.plateau_radius, None);
        for d in 1..=5 {
            assert_eq!(s.increments[d], s.shell_sizes[d] as f64);
        }
    }

    #[test]
    fn end_limit_constant_and_geometric() {
        let e = end_limit(&[0.3; 7], 0.0).unwrap();
        assert!(e.cauchy && e.tail == 0.0 && e.limit == 0.3);
        let geo: Vec<f64> = (0..12).map(|n| 1.0 - 0.5f64.powi(n)).collect();
        let e = end_limit(&geo, 0.0).unwrap();
        assert!((e.rho - 0.5).abs() < 1e-9);
        assert!(e.cauchy);
        assert!((e.limit + e.tail - 1.0).abs() < 1e-9);
        assert!(end_limit(&[0.0; 5], 0.0).is_err());
        let lin: Vec<f64> = (0..8).map(|n| n as f64).collect();
        assert!(!end_limit(&lin, 0.0).unwrap().cauchy);
    }

    #[test]
    fn end_limit_lifts_across_modulus() {
        let vals: Vec<f64> = (0..10).map(|n| reduce_mod(0.99 + 0.5f64.powi(n) * 0.001, 1.0)).collect();
        let e = end_limit(&vals, 1.0).unwrap();
        assert!(e.differences.iter().all(|&d| d < 0.01));
        assert!(e.cauchy);
    }

    #[test]
    fn identity_holonomy_is_exactly_zero() {
        let c = IdentityChart(Interval::new(0.2, 0.3).unwrap());
        let r = projective_holonomy_test(&c, &CircleMap::identity(), 32).unwrap();
        assert_eq!(r.max_abs_schwarzian, 0.0);
    }

    #[test]
    fn identity_chart_reports_direct_schwarzian() {
        let gamma = CircleMap::trig(0.0, vec![0.02], vec![]).unwrap();
        let c = IdentityChart(Interval::new(0.2, 0.3).unwrap());
        let r = projective_holonomy_test(&c, &gamma, 64).unwrap();
        let direct = r
            .domain
            .interior_grid(64)
            .into_iter()
            .map(|x| gamma.jet_lift(x).schwarzian().abs())
            .fold(0.0, f64::max);
        assert!((r.max_abs_schwarzian - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn gap_detection_on_synthetic_orbit() {
        let g = GeneratorSet::new(vec![GeneratorSpec::new("R", CircleMap::rotation(0.001))]).unwrap();
        let o = orbit(&g, 0.0, 100, 1e-9, 1000).unwrap();
        let rep = detect_gaps(&o, 1e-5, 1e-4).unwrap();
        assert!(!rep.gaps.is_empty());
        assert!((rep.gaps[0].length - (1.0 - 0.2)).abs() < 2e-3);
    }
}
