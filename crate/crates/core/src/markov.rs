//! Markov partitions, level refinements, non-expandable points and the
//! expansion procedure.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circlemap::{circ_diff, circ_dist, distortion_coeff, wrap01, CircleMap, GeneratorSet, Interval};
use crate::error::{Error, Result};
use crate::groupaction::default_ball;
use crate::par::{par_map, par_range};
use crate::word::Word;

pub const DEFAULT_ENDPOINT_TOL: f64 = 1e-7;
pub const DEFAULT_REPEL_MARGIN: f64 = 1e-9;
pub const DEFAULT_MIN_GAP: f64 = 1e-6;
const MAX_ADJACENT_ITERATES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub interval: Interval,
    pub word: Word,
    /// NE point index and side, for the atoms `I_i^±`.
    pub adjacent: Option<(usize, Side)>,
}

#[derive(Clone, Debug)]
pub struct MarkovPartition {
    pub atoms: Vec<Atom>,
    pub ne_points: Vec<f64>,
    pub lambda: f64,
    pub endpoint_tol: f64,
    maps: Vec<Arc<CircleMap>>,
}

impl MarkovPartition {
    /// Sorts atoms by left endpoint and binds their words to `gens`.
    pub fn new(mut atoms: Vec<Atom>, ne_points: Vec<f64>, lambda: f64, gens: &GeneratorSet) -> Self {
        atoms.sort_by(|a, b| a.interval.left.total_cmp(&b.interval.left));
        let maps = atoms.iter().map(|a| Arc::new(gens.word_map(&a.word))).collect();
        MarkovPartition { atoms, ne_points, lambda, endpoint_tol: DEFAULT_ENDPOINT_TOL, maps }
    }

    pub fn map(&self, atom: usize) -> &Arc<CircleMap> {
        &self.maps[atom]
    }

    /// Atom whose closure contains `x`, preferring the one with `x` as left
    /// endpoint.
    pub fn atom_of(&self, x: f64) -> usize {
        let tol = self.endpoint_tol;
        if let Some(i) = self.atoms.iter().position(|a| circ_dist(a.interval.left, x) <= tol) {
            return i;
        }
        self.atoms
            .iter()
            .position(|a| a.interval.offset(x) < a.interval.length)
            .unwrap_or_else(|| {
                // Closest atom by left endpoint; only reachable through cover gaps.
                (0..self.atoms.len())
                    .min_by(|&i, &j| {
                        circ_dist(self.atoms[i].interval.left, x).total_cmp(&circ_dist(self.atoms[j].interval.left, x))
                    })
                    .unwrap()
            })
    }

    pub fn ne_index(&self, x: f64) -> Option<usize> {
        self.ne_points.iter().position(|&p| circ_dist(p, x) <= self.endpoint_tol)
    }

    /// The atom `I_i^+` adjacent on the right of NE point `i`.
    pub fn plus_atom(&self, i: usize) -> Option<usize> {
        self.atoms.iter().position(|a| a.adjacent == Some((i, Side::Plus)))
    }

    /// Rejects partitions that are not well-formed before any dynamics.
    pub fn structural_check(&self) -> Result<()> {
        if !(self.lambda > 1.0) {
            return Err(Error::Partition(format!("expansion constant λ = {} must exceed 1", self.lambda)));
        }
        if self.atoms.len() < 2 {
            return Err(Error::Partition("need at least two atoms".into()));
        }
        let tol = self.endpoint_tol;
        let n = self.atoms.len();
        for i in 0..n {
            let a = &self.atoms[i].interval;
            let b = &self.atoms[(i + 1) % n].interval;
            let d = circ_diff(b.left, a.right());
            if d < -tol {
                return Err(Error::Partition(format!("atoms {i} and {} overlap by {:.3e}", (i + 1) % n, -d)));
            }
            if d > tol {
                return Err(Error::Partition(format!("gap of {d:.3e} after atom {i}")));
            }
        }
        let total: f64 = self.atoms.iter().map(|a| a.interval.length).sum();
        if (total - 1.0).abs() > n as f64 * tol {
            return Err(Error::Partition(format!("atoms cover total length {total}")));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if let Some((k, side)) = a.adjacent {
                let Some(&x) = self.ne_points.get(k) else {
                    return Err(Error::Partition(format!("atom {i} names missing NE point {k}")));
                };
                let end = match side {
                    Side::Plus => a.interval.left,
                    Side::Minus => a.interval.right(),
                };
                if circ_dist(end, x) > tol {
                    return Err(Error::Partition(format!("atom {i} is not adjacent to NE point {k} on its side")));
                }
            }
        }
        for k in 0..self.ne_points.len() {
            for side in [Side::Plus, Side::Minus] {
                if !self.atoms.iter().any(|a| a.adjacent == Some((k, side))) {
                    return Err(Error::Partition(format!("NE point {k} lacks its {side:?} atom")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ItemResult {
    pub item: &'static str,
    pub pass: bool,
    pub worst_atom: Option<usize>,
    pub worst_value: f64,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub grid: usize,
    pub endpoint_tol: f64,
    pub lambda: f64,
    pub items: Vec<ItemResult>,
}

impl ValidationReport {
    pub fn passed(&self, item: &str) -> bool {
        self.items.iter().any(|r| r.item == item && r.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|r| r.pass)
    }

    pub fn failed_items(&self) -> Vec<&'static str> {
        self.items.iter().filter(|r| !r.pass).map(|r| r.item).collect()
    }
}

/// Checks items (i)–(iv) of the partition theorem on a grid.
pub fn validate_partition(p: &MarkovPartition, grid: usize, repel_margin: f64) -> Result<ValidationReport> {
    p.structural_check()?;
    let tol = p.endpoint_tol;
    let n = p.atoms.len();
    let lefts: Vec<f64> = p.atoms.iter().map(|a| a.interval.left).collect();
    let near_break = |x: f64| lefts.iter().map(|&l| circ_dist(l, x)).fold(f64::INFINITY, f64::min);

    // (i) image endpoints are breakpoints.
    let images: Vec<Interval> = (0..n).map(|i| p.atoms[i].interval.image(p.map(i))).collect();
    let mism: Vec<f64> = images.iter().map(|im| near_break(im.left).max(near_break(im.right()))).collect();
    let (w1, v1) = argmax(&mism);
    let item1 = ItemResult {
        item: "i",
        pass: v1 <= tol,
        worst_atom: Some(w1),
        worst_value: v1,
        note: format!("largest image-endpoint distance to a breakpoint (tolerance {tol:.1e})"),
    };

    // (ii) expansion on plain atoms.
    let plain: Vec<usize> = (0..n).filter(|&i| p.atoms[i].adjacent.is_none()).collect();
    let mins = par_map(&plain, |&i| {
        p.atoms[i].interval.grid(grid).into_iter().map(|x| p.map(i).jet_lift(x).d1).fold(f64::INFINITY, f64::min)
    });
    let (k2, v2) = argmin(&mins);
    let item2 = ItemResult {
        item: "ii",
        pass: v2 >= p.lambda,
        worst_atom: plain.get(k2).copied(),
        worst_value: v2,
        note: format!("smallest derivative on plain atoms, λ = {}", p.lambda),
    };

    // (iii) unique repelling fixed point and unique NE point in the image.
    let adj: Vec<usize> = (0..n).filter(|&i| p.atoms[i].adjacent.is_some()).collect();
    let iii = par_map(&adj, |&i| {
        let (k, side) = p.atoms[i].adjacent.unwrap();
        let x = p.ne_points[k];
        let g = p.map(i);
        let mut fails = Vec::new();
        let fix = circ_dist(g.apply(x), x);
        if fix > tol {
            fails.push(format!("NE point moved by {fix:.3e}"));
        }
        let sign = if side == Side::Plus { 1.0 } else { -1.0 };
        let margin = p.atoms[i]
            .interval
            .interior_grid(grid)
            .into_iter()
            .map(|y| sign * circ_diff(g.apply(y), y))
            .fold(f64::INFINITY, f64::min);
        if margin <= repel_margin {
            fails.push(format!("repulsion margin {margin:.3e}"));
        }
        let extra: Vec<usize> = (0..p.ne_points.len())
            .filter(|&j| j != k && images[i].contains(p.ne_points[j], -tol))
            .collect();
        if !extra.is_empty() {
            fails.push(format!("image contains NE points {extra:?}"));
        }
        (fails, margin)
    });
    let bad3 = adj.iter().zip(&iii).find(|(_, r)| !r.0.is_empty());
    let item3 = ItemResult {
        item: "iii",
        pass: bad3.is_none(),
        worst_atom: bad3.map(|(i, _)| *i),
        worst_value: iii.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        note: bad3.map(|(_, r)| r.0.join("; ")).unwrap_or_else(|| "smallest repulsion margin".into()),
    };

    // (iv) composite expansion after leaving an adjacent atom.
    let iv = par_map(&adj, |&i| {
        p.atoms[i]
            .interval
            .interior_grid(grid)
            .into_iter()
            .map(|x| match exit_adjacent(p, i, x) {
                Some((_, y, logd)) => {
                    let j = p.atom_of(y);
                    (logd + p.map(j).jet_lift(y).d1.ln()).exp()
                }
                None => 0.0,
            })
            .fold(f64::INFINITY, f64::min)
    });
    let (k4, v4) = argmin(&iv);
    let item4 = ItemResult {
        item: "iv",
        pass: v4 >= p.lambda,
        worst_atom: adj.get(k4).copied(),
        worst_value: v4,
        note: format!("smallest composite derivative after exit, λ = {}", p.lambda),
    };
    Ok(ValidationReport { grid, endpoint_tol: tol, lambda: p.lambda, items: vec![item1, item2, item3, item4] })
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc })
}

/// Iterates `g_I` from `x` until it leaves atom `i`: returns `k_I(x)`, the
/// exit point and `log (g_I^k)'(x)`.
fn exit_adjacent(p: &MarkovPartition, i: usize, x: f64) -> Option<(usize, f64, f64)> {
    let g = p.map(i);
    let iv = &p.atoms[i].interval;
    let mut y = x;
    let mut logd = 0.0;
    for k in 0..MAX_ADJACENT_ITERATES {
        let o = iv.offset(y);
        let inside = o > p.endpoint_tol && o < iv.length - p.endpoint_tol;
        if !inside && k > 0 {
            return Some((k, y, logd));
        }
        let j = g.jet_lift(y);
        logd += j.d1.ln();
        y = wrap01(j.value);
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NeSource {
    Grid,
    FixedPoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeCandidate {
    pub point: f64,
    pub max_derivative: f64,
    pub source: NeSource,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeReport {
    pub radius: usize,
    pub grid: usize,
    pub tol: f64,
    pub candidates: Vec<NeCandidate>,
    pub grid_hits: usize,
    /// More than half of the grid qualified.
    pub degenerate: bool,
}

/// Points where no element of `B(radius)` has derivative above `1 + tol`.
pub fn detect_ne(gens: &GeneratorSet, radius: usize, grid: usize, tol: f64) -> Result<NeReport> {
    if radius == 0 {
        return Err(Error::Precondition("NE detection needs radius at least 1".into()));
    }
    let ball = default_ball(gens, radius)?;
    let maps: Vec<CircleMap> = par_map(ball.words(), |w| gens.word_map(w));
    let max_der = |x: f64| maps.iter().map(|m| m.jet_lift(x).d1).fold(0.0, f64::max);
    let grid_vals = par_range(grid, |i| {
        let x = i as f64 / grid as f64;
        (x, max_der(x))
    });
    let mut candidates: Vec<NeCandidate> = Vec::new();
    let grid_hits = grid_vals.iter().filter(|v| v.1 <= 1.0 + tol).count();
    for &(x, m) in &grid_vals {
        if m <= 1.0 + tol {
            candidates.push(NeCandidate { point: x, max_derivative: m, source: NeSource::Grid });
        }
    }
    let fixed = par_map(&maps, |m| {
        fixed_points(m, 512).into_iter().filter(|&q| (m.jet_lift(q).d1 - 1.0).abs() < 1e-6).collect::<Vec<_>>()
    });
    let mut fps: Vec<f64> = fixed.into_iter().flatten().collect();
    fps.sort_by(f64::total_cmp);
    fps.dedup_by(|a, b| circ_dist(*a, *b) < 1e-9);
    for q in fps {
        let m = max_der(q);
        if m <= 1.0 + tol && !candidates.iter().any(|c| circ_dist(c.point, q) < 1e-9) {
            candidates.push(NeCandidate { point: q, max_derivative: m, source: NeSource::FixedPoint });
        }
    }
    candidates.sort_by(|a, b| a.point.total_cmp(&b.point));
    Ok(NeReport { radius, grid, tol, candidates, grid_hits, degenerate: 2 * grid_hits > grid })
}

/// Fixed points of a circle map: exact for Möbius maps, otherwise by sign
/// changes of the displacement on a grid refined by bisection.
pub fn fixed_points(m: &CircleMap, grid: usize) -> Vec<f64> {
    if let Some(mob) = m.as_mobius() {
        let [a, b, c, d] = mob.matrix();
        if (a - d).abs() < 1e-14 && b.abs() < 1e-14 && c.abs() < 1e-14 {
            return Vec::new();
        }
        return mob.fixed_points();
    }
    let disp = |x: f64| circ_diff(m.apply(x), x);
    let mut out = Vec::new();
    for i in 0..grid {
        let (mut lo, mut hi) = (i as f64 / grid as f64, (i + 1) as f64 / grid as f64);
        let (dl, dh) = (disp(lo), disp(hi));
        if dl == 0.0 {
            out.push(lo);
            continue;
        }
        if dl.signum() == dh.signum() || (dl - dh).abs() > 0.5 {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if disp(mid).signum() == dl.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(wrap01(0.5 * (lo + hi)));
    }
    out
}

#[derive(Clone, Debug)]
pub struct StarWitness {
    pub plus: Word,
    pub minus: Word,
    /// Whether the witnesses also repel on their side.
    pub plus_repelling: bool,
    pub minus_repelling: bool,
    pub delta: f64,
}

/// Searches `B(radius)` for elements with `x` as an isolated fixed point from
/// the right and from the left.
pub fn check_star(gens: &GeneratorSet, x: f64, radius: usize, delta: f64) -> Result<StarWitness> {
    let ball = default_ball(gens, radius)?;
    let local = 200;
    let side_disp = |w: &Word, sign: f64| -> Option<bool> {
        let d: Vec<f64> = (1..=local)
            .map(|i| {
                let y = x + sign * delta * i as f64 / local as f64;
                circ_diff(gens.apply_word(w, y), y)
            })
            .collect();
        if d.iter().all(|&v| v > 0.0) {
            Some(sign > 0.0)
        } else if d.iter().all(|&v| v < 0.0) {
            Some(sign < 0.0)
        } else {
            None
        }
    };
    let fixing: Vec<&Word> = ball
        .words()
        .iter()
        .filter(|w| !w.is_empty() && circ_dist(gens.apply_word(w, x), x) <= 1e-9)
        .collect();
    let pick = |sign: f64| -> Option<(Word, bool)> {
        let iso: Vec<(&Word, bool)> = fixing.iter().filter_map(|w| side_disp(w, sign).map(|r| (*w, r))).collect();
        iso.iter().find(|c| c.1).or(iso.first()).map(|(w, r)| ((*w).clone(), *r))
    };
    match (pick(1.0), pick(-1.0)) {
        (Some((plus, pr)), Some((minus, mr))) => {
            Ok(StarWitness { plus, minus, plus_repelling: pr, minus_repelling: mr, delta })
        }
        _ => Err(Error::Precondition(format!("no (★) witnesses for {x} at radius {radius}"))),
    }
}

/// Breakpoints `Δ_k` and the atoms of the level-`k` partition.
#[derive(Clone, Debug, Serialize)]
pub struct LevelPartition {
    pub level: usize,
    pub breakpoints: Vec<f64>,
    /// Adjacent-atom preimage sequences cut at the gap scale.
    pub truncated_sequences: usize,
    pub cutoff: f64,
}

impl LevelPartition {
    pub fn atoms(&self) -> Vec<Interval> {
        let b = &self.breakpoints;
        (0..b.len())
            .map(|i| {
                let l = b[i];
                let r = if i + 1 < b.len() { b[i + 1] } else { b[0] + 1.0 };
                Interval { left: l, length: r - l }
            })
            .collect()
    }

    /// Index of the atom containing `x` in its closure (left-endpoint rule).
    pub fn atom_index(&self, x: f64) -> usize {
        let x = wrap01(x);
        match self.breakpoints.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i,
            Err(0) => self.breakpoints.len() - 1,
            Err(i) => i - 1,
        }
    }
}

/// `Δ_k` for `k = 0..=level`.
pub fn refine_levels(p: &MarkovPartition, level: usize, min_gap: f64) -> Vec<LevelPartition> {
    let mut base: Vec<f64> = p.atoms.iter().map(|a| wrap01(a.interval.left)).collect();
    base.extend(p.ne_points.iter().map(|&x| wrap01(x)));
    let mut cur = merge_new(&[], base, p.endpoint_tol);
    let mut out = vec![LevelPartition { level: 0, breakpoints: cur.clone(), truncated_sequences: 0, cutoff: min_gap }];
    let inverses: Vec<CircleMap> = (0..p.atoms.len()).map(|i| p.map(i).invert()).collect();
    for k in 1..=level {
        let per_atom = par_range(p.atoms.len(), |i| {
            let a = &p.atoms[i];
            let image = a.interval.image(p.map(i));
            let inv = &inverses[i];
            let mut pts = Vec::new();
            let mut truncated = 0;
            let inside = points_in(&cur, &image, p.endpoint_tol);
            match a.adjacent {
                None => pts.extend(inside.into_iter().map(|y| inv.apply(y))),
                Some(_) => {
                    for y in inside {
                        if a.interval.contains_open(y) && !near_end(&a.interval, y, p.endpoint_tol) {
                            continue;
                        }
                        let mut q = y;
                        for _ in 0..MAX_ADJACENT_ITERATES {
                            let nq = inv.apply(q);
                            if circ_dist(nq, q) < min_gap {
                                truncated += 1;
                                break;
                            }
                            pts.push(nq);
                            q = nq;
                        }
                    }
                }
            }
            (pts, truncated)
        });
        let truncated = per_atom.iter().map(|r| r.1).sum();
        let new: Vec<f64> = per_atom.into_iter().flat_map(|r| r.0).collect();
        cur = merge_new(&cur, new, min_gap);
        out.push(LevelPartition { level: k, breakpoints: cur.clone(), truncated_sequences: truncated, cutoff: min_gap });
    }
    out
}

fn near_end(iv: &Interval, y: f64, tol: f64) -> bool {
    let o = iv.offset(y);
    o < tol || o > iv.length - tol
}

fn points_in(sorted: &[f64], iv: &Interval, tol: f64) -> Vec<f64> {
    sorted.iter().copied().filter(|&x| iv.contains(x, tol)).collect()
}

/// Adds points of `new` lying farther than `gap` from every kept point.
fn merge_new(old: &[f64], mut new: Vec<f64>, gap: f64) -> Vec<f64> {
    for x in new.iter_mut() {
        *x = wrap01(*x);
    }
    new.sort_by(f64::total_cmp);
    let nearest_old = |x: f64| -> f64 {
        if old.is_empty() {
            return f64::INFINITY;
        }
        let i = old.partition_point(|&p| p < x);
        let a = old[i % old.len()];
        let b = old[(i + old.len() - 1) % old.len()];
        circ_dist(a, x).min(circ_dist(b, x))
    };
    let mut accepted: Vec<f64> = Vec::new();
    for x in new {
        if nearest_old(x) <= gap {
            continue;
        }
        if let Some(&last) = accepted.last() {
            if circ_dist(last, x) <= gap {
                continue;
            }
        }
        accepted.push(x);
    }
    if accepted.len() > 1 && circ_dist(accepted[0], *accepted.last().unwrap()) <= gap {
        accepted.pop();
    }
    let mut out: Vec<f64> = old.iter().copied().chain(accepted).collect();
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionResult {
    pub point: f64,
    pub level: usize,
    #[serde(skip)]
    pub word: Word,
    pub word_text: String,
    /// `J_x^+`, with `x` as left endpoint.
    pub j_plus: Interval,
    pub distortion: f64,
    pub derivative: f64,
    /// Length of the atom `g_x(J_x^+)`.
    pub target_length: f64,
    /// NE point reached.
    pub ne_index: usize,
}

/// Runs the expansion procedure from `x` until an NE point is reached.
pub fn expand_point(p: &MarkovPartition, gens: &GeneratorSet, x: f64, max_steps: usize) -> Result<ExpansionResult> {
    let mut y = wrap01(x);
    let mut word = Word::identity();
    for level in 0..=max_steps {
        if let Some(k) = p.ne_index(y) {
            let plus = p
                .plus_atom(k)
                .ok_or_else(|| Error::Partition(format!("NE point {k} has no right atom")))?;
            let g = gens.word_map(&word);
            let j_plus = p.atoms[plus].interval.image(&g.invert());
            let derivative = gens.word_derivative(&word, x);
            return Ok(ExpansionResult {
                point: wrap01(x),
                level,
                word_text: gens.format_word(&word),
                distortion: distortion_coeff(&g, &j_plus, 256),
                word,
                j_plus,
                derivative,
                target_length: p.atoms[plus].interval.length,
                ne_index: k,
            });
        }
        let i = p.atom_of(y);
        let a = &p.atoms[i];
        match a.adjacent {
            None => {
                word = a.word.mul(&word);
                y = p.map(i).apply(y);
            }
            Some(_) => {
                let (k, z, _) = exit_adjacent(p, i, y).ok_or(Error::NoTermination(max_steps))?;
                let j = p.atom_of(z);
                word = p.atoms[j].word.mul(&a.word.pow(k as i64)).mul(&word);
                y = p.map(j).apply(z);
            }
        }
    }
    Err(Error::NoTermination(max_steps))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionStats {
    pub points: usize,
    pub max_level: usize,
    /// Largest `κ(g_x; J_x^+)`, the empirical `C_0`.
    pub c0: f64,
    /// Smallest `C` with `C⁻¹ ≤ g_x'(x)|J_x^+| ≤ C`.
    pub comparability: f64,
    pub comparability_bound: f64,
    /// Same with `|J_x^+|` measured relative to its target atom; bounded by
    /// `e^{C_0}` through the mean value theorem.
    pub comparability_normalized: f64,
    pub comparability_normalized_bound: f64,
    pub derivative_growth_ok: bool,
    /// Levels at which two `J_x^+` overlap.
    pub overlapping_levels: Vec<usize>,
}

pub fn expansion_stats(results: &[ExpansionResult], lambda: f64, tol: f64) -> ExpansionStats {
    let c0 = results.iter().map(|r| r.distortion).fold(0.0, f64::max);
    let comparability = results
        .iter()
        .map(|r| {
            let v = r.derivative * r.j_plus.length;
            v.max(1.0 / v)
        })
        .fold(1.0, f64::max);
    let comparability_normalized = results
        .iter()
        .map(|r| {
            let v = r.derivative * r.j_plus.length / r.target_length;
            v.max(1.0 / v)
        })
        .fold(1.0, f64::max);
    let derivative_growth_ok = results
        .iter()
        .all(|r| r.derivative >= lambda.powi(r.level as i32) * (1.0 - 1e-12));
    let max_level = results.iter().map(|r| r.level).max().unwrap_or(0);
    let mut overlapping_levels = Vec::new();
    for k in 0..=max_level {
        let mut js: Vec<Interval> = results.iter().filter(|r| r.level == k).map(|r| r.j_plus).collect();
        js.sort_by(|a, b| a.left.total_cmp(&b.left));
        let n = js.len();
        let overlap = n > 1
            && (0..n).any(|i| {
                let a = &js[i];
                let b = &js[(i + 1) % n];
                circ_diff(b.left, a.right()) < -tol || a.length + b.length > 1.0
            });
        if overlap {
            overlapping_levels.push(k);
        }
    }
    ExpansionStats {
        points: results.len(),
        max_level,
        c0,
        comparability,
        comparability_bound: (c0 + 1.0).exp(),
        comparability_normalized,
        comparability_normalized_bound: c0.exp(),
        derivative_growth_ok,
        overlapping_levels,
    }
}
