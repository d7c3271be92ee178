//! Balls, orbits and stabilizers of a finitely generated group acting on the
//! circle.
//!
//! Group elements are identified numerically by their action on a fixed set
//! of probe points. All findings are relative to the radius they were
//! computed at.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::circlemap::{circ_dist, wrap01, GeneratorSet};
use crate::error::{Error, Result};
use crate::par::par_map;
use crate::word::Word;

pub const DEFAULT_PROBE_COUNT: usize = 16;
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;
pub const DEFAULT_ORBIT_TOL: f64 = 1e-7;
pub const DEFAULT_R1_CAP: usize = 14;
pub const DEFAULT_ORBIT_CAP: usize = 2_000_000;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Low-discrepancy probe points (golden-ratio sequence).
pub fn default_probes(n: usize) -> Vec<f64> {
    (0..n).map(|i| wrap01(0.137 + i as f64 * GOLDEN)).collect()
}

/// Spatial hash of circle positions, for tolerance lookups.
#[derive(Clone, Debug)]
pub struct CircleIndex {
    width: f64,
    tol: f64,
    buckets: HashMap<i64, Vec<usize>>,
}

impl CircleIndex {
    pub fn new(tol: f64) -> Self {
        CircleIndex { width: 2.0 * tol.max(1e-15), tol, buckets: HashMap::new() }
    }

    fn key(&self, x: f64) -> i64 {
        (wrap01(x) / self.width).floor() as i64
    }

    pub fn insert(&mut self, x: f64, id: usize) {
        let k = self.key(x);
        self.buckets.entry(k).or_default().push(id);
    }

    /// Ids stored in buckets that may hold points within `tol` of `x`.
    pub fn candidates(&self, x: f64) -> Vec<usize> {
        let mut keys = [self.key(x - self.tol), self.key(x), self.key(x + self.tol)];
        keys.sort_unstable();
        let mut out = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if i > 0 && keys[i - 1] == *k {
                continue;
            }
            if let Some(v) = self.buckets.get(k) {
                out.extend_from_slice(v);
            }
        }
        out
    }
}

/// Elements of the ball `B(n)`, one shortlex-least word per action class.
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: usize,
    pub tol: f64,
    pub probes: Vec<f64>,
    words: Vec<Word>,
    signatures: Vec<f64>,
    level_end: Vec<usize>,
    index: CircleIndex,
    /// Words that matched on probes but disagree at refinement points.
    pub collisions: Vec<(Word, Word)>,
}

impl Ball {
    /// `B(0) = {id}`.
    pub fn new(probes: Vec<f64>, tol: f64) -> Result<Self> {
        if probes.len() < 8 {
            return Err(Error::Precondition("at least 8 probe points are required".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::Precondition("tolerance must be positive".into()));
        }
        let mut index = CircleIndex::new(tol);
        index.insert(probes[0], 0);
        Ok(Ball {
            radius: 0,
            tol,
            signatures: probes.clone(),
            probes,
            words: vec![Word::identity()],
            level_end: vec![1],
            index,
            collisions: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Words of exact length `k`.
    pub fn sphere(&self, k: usize) -> &[Word] {
        let start = if k == 0 { 0 } else { self.level_end[k - 1] };
        &self.words[start..self.level_end[k]]
    }

    pub fn signature(&self, i: usize) -> &[f64] {
        let p = self.probes.len();
        &self.signatures[i * p..(i + 1) * p]
    }

    /// Index of the element acting like `sig` on the probes.
    pub fn find(&self, sig: &[f64]) -> Option<usize> {
        self.index
            .candidates(sig[0])
            .into_iter()
            .find(|&i| same_action(self.signature(i), sig, self.tol))
    }

    /// Adds the sphere of radius `radius + 1`.
    pub fn grow(&mut self, gens: &GeneratorSet) {
        let start = if self.radius == 0 { 0 } else { self.level_end[self.radius - 1] };
        let frontier: Vec<usize> = (start..self.level_end[self.radius]).collect();
        let letters = gens.letters();
        let target = self.radius + 1;
        let batches = par_map(&frontier, |&i| {
            let w = &self.words[i];
            let sig = self.signature(i);
            letters
                .iter()
                .filter_map(|&l| {
                    let nw = w.prepend(l);
                    if nw.len() != target {
                        return None;
                    }
                    let m = gens.letter_map(l);
                    let nsig: Vec<f64> = sig.iter().map(|&x| m.apply(x)).collect();
                    Some((nw, nsig))
                })
                .collect::<Vec<_>>()
        });
        let mut cands: Vec<(Word, Vec<f64>)> = batches.into_iter().flatten().collect();
        cands.sort_by(|a, b| a.0.shortlex().cmp(&b.0.shortlex()));
        for (w, sig) in cands {
            if let Some(j) = self.find(&sig) {
                if self.words[j] != w && self.words[j].len() == w.len() {
                    // Only same-length matches are audited; shorter ones are
                    // genuine relations already vetted one level down.
                    if !agree_off_probes(gens, &self.words[j], &w, self.tol) {
                        self.collisions.push((self.words[j].clone(), w));
                    }
                }
                continue;
            }
            let id = self.words.len();
            self.index.insert(sig[0], id);
            self.signatures.extend_from_slice(&sig);
            self.words.push(w);
        }
        self.level_end.push(self.words.len());
        self.radius = target;
    }
}

fn same_action(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(&x, &y)| circ_dist(x, y) <= tol)
}

fn agree_off_probes(gens: &GeneratorSet, a: &Word, b: &Word, tol: f64) -> bool {
    [0.0271, 0.5113, 0.7919]
        .iter()
        .all(|&x| circ_dist(gens.apply_word(a, x), gens.apply_word(b, x)) <= 10.0 * tol)
}

/// Breadth-first ball of radius `n`, deduplicated by action on `probes`.
pub fn ball(gens: &GeneratorSet, n: usize, probes: &[f64], tol: f64) -> Result<Ball> {
    let mut b = Ball::new(probes.to_vec(), tol)?;
    for _ in 0..n {
        b.grow(gens);
    }
    Ok(b)
}

/// Ball with the default probe set and group tolerance.
pub fn default_ball(gens: &GeneratorSet, n: usize) -> Result<Ball> {
    ball(gens, n, &default_probes(DEFAULT_PROBE_COUNT), DEFAULT_GROUP_TOL)
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitPoint {
    pub position: f64,
    #[serde(skip)]
    pub witness: Word,
    pub distance: usize,
}

/// Truncated orbit of a base point with minimal-distance witnesses.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub base: f64,
    pub radius: usize,
    pub tol: f64,
    pub points: Vec<OrbitPoint>,
    index: CircleIndex,
}

impl Orbit {
    pub fn find(&self, x: f64) -> Option<usize> {
        self.index
            .candidates(x)
            .into_iter()
            .filter(|&i| circ_dist(self.points[i].position, x) <= self.tol)
            .min_by(|&a, &b| {
                circ_dist(self.points[a].position, x).total_cmp(&circ_dist(self.points[b].position, x))
            })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points at exactly distance `d`.
    pub fn shell(&self, d: usize) -> impl Iterator<Item = &OrbitPoint> {
        self.points.iter().filter(move |p| p.distance == d)
    }
}

/// Orbit of `x0` out to `radius`, deduplicated by position within `tol`.
pub fn orbit(gens: &GeneratorSet, x0: f64, radius: usize, tol: f64, cap: usize) -> Result<Orbit> {
    let x0 = wrap01(x0);
    let mut index = CircleIndex::new(tol);
    index.insert(x0, 0);
    let mut o = Orbit {
        base: x0,
        radius,
        tol,
        points: vec![OrbitPoint { position: x0, witness: Word::identity(), distance: 0 }],
        index,
    };
    let letters = gens.letters();
    let mut frontier = vec![0usize];
    for d in 1..=radius {
        let batches = par_map(&frontier, |&i| {
            let p = &o.points[i];
            letters
                .iter()
                .map(|&l| (gens.letter_map(l).apply(p.position), p.witness.prepend(l)))
                .collect::<Vec<_>>()
        });
        let mut cands: Vec<(f64, Word)> = batches.into_iter().flatten().collect();
        cands.sort_by(|a, b| a.1.shortlex().cmp(&b.1.shortlex()));
        let mut next = Vec::new();
        for (x, w) in cands {
            if o.find(x).is_some() {
                continue;
            }
            let id = o.points.len();
            if id >= cap {
                return Err(Error::Capacity { what: "orbit points", count: id + 1, cap });
            }
            o.index.insert(x, id);
            o.points.push(OrbitPoint { position: x, witness: w, distance: d });
            next.push(id);
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(o)
}

#[derive(Clone, Debug)]
pub struct StabilizerReport {
    pub radius: usize,
    /// Non-identity ball elements fixing the point.
    pub words: Vec<Word>,
    /// Shortest such element.
    pub generator: Option<Word>,
    /// Every found element acts as a power of `generator`.
    pub cyclic_consistent: bool,
    /// Order of `generator` when it has finite order on the probes.
    pub finite_order: Option<usize>,
    /// Exponent of each found word relative to `generator`.
    pub exponents: Vec<Option<i64>>,
}

impl StabilizerReport {
    pub fn infinite_cyclic(&self) -> bool {
        self.cyclic_consistent && self.finite_order.is_none()
    }
}

pub fn stabilizer_probe(gens: &GeneratorSet, x0: f64, radius: usize, tol: f64) -> Result<StabilizerReport> {
    let b = default_ball(gens, radius)?;
    let words: Vec<Word> = b
        .words()
        .iter()
        .filter(|w| !w.is_empty() && circ_dist(gens.apply_word(w, x0), x0) <= tol)
        .cloned()
        .collect();
    let probes = &b.probes;
    let sig = |w: &Word| -> Vec<f64> { probes.iter().map(|&x| gens.apply_word(w, x)).collect() };
    let Some(h) = words.first().cloned() else {
        return Ok(StabilizerReport {
            radius,
            words,
            generator: None,
            cyclic_consistent: true,
            finite_order: None,
            exponents: Vec::new(),
        });
    };
    let identity = probes.clone();
    let kmax = 2 * radius as i64 + 2;
    let powers: Vec<(i64, Vec<f64>)> = (-kmax..=kmax).filter(|&k| k != 0).map(|k| (k, sig(&h.pow(k)))).collect();
    let finite_order = (1..=kmax)
        .find(|&k| same_action(&powers.iter().find(|p| p.0 == k).unwrap().1, &identity, b.tol))
        .map(|k| k as usize);
    let exponents: Vec<Option<i64>> = words
        .iter()
        .map(|w| {
            let s = sig(w);
            powers
                .iter()
                .filter(|(_, ps)| same_action(ps, &s, b.tol))
                .map(|(k, _)| *k)
                .min_by_key(|k| (k.abs(), *k < 0))
        })
        .collect();
    Ok(StabilizerReport {
        radius,
        cyclic_consistent: exponents.iter().all(Option::is_some),
        words,
        generator: Some(h),
        finite_order,
        exponents,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct R1Result {
    pub r1: usize,
    pub grid: usize,
    /// Smallest derivative sum over the grid at radius `r1`.
    pub min_sum: f64,
    pub worst_point: f64,
}

/// Smallest radius whose ball derivative sum exceeds `m` at every grid point.
pub fn find_r1(gens: &GeneratorSet, m: f64, grid: usize, cap: usize) -> Result<R1Result> {
    if !(m > 0.0) {
        return Err(Error::Precondition("M must be positive".into()));
    }
    let pts: Vec<f64> = (0..grid.max(1)).map(|i| i as f64 / grid.max(1) as f64).collect();
    let mut b = default_ball(gens, 0)?;
    let mut sums = vec![1.0; pts.len()];
    let mut r = 0;
    loop {
        let (worst, min_sum) = sums
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        if min_sum > m {
            return Ok(R1Result { r1: r, grid: pts.len(), min_sum, worst_point: pts[worst] });
        }
        if r == cap {
            return Err(Error::RadiusCap { cap, worst_point: pts[worst], achieved: min_sum });
        }
        b.grow(gens);
        r += 1;
        let sphere = b.sphere(r).to_vec();
        let add = par_map(&pts, |&x| sphere.iter().map(|w| gens.word_derivative(w, x)).sum::<f64>());
        for (s, a) in sums.iter_mut().zip(add) {
            *s += a;
        }
    }
}

pub fn write_ball_csv(ball: &Ball, gens: &GeneratorSet, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["witness", "length", "image_of_first_probe"])?;
    for (i, word) in ball.words().iter().enumerate() {
        w.write_record([
            gens.format_word(word),
            word.len().to_string(),
            ball.signature(i)[0].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_orbit_csv(orbit: &Orbit, gens: &GeneratorSet, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["witness", "position", "distance"])?;
    for p in &orbit.points {
        w.write_record([gens.format_word(&p.witness), p.position.to_string(), p.distance.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circlemap::{CircleMap, GeneratorSpec};

    fn rot(alpha: f64) -> GeneratorSet {
        GeneratorSet::new(vec![GeneratorSpec::new("r", CircleMap::rotation(alpha))]).unwrap()
    }

    #[test]
    fn rotation_ball_and_orbit() {
        let g = rot(2f64.sqrt() - 1.0);
        assert_eq!(default_ball(&g, 5).unwrap().len(), 11);
        assert_eq!(orbit(&g, 0.2, 5, DEFAULT_ORBIT_TOL, 1000).unwrap().len(), 11);
        assert_eq!(orbit(&rot(1.0 / 3.0), 0.2, 10, DEFAULT_ORBIT_TOL, 1000).unwrap().len(), 3);
        let s = stabilizer_probe(&g, 0.3, 4, 1e-9).unwrap();
        assert!(s.words.is_empty() && s.generator.is_none());
    }

    #[test]
    fn finite_rotation_stabilizer_is_finite() {
        let g = rot(0.25);
        let s = stabilizer_probe(&g, 0.1, 6, 1e-9).unwrap();
        assert!(s.words.is_empty());
        let b = default_ball(&g, 6).unwrap();
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn r1_counts_for_rotations() {
        let g = rot(2f64.sqrt() - 1.0);
        assert_eq!(find_r1(&g, 10.0, 16, 14).unwrap().r1, 5);
        assert_eq!(find_r1(&g, 10.999, 16, 14).unwrap().r1, 5);
        assert_eq!(find_r1(&g, 11.0, 16, 14).unwrap().r1, 6);
        assert!(matches!(find_r1(&g, 100.0, 16, 14), Err(Error::RadiusCap { .. })));
    }

    #[test]
    fn circle_index_wraps() {
        let mut idx = CircleIndex::new(1e-7);
        idx.insert(1.0 - 1e-8, 0);
        assert_eq!(idx.candidates(2e-8), vec![0]);
    }
}
