use std::sync::Arc;

use super::calculus::DEFAULT_GRID;
use super::map::{circ_dist, CircleMap};
use crate::error::{Error, Result};
use crate::jet::Jet3;
use crate::word::{Letter, Word};

/// Grid used to check declared inverses.
const INVERSE_GRID: usize = 128;
const INVERSE_TOL: f64 = 1e-9;

/// One generator before validation: label, map and optional inverse.
#[derive(Clone, Debug)]
pub struct GeneratorSpec {
    pub label: String,
    pub map: CircleMap,
    pub inverse: Option<CircleMap>,
}

impl GeneratorSpec {
    pub fn new(label: impl Into<String>, map: CircleMap) -> Self {
        GeneratorSpec { label: label.into(), map, inverse: None }
    }

    pub fn with_inverse(mut self, inverse: CircleMap) -> Self {
        self.inverse = Some(inverse);
        self
    }
}

#[derive(Clone, Debug)]
struct Entry {
    map: Arc<CircleMap>,
    inverse: Arc<CircleMap>,
}

/// A finite symmetric generating set.
#[derive(Clone, Debug)]
pub struct GeneratorSet {
    labels: Vec<String>,
    entries: Vec<Entry>,
    distortion_constant: f64,
}

impl GeneratorSet {
    pub fn new(specs: Vec<GeneratorSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidMap("empty generator set".into()));
        }
        let mut labels = Vec::new();
        let mut entries = Vec::new();
        for spec in specs {
            if labels.contains(&spec.label) {
                return Err(Error::InvalidMap(format!("duplicate label {}", spec.label)));
            }
            let inverse = spec.inverse.unwrap_or_else(|| spec.map.invert());
            let residual = (0..INVERSE_GRID)
                .map(|i| {
                    let x = (i as f64 + 0.5) / INVERSE_GRID as f64;
                    circ_dist(spec.map.apply(inverse.apply(x)), x)
                        .max(circ_dist(inverse.apply(spec.map.apply(x)), x))
                })
                .fold(0.0, f64::max);
            if residual > INVERSE_TOL {
                return Err(Error::BadInverse { label: spec.label, residual });
            }
            labels.push(spec.label);
            entries.push(Entry { map: Arc::new(spec.map), inverse: Arc::new(inverse) });
        }
        let mut set = GeneratorSet { labels, entries, distortion_constant: 0.0 };
        set.distortion_constant = set.compute_distortion();
        Ok(set)
    }

    fn compute_distortion(&self) -> f64 {
        self.letters().iter().fold(0.0, |acc, &l| {
            let m = self.letter_map(l);
            (0..DEFAULT_GRID).fold(acc, |acc, i| {
                let x = i as f64 / DEFAULT_GRID as f64;
                acc.max(m.jet_lift(x).nonlinearity().abs())
            })
        })
    }

    /// The generators with the given labels, and for each the index in `self`.
    pub fn restrict(&self, labels: &[String]) -> Result<(GeneratorSet, Vec<u16>)> {
        let mut out = GeneratorSet { labels: Vec::new(), entries: Vec::new(), distortion_constant: 0.0 };
        let mut index = Vec::new();
        for label in labels {
            let l = self.generator(label)?;
            out.labels.push(label.clone());
            out.entries.push(self.entries[l.gen as usize].clone());
            index.push(l.gen);
        }
        out.distortion_constant = out.compute_distortion();
        Ok((out, index))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// `C_G`: the largest `|N(g)|` over generators, inverses and grid points.
    pub fn distortion_constant(&self) -> f64 {
        self.distortion_constant
    }

    /// All letters: each generator followed by its inverse.
    pub fn letters(&self) -> Vec<Letter> {
        (0..self.entries.len() as u16)
            .flat_map(|g| [Letter::new(g, false), Letter::new(g, true)])
            .collect()
    }

    pub fn letter_map(&self, l: Letter) -> &Arc<CircleMap> {
        let e = &self.entries[l.gen as usize];
        if l.inv {
            &e.inverse
        } else {
            &e.map
        }
    }

    pub fn generator(&self, label: &str) -> Result<Letter> {
        self.labels
            .iter()
            .position(|s| s == label)
            .map(|i| Letter::new(i as u16, false))
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Parses `"S U^-1 T^3"`; `id` or an empty string is the identity.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for tok in text.split_whitespace() {
            if tok == "id" {
                continue;
            }
            let (name, power) = match tok.split_once('^') {
                Some((n, p)) => {
                    let p: i64 = p
                        .parse()
                        .map_err(|_| Error::UnknownLabel(format!("bad exponent in {tok}")))?;
                    (n, p)
                }
                None => (tok, 1),
            };
            let l = self.generator(name)?;
            let l = if power < 0 { l.inverse() } else { l };
            letters.extend(std::iter::repeat_n(l, power.unsigned_abs() as usize));
        }
        Ok(Word::from_letters(letters))
    }

    pub fn format_word(&self, w: &Word) -> String {
        w.display(&self.labels).to_string()
    }

    /// The word as a composed map.
    pub fn word_map(&self, w: &Word) -> CircleMap {
        CircleMap::compose(w.letters().iter().map(|&l| self.letter_map(l).clone()))
    }

    /// Jet of the word's lift at `x`, composing letter jets from the right.
    pub fn word_jet(&self, w: &Word, x: f64) -> Jet3 {
        w.letters().iter().rev().fold(Jet3::identity(x), |j, &l| {
            j.then(self.letter_map(l).jet_lift(j.value))
        })
    }

    /// Point image of `x` under the word.
    pub fn apply_word(&self, w: &Word, x: f64) -> f64 {
        w.letters().iter().rev().fold(x, |y, &l| self.letter_map(l).apply(y))
    }

    /// Derivative of the word at `x`.
    pub fn word_derivative(&self, w: &Word, x: f64) -> f64 {
        let mut y = x;
        let mut d = 1.0;
        for &l in w.letters().iter().rev() {
            let j = self.letter_map(l).jet_lift(y);
            d *= j.d1;
            y = j.value;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circlemap::map::wrap01;

    fn psl2z() -> GeneratorSet {
        GeneratorSet::new(vec![
            GeneratorSpec::new("S", CircleMap::mobius([0.0, -1.0, 1.0, 0.0]).unwrap()),
            GeneratorSpec::new("U", CircleMap::mobius([0.0, -1.0, 1.0, 1.0]).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn parse_and_format_round_trip() {
        let g = psl2z();
        let w = g.parse_word("S U^-1 U^-1 U").unwrap();
        assert_eq!(g.format_word(&w), "S U^-1");
        assert!(g.parse_word("id").unwrap().is_empty());
        assert!(g.parse_word("V").is_err());
    }

    #[test]
    fn rejects_wrong_inverse() {
        let r = CircleMap::rotation(0.1);
        let bad = GeneratorSpec::new("r", r).with_inverse(CircleMap::rotation(0.1));
        assert!(matches!(GeneratorSet::new(vec![bad]), Err(Error::BadInverse { .. })));
    }

    #[test]
    fn word_evaluation_matches_map() {
        let g = psl2z();
        let w = g.parse_word("S U S U^-1 S").unwrap();
        let m = g.word_map(&w);
        for i in 0..20 {
            let x = (i as f64 + 0.3) / 20.0;
            let a = g.word_jet(&w, x);
            let b = m.jet_lift(x);
            assert!(circ_dist(wrap01(a.value), wrap01(b.value)) < 1e-12);
            assert!((a.d1 - b.d1).abs() < 1e-9 * b.d1.max(1.0));
            assert!((g.word_derivative(&w, x) - a.d1).abs() < 1e-12 * a.d1.max(1.0));
            assert!(circ_dist(g.apply_word(&w, x), wrap01(a.value)) < 1e-12);
        }
    }

    #[test]
    fn rotations_have_zero_distortion_constant() {
        let g = GeneratorSet::new(vec![GeneratorSpec::new("r", CircleMap::rotation(0.2))]).unwrap();
        assert_eq!(g.distortion_constant(), 0.0);
        assert_eq!(g.letters().len(), 2);
    }
}
