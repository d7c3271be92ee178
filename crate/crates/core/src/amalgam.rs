//! Normal forms in amalgamated free products `G1 *_Z G2` over a finite `Z`.
//!
//! Factors are finite groups given by multiplication tables, or free groups
//! (only over trivial `Z`). Free-group elements are stored run-length
//! encoded as `(generator, exponent)` pairs.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_SYLLABLE_CAP: usize = 10_000;

/// A finite group on `0..n` with `0` the identity.
#[derive(Clone, Debug)]
pub struct FiniteGroup {
    names: Vec<String>,
    table: Vec<Vec<usize>>,
    inv: Vec<usize>,
}

impl FiniteGroup {
    pub fn new(names: Vec<String>, table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 || names.len() != n || table.iter().any(|r| r.len() != n || r.iter().any(|&v| v >= n)) {
            return Err(Error::Presentation("multiplication table must be square over 0..n".into()));
        }
        if (0..n).any(|i| table[0][i] != i || table[i][0] != i) {
            return Err(Error::Presentation("element 0 must be the identity".into()));
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::Presentation(format!("table not associative at ({a},{b},{c})")));
                    }
                }
            }
        }
        let mut inv = vec![usize::MAX; n];
        for a in 0..n {
            match (0..n).find(|&b| table[a][b] == 0) {
                Some(b) => inv[a] = b,
                None => return Err(Error::Presentation(format!("element {a} has no inverse"))),
            }
        }
        Ok(FiniteGroup { names, table, inv })
    }

    pub fn trivial() -> Self {
        FiniteGroup { names: vec!["e".into()], table: vec![vec![0]], inv: vec![0] }
    }

    /// `ℤ/n` with elements named `e, x, x^2, …`.
    pub fn cyclic(n: usize, name: &str) -> Self {
        let names = (0..n)
            .map(|k| match k {
                0 => "e".to_string(),
                1 => name.to_string(),
                _ => format!("{name}^{k}"),
            })
            .collect();
        let table = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        FiniteGroup::new(names, table).expect("cyclic table is a group")
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn name(&self, a: usize) -> &str {
        &self.names[a]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }
}

/// Run-length encoded reduced free word.
pub type FreeWord = Vec<(u16, i64)>;

fn free_mul(a: &[(u16, i64)], b: &[(u16, i64)]) -> FreeWord {
    let mut out: FreeWord = a.to_vec();
    for &(g, e) in b {
        match out.last_mut() {
            Some(last) if last.0 == g => {
                last.1 += e;
                if last.1 == 0 {
                    out.pop();
                }
            }
            _ => out.push((g, e)),
        }
    }
    out
}

fn free_inverse(a: &[(u16, i64)]) -> FreeWord {
    a.iter().rev().map(|&(g, e)| (g, -e)).collect()
}

/// Element of one factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Elem {
    Fin(usize),
    Free(FreeWord),
}

#[derive(Clone, Debug)]
pub enum Factor {
    /// Finite group with `Z` embedded by `embed` and a right transversal of
    /// `Z \ G` containing the identity.
    Finite { group: FiniteGroup, embed: Vec<usize>, transversal: Vec<usize>, coset: Vec<(usize, usize)> },
    /// Free group of the given rank; requires trivial `Z`.
    Free { names: Vec<String> },
}

impl Factor {
    pub fn finite(group: FiniteGroup, embed: Vec<usize>, transversal: Vec<usize>, z: &FiniteGroup) -> Result<Self> {
        if embed.len() != z.order() || embed.iter().any(|&e| e >= group.order()) {
            return Err(Error::Presentation("embedding has the wrong size".into()));
        }
        for a in 0..z.order() {
            for b in 0..z.order() {
                if embed[z.mul(a, b)] != group.mul(embed[a], embed[b]) {
                    return Err(Error::Presentation("embedding is not a homomorphism".into()));
                }
            }
            if (0..a).any(|b| embed[b] == embed[a]) {
                return Err(Error::Presentation("embedding is not injective".into()));
            }
        }
        if !transversal.contains(&0) {
            return Err(Error::Presentation("transversal must contain the identity".into()));
        }
        let mut coset = vec![(usize::MAX, usize::MAX); group.order()];
        for (ti, &t) in transversal.iter().enumerate() {
            for z_el in 0..z.order() {
                let g = group.mul(embed[z_el], t);
                if coset[g].0 != usize::MAX {
                    return Err(Error::Presentation(format!("element {} has two factorizations", group.name(g))));
                }
                coset[g] = (z_el, ti);
            }
        }
        if let Some(g) = coset.iter().position(|c| c.0 == usize::MAX) {
            return Err(Error::Presentation(format!("element {} is not covered by the transversal", group.name(g))));
        }
        Ok(Factor::Finite { group, embed, transversal, coset })
    }

    pub fn free(names: Vec<String>) -> Self {
        Factor::Free { names }
    }

    fn mul(&self, a: &Elem, b: &Elem) -> Elem {
        match (self, a, b) {
            (Factor::Finite { group, .. }, Elem::Fin(x), Elem::Fin(y)) => Elem::Fin(group.mul(*x, *y)),
            (Factor::Free { .. }, Elem::Free(x), Elem::Free(y)) => Elem::Free(free_mul(x, y)),
            _ => unreachable!("element kind matches its factor"),
        }
    }

    fn inverse(&self, a: &Elem) -> Elem {
        match (self, a) {
            (Factor::Finite { group, .. }, Elem::Fin(x)) => Elem::Fin(group.inverse(*x)),
            (Factor::Free { .. }, Elem::Free(x)) => Elem::Free(free_inverse(x)),
            _ => unreachable!("element kind matches its factor"),
        }
    }

    fn from_z(&self, z: usize) -> Elem {
        match self {
            Factor::Finite { embed, .. } => Elem::Fin(embed[z]),
            Factor::Free { .. } => Elem::Free(Vec::new()),
        }
    }

    /// `g = γ t` with `γ ∈ Z` and `t` a transversal element.
    fn split(&self, g: &Elem) -> (usize, Elem) {
        match (self, g) {
            (Factor::Finite { transversal, coset, .. }, Elem::Fin(x)) => {
                let (z, ti) = coset[*x];
                (z, Elem::Fin(transversal[ti]))
            }
            (Factor::Free { .. }, e) => (0, e.clone()),
            _ => unreachable!("element kind matches its factor"),
        }
    }

    fn is_identity(&self, g: &Elem) -> bool {
        match g {
            Elem::Fin(x) => *x == 0,
            Elem::Free(w) => w.is_empty(),
        }
    }

    fn format(&self, g: &Elem) -> String {
        match (self, g) {
            (Factor::Finite { group, .. }, Elem::Fin(x)) => group.name(*x).to_string(),
            (Factor::Free { names }, Elem::Free(w)) => {
                if w.is_empty() {
                    return "e".into();
                }
                w.iter()
                    .map(|&(gi, e)| if e == 1 { names[gi as usize].clone() } else { format!("{}^{e}", names[gi as usize]) })
                    .collect::<Vec<_>>()
                    .join(" ")
            }
            _ => unreachable!("element kind matches its factor"),
        }
    }

    fn parse(&self, tok: &str) -> Option<Elem> {
        match self {
            Factor::Finite { group, .. } => group.find(tok).map(Elem::Fin),
            Factor::Free { names } => {
                let (base, e) = match tok.split_once('^') {
                    Some((b, e)) => (b, e.parse::<i64>().ok()?),
                    None => (tok, 1),
                };
                let gi = names.iter().position(|n| n == base)?;
                Some(Elem::Free(if e == 0 { Vec::new() } else { vec![(gi as u16, e)] }))
            }
        }
    }
}

/// A syllable: factor index (0 for `G1`, 1 for `G2`) and element.
pub type Syllable = (u8, Elem);

#[derive(Clone, Debug)]
pub struct AmalgamPresentation {
    pub z: FiniteGroup,
    pub factors: [Factor; 2],
}

/// `γ · t_n ⋯ t_1`, syllables stored leftmost first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NormalForm {
    pub gamma: usize,
    pub syllables: Vec<Syllable>,
}

impl NormalForm {
    pub fn identity() -> Self {
        NormalForm { gamma: 0, syllables: Vec::new() }
    }

    /// Reduced length `ϱ`.
    pub fn rho(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_identity(&self) -> bool {
        self.gamma == 0 && self.syllables.is_empty()
    }
}

impl AmalgamPresentation {
    pub fn new(z: FiniteGroup, g1: Factor, g2: Factor) -> Result<Self> {
        for f in [&g1, &g2] {
            if matches!(f, Factor::Free { .. }) && z.order() != 1 {
                return Err(Error::Presentation("free factors require a trivial amalgamated subgroup".into()));
            }
        }
        Ok(AmalgamPresentation { z, factors: [g1, g2] })
    }

    /// `ℤ/2 * ℤ/3` with generators `s` and `u`.
    pub fn z2_z3() -> Self {
        let z = FiniteGroup::trivial();
        let g1 = Factor::finite(FiniteGroup::cyclic(2, "s"), vec![0], vec![0, 1], &z).unwrap();
        let g2 = Factor::finite(FiniteGroup::cyclic(3, "u"), vec![0], vec![0, 1, 2], &z).unwrap();
        AmalgamPresentation::new(z, g1, g2).unwrap()
    }

    /// Normal form of a product of syllables, checking the syllable cap.
    pub fn normal_form_capped(&self, word: &[Syllable], cap: usize) -> Result<NormalForm> {
        for (i, s) in word {
            if *i > 1 {
                return Err(Error::Syllable(format!("factor index {i}")));
            }
            self.check_kind(*i, s)?;
        }
        // Left-multiply syllables onto the running form, from the right end
        // of the word. The form is kept reversed so edits happen at the back.
        let mut rev_syl: Vec<Syllable> = Vec::new();
        let mut gamma = 0usize;
        for (i, s) in word.iter().rev() {
            let i = *i;
            let f = &self.factors[i as usize];
            let sg = f.mul(s, &f.from_z(gamma));
            let merged = match rev_syl.last() {
                Some((j, _)) if *j == i => {
                    let (_, t) = rev_syl.pop().unwrap();
                    f.mul(&sg, &t)
                }
                _ => sg,
            };
            let (g, t) = f.split(&merged);
            gamma = g;
            if !f.is_identity(&t) {
                rev_syl.push((i, t));
                if rev_syl.len() > cap {
                    return Err(Error::Capacity { what: "normal-form syllables", count: rev_syl.len(), cap });
                }
            }
        }
        rev_syl.reverse();
        Ok(NormalForm { gamma, syllables: rev_syl })
    }

    pub fn normal_form(&self, word: &[Syllable]) -> Result<NormalForm> {
        self.normal_form_capped(word, usize::MAX)
    }

    fn check_kind(&self, i: u8, s: &Elem) -> Result<()> {
        match (&self.factors[i as usize], s) {
            (Factor::Finite { group, .. }, Elem::Fin(x)) if *x < group.order() => Ok(()),
            (Factor::Free { names }, Elem::Free(w)) if w.iter().all(|&(g, _)| (g as usize) < names.len()) => Ok(()),
            _ => Err(Error::Syllable(format!("{s:?} is not an element of factor {}", i + 1))),
        }
    }

    pub fn reduced_length(&self, word: &[Syllable]) -> Result<usize> {
        Ok(self.normal_form(word)?.rho())
    }

    /// The syllable sequence `γ, t_n, …, t_1` of a normal form.
    pub fn to_word(&self, nf: &NormalForm) -> Vec<Syllable> {
        let mut w = Vec::with_capacity(nf.syllables.len() + 1);
        if nf.gamma != 0 {
            w.push((0, self.factors[0].from_z(nf.gamma)));
        }
        w.extend(nf.syllables.iter().cloned());
        w
    }

    pub fn inverse(&self, nf: &NormalForm) -> NormalForm {
        let w: Vec<Syllable> = self
            .to_word(nf)
            .into_iter()
            .rev()
            .map(|(i, s)| (i, self.factors[i as usize].inverse(&s)))
            .collect();
        self.normal_form(&w).expect("inverse of a valid normal form")
    }

    pub fn mul_capped(&self, a: &NormalForm, b: &NormalForm, cap: usize) -> Result<NormalForm> {
        let mut w = self.to_word(a);
        w.extend(self.to_word(b));
        self.normal_form_capped(&w, cap)
    }

    pub fn mul(&self, a: &NormalForm, b: &NormalForm) -> NormalForm {
        self.mul_capped(a, b, usize::MAX).expect("uncapped product")
    }

    /// `[a, b] = a b a⁻¹ b⁻¹`.
    pub fn commutator_capped(&self, a: &NormalForm, b: &NormalForm, cap: usize) -> Result<NormalForm> {
        let mut w = self.to_word(a);
        w.extend(self.to_word(b));
        w.extend(self.to_word(&self.inverse(a)));
        w.extend(self.to_word(&self.inverse(b)));
        self.normal_form_capped(&w, cap)
    }

    /// Parses whitespace-separated syllables such as `"s u s u^2"` or
    /// `"a^5 s a^7"`; tokens are looked up in `G1` first.
    pub fn parse(&self, text: &str) -> Result<Vec<Syllable>> {
        text.split_whitespace()
            .filter(|t| *t != "id")
            .map(|tok| {
                (0..2u8)
                    .find_map(|i| self.factors[i as usize].parse(tok).map(|e| (i, e)))
                    .ok_or_else(|| Error::Syllable(tok.to_string()))
            })
            .collect()
    }

    pub fn format(&self, nf: &NormalForm) -> String {
        NormalFormDisplay { pres: self, nf }.to_string()
    }
}

struct NormalFormDisplay<'a> {
    pres: &'a AmalgamPresentation,
    nf: &'a NormalForm,
}

impl fmt::Display for NormalFormDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pres.z.name(self.nf.gamma))?;
        for (i, s) in &self.nf.syllables {
            write!(f, " · {}[G{}]", self.pres.factors[*i as usize].format(s), i + 1)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainStep {
    /// Index `j` of `f_j`.
    pub index: usize,
    pub rho: usize,
    pub trivial: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub steps: Vec<ChainStep>,
    /// Set when the syllable cap stopped the chain early.
    pub aborted: Option<String>,
}

impl ChainReport {
    pub fn all_nontrivial(&self) -> bool {
        self.steps.iter().all(|s| !s.trivial)
    }

    pub fn min_rho(&self) -> Option<usize> {
        self.steps.iter().map(|s| s.rho).min()
    }
}

/// Iterates `f_{j+2} = [f_{j+1}, f_j]` for `k` steps.
pub fn commutator_chain(
    pres: &AmalgamPresentation,
    f1: &NormalForm,
    f2: &NormalForm,
    k: usize,
    cap: usize,
) -> ChainReport {
    let mut prev = f1.clone();
    let mut cur = f2.clone();
    let mut steps = Vec::new();
    for j in 1..=k {
        match pres.commutator_capped(&cur, &prev, cap) {
            Ok(next) => {
                steps.push(ChainStep { index: j + 2, rho: next.rho(), trivial: next.is_identity() });
                prev = std::mem::replace(&mut cur, next);
            }
            Err(e) => {
                return ChainReport { steps, aborted: Some(format!("step {j}: {e}")) };
            }
        }
    }
    ChainReport { steps, aborted: None }
}

/// `(f1, f2)` with `f2 = ψ h ψ⁻¹` and `ψ = u σ v`.
pub fn conjugate_pair(
    pres: &AmalgamPresentation,
    f1: &[Syllable],
    u: &[Syllable],
    sigma: &[Syllable],
    v: &[Syllable],
    h: &[Syllable],
) -> Result<(NormalForm, NormalForm, NormalForm)> {
    let psi: Vec<Syllable> = u.iter().chain(sigma).chain(v).cloned().collect();
    let psi = pres.normal_form(&psi)?;
    let h = pres.normal_form(h)?;
    let f2 = pres.mul(&pres.mul(&psi, &h), &pres.inverse(&psi));
    Ok((pres.normal_form(f1)?, f2, psi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z2_z3_examples() {
        let p = AmalgamPresentation::z2_z3();
        assert!(p.normal_form(&[]).unwrap().is_identity());
        let w = p.parse("s u s u^2").unwrap();
        let nf = p.normal_form(&w).unwrap();
        assert_eq!(nf.rho(), 4);
        assert_eq!(p.format(&nf), "e · s[G1] · u[G2] · s[G1] · u^2[G2]");
        assert!(p.normal_form(&p.parse("s s").unwrap()).unwrap().is_identity());
        assert_eq!(p.reduced_length(&p.parse("u u u s").unwrap()).unwrap(), 1);
        assert_eq!(p.normal_form(&p.to_word(&nf)).unwrap(), nf);
    }

    #[test]
    fn nontrivial_z_rewrites_through_transversal() {
        // ℤ/4 *_{ℤ/2} ℤ/6, the classical amalgam for SL(2, ℤ).
        let z = FiniteGroup::cyclic(2, "z");
        let g1 = Factor::finite(FiniteGroup::cyclic(4, "x"), vec![0, 2], vec![0, 1], &z).unwrap();
        let g2 = Factor::finite(FiniteGroup::cyclic(6, "y"), vec![0, 3], vec![0, 1, 2], &z).unwrap();
        let p = AmalgamPresentation::new(z, g1, g2).unwrap();
        let nf = p.normal_form(&p.parse("x^2 y^3").unwrap()).unwrap();
        assert!(nf.syllables.is_empty() && nf.gamma == 0);
        let nf = p.normal_form(&p.parse("x^3 y^4").unwrap()).unwrap();
        assert_eq!(nf.rho(), 2);
        assert_eq!(nf.gamma, 0);
        let back = p.mul(&nf, &p.inverse(&nf));
        assert!(back.is_identity());
    }

    #[test]
    fn rejects_bad_presentations() {
        let z = FiniteGroup::cyclic(2, "z");
        assert!(Factor::finite(FiniteGroup::cyclic(4, "x"), vec![0, 1], vec![0, 1], &z).is_err());
        assert!(Factor::finite(FiniteGroup::cyclic(4, "x"), vec![0, 2], vec![0, 2], &z).is_err());
        assert!(AmalgamPresentation::new(z, Factor::free(vec!["a".into()]), Factor::free(vec!["b".into()])).is_err());
        let p = AmalgamPresentation::z2_z3();
        assert!(p.parse("s q").is_err());
        assert!(p.normal_form(&[(0, Elem::Fin(5))]).is_err());
    }

    #[test]
    fn equal_commutator_is_trivial() {
        let p = AmalgamPresentation::z2_z3();
        let f = p.normal_form(&p.parse("s u").unwrap()).unwrap();
        let r = commutator_chain(&p, &f, &f, 3, DEFAULT_SYLLABLE_CAP);
        assert!(r.steps[0].trivial);
    }
}
