//! Frontier statistics of finite sets, product families in amalgams, the
//! sufficient-estimate diagnostic and the iterated-commutator probe.

use std::io::Write;

use serde::Serialize;

use crate::circlemap::{circ_diff, circ_dist, CircleMap, GeneratorSet, GeneratorSpec, Interval};
use crate::error::{Error, Result};
use crate::groupaction::{default_ball, default_probes, CircleIndex, DEFAULT_GROUP_TOL, DEFAULT_PROBE_COUNT};
use crate::jet::Jet3;
use crate::par::par_map;
use crate::word::{Letter, Word};

pub const DEFAULT_EPS0: f64 = 0.05;
pub const DEFAULT_FAMILY_CAP: usize = 200_000;

#[derive(Clone, Debug, Serialize)]
pub struct FrontierStats {
    pub size: usize,
    /// Outer radius, read off the word lengths.
    pub rho: usize,
    #[serde(skip)]
    pub g_e: Word,
    pub g_e_text: String,
    pub x_e: f64,
    pub j_e: Interval,
    pub ell_e: f64,
    pub c_e: usize,
    pub s_e: f64,
}

/// Frontier statistics of `e` at `x0`; points within `tol` of each other are
/// one orbit point.
pub fn frontier_stats(gens: &GeneratorSet, e: &[Word], x0: f64, tol: f64) -> Result<FrontierStats> {
    let jets: Vec<Jet3> = par_map(e, |w| gens.word_jet(w, x0));
    let mut best: Option<(f64, usize)> = None;
    for (i, j) in jets.iter().enumerate() {
        let off = circ_diff(j.value, x0).rem_euclid(1.0);
        if off > tol && off < 1.0 - tol && best.is_none_or(|(b, _)| off < b) {
            best = Some((off, i));
        }
    }
    let (ell, gi) = best.ok_or(Error::AllStabilizing)?;
    // Multiplicity of the most repeated image point.
    let mut pos: Vec<f64> = jets.iter().map(|j| (j.value - x0).rem_euclid(1.0)).collect();
    pos.sort_by(f64::total_cmp);
    let mut c_e = 0;
    let mut run = 0;
    for k in 0..pos.len() {
        run = if k > 0 && pos[k] - pos[k - 1] <= tol { run + 1 } else { 1 };
        c_e = c_e.max(run);
    }
    // Runs straddling 0 ≡ 1.
    let head = pos.iter().take_while(|&&p| p <= tol).count();
    let tail = pos.iter().rev().take_while(|&&p| p >= 1.0 - tol).count();
    if head < pos.len() {
        c_e = c_e.max(head + tail);
    }
    Ok(FrontierStats {
        size: e.len(),
        rho: e.iter().map(Word::len).max().unwrap_or(0),
        g_e_text: gens.format_word(&e[gi]),
        g_e: e[gi].clone(),
        x_e: jets[gi].value.rem_euclid(1.0),
        j_e: Interval::new(x0.rem_euclid(1.0), ell)?,
        ell_e: ell,
        c_e,
        s_e: jets.iter().map(|j| j.d1).sum(),
    })
}

/// `ℓ_F S_E / c_E`.
pub fn ell_f_ratio(f: &FrontierStats, e: &FrontierStats) -> f64 {
    f.ell_e * e.s_e / e.c_e as f64
}

/// Keeps the first word of each action class on the default probes.
pub fn dedup_by_action(gens: &GeneratorSet, words: Vec<Word>, tol: f64) -> Vec<Word> {
    let probes = default_probes(DEFAULT_PROBE_COUNT);
    let sigs: Vec<Vec<f64>> = par_map(&words, |w| probes.iter().map(|&x| gens.apply_word(w, x)).collect());
    let mut index = CircleIndex::new(tol);
    let mut kept: Vec<usize> = Vec::new();
    for (i, s) in sigs.iter().enumerate() {
        let dup = index.candidates(s[0]).into_iter().any(|k| {
            sigs[kept[k]].iter().zip(s).all(|(&a, &b)| circ_dist(a, b) <= tol)
        });
        if !dup {
            index.insert(s[0], kept.len());
            kept.push(i);
        }
    }
    let mut words = words;
    let mut out = Vec::with_capacity(kept.len());
    for (i, w) in words.drain(..).enumerate() {
        if kept.binary_search(&i).is_ok() {
            out.push(w);
        }
    }
    out
}

/// `E⁻¹E` deduplicated by action.
pub fn inverse_products(gens: &GeneratorSet, e: &[Word]) -> Vec<Word> {
    let mut all: Vec<Word> = e.iter().flat_map(|a| e.iter().map(move |b| a.inverse().mul(b))).collect();
    all.sort_by(|a, b| a.shortlex().cmp(&b.shortlex()));
    dedup_by_action(gens, all, DEFAULT_GROUP_TOL)
}

/// `B₁^×(R1) ∩ T₁`: nontrivial elements of the ball of radius `r1` in the
/// subgroup generated by `g1_labels`, one per left coset of `Z`.
pub fn factor_block(gens: &GeneratorSet, g1_labels: &[String], z: &[Word], r1: usize) -> Result<Vec<Word>> {
    let (sub, index) = gens.restrict(g1_labels)?;
    let ball = default_ball(&sub, r1)?;
    let lift = |w: &Word| Word::from_letters(w.letters().iter().map(|l| Letter::new(index[l.gen as usize], l.inv)));
    let probes = default_probes(DEFAULT_PROBE_COUNT);
    let sig = |w: &Word| -> Vec<f64> { probes.iter().map(|&x| gens.apply_word(w, x)).collect() };
    let mut reps: Vec<(Word, Vec<Vec<f64>>)> = Vec::new();
    for w in ball.words() {
        let w = lift(w);
        let coset: Vec<Vec<f64>> = std::iter::once(sig(&w)).chain(z.iter().map(|zw| sig(&w.mul(zw)))).collect();
        let seen = reps.iter().any(|(_, c)| {
            c.iter().any(|s| s.iter().zip(&coset[0]).all(|(&a, &b)| circ_dist(a, b) <= DEFAULT_GROUP_TOL))
        });
        if !seen {
            reps.push((w, coset));
        }
    }
    // The first representative is the identity, standing for `Z` itself.
    Ok(reps.into_iter().skip(1).map(|(w, _)| w).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductFamily {
    pub n: usize,
    pub sigma: String,
    pub psi: String,
    pub block_size: usize,
    pub count_before: usize,
    pub count_after: usize,
    #[serde(skip)]
    pub a: Vec<Word>,
    #[serde(skip)]
    pub e: Vec<Word>,
    pub rho_a: usize,
    /// `n (R1 + |σ|)` bound on word lengths in `A(n)`.
    pub length_bound: usize,
    pub grid: usize,
    pub s_a_min: f64,
    /// Sum over the multiset of products (before dedup), at its minimizing grid point.
    pub s_a_multiset_min: f64,
    pub a_fit: f64,
    pub s_conj: f64,
    pub c_psi: f64,
    /// `inf ψ' · (ψ⁻¹)'(x0) · min S_A`.
    pub conj_lower_bound: f64,
}

/// Materializes `A(n) = σ T σ T ⋯ σ T` (`n` blocks), `E(n) = {id} ∪ A(n)`,
/// and the derivative sums used for the exponential bound.
#[allow(clippy::too_many_arguments)]
pub fn build_family(
    gens: &GeneratorSet,
    block: &[Word],
    r1: usize,
    sigma: &Word,
    n: usize,
    psi: &Word,
    x0: f64,
    grid: usize,
    cap: usize,
) -> Result<ProductFamily> {
    if block.is_empty() {
        return Err(Error::Precondition("empty factor block".into()));
    }
    let count_before = block
        .len()
        .checked_pow(n as u32)
        .filter(|&c| c <= cap)
        .ok_or(Error::Capacity { what: "product family", count: block.len().saturating_pow(n as u32), cap })?;
    let mut prods = vec![Word::identity()];
    for _ in 0..n {
        let next: Vec<Vec<Word>> =
            par_map(&prods, |p| block.iter().map(|b| p.mul(sigma).mul(b)).collect());
        prods = next.into_iter().flatten().collect();
    }
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 / grid as f64).collect();
    let sums_multi: Vec<f64> = par_map(&xs, |&x| prods.iter().map(|w| gens.word_derivative(w, x)).sum());
    let a = dedup_by_action(gens, prods, DEFAULT_GROUP_TOL);
    let sums: Vec<f64> = par_map(&xs, |&x| a.iter().map(|w| gens.word_derivative(w, x)).sum());
    let s_a_min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let rho_a = a.iter().map(Word::len).max().unwrap_or(0);
    let conj: Vec<Word> = a.iter().map(|w| psi.mul(w).mul(&psi.inverse())).collect();
    let s_conj: f64 = conj.iter().map(|w| gens.word_derivative(w, x0)).sum();
    let inf_psi = xs.iter().map(|&x| gens.word_derivative(psi, x)).fold(f64::INFINITY, f64::min);
    let mut e = vec![Word::identity()];
    e.extend(a.iter().cloned());
    Ok(ProductFamily {
        n,
        sigma: gens.format_word(sigma),
        psi: gens.format_word(psi),
        block_size: block.len(),
        count_before,
        count_after: a.len(),
        rho_a,
        length_bound: n * (r1 + sigma.len()),
        grid,
        s_a_min,
        s_a_multiset_min: sums_multi.iter().copied().fold(f64::INFINITY, f64::min),
        a_fit: s_a_min.powf(1.0 / rho_a.max(1) as f64),
        s_conj,
        c_psi: s_conj / s_a_min,
        conj_lower_bound: inf_psi * gens.word_derivative(&psi.inverse(), x0) * s_a_min,
        a,
        e,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateRow {
    pub n: usize,
    pub rho: usize,
    pub c: usize,
    pub s: f64,
    pub ratio: f64,
    pub r_n: f64,
    pub g_f: String,
    pub ell_f: f64,
    pub ell_f_ratio: f64,
    /// `g̃(0) = ℓ_F / r_n`.
    pub rescaled_at_zero: f64,
    pub rescaled_c1: f64,
}

const RESCALE_GRID: usize = 201;

/// C¹ distance to the identity of `t ↦ (g(x0 + r t) − x0)/r` on `[−1, 1]`.
pub fn rescaled_c1_distance(gens: &GeneratorSet, g: &Word, x0: f64, r: f64) -> (f64, f64) {
    // Displacement form: `g̃(t) − t = (g(x) − x)/r` with `x = x0 + r t`.
    let at = |t: f64| {
        let x = x0 + r * t;
        let j = gens.word_jet(g, x);
        (circ_diff(j.value, x) / r, j.d1)
    };
    let mut worst: f64 = 0.0;
    for i in 0..RESCALE_GRID {
        let t = -1.0 + 2.0 * i as f64 / (RESCALE_GRID - 1) as f64;
        let (v, d) = at(t);
        worst = worst.max(v.abs()).max((d - 1.0).abs());
    }
    (at(0.0).0, worst)
}

/// Per-family diagnostics `ρ c / S`, `r_n` and the rescaled `g_F`.
pub fn sufficient_estimate_report(gens: &GeneratorSet, families: &[ProductFamily], x0: f64, tol: f64) -> Result<Vec<EstimateRow>> {
    families
        .iter()
        .map(|fam| {
            let se = frontier_stats(gens, &fam.e, x0, tol)?;
            let f = inverse_products(gens, &fam.e);
            let sf = frontier_stats(gens, &f, x0, tol)?;
            let cs = se.c_e as f64 / se.s_e;
            let r_n = (cs / se.rho.max(1) as f64).sqrt();
            let (at0, c1) = rescaled_c1_distance(gens, &sf.g_e, x0, r_n);
            Ok(EstimateRow {
                n: fam.n,
                rho: se.rho,
                c: se.c_e,
                s: se.s_e,
                ratio: se.rho as f64 * cs,
                r_n,
                g_f: sf.g_e_text.clone(),
                ell_f: sf.ell_e,
                ell_f_ratio: ell_f_ratio(&sf, &se),
                rescaled_at_zero: at0,
                rescaled_c1: c1,
            })
        })
        .collect()
}

pub fn write_estimate_csv(rows: &[EstimateRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "rho", "c", "S", "ratio", "r_n", "rescaled_c1"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.rho.to_string(),
            r.c.to_string(),
            r.s.to_string(),
            r.ratio.to_string(),
            r.r_n.to_string(),
            r.rescaled_c1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeConfig {
    /// Commutator steps after `f1`, `f2`.
    pub steps: usize,
    pub eps0: f64,
    /// Intermediate points must stay in `I` enlarged by this factor.
    pub enlarge: Option<f64>,
    pub grid: usize,
    pub identity_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { steps: 6, eps0: DEFAULT_EPS0, enlarge: None, grid: 200, identity_tol: DEFAULT_GROUP_TOL }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeStep {
    /// Index `k` of `f_k`.
    pub k: usize,
    pub word_len: usize,
    pub c0: f64,
    pub c1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ProbeVerdict {
    Converging,
    NonConverging,
    /// The commutator at this step (`f_{step+2}`) is the identity.
    Trivialized { step: usize },
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub interval: Interval,
    pub config: ProbeConfig,
    pub steps: Vec<ProbeStep>,
    pub initial_max: f64,
    pub verdict: ProbeVerdict,
    /// After a trivialized step, whether the next commutator is also the identity.
    pub extra_step_identity: Option<bool>,
    /// Length of the strictly decreasing run of C¹ distances along
    /// `f1, f2, f3, …`, stopping at the first identity.
    pub decay_steps: usize,
    pub escape: Option<String>,
}

fn commutator(a: &Word, b: &Word) -> Word {
    a.mul(b).mul(&a.inverse()).mul(&b.inverse())
}

/// C⁰ and C¹ distances of the word map to the identity on the grid of `dom`,
/// or the first point leaving `track`.
fn word_distances(gens: &GeneratorSet, w: &Word, dom: &Interval, grid: usize, track: Option<&Interval>) -> std::result::Result<(f64, f64), f64> {
    let rows = par_map(&dom.grid(grid), |&x| {
        let mut j = Jet3::identity(x);
        for &l in w.letters().iter().rev() {
            if let Some(t) = track {
                if !t.contains(j.value, 0.0) {
                    return Err(j.value);
                }
            }
            j = j.then(gens.letter_map(l).jet_lift(j.value));
        }
        Ok((circ_diff(j.value, x).abs(), (j.d1 - 1.0).abs()))
    });
    let mut c0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for r in rows {
        let (a, b) = r?;
        c0 = c0.max(a);
        d1 = d1.max(b);
    }
    Ok((c0, c0.max(d1)))
}

/// Iterates `f_{k+2} = [f_k, f_{k+1}]` and measures the distance to the
/// identity on `interval`.
pub fn commutator_probe(f1: &CircleMap, f2: &CircleMap, interval: &Interval, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let gens = GeneratorSet::new(vec![GeneratorSpec::new("f1", f1.clone()), GeneratorSpec::new("f2", f2.clone())])?;
    let track = cfg.enlarge.map(|e| interval.shrink(e));
    let mut words = vec![Word::letter(Letter::new(0, false)), Word::letter(Letter::new(1, false))];
    let mut steps = Vec::new();
    let mut escape = None;
    let mut trivialized = None;
    let mut extra = None;
    let measure = |w: &Word| word_distances(&gens, w, interval, cfg.grid, track.as_ref());
    for (k, w) in words.iter().enumerate() {
        match measure(w) {
            Ok((c0, c1)) => steps.push(ProbeStep { k: k + 1, word_len: w.len(), c0, c1 }),
            Err(p) => {
                escape = Some(format!("f{} moves {p} out of the tracked interval", k + 1));
                break;
            }
        }
    }
    let initial_max = steps.iter().map(|s| s.c1).fold(0.0, f64::max);
    if escape.is_none() {
        for step in 1..=cfg.steps {
            let n = words.len();
            let w = commutator(&words[n - 2], &words[n - 1]);
            words.push(w);
            let k = step + 2;
            match measure(&words[k - 1]) {
                Ok((c0, c1)) => steps.push(ProbeStep { k, word_len: words[k - 1].len(), c0, c1 }),
                Err(p) => {
                    escape = Some(format!("step {step}: point {p} left the tracked interval"));
                    break;
                }
            }
            if steps.last().unwrap().c1 <= cfg.identity_tol {
                trivialized = Some(step);
                let next = commutator(&words[k - 2], &words[k - 1]);
                extra = Some(matches!(measure(&next), Ok((_, c1)) if c1 <= cfg.identity_tol));
                break;
            }
        }
    }
    let comm: Vec<f64> = steps.iter().filter(|s| s.k >= 3).map(|s| s.c1).collect();
    let mut decay_steps = 0;
    let mut prev = f64::INFINITY;
    for s in &steps {
        if s.c1 < prev && s.c1 > cfg.identity_tol {
            decay_steps += 1;
            prev = s.c1;
        } else {
            break;
        }
    }
    let monotone = comm.windows(2).all(|w| w[1] < w[0]) && comm.first().is_some_and(|&d| d < initial_max);
    let verdict = if let Some(step) = trivialized {
        ProbeVerdict::Trivialized { step }
    } else if comm.iter().any(|&d| d > initial_max) {
        ProbeVerdict::NonConverging
    } else if escape.is_none() && monotone && comm.last().is_some_and(|&d| d < cfg.eps0 / 4.0) {
        ProbeVerdict::Converging
    } else {
        ProbeVerdict::Inconclusive
    };
    Ok(ProbeReport {
        interval: *interval,
        config: cfg.clone(),
        steps,
        initial_max,
        verdict,
        extra_step_identity: extra,
        decay_steps,
        escape,
    })
}
