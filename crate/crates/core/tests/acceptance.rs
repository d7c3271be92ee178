use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use circlelab::amalgam::{commutator_chain, conjugate_pair, AmalgamPresentation, Elem, Factor, FiniteGroup, Syllable};
use circlelab::circlemap::{
    integral_nonlinearity, integral_nonlinearity_quadrature, koenigs_chart, CircleMap, GeneratorSet, Interval, Mobius,
};
use circlelab::discreteness::{commutator_probe, ProbeConfig, ProbeVerdict};
use circlelab::endsenergy::{
    build_projective_atlas, check_q_pair, detect_gaps, end_limit, energy_series, gap_records, gap_stabilizer,
    nonl_increment_residual, point_stabilizer, projective_holonomy_test, q_increment_residual,
};
use circlelab::groupaction::{default_ball, orbit, stabilizer_probe, DEFAULT_ORBIT_CAP};
use circlelab::markov::{check_star, expand_point, expansion_stats, validate_partition};
use circlelab::scenario::{build_chart, build_generators, build_partition, builtin, parse_scenario, run_scenario, Scenario};
use circlelab::schreier::build_schreier;
use circlelab::Word;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHIPPED: [&str; 5] = ["psl2z", "schottky", "rotations", "perturbed-rotations", "perturbed-psl2z"];

fn scenario(name: &str) -> Scenario {
    parse_scenario(builtin(name).unwrap(), &[]).unwrap()
}

fn gens(name: &str) -> GeneratorSet {
    build_generators(&scenario(name)).unwrap()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn verdict(label: &str, ok: bool, detail: impl AsRef<str>) {
    println!("{label:<34}{}  {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "{label}: {}", detail.as_ref());
}

fn random_word(rng: &mut ChaCha8Rng, g: &GeneratorSet, max_len: usize) -> Word {
    let letters = g.letters();
    let n = rng.gen_range(1..=max_len);
    Word::from_letters((0..n).map(|_| letters[rng.gen_range(0..letters.len())]))
}

/// Richardson-extrapolated central differences of the lift of `m` at `x`,
/// with steps scaled by `s`.
fn finite_differences(m: &CircleMap, x: f64, s: f64) -> [f64; 3] {
    let f = |y: f64| m.lift(y);
    let d1 = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    let d3 = |h: f64| (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h.powi(3));
    let rich = |g: &dyn Fn(f64) -> f64, h: f64| (4.0 * g(h / 2.0) - g(h)) / 3.0;
    [rich(&d1, 1e-4 * s), rich(&d2, 2e-3 * s), rich(&d3, 1e-2 * s)]
}

#[test]
fn jet_calculus_matches_finite_differences() {
    let tols = [1e-5, 1e-4, 1e-2];
    let mut worst = [0.0f64; 3];
    for (k, name) in SHIPPED.iter().enumerate() {
        let g = gens(name);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        for _ in 0..100 {
            let w = random_word(&mut rng, &g, 6);
            let m = g.word_map(&w);
            for _ in 0..100 {
                let x: f64 = rng.gen();
                let j = g.word_jet(&w, x);
                let s = 1.0 / (1.0 + (j.d2 / j.d1).abs() + (j.d3 / j.d1).abs().sqrt());
                let fd = finite_differences(&m, x, s);
                for (i, jet) in [j.d1, j.d2, j.d3].into_iter().enumerate() {
                    worst[i] = worst[i].max((fd[i] - jet).abs() / jet.abs().max(1.0));
                }
            }
        }
    }
    let ok = (0..3).all(|i| worst[i] <= tols[i]);
    verdict("jet calculus", ok, format!("relative errors d1 {:.2e}, d2 {:.2e}, d3 {:.2e}", worst[0], worst[1], worst[2]));
}

#[test]
fn schwarzian_and_nonlinearity_cocycles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sets: Vec<GeneratorSet> = SHIPPED.iter().map(|n| gens(n)).collect();
    let (mut ws, mut wn) = (0.0f64, 0.0f64);
    for t in 0..1000 {
        let g = &sets[t % sets.len()];
        let (f, h) = (random_word(&mut rng, g, 3), random_word(&mut rng, g, 3));
        let x: f64 = rng.gen();
        let jh = g.word_jet(&h, x);
        let jf = g.word_jet(&f, jh.value);
        let jfh = g.word_jet(&f.mul(&h), x);
        let s = jf.schwarzian() * jh.d1 * jh.d1 + jh.schwarzian();
        let n = jf.nonlinearity() * jh.d1 + jh.nonlinearity();
        ws = ws.max((jfh.schwarzian() - s).abs() / s.abs().max(1.0));
        wn = wn.max((jfh.nonlinearity() - n).abs() / n.abs().max(1.0));
    }
    // Möbius maps in the projective chart, and the circle-coordinate form
    // 2π²(1 − g'²) of their Schwarzian.
    let (mut wp, mut wc) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b, c) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        if f64::abs(a) < 0.1 {
            continue;
        }
        let m = Mobius::new([a, b, c, (1.0 + b * c) / a]).unwrap();
        // Points where the map is finite; at the pole every term of S blows up.
        let t: f64 = loop {
            let t = rng.gen_range(-5.0..5.0);
            if (c * t + (1.0 + b * c) / a).abs() >= 0.25 {
                break t;
            }
        };
        wp = wp.max(m.jet_projective(t).schwarzian().abs());
        let j = m.jet_lift(rng.gen());
        wc = wc.max((j.schwarzian() - 2.0 * PI * PI * (1.0 - j.d1 * j.d1)).abs() / j.d1.powi(2).max(1.0));
    }
    let ok = ws < 1e-9 && wn < 1e-9 && wp < 1e-10 && wc < 1e-9;
    verdict(
        "cocycles",
        ok,
        format!("Schwarzian {ws:.2e}, nonlinearity {wn:.2e}, projective Möbius {wp:.2e}, circle Möbius {wc:.2e}"),
    );
}

#[test]
fn closed_form_nonlinearity_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sets: Vec<GeneratorSet> = SHIPPED.iter().map(|n| gens(n)).collect();
    let mut worst = 0.0f64;
    for t in 0..100 {
        let g = &sets[t % sets.len()];
        let m = g.word_map(&random_word(&mut rng, g, 4));
        let j = Interval::new(rng.gen(), rng.gen_range(0.01..0.4)).unwrap();
        let closed = integral_nonlinearity(&m, &j);
        let quad = integral_nonlinearity_quadrature(&m, &j, 1e-11);
        worst = worst.max((closed - quad).abs());
    }
    verdict("closed-form ∫N", worst < 1e-8, format!("max |closed − quadrature| = {worst:.2e} over 100 pairs"));
}

/// Components of `T ∖ B(r)` inside `B(R)` that reach the sphere of radius
/// `R`, in the Cayley tree of the free group of rank 2.
fn free_tree_ends(r: usize, big_r: usize) -> usize {
    let letters: [i8; 4] = [1, -1, 2, -2];
    let mut sphere: Vec<Vec<i8>> = vec![Vec::new()];
    let mut all: Vec<Vec<i8>> = vec![Vec::new()];
    for _ in 0..big_r {
        let mut next = Vec::new();
        for w in &sphere {
            for &l in &letters {
                if w.last() != Some(&-l) {
                    let mut v = w.clone();
                    v.push(l);
                    next.push(v);
                }
            }
        }
        all.extend(next.iter().cloned());
        sphere = next;
    }
    let index: HashMap<&Vec<i8>, usize> = all.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let mut parent: Vec<usize> = (0..all.len()).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, w) in all.iter().enumerate() {
        if w.len() > r + 1 {
            let j = index[&w[..w.len() - 1].to_vec()];
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a] = b;
        }
    }
    let roots: HashSet<usize> =
        (0..all.len()).filter(|&i| all[i].len() == big_r).map(|i| find(&mut parent, i)).collect();
    roots.len()
}

#[test]
fn schreier_ends_match_tree_oracle() {
    let s = scenario("schottky");
    let g = build_generators(&s).unwrap();
    let o = orbit(&g, s.ends.x0.unwrap(), 7, s.ends.tol, DEFAULT_ORBIT_CAP).unwrap();
    let sg = build_schreier(&o, &g);
    let mut got = Vec::new();
    let mut want = Vec::new();
    for r in 0..=3 {
        got.push(sg.ends_estimate(r, r + 3).unwrap().components);
        want.push(free_tree_ends(r, r + 3));
    }
    let closed: Vec<usize> = (0..=3).map(|r| 4 * 3usize.pow(r)).collect();

    let line = GeneratorSet::new(vec![circlelab::circlemap::GeneratorSpec::new("r", CircleMap::rotation(0.5f64.sqrt()))])
        .unwrap();
    let lo = orbit(&line, 0.0, 8, 1e-9, DEFAULT_ORBIT_CAP).unwrap();
    let line_ends = build_schreier(&lo, &line).ends_estimate(2, 5).unwrap().components;
    let fin = GeneratorSet::new(vec![circlelab::circlemap::GeneratorSpec::new("r", CircleMap::rotation(1.0 / 3.0))])
        .unwrap();
    let fo = orbit(&fin, 0.1, 8, 1e-9, DEFAULT_ORBIT_CAP).unwrap();
    let fin_ends = build_schreier(&fo, &fin).ends_estimate(2, 5).unwrap().components;

    let ok = got == want && want == closed && line_ends == 2 && fin_ends == 0;
    verdict(
        "ends oracle",
        ok,
        format!("Schottky {got:?}, tree oracle {want:?}, line {line_ends}, finite orbit {fin_ends}"),
    );
}

type M2 = [i64; 4];

fn mat_mul(a: M2, b: M2) -> M2 {
    [a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]]
}

/// Sign-normalized integer matrix, an exact invariant of PSL(2,Z).
fn projectivize(m: M2) -> M2 {
    let first = m.iter().find(|&&v| v != 0).copied().unwrap_or(1);
    if first < 0 {
        m.map(|v| -v)
    } else {
        m
    }
}

const S_MAT: M2 = [0, -1, 1, 0];
const U_MAT: M2 = [0, -1, 1, 1];
const U_INV: M2 = [1, 1, -1, 0];

/// Matrix of a word over the generators `S`, `U` of the modular group.
fn word_matrix(w: &Word) -> M2 {
    w.letters().iter().fold([1, 0, 0, 1], |acc, l| {
        let m = match (l.gen, l.inv) {
            (0, _) => S_MAT,
            (1, false) => U_MAT,
            (1, true) => U_INV,
            _ => unreachable!(),
        };
        mat_mul(acc, m)
    })
}

fn syllable_matrix(s: &Syllable) -> M2 {
    match s {
        (0, Elem::Fin(1)) => S_MAT,
        (1, Elem::Fin(1)) => U_MAT,
        (1, Elem::Fin(2)) => U_INV,
        _ => [1, 0, 0, 1],
    }
}

fn all_syllable_words(max_len: usize) -> Vec<Vec<Syllable>> {
    let alphabet: [Syllable; 3] = [(0, Elem::Fin(1)), (1, Elem::Fin(1)), (1, Elem::Fin(2))];
    let mut out = vec![Vec::new()];
    let mut layer: Vec<Vec<Syllable>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for a in &alphabet {
                let mut v = w.clone();
                v.push(a.clone());
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

#[test]
fn amalgam_normal_forms_match_matrix_oracle() {
    let pres = AmalgamPresentation::z2_z3();
    let words = all_syllable_words(5);
    let nfs: Vec<_> = words.iter().map(|w| pres.normal_form(w).unwrap()).collect();
    let mats: Vec<M2> =
        words.iter().map(|w| projectivize(w.iter().fold([1, 0, 0, 1], |a, s| mat_mul(a, syllable_matrix(s))))).collect();
    let mut disagreements = 0usize;
    for i in 0..words.len() {
        for j in i..words.len() {
            if (nfs[i] == nfs[j]) != (mats[i] == mats[j]) {
                disagreements += 1;
            }
        }
    }
    let rho_asym = all_syllable_words(6)
        .iter()
        .filter(|w| {
            let nf = pres.normal_form(w).unwrap();
            nf.rho() != pres.inverse(&nf).rho()
        })
        .count();

    let z = FiniteGroup::trivial();
    let g1 = Factor::free(vec!["a".into()]);
    let g2 = Factor::finite(FiniteGroup::cyclic(2, "s"), vec![0], vec![0, 1], &z).unwrap();
    let chain_pres = AmalgamPresentation::new(z, g1, g2).unwrap();
    let p = |t: &str| chain_pres.parse(t).unwrap();
    let (f1, f2, _) = conjugate_pair(&chain_pres, &p("s a^2 s"), &p("a^5"), &p("s"), &p("a^7"), &p("a")).unwrap();
    let chain = commutator_chain(&chain_pres, &f1, &f2, 10, 1_000_000);
    let rhos: Vec<usize> = chain.steps.iter().map(|s| s.rho).collect();
    let chain_ok = chain.aborted.is_none() && chain.steps.len() == 10 && chain.all_nontrivial() && chain.min_rho() >= Some(4);

    verdict(
        "amalgam exactness",
        disagreements == 0 && rho_asym == 0 && chain_ok,
        format!(
            "{} words ≤ 5, {disagreements} disagreements; ϱ asymmetries {rho_asym}; chain ϱ {rhos:?}",
            words.len()
        ),
    );
}

#[test]
fn modular_group_cusp_is_non_expandable() {
    let g = gens("psl2z");
    let b12 = default_ball(&g, 12).unwrap();
    let max_d = b12.words().iter().map(|w| g.word_derivative(w, 0.0)).fold(0.0, f64::max);

    let star = check_star(&g, 0.0, 2, 0.05).unwrap();
    let t = projectivize([1, 1, 0, 1]);
    let t_inv = projectivize([1, -1, 0, 1]);
    let (mp, mm) = (projectivize(word_matrix(&star.plus)), projectivize(word_matrix(&star.minus)));
    let star_ok = star.plus.len() <= 2 && star.minus.len() <= 2 && [mp, mm].contains(&t) && [mp, mm].contains(&t_inv);

    // Integer oracle: ball elements fixing the cusp are exactly those with c = 0.
    let rep = stabilizer_probe(&g, 0.0, 6, 1e-9).unwrap();
    let found: HashSet<M2> = rep.words.iter().map(|w| projectivize(word_matrix(w))).collect();
    let oracle: HashSet<M2> = default_ball(&g, 6)
        .unwrap()
        .words()
        .iter()
        .map(|w| projectivize(word_matrix(w)))
        .filter(|m| m[2] == 0 && *m != [1, 0, 0, 1])
        .collect();
    let powers_ok = found.iter().all(|m| m[0] == 1 && m[3] == 1 && m[2] == 0) && found == oracle && rep.infinite_cyclic();
    let mut ks: Vec<i64> = found.iter().map(|m| m[1]).collect();
    ks.sort();

    verdict(
        "modular group NE suite",
        max_d <= 1.0 + 1e-9 && star_ok && powers_ok,
        format!(
            "max g'(cusp) on B(12) ({} elements) = {max_d:.12}; (★) {} / {}; stabilizer T^k, k ∈ {ks:?}",
            b12.len(),
            g.format_word(&star.plus),
            g.format_word(&star.minus)
        ),
    );
}

fn syllables_to_word(g: &GeneratorSet, w: &[Syllable]) -> Word {
    let (s, u) = (g.generator("S").unwrap(), g.generator("U").unwrap());
    Word::from_letters(w.iter().filter_map(|syl| match syl {
        (0, Elem::Fin(1)) => Some(s),
        (1, Elem::Fin(1)) => Some(u),
        (1, Elem::Fin(2)) => Some(u.inverse()),
        _ => None,
    }))
}

#[test]
fn schwarzian_energy_is_well_defined() {
    let g = gens("psl2z");
    let pres = AmalgamPresentation::z2_z3();
    let stab = point_stabilizer(&g, 0.0, 6, 1e-9).unwrap();
    let b = g.word_jet(&stab.h, 0.0).schwarzian();
    let t_syl: Vec<Syllable> = pres.parse("s u").unwrap();
    let t_inv: Vec<Syllable> = pres.parse("u^2 s").unwrap();
    let mut seen = HashSet::new();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for w in all_syllable_words(4) {
        let nf = pres.normal_form(&w).unwrap();
        if !seen.insert(nf.clone()) {
            continue;
        }
        for k in [-2i32, -1, 1, 2] {
            let mut v = pres.to_word(&nf);
            for _ in 0..k.abs() {
                v.extend(if k > 0 { t_syl.clone() } else { t_inv.clone() });
            }
            let other = pres.normal_form(&v).unwrap();
            assert_ne!(other, nf);
            let (w1, w2) = (syllables_to_word(&g, &pres.to_word(&nf)), syllables_to_word(&g, &pres.to_word(&other)));
            worst = worst.max(check_q_pair(&g, &stab, &w1, &w2, f64::INFINITY).unwrap());
            pairs += 1;
        }
    }
    let o = orbit(&g, 0.0, 8, 1e-9, DEFAULT_ORBIT_CAP).unwrap();
    let mut inc = 0.0f64;
    for p in o.points.iter().filter(|p| p.distance < 8) {
        for l in g.letters() {
            inc = inc.max(q_increment_residual(&g, &stab, Some(&o), &p.witness, l));
        }
    }
    verdict(
        "Q well-definedness",
        pairs >= 50 && worst < 1e-6 && inc < 1e-9 && (b - stab.b).abs() < 1e-12,
        format!("{pairs} pairs, worst distance to bℤ {worst:.2e} (b = {b:.3e}); increment residual {inc:.2e}"),
    );
}

/// Cusps `p/q` of the modular group by Schreier-graph distance from `∞`,
/// with `E = 1/(p² + q²)`.
fn cusp_shell_increments(radius: usize) -> Vec<f64> {
    fn norm((p, q): (i64, i64)) -> (i64, i64) {
        if q < 0 || (q == 0 && p < 0) {
            (-p, -q)
        } else {
            (p, q)
        }
    }
    let moves = [
        |(p, q): (i64, i64)| (-q, p),
        |(p, q): (i64, i64)| (-q, p + q),
        |(p, q): (i64, i64)| (-p - q, p),
    ];
    let mut seen: HashSet<(i64, i64)> = HashSet::from([(1, 0)]);
    let mut layer = vec![(1i64, 0i64)];
    let mut out = vec![1.0];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &c in &layer {
            for m in &moves {
                let d = norm(m(c));
                if seen.insert(d) {
                    next.push(d);
                }
            }
        }
        out.push(next.iter().map(|&(p, q)| 1.0 / ((p * p + q * q) as f64).powi(2)).sum());
        layer = next;
    }
    out
}

#[test]
fn energy_series_matches_rational_oracle() {
    let g = gens("psl2z");
    let o = orbit(&g, 0.0, 10, 1e-9, DEFAULT_ORBIT_CAP).unwrap();
    let s = energy_series(&g, &o);
    let oracle = cusp_shell_increments(10);
    let diff = s.increments.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let monotone = s.partial_sums.windows(2).all(|w| w[1] >= w[0]);
    let decay = s.increments[1..].windows(2).all(|w| w[1] <= w[0] + 1e-15) && s.increments[10] < 0.01;
    let rot = gens("rotations");
    let ro = orbit(&rot, 0.0, 10, 1e-9, DEFAULT_ORBIT_CAP).unwrap();
    let rs = energy_series(&rot, &ro);
    let rot_monotone = rs.partial_sums.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        "energy series",
        s.increments.len() == 11 && diff < 1e-9 && monotone && decay && rot_monotone,
        format!("shells {:?}, max |increment − oracle| {diff:.2e}, Σ to radius 10 = {:.5}", s.shell_sizes, s.partial_sums[10]),
    );
}

#[test]
fn duminy_gap_energy_converges_along_rays() {
    let s = scenario("schottky");
    let c = s.duminy.clone().unwrap();
    let g = build_generators(&s).unwrap();
    let closure = orbit(&g, c.seed, c.closure_radius, c.tol, DEFAULT_ORBIT_CAP).unwrap();
    let gaps = detect_gaps(&closure, c.cell, c.min_len).unwrap();
    let stab = gap_stabilizer(&g, &gaps.gaps[0], c.stabilizer_radius, c.slack).unwrap();
    let o = orbit(&g, stab.base, c.orbit_radius, c.tol, DEFAULT_ORBIT_CAP).unwrap();
    let recs = gap_records(&g, &o, &stab).unwrap();
    let sg = build_schreier(&o, &g);
    let mut tails = Vec::new();
    let mut cauchy = true;
    for f in &c.rays {
        let ray = sg.contracting_ray(&o, &g, &g.parse_word(f).unwrap()).unwrap();
        let vals: Vec<f64> = ray.iter().map(|&v| recs[v].qmod.unwrap()).collect();
        let lim = end_limit(&vals, stab.b).unwrap();
        cauchy &= lim.cauchy && lim.tail < 1e-3;
        tails.push(lim.tail);
    }
    let mut inc = 0.0f64;
    for p in o.points.iter().filter(|p| p.distance < c.orbit_radius) {
        for l in g.letters() {
            inc = inc.max(nonl_increment_residual(&g, &stab, Some(&o), &p.witness, l).unwrap());
        }
    }
    verdict(
        "Duminy suite",
        c.rays.len() >= 3 && cauchy && inc < 1e-9,
        format!("{} gaps, h = {}, ray tails {}, increment residual {inc:.2e}", gaps.gaps.len(), stab.h_text, sci(&tails)),
    );
}

const PINNED_C0: f64 = 0.37843643572024765;

#[test]
fn farey_partition_validates_and_expands() {
    let s = scenario("psl2z");
    let g = build_generators(&s).unwrap();
    let cfg = s.markov.clone().unwrap();
    let base = validate_partition(&build_partition(&cfg, &g).unwrap(), 1024, cfg.repel_margin).unwrap();
    let failed = |sets: &[&str]| -> Vec<&'static str> {
        let sc = parse_scenario(builtin("psl2z").unwrap(), &sets.iter().map(|x| x.to_string()).collect::<Vec<_>>()).unwrap();
        let m = sc.markov.unwrap();
        validate_partition(&build_partition(&m, &g).unwrap(), 1024, m.repel_margin).unwrap().failed_items()
    };
    // Moving the breakpoint at t = -2 moves the shared endpoint of two atoms.
    let f1 = failed(&["markov.atoms.0.t=[-inf, -2.1]", "markov.atoms.1.t=[-2.1, -1.0]"]);
    let f2 = failed(&["markov.lambda=2.05"]);
    let f3 = failed(&["markov.atoms.0.word=S U S U S U"]);
    let targeted = f1 == ["i"] && f2 == ["ii"] && f3 == ["iii"];

    // Item (iv) dominates item (ii) on this partition, so no λ isolates it.
    let v = |it: &str| base.items.iter().find(|r| r.item == it).unwrap().worst_value;
    let iv_dominated = v("iv") >= v("ii");

    let p = build_partition(&cfg, &g).unwrap();
    let mut xs: Vec<f64> = Vec::new();
    for &x in &p.ne_points {
        xs.extend(orbit(&g, x, 6, 1e-9, DEFAULT_ORBIT_CAP).unwrap().points.iter().map(|q| q.position));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let res: Vec<_> = xs.iter().map(|&x| expand_point(&p, &g, x, 64).unwrap()).collect();
    let st = expansion_stats(&res, p.lambda, p.endpoint_tol);
    let pinned = ((st.c0 - PINNED_C0) / PINNED_C0).abs() < 1e-9;
    let expansion_ok = st.derivative_growth_ok && st.overlapping_levels.is_empty() && st.c0.is_finite() && pinned;

    verdict(
        "Markov suite",
        base.all_pass() && targeted && iv_dominated && expansion_ok,
        format!(
            "items {:?} at grid 1024; perturbations fail {f1:?} {f2:?} {f3:?}; (iv) min {:.4} ≥ (ii) min {:.4} \
             so (iv) has no isolating perturbation; {} points, max level {}, C0 {:.6}",
            base.items.iter().map(|r| (r.item, r.pass)).collect::<Vec<_>>(),
            v("iv"),
            v("ii"),
            st.points,
            st.max_level,
            st.c0
        ),
    );
}

/// A single-field perturbation of the shipped partition that fails exactly
/// item (iv). None exists for the Farey partition: every word of B(5) at
/// every atom and every λ was tried. Kept red on purpose.
#[test]
#[ignore = "no single-field perturbation of the Farey partition fails only item (iv)"]
fn partition_item_iv_has_isolating_perturbation() {
    let s = scenario("psl2z");
    let g = build_generators(&s).unwrap();
    let ball = default_ball(&g, 5).unwrap();
    let mut isolating = Vec::new();
    for atom in 0..8 {
        for w in ball.words() {
            let set = format!("markov.atoms.{atom}.word={}", g.format_word(w));
            let sc = parse_scenario(builtin("psl2z").unwrap(), std::slice::from_ref(&set)).unwrap();
            let m = sc.markov.unwrap();
            if let Ok(r) = validate_partition(&build_partition(&m, &g).unwrap(), 256, m.repel_margin) {
                if r.failed_items() == ["iv"] {
                    isolating.push(set);
                }
            }
        }
    }
    let cfg = s.markov.unwrap();
    let base = validate_partition(&build_partition(&cfg, &g).unwrap(), 1024, cfg.repel_margin).unwrap();
    let v = |it: &str| base.items.iter().find(|r| r.item == it).unwrap().worst_value;
    if v("iv") < v("ii") {
        isolating.push(format!("markov.lambda={}", 0.5 * (v("iv") + v("ii"))));
    }
    verdict("item (iv) isolation", !isolating.is_empty(), format!("isolating perturbations: {isolating:?}"));
}

const PINNED_DECAY: [f64; 5] = [1e-2, 8e-3, 7.448e-4, 2.464e-5, 1.011e-8];

#[test]
fn commutator_probe_verdicts() {
    let probe = |name: &str| {
        let s = scenario(name);
        let g = build_generators(&s).unwrap();
        let c = s.probe.unwrap();
        let f1 = g.word_map(&g.parse_word(&c.f1).unwrap());
        let f2 = g.word_map(&g.parse_word(&c.f2).unwrap());
        let cfg = ProbeConfig { steps: c.steps, eps0: c.eps0, enlarge: c.enlarge, grid: c.grid, identity_tol: c.identity_tol };
        commutator_probe(&f1, &f2, &Interval::new(c.interval[0], c.interval[1]).unwrap(), &cfg).unwrap()
    };
    let rot = probe("rotations");
    let rot_ok = rot.verdict == ProbeVerdict::Trivialized { step: 1 } && rot.extra_step_identity == Some(true);

    let sch = probe("schottky");
    let far = sch.steps.iter().skip(2).map(|s| s.c0).fold(0.0, f64::max);
    let sch_ok = sch.verdict == ProbeVerdict::NonConverging && sch.steps.len() <= 8 && far >= 0.1;

    let pert = probe("perturbed-rotations");
    let c1: Vec<f64> = pert.steps.iter().map(|s| s.c1).collect();
    let pinned = PINNED_DECAY.iter().zip(&c1).all(|(p, v)| ((v - p) / p).abs() < 1e-3);
    let pert_ok = pert.decay_steps >= 5 && pinned;

    verdict(
        "probe suite",
        rot_ok && sch_ok && pert_ok,
        format!(
            "rotations {:?}; Schottky {:?} with C0 up to {far:.3}; perturbed decay {} steps, C1 {}",
            rot.verdict, sch.verdict, pert.decay_steps, sci(&c1)
        ),
    );
}

#[test]
fn koenigs_chart_and_projective_atlas() {
    let s = scenario("psl2z");
    let g = build_generators(&s).unwrap();
    let cc = s.chart.clone().unwrap();
    let chart = build_chart(&cc, &g).unwrap();
    let residual = chart.residual();
    // The same chart built directly from the hyperbolic fixed point.
    let m = g.word_map(&g.parse_word(&cc.word).unwrap());
    let p = m.as_mobius().unwrap().fixed_points().into_iter().find(|&x| m.jet_lift(x).d1 < 1.0).unwrap();
    let direct = koenigs_chart(std::sync::Arc::new(m), p, cc.n_max, cc.tol).unwrap();
    let same_point = (direct.fixed_point() - chart.fixed_point()).abs() < 1e-9;

    let hol = s
        .holonomy
        .gammas
        .iter()
        .map(|w| projective_holonomy_test(&chart, &g.word_map(&g.parse_word(w).unwrap()), 64).unwrap().max_abs_schwarzian)
        .fold(0.0, f64::max);
    let atlas = build_projective_atlas(&g, s.atlas.max_charts, &chart, s.atlas.radius).unwrap();

    let ps = scenario("perturbed-psl2z");
    let pg = build_generators(&ps).unwrap();
    let pchart = build_chart(ps.chart.as_ref().unwrap(), &pg).unwrap();
    let patlas = build_projective_atlas(&pg, ps.atlas.max_charts, &pchart, ps.atlas.radius).unwrap();

    verdict(
        "Koenigs and atlas",
        residual < 1e-10 && same_point && hol < 1e-8 && atlas.generator_max < 1e-8 && patlas.generator_max > 1e-3,
        format!(
            "residual {residual:.2e}; holonomy {hol:.2e}; atlas generators {:.2e} (Möbius), {:.3e} (perturbed)",
            atlas.generator_max, patlas.generator_max
        ),
    );
}

#[test]
fn shipped_scenarios_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for name in SHIPPED {
        let s = scenario(name);
        let (a, b) = (dir.path().join(format!("{name}-1")), dir.path().join(format!("{name}-2")));
        run_scenario(&s, &a).unwrap();
        run_scenario(&s, &b).unwrap();
        let ra = std::fs::read(a.join("report.json")).unwrap();
        let rb = std::fs::read(b.join("report.json")).unwrap();
        if ra != rb {
            differing.push(name);
        }
    }
    verdict(
        "determinism",
        differing.is_empty(),
        format!("{} scenarios run twice, differing reports: {differing:?}", SHIPPED.len()),
    );
}
