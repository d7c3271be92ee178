use circlelab::amalgam::{AmalgamPresentation, Elem, Syllable};
use circlelab::circlemap::{circ_dist, CircleMap, GeneratorSet, GeneratorSpec};
use circlelab::endsenergy::energy;
use circlelab::groupaction::{default_ball, orbit};
use circlelab::scenario::{build_generators, builtin, parse_scenario};
use circlelab::{Letter, Word};
use proptest::prelude::*;

/// One Möbius and one trigonometric generator, far enough from rotations
/// that every jet term matters.
fn mixed() -> GeneratorSet {
    GeneratorSet::new(vec![
        GeneratorSpec::new("m", CircleMap::mobius([2.0, 1.0, 1.0, 1.0]).unwrap()),
        GeneratorSpec::new("f", CircleMap::trig(0.13, vec![0.04], vec![0.0, 0.01]).unwrap()),
    ])
    .unwrap()
}

fn schottky() -> GeneratorSet {
    build_generators(&parse_scenario(builtin("schottky").unwrap(), &[]).unwrap()).unwrap()
}

fn word(g: u16, max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec((0..g, any::<bool>()), 0..=max_len)
        .prop_map(|v| Word::from_letters(v.into_iter().map(|(gen, inv)| Letter { gen, inv })))
}

fn z2_z3_word(max_len: usize) -> impl Strategy<Value = Vec<Syllable>> {
    prop::collection::vec(prop_oneof![Just((0u8, 1usize)), (Just(1u8), 1usize..3)], 0..=max_len)
        .prop_map(|v| v.into_iter().map(|(i, x)| (i, Elem::Fin(x))).collect())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schwarzian_and_nonlinearity_are_cocycles(u in word(2, 4), v in word(2, 4), x in 0.0..1.0f64) {
        let g = mixed();
        let jv = g.word_jet(&v, x);
        let ju = g.word_jet(&u, jv.value);
        let juv = g.word_jet(&u.mul(&v), x);
        let s = ju.schwarzian() * jv.d1 * jv.d1 + jv.schwarzian();
        let n = ju.nonlinearity() * jv.d1 + jv.nonlinearity();
        prop_assert!(close(juv.schwarzian(), s, 1e-8), "{} vs {}", juv.schwarzian(), s);
        prop_assert!(close(juv.nonlinearity(), n, 1e-9));
    }

    #[test]
    fn inverse_words_cancel(w in word(2, 6), x in 0.0..1.0f64) {
        let g = mixed();
        let y = g.apply_word(&w.mul(&w.inverse()), x);
        prop_assert!(circ_dist(x, y) < 1e-10);
        let d = g.word_derivative(&w.inverse(), g.apply_word(&w, x)) * g.word_derivative(&w, x);
        prop_assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn energy_obeys_the_chain_rule(u in word(2, 3), v in word(2, 3)) {
        let g = schottky();
        let x0 = 0.1234567;
        let y = g.apply_word(&v, x0);
        let e = energy(&g, x0, &u.mul(&v));
        prop_assert!(close(e, g.word_derivative(&u, y) * energy(&g, x0, &v), 1e-10));
    }

    #[test]
    fn reduced_length_is_inverse_invariant(a in z2_z3_word(10), b in z2_z3_word(10)) {
        let p = AmalgamPresentation::z2_z3();
        let na = p.normal_form(&a).unwrap();
        let nb = p.normal_form(&b).unwrap();
        prop_assert_eq!(na.rho(), p.inverse(&na).rho());
        prop_assert!(p.mul(&na, &p.inverse(&na)).is_identity());
        let ab: Vec<Syllable> = a.iter().chain(b.iter()).cloned().collect();
        prop_assert_eq!(p.normal_form(&ab).unwrap(), p.mul(&na, &nb));
        prop_assert!(p.mul(&na, &nb).rho() <= na.rho() + nb.rho());
        prop_assert_eq!(p.normal_form(&p.to_word(&na)).unwrap(), na);
    }

    #[test]
    fn orbit_witnesses_reach_their_points(x0 in 0.0..1.0f64) {
        let g = schottky();
        let o = orbit(&g, x0, 4, 1e-11, 10_000).unwrap();
        prop_assert_eq!(o.len(), 1 + 4 + 12 + 36 + 108);
        for p in &o.points {
            prop_assert_eq!(p.witness.len(), p.distance);
            prop_assert!(circ_dist(g.apply_word(&p.witness, x0), p.position) < 1e-11);
        }
        for p in o.points.iter().filter(|p| p.distance < 4) {
            for l in g.letters() {
                prop_assert!(o.find(g.apply_word(&Word::letter(l), p.position)).is_some());
            }
        }
    }
}

#[test]
fn balls_grow_like_the_free_group() {
    let g = schottky();
    let b = default_ball(&g, 4).unwrap();
    let sizes: Vec<usize> = (0..=4).map(|k| b.sphere(k).len()).collect();
    assert_eq!(sizes, vec![1, 4, 12, 36, 108]);
    assert!((0..b.len()).all(|i| b.find(b.signature(i)) == Some(i)));
}
