use bpda::alphabet::Alphabet;
use bpda::bpda::Bpda;
use bpda::compiler::compile;
use bpda::constructions::{make_dyck, make_ngram, ReadoutSource};
use bpda::lm::LanguageModel;
use bpda::oracle::{compare, enumerate_probs, for_each_string};
use bpda::pfsa::{bpda_to_pfsa, pfsa_to_bpda, Arc, Pfsa};
use bpda::stack::{SlotVector, StackConfig, StackSpace};
use bpda::structure::solve_stack_affine;
use proptest::prelude::*;

/// Row-normalises raw positive weights: per state, one entry per symbol-target
/// pair plus a final weight.
fn random_pfsa(states: usize, symbols: usize, raw: &[f64], initial: &[f64]) -> Pfsa {
    let per_state = symbols * states + 1;
    let mut arcs = Vec::new();
    let mut finals = Vec::new();
    for q in 0..states {
        let row = &raw[q * per_state..(q + 1) * per_state];
        let total: f64 = row.iter().sum();
        for y in 0..symbols {
            for t in 0..states {
                let w = row[y * states + t];
                if w > 0.0 {
                    arcs.push(Arc { from: q, symbol: y, weight: w / total, to: t });
                }
            }
        }
        finals.push(row[per_state - 1] / total);
    }
    let init_total: f64 = initial[..states].iter().sum();
    Pfsa::new(
        Alphabet::from_chars(&"ab"[..symbols]).unwrap(),
        (0..states).map(|q| format!("q{q}")).collect(),
        arcs,
        initial[..states].iter().map(|w| w / init_total).collect(),
        finals,
    )
    .unwrap()
}

fn pfsa_strategy() -> impl Strategy<Value = Pfsa> {
    (1usize..=4, 1usize..=2).prop_flat_map(|(n, k)| {
        let weight = prop_oneof![1 => Just(0.0), 3 => 0.05f64..1.0];
        (
            Just(n),
            Just(k),
            prop::collection::vec(weight, n * (k * n + 1)),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(|(n, k, mut raw, init)| {
                // every state keeps some final mass
                let per_state = k * n + 1;
                for q in 0..n {
                    raw[q * per_state + per_state - 1] += 0.05;
                }
                random_pfsa(n, k, &raw, &init)
            })
    })
}

/// Sum over every state path of initial · arcs · final.
fn path_sum(p: &Pfsa, s: &[usize]) -> f64 {
    let n = p.states().len();
    let weight = |from: usize, y: usize, to: usize| {
        p.arcs()
            .iter()
            .find(|a| a.from == from && a.symbol == y && a.to == to)
            .map_or(0.0, |a| a.weight)
    };
    let paths = n.pow(s.len() as u32 + 1);
    let mut total = 0.0;
    for code in 0..paths {
        let mut c = code;
        let path: Vec<usize> = (0..=s.len())
            .map(|_| {
                let q = c % n;
                c /= n;
                q
            })
            .collect();
        let mut w = p.initial()[path[0]];
        for (t, &y) in s.iter().enumerate() {
            w *= weight(path[t], y, path[t + 1]);
        }
        total += w * p.final_weights()[path[s.len()]];
    }
    total
}

/// Deterministic BPDA over Γ = {x, y} with m = 2 and arbitrary targets.
fn bpda_strategy() -> impl Strategy<Value = Bpda> {
    let space = StackSpace::new(2, 2).unwrap();
    let configs = space.configurations(100).unwrap();
    let c = configs.len();
    (
        0..c,
        prop::collection::vec(0..c, c * 2),
        prop::collection::vec(0.05f64..1.0, c * 3),
    )
        .prop_map(move |(start, targets, raw)| {
            let mut b = Bpda::new(Alphabet::from_chars("ab").unwrap(), Alphabet::from_chars("xy").unwrap(), 2)
                .unwrap();
            b.set_initial(configs[start].clone(), 1.0).unwrap();
            for (i, from) in configs.iter().enumerate() {
                let w = &raw[i * 3..i * 3 + 3];
                let total: f64 = w.iter().sum();
                for y in 0..2 {
                    b.add_transition(from.clone(), y, configs[targets[i * 2 + y]].clone(), w[y] / total)
                        .unwrap();
                }
                b.set_final(from.clone(), w[2] / total).unwrap();
            }
            b
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn stringsum_matches_path_enumeration(p in pfsa_strategy()) {
        for (s, prob) in enumerate_probs(&p, 4).unwrap() {
            prop_assert!((p.stringsum(&s) - path_sum(&p, &s)).abs() <= 1e-12);
            prop_assert!((prob - p.stringsum(&s)).abs() <= 1e-12);
        }
    }

    #[test]
    fn pfsa_bpda_round_trip(p in pfsa_strategy()) {
        let b = pfsa_to_bpda(&p).unwrap();
        prop_assert!(compare(&p, &b, 5, 1e-12).unwrap().passed());
        let back = bpda_to_pfsa(&b, false, 4096).unwrap();
        prop_assert!(compare(&p, &back, 5, 1e-12).unwrap().passed());
        prop_assert_eq!(b.validate().is_probabilistic, p.validate().is_probabilistic);
        prop_assert_eq!(b.is_deterministic(), p.is_deterministic());
    }

    #[test]
    fn pruning_unreachable_configurations_preserves_the_lm(b in bpda_strategy()) {
        let full = bpda_to_pfsa(&b, false, 4096).unwrap();
        let pruned = bpda_to_pfsa(&b, true, 4096).unwrap();
        prop_assert_eq!(full.states().len(), 7);
        prop_assert_eq!(pruned.states().len(), b.reachable_configs(4096).unwrap().len());
        prop_assert!(compare(&full, &pruned, 6, 1e-12).unwrap().passed());
        prop_assert!(compare(&b, &pruned, 6, 1e-12).unwrap().passed());
    }

    #[test]
    fn single_run_equals_forward_sum(b in bpda_strategy()) {
        for (s, _) in enumerate_probs(&b, 5).unwrap() {
            prop_assert!((b.string_prob(&s) - b.string_prob_forward(&s)).abs() <= 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved(p in pfsa_strategy(), b in bpda_strategy()) {
        prop_assert!(p.validate().is_probabilistic);
        prop_assert!(b.validate().is_probabilistic);
        let mut ok = true;
        for_each_string(&p, 4, |_, state| {
            if let Some(d) = p.next_dist(state) {
                ok &= (d.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
            }
        }).unwrap();
        prop_assert!(ok);
        // Σ_{|y| ≤ L} p(y) never exceeds one and grows with L
        let mut previous = 0.0;
        for len in 0..=6 {
            let total: f64 = enumerate_probs(&b, len).unwrap().iter().map(|(_, q)| q).sum();
            prop_assert!(total <= 1.0 + 1e-12);
            prop_assert!(total >= previous - 1e-12);
            previous = total;
        }
    }

    #[test]
    fn compiled_networks_are_normalised(seed in any::<u64>(), dyck in any::<bool>()) {
        let sigma = Alphabet::from_chars("ab").unwrap();
        let (bpda, cert) = if dyck {
            make_dyck(1, 2, &ReadoutSource::Seed(seed)).unwrap()
        } else {
            make_ngram(2, &sigma, &ReadoutSource::Seed(seed)).unwrap()
        };
        let lm = compile(&bpda, &cert).unwrap().lm;
        let mut ok = true;
        for_each_string(&lm, 5, |_, state| {
            let d = lm.next_dist(state).unwrap();
            ok &= (d.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && d.iter().all(|&x| x > 0.0);
        }).unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn solved_affine_maps_reproduce_their_tables(
        symbols in 1usize..=4,
        bound in 1usize..=3,
        outputs in prop::collection::vec(prop::collection::vec(0usize..5, 3), 200),
    ) {
        let space = StackSpace::new(symbols, bound).unwrap();
        let configs = space.configurations(4096).unwrap();
        let table: Vec<(StackConfig, SlotVector)> = configs.iter().zip(outputs.iter().cycle()).map(|(c, o)| {
            let slots = (0..bound).map(|i| o[i].checked_sub(1).filter(|&s| s < symbols)).collect();
            (c.clone(), SlotVector(slots))
        }).collect();
        if let Ok(map) = solve_stack_affine(&space, &table) {
            for (c, out) in &table {
                let got = map.apply(&space.chi_f64(c));
                let want = space.chi_slots(out);
                prop_assert!(got.iter().zip(&want).all(|(g, &w)| *g == w as f64));
            }
        }
    }

    #[test]
    fn shift_tables_are_always_solved(symbols in 1usize..=4, bound in 1usize..=3, op in 0usize..3, s in 0usize..4) {
        let space = StackSpace::new(symbols, bound).unwrap();
        let s = s % symbols;
        let table: Vec<(StackConfig, SlotVector)> = space.configurations(4096).unwrap().into_iter().map(|c| {
            let slots = space.slots(&c).0;
            // slot 0 is the bottom, slot m-1 the top
            let out = match op {
                0 => slots.clone(),
                1 => slots[1..].iter().copied().chain([Some(s)]).collect(),
                _ => [None].into_iter().chain(slots[..bound - 1].iter().copied()).collect(),
            };
            (c, SlotVector(out))
        }).collect();
        prop_assert!(solve_stack_affine(&space, &table).is_ok());
    }
}

#[test]
fn path_oracle_on_a_nondeterministic_machine() {
    let sigma = Alphabet::from_chars("a").unwrap();
    let arcs = vec![
        Arc { from: 0, symbol: 0, weight: 0.25, to: 0 },
        Arc { from: 0, symbol: 0, weight: 0.25, to: 1 },
        Arc { from: 1, symbol: 0, weight: 0.5, to: 1 },
    ];
    let p = Pfsa::new(sigma, vec!["p".into(), "q".into()], arcs, vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
    assert!(!p.is_deterministic());
    // a: 0.25·0.5 + 0.25·0.5
    assert_eq!(path_sum(&p, &[0]), 0.25);
    assert_eq!(p.stringsum(&[0]), 0.25);
}
