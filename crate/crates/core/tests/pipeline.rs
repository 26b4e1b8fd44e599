use bpda::alphabet::Alphabet;
use bpda::bpda::Bpda;
use bpda::compiler::{check_single_copy, check_states, compile, CompileError, CopyState};
use bpda::constructions::{
    check_recognizer, dyck_alphabets, fixture_fig2, make_dyck, make_dyck_recognizer, make_ngram,
    ReadoutSource,
};
use bpda::lm::LanguageModel;
use bpda::oracle::{compare, enumerate_probs, truncated_recognize, Recognition};
use bpda::pfsa::{bpda_to_pfsa, pfsa_to_bpda};
use bpda::stack::{StackConfig, DEFAULT_CONFIG_CAP};
use bpda::structure::{
    check_representation_compatible, infer_certificate, logit_affine_rank, verify_certificate,
    InferStage, SlotAction, StructureError, Violation, READOUT_TOLERANCE,
};

fn ab() -> Alphabet {
    Alphabet::from_chars("ab").unwrap()
}

fn sc(v: &[usize]) -> StackConfig {
    StackConfig::new(v.to_vec())
}

#[test]
fn ngram_mechanics() {
    let (bpda, _) = make_ngram(3, &ab(), &ReadoutSource::Seed(1)).unwrap();
    assert_eq!(bpda.next_stack(&sc(&[0, 1]), 0).unwrap(), sc(&[1, 0]));
    assert_eq!(bpda.str_to_stack(&[0, 1, 0, 1]).unwrap(), sc(&[0, 1]));
    assert_eq!(bpda.str_to_stack(&[]).unwrap(), sc(&[]));
    let report = bpda.validate();
    assert!(report.is_probabilistic && report.is_deterministic);
    let pfsa = bpda_to_pfsa(&bpda, true, DEFAULT_CONFIG_CAP).unwrap();
    assert_eq!(pfsa.states().len(), 7);
    assert!(pfsa.states().len() <= 9);
}

/// p(y⃗) from the softmax table keyed directly by the last n-1 symbols.
fn ngram_chain_rule(n: usize, readout: &bpda::structure::Readout, string: &[usize]) -> f64 {
    // χ of a context: G = 2 bits per slot for |Σ| = 2, top (latest) first
    let chi = |ctx: &[usize]| -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..n - 1 {
            let code = ctx.len().checked_sub(i + 1).map_or(0, |k| ctx[k] + 1);
            out.push(((code >> 1) & 1) as f64);
            out.push((code & 1) as f64);
        }
        out
    };
    let mut p = 1.0;
    for t in 0..=string.len() {
        let ctx = &string[t.saturating_sub(n - 1)..t];
        let dist = readout.dist(&chi(ctx));
        p *= if t < string.len() { dist[string[t]] } else { dist[2] };
    }
    p
}

#[test]
fn ngram_matches_independent_chain_rule() {
    let (bpda, cert) = make_ngram(3, &ab(), &ReadoutSource::Seed(11)).unwrap();
    for (s, p) in enumerate_probs(&bpda, 6).unwrap() {
        let q = ngram_chain_rule(3, &cert.readout, &s);
        assert!((p - q).abs() <= 1e-12, "{s:?}: {p} vs {q}");
    }
}

#[test]
fn bigram_depends_on_last_symbol_only() {
    let (bpda, _) = make_ngram(2, &ab(), &ReadoutSource::Seed(3)).unwrap();
    let mut by_last = std::collections::HashMap::new();
    for (s, _) in enumerate_probs(&bpda, 4).unwrap() {
        let dist = bpda.conditional_dist(&bpda.str_to_stack(&s).unwrap());
        let prev = by_last.entry(s.last().copied()).or_insert_with(|| dist.clone());
        assert_eq!(*prev, dist);
    }
}

#[test]
fn dyck_mechanics_and_certificate() {
    let (bpda, cert) = make_dyck(2, 3, &ReadoutSource::Seed(5)).unwrap();
    let sigma = bpda.sigma();
    let s = sigma.tokenize("<1 <2 >2 <1").unwrap();
    assert_eq!(bpda.str_to_stack(&s).unwrap(), sc(&[0, 0]));
    assert_eq!(bpda.next_stack(&sc(&[0]), 1).unwrap(), sc(&[0, 1]));
    assert_eq!(bpda.next_stack(&sc(&[0, 1]), 3).unwrap(), sc(&[0]));
    // pop on empty and push on full are total
    assert_eq!(bpda.next_stack(&sc(&[]), 2).unwrap(), sc(&[]));
    assert_eq!(bpda.next_stack(&sc(&[0, 1, 1]), 0).unwrap(), sc(&[1, 1, 0]));
    assert!(verify_certificate(&bpda, &cert, READOUT_TOLERANCE).passed());
    assert_eq!(cert.classes(), 2);
    for seed in 0..5 {
        let (bpda, cert) = make_dyck(2, 3, &ReadoutSource::Seed(seed)).unwrap();
        assert!(verify_certificate(&bpda, &cert, READOUT_TOLERANCE).passed());
    }
}

#[test]
fn compiled_sizes() {
    let (bpda, cert) = make_dyck(2, 3, &ReadoutSource::Seed(0)).unwrap();
    assert_eq!(compile(&bpda, &cert).unwrap().report.hidden_size, 12);
    let (bpda, cert) = make_ngram(3, &ab(), &ReadoutSource::Seed(0)).unwrap();
    assert_eq!(compile(&bpda, &cert).unwrap().report.hidden_size, 4);
    // K = 1, m = 1, |Γ| = 1
    let one = Alphabet::from_chars("a").unwrap();
    let (bpda, cert) = make_ngram(2, &one, &ReadoutSource::Seed(0)).unwrap();
    assert_eq!(compile(&bpda, &cert).unwrap().report.hidden_size, 1);
}

#[test]
fn compiled_networks_are_weakly_equivalent() {
    let (bpda, cert) = make_dyck(1, 2, &ReadoutSource::Seed(9)).unwrap();
    let lm = compile(&bpda, &cert).unwrap().lm;
    let cmp = compare(&bpda, &lm, 8, 1e-9).unwrap();
    assert!(cmp.passed(), "{cmp:?}");
    let cmp = compare(&bpda, &bpda, 5, 0.0).unwrap();
    assert_eq!(cmp.max_abs_diff, 0.0);
}

#[test]
fn perturbed_network_is_caught() {
    let (bpda, cert) = make_ngram(3, &ab(), &ReadoutSource::Seed(2)).unwrap();
    let lm = compile(&bpda, &cert).unwrap().lm;
    let mut u = lm.u().clone();
    u[0] += 0.1;
    let bad = lm.with_readout(lm.e().clone(), u).unwrap();
    let cmp = compare(&bpda, &bad, 6, 1e-9).unwrap();
    assert!(cmp.max_abs_diff > 1e-3);
    assert!(!cmp.passed());
    assert!((bpda.prob(&cmp.worst_string) - bad.prob(&cmp.worst_string)).abs() == cmp.max_abs_diff);
}

#[test]
fn compiled_states_track_the_stack() {
    for (bpda, cert) in [
        make_dyck(2, 2, &ReadoutSource::Seed(4)).unwrap(),
        make_ngram(4, &ab(), &ReadoutSource::Seed(4)).unwrap(),
    ] {
        let compiled = compile(&bpda, &cert).unwrap();
        let check = check_states(&bpda, &compiled.lm, cert.classes(), 6).unwrap();
        assert!(check.max_precision <= 1);
        let eta = compiled.lm.rnn().eta();
        let r = &compiled.report;
        let state = check_single_copy(eta.as_slice(), r.classes, r.bound, r.bits);
        assert!(matches!(state, CopyState::Empty | CopyState::Active(0)));
    }
}

#[test]
fn keep_write_clear_per_slot() {
    // every compiled step applies the overlay slot by slot
    let (bpda, cert) = make_dyck(2, 3, &ReadoutSource::Seed(8)).unwrap();
    let compiled = compile(&bpda, &cert).unwrap();
    let space = bpda.space();
    let rnn = compiled.lm.rnn();
    let w = space.width();
    let g = space.bits();
    for config in bpda.reachable_configs(DEFAULT_CONFIG_CAP).unwrap() {
        let mut h = nalgebra::DVector::zeros(rnn.hidden_size());
        let chi = space.chi_f64(&config);
        h.rows_mut(0, w).copy_from_slice(&chi);
        for y in 0..bpda.sigma().len() {
            let next = rnn.step(&h, y);
            let k = cert.kappa[y];
            let active = next.rows(k * w, w);
            let zeta = cert.maps[k].apply(&chi);
            let overlay = &cert.overlays[y];
            for j in 1..=space.bound() {
                let block = (space.bound() - j) * g;
                for bit in 0..g {
                    let want = match overlay.actions[j - 1] {
                        SlotAction::Keep => zeta[block + bit],
                        SlotAction::Write => (((overlay.symbol + 1) >> (g - 1 - bit)) & 1) as f64,
                        SlotAction::Clear => 0.0,
                    };
                    assert_eq!(active[block + bit], want);
                }
            }
        }
    }
}

#[test]
fn relu_lift_is_exact() {
    let (bpda, cert) = make_dyck(2, 2, &ReadoutSource::Seed(6)).unwrap();
    let lm = compile(&bpda, &cert).unwrap().lm;
    let relu = lm.relu_lift().unwrap();
    assert_eq!(relu.lift().rnn().hidden_size(), 2 * lm.rnn().hidden_size());
    let cmp = compare(&lm, &relu, 5, 0.0).unwrap();
    assert_eq!(cmp.max_abs_diff, 0.0);
    let plain = relu.to_rnn_lm();
    assert!(compare(&lm, &plain, 4, 1e-12).unwrap().passed());
}

#[test]
fn mutated_certificates_fail_with_witnesses() {
    let (bpda, cert) = make_ngram(3, &ab(), &ReadoutSource::Seed(1)).unwrap();
    // block 1 holds slot 1, which the class map fills and the overlay keeps
    let mut wrong_v = cert.clone();
    wrong_v.maps[0].offset[2] = 1.0;
    let report = verify_certificate(&bpda, &wrong_v, READOUT_TOLERANCE);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::NotBinary { .. } | Violation::InvalidCode { .. })));

    let mut permuted = cert.clone();
    permuted.overlays[0].actions.reverse();
    let report = verify_certificate(&bpda, &permuted, READOUT_TOLERANCE);
    assert!(matches!(report.violations[0], Violation::Overlay { .. }));
    assert!(matches!(compile(&bpda, &permuted), Err(CompileError::Rejected(_))));

    let mut bad_readout = cert.clone();
    bad_readout.readout.u[2] += 0.5;
    let report = verify_certificate(&bpda, &bad_readout, READOUT_TOLERANCE);
    assert!(matches!(report.violations[0], Violation::Readout { .. }));
}

#[test]
fn inference_recovers_equivalent_certificates() {
    let (bpda, own) = make_ngram(3, &ab(), &ReadoutSource::Seed(12)).unwrap();
    let cert = infer_certificate(&bpda).unwrap();
    assert_eq!(cert.classes(), 1);
    assert_eq!(cert.maps, own.maps);
    let lm = compile(&bpda, &cert).unwrap().lm;
    assert!(compare(&bpda, &lm, 6, 1e-9).unwrap().passed());

    let (bpda, _) = make_dyck(2, 3, &ReadoutSource::Seed(12)).unwrap();
    let cert = infer_certificate(&bpda).unwrap();
    assert_eq!(cert.classes(), 2);
    assert_eq!(cert.kappa, vec![0, 0, 1, 1]);
    assert!(verify_certificate(&bpda, &cert, READOUT_TOLERANCE).passed());
}

/// The n-gram mechanics with symbol `a` rewritten to `(f(γ), a)`, where
/// `f(γ)` is `a` if both padded slots agree and `b` otherwise.
fn xor_bpda() -> Bpda {
    let (base, _) = make_ngram(3, &ab(), &ReadoutSource::Seed(21)).unwrap();
    let mut b = Bpda::new(ab(), ab(), 2).unwrap();
    b.set_initial(sc(&[]), 1.0).unwrap();
    for config in base.space().configurations(DEFAULT_CONFIG_CAP).unwrap() {
        let dist = base.conditional_dist(&config);
        let slots = base.space().slots(&config);
        let f = if slots.slots()[0] == slots.slots()[1] { 0 } else { 1 };
        b.add_transition(config.clone(), 0, sc(&[f, 0]), dist[0]).unwrap();
        b.add_transition(config.clone(), 1, base.next_stack(&config, 1).unwrap(), dist[1])
            .unwrap();
        b.set_final(config, dist[2]).unwrap();
    }
    b
}

#[test]
fn non_affine_symbol_fails_at_stack_affine_stage() {
    let b = xor_bpda();
    assert!(b.validate().is_probabilistic);
    let err = infer_certificate(&b).unwrap_err();
    assert_eq!(err.stage, InferStage::StackAffine, "{err}");
}

#[test]
fn fixture_conversions() {
    let pfsa = fixture_fig2();
    let report = pfsa.validate();
    assert!(report.is_probabilistic && report.is_deterministic);
    let bpda = pfsa_to_bpda(&pfsa).unwrap();
    assert_eq!(bpda.bound(), 1);
    assert_eq!(bpda.gamma().len(), 7);
    let ab_state = bpda.gamma().index_of("ab").unwrap();
    assert!((bpda.transition_weight(&sc(&[ab_state]), 0) - 0.18).abs() < 1e-15);
    let eps = bpda.gamma().index_of("ε").unwrap();
    let dist = bpda.conditional_dist(&sc(&[eps]));
    for (p, q) in dist.iter().zip([0.81, 0.09, 0.1]) {
        assert!((p - q).abs() < 1e-15);
    }
    assert!((bpda.string_prob(&[0]) - 0.081).abs() < 1e-15);
    assert!(compare(&pfsa, &bpda, 6, 1e-12).unwrap().passed());
    let back = bpda_to_pfsa(&bpda, true, DEFAULT_CONFIG_CAP).unwrap();
    assert_eq!(back.is_deterministic(), pfsa.is_deterministic());
    assert!(compare(&pfsa, &back, 6, 1e-12).unwrap().passed());
}

#[test]
fn fixture_is_not_representation_compatible() {
    // the drawn conditionals are not softmax-affine in χ for any stack
    // encoding tried, so the fixture has no certificate
    let bpda = pfsa_to_bpda(&fixture_fig2()).unwrap();
    let err = check_representation_compatible(&bpda, 1e-3).unwrap_err();
    assert!(matches!(err, StructureError::NotRepresentable { residual, .. } if residual > 0.1));
    // rank alone does not rule it out: 3 outputs give rank at most 2
    assert!(logit_affine_rank(&bpda).unwrap() <= 2);
    assert!(infer_certificate(&bpda).is_err());
}

#[test]
fn recognizer_small_cases() {
    let (bpda, _) = make_dyck_recognizer(1, 1, 0.1, 6.0).unwrap();
    let dist = bpda.conditional_dist(&sc(&[]));
    assert!(dist[0] > 0.1 && dist[2] > 0.1);
    assert!(bpda.conditional_dist(&sc(&[0]))[1] > 0.1);

    let (bpda, mut cert) = make_dyck_recognizer(2, 3, 0.01, 6.0).unwrap();
    let sigma = bpda.sigma();
    let lm = compile(&bpda, &cert).unwrap().lm;
    let s = sigma.tokenize("<1 >1").unwrap();
    assert_eq!(truncated_recognize(&lm, &s, 0.01), Recognition::Accept);
    let s = sigma.tokenize(">1").unwrap();
    assert_eq!(truncated_recognize(&lm, &s, 0.01), Recognition::Reject { step: 1 });
    assert_eq!(truncated_recognize(&lm, &s, 0.0), Recognition::Accept);

    // flip the sign of the largest bias entry: some short string is now
    // misclassified
    let r = cert.readout.u.iamax();
    cert.readout.u[r] = -cert.readout.u[r];
    let (bad, _) = make_dyck(2, 3, &ReadoutSource::Given(cert.readout.clone())).unwrap();
    assert!(check_recognizer(&bad, 2, 3, 0.01).is_err());
    let witness = enumerate_probs(&bad, 4)
        .unwrap()
        .into_iter()
        .map(|(s, _)| s)
        .find(|s| (truncated_recognize(&bad, s, 0.01) == Recognition::Accept) != dyck_member(2, 3, s));
    assert!(witness.is_some());
    assert!(make_dyck_recognizer(2, 3, 0.5, 6.0).is_err());
    assert_eq!(dyck_alphabets(2).unwrap().0.symbols(), ["<1", "<2", ">1", ">2"]);
}

/// Bounded Dyck membership by direct stack simulation.
fn dyck_member(b: usize, n: usize, s: &[usize]) -> bool {
    let mut stack = Vec::new();
    for &y in s {
        if y < b {
            if stack.len() == n {
                return false;
            }
            stack.push(y);
        } else if stack.pop() != Some(y - b) {
            return false;
        }
    }
    stack.is_empty()
}
