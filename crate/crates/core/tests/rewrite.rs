mod common;

use bpnet::bayes::{compile_bn, CompileMode, Valuation};
use bpnet::factors::Factor;
use bpnet::interpret::interpret_naive;
use bpnet::net::{bnet, build, check_pre_module, is_bpn, isomorphic, Net, NodeKind};
use bpnet::rewrite::{
    apply, apply_move, candidate_moves, find_expansions, find_redexes, hide, is_normal, normalize, normalize_with,
    show, Move, Redex, RewriteError, RuleKind, Strategy,
};
use common::{assert_close, rain5_empty, rain5_rd, rng, small_bn, v};
use proptest::prelude::*;
use rand::seq::SliceRandom;

/// R_D with every atomic edge ax-expanded once, in ascending edge order.
fn expanded_rd() -> Net {
    let (rd, _) = rain5_rd();
    let mut net = rd.clone();
    for r in find_expansions(&rd).into_iter().filter(|r| r.rule == RuleKind::AxExpand) {
        net = apply(&net, &r).unwrap();
    }
    net
}

fn semantics_agree(before: &Net, after: &Net, val: &Valuation<f64>) {
    let a = interpret_naive(before, val).unwrap();
    let b = interpret_naive(after, val).unwrap();
    let keep: Vec<_> = a.vars().iter().filter(|x| b.contains(x)).cloned().collect();
    let a = a.project(&keep).unwrap();
    let b = b.project(&keep).unwrap();
    assert_close(&a, &b, 1e-12);
}

#[test]
fn normal_nets_have_no_redexes() {
    let (rd, _) = rain5_rd();
    assert!(find_redexes(&rd).is_empty());
    let n = normalize(&rd).unwrap();
    assert!(n.trace.is_empty());
    assert_eq!(n.net, rd);
}

#[test]
fn single_ax_cut_redex() {
    let mut n = Net::new();
    let (b, p, _) = build::boxed(&mut n, &v("X"), &[]);
    let (a, q, m) = build::ax(&mut n, &v("X"));
    let k = build::cut(&mut n, p, m);
    let rs = find_redexes(&n);
    assert_eq!(rs, vec![Redex { rule: RuleKind::AxCut, site: vec![a, k] }]);
    let out = apply(&n, &rs[0]).unwrap();
    assert_eq!(out.node_count(), 1);
    assert!(out.has_node(b));
    assert_eq!(out.conclusions().len(), 1);
    assert_eq!(out.label(out.conclusions()[0]), n.label(q));
    assert!(matches!(apply(&out, &rs[0]), Err(RewriteError::StaleRedex(_))));
}

#[test]
fn tensor_par_cut_splits() {
    let mut n = Net::new();
    let (_, xp, _) = build::ax(&mut n, &v("X"));
    let (_, yp, _) = build::ax(&mut n, &v("Y"));
    let (_, _, xm) = build::ax(&mut n, &v("X"));
    let (_, _, ym) = build::ax(&mut n, &v("Y"));
    let (_, t) = build::binary(&mut n, NodeKind::Tensor, xp, yp);
    let (_, par) = build::binary(&mut n, NodeKind::Par, xm, ym);
    build::cut(&mut n, t, par);
    check_pre_module(&n).unwrap();
    let r = find_redexes(&n).into_iter().find(|r| r.rule == RuleKind::TensorPar).expect("tensor/par redex");
    let out = apply(&n, &r).unwrap();
    let cuts = out.nodes().filter(|(_, x)| x.kind == NodeKind::Cut).count();
    assert_eq!(cuts, 2);
    assert!(out.nodes().all(|(_, x)| !matches!(x.kind, NodeKind::Tensor | NodeKind::Par)));
    assert!(check_pre_module(&out).unwrap().switching_acyclic);
    let done = normalize(&n).unwrap().net;
    assert!(check_pre_module(&done).unwrap().switching_acyclic);
    assert_eq!(done.node_count(), 2);
}

#[test]
fn expanded_net_normalizes_back() {
    let (rd, val) = rain5_rd();
    let big = expanded_rd();
    assert!(!is_normal(&big));
    let n = normalize(&big).unwrap();
    assert!(!n.trace.is_empty());
    assert!(isomorphic(&n.net, &rd));
    assert_eq!(n.trace_lines().lines().count(), n.trace.len());
    semantics_agree(&big, &n.net, &val);
}

#[test]
fn random_strategies_agree_up_to_isomorphism() {
    let big = expanded_rd();
    let a = normalize_with(&big, Strategy::Random(1)).unwrap().net;
    let b = normalize_with(&big, Strategy::Random(2)).unwrap().net;
    assert!(isomorphic(&a, &b));
}

#[test]
fn hide_makes_atom_internal() {
    let bn = bpnet::gen::rain5();
    let (pos, val) = compile_bn(&bn, CompileMode::Positive);
    let h = hide(&pos, &v("C")).unwrap();
    assert!(!h.conclusion_atoms().contains(&v("C")));
    assert!(is_bpn(&h).unwrap().is_bpn);
    assert_eq!(bnet(&h).unwrap(), bnet(&pos).unwrap());
    semantics_agree(&pos, &h, &val);
    assert!(matches!(hide(&h, &v("C")), Err(RewriteError::NoSuchConclusion(_))));
}

#[test]
fn show_adds_conclusion() {
    let (rd, val) = rain5_rd();
    let s = show(&rd, &v("C")).unwrap();
    assert_eq!(s.conclusion_atoms(), [v("C"), v("D")].into_iter().collect());
    semantics_agree(&rd, &s, &val);
    assert!(matches!(show(&rd, &v("D")), Err(RewriteError::NotInternal(_))));
}

#[test]
fn show_undoes_hide() {
    let (rd, _) = rain5_rd();
    let back = show(&hide(&rd, &v("D")).unwrap(), &v("D")).unwrap();
    assert!(isomorphic(&normalize(&back).unwrap().net, &normalize(&rd).unwrap().net));
    let (_, empty, _) = rain5_empty();
    for y in ["A", "B", "C", "D", "E"] {
        let s = show(&empty, &v(y)).unwrap();
        let h = hide(&s, &v(y)).unwrap();
        assert!(isomorphic(&normalize(&h).unwrap().net, &normalize(&empty).unwrap().net), "atom {y}");
    }
}

#[test]
fn compiled_nets_are_normal() {
    for seed in 0..20 {
        let bn = small_bn(seed, 6);
        for mode in [CompileMode::Positive, CompileMode::Empty] {
            assert!(is_normal(&compile_bn(&bn, mode).0));
        }
    }
}

#[test]
fn moves_list_every_kind() {
    let (_, empty, _) = rain5_empty();
    let s = show(&empty, &v("A")).unwrap();
    let ms = candidate_moves(&s);
    assert!(ms.iter().any(|m| matches!(m, Move::Hide(_))));
    assert!(ms.iter().any(|m| matches!(m, Move::Show(_))));
    assert!(ms.iter().any(|m| matches!(m, Move::Rule(r) if r.rule.is_expansion())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_walks_preserve_invariants(seed in 0u64..10_000, n in 2usize..7, steps in 1usize..12) {
        let bn = small_bn(seed, n);
        let (mut net, val) = compile_bn(&bn, CompileMode::Positive);
        let dag = bnet(&net).unwrap();
        let mut r = rng(seed);
        for _ in 0..steps {
            let ms = candidate_moves(&net);
            let m = ms.choose(&mut r).unwrap().clone();
            let next = apply_move(&net, &m).unwrap();
            prop_assert!(check_pre_module(&next).unwrap().switching_acyclic, "{m}");
            prop_assert!(is_bpn(&next).unwrap().is_bpn, "{m}");
            prop_assert_eq!(&bnet(&next).unwrap(), &dag);
            let a: Factor<f64> = interpret_naive(&net, &val).unwrap();
            let b = interpret_naive(&next, &val).unwrap();
            let keep: Vec<_> = a.vars().iter().filter(|x| b.contains(x)).cloned().collect();
            let d = a.project(&keep).unwrap().max_abs_diff(&b.project(&keep).unwrap()).unwrap();
            prop_assert!(d <= 1e-12, "{m}: {d}");
            if let Move::Rule(rule) = &m {
                prop_assert_eq!(next.conclusions().iter().map(|&e| next.label(e)).collect::<Vec<_>>(),
                    net.conclusions().iter().map(|&e| net.label(e)).collect::<Vec<_>>(), "{}", rule);
            }
            net = next;
        }
        let n1 = normalize(&net).unwrap().net;
        prop_assert!(is_normal(&n1));
        let n2 = normalize_with(&net, Strategy::Random(seed)).unwrap().net;
        prop_assert!(isomorphic(&n1, &n2));
        let a = interpret_naive(&net, &val).unwrap();
        prop_assert!(a.max_abs_diff(&interpret_naive(&n1, &val).unwrap()).unwrap() <= 1e-12);
    }
}
