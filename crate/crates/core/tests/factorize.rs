mod common;

use std::collections::BTreeSet;

use bpnet::bayes::{compile_bn, CompileMode};
use bpnet::factorize::{
    as_cutnet, check_order, clique_tree_of, factorize_by_order, marginal_net, trivial_factorization, CompKind,
    Elimination, FactorizeError, FactorizedNet,
};
use bpnet::gen::{random_rewritten_net, rain5};
use bpnet::interpret::{interpret_naive, interpret_turbo};
use bpnet::net::{bnet, build, isomorphic, Net, NodeKind};
use bpnet::oracle::{brute_force_marginal, families, heuristic_order_bn, heuristic_order_net, Heuristic};
use bpnet::rewrite::normalize;
use common::{assert_close, rain5_empty, rain5_rd, rng, small_bn, v, vs};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn set(names: &[&str]) -> BTreeSet<bpnet::VariableId> {
    vs(names).into_iter().collect()
}

fn rd_factorized() -> FactorizedNet {
    let (rd, _) = rain5_rd();
    factorize_by_order(&rd, &vs(&["A", "B", "C", "E"])).unwrap()
}

#[test]
fn rd_order_induced_form() {
    let f = rd_factorized();
    assert_eq!(f.width(), 2);
    assert_eq!(f.wiring_atom_sets(), vec![set(&["A", "B", "C"]), set(&["B", "C", "D"]), set(&["C", "D", "E"])]);
    assert_eq!(f.box_count(), 5);
    assert!(f.comps.len() <= 10);
    assert_eq!(f.m_r(), 7);
    // Every wiring is cut-free.
    for w in f.wirings() {
        assert!(f.comps[w].nodes.iter().all(|&n| f.net.kind(n) != NodeKind::Cut));
    }
}

#[test]
fn rd_trivial_form() {
    let (rd, val) = rain5_rd();
    let t = trivial_factorization(&rd).unwrap();
    assert_eq!(t.width(), 4);
    assert_eq!(t.wirings().len(), 1);
    assert_eq!(t.wiring_atom_sets(), vec![set(&["A", "B", "C", "D", "E"])]);
    assert_close(&interpret_turbo(&t, &val).unwrap(), &interpret_naive(&rd, &val).unwrap(), 1e-12);
}

#[test]
fn single_box_forms() {
    let mut n = Net::new();
    build::boxed(&mut n, &v("X"), &[]);
    let t = trivial_factorization(&n).unwrap();
    assert!(t.wirings().is_empty());
    assert_eq!(t.width(), 0);
    let f = factorize_by_order(&n, &[]).unwrap();
    assert_eq!(f.comps.len(), 1);
    assert!(matches!(f.comps[0].kind, CompKind::Leaf(_)));
}

#[test]
fn cutnet_partitions() {
    let f = rd_factorized();
    let parts: Vec<BTreeSet<_>> = f.parts().into_iter().map(|(_, p)| p).collect();
    let c = as_cutnet(&f.net, &parts).unwrap();
    assert_eq!(c.components.len(), 8);
    assert_eq!(c.correction_edges().len(), 7);

    let all: BTreeSet<_> = f.net.nodes().map(|(id, _)| id).collect();
    let whole = as_cutnet(&f.net, &[all]).unwrap();
    assert_eq!(whole.components.len(), 1);
}

#[test]
fn parallel_cuts_make_one_correction_edge() {
    let mut n = Net::new();
    let (a, ap, _) = build::boxed(&mut n, &v("A"), &[]);
    let (b, bp, _) = build::boxed(&mut n, &v("B"), &[]);
    let (ax1, _, m1) = build::ax(&mut n, &v("A"));
    let (ax2, _, m2) = build::ax(&mut n, &v("B"));
    build::cut(&mut n, ap, m1);
    build::cut(&mut n, bp, m2);
    let left: BTreeSet<_> = [a, b].into_iter().collect();
    let right: BTreeSet<_> = [ax1, ax2].into_iter().collect();
    let c = as_cutnet(&n, &[left, right]).unwrap();
    assert_eq!(c.links.len(), 2);
    assert_eq!(c.correction_edges().len(), 1);

    let one: BTreeSet<_> = [a, ax1].into_iter().collect();
    let rest: BTreeSet<_> = [b, ax2].into_iter().collect();
    assert!(matches!(as_cutnet(&n, &[one, rest]), Err(FactorizeError::IntraComponentCut(_))));
}

#[test]
fn ring_of_three_is_not_a_tree() {
    let mut n = Net::new();
    let axs: Vec<_> = (0..3).map(|_| build::ax(&mut n, &v("X"))).collect();
    for i in 0..3 {
        build::cut(&mut n, axs[i].1, axs[(i + 1) % 3].2);
    }
    let parts: Vec<BTreeSet<_>> = axs.iter().map(|a| BTreeSet::from([a.0])).collect();
    assert!(matches!(as_cutnet(&n, &parts), Err(FactorizeError::NotATree(_))));
}

#[test]
fn first_elimination_on_rain5() {
    let (_, net, _) = rain5_empty();
    let mut st = Elimination::new(&net).unwrap();
    let before = st.net_count();
    let w = st.eliminate(&v("A")).unwrap().unwrap();
    st.check_invariants().unwrap();
    assert_eq!(st.net_count(), before - 2);
    assert!(!st.module_atoms().contains(&v("A")));
    assert_eq!(st.eliminated(), &[v("A")]);
    assert_eq!(st.eliminate(&v("A")).unwrap(), None);
    let _ = w;
    let f = st.finish().unwrap();
    assert!(f.wiring_atom_sets().contains(&set(&["A", "B", "C"])));
}

#[test]
fn weakened_atom_drops_from_outputs() {
    // E has no consumer, so its output meets a weakening.
    let (_, net, _) = rain5_empty();
    let f = factorize_by_order(&net, &vs(&["E", "A", "B", "C", "D"])).unwrap();
    let e_wiring = f.wirings().into_iter().find(|&w| f.comps[w].atoms.contains(&v("E"))).unwrap();
    assert!(!f.comps[e_wiring].output_atoms.contains(&v("E")));
    assert!(f.comps[e_wiring].nodes.iter().any(|&n| f.net.kind(n) == NodeKind::Weakening));
}

#[test]
fn order_errors() {
    let (_, net, _) = rain5_empty();
    assert!(matches!(factorize_by_order(&net, &vs(&["A", "B"])), Err(FactorizeError::OrderIncomplete(_))));
    assert!(matches!(factorize_by_order(&net, &vs(&["A", "Q"])), Err(FactorizeError::UnknownAtom(_))));
    assert!(matches!(check_order(&net, &vs(&["A", "A"])), Err(FactorizeError::OrderIncomplete(_))));
    let (rd, _) = rain5_rd();
    let mut bigger = rd.clone();
    let (_, p, m) = build::ax(&mut bigger, &v("Z"));
    let (_, bp, _) = build::boxed(&mut bigger, &v("Z"), &[]);
    build::cut(&mut bigger, bp, m);
    let _ = p;
    assert!(matches!(factorize_by_order(&bigger, &vs(&["A", "B", "C", "E", "Z"])), Err(FactorizeError::NotNormal)));
    let mut neg = rd.clone();
    build::ax(&mut neg, &v("W"));
    assert!(factorize_by_order(&neg, &vs(&["A", "B", "C", "E"])).is_err());
}

#[test]
fn reroot_keeps_shape() {
    let (_, net, val) = rain5_empty();
    let f = factorize_by_order(&net, &vs(&["A", "B", "C", "E", "D"])).unwrap();
    let same = f.reroot(f.roots[0]).unwrap();
    assert_eq!(same.comps, f.comps);
    assert_eq!(same.roots, f.roots);
    for w in f.wirings() {
        let g = f.reroot(w).unwrap();
        assert_eq!((g.width(), g.m_r(), g.box_count()), (f.width(), f.m_r(), f.box_count()));
        assert_eq!(g.root_of(w), w);
        let y = g.comps[w].atoms.first().unwrap().clone();
        let m = marginal_net(&g, &y).unwrap();
        let want = brute_force_marginal(&rain5(), &[y]).unwrap();
        assert_close(&interpret_turbo(&m, &val).unwrap(), &want, 1e-12);
    }
    let leaf = (0..f.comps.len()).find(|&i| !f.comps[i].is_wiring()).unwrap();
    assert!(matches!(f.reroot(leaf), Err(FactorizeError::UnknownWiring(_))));
}

#[test]
fn marginal_nets_keep_cost_shape() {
    let (bn, net, val) = rain5_empty();
    let f = factorize_by_order(&net, &vs(&["A", "B", "C", "E", "D"])).unwrap();
    for y in bn.var_ids() {
        let m = marginal_net(&f, &y).unwrap();
        assert_eq!(m.width(), f.width());
        assert_eq!(m.m_r(), f.m_r());
        assert_eq!(m.box_count(), f.box_count());
        assert_eq!(m.net.conclusion_atoms(), [y.clone()].into_iter().collect());
        assert!(isomorphic(&m.net, &marginal_net(&f, &y).unwrap().net));
        let want = brute_force_marginal(&bn, std::slice::from_ref(&y)).unwrap();
        assert_close(&interpret_turbo(&m, &val).unwrap(), &want, 1e-12);
    }
    assert!(matches!(marginal_net(&f, &v("Q")), Err(FactorizeError::UnknownAtom(_))));
}

#[test]
fn clique_tree_of_rd_form() {
    let f = rd_factorized();
    let t = clique_tree_of(&f).unwrap();
    assert_eq!(t.cliques, vec![set(&["A", "B", "C"]), set(&["B", "C", "D"]), set(&["C", "D", "E"])]);
    let mut seps = t.separators.clone();
    seps.sort();
    assert_eq!(seps, vec![set(&["B", "C"]), set(&["C", "D"])]);
    t.verify(&families(&rain5())).unwrap();
    assert_eq!(t.pruned(), t);
}

#[test]
fn single_wiring_gives_one_clique() {
    let (rd, _) = rain5_rd();
    let t = clique_tree_of(&trivial_factorization(&rd).unwrap()).unwrap();
    assert_eq!(t.cliques.len(), 1);
    assert!(t.edges.is_empty());
    t.verify(&families(&rain5())).unwrap();
}

#[test]
fn json_round_trip() {
    let f = rd_factorized();
    let s = f.to_json_string();
    let back = FactorizedNet::from_json_str(&s).unwrap();
    assert_eq!(back.comps, f.comps);
    assert_eq!(back.roots, f.roots);
    assert_eq!(back.to_json_string(), s);
    let j: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert!(j["tree"].is_array() && j["nodes"].is_array());
}

#[test]
fn rewritten_nets_factorize_after_normalizing() {
    for seed in 0..60 {
        let bn = small_bn(seed, 2 + seed as usize % 6);
        for mode in [CompileMode::Empty, CompileMode::Positive] {
            let (_, val) = compile_bn(&bn, mode);
            let net = normalize(&random_rewritten_net(&mut rng(seed), &bn, mode, 30)).unwrap().net;
            let order = heuristic_order_net(&net, &Heuristic::MinFill).order;
            let f = factorize_by_order(&net, &order).unwrap();
            assert_eq!(bnet(&f.net).unwrap(), bnet(&net).unwrap());
            assert_close(&interpret_turbo(&f, &val).unwrap(), &interpret_naive(&net, &val).unwrap(), 1e-12);
            let shown: Vec<_> = net.conclusion_atoms().into_iter().collect();
            if !shown.is_empty() {
                assert_close(&interpret_turbo(&f, &val).unwrap(), &brute_force_marginal(&bn, &shown).unwrap(), 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn elimination_invariants_hold(seed in 0u64..1_000_000, n in 1usize..9) {
        let bn = small_bn(seed, n);
        let (net, _) = compile_bn(&bn, CompileMode::Empty);
        let mut order = bn.var_ids();
        order.shuffle(&mut rng(seed ^ 0x5eed));
        let mut st = Elimination::new(&net).unwrap();
        st.check_invariants().map_err(TestCaseError::fail)?;
        for z in &order {
            st.eliminate(z).unwrap();
            st.check_invariants().map_err(TestCaseError::fail)?;
        }
        let f = st.finish().unwrap();
        prop_assert!(f.comps.len() <= 2 * n);
        prop_assert_eq!(bnet(&f.net).unwrap(), bnet(&net).unwrap());
        let t = clique_tree_of(&f).unwrap();
        t.verify(&families(&bn)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        t.pruned().verify(&families(&bn)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    }

    #[test]
    fn positive_nets_factorize(seed in 0u64..1_000_000, n in 1usize..8) {
        let bn = small_bn(seed, n);
        let (net, val) = compile_bn(&bn, CompileMode::Positive);
        let order = heuristic_order_bn(&bn, &Heuristic::MinDegree).order;
        let f = factorize_by_order(&net, &order).unwrap();
        prop_assert!(f.wirings().is_empty() || f.width() <= n);
        let t = interpret_turbo(&f, &val).unwrap();
        prop_assert!(t.max_abs_diff(&bn.joint().unwrap()).unwrap() <= 1e-12);
    }
}
