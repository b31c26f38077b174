mod common;

use std::collections::BTreeSet;

use bpnet::bayes::parse_bn;
use bpnet::bayes::BayesNet;
use bpnet::factors::Factor;
use bpnet::gen::{random_bn, rain5, BnConfig};
use bpnet::oracle::{
    brute_force_marginal, clique_tree_from_order, families, forward_sample, heuristic_order_bn, induced_width,
    message_passing, variable_elimination, variable_elimination_traced, Heuristic, OracleError,
};
use bpnet::VariableId;
use common::{assert_close, rng, small_bn, v, vs};
use itertools::Itertools;
use proptest::prelude::*;

fn set(names: &[&str]) -> BTreeSet<VariableId> {
    vs(names).into_iter().collect()
}

fn chain() -> BayesNet<f64> {
    let s = r#"{"variables":[{"name":"A","values":["t","f"]},{"name":"B","values":["t","f"]},{"name":"C","values":["t","f"]}],
        "cpts":[{"child":"A","parents":[],"table":[[0.3,0.7]]},
                {"child":"B","parents":["A"],"table":[[0.9,0.1],[0.2,0.8]]},
                {"child":"C","parents":["B"],"table":[[0.6,0.4],[0.5,0.5]]}]}"#;
    parse_bn(s.as_bytes()).unwrap()
}

fn fams(bn: &BayesNet<f64>) -> Vec<BTreeSet<VariableId>> {
    families(bn).into_values().collect()
}

#[test]
fn brute_force_edges() {
    let bn = rain5();
    assert_eq!(brute_force_marginal(&bn, &bn.var_ids()).unwrap(), bn.joint().unwrap());
    let none = brute_force_marginal(&bn, &[]).unwrap();
    assert!(none.vars().is_empty() && (none.table()[0] - 1.0).abs() < 1e-9);
    assert!(matches!(brute_force_marginal(&bn, &vs(&["Q"])), Err(OracleError::UnknownVariable(_))));
}

#[test]
fn ve_on_one_variable() {
    let bn = small_bn(1, 1);
    let x = bn.var_ids()[0].clone();
    assert_eq!(&variable_elimination(&bn, std::slice::from_ref(&x), &[]).unwrap(), bn.cpt(&x));
}

#[test]
fn ve_on_rain5() {
    let bn = rain5();
    let t = variable_elimination_traced(&bn, &vs(&["D"]), &vs(&["E", "B", "C", "A"])).unwrap();
    // The largest summed-out table is over A,C,D; its product also holds B.
    let tau: Vec<usize> = t.steps.iter().map(|s| s.scope.len() - 1).collect();
    assert_eq!(tau.iter().max(), Some(&3));
    assert_eq!(t.steps[1].scope, set(&["A", "B", "C", "D"]));
    assert_eq!(t.max_scope(), 4);
    assert_eq!(t.steps.len(), 4);
    assert_close(&t.result, &brute_force_marginal(&bn, &vs(&["D"])).unwrap(), 1e-12);
}

#[test]
fn ve_order_errors() {
    let bn = rain5();
    assert!(matches!(
        variable_elimination(&bn, &vs(&["D"]), &vs(&["E", "B", "C"])),
        Err(OracleError::OrderIncomplete(_))
    ));
    assert!(matches!(
        variable_elimination(&bn, &vs(&["D"]), &vs(&["E", "B", "C", "A", "D"])),
        Err(OracleError::QueryInOrder(_))
    ));
    assert!(matches!(
        variable_elimination(&bn, &vs(&["D"]), &vs(&["E", "B", "C", "A", "A"])),
        Err(OracleError::OrderIncomplete(_))
    ));
}

#[test]
fn chain_clique_tree() {
    let bn = chain();
    let t = clique_tree_from_order(&bn, &vs(&["A", "B", "C"])).unwrap();
    assert!(t.cliques.contains(&set(&["A", "B"])));
    assert!(t.cliques.contains(&set(&["B", "C"])));
    assert_eq!(t.width(), 1);
    assert_eq!(t.edges.len(), t.cliques.len() - 1);
    t.verify(&families(&bn)).unwrap();
    let root = t.cliques.iter().position(|c| c.contains(&v("C"))).unwrap();
    let got = message_passing(&bn, &t, root, &vs(&["C"])).unwrap();
    assert_close(&got, &brute_force_marginal(&bn, &vs(&["C"])).unwrap(), 1e-12);
    assert!(matches!(clique_tree_from_order(&bn, &vs(&["A", "B"])), Err(OracleError::OrderIncomplete(_))));
}

#[test]
fn rain5_clique_tree() {
    let bn = rain5();
    let t = clique_tree_from_order(&bn, &vs(&["A", "B", "C", "E", "D"])).unwrap();
    for want in [set(&["A", "B", "C"]), set(&["B", "C", "D"]), set(&["C", "D", "E"])] {
        assert!(t.cliques.iter().any(|c| c.is_superset(&want)), "{want:?}");
    }
    assert_eq!(t.width(), 2);
    t.verify(&families(&bn)).unwrap();
    for y in bn.var_ids() {
        let root = t.cliques.iter().position(|c| c.contains(&y)).unwrap();
        let got = message_passing(&bn, &t, root, std::slice::from_ref(&y)).unwrap();
        assert_close(&got, &brute_force_marginal(&bn, &[y]).unwrap(), 1e-12);
    }
}

#[test]
fn single_clique_tree() {
    let bn = rain5();
    let t = clique_tree_from_order(&bn, &vs(&["A", "B", "C", "D", "E"])).unwrap();
    let pruned = t.pruned();
    pruned.verify(&families(&bn)).unwrap();
    let root = pruned.cliques.iter().position(|c| c.contains(&v("D"))).unwrap();
    let got = message_passing(&bn, &pruned, root, &vs(&["D"])).unwrap();
    assert_close(&got, &brute_force_marginal(&bn, &vs(&["D"])).unwrap(), 1e-12);
}

#[test]
fn message_passing_errors() {
    let bn = rain5();
    let t = clique_tree_from_order(&bn, &vs(&["A", "B", "C", "E", "D"])).unwrap();
    let root = t.cliques.iter().position(|c| !c.contains(&v("A"))).unwrap();
    assert!(matches!(message_passing(&bn, &t, root, &vs(&["A"])), Err(OracleError::QueryNotInRoot(_))));
    assert!(matches!(message_passing(&bn, &t, 99, &vs(&["A"])), Err(OracleError::InvalidTree(_))));
    let mut broken = t.clone();
    broken.assignment.remove(&v("D"));
    assert!(matches!(message_passing(&bn, &broken, 0, &[]), Err(OracleError::InvalidTree(_))));
    let mut broken = t.clone();
    broken.edges.pop();
    broken.separators.pop();
    assert!(matches!(message_passing(&bn, &broken, 0, &[]), Err(OracleError::InvalidTree(_))));
}

#[test]
fn min_fill_is_optimal_on_rain5() {
    let bn = rain5();
    let o = heuristic_order_bn(&bn, &Heuristic::MinFill);
    assert_eq!(o.width, 2);
    let vars = bn.var_ids();
    let best = vars.iter().cloned().permutations(vars.len()).map(|p| induced_width(&vars, &fams(&bn), &p)).min();
    assert_eq!(best, Some(2));
    assert_eq!(vars.iter().cloned().permutations(vars.len()).count(), 120);
}

#[test]
fn min_degree_on_a_tree() {
    let cfg = BnConfig { n: 9, max_parents: 1, parent_prob: 1.0, ..BnConfig::default() };
    let bn = random_bn(&mut rng(3), &cfg);
    assert!(bn.var_ids().iter().all(|x| bn.parents(x).len() <= 1));
    assert_eq!(heuristic_order_bn(&bn, &Heuristic::MinDegree).width, 1);
}

#[test]
fn given_order_is_echoed() {
    let bn = rain5();
    let order = vs(&["E", "D", "C", "B", "A"]);
    let o = heuristic_order_bn(&bn, &Heuristic::Given(order.clone()));
    assert_eq!(o.order, order);
    assert_eq!(o.width, induced_width(&bn.var_ids(), &fams(&bn), &order));
    assert_eq!("min-fill".parse::<Heuristic>().unwrap(), Heuristic::MinFill);
    assert_eq!("min-degree".parse::<Heuristic>().unwrap(), Heuristic::MinDegree);
    assert!(matches!("greedy".parse::<Heuristic>(), Err(OracleError::UnknownHeuristic(_))));
}

#[test]
fn heuristics_are_deterministic() {
    for seed in 0..20 {
        let bn = small_bn(seed, 8);
        for h in [Heuristic::MinDegree, Heuristic::MinFill] {
            let a = heuristic_order_bn(&bn, &h);
            assert_eq!(a, heuristic_order_bn(&bn, &h));
            let mut sorted = a.order.clone();
            sorted.sort();
            assert_eq!(sorted, bn.var_ids());
        }
    }
}

#[test]
fn sampling_is_reproducible() {
    let bn = rain5();
    assert_eq!(forward_sample(&bn, 7, 200).unwrap(), forward_sample(&bn, 7, 200).unwrap());
    assert_ne!(forward_sample(&bn, 7, 200).unwrap(), forward_sample(&bn, 8, 200).unwrap());
}

#[test]
fn deterministic_cpts_give_one_assignment() {
    let s = r#"{"variables":[{"name":"A","values":["t","f"]},{"name":"B","values":["x","y","z"]}],
        "cpts":[{"child":"A","parents":[],"table":[[0.0,1.0]]},
                {"child":"B","parents":["A"],"table":[[1.0,0.0,0.0],[0.0,0.0,1.0]]}]}"#;
    let bn = parse_bn::<f64>(s.as_bytes()).unwrap();
    for a in forward_sample(&bn, 1, 500).unwrap() {
        assert_eq!(a[&v("A")], 1);
        assert_eq!(a[&v("B")], 2);
    }
}

#[test]
fn sample_frequencies_within_three_sigma() {
    let bn = rain5();
    let n = 100_000;
    let samples = forward_sample(&bn, 42, n).unwrap();
    for x in bn.var_ids() {
        let p = brute_force_marginal(&bn, std::slice::from_ref(&x)).unwrap().table()[0];
        let hits = samples.iter().filter(|a| a[&x] == 0).count() as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() <= 3.0 * sigma, "{x}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ve_mp_brute_agree(seed in 0u64..1_000_000, n in 1usize..8) {
        let bn = small_bn(seed, n);
        let vars = bn.var_ids();
        let order = heuristic_order_bn(&bn, &Heuristic::MinFill);
        let t = clique_tree_from_order(&bn, &order.order).unwrap();
        prop_assert!(t.verify(&families(&bn)).is_ok());
        prop_assert_eq!(t.width(), order.width);
        for y in &vars {
            let want: Factor<f64> = brute_force_marginal(&bn, std::slice::from_ref(y)).unwrap();
            let rest: Vec<VariableId> = order.order.iter().filter(|z| *z != y).cloned().collect();
            let ve = variable_elimination_traced(&bn, std::slice::from_ref(y), &rest).unwrap();
            prop_assert!(ve.result.max_abs_diff(&want).unwrap() <= 1e-12);
            let mut rev = rest.clone();
            rev.reverse();
            let other = variable_elimination(&bn, std::slice::from_ref(y), &rev).unwrap();
            prop_assert!(other.max_abs_diff(&ve.result).unwrap() <= 1e-12);
            let root = t.cliques.iter().position(|c| c.contains(y)).unwrap();
            let mp = message_passing(&bn, &t, root, std::slice::from_ref(y)).unwrap();
            prop_assert!(mp.max_abs_diff(&want).unwrap() <= 1e-12);

            // At most one message table per variable, each within the width bound.
            let dmax = vars.iter().map(|x| bn.domain(x).unwrap().size()).max().unwrap() as u128;
            let w = induced_width(&vars, &fams(&bn), &rest);
            prop_assert!(ve.steps.len() <= vars.len());
            for s in &ve.steps {
                let cells: u128 = s.scope.iter().map(|x| bn.domain(x).unwrap().size() as u128).product();
                prop_assert!(cells <= dmax.pow(w as u32 + 1));
            }
        }
    }
}
