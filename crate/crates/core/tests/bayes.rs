mod common;

use bpnet::bayes::{
    compile_bn, extract_bn, parse_bn, parse_evidence, BayesError, BayesNet, CompileMode, Valuation,
};
use bpnet::gen::{random_rewritten_net, rain5};
use bpnet::interpret::interpret_naive;
use bpnet::net::{bnet, is_bpn, Pol};
use bpnet::rewrite::is_normal;
use common::{assert_close, rng, small_bn, v};
use proptest::prelude::*;

const FIXTURE: &str = include_str!("../../../fixtures/rain5.json");

fn parse(s: &str) -> Result<BayesNet<f64>, BayesError> {
    parse_bn(s.as_bytes())
}

fn dag_edges(bn: &BayesNet<f64>) -> Vec<(bpnet::VariableId, bpnet::VariableId)> {
    let mut out = vec![];
    for x in bn.var_ids() {
        for p in bn.parents(&x) {
            out.push((p.clone(), x.clone()));
        }
    }
    out.sort();
    out
}

#[test]
fn fixture_is_the_generated_network() {
    let bn = parse(FIXTURE).unwrap();
    assert_eq!(bn.len(), 5);
    assert_eq!(bn, rain5());
    assert_eq!(bn.to_json_string().trim(), FIXTURE.trim());
    assert_eq!(bn.cpt(&v("A")).table(), &[0.2, 0.8]);
}

#[test]
fn parse_cases() {
    let one = r#"{"variables":[{"name":"A","values":["t","f"]}],"cpts":[{"child":"A","parents":[],"table":[[0.3,0.7]]}]}"#;
    assert_eq!(parse(one).unwrap().len(), 1);

    let short = one.replace("0.7", "0.6");
    assert!(matches!(parse(&short), Err(BayesError::RowNotNormalized { .. })));

    let unknown = r#"{"variables":[{"name":"A","values":["t","f"]}],"cpts":[{"child":"A","parents":["Z"],"table":[[0.3,0.7],[0.5,0.5]]}]}"#;
    assert!(matches!(parse(unknown), Err(BayesError::UnknownParent { .. })));

    let cyc = r#"{"variables":[{"name":"A","values":["t","f"]},{"name":"B","values":["t","f"]}],
        "cpts":[{"child":"A","parents":["B"],"table":[[0.3,0.7],[0.5,0.5]]},
                {"child":"B","parents":["A"],"table":[[0.3,0.7],[0.5,0.5]]}]}"#;
    assert!(matches!(parse(cyc), Err(BayesError::CycleInDag(_))));

    assert!(matches!(parse("{\"variables\": 3}"), Err(BayesError::SchemaError(_))));
    assert!(matches!(parse(&FIXTURE[..40]), Err(BayesError::SchemaError(_))));
}

#[test]
fn last_parent_varies_fastest() {
    let s = r#"{"variables":[{"name":"P","values":["0","1"]},{"name":"Q","values":["0","1","2"]},{"name":"X","values":["a","b"]}],
        "cpts":[{"child":"P","parents":[],"table":[[0.5,0.5]]},
                {"child":"Q","parents":[],"table":[[0.2,0.3,0.5]]},
                {"child":"X","parents":["Q","P"],"table":[[0.1,0.9],[0.2,0.8],[0.3,0.7],[0.4,0.6],[0.5,0.5],[0.6,0.4]]}]}"#;
    let bn = parse(s).unwrap();
    let f = bn.cpt(&v("X"));
    for q in 0..3 {
        for p in 0..2 {
            let a = [(v("P"), p), (v("Q"), q), (v("X"), 0)].into_iter().collect();
            let row = q * 2 + p;
            assert!((f.value(&a).unwrap() - 0.1 * (row + 1) as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn compile_rain5_positive() {
    let bn = rain5();
    let (net, val) = compile_bn(&bn, CompileMode::Positive);
    assert_eq!(net.box_nodes().len(), 5);
    let concl: Vec<_> = net.conclusions().iter().map(|&e| net.edge(e).atom().map(|(x, p)| (x.clone(), p))).collect();
    assert_eq!(concl.len(), 5);
    assert!(concl.iter().all(|c| matches!(c, Some((_, Pol::Pos)))));
    assert!(is_bpn(&net).unwrap().is_bpn && is_normal(&net));
    assert_eq!(bnet(&net).unwrap().named_edges(), dag_edges(&bn));
    let naive = interpret_naive(&net, &val).unwrap();
    assert_close(&naive, &bn.joint().unwrap(), 1e-12);
}

#[test]
fn single_root_compiles_to_a_box() {
    let one = r#"{"variables":[{"name":"A","values":["t","f"]}],"cpts":[{"child":"A","parents":[],"table":[[0.3,0.7]]}]}"#;
    let bn = parse(one).unwrap();
    let (net, _) = compile_bn(&bn, CompileMode::Positive);
    assert_eq!(net.node_count(), 1);
    assert_eq!(net.edge_count(), 1);
}

#[test]
fn compile_is_deterministic() {
    let bn = rain5();
    for mode in [CompileMode::Positive, CompileMode::Empty] {
        let (a, va) = compile_bn(&bn, mode);
        let (b, vb) = compile_bn(&bn, mode);
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert_eq!(va.to_json_string(), vb.to_json_string());
    }
}

#[test]
fn valuation_json_round_trip() {
    let (_, val) = compile_bn(&rain5(), CompileMode::Empty);
    let back = Valuation::<f64>::from_json_bytes(val.to_json_string().as_bytes()).unwrap();
    assert_eq!(back.to_json_string(), val.to_json_string());
}

#[test]
fn extract_rejects_mismatched_valuation() {
    let (net, _) = compile_bn(&rain5(), CompileMode::Empty);
    let (_, other) = compile_bn(&small_bn(3, 4), CompileMode::Empty);
    assert!(extract_bn(&net, &other).is_err());
}

#[test]
fn joint_cases() {
    let bn = rain5();
    let j = bn.joint().unwrap();
    assert_eq!(j.len(), 32);
    assert!((j.total() - 1.0).abs() < 1e-9);
    assert!(matches!(bn.joint_capped(16), Err(BayesError::StateSpaceTooLarge { size: 32, cap: 16 })));

    let two = r#"{"variables":[{"name":"A","values":["t","f"]},{"name":"B","values":["t","f"]}],
        "cpts":[{"child":"A","parents":[],"table":[[0.3,0.7]]},{"child":"B","parents":[],"table":[[0.6,0.4]]}]}"#;
    let j = parse(two).unwrap().joint().unwrap();
    let expect = [0.3 * 0.6, 0.3 * 0.4, 0.7 * 0.6, 0.7 * 0.4];
    for (a, b) in j.table().iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn evidence_parsing() {
    let (_, val) = compile_bn(&rain5(), CompileMode::Empty);
    let ev = parse_evidence(&val.domains, &["A=f".to_string(), "C=t".to_string()]).unwrap();
    assert_eq!(ev[&v("A")], 1);
    assert_eq!(ev[&v("C")], 0);
    assert!(parse_evidence(&val.domains, &["A=maybe".to_string()]).is_err());
    assert!(parse_evidence(&val.domains, &["Q=t".to_string()]).is_err());
    assert!(parse_evidence(&val.domains, &["A".to_string()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compile_extract_round_trip(seed in 0u64..100_000, n in 1usize..8) {
        let bn = small_bn(seed, n);
        for mode in [CompileMode::Positive, CompileMode::Empty] {
            let (net, val) = compile_bn(&bn, mode);
            prop_assert!(is_bpn(&net).unwrap().is_bpn);
            prop_assert!(is_normal(&net));
            prop_assert_eq!(bnet(&net).unwrap().named_edges(), dag_edges(&bn));
            prop_assert_eq!(&extract_bn(&net, &val).unwrap(), &bn);
        }
        prop_assert!((bn.joint().unwrap().total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rewriting_keeps_extracted_network(seed in 0u64..100_000) {
        let bn = small_bn(seed, 5);
        let (_, val) = compile_bn(&bn, CompileMode::Positive);
        let net = random_rewritten_net(&mut rng(seed), &bn, CompileMode::Positive, 50);
        prop_assert_eq!(&extract_bn(&net, &val).unwrap(), &bn);
    }
}
