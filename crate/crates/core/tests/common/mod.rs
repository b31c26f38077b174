#![allow(dead_code)]

use bpnet::bayes::{compile_bn, BayesNet, CompileMode, Valuation};
use bpnet::factors::Factor;
use bpnet::gen::{random_bn, BnConfig};
use bpnet::rewrite::show;
use bpnet::{Net, VariableId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn v(s: &str) -> VariableId {
    VariableId::new(s)
}

pub fn vs(names: &[&str]) -> Vec<VariableId> {
    names.iter().map(|s| v(s)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The empty-conclusion rain5 net and its valuation.
pub fn rain5_empty() -> (BayesNet<f64>, Net, Valuation<f64>) {
    let bn = bpnet::gen::rain5();
    let (net, val) = compile_bn(&bn, CompileMode::Empty);
    (bn, net, val)
}

/// rain5 with D as the only conclusion.
pub fn rain5_rd() -> (Net, Valuation<f64>) {
    let (_, net, val) = rain5_empty();
    (show(&net, &v("D")).unwrap(), val)
}

pub fn small_bn(seed: u64, n: usize) -> BayesNet<f64> {
    let cfg = BnConfig { n, state_cap: Some(1 << 16), ..BnConfig::default() };
    random_bn(&mut rng(seed), &cfg)
}

pub fn assert_close(a: &Factor<f64>, b: &Factor<f64>, tol: f64) {
    let d = a.max_abs_diff(b).unwrap_or(f64::INFINITY);
    assert!(d <= tol, "tables differ by {d}: {:?} vs {:?}", a.table(), b.table());
}
