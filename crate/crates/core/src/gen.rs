//! Seeded generators for networks, nets and modules used by tests and benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bayes::{compile_bn, BayesNet, CompileMode};
use crate::factors::{Assignment, Domain, Factor, VariableId};
use crate::net::{build, EdgeId, Formula, Net, NodeKind, Pol};
use crate::oracle::{heuristic_order_bn, Heuristic};
use crate::rewrite::{apply_move, candidate_moves};

/// Zero-padded so that name order follows creation order.
pub fn var_name(i: usize) -> VariableId {
    VariableId::new(&format!("X{i:02}"))
}

/// A CPT for `child` with random positive rows.
pub fn random_cpt<R: Rng>(
    rng: &mut R,
    child: &VariableId,
    scope: &[(VariableId, Arc<Domain>)],
) -> Factor<f64> {
    let mut scope = scope.to_vec();
    scope.sort_by(|a, b| a.0.cmp(&b.0));
    let (vars, doms): (Vec<_>, Vec<_>) = scope.into_iter().unzip();
    let total: usize = doms.iter().map(|d| d.size()).product();
    let raw: Vec<f64> = (0..total).map(|_| rng.gen_range(0.05..1.0)).collect();
    let f = Factor::new(vars, doms, raw).expect("well-formed scope");
    normalize_rows(&f, child)
}

fn normalize_rows(f: &Factor<f64>, child: &VariableId) -> Factor<f64> {
    let sums = f.sum_out(child).expect("child in scope");
    let table: Vec<f64> = (0..f.len())
        .map(|i| {
            let a: Assignment = f.assignment_at(i).into_iter().collect();
            f.table()[i] / sums.value(&a).expect("row")
        })
        .collect();
    Factor::new(f.vars().to_vec(), f.domains().to_vec(), table).expect("same scope")
}

#[derive(Clone, Debug)]
pub struct BnConfig {
    pub n: usize,
    pub min_domain: usize,
    pub max_domain: usize,
    pub max_parents: usize,
    pub parent_prob: f64,
    /// Parents are drawn from this many immediately preceding variables.
    pub window: Option<usize>,
    /// Domain sizes are shrunk so the joint state space stays within this cap.
    pub state_cap: Option<u128>,
}

impl Default for BnConfig {
    fn default() -> Self {
        BnConfig {
            n: 6,
            min_domain: 2,
            max_domain: 4,
            max_parents: 3,
            parent_prob: 0.4,
            window: None,
            state_cap: None,
        }
    }
}

/// Random network: parents are chosen among earlier variables, so the DAG is
/// acyclic by construction.
pub fn random_bn<R: Rng>(rng: &mut R, cfg: &BnConfig) -> BayesNet<f64> {
    let mut vars: Vec<(VariableId, Arc<Domain>)> = vec![];
    let mut space: u128 = 1;
    for i in 0..cfg.n {
        let mut k = rng.gen_range(cfg.min_domain..=cfg.max_domain);
        if let Some(cap) = cfg.state_cap {
            let left = (cfg.n - i - 1) as u32;
            while k > 2 && space * k as u128 * 2u128.pow(left) > cap {
                k -= 1;
            }
        }
        space *= k as u128;
        vars.push((var_name(i), Arc::new(Domain::sized(k))));
    }
    let mut parents = BTreeMap::new();
    let mut cpts = BTreeMap::new();
    for i in 0..cfg.n {
        let lo = cfg.window.map_or(0, |w| i.saturating_sub(w));
        let mut pool: Vec<usize> = (lo..i).collect();
        pool.shuffle(rng);
        let ps: Vec<usize> =
            pool.into_iter().filter(|_| rng.gen_bool(cfg.parent_prob)).take(cfg.max_parents).collect();
        let x = vars[i].0.clone();
        let mut scope: Vec<(VariableId, Arc<Domain>)> = ps.iter().map(|&p| vars[p].clone()).collect();
        scope.push(vars[i].clone());
        cpts.insert(x.clone(), random_cpt(rng, &x, &scope));
        parents.insert(x, ps.iter().map(|&p| vars[p].0.clone()).collect());
    }
    BayesNet::new(vars, parents, cpts).expect("generated network is valid")
}

/// Binary network of `n` variables whose min-fill order has width at most
/// `max_width`.
pub fn bounded_width_bn<R: Rng>(rng: &mut R, n: usize, max_width: usize) -> BayesNet<f64> {
    let cfg = BnConfig {
        n,
        min_domain: 2,
        max_domain: 2,
        max_parents: 2,
        parent_prob: 0.6,
        window: Some(max_width.clamp(1, 4)),
        state_cap: None,
    };
    loop {
        let bn = random_bn(rng, &cfg);
        if heuristic_order_bn(&bn, &Heuristic::MinFill).width <= max_width {
            return bn;
        }
    }
}

/// Seed used for the CPTs of the five-variable example other than the root.
pub const RAIN5_SEED: u64 = 5;

/// The five-variable example: A -> B, A -> C, B -> D, C -> D, C -> E over
/// values `t`/`f`, with Pr(A = t) = 0.2 and seeded random CPTs elsewhere.
pub fn rain5() -> BayesNet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(RAIN5_SEED);
    let tf = Arc::new(Domain::new(["t", "f"]).expect("domain"));
    let v = |s: &str| VariableId::new(s);
    let vars: Vec<(VariableId, Arc<Domain>)> = ["A", "B", "C", "D", "E"].iter().map(|s| (v(s), tf.clone())).collect();
    let edges: [(&str, &[&str]); 5] = [("A", &[]), ("B", &["A"]), ("C", &["A"]), ("D", &["B", "C"]), ("E", &["C"])];
    let mut parents = BTreeMap::new();
    let mut cpts = BTreeMap::new();
    for (x, ps) in edges {
        let ps: Vec<VariableId> = ps.iter().map(|p| v(p)).collect();
        let f = if x == "A" {
            Factor::new(vec![v("A")], vec![tf.clone()], vec![0.2, 0.8]).expect("prior")
        } else {
            let mut scope: Vec<(VariableId, Arc<Domain>)> = ps.iter().map(|p| (p.clone(), tf.clone())).collect();
            scope.push((v(x), tf.clone()));
            round_cpt(&random_cpt(&mut rng, &v(x), &scope), &v(x))
        };
        cpts.insert(v(x), f);
        parents.insert(v(x), ps);
    }
    BayesNet::new(vars, parents, cpts).expect("rain5 is valid")
}

/// Rounds binary CPT rows to two decimals, keeping rows normalized.
fn round_cpt(f: &Factor<f64>, child: &VariableId) -> Factor<f64> {
    let pos = f.vars().iter().position(|x| x == child).expect("child");
    assert_eq!(pos, f.vars().len() - 1, "child is last in scope");
    let mut t = f.table().to_vec();
    for row in t.chunks_mut(2) {
        let p = (row[0] * 100.0).round().clamp(1.0, 99.0);
        row[0] = p / 100.0;
        row[1] = (100.0 - p) / 100.0;
    }
    Factor::new(f.vars().to_vec(), f.domains().to_vec(), t).expect("same scope")
}

#[derive(Clone, Debug)]
pub struct ModuleConfig {
    pub atoms: usize,
    pub pieces: usize,
    pub joins: usize,
}

impl Default for ModuleConfig {
    fn default() -> Self {
        ModuleConfig { atoms: 3, pieces: 6, joins: 5 }
    }
}

/// Random atomic MLL module: axioms, weakenings and pending premises, then random
/// cuts and contractions between pending ends of the same atom. Joining ends of
/// an already connected piece creates cycles, so the output mixes correct and
/// incorrect modules.
pub fn random_module<R: Rng>(rng: &mut R, cfg: &ModuleConfig) -> Net {
    let names = ["a", "b", "c", "d", "e", "f"];
    let atoms: Vec<VariableId> = names[..cfg.atoms.clamp(1, names.len())].iter().map(|s| VariableId::new(s)).collect();
    let mut net = Net::new();
    for _ in 0..cfg.pieces {
        let x = atoms.choose(rng).unwrap();
        match rng.gen_range(0..5) {
            0 | 1 => {
                build::ax(&mut net, x);
            }
            2 => {
                build::weakening(&mut net, x);
            }
            3 => {
                net.add_edge(None, None, Formula::pos(x));
            }
            _ => {
                net.add_edge(None, None, Formula::neg(x));
            }
        }
    }
    for _ in 0..cfg.joins {
        let open: Vec<EdgeId> = net.conclusions().to_vec();
        let Some(&e) = open.choose(rng) else { break };
        let (x, pol) = {
            let (x, p) = net.edge(e).atom().unwrap();
            (x.clone(), p)
        };
        let cut = rng.gen_bool(0.5);
        let want = match (cut, pol) {
            (true, Pol::Pos) | (false, _) => Formula::neg(&x),
            (true, Pol::Neg) => Formula::pos(&x),
        };
        if !cut && pol == Pol::Pos {
            continue;
        }
        let partners: Vec<EdgeId> = open.iter().copied().filter(|&f| f != e && net.label(f) == &want).collect();
        let Some(&f) = partners.choose(rng) else { continue };
        if cut {
            build::cut(&mut net, e, f);
        } else {
            build::contract(&mut net, e, f);
        }
    }
    net
}

/// A compiled random network after `steps` random moves.
pub fn random_rewritten_net<R: Rng>(rng: &mut R, bn: &BayesNet<f64>, mode: CompileMode, steps: usize) -> Net {
    let (mut net, _) = compile_bn(bn, mode);
    for _ in 0..steps {
        let moves = candidate_moves(&net);
        let Some(m) = moves.choose(rng) else { break };
        if let Ok(next) = apply_move(&net, m) {
            net = next;
        }
    }
    net
}

/// Whether every node of a net is of an atomic MLL kind.
pub fn is_mll_module(net: &Net) -> bool {
    net.nodes().all(|(_, n)| matches!(n.kind, NodeKind::Ax | NodeKind::Cut | NodeKind::Contraction | NodeKind::Weakening))
}
