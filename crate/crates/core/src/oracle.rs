//! Classical inference oracles used to validate proof-net interpretation.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bayes::{state_cap, BayesError, BayesNet};
use crate::factorize::{net_families, CliqueTree, FactorizeError};
use crate::factors::{Assignment, Factor, FactorError, OpCount, VariableId};
use crate::net::Net;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("state space {size} exceeds cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error("incomplete order: {0}")]
    OrderIncomplete(String),
    #[error("query variable {0} appears in the elimination order")]
    QueryInOrder(VariableId),
    #[error("query variable {0} is not in the root clique")]
    QueryNotInRoot(VariableId),
    #[error("invalid clique tree: {0}")]
    InvalidTree(String),
    #[error("unknown variable {0}")]
    UnknownVariable(VariableId),
    #[error("unknown heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

fn check_known<S: Scalar>(bn: &BayesNet<S>, xs: &[VariableId]) -> Result<(), OracleError> {
    for x in xs {
        if bn.domain(x).is_none() {
            return Err(OracleError::UnknownVariable(x.clone()));
        }
    }
    Ok(())
}

/// Enumerates the joint table and sums onto `keep`.
pub fn brute_force_marginal<S: Scalar>(bn: &BayesNet<S>, keep: &[VariableId]) -> Result<Factor<S>, OracleError> {
    check_known(bn, keep)?;
    let joint = bn.joint_capped(state_cap()).map_err(|e| match e {
        BayesError::StateSpaceTooLarge { size, cap } => OracleError::StateSpaceTooLarge { size, cap },
        other => other.into(),
    })?;
    Ok(joint.project(keep)?)
}

/// One step of variable elimination.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VeStep {
    pub eliminated: VariableId,
    /// Scope of the product formed at this step.
    pub scope: BTreeSet<VariableId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VeTrace<S> {
    pub result: Factor<S>,
    pub steps: Vec<VeStep>,
    pub count: OpCount,
    /// Tables allocated by products and sums.
    pub tables: usize,
}

impl<S> VeTrace<S> {
    /// Largest product scope.
    pub fn max_scope(&self) -> usize {
        self.steps.iter().map(|s| s.scope.len()).max().unwrap_or(0)
    }
}

fn check_ve_order<S: Scalar>(bn: &BayesNet<S>, query: &[VariableId], order: &[VariableId]) -> Result<(), OracleError> {
    check_known(bn, query)?;
    check_known(bn, order)?;
    let q: BTreeSet<&VariableId> = query.iter().collect();
    let mut seen = BTreeSet::new();
    for z in order {
        if q.contains(z) {
            return Err(OracleError::QueryInOrder(z.clone()));
        }
        if !seen.insert(z) {
            return Err(OracleError::OrderIncomplete(format!("{z} repeats")));
        }
    }
    let missing: Vec<String> = bn
        .var_ids()
        .into_iter()
        .filter(|v| !q.contains(v) && !seen.contains(v))
        .map(|v| v.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(OracleError::OrderIncomplete(format!("missing {}", missing.join(", "))));
    }
    Ok(())
}

/// Sum-product variable elimination; `order` must list every non-query variable.
pub fn variable_elimination<S: Scalar>(
    bn: &BayesNet<S>,
    query: &[VariableId],
    order: &[VariableId],
) -> Result<Factor<S>, OracleError> {
    Ok(variable_elimination_traced(bn, query, order)?.result)
}

pub fn variable_elimination_traced<S: Scalar>(
    bn: &BayesNet<S>,
    query: &[VariableId],
    order: &[VariableId],
) -> Result<VeTrace<S>, OracleError> {
    check_ve_order(bn, query, order)?;
    let mut count = OpCount::default();
    let mut tables = 0;
    let mut pool: Vec<Factor<S>> = bn.cpts().map(|(_, f)| f.clone()).collect();
    let mut steps = vec![];
    for z in order {
        let (hit, rest): (Vec<Factor<S>>, Vec<Factor<S>>) = pool.into_iter().partition(|f| f.contains(z));
        pool = rest;
        let refs: Vec<&Factor<S>> = hit.iter().collect();
        let psi = Factor::multiply_all(&refs, &mut count)?;
        steps.push(VeStep { eliminated: z.clone(), scope: psi.vars().iter().cloned().collect() });
        let keep: Vec<VariableId> = psi.vars().iter().filter(|v| *v != z).cloned().collect();
        let tau = psi.project_counted(&keep, &mut count)?;
        tables += 2;
        pool.push(tau);
    }
    let refs: Vec<&Factor<S>> = pool.iter().collect();
    let last = Factor::multiply_all(&refs, &mut count)?;
    let mut q: Vec<VariableId> = query.to_vec();
    q.sort();
    q.dedup();
    let result = last.project_counted(&q, &mut count)?;
    tables += 2;
    Ok(VeTrace { result, steps, count, tables })
}

/// Clique tree following the computation of variable elimination along a full
/// order: one clique per step, an edge where a step's message is consumed, and
/// each CPT on the step that first uses it.
pub fn clique_tree_from_order<S: Scalar>(bn: &BayesNet<S>, order: &[VariableId]) -> Result<CliqueTree, OracleError> {
    check_ve_order(bn, &[], order)?;
    enum Item {
        Cpt(VariableId),
        Msg(usize),
    }
    let mut pool: Vec<(Item, BTreeSet<VariableId>)> = bn
        .cpts()
        .map(|(x, f)| (Item::Cpt(x.clone()), f.vars().iter().cloned().collect()))
        .collect();
    let mut cliques: Vec<BTreeSet<VariableId>> = vec![];
    let mut edges = vec![];
    let mut assignment = BTreeMap::new();
    for (i, z) in order.iter().enumerate() {
        let (hit, rest): (Vec<_>, Vec<_>) = pool.into_iter().partition(|(_, s)| s.contains(z));
        pool = rest;
        let mut c = BTreeSet::new();
        for (item, s) in hit {
            c.extend(s);
            match item {
                Item::Cpt(x) => {
                    assignment.insert(x, i);
                }
                Item::Msg(j) => edges.push((j, i)),
            }
        }
        let mut tau = c.clone();
        tau.remove(z);
        cliques.push(c);
        pool.push((Item::Msg(i), tau));
    }
    if let Some(last) = cliques.len().checked_sub(1) {
        for (item, _) in pool {
            if let Item::Msg(j) = item {
                if j != last {
                    edges.push((j, last));
                }
            }
        }
    }
    let separators = edges.iter().map(|&(a, b)| cliques[a].intersection(&cliques[b]).cloned().collect()).collect();
    Ok(CliqueTree { cliques, edges, separators, assignment })
}

/// CPT scopes of a network, keyed by child.
pub fn families<S: Scalar>(bn: &BayesNet<S>) -> BTreeMap<VariableId, BTreeSet<VariableId>> {
    bn.cpts().map(|(x, f)| (x.clone(), f.vars().iter().cloned().collect())).collect()
}

/// Single upward pass towards `root`; returns the projection of the root
/// potential onto `query`.
pub fn message_passing<S: Scalar>(
    bn: &BayesNet<S>,
    tree: &CliqueTree,
    root: usize,
    query: &[VariableId],
) -> Result<Factor<S>, OracleError> {
    check_known(bn, query)?;
    tree.verify(&families(bn)).map_err(|e| match e {
        FactorizeError::JointreeViolation(s) => OracleError::InvalidTree(s),
        other => OracleError::InvalidTree(other.to_string()),
    })?;
    if root >= tree.cliques.len() {
        return Err(OracleError::InvalidTree(format!("no clique {root}")));
    }
    for q in query {
        if !tree.cliques[root].contains(q) {
            return Err(OracleError::QueryNotInRoot(q.clone()));
        }
    }
    let mut assigned: Vec<Vec<&Factor<S>>> = vec![vec![]; tree.cliques.len()];
    for (x, &c) in &tree.assignment {
        assigned[c].push(bn.cpt(x));
    }
    let scope_of = |s: &BTreeSet<VariableId>| -> Vec<(VariableId, std::sync::Arc<crate::factors::Domain>)> {
        s.iter().map(|v| (v.clone(), bn.domain(v).expect("known variable").clone())).collect()
    };
    // Iterative post-order from the root.
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; tree.cliques.len()];
    let mut order = vec![];
    let mut stack = vec![root];
    let mut seen = vec![false; tree.cliques.len()];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        order.push(u);
        for (v, k) in tree.neighbours(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((u, k));
                stack.push(v);
            }
        }
    }
    let mut inbox: Vec<Vec<Factor<S>>> = vec![vec![]; tree.cliques.len()];
    let mut count = OpCount::default();
    for &u in order.iter().rev() {
        let msgs = std::mem::take(&mut inbox[u]);
        let mut refs: Vec<&Factor<S>> = assigned[u].clone();
        refs.extend(msgs.iter());
        let psi = Factor::multiply_all(&refs, &mut count)?;
        match parent[u] {
            Some((p, k)) => {
                let m = psi.project_extend(&scope_of(&tree.separators[k]), &mut count)?;
                inbox[p].push(m);
            }
            None => {
                let q: BTreeSet<VariableId> = query.iter().cloned().collect();
                return Ok(psi.project_extend(&scope_of(&q), &mut count)?);
            }
        }
    }
    unreachable!("root is visited last")
}

/// Greedy elimination heuristics on the moral graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Heuristic {
    MinDegree,
    MinFill,
    Given(Vec<VariableId>),
}

impl FromStr for Heuristic {
    type Err = OracleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-degree" => Ok(Heuristic::MinDegree),
            "min-fill" => Ok(Heuristic::MinFill),
            other => Err(OracleError::UnknownHeuristic(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EliminationOrder {
    pub order: Vec<VariableId>,
    /// Largest product scope along the order, minus one.
    pub width: usize,
}

fn moral_graph(vars: &[VariableId], families: &[BTreeSet<VariableId>]) -> BTreeMap<VariableId, BTreeSet<VariableId>> {
    let mut g: BTreeMap<VariableId, BTreeSet<VariableId>> = vars.iter().map(|v| (v.clone(), BTreeSet::new())).collect();
    for fam in families {
        for a in fam {
            for b in fam {
                if a != b {
                    g.entry(a.clone()).or_default().insert(b.clone());
                }
            }
            g.entry(a.clone()).or_default();
        }
    }
    g
}

fn eliminate_vertex(g: &mut BTreeMap<VariableId, BTreeSet<VariableId>>, z: &VariableId) -> usize {
    let nbrs = g.remove(z).unwrap_or_default();
    for a in &nbrs {
        let set = g.get_mut(a).unwrap();
        set.remove(z);
        for b in &nbrs {
            if a != b {
                set.insert(b.clone());
            }
        }
    }
    nbrs.len()
}

fn fill_in(g: &BTreeMap<VariableId, BTreeSet<VariableId>>, z: &VariableId) -> usize {
    let nbrs: Vec<&VariableId> = g[z].iter().collect();
    let mut n = 0;
    for (i, a) in nbrs.iter().enumerate() {
        for b in &nbrs[i + 1..] {
            if !g[*a].contains(*b) {
                n += 1;
            }
        }
    }
    n
}

/// Width of eliminating `order` (possibly partial) on the graph of `families`.
pub fn induced_width(vars: &[VariableId], families: &[BTreeSet<VariableId>], order: &[VariableId]) -> usize {
    let mut g = moral_graph(vars, families);
    order.iter().map(|z| eliminate_vertex(&mut g, z)).max().unwrap_or(0)
}

/// Greedy order over `vars`; ties go to the smallest variable.
pub fn heuristic_order(vars: &[VariableId], families: &[BTreeSet<VariableId>], h: &Heuristic) -> EliminationOrder {
    if let Heuristic::Given(order) = h {
        return EliminationOrder { order: order.clone(), width: induced_width(vars, families, order) };
    }
    let mut g = moral_graph(vars, families);
    let mut order = vec![];
    let mut width = 0;
    while !g.is_empty() {
        let z = g
            .keys()
            .min_by_key(|z| match h {
                Heuristic::MinDegree => g[*z].len(),
                _ => fill_in(&g, z),
            })
            .unwrap()
            .clone();
        width = width.max(eliminate_vertex(&mut g, &z));
        order.push(z);
    }
    EliminationOrder { order, width }
}

pub fn heuristic_order_bn<S: Scalar>(bn: &BayesNet<S>, h: &Heuristic) -> EliminationOrder {
    let fams: Vec<BTreeSet<VariableId>> = families(bn).into_values().collect();
    heuristic_order(&bn.var_ids(), &fams, h)
}

/// Order over the atoms of a net, using box scopes as families.
pub fn heuristic_order_net(net: &Net, h: &Heuristic) -> EliminationOrder {
    let vars: Vec<VariableId> = net.atoms().into_iter().collect();
    heuristic_order(&vars, &net_families(net), h)
}

/// Ancestral sampling in topological order, reproducible from `seed`.
pub fn forward_sample<S: Scalar>(bn: &BayesNet<S>, seed: u64, count: usize) -> Result<Vec<Assignment>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = bn.topological_order()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut a = Assignment::new();
        for x in &topo {
            let f = bn.cpt(x);
            let k = bn.domain(x).expect("known variable").size();
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = k - 1;
            for i in 0..k {
                a.insert(x.clone(), i);
                acc += f.value(&a)?.to_f64().unwrap_or(0.0);
                if u < acc {
                    pick = i;
                    break;
                }
            }
            a.insert(x.clone(), pick);
        }
        out.push(a);
    }
    Ok(out)
}
