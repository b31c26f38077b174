//! Bayesian networks, valuations, and the translation to and from Bayesian
//! proof-nets.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{Assignment, Domain, Factor, FactorError, OpCount, VariableId};
use crate::net::{bnet, build, is_bpn, EdgeId, Formula, Net, NetError, NodeId, Pol};
use crate::Scalar;

pub const DEFAULT_STATE_CAP: u128 = 1 << 22;
pub const CPT_TOL: f64 = 1e-9;

/// Brute-force state-space cap, overridable through `BPN_STATE_CAP`.
pub fn state_cap() -> u128 {
    std::env::var("BPN_STATE_CAP").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_STATE_CAP)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("cycle in DAG through {0:?}")]
    CycleInDag(Vec<VariableId>),
    #[error("CPT of {child}: row {row:?} sums to {sum}")]
    RowNotNormalized { child: VariableId, row: Vec<(VariableId, usize)>, sum: f64 },
    #[error("{child} lists unknown parent {parent}")]
    UnknownParent { child: VariableId, parent: VariableId },
    #[error("state space {size} exceeds cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error("not a Bayesian proof-net: {0}")]
    NotBpn(String),
    #[error("valuation mismatch: {0}")]
    ValuationMismatch(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet<S> {
    vars: Vec<(VariableId, Arc<Domain>)>,
    parents: BTreeMap<VariableId, Vec<VariableId>>,
    cpts: BTreeMap<VariableId, Factor<S>>,
}

impl<S: Scalar> BayesNet<S> {
    /// Validates scopes, parent references, acyclicity and CPT rows.
    pub fn new(
        vars: Vec<(VariableId, Arc<Domain>)>,
        parents: BTreeMap<VariableId, Vec<VariableId>>,
        cpts: BTreeMap<VariableId, Factor<S>>,
    ) -> Result<Self, BayesError> {
        let mut names = BTreeSet::new();
        for (v, _) in &vars {
            if !names.insert(v.clone()) {
                return Err(BayesError::SchemaError(format!("duplicate variable {v}")));
            }
        }
        for (v, _) in &vars {
            let ps = parents.get(v).ok_or_else(|| BayesError::SchemaError(format!("no parent list for {v}")))?;
            let mut seen = BTreeSet::new();
            for p in ps {
                if !names.contains(p) {
                    return Err(BayesError::UnknownParent { child: v.clone(), parent: p.clone() });
                }
                if p == v || !seen.insert(p) {
                    return Err(BayesError::SchemaError(format!("bad parent list for {v}")));
                }
            }
            let f = cpts.get(v).ok_or_else(|| BayesError::SchemaError(format!("no CPT for {v}")))?;
            let mut scope: Vec<VariableId> = ps.clone();
            scope.push(v.clone());
            scope.sort();
            if f.vars() != scope.as_slice() {
                return Err(BayesError::SchemaError(format!("CPT of {v} has scope {:?}", f.vars())));
            }
            for (x, d) in &vars {
                if let Some(fd) = f.domain_of(x) {
                    if **fd != **d {
                        return Err(FactorError::DomainMismatch(x.clone()).into());
                    }
                }
            }
            match f.validate_cpt(v, CPT_TOL) {
                Ok(()) => {}
                Err(FactorError::RowNotNormalized { row, sum }) => {
                    return Err(BayesError::RowNotNormalized { child: v.clone(), row, sum })
                }
                Err(e) => return Err(e.into()),
            }
        }
        if parents.len() != vars.len() || cpts.len() != vars.len() {
            return Err(BayesError::SchemaError("parents or CPTs for undeclared variables".into()));
        }
        let bn = BayesNet { vars, parents, cpts };
        bn.topological_order()?;
        Ok(bn)
    }

    pub fn variables(&self) -> &[(VariableId, Arc<Domain>)] {
        &self.vars
    }

    pub fn var_ids(&self) -> Vec<VariableId> {
        self.vars.iter().map(|(v, _)| v.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn domain(&self, x: &VariableId) -> Option<&Arc<Domain>> {
        self.vars.iter().find(|(v, _)| v == x).map(|(_, d)| d)
    }

    pub fn parents(&self, x: &VariableId) -> &[VariableId] {
        &self.parents[x]
    }

    pub fn cpt(&self, x: &VariableId) -> &Factor<S> {
        &self.cpts[x]
    }

    pub fn cpts(&self) -> impl Iterator<Item = (&VariableId, &Factor<S>)> {
        self.cpts.iter()
    }

    /// Variables that list `x` as a parent, in declaration order.
    pub fn children(&self, x: &VariableId) -> Vec<VariableId> {
        self.vars.iter().filter(|(v, _)| self.parents[v].contains(x)).map(|(v, _)| v.clone()).collect()
    }

    /// Parents before children; ties broken by declaration order.
    pub fn topological_order(&self) -> Result<Vec<VariableId>, BayesError> {
        let mut done: BTreeSet<VariableId> = BTreeSet::new();
        let mut out = vec![];
        while out.len() < self.vars.len() {
            let next = self
                .vars
                .iter()
                .find(|(v, _)| !done.contains(v) && self.parents[v].iter().all(|p| done.contains(p)));
            match next {
                Some((v, _)) => {
                    done.insert(v.clone());
                    out.push(v.clone());
                }
                None => {
                    let rest = self.vars.iter().filter(|(v, _)| !done.contains(v)).map(|(v, _)| v.clone()).collect();
                    return Err(BayesError::CycleInDag(rest));
                }
            }
        }
        Ok(out)
    }

    /// Product of the domain sizes.
    pub fn state_space(&self) -> u128 {
        self.vars.iter().fold(1u128, |a, (_, d)| a.saturating_mul(d.size() as u128))
    }

    pub fn check_state_space(&self, cap: u128) -> Result<(), BayesError> {
        let size = self.state_space();
        if size > cap {
            return Err(BayesError::StateSpaceTooLarge { size, cap });
        }
        Ok(())
    }

    /// Product of every CPT over all variables.
    pub fn joint(&self) -> Result<Factor<S>, BayesError> {
        self.joint_capped(state_cap())
    }

    pub fn joint_capped(&self, cap: u128) -> Result<Factor<S>, BayesError> {
        self.check_state_space(cap)?;
        let fs: Vec<&Factor<S>> = self.cpts.values().collect();
        let (vars, domains): (Vec<_>, Vec<_>) = {
            let mut all = self.vars.clone();
            all.sort_by(|a, b| a.0.cmp(&b.0));
            all.into_iter().unzip()
        };
        Ok(Factor::product_over(vars, domains, &fs, &mut OpCount::default())?)
    }

    pub fn to_json(&self) -> BnJson {
        BnJson {
            variables: self
                .vars
                .iter()
                .map(|(v, d)| VariableJson { name: v.to_string(), values: d.values().to_vec() })
                .collect(),
            cpts: self
                .vars
                .iter()
                .map(|(v, _)| cpt_to_json(v, &self.parents[v], &self.cpts[v]))
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serializable")
    }

    pub fn cast<T: Scalar>(&self) -> BayesNet<T> {
        BayesNet {
            vars: self.vars.clone(),
            parents: self.parents.clone(),
            cpts: self.cpts.iter().map(|(k, f)| (k.clone(), f.cast())).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VariableJson {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CptJson {
    pub child: String,
    pub parents: Vec<String>,
    pub table: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BnJson {
    pub variables: Vec<VariableJson>,
    pub cpts: Vec<CptJson>,
}

fn cpt_to_json<S: Scalar>(child: &VariableId, parents: &[VariableId], f: &Factor<S>) -> CptJson {
    let pdoms: Vec<usize> = parents.iter().map(|p| f.domain_of(p).unwrap().size()).collect();
    let rows: usize = pdoms.iter().product();
    let csize = f.domain_of(child).unwrap().size();
    let mut table = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut a = Assignment::new();
        let mut rem = r;
        for (i, p) in parents.iter().enumerate().rev() {
            a.insert(p.clone(), rem % pdoms[i]);
            rem /= pdoms[i];
        }
        let row = (0..csize)
            .map(|c| {
                a.insert(child.clone(), c);
                f.value(&a).unwrap().to_f64().unwrap()
            })
            .collect();
        table.push(row);
    }
    CptJson { child: child.to_string(), parents: parents.iter().map(|p| p.to_string()).collect(), table }
}

fn cpt_from_json<S: Scalar>(
    c: &CptJson,
    domains: &BTreeMap<VariableId, Arc<Domain>>,
) -> Result<(VariableId, Vec<VariableId>, Factor<S>), BayesError> {
    if c.child.is_empty() {
        return Err(BayesError::SchemaError("empty child name".into()));
    }
    let child = VariableId::new(&c.child);
    let cd = domains.get(&child).ok_or_else(|| BayesError::SchemaError(format!("CPT for undeclared {child}")))?;
    let mut parents = vec![];
    let mut pdoms = vec![];
    for p in &c.parents {
        if p.is_empty() {
            return Err(BayesError::SchemaError("empty parent name".into()));
        }
        let pv = VariableId::new(p);
        let d = domains
            .get(&pv)
            .ok_or_else(|| BayesError::UnknownParent { child: child.clone(), parent: pv.clone() })?;
        pdoms.push(d.clone());
        parents.push(pv);
    }
    let rows: usize = pdoms.iter().map(|d| d.size()).product();
    if c.table.len() != rows {
        return Err(BayesError::SchemaError(format!("CPT of {child}: expected {rows} rows, got {}", c.table.len())));
    }
    let mut flat = Vec::with_capacity(rows * cd.size());
    for (i, row) in c.table.iter().enumerate() {
        if row.len() != cd.size() {
            return Err(BayesError::SchemaError(format!("CPT of {child}: row {i} has {} entries", row.len())));
        }
        for &x in row {
            flat.push(S::from_f64(x).ok_or_else(|| BayesError::SchemaError("bad number".into()))?);
        }
    }
    let mut vars = parents.clone();
    vars.push(child.clone());
    let mut doms = pdoms;
    doms.push(cd.clone());
    let f = Factor::new(vars, doms, flat)?;
    match f.validate_cpt(&child, CPT_TOL) {
        Ok(()) => {}
        Err(FactorError::RowNotNormalized { row, sum }) => {
            return Err(BayesError::RowNotNormalized { child, row, sum })
        }
        Err(e) => return Err(e.into()),
    }
    Ok((child, parents, f))
}

fn domains_from_json(vs: &[VariableJson]) -> Result<Vec<(VariableId, Arc<Domain>)>, BayesError> {
    let mut out = vec![];
    for v in vs {
        if v.name.is_empty() {
            return Err(BayesError::SchemaError("empty variable name".into()));
        }
        let d = Domain::new(v.values.iter().cloned()).map_err(|e| BayesError::SchemaError(e.to_string()))?;
        out.push((VariableId::new(&v.name), Arc::new(d)));
    }
    Ok(out)
}

/// Parses and validates a network in the JSON exchange format.
pub fn parse_bn<S: Scalar>(bytes: &[u8]) -> Result<BayesNet<S>, BayesError> {
    let j: BnJson = serde_json::from_slice(bytes).map_err(|e| BayesError::SchemaError(e.to_string()))?;
    bn_from_json(&j)
}

pub fn bn_from_json<S: Scalar>(j: &BnJson) -> Result<BayesNet<S>, BayesError> {
    let vars = domains_from_json(&j.variables)?;
    let dmap: BTreeMap<VariableId, Arc<Domain>> = vars.iter().cloned().collect();
    if dmap.len() != vars.len() {
        return Err(BayesError::SchemaError("duplicate variable".into()));
    }
    let mut parents = BTreeMap::new();
    let mut cpts = BTreeMap::new();
    for c in &j.cpts {
        let (child, ps, f) = cpt_from_json(c, &dmap)?;
        if cpts.insert(child.clone(), f).is_some() {
            return Err(BayesError::SchemaError(format!("two CPTs for {child}")));
        }
        parents.insert(child, ps);
    }
    for (v, _) in &vars {
        if !cpts.contains_key(v) {
            return Err(BayesError::SchemaError(format!("no CPT for {v}")));
        }
    }
    BayesNet::new(vars, parents, cpts)
}

/// Value sets for atoms and a CPT per box, keyed by the box's positive atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Valuation<S> {
    pub domains: BTreeMap<VariableId, Arc<Domain>>,
    pub cpts: BTreeMap<VariableId, Factor<S>>,
    /// Parent order per box, used for serialization.
    pub parents: BTreeMap<VariableId, Vec<VariableId>>,
}

impl<S: Scalar> Valuation<S> {
    pub fn from_bn(bn: &BayesNet<S>) -> Self {
        Valuation {
            domains: bn.vars.iter().cloned().collect(),
            cpts: bn.cpts.clone(),
            parents: bn.parents.clone(),
        }
    }

    /// The CPT of box `b`, checked against the box's conclusion atoms.
    pub fn box_cpt(&self, net: &Net, b: NodeId) -> Result<&Factor<S>, BayesError> {
        let x = net.box_atom(b).ok_or_else(|| BayesError::NotBpn(format!("box {b} has no positive conclusion")))?;
        let f = self.cpts.get(&x).ok_or_else(|| BayesError::ValuationMismatch(format!("no CPT for box {x}")))?;
        let mut atoms: Vec<VariableId> =
            net.node(b).conclusions.iter().filter_map(|&e| net.edge(e).atom().map(|(a, _)| a.clone())).collect();
        atoms.sort();
        if f.vars() != atoms.as_slice() {
            return Err(BayesError::ValuationMismatch(format!(
                "CPT of {x} has scope {:?} but the box has atoms {atoms:?}",
                f.vars()
            )));
        }
        Ok(f)
    }

    /// Every box has a matching CPT and every atom a domain.
    pub fn check(&self, net: &Net) -> Result<(), BayesError> {
        for b in net.box_nodes() {
            self.box_cpt(net, b)?;
        }
        for a in net.atoms() {
            if !self.domains.contains_key(&a) {
                return Err(BayesError::ValuationMismatch(format!("no domain for atom {a}")));
            }
        }
        Ok(())
    }

    pub fn domain(&self, x: &VariableId) -> Result<&Arc<Domain>, BayesError> {
        self.domains.get(x).ok_or_else(|| BayesError::ValuationMismatch(format!("no domain for atom {x}")))
    }

    /// Same schema as a network file.
    pub fn to_json(&self) -> BnJson {
        BnJson {
            variables: self
                .domains
                .iter()
                .map(|(v, d)| VariableJson { name: v.to_string(), values: d.values().to_vec() })
                .collect(),
            cpts: self
                .cpts
                .iter()
                .map(|(x, f)| {
                    let ps: Vec<VariableId> = match self.parents.get(x) {
                        Some(p) => p.clone(),
                        None => f.vars().iter().filter(|v| *v != x).cloned().collect(),
                    };
                    cpt_to_json(x, &ps, f)
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serializable")
    }

    /// Reads a valuation; CPT rows are validated but no DAG is required.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, BayesError> {
        let j: BnJson = serde_json::from_slice(bytes).map_err(|e| BayesError::SchemaError(e.to_string()))?;
        let vars = domains_from_json(&j.variables)?;
        let domains: BTreeMap<VariableId, Arc<Domain>> = vars.into_iter().collect();
        let mut cpts = BTreeMap::new();
        let mut parents = BTreeMap::new();
        for c in &j.cpts {
            let (x, ps, f) = cpt_from_json(c, &domains)?;
            cpts.insert(x.clone(), f);
            parents.insert(x, ps);
        }
        Ok(Valuation { domains, cpts, parents })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompileMode {
    /// Every variable is a positive conclusion.
    Positive,
    /// Every variable is hidden: the net has no conclusions.
    Empty,
}

/// Translates a network into a normal Bayesian proof-net and its valuation.
pub fn compile_bn<S: Scalar>(bn: &BayesNet<S>, mode: CompileMode) -> (Net, Valuation<S>) {
    let mut net = Net::new();
    let mut producer: BTreeMap<VariableId, EdgeId> = BTreeMap::new();
    let mut consumers: BTreeMap<VariableId, Vec<EdgeId>> =
        bn.vars.iter().map(|(v, _)| (v.clone(), vec![])).collect();
    for (v, _) in &bn.vars {
        let (_, pos, negs) = build::boxed(&mut net, v, &bn.parents[v]);
        producer.insert(v.clone(), pos);
        for (p, e) in bn.parents[v].iter().zip(negs) {
            consumers.get_mut(p).unwrap().push(e);
        }
    }
    for (v, _) in &bn.vars {
        let pos = producer[v];
        let mut leaves = consumers[v].clone();
        match mode {
            CompileMode::Empty => {
                let root = if leaves.is_empty() {
                    build::weakening(&mut net, v).1
                } else {
                    build::comb(&mut net, &leaves)
                };
                build::cut(&mut net, pos, root);
            }
            CompileMode::Positive => {
                if leaves.is_empty() {
                    continue;
                }
                let (_, axp, axm) = build::ax(&mut net, v);
                leaves.push(axm);
                let root = build::comb(&mut net, &leaves);
                build::cut(&mut net, pos, root);
                let _ = axp;
            }
        }
    }
    if mode == CompileMode::Positive {
        // Conclusions in declaration order.
        let order: Vec<EdgeId> = bn
            .vars
            .iter()
            .map(|(v, _)| {
                *net.conclusions().iter().find(|&&c| *net.label(c) == Formula::pos(v)).unwrap()
            })
            .collect();
        for (i, e) in order.into_iter().enumerate() {
            net.insert_conclusion(i, e);
        }
    }
    (net, Valuation::from_bn(bn))
}

/// Reads back a network from a positive or conclusion-free bpn and its valuation.
pub fn extract_bn<S: Scalar>(net: &Net, val: &Valuation<S>) -> Result<BayesNet<S>, BayesError> {
    let rep = is_bpn(net)?;
    if !rep.is_bpn {
        return Err(BayesError::NotBpn(rep.violations.join("; ")));
    }
    if net.conclusions().iter().any(|&c| !matches!(net.edge(c).atom(), Some((_, Pol::Pos)))) {
        return Err(BayesError::NotBpn("net has a negative conclusion".into()));
    }
    val.check(net)?;
    let dag = bnet(net)?;
    let dag_parents = dag.parents();
    let mut vars = vec![];
    let mut parents = BTreeMap::new();
    let mut cpts = BTreeMap::new();
    for b in net.box_nodes() {
        let x = net.box_atom(b).unwrap();
        let ps: Vec<VariableId> = net
            .node(b)
            .conclusions
            .iter()
            .filter_map(|&e| match net.edge(e).atom() {
                Some((a, Pol::Neg)) => Some(a.clone()),
                _ => None,
            })
            .collect();
        let set: BTreeSet<VariableId> = ps.iter().cloned().collect();
        if set != dag_parents[&x] {
            return Err(BayesError::ValuationMismatch(format!(
                "box {x} reads {set:?} but its parents in the box DAG are {:?}",
                dag_parents[&x]
            )));
        }
        vars.push((x.clone(), val.domain(&x)?.clone()));
        cpts.insert(x.clone(), val.box_cpt(net, b)?.clone());
        parents.insert(x, ps);
    }
    BayesNet::new(vars, parents, cpts)
}

/// Evidence parsed from `X=value` labels.
pub fn parse_evidence(bn_domains: &BTreeMap<VariableId, Arc<Domain>>, items: &[String]) -> Result<Assignment, BayesError> {
    let mut out = Assignment::new();
    for it in items {
        let (k, v) = it
            .split_once('=')
            .ok_or_else(|| BayesError::SchemaError(format!("evidence {it:?} is not X=value")))?;
        let x = VariableId::new(k.trim());
        let d = bn_domains.get(&x).ok_or_else(|| BayesError::Factor(FactorError::UnknownVariable(x.clone())))?;
        let i = d
            .index_of(v.trim())
            .ok_or_else(|| BayesError::Factor(FactorError::ValueOutOfRange { var: x.clone(), index: usize::MAX }))?;
        out.insert(x, i);
    }
    Ok(out)
}
