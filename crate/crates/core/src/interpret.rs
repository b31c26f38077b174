//! Interpretation of Bayesian proof-nets as factors over their conclusion atoms.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::bayes::{state_cap, BayesError, Valuation};
use crate::factorize::{CompKind, FactorizedNet};
use crate::factors::{Domain, Factor, FactorError, OpCount, VariableId};
use crate::net::{is_bpn, Net, NetError};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpretError {
    #[error("not a Bayesian proof-net: {0}")]
    NotBpn(String),
    #[error("missing valuation: {0}")]
    MissingValuation(String),
    #[error("state space {size} exceeds cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Net(#[from] NetError),
}

impl From<BayesError> for InterpretError {
    fn from(e: BayesError) -> Self {
        match e {
            BayesError::NotBpn(s) => InterpretError::NotBpn(s),
            BayesError::Factor(f) => InterpretError::Factor(f),
            BayesError::Net(n) => InterpretError::Net(n),
            BayesError::StateSpaceTooLarge { size, cap } => InterpretError::StateSpaceTooLarge { size, cap },
            other => InterpretError::MissingValuation(other.to_string()),
        }
    }
}

/// Counters gathered while interpreting a factorized net.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostReport {
    /// Components minus one.
    pub m_r: usize,
    pub width: usize,
    pub cells: u64,
    pub mul_adds: u64,
    /// Largest table the evaluation allocates.
    pub max_state_space: u128,
    /// `max(m_r, 1)` times the largest table.
    pub predicted_bound: u128,
}

fn scope<S: Scalar>(
    val: &Valuation<S>,
    atoms: impl IntoIterator<Item = VariableId>,
) -> Result<Vec<(VariableId, Arc<Domain>)>, InterpretError> {
    let mut out = vec![];
    for x in atoms {
        let d = val.domain(&x)?.clone();
        out.push((x, d));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    Ok(out)
}

fn size_of(scope: &[(VariableId, Arc<Domain>)]) -> u128 {
    scope.iter().map(|(_, d)| d.size() as u128).product()
}

fn check_cap(size: u128) -> Result<(), InterpretError> {
    let cap = state_cap();
    if size > cap {
        return Err(InterpretError::StateSpaceTooLarge { size, cap });
    }
    Ok(())
}

/// Product of every box CPT over all atoms, projected onto the conclusion atoms.
pub fn interpret_naive<S: Scalar>(net: &Net, val: &Valuation<S>) -> Result<Factor<S>, InterpretError> {
    interpret_naive_counted(net, val, &mut OpCount::default())
}

pub fn interpret_naive_counted<S: Scalar>(
    net: &Net,
    val: &Valuation<S>,
    count: &mut OpCount,
) -> Result<Factor<S>, InterpretError> {
    let r = is_bpn(net)?;
    if !r.is_bpn {
        return Err(InterpretError::NotBpn(r.violations.join("; ")));
    }
    val.check(net)?;
    let boxes = net.boxes_by_atom();
    let mut cpts = vec![];
    let mut atoms = net.conclusion_atoms();
    for &b in boxes.values() {
        let f = val.box_cpt(net, b)?;
        atoms.extend(f.vars().iter().cloned());
        cpts.push(f);
    }
    let all = scope(val, atoms)?;
    check_cap(size_of(&all))?;
    let (vars, doms): (Vec<_>, Vec<_>) = all.into_iter().unzip();
    let joint = Factor::product_over(vars, doms, &cpts, count)?;
    let out = scope(val, net.conclusion_atoms())?;
    Ok(joint.project_extend(&out, count)?)
}

/// Bottom-up evaluation of a factorized net: each wiring multiplies its
/// children's results over its own atoms and passes up its output atoms.
pub fn interpret_turbo<S: Scalar>(f: &FactorizedNet, val: &Valuation<S>) -> Result<Factor<S>, InterpretError> {
    interpret_turbo_counted(f, val, &mut OpCount::default())
}

pub fn interpret_turbo_counted<S: Scalar>(
    f: &FactorizedNet,
    val: &Valuation<S>,
    count: &mut OpCount,
) -> Result<Factor<S>, InterpretError> {
    val.check(&f.net)?;
    let mut results: Vec<Option<Factor<S>>> = vec![None; f.comps.len()];
    for i in f.post_order() {
        let c = &f.comps[i];
        let out = scope(val, c.output_atoms.iter().cloned())?;
        let r = match c.kind {
            CompKind::Leaf(b) => val.box_cpt(&f.net, b)?.project_extend(&out, count)?,
            CompKind::Wiring => {
                let at = scope(val, c.atoms.iter().cloned())?;
                check_cap(size_of(&at))?;
                let kids: Vec<Factor<S>> =
                    c.children.iter().map(|&k| results[k].take().expect("child evaluated first")).collect();
                let refs: Vec<&Factor<S>> = kids.iter().collect();
                let (vars, doms): (Vec<_>, Vec<_>) = at.into_iter().unzip();
                Factor::product_over(vars, doms, &refs, count)?.project_extend(&out, count)?
            }
        };
        results[i] = Some(r);
    }
    let mut tops: Vec<Factor<S>> = f.roots.iter().map(|&r| results[r].take().expect("root evaluated")).collect();
    let joined = if tops.len() == 1 {
        tops.pop().expect("one root")
    } else {
        let refs: Vec<&Factor<S>> = tops.iter().collect();
        Factor::multiply_all(&refs, count)?
    };
    let out = scope(val, f.net.conclusion_atoms())?;
    if joined.vars().iter().eq(out.iter().map(|(x, _)| x)) {
        return Ok(joined);
    }
    Ok(joined.project_extend(&out, count)?)
}

/// Runs the tree evaluation and reports its cost next to the predicted bound.
pub fn measure_cost<S: Scalar>(
    f: &FactorizedNet,
    val: &Valuation<S>,
) -> Result<(Factor<S>, CostReport), InterpretError> {
    let mut count = OpCount::default();
    let result = interpret_turbo_counted(f, val, &mut count)?;
    let mut max_space = 0u128;
    for c in &f.comps {
        let s = size_of(&scope(val, c.atoms.iter().cloned())?);
        if c.is_wiring() || f.wirings().is_empty() {
            max_space = max_space.max(s);
        }
    }
    let m_r = f.m_r();
    Ok((
        result,
        CostReport {
            m_r,
            width: f.width(),
            cells: count.cells,
            mul_adds: count.mul_adds,
            max_state_space: max_space,
            predicted_bound: (m_r.max(1) as u128) * max_space,
        },
    ))
}
