//! Reduction and expansion rules on nets, normalization, and the Hide/Show
//! operations on atomic conclusions.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::factors::VariableId;
use crate::net::{internal_atoms, EdgeId, Formula, Net, NodeId, NodeKind, Pol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    AxCut,
    CW,
    CAss,
    CId,
    TensorPar,
    AxExpand,
    CAssExpand,
    CWExpand,
    CIdExpand,
}

impl RuleKind {
    pub fn is_atomic_rule(self) -> bool {
        !matches!(self, RuleKind::TensorPar)
    }

    pub fn is_expansion(self) -> bool {
        matches!(self, RuleKind::AxExpand | RuleKind::CAssExpand | RuleKind::CWExpand | RuleKind::CIdExpand)
    }
}

/// An occurrence of a rule's left-hand side.
///
/// Sites: `AxCut` [ax, cut]; `CW` [contraction, weakening]; `CAss` and
/// `CAssExpand` [outer, inner]; `CId` [contraction]; `TensorPar` [cut, tensor,
/// par]; `AxExpand`, `CWExpand`, `CIdExpand` [edge].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Redex {
    pub site: Vec<usize>,
    pub rule: RuleKind,
}

impl fmt::Display for Redex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rule)?;
        for s in &self.site {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewriteError {
    #[error("redex {0} is not present")]
    StaleRedex(String),
    #[error("normalization exceeded {0} steps")]
    StepLimitExceeded(usize),
    #[error("{0}+ is not a conclusion")]
    NoSuchConclusion(VariableId),
    #[error("{0} is not an internal atom")]
    NotInternal(VariableId),
    #[error("no cut on {0}")]
    NoCut(VariableId),
}

/// Binary contraction whose right premise is the conclusion of another binary
/// contraction.
fn cass_inner(net: &Net, n: NodeId, port: usize) -> Option<NodeId> {
    let node = net.try_node(n)?;
    if node.kind != NodeKind::Contraction || node.premises.len() != 2 {
        return None;
    }
    let m = net.edge(node.premises[port]).src?;
    let inner = net.node(m);
    (inner.kind == NodeKind::Contraction && inner.premises.len() == 2 && m != n).then_some(m)
}

fn matches(net: &Net, r: &Redex) -> bool {
    let s = &r.site;
    let node_is = |n: NodeId, k: NodeKind| net.try_node(n).is_some_and(|x| x.kind == k);
    match r.rule {
        RuleKind::AxCut => {
            if s.len() != 2 || !node_is(s[0], NodeKind::Ax) || !node_is(s[1], NodeKind::Cut) {
                return false;
            }
            let concl = &net.node(s[0]).conclusions;
            let into_cut = concl.iter().filter(|&&e| net.edge(e).dst == Some(s[1])).count();
            into_cut == 1
        }
        RuleKind::CW => {
            s.len() == 2
                && node_is(s[0], NodeKind::Contraction)
                && node_is(s[1], NodeKind::Weakening)
                && net.node(s[1]).conclusions.iter().any(|&e| net.edge(e).dst == Some(s[0]))
        }
        RuleKind::CId => {
            s.len() == 1 && node_is(s[0], NodeKind::Contraction) && net.node(s[0]).premises.len() == 1 && {
                let p = net.node(s[0]).premises[0];
                net.edge(p).src.is_none_or(|src| net.kind(src) != NodeKind::Weakening)
            }
        }
        RuleKind::CAss => s.len() == 2 && cass_inner(net, s[0], 1) == Some(s[1]),
        RuleKind::CAssExpand => s.len() == 2 && cass_inner(net, s[0], 0) == Some(s[1]),
        RuleKind::TensorPar => {
            if s.len() != 3 || !node_is(s[0], NodeKind::Cut) {
                return false;
            }
            let prem = &net.node(s[0]).premises;
            let srcs: BTreeSet<Option<NodeId>> = prem.iter().map(|&e| net.edge(e).src).collect();
            node_is(s[1], NodeKind::Tensor)
                && node_is(s[2], NodeKind::Par)
                && srcs.contains(&Some(s[1]))
                && srcs.contains(&Some(s[2]))
        }
        RuleKind::AxExpand => s.len() == 1 && net.try_edge(s[0]).is_some_and(|e| e.label.is_atomic()),
        RuleKind::CWExpand | RuleKind::CIdExpand => {
            s.len() == 1 && net.try_edge(s[0]).is_some_and(|e| matches!(e.atom(), Some((_, Pol::Neg))))
        }
    }
}

/// Every reduction redex, ordered by site ids.
pub fn find_redexes(net: &Net) -> Vec<Redex> {
    let mut out = vec![];
    for (id, node) in net.nodes() {
        match node.kind {
            NodeKind::Cut => {
                for &p in &node.premises {
                    if let Some(src) = net.edge(p).src {
                        let r = Redex { rule: RuleKind::AxCut, site: vec![src, id] };
                        if net.kind(src) == NodeKind::Ax && matches(net, &r) {
                            out.push(r);
                        }
                    }
                }
                let srcs: Vec<Option<NodeId>> = node.premises.iter().map(|&e| net.edge(e).src).collect();
                let find = |k: NodeKind| srcs.iter().flatten().copied().find(|&s| net.kind(s) == k);
                if let (Some(t), Some(p)) = (find(NodeKind::Tensor), find(NodeKind::Par)) {
                    out.push(Redex { rule: RuleKind::TensorPar, site: vec![id, t, p] });
                }
            }
            NodeKind::Contraction => {
                for &p in &node.premises {
                    if let Some(src) = net.edge(p).src {
                        if net.kind(src) == NodeKind::Weakening {
                            out.push(Redex { rule: RuleKind::CW, site: vec![id, src] });
                        }
                    }
                }
                let r = Redex { rule: RuleKind::CId, site: vec![id] };
                if matches(net, &r) {
                    out.push(r);
                }
                if let Some(m) = cass_inner(net, id, 1) {
                    out.push(Redex { rule: RuleKind::CAss, site: vec![id, m] });
                }
            }
            _ => {}
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Every expansion site, ordered by site ids.
pub fn find_expansions(net: &Net) -> Vec<Redex> {
    let mut out = vec![];
    for (id, e) in net.edges() {
        if e.label.is_atomic() {
            out.push(Redex { rule: RuleKind::AxExpand, site: vec![id] });
        }
        if matches!(e.atom(), Some((_, Pol::Neg))) {
            out.push(Redex { rule: RuleKind::CWExpand, site: vec![id] });
            out.push(Redex { rule: RuleKind::CIdExpand, site: vec![id] });
        }
    }
    for (id, _) in net.nodes() {
        if let Some(m) = cass_inner(net, id, 0) {
            out.push(Redex { rule: RuleKind::CAssExpand, site: vec![id, m] });
        }
    }
    out.sort();
    out
}

/// Applies a rule, returning the rewritten net. The input is left untouched.
pub fn apply(net: &Net, r: &Redex) -> Result<Net, RewriteError> {
    if !matches(net, r) {
        return Err(RewriteError::StaleRedex(r.to_string()));
    }
    let mut out = net.clone();
    apply_in_place(&mut out, r);
    Ok(out)
}

fn collapse_unary(net: &mut Net, n: NodeId) {
    let q = net.node(n).premises[0];
    let c = net.node(n).conclusions[0];
    net.replace_dst(c, q);
    net.remove_edge(c);
    net.remove_node(n);
}

fn apply_in_place(net: &mut Net, r: &Redex) {
    let s = &r.site;
    match r.rule {
        RuleKind::AxCut => {
            let (a, k) = (s[0], s[1]);
            let concl = net.node(a).conclusions.clone();
            let c = *concl.iter().find(|&&e| net.edge(e).dst == Some(k)).unwrap();
            let o = *concl.iter().find(|&&e| e != c).unwrap();
            let f = *net.node(k).premises.iter().find(|&&e| e != c).unwrap();
            net.replace_dst(o, f);
            net.remove_edge(c);
            net.remove_edge(o);
            net.remove_node(a);
            net.remove_node(k);
        }
        RuleKind::CW => {
            let (n, w) = (s[0], s[1]);
            let p = *net.node(w).conclusions.iter().find(|&&e| net.edge(e).dst == Some(n)).unwrap();
            if net.node(n).premises.len() == 1 {
                let c = net.node(n).conclusions[0];
                net.remove_edge(p);
                net.set_src(c, Some(w));
                net.remove_node(n);
            } else {
                net.remove_edge(p);
                net.remove_node(w);
                if net.node(n).premises.len() == 1 {
                    collapse_unary(net, n);
                }
            }
        }
        RuleKind::CId => collapse_unary(net, s[0]),
        RuleKind::CAss => {
            let (n, m) = (s[0], s[1]);
            let a = net.node(n).premises[0];
            let em = net.node(n).premises[1];
            let (b, c) = (net.node(m).premises[0], net.node(m).premises[1]);
            net.swap_dst(a, c);
            net.set_premise_order(n, vec![em, c]);
            net.set_premise_order(m, vec![a, b]);
        }
        RuleKind::CAssExpand => {
            let (n, m) = (s[0], s[1]);
            let em = net.node(n).premises[0];
            let c = net.node(n).premises[1];
            let (a, b) = (net.node(m).premises[0], net.node(m).premises[1]);
            net.swap_dst(a, c);
            net.set_premise_order(n, vec![a, em]);
            net.set_premise_order(m, vec![b, c]);
        }
        RuleKind::TensorPar => {
            let (k, t, p) = (s[0], s[1], s[2]);
            let tp = net.node(t).premises.clone();
            let pp = net.node(p).premises.clone();
            let tc = net.node(t).conclusions[0];
            let pc = net.node(p).conclusions[0];
            for i in 0..2 {
                let cut = net.add_node(NodeKind::Cut);
                net.set_dst(tp[i], Some(cut));
                net.set_dst(pp[i], Some(cut));
            }
            net.remove_edge(tc);
            net.remove_edge(pc);
            net.remove_node(t);
            net.remove_node(p);
            net.remove_node(k);
        }
        RuleKind::AxExpand => {
            let e = s[0];
            let label = net.label(e).clone();
            let a = net.add_node(NodeKind::Ax);
            let p = net.add_edge(Some(a), None, label.clone());
            let q = net.add_edge(Some(a), None, label.dual());
            net.replace_dst(e, p);
            let k = net.add_node(NodeKind::Cut);
            net.set_dst(e, Some(k));
            net.set_dst(q, Some(k));
        }
        RuleKind::CWExpand | RuleKind::CIdExpand => {
            let e = s[0];
            let label = net.label(e).clone();
            let n = net.add_node(NodeKind::Contraction);
            let c = net.add_edge(Some(n), None, label.clone());
            net.replace_dst(e, c);
            net.set_dst(e, Some(n));
            if r.rule == RuleKind::CWExpand {
                let w = net.add_node(NodeKind::Weakening);
                let we = net.add_edge(Some(w), None, label);
                net.set_dst(we, Some(n));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Lowest site first.
    Innermost,
    /// Uniform choice among redexes, seeded.
    Random(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalized {
    pub net: Net,
    pub trace: Vec<Redex>,
}

impl Normalized {
    /// One line per step: `rule site_ids`.
    pub fn trace_lines(&self) -> String {
        self.trace.iter().map(|r| format!("{r}\n")).collect()
    }
}

pub fn step_limit(net: &Net) -> usize {
    let n = net.node_count().max(1);
    10 * n * n
}

pub fn normalize(net: &Net) -> Result<Normalized, RewriteError> {
    normalize_with(net, Strategy::Innermost)
}

pub fn normalize_with(net: &Net, strategy: Strategy) -> Result<Normalized, RewriteError> {
    let limit = step_limit(net);
    let mut rng = match strategy {
        Strategy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Strategy::Innermost => None,
    };
    let mut cur = net.clone();
    let mut trace = vec![];
    loop {
        let rs = find_redexes(&cur);
        if rs.is_empty() {
            return Ok(Normalized { net: cur, trace });
        }
        if trace.len() >= limit {
            return Err(RewriteError::StepLimitExceeded(limit));
        }
        let r = match rng.as_mut() {
            Some(g) => rs[g.gen_range(0..rs.len())].clone(),
            None => rs[0].clone(),
        };
        apply_in_place(&mut cur, &r);
        trace.push(r);
    }
}

pub fn is_normal(net: &Net) -> bool {
    find_redexes(net).is_empty()
}

/// Cuts the conclusion `y+` against a fresh weakening.
pub fn hide(net: &Net, y: &VariableId) -> Result<Net, RewriteError> {
    let target = Formula::pos(y);
    let e = *net
        .conclusions()
        .iter()
        .find(|&&c| *net.label(c) == target)
        .ok_or_else(|| RewriteError::NoSuchConclusion(y.clone()))?;
    let mut out = net.clone();
    let w = out.add_node(NodeKind::Weakening);
    let we = out.add_edge(Some(w), None, Formula::neg(y));
    let k = out.add_node(NodeKind::Cut);
    out.set_dst(e, Some(k));
    out.set_dst(we, Some(k));
    Ok(out)
}

/// The cut on `y` that Show acts on: a weakening negative premise first, then a
/// contraction, then anything else; lowest cut id within each class.
pub fn show_cut(net: &Net, y: &VariableId) -> Option<(NodeId, EdgeId, EdgeId)> {
    let mut best: Option<(u8, NodeId, EdgeId, EdgeId)> = None;
    for (k, node) in net.nodes() {
        if node.kind != NodeKind::Cut {
            continue;
        }
        let (mut f, mut e) = (None, None);
        for &p in &node.premises {
            match net.edge(p).atom() {
                Some((x, Pol::Pos)) if x == y => f = Some(p),
                Some((x, Pol::Neg)) if x == y => e = Some(p),
                _ => {}
            }
        }
        let (Some(f), Some(e)) = (f, e) else { continue };
        let class = match net.edge(e).src.map(|s| net.kind(s)) {
            Some(NodeKind::Weakening) => 0,
            Some(NodeKind::Contraction) => 1,
            _ => 2,
        };
        if best.is_none_or(|b| class < b.0) {
            best = Some((class, k, f, e));
        }
    }
    best.map(|(_, k, f, e)| (k, f, e))
}

/// De-weakening: makes the internal atom `y` a positive conclusion.
pub fn show(net: &Net, y: &VariableId) -> Result<Net, RewriteError> {
    if !internal_atoms(net).contains(y) {
        return Err(RewriteError::NotInternal(y.clone()));
    }
    let (k, f, e) = show_cut(net, y).ok_or_else(|| RewriteError::NoCut(y.clone()))?;
    let mut out = net.clone();
    let src = out.edge(e).src;
    if let Some(w) = src.filter(|&s| out.kind(s) == NodeKind::Weakening) {
        out.remove_edge(e);
        out.remove_node(w);
        out.set_dst(f, None);
        out.remove_node(k);
    } else {
        show_at(&mut out, e);
    }
    Ok(out)
}

/// Inserts `@(e, ax-)` on the negative edge `e` and makes the axiom's positive
/// end a conclusion. Returns the new (contraction, axiom) nodes.
pub fn show_at(net: &mut Net, e: EdgeId) -> (NodeId, NodeId) {
    let label = net.label(e).clone();
    let n = net.add_node(NodeKind::Contraction);
    let c = net.add_edge(Some(n), None, label.clone());
    net.replace_dst(e, c);
    net.set_dst(e, Some(n));
    let a = net.add_node(NodeKind::Ax);
    let _p = net.add_edge(Some(a), None, label.dual());
    let q = net.add_edge(Some(a), None, label);
    net.set_dst(q, Some(n));
    (n, a)
}

/// A single rewrite step of any kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Move {
    Rule(Redex),
    Hide(VariableId),
    Show(VariableId),
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Rule(r) => write!(f, "{r}"),
            Move::Hide(y) => write!(f, "Hide {y}"),
            Move::Show(y) => write!(f, "Show {y}"),
        }
    }
}

/// Every available move on an atomic net: a-rule reductions, expansions, Hide on
/// positive conclusions, Show on internal atoms.
pub fn candidate_moves(net: &Net) -> Vec<Move> {
    let mut out: Vec<Move> = find_redexes(net)
        .into_iter()
        .chain(find_expansions(net))
        .filter(|r| r.rule.is_atomic_rule())
        .map(Move::Rule)
        .collect();
    for &c in net.conclusions() {
        if let Some((y, Pol::Pos)) = net.edge(c).atom() {
            out.push(Move::Hide(y.clone()));
        }
    }
    for y in internal_atoms(net) {
        if show_cut(net, &y).is_some() {
            out.push(Move::Show(y));
        }
    }
    out
}

pub fn apply_move(net: &Net, m: &Move) -> Result<Net, RewriteError> {
    match m {
        Move::Rule(r) => apply(net, r),
        Move::Hide(y) => hide(net, y),
        Move::Show(y) => show(net, y),
    }
}
