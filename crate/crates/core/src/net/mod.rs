//! Proof-structures with boxes: formulas, typed nodes, labelled edges with
//! possibly pending endpoints, and the JSON exchange format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::VariableId;

mod check;
mod iso;

pub use check::*;
pub use iso::isomorphic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pol {
    Pos,
    Neg,
}

impl Pol {
    pub fn dual(self) -> Pol {
        match self {
            Pol::Pos => Pol::Neg,
            Pol::Neg => Pol::Pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(VariableId, Pol),
    One,
    Bot,
    Tensor(Box<Formula>, Box<Formula>),
    Par(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pos(x: &VariableId) -> Formula {
        Formula::Atom(x.clone(), Pol::Pos)
    }

    pub fn neg(x: &VariableId) -> Formula {
        Formula::Atom(x.clone(), Pol::Neg)
    }

    pub fn tensor(a: Formula, b: Formula) -> Formula {
        Formula::Tensor(Box::new(a), Box::new(b))
    }

    pub fn par(a: Formula, b: Formula) -> Formula {
        Formula::Par(Box::new(a), Box::new(b))
    }

    pub fn dual(&self) -> Formula {
        match self {
            Formula::Atom(x, p) => Formula::Atom(x.clone(), p.dual()),
            Formula::One => Formula::Bot,
            Formula::Bot => Formula::One,
            Formula::Tensor(a, b) => Formula::par(a.dual(), b.dual()),
            Formula::Par(a, b) => Formula::tensor(a.dual(), b.dual()),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Formula::Atom(..))
    }

    pub fn atom(&self) -> Option<(&VariableId, Pol)> {
        match self {
            Formula::Atom(x, p) => Some((x, *p)),
            _ => None,
        }
    }

    pub fn collect_atoms(&self, out: &mut BTreeSet<VariableId>) {
        match self {
            Formula::Atom(x, _) => {
                out.insert(x.clone());
            }
            Formula::One | Formula::Bot => {}
            Formula::Tensor(a, b) | Formula::Par(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Parses the textual syntax: `X+`, `X-`, `1`, `bot`, `(F * G)`, `(F | G)`.
    pub fn parse(s: &str) -> Result<Formula, NetError> {
        let toks = tokenize(s)?;
        let mut pos = 0;
        let f = parse_binary(&toks, &mut pos)?;
        if pos != toks.len() {
            return Err(NetError::Parse(format!("trailing input in formula {s:?}")));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Star,
    Bar,
    Unit(Formula),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, NetError> {
    let mut out = vec![];
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '(' => {
                out.push(Tok::LParen);
                i += 1
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1
            }
            '*' => {
                out.push(Tok::Star);
                i += 1
            }
            '|' => {
                out.push(Tok::Bar);
                i += 1
            }
            _ => {
                let start = i;
                while i < chars.len() && !" \t()*|".contains(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let f = if word == "1" {
                    Formula::One
                } else if word == "bot" {
                    Formula::Bot
                } else if let Some(name) = word.strip_suffix('+') {
                    if name.is_empty() {
                        return Err(NetError::Parse(format!("bad atom {word:?}")));
                    }
                    Formula::pos(&VariableId::new(name))
                } else if let Some(name) = word.strip_suffix('-') {
                    if name.is_empty() {
                        return Err(NetError::Parse(format!("bad atom {word:?}")));
                    }
                    Formula::neg(&VariableId::new(name))
                } else {
                    return Err(NetError::Parse(format!("bad formula token {word:?}")));
                };
                out.push(Tok::Unit(f));
            }
        }
    }
    Ok(out)
}

fn parse_unit(t: &[Tok], pos: &mut usize) -> Result<Formula, NetError> {
    match t.get(*pos) {
        Some(Tok::Unit(f)) => {
            *pos += 1;
            Ok(f.clone())
        }
        Some(Tok::LParen) => {
            *pos += 1;
            let f = parse_binary(t, pos)?;
            if t.get(*pos) != Some(&Tok::RParen) {
                return Err(NetError::Parse("missing ')'".into()));
            }
            *pos += 1;
            Ok(f)
        }
        _ => Err(NetError::Parse("unexpected end of formula".into())),
    }
}

fn parse_binary(t: &[Tok], pos: &mut usize) -> Result<Formula, NetError> {
    let mut left = parse_unit(t, pos)?;
    loop {
        match t.get(*pos) {
            Some(Tok::Star) => {
                *pos += 1;
                let r = parse_unit(t, pos)?;
                left = Formula::tensor(left, r);
            }
            Some(Tok::Bar) => {
                *pos += 1;
                let r = parse_unit(t, pos)?;
                left = Formula::par(left, r);
            }
            _ => return Ok(left),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(x, Pol::Pos) => write!(f, "{x}+"),
            Formula::Atom(x, Pol::Neg) => write!(f, "{x}-"),
            Formula::One => f.write_str("1"),
            Formula::Bot => f.write_str("bot"),
            Formula::Tensor(a, b) => write!(f, "({a} * {b})"),
            Formula::Par(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Ax,
    Box,
    Cut,
    Tensor,
    Par,
    Contraction,
    Weakening,
    One,
    Bot,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Ax => "ax",
            NodeKind::Box => "box",
            NodeKind::Cut => "cut",
            NodeKind::Tensor => "tensor",
            NodeKind::Par => "par",
            NodeKind::Contraction => "contraction",
            NodeKind::Weakening => "weakening",
            NodeKind::One => "one",
            NodeKind::Bot => "bot",
        }
    }

    pub fn parse(s: &str) -> Result<NodeKind, NetError> {
        Ok(match s {
            "ax" => NodeKind::Ax,
            "box" => NodeKind::Box,
            "cut" => NodeKind::Cut,
            "tensor" => NodeKind::Tensor,
            "par" => NodeKind::Par,
            "contraction" | "@" => NodeKind::Contraction,
            "weakening" | "w" => NodeKind::Weakening,
            "one" => NodeKind::One,
            "bot" => NodeKind::Bot,
            _ => return Err(NetError::Parse(format!("unknown node kind {s:?}"))),
        })
    }

    /// Nodes whose premises are switched: at most one premise per path.
    pub fn is_switched(self) -> bool {
        matches!(self, NodeKind::Par | NodeKind::Contraction)
    }
}

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub premises: Vec<EdgeId>,
    pub conclusions: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: Option<NodeId>,
    pub dst: Option<NodeId>,
    pub label: Formula,
}

impl Edge {
    pub fn atom(&self) -> Option<(&VariableId, Pol)> {
        self.label.atom()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("arity violation at node {0}")]
    ArityViolation(NodeId),
    #[error("label mismatch at node {0}")]
    LabelMismatch(NodeId),
    #[error("inconsistent endpoints on edge {0}")]
    Inconsistent(EdgeId),
    #[error("net is not atomic")]
    NotAtomic,
    #[error("module is not an atomic MLL module (node {0})")]
    NotMllAtomic(NodeId),
    #[error("well-labelling conditions disagree: {0:?}")]
    InternalInconsistency([bool; 4]),
    #[error("switching cycle through edges {0:?}")]
    SwitchingCycle(Vec<EdgeId>),
    #[error("cross-check failed: {0}")]
    CrossCheck(String),
}

/// A pre-module: nodes and edges with stable integer ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Net {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    conclusions: Vec<EdgeId>,
    next_node: NodeId,
    next_edge: EdgeId,
}

impl Net {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, kind: NodeKind) -> NodeId {
        let id = self.next_node;
        self.next_node += 1;
        self.nodes.insert(id, Node { kind, premises: vec![], conclusions: vec![] });
        id
    }

    /// Adds an edge; a pending target makes it a conclusion of the net.
    pub fn add_edge(&mut self, src: Option<NodeId>, dst: Option<NodeId>, label: Formula) -> EdgeId {
        let id = self.next_edge;
        self.next_edge += 1;
        self.edges.insert(id, Edge { src, dst, label });
        if let Some(s) = src {
            self.node_mut(s).conclusions.push(id);
        }
        match dst {
            Some(d) => self.node_mut(d).premises.push(id),
            None => self.conclusions.push(id),
        }
        id
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[&id]
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes.get_mut(&id).expect("unknown node")
    }

    pub fn try_node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[&id]
    }

    pub fn try_edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn has_edge(&self, id: EdgeId) -> bool {
        self.edges.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().map(|(k, v)| (*k, v))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[&id].kind
    }

    /// Edges with a pending target, in declared order.
    pub fn conclusions(&self) -> &[EdgeId] {
        &self.conclusions
    }

    /// Edges with a pending source, ascending.
    pub fn premises(&self) -> Vec<EdgeId> {
        self.edges.iter().filter(|(_, e)| e.src.is_none()).map(|(k, _)| *k).collect()
    }

    pub fn label(&self, e: EdgeId) -> &Formula {
        &self.edges[&e].label
    }

    /// Edges attached to a node: premises then conclusions.
    pub fn incident(&self, n: NodeId) -> impl Iterator<Item = EdgeId> + '_ {
        let node = &self.nodes[&n];
        node.premises.iter().chain(node.conclusions.iter()).copied()
    }

    pub fn is_atomic(&self) -> bool {
        self.edges.values().all(|e| e.label.is_atomic())
    }

    pub fn atoms(&self) -> BTreeSet<VariableId> {
        let mut out = BTreeSet::new();
        for e in self.edges.values() {
            e.label.collect_atoms(&mut out);
        }
        out
    }

    pub fn conclusion_atoms(&self) -> BTreeSet<VariableId> {
        let mut out = BTreeSet::new();
        for c in &self.conclusions {
            self.edges[c].label.collect_atoms(&mut out);
        }
        out
    }

    pub fn box_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|(_, n)| n.kind == NodeKind::Box).map(|(k, _)| *k).collect()
    }

    /// The atom of a box's (first) positive conclusion, which names the box.
    pub fn box_atom(&self, n: NodeId) -> Option<VariableId> {
        self.nodes[&n].conclusions.iter().find_map(|e| match self.edges[e].atom() {
            Some((x, Pol::Pos)) => Some(x.clone()),
            _ => None,
        })
    }

    /// Boxes keyed by their positive atom; the first box wins on clashes.
    pub fn boxes_by_atom(&self) -> BTreeMap<VariableId, NodeId> {
        let mut out = BTreeMap::new();
        for b in self.box_nodes() {
            if let Some(x) = self.box_atom(b) {
                out.entry(x).or_insert(b);
            }
        }
        out
    }

    /// Detaches and deletes an edge.
    pub fn remove_edge(&mut self, e: EdgeId) {
        let edge = self.edges.remove(&e).expect("unknown edge");
        if let Some(s) = edge.src {
            self.node_mut(s).conclusions.retain(|&x| x != e);
        }
        match edge.dst {
            Some(d) => self.node_mut(d).premises.retain(|&x| x != e),
            None => self.conclusions.retain(|&x| x != e),
        }
    }

    /// Deletes a node; it must have no attached edges left.
    pub fn remove_node(&mut self, n: NodeId) {
        let node = self.nodes.remove(&n).expect("unknown node");
        assert!(node.premises.is_empty() && node.conclusions.is_empty(), "node {n} still has edges");
    }

    /// Deletes a node and every edge attached to it.
    pub fn remove_node_and_edges(&mut self, n: NodeId) {
        let es: Vec<EdgeId> = self.incident(n).collect();
        for e in es {
            self.remove_edge(e);
        }
        self.remove_node(n);
    }

    /// Moves the target of `e` to `dst`, appending it to the new node's premises
    /// (or to the net conclusions when `dst` is pending).
    pub fn set_dst(&mut self, e: EdgeId, dst: Option<NodeId>) {
        let old = self.edges[&e].dst;
        match old {
            Some(d) => self.node_mut(d).premises.retain(|&x| x != e),
            None => self.conclusions.retain(|&x| x != e),
        }
        self.edges.get_mut(&e).unwrap().dst = dst;
        match dst {
            Some(d) => self.node_mut(d).premises.push(e),
            None => self.conclusions.push(e),
        }
    }

    /// `new` takes over the target slot of `old` (same premise position, or same
    /// conclusion position). `old` is left with a pending target and is not listed
    /// as a conclusion; callers normally delete it.
    pub fn replace_dst(&mut self, old: EdgeId, new: EdgeId) {
        assert_ne!(old, new);
        let nd = self.edges[&new].dst;
        match nd {
            Some(d) => self.node_mut(d).premises.retain(|&x| x != new),
            None => self.conclusions.retain(|&x| x != new),
        }
        let od = self.edges[&old].dst;
        match od {
            Some(d) => {
                let node = self.node_mut(d);
                let i = node.premises.iter().position(|&x| x == old).expect("port");
                node.premises[i] = new;
            }
            None => {
                let i = self.conclusions.iter().position(|&x| x == old).expect("conclusion");
                self.conclusions[i] = new;
            }
        }
        self.edges.get_mut(&new).unwrap().dst = od;
        self.edges.get_mut(&old).unwrap().dst = None;
    }

    /// Moves the source of `e` to `src`, appending to its conclusions.
    pub fn set_src(&mut self, e: EdgeId, src: Option<NodeId>) {
        if let Some(s) = self.edges[&e].src {
            self.node_mut(s).conclusions.retain(|&x| x != e);
        }
        self.edges.get_mut(&e).unwrap().src = src;
        if let Some(s) = src {
            self.node_mut(s).conclusions.push(e);
        }
    }

    /// Exchanges the target slots of two edges that both have a target node.
    pub fn swap_dst(&mut self, a: EdgeId, b: EdgeId) {
        let (da, db) = (self.edges[&a].dst.expect("target"), self.edges[&b].dst.expect("target"));
        let ia = self.nodes[&da].premises.iter().position(|&x| x == a).unwrap();
        let ib = self.nodes[&db].premises.iter().position(|&x| x == b).unwrap();
        self.node_mut(da).premises[ia] = b;
        self.node_mut(db).premises[ib] = a;
        self.edges.get_mut(&a).unwrap().dst = Some(db);
        self.edges.get_mut(&b).unwrap().dst = Some(da);
    }

    /// Reorders the premises of a node; `order` must be a permutation of them.
    pub fn set_premise_order(&mut self, n: NodeId, order: Vec<EdgeId>) {
        let mut a = order.clone();
        let mut b = self.nodes[&n].premises.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b, "premise order must be a permutation");
        self.node_mut(n).premises = order;
    }

    /// Inserts `e` into the conclusion list at position `at`.
    pub fn insert_conclusion(&mut self, at: usize, e: EdgeId) {
        assert!(self.edges[&e].dst.is_none());
        self.conclusions.retain(|&x| x != e);
        let at = at.min(self.conclusions.len());
        self.conclusions.insert(at, e);
    }

    /// Sub-structure on a node set, keeping ids. Edges leaving the set keep their
    /// ids with the outside endpoint made pending. Edges touching no kept node are
    /// dropped unless they are pending on both sides.
    pub fn restrict(&self, keep: &BTreeSet<NodeId>) -> Net {
        let mut out = Net { next_node: self.next_node, next_edge: self.next_edge, ..Net::default() };
        for &n in keep {
            let node = &self.nodes[&n];
            out.nodes.insert(n, Node { kind: node.kind, premises: vec![], conclusions: vec![] });
        }
        let mut concl_order: Vec<EdgeId> = vec![];
        for (&id, e) in &self.edges {
            let s = e.src.filter(|s| keep.contains(s));
            let d = e.dst.filter(|d| keep.contains(d));
            let touches = s.is_some() || d.is_some();
            let floating = e.src.is_none() && e.dst.is_none();
            if !touches && !floating {
                continue;
            }
            out.edges.insert(id, Edge { src: s, dst: d, label: e.label.clone() });
            if d.is_none() {
                concl_order.push(id);
            }
        }
        for &n in keep {
            let node = &self.nodes[&n];
            let prem: Vec<EdgeId> = node.premises.clone();
            let conc: Vec<EdgeId> = node.conclusions.clone();
            let nn = out.nodes.get_mut(&n).unwrap();
            nn.premises = prem;
            nn.conclusions = conc;
        }
        // Original conclusions first in their order, then new cut-open edges.
        let mut ordered: Vec<EdgeId> = self.conclusions.iter().copied().filter(|c| out.edges.contains_key(c)).collect();
        for c in concl_order {
            if !ordered.contains(&c) {
                ordered.push(c);
            }
        }
        out.conclusions = ordered;
        out
    }

    /// Removes the given nodes; their edges stay, with the removed side made pending.
    pub fn detach_nodes(&self, remove: &BTreeSet<NodeId>) -> Net {
        let keep: BTreeSet<NodeId> = self.nodes.keys().copied().filter(|n| !remove.contains(n)).collect();
        let mut out = self.restrict(&keep);
        for (&id, e) in &self.edges {
            if out.edges.contains_key(&id) {
                continue;
            }
            let s = e.src.filter(|s| keep.contains(s));
            let d = e.dst.filter(|d| keep.contains(d));
            out.edges.insert(id, Edge { src: s, dst: d, label: e.label.clone() });
        }
        let mut concl: Vec<EdgeId> =
            self.conclusions.iter().copied().filter(|c| out.edges[c].dst.is_none()).collect();
        for (&id, e) in &out.edges {
            if e.dst.is_none() && !concl.contains(&id) {
                concl.push(id);
            }
        }
        out.conclusions = concl;
        out
    }

    /// Checks that node ports and edge endpoints agree.
    pub fn check_consistency(&self) -> Result<(), NetError> {
        for (&id, e) in &self.edges {
            if let Some(s) = e.src {
                let ok = self.nodes.get(&s).is_some_and(|n| n.conclusions.iter().filter(|&&x| x == id).count() == 1);
                if !ok {
                    return Err(NetError::Inconsistent(id));
                }
            }
            match e.dst {
                Some(d) => {
                    let ok = self.nodes.get(&d).is_some_and(|n| n.premises.iter().filter(|&&x| x == id).count() == 1);
                    if !ok {
                        return Err(NetError::Inconsistent(id));
                    }
                }
                None => {
                    if self.conclusions.iter().filter(|&&x| x == id).count() != 1 {
                        return Err(NetError::Inconsistent(id));
                    }
                }
            }
        }
        for (&n, node) in &self.nodes {
            for &e in &node.premises {
                if self.edges.get(&e).map(|x| x.dst) != Some(Some(n)) {
                    return Err(NetError::Inconsistent(e));
                }
            }
            for &e in &node.conclusions {
                if self.edges.get(&e).map(|x| x.src) != Some(Some(n)) {
                    return Err(NetError::Inconsistent(e));
                }
            }
        }
        for &c in &self.conclusions {
            if self.edges.get(&c).map(|x| x.dst) != Some(None) {
                return Err(NetError::Inconsistent(c));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> NetJson {
        let nodes = self
            .nodes
            .iter()
            .map(|(&id, n)| NodeJson {
                id,
                kind: n.kind.name().to_string(),
                premises: if n.premises.len() >= 2 { Some(n.premises.clone()) } else { None },
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|(&id, e)| {
                let (atom, pol, formula) = match &e.label {
                    Formula::Atom(x, p) => (
                        Some(x.to_string()),
                        Some(if *p == Pol::Pos { "+".to_string() } else { "-".to_string() }),
                        None,
                    ),
                    f => (None, None, Some(f.to_string())),
                };
                EdgeJson { id, src: Endpoint::from(e.src), dst: Endpoint::from(e.dst), atom, pol, formula }
            })
            .collect();
        NetJson { nodes, edges, conclusions: self.conclusions.clone() }
    }

    pub fn from_json(j: &NetJson) -> Result<Net, NetError> {
        let mut net = Net::new();
        for n in &j.nodes {
            if net.nodes.contains_key(&n.id) {
                return Err(NetError::Parse(format!("duplicate node id {}", n.id)));
            }
            net.nodes.insert(n.id, Node { kind: NodeKind::parse(&n.kind)?, premises: vec![], conclusions: vec![] });
            net.next_node = net.next_node.max(n.id + 1);
        }
        for e in &j.edges {
            if net.edges.contains_key(&e.id) {
                return Err(NetError::Parse(format!("duplicate edge id {}", e.id)));
            }
            let label = match (&e.atom, &e.pol, &e.formula) {
                (Some(a), Some(p), None) => {
                    if a.is_empty() {
                        return Err(NetError::Parse(format!("empty atom on edge {}", e.id)));
                    }
                    let pol = match p.as_str() {
                        "+" | "pos" => Pol::Pos,
                        "-" | "neg" => Pol::Neg,
                        _ => return Err(NetError::Parse(format!("bad polarity {p:?}"))),
                    };
                    Formula::Atom(VariableId::new(a), pol)
                }
                (None, None, Some(f)) => Formula::parse(f)?,
                _ => return Err(NetError::Parse(format!("edge {} needs atom+pol or formula", e.id))),
            };
            let src = e.src.node();
            let dst = e.dst.node();
            for n in [src, dst].into_iter().flatten() {
                if !net.nodes.contains_key(&n) {
                    return Err(NetError::Parse(format!("edge {} refers to unknown node {n}", e.id)));
                }
            }
            net.edges.insert(e.id, Edge { src, dst, label });
            net.next_edge = net.next_edge.max(e.id + 1);
        }
        for (&id, e) in &net.edges {
            if let Some(s) = e.src {
                net.nodes.get_mut(&s).unwrap().conclusions.push(id);
            }
            if let Some(d) = e.dst {
                net.nodes.get_mut(&d).unwrap().premises.push(id);
            }
        }
        for n in &j.nodes {
            if let Some(order) = &n.premises {
                let node = net.nodes.get_mut(&n.id).unwrap();
                let mut a = order.clone();
                let mut b = node.premises.clone();
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    return Err(NetError::Parse(format!("premise order of node {} does not match edges", n.id)));
                }
                node.premises = order.clone();
            }
        }
        // Tensor and par premises follow the conclusion label.
        let ids: Vec<NodeId> = net.nodes.keys().copied().collect();
        for n in ids {
            let node = &net.nodes[&n];
            if !matches!(node.kind, NodeKind::Tensor | NodeKind::Par) || node.premises.len() != 2 || node.conclusions.len() != 1 {
                continue;
            }
            let (p0, p1) = (node.premises[0], node.premises[1]);
            if let Formula::Tensor(a, _) | Formula::Par(a, _) = &net.edges[&node.conclusions[0]].label {
                if net.edges[&p0].label != **a && net.edges[&p1].label == **a {
                    net.nodes.get_mut(&n).unwrap().premises = vec![p1, p0];
                }
            }
        }
        let pending: BTreeSet<EdgeId> = net.edges.iter().filter(|(_, e)| e.dst.is_none()).map(|(k, _)| *k).collect();
        let declared: BTreeSet<EdgeId> = j.conclusions.iter().copied().collect();
        if declared != pending || declared.len() != j.conclusions.len() {
            return Err(NetError::Parse("conclusions must list exactly the edges with a pending target".into()));
        }
        net.conclusions = j.conclusions.clone();
        Ok(net)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Net, NetError> {
        let j: NetJson = serde_json::from_str(s).map_err(|e| NetError::Parse(e.to_string()))?;
        Net::from_json(&j)
    }
}

/// `"pending"` or a node id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Node(NodeId),
    Pending,
}

impl Endpoint {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Endpoint::Node(n) => Some(n),
            Endpoint::Pending => None,
        }
    }
}

impl From<Option<NodeId>> for Endpoint {
    fn from(o: Option<NodeId>) -> Self {
        o.map_or(Endpoint::Pending, Endpoint::Node)
    }
}

impl Serialize for Endpoint {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        match self {
            Endpoint::Node(n) => s.serialize_u64(*n as u64),
            Endpoint::Pending => s.serialize_str("pending"),
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(n) => Ok(Endpoint::Node(n as usize)),
            Raw::Word(w) if w == "pending" => Ok(Endpoint::Pending),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("bad endpoint {w:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeJson {
    pub id: NodeId,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premises: Option<Vec<EdgeId>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EdgeJson {
    pub id: EdgeId,
    pub src: Endpoint,
    pub dst: Endpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
    pub conclusions: Vec<EdgeId>,
}

/// Small constructors used by tests and examples.
pub mod build {
    use super::*;

    /// `ax(X+, X-)`; returns (node, positive edge, negative edge).
    pub fn ax(net: &mut Net, x: &VariableId) -> (NodeId, EdgeId, EdgeId) {
        let n = net.add_node(NodeKind::Ax);
        let p = net.add_edge(Some(n), None, Formula::pos(x));
        let m = net.add_edge(Some(n), None, Formula::neg(x));
        (n, p, m)
    }

    /// A box with conclusions `X+` then `P-` for each parent.
    pub fn boxed(net: &mut Net, x: &VariableId, parents: &[VariableId]) -> (NodeId, EdgeId, Vec<EdgeId>) {
        let n = net.add_node(NodeKind::Box);
        let p = net.add_edge(Some(n), None, Formula::pos(x));
        let ms = parents.iter().map(|y| net.add_edge(Some(n), None, Formula::neg(y))).collect();
        (n, p, ms)
    }

    /// Cuts two pending-target edges together.
    pub fn cut(net: &mut Net, a: EdgeId, b: EdgeId) -> NodeId {
        let c = net.add_node(NodeKind::Cut);
        net.set_dst(a, Some(c));
        net.set_dst(b, Some(c));
        c
    }

    /// Contracts two pending-target negative edges; returns (node, conclusion).
    pub fn contract(net: &mut Net, a: EdgeId, b: EdgeId) -> (NodeId, EdgeId) {
        let label = net.label(a).clone();
        let n = net.add_node(NodeKind::Contraction);
        net.set_dst(a, Some(n));
        net.set_dst(b, Some(n));
        let c = net.add_edge(Some(n), None, label);
        (n, c)
    }

    /// Left comb of contractions over the given negative edges (at least one).
    pub fn comb(net: &mut Net, leaves: &[EdgeId]) -> EdgeId {
        let mut acc = leaves[0];
        for &l in &leaves[1..] {
            acc = contract(net, acc, l).1;
        }
        acc
    }

    pub fn weakening(net: &mut Net, x: &VariableId) -> (NodeId, EdgeId) {
        let n = net.add_node(NodeKind::Weakening);
        let e = net.add_edge(Some(n), None, Formula::neg(x));
        (n, e)
    }

    /// Tensor or par of two pending-target edges.
    pub fn binary(net: &mut Net, kind: NodeKind, a: EdgeId, b: EdgeId) -> (NodeId, EdgeId) {
        let (la, lb) = (net.label(a).clone(), net.label(b).clone());
        let label = match kind {
            NodeKind::Tensor => Formula::tensor(la, lb),
            NodeKind::Par => Formula::par(la, lb),
            _ => panic!("binary expects tensor or par"),
        };
        let n = net.add_node(kind);
        net.set_dst(a, Some(n));
        net.set_dst(b, Some(n));
        let c = net.add_edge(Some(n), None, label);
        (n, c)
    }
}
