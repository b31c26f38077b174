//! Factorized proof-nets: cut-nets whose correction graph is a tree, with boxes as
//! leaves and cut-free wirings as inner components.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::VariableId;
use crate::net::{build, internal_atoms, is_bpn, well_labelled, EdgeId, Formula, Net, NetError, NetJson, NodeId, NodeKind, Pol};
use crate::rewrite::{find_redexes, show_at};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorizeError {
    #[error("correction graph has a cycle through components {0:?}")]
    NotATree(Vec<usize>),
    #[error("cut {0} joins a component to itself")]
    IntraComponentCut(NodeId),
    #[error("node {0} is neither in a component nor a linking cut")]
    Uncovered(NodeId),
    #[error("node {0} lies in two components")]
    Overlap(NodeId),
    #[error("edge {0} joins two components without a cut")]
    NotCutSeparated(EdgeId),
    #[error("conclusions sit in several components of one tree: {0:?}")]
    ConclusionsNotAtRoot(Vec<usize>),
    #[error("invalid elimination order: {0}")]
    OrderIncomplete(String),
    #[error("unknown atom {0}")]
    UnknownAtom(VariableId),
    #[error("net is not in normal form")]
    NotNormal,
    #[error("net has a conclusion that is not a positive atom")]
    NonEmptyConclusion,
    #[error("not a Bayesian proof-net: {0}")]
    NotBpn(String),
    #[error("component {0} is not a wiring")]
    UnknownWiring(usize),
    #[error("clique tree violation: {0}")]
    JointreeViolation(String),
    #[error("invalid factorized net: {0}")]
    NotFactorized(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

fn atom_of(net: &Net, e: EdgeId) -> Option<VariableId> {
    net.edge(e).atom().map(|(x, _)| x.clone())
}

/// Atoms of every edge touching one of `nodes`.
pub fn atoms_touching(net: &Net, nodes: &BTreeSet<NodeId>) -> BTreeSet<VariableId> {
    let mut out = BTreeSet::new();
    for &n in nodes {
        for e in net.incident(n) {
            net.label(e).collect_atoms(&mut out);
        }
    }
    out
}

/// Scopes of the box CPTs of a net.
pub fn net_families(net: &Net) -> Vec<BTreeSet<VariableId>> {
    net.box_nodes()
        .into_iter()
        .map(|b| net.node(b).conclusions.iter().filter_map(|&e| atom_of(net, e)).collect())
        .collect()
}

fn require_bpn(net: &Net) -> Result<(), FactorizeError> {
    let r = is_bpn(net)?;
    if r.is_bpn {
        Ok(())
    } else {
        Err(FactorizeError::NotBpn(r.violations.join("; ")))
    }
}

/// A partition of the non-linking nodes plus the linking cuts between parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutNet {
    pub components: Vec<BTreeSet<NodeId>>,
    /// (cut, lower component, higher component)
    pub links: Vec<(NodeId, usize, usize)>,
}

impl CutNet {
    /// Correction graph edges, one per linked pair.
    pub fn correction_edges(&self) -> BTreeSet<(usize, usize)> {
        self.links.iter().map(|&(_, a, b)| (a, b)).collect()
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .correction_edges()
            .into_iter()
            .filter_map(|(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect();
        out.dedup();
        out
    }

    pub fn links_between(&self, a: usize, b: usize) -> Vec<NodeId> {
        let (lo, hi) = (a.min(b), a.max(b));
        self.links.iter().filter(|&&(_, x, y)| x == lo && y == hi).map(|&(c, _, _)| c).collect()
    }
}

/// Reads `net` as a cut-net over the given parts. Nodes outside every part must be
/// cuts joining two different parts; the correction graph must be a forest.
pub fn as_cutnet(net: &Net, parts: &[BTreeSet<NodeId>]) -> Result<CutNet, FactorizeError> {
    let mut owner: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (i, p) in parts.iter().enumerate() {
        for &n in p {
            if !net.has_node(n) {
                return Err(FactorizeError::NotFactorized(format!("unknown node {n}")));
            }
            if owner.insert(n, i).is_some() {
                return Err(FactorizeError::Overlap(n));
            }
        }
    }
    let mut links = vec![];
    for (id, node) in net.nodes() {
        if owner.contains_key(&id) {
            continue;
        }
        if node.kind != NodeKind::Cut {
            return Err(FactorizeError::Uncovered(id));
        }
        if node.premises.len() != 2 {
            return Err(NetError::ArityViolation(id).into());
        }
        let mut sides = [0usize; 2];
        for (k, &e) in node.premises.iter().enumerate() {
            sides[k] = *net.edge(e).src.and_then(|s| owner.get(&s)).ok_or(FactorizeError::NotCutSeparated(e))?;
        }
        if sides[0] == sides[1] {
            return Err(FactorizeError::IntraComponentCut(id));
        }
        links.push((id, sides[0].min(sides[1]), sides[0].max(sides[1])));
    }
    for (id, e) in net.edges() {
        if let (Some(s), Some(d)) = (e.src, e.dst) {
            if let (Some(a), Some(b)) = (owner.get(&s), owner.get(&d)) {
                if a != b {
                    return Err(FactorizeError::NotCutSeparated(id));
                }
            }
        }
    }
    let cn = CutNet { components: parts.to_vec(), links };
    let mut uf: Vec<usize> = (0..parts.len()).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut adj: Vec<Vec<usize>> = vec![vec![]; parts.len()];
    for (a, b) in cn.correction_edges() {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra == rb {
            let mut path = tree_path(&adj, b, a);
            path.push(b);
            return Err(FactorizeError::NotATree(path));
        }
        uf[ra] = rb;
        adj[a].push(b);
        adj[b].push(a);
    }
    Ok(cn)
}

fn tree_path(adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
    let mut q = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(u) = q.pop_front() {
        if u == to {
            break;
        }
        for &v in &adj[u] {
            if seen.insert(v) {
                prev.insert(v, u);
                q.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while let Some(&p) = prev.get(&cur) {
        path.push(p);
        cur = p;
    }
    path.reverse();
    path
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompKind {
    Leaf(NodeId),
    Wiring,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comp {
    pub kind: CompKind,
    pub nodes: BTreeSet<NodeId>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Cuts linking this component to its parent.
    pub link_cuts: Vec<NodeId>,
    /// Atoms this component passes up: its parent interface, or the net
    /// conclusions held by a root.
    pub output_atoms: Vec<VariableId>,
    /// Every atom on an edge touching the component.
    pub atoms: Vec<VariableId>,
}

impl Comp {
    pub fn is_wiring(&self) -> bool {
        self.kind == CompKind::Wiring
    }
}

/// A net together with a rooted forest of components.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedNet {
    pub net: Net,
    pub comps: Vec<Comp>,
    pub roots: Vec<usize>,
}

impl FactorizedNet {
    /// Checks the partition and orients every tree. A tree holding conclusions is
    /// rooted where they sit; otherwise at a listed preferred root, else at its
    /// first wiring.
    pub fn new(
        net: Net,
        parts: Vec<(CompKind, BTreeSet<NodeId>)>,
        preferred_roots: &[usize],
    ) -> Result<Self, FactorizeError> {
        if !net.is_atomic() {
            return Err(FactorizeError::NotFactorized("net is not atomic".into()));
        }
        for (i, (k, nodes)) in parts.iter().enumerate() {
            match k {
                CompKind::Leaf(b) => {
                    if nodes.len() != 1 || !nodes.contains(b) || net.try_node(*b).map(|n| n.kind) != Some(NodeKind::Box)
                    {
                        return Err(FactorizeError::NotFactorized(format!("component {i} is not a single box")));
                    }
                }
                CompKind::Wiring => {
                    if nodes.is_empty() {
                        return Err(FactorizeError::NotFactorized(format!("component {i} is empty")));
                    }
                    for &n in nodes {
                        match net.try_node(n).map(|x| x.kind) {
                            Some(NodeKind::Ax | NodeKind::Contraction | NodeKind::Weakening | NodeKind::Cut) => {}
                            _ => {
                                return Err(FactorizeError::NotFactorized(format!(
                                    "node {n} of component {i} cannot sit in a wiring"
                                )))
                            }
                        }
                    }
                }
            }
        }
        let sets: Vec<BTreeSet<NodeId>> = parts.iter().map(|(_, s)| s.clone()).collect();
        let cn = as_cutnet(&net, &sets)?;
        let n = parts.len();
        let mut adj: Vec<Vec<usize>> = vec![vec![]; n];
        for (a, b) in cn.correction_edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let holds_conclusion: Vec<bool> = sets
            .iter()
            .map(|s| s.iter().any(|&x| net.node(x).conclusions.iter().any(|&e| net.edge(e).dst.is_none())))
            .collect();
        let mut tree_of = vec![usize::MAX; n];
        let mut trees: Vec<Vec<usize>> = vec![];
        for s in 0..n {
            if tree_of[s] != usize::MAX {
                continue;
            }
            let t = trees.len();
            let mut members = vec![];
            let mut q = VecDeque::from([s]);
            tree_of[s] = t;
            while let Some(u) = q.pop_front() {
                members.push(u);
                for &v in &adj[u] {
                    if tree_of[v] == usize::MAX {
                        tree_of[v] = t;
                        q.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            trees.push(members);
        }
        let mut roots = vec![];
        for members in &trees {
            let holders: Vec<usize> = members.iter().copied().filter(|&i| holds_conclusion[i]).collect();
            let preferred = preferred_roots.iter().copied().find(|r| members.contains(r));
            let root = match holders.as_slice() {
                [] => preferred
                    .or_else(|| members.iter().copied().find(|&i| parts[i].0 == CompKind::Wiring))
                    .unwrap_or(members[0]),
                [h] => {
                    if preferred.is_some_and(|p| p != *h) {
                        return Err(FactorizeError::NonEmptyConclusion);
                    }
                    *h
                }
                many => return Err(FactorizeError::ConclusionsNotAtRoot(many.to_vec())),
            };
            roots.push(root);
        }
        roots.sort_unstable();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![vec![]; n];
        for &r in &roots {
            let mut q = VecDeque::from([r]);
            let mut seen = BTreeSet::from([r]);
            while let Some(u) = q.pop_front() {
                let mut ns = adj[u].clone();
                ns.sort_unstable();
                for v in ns {
                    if seen.insert(v) {
                        parent[v] = Some(u);
                        children[u].push(v);
                        q.push_back(v);
                    }
                }
            }
        }
        let mut comps = Vec::with_capacity(n);
        for (i, (kind, nodes)) in parts.into_iter().enumerate() {
            let link_cuts = parent[i].map(|p| cn.links_between(i, p)).unwrap_or_default();
            let output: BTreeSet<VariableId> = match parent[i] {
                Some(_) => link_cuts.iter().filter_map(|&c| atom_of(&net, net.node(c).premises[0])).collect(),
                None => nodes
                    .iter()
                    .flat_map(|&x| net.node(x).conclusions.iter().copied())
                    .filter(|&e| net.edge(e).dst.is_none())
                    .filter_map(|e| atom_of(&net, e))
                    .collect(),
            };
            let atoms = atoms_touching(&net, &nodes);
            comps.push(Comp {
                kind,
                nodes,
                parent: parent[i],
                children: std::mem::take(&mut children[i]),
                link_cuts,
                output_atoms: output.into_iter().collect(),
                atoms: atoms.into_iter().collect(),
            });
        }
        Ok(FactorizedNet { net, comps, roots })
    }

    pub fn parts(&self) -> Vec<(CompKind, BTreeSet<NodeId>)> {
        self.comps.iter().map(|c| (c.kind, c.nodes.clone())).collect()
    }

    pub fn wirings(&self) -> Vec<usize> {
        (0..self.comps.len()).filter(|&i| self.comps[i].is_wiring()).collect()
    }

    pub fn box_count(&self) -> usize {
        self.comps.len() - self.wirings().len()
    }

    /// Largest wiring atom set minus one; zero without wirings.
    pub fn width(&self) -> usize {
        self.wirings().iter().map(|&i| self.comps[i].atoms.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// Number of components minus one.
    pub fn m_r(&self) -> usize {
        self.comps.len().saturating_sub(1)
    }

    /// Atom sets of the wirings, in component order.
    pub fn wiring_atom_sets(&self) -> Vec<BTreeSet<VariableId>> {
        self.wirings().iter().map(|&i| self.comps[i].atoms.iter().cloned().collect()).collect()
    }

    /// Children before parents, trees in root order.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = vec![];
        for &r in &self.roots {
            let mut stack = vec![(r, false)];
            while let Some((u, done)) = stack.pop() {
                if done {
                    out.push(u);
                } else {
                    stack.push((u, true));
                    for &c in self.comps[u].children.iter().rev() {
                        stack.push((c, false));
                    }
                }
            }
        }
        out
    }

    pub fn root_of(&self, mut i: usize) -> usize {
        while let Some(p) = self.comps[i].parent {
            i = p;
        }
        i
    }

    /// Same components, with the tree of wiring `w` rooted at `w`.
    pub fn reroot(&self, w: usize) -> Result<FactorizedNet, FactorizeError> {
        if w >= self.comps.len() || !self.comps[w].is_wiring() {
            return Err(FactorizeError::UnknownWiring(w));
        }
        let old = self.root_of(w);
        let roots: Vec<usize> = self.roots.iter().map(|&r| if r == old { w } else { r }).collect();
        FactorizedNet::new(self.net.clone(), self.parts(), &roots)
    }

    pub fn to_json(&self) -> FactorizedJson {
        FactorizedJson {
            net: self.net.to_json(),
            tree: self
                .comps
                .iter()
                .map(|c| TreeEntryJson {
                    wiring: c.is_wiring().then(|| c.nodes.iter().copied().collect()),
                    box_node: match c.kind {
                        CompKind::Leaf(b) => Some(b),
                        CompKind::Wiring => None,
                    },
                    output_atoms: c.output_atoms.iter().map(|x| x.to_string()).collect(),
                    children: c.children.clone(),
                })
                .collect(),
            roots: self.roots.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serializable")
    }

    /// Rebuilds from JSON; the stored tree must match the recomputed one.
    pub fn from_json(j: &FactorizedJson) -> Result<FactorizedNet, FactorizeError> {
        let net = Net::from_json(&j.net)?;
        let mut parts = vec![];
        for (i, t) in j.tree.iter().enumerate() {
            match (&t.wiring, t.box_node) {
                (Some(ns), None) => parts.push((CompKind::Wiring, ns.iter().copied().collect())),
                (None, Some(b)) => parts.push((CompKind::Leaf(b), BTreeSet::from([b]))),
                _ => {
                    return Err(FactorizeError::NotFactorized(format!(
                        "tree entry {i} must name either a wiring or a box"
                    )))
                }
            }
        }
        let f = FactorizedNet::new(net, parts, &j.roots)?;
        let mut want = j.roots.clone();
        want.sort_unstable();
        if f.roots != want {
            return Err(FactorizeError::NotFactorized(format!("roots {:?} do not match the tree", j.roots)));
        }
        for (i, t) in j.tree.iter().enumerate() {
            let mut a = t.children.clone();
            a.sort_unstable();
            if a != f.comps[i].children {
                return Err(FactorizeError::NotFactorized(format!("children of component {i} do not match")));
            }
        }
        Ok(f)
    }

    pub fn from_json_str(s: &str) -> Result<FactorizedNet, FactorizeError> {
        let j: FactorizedJson =
            serde_json::from_str(s).map_err(|e| FactorizeError::Net(NetError::Parse(e.to_string())))?;
        FactorizedNet::from_json(&j)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TreeEntryJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wiring: Option<Vec<NodeId>>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_node: Option<NodeId>,
    #[serde(default)]
    pub output_atoms: Vec<String>,
    #[serde(default)]
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FactorizedJson {
    #[serde(flatten)]
    pub net: NetJson,
    pub tree: Vec<TreeEntryJson>,
    pub roots: Vec<usize>,
}

/// Replaces the target slot of `e` by a fresh axiom and cuts `e` against the
/// axiom's other end. Returns (axiom, cut).
pub fn ax_expand(net: &mut Net, e: EdgeId) -> (NodeId, NodeId) {
    let (x, pol) = {
        let (x, p) = net.edge(e).atom().expect("atomic edge");
        (x.clone(), p)
    };
    let (a, pos, neg) = build::ax(net, &x);
    let (same, dual) = match pol {
        Pol::Pos => (pos, neg),
        Pol::Neg => (neg, pos),
    };
    net.replace_dst(e, same);
    let k = build::cut(net, e, dual);
    (a, k)
}

/// Every box is a leaf under one wiring holding the rest of the net. Box
/// conclusions are axiom-expanded where needed so that each box meets the
/// wiring only through cuts.
pub fn trivial_factorization(net: &Net) -> Result<FactorizedNet, FactorizeError> {
    require_bpn(net)?;
    let mut net = net.clone();
    let boxes = net.box_nodes();
    if boxes.len() == 1 && net.node_count() == 1 {
        let b = boxes[0];
        return FactorizedNet::new(net, vec![(CompKind::Leaf(b), BTreeSet::from([b]))], &[0]);
    }
    for &b in &boxes {
        for e in net.node(b).conclusions.clone() {
            let pol = net.edge(e).atom().map(|(_, p)| p);
            let into_cut = net.edge(e).dst.is_some_and(|d| net.kind(d) == NodeKind::Cut);
            if pol == Some(Pol::Neg) || !into_cut {
                ax_expand(&mut net, e);
            }
        }
    }
    let box_set: BTreeSet<NodeId> = boxes.iter().copied().collect();
    let mut wiring = BTreeSet::new();
    for (id, node) in net.nodes() {
        if box_set.contains(&id) {
            continue;
        }
        let linking = node.kind == NodeKind::Cut
            && node.premises.iter().any(|&e| net.edge(e).src.is_some_and(|s| box_set.contains(&s)));
        if !linking {
            wiring.insert(id);
        }
    }
    let mut parts: Vec<(CompKind, BTreeSet<NodeId>)> =
        boxes.iter().map(|&b| (CompKind::Leaf(b), BTreeSet::from([b]))).collect();
    let root = parts.len();
    if !wiring.is_empty() {
        parts.push((CompKind::Wiring, wiring));
    }
    FactorizedNet::new(net, parts, &[root])
}

/// Step-by-step construction of the order-induced factorization. The state is a
/// set of factorized sub-nets (initially the boxes) glued to a normal wiring
/// module; eliminating an atom wraps every sub-net that mentions it in a new
/// wiring.
#[derive(Clone, Debug)]
pub struct Elimination {
    net: Net,
    parts: Vec<(CompKind, BTreeSet<NodeId>)>,
    module: BTreeSet<NodeId>,
    /// Sub-nets keyed by their root component.
    nets: BTreeMap<usize, BTreeSet<NodeId>>,
    owner: BTreeMap<NodeId, usize>,
    eliminated: Vec<VariableId>,
}

impl Elimination {
    pub fn new(net: &Net) -> Result<Self, FactorizeError> {
        require_bpn(net)?;
        if !find_redexes(net).is_empty() {
            return Err(FactorizeError::NotNormal);
        }
        for &c in net.conclusions() {
            if !matches!(net.edge(c).atom(), Some((_, Pol::Pos))) {
                return Err(FactorizeError::NonEmptyConclusion);
            }
        }
        let mut parts = vec![];
        let mut nets = BTreeMap::new();
        let mut owner = BTreeMap::new();
        for b in net.box_nodes() {
            let i = parts.len();
            parts.push((CompKind::Leaf(b), BTreeSet::from([b])));
            nets.insert(i, BTreeSet::from([b]));
            owner.insert(b, i);
        }
        let module = net.nodes().map(|(id, _)| id).filter(|id| !owner.contains_key(id)).collect();
        Ok(Elimination { net: net.clone(), parts, module, nets, owner, eliminated: vec![] })
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    /// The wiring module, as a pre-module with its interface pending.
    pub fn module(&self) -> Net {
        self.net.restrict(&self.module)
    }

    pub fn module_atoms(&self) -> BTreeSet<VariableId> {
        atoms_touching(&self.net, &self.module)
    }

    pub fn net_count(&self) -> usize {
        self.nets.len()
    }

    pub fn eliminated(&self) -> &[VariableId] {
        &self.eliminated
    }

    fn conclusions_of(&self, root: usize) -> Vec<EdgeId> {
        let nodes = &self.nets[&root];
        let mut out: Vec<EdgeId> = nodes
            .iter()
            .flat_map(|&n| self.net.node(n).conclusions.iter().copied())
            .filter(|&e| self.net.edge(e).dst.is_none_or(|d| !nodes.contains(&d)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Eliminates `z`. Returns the new wiring, or `None` when `z` no longer
    /// occurs in the module.
    pub fn eliminate(&mut self, z: &VariableId) -> Result<Option<usize>, FactorizeError> {
        if !self.module_atoms().contains(z) {
            return Ok(None);
        }
        let mut inside = BTreeSet::new();
        let mut atoms = BTreeSet::new();
        for &r in self.nets.keys() {
            let gamma = self.conclusions_of(r);
            if gamma.iter().any(|&e| atom_of(&self.net, e).as_ref() == Some(z)) {
                inside.insert(r);
                atoms.extend(gamma.iter().filter_map(|&e| atom_of(&self.net, e)));
            }
        }
        let id = self.build_wiring(&inside, &atoms)?;
        self.eliminated.push(z.clone());
        Ok(Some(id))
    }

    /// Wraps what is left of the module into one last wiring and returns the
    /// factorized net.
    pub fn finish(mut self) -> Result<FactorizedNet, FactorizeError> {
        if !self.module.is_empty() {
            let mut inside = BTreeSet::new();
            let mut atoms = BTreeSet::new();
            for &r in self.nets.keys() {
                let gamma = self.conclusions_of(r);
                if gamma.iter().any(|&e| self.net.edge(e).dst.is_some_and(|d| self.module.contains(&d))) {
                    inside.insert(r);
                    atoms.extend(gamma.iter().filter_map(|&e| atom_of(&self.net, e)));
                }
            }
            self.build_wiring(&inside, &atoms)?;
            if !self.module.is_empty() {
                return Err(FactorizeError::NotFactorized("module left over after the final wiring".into()));
            }
        }
        let roots: Vec<usize> = self.nets.keys().copied().collect();
        FactorizedNet::new(self.net, self.parts, &roots)
    }

    fn producer(&self, x: &VariableId) -> Result<EdgeId, FactorizeError> {
        let want = Formula::pos(x);
        let found: Vec<EdgeId> = self
            .net
            .edges()
            .filter(|(_, e)| e.label == want)
            .filter(|(_, e)| match e.src.and_then(|s| self.owner.get(&s)) {
                Some(r) => e.dst.is_none_or(|d| self.module.contains(&d) || !self.nets[r].contains(&d)),
                None => false,
            })
            .map(|(id, _)| id)
            .collect();
        // A shown atom also has a pending occurrence; the one feeding the module
        // is processed first.
        let feeding: Vec<EdgeId> = found
            .iter()
            .copied()
            .filter(|&e| self.net.edge(e).dst.is_some_and(|d| self.module.contains(&d)))
            .collect();
        match (found.as_slice(), feeding.as_slice()) {
            ([p], _) | (_, [p]) => Ok(*p),
            ([], _) => Err(FactorizeError::NotBpn(format!("no positive occurrence of {x} outside the module"))),
            _ => Err(FactorizeError::NotBpn(format!("several positive occurrences of {x}"))),
        }
    }

    fn collect_leaves(&self, e: EdgeId, tree: &mut Vec<NodeId>, leaves: &mut Vec<EdgeId>) {
        match self.net.edge(e).src {
            Some(s) if self.module.contains(&s) && self.net.kind(s) == NodeKind::Contraction => {
                tree.push(s);
                for &q in &self.net.node(s).premises.clone() {
                    self.collect_leaves(q, tree, leaves);
                }
            }
            _ => leaves.push(e),
        }
    }

    fn comb(&mut self, leaves: &[EdgeId], into: Option<&mut BTreeSet<NodeId>>) -> EdgeId {
        let mut made = vec![];
        let mut acc = leaves[0];
        for &l in &leaves[1..] {
            let (n, c) = build::contract(&mut self.net, acc, l);
            made.push(n);
            acc = c;
        }
        match into {
            Some(d) => d.extend(made),
            None => self.module.extend(made),
        }
        acc
    }

    fn build_wiring(&mut self, inside: &BTreeSet<usize>, atoms: &BTreeSet<VariableId>) -> Result<usize, FactorizeError> {
        let inside_nodes: BTreeSet<NodeId> = inside.iter().flat_map(|r| self.nets[r].iter().copied()).collect();
        let mut d: BTreeSet<NodeId> = BTreeSet::new();
        let mut links: BTreeSet<NodeId> = BTreeSet::new();
        for x in atoms {
            let p = self.producer(x)?;
            let p_root = self.owner[&self.net.edge(p).src.expect("producer has a source")];
            let cut_x = self.net.edge(p).dst;
            let mut tree = vec![];
            let mut leaves = vec![];
            if let Some(c) = cut_x {
                if !self.module.contains(&c) || self.net.kind(c) != NodeKind::Cut {
                    return Err(FactorizeError::NotFactorized(format!("{x}+ does not enter a module cut")));
                }
                let t = *self.net.node(c).premises.iter().find(|&&e| e != p).expect("cut has two premises");
                self.collect_leaves(t, &mut tree, &mut leaves);
            }
            let (mut ins, mut outs, mut mods) = (vec![], vec![], vec![]);
            for &l in &leaves {
                let s = self
                    .net
                    .edge(l)
                    .src
                    .ok_or_else(|| FactorizeError::NotFactorized(format!("{x}- has no source")))?;
                if self.module.contains(&s) {
                    mods.push(l);
                } else if inside_nodes.contains(&s) {
                    ins.push(l);
                } else {
                    outs.push(l);
                }
            }
            for &l in &leaves {
                self.net.set_dst(l, None);
            }
            if cut_x.is_some() {
                self.net.set_dst(p, None);
            }
            for &n in &tree {
                for e in self.net.node(n).conclusions.clone() {
                    self.net.remove_edge(e);
                }
            }
            for &n in tree.iter().chain(cut_x.iter()) {
                self.net.remove_node(n);
                self.module.remove(&n);
            }
            if inside.contains(&p_root) {
                if !outs.is_empty() {
                    // A shown conclusion stays with the consumers left outside.
                    let (shown, rest): (Vec<EdgeId>, Vec<EdgeId>) =
                        mods.iter().partition(|&&l| self.net.kind(self.net.edge(l).src.unwrap()) == NodeKind::Ax);
                    outs.extend(shown);
                    mods = rest;
                }
                let mut dl = vec![];
                for &l in &ins {
                    let (a, pos, neg) = build::ax(&mut self.net, x);
                    d.insert(a);
                    links.insert(build::cut(&mut self.net, l, pos));
                    dl.push(neg);
                }
                for &l in &mods {
                    let s = self.net.edge(l).src.unwrap();
                    self.module.remove(&s);
                    d.insert(s);
                    dl.push(l);
                }
                if !outs.is_empty() {
                    let (a, h, k) = build::ax(&mut self.net, x);
                    d.insert(a);
                    dl.push(k);
                    let root = self.comb(&outs, None);
                    let c = build::cut(&mut self.net, h, root);
                    self.module.insert(c);
                }
                if cut_x.is_none() {
                    let (a, h, k) = build::ax(&mut self.net, x);
                    d.insert(a);
                    self.net.replace_dst(p, h);
                    dl.push(k);
                }
                let root = self.comb(&dl, Some(&mut d));
                links.insert(build::cut(&mut self.net, p, root));
            } else {
                if ins.is_empty() {
                    return Err(FactorizeError::NotFactorized(format!("{x} is not consumed by the eliminated nets")));
                }
                let mut gl = vec![];
                for &l in &ins {
                    let (a, pos, neg) = build::ax(&mut self.net, x);
                    d.insert(a);
                    links.insert(build::cut(&mut self.net, l, pos));
                    gl.push(neg);
                }
                let g = self.comb(&gl, Some(&mut d));
                let mut ml = outs;
                ml.extend(mods);
                ml.push(g);
                let root = self.comb(&ml, None);
                let c = build::cut(&mut self.net, p, root);
                self.module.insert(c);
            }
        }
        let id = self.parts.len();
        self.parts.push((CompKind::Wiring, d.clone()));
        let mut nodes = d;
        nodes.extend(links);
        for r in inside {
            nodes.extend(self.nets.remove(r).expect("known sub-net"));
        }
        for &n in &nodes {
            self.owner.insert(n, id);
        }
        self.nets.insert(id, nodes);
        Ok(id)
    }

    /// Checks the three construction invariants: every sub-net is a factorized
    /// Bayesian proof-net, the module is a normal well-labelled wiring module, and
    /// eliminated atoms are gone from the module.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (&r, nodes) in &self.nets {
            let sub = self.net.restrict(nodes);
            let rep = is_bpn(&sub).map_err(|e| e.to_string())?;
            if !rep.is_bpn {
                return Err(format!("sub-net {r} is not a bpn: {:?}", rep.violations));
            }
            let idx: Vec<usize> = (0..self.parts.len()).filter(|&i| self.parts[i].1.is_subset(nodes)).collect();
            let parts: Vec<(CompKind, BTreeSet<NodeId>)> = idx.iter().map(|&i| self.parts[i].clone()).collect();
            let local_root = idx.iter().position(|&i| i == r).ok_or("root missing")?;
            let f = FactorizedNet::new(sub.clone(), parts, &[local_root]).map_err(|e| format!("sub-net {r}: {e}"))?;
            if f.roots != vec![local_root] {
                return Err(format!("sub-net {r} is not a single tree rooted at its last wiring"));
            }
            for w in f.wirings() {
                let m = sub.restrict(&f.comps[w].nodes);
                if m.nodes().any(|(_, n)| n.kind == NodeKind::Cut) {
                    return Err(format!("wiring {} of sub-net {r} has a cut", idx[w]));
                }
                let wl = well_labelled(&m).map_err(|e| e.to_string())?;
                if !wl.verdict {
                    return Err(format!("wiring {} of sub-net {r} is not well-labelled", idx[w]));
                }
            }
        }
        let m = self.module();
        for (id, n) in m.nodes() {
            if !matches!(n.kind, NodeKind::Ax | NodeKind::Contraction | NodeKind::Weakening | NodeKind::Cut) {
                return Err(format!("module node {id} is a {}", n.kind.name()));
            }
        }
        if m.node_count() > 0 {
            let wl = well_labelled(&m).map_err(|e| e.to_string())?;
            if !wl.verdict {
                return Err("module is not well-labelled".into());
            }
        }
        if !find_redexes(&m).is_empty() {
            return Err("module is not normal".into());
        }
        let at = self.module_atoms();
        for z in &self.eliminated {
            if at.contains(z) {
                return Err(format!("eliminated atom {z} still occurs in the module"));
            }
        }
        Ok(())
    }
}

/// Checks an elimination order against a net: every internal atom must appear,
/// entries must be atoms of the net and may not repeat.
pub fn check_order(net: &Net, order: &[VariableId]) -> Result<(), FactorizeError> {
    let all = net.atoms();
    let mut seen = BTreeSet::new();
    for z in order {
        if !all.contains(z) {
            return Err(FactorizeError::UnknownAtom(z.clone()));
        }
        if !seen.insert(z.clone()) {
            return Err(FactorizeError::OrderIncomplete(format!("{z} repeats")));
        }
    }
    let missing: Vec<String> = internal_atoms(net).into_iter().filter(|z| !seen.contains(z)).map(|z| z.to_string()).collect();
    if !missing.is_empty() {
        return Err(FactorizeError::OrderIncomplete(format!("missing internal atoms {}", missing.join(", "))));
    }
    Ok(())
}

/// Factorization induced by an elimination order. Entries that are conclusion
/// atoms are skipped.
pub fn factorize_by_order(net: &Net, order: &[VariableId]) -> Result<FactorizedNet, FactorizeError> {
    check_order(net, order)?;
    let internal = internal_atoms(net);
    let mut st = Elimination::new(net)?;
    for z in order {
        if internal.contains(z) {
            st.eliminate(z)?;
        }
    }
    st.finish()
}

/// Adds a `y+` conclusion to a factorized net without conclusions, inside the
/// wiring that consumes the box output of `y`, and roots the tree there.
pub fn marginal_net(f: &FactorizedNet, y: &VariableId) -> Result<FactorizedNet, FactorizeError> {
    if !f.net.conclusions().is_empty() {
        return Err(FactorizeError::NonEmptyConclusion);
    }
    let b = *f.net.boxes_by_atom().get(y).ok_or_else(|| FactorizeError::UnknownAtom(y.clone()))?;
    let want = Formula::pos(y);
    let p = *f
        .net
        .node(b)
        .conclusions
        .iter()
        .find(|&&e| f.net.label(e) == &want)
        .ok_or_else(|| FactorizeError::UnknownAtom(y.clone()))?;
    let c = f.net.edge(p).dst.filter(|&c| f.net.kind(c) == NodeKind::Cut).ok_or_else(|| {
        FactorizeError::NotFactorized(format!("{y}+ does not enter a cut"))
    })?;
    let e = *f.net.node(c).premises.iter().find(|&&x| x != p).unwrap();
    let n = f.net.edge(e).src.ok_or_else(|| FactorizeError::NotFactorized(format!("{y}- has no source")))?;
    let k = f
        .comps
        .iter()
        .position(|comp| comp.nodes.contains(&n))
        .ok_or_else(|| FactorizeError::NotFactorized(format!("node {n} is in no component")))?;
    if !f.comps[k].is_wiring() {
        return Err(FactorizeError::UnknownWiring(k));
    }
    let mut net = f.net.clone();
    let (cn, an) = show_at(&mut net, e);
    let mut parts = f.parts();
    parts[k].1.insert(cn);
    parts[k].1.insert(an);
    let old = f.root_of(k);
    let roots: Vec<usize> = f.roots.iter().map(|&r| if r == old { k } else { r }).collect();
    FactorizedNet::new(net, parts, &roots)
}

/// A tree of variable sets with separators on its edges and each CPT assigned to
/// one clique.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CliqueTree {
    pub cliques: Vec<BTreeSet<VariableId>>,
    pub edges: Vec<(usize, usize)>,
    pub separators: Vec<BTreeSet<VariableId>>,
    /// Clique holding the CPT of each variable.
    pub assignment: BTreeMap<VariableId, usize>,
}

impl CliqueTree {
    pub fn width(&self) -> usize {
        self.cliques.iter().map(|c| c.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// (neighbour, edge index) pairs.
    pub fn neighbours(&self, i: usize) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            if a == i {
                out.push((b, k));
            } else if b == i {
                out.push((a, k));
            }
        }
        out
    }

    /// Merges every clique contained in a neighbour into that neighbour.
    pub fn pruned(&self) -> CliqueTree {
        let mut t = self.clone();
        while let Some(k) = t.edges.iter().position(|&(a, b)| {
            t.cliques[a].is_subset(&t.cliques[b]) || t.cliques[b].is_subset(&t.cliques[a])
        }) {
            let (a, b) = t.edges[k];
            let (gone, keep) = if t.cliques[a].is_subset(&t.cliques[b]) { (a, b) } else { (b, a) };
            t.edges.remove(k);
            t.separators.remove(k);
            let remap = |i: usize| {
                let i = if i == gone { keep } else { i };
                if i > gone { i - 1 } else { i }
            };
            for e in &mut t.edges {
                *e = (remap(e.0), remap(e.1));
            }
            for c in t.assignment.values_mut() {
                *c = remap(*c);
            }
            t.cliques.remove(gone);
        }
        t
    }

    /// Tree shape, separators equal to clique intersections, family coverage and
    /// the running intersection property.
    pub fn verify(&self, families: &BTreeMap<VariableId, BTreeSet<VariableId>>) -> Result<(), FactorizeError> {
        let v = |s: String| Err(FactorizeError::JointreeViolation(s));
        let n = self.cliques.len();
        if n == 0 {
            return if families.is_empty() { Ok(()) } else { v("no cliques".into()) };
        }
        if self.edges.len() != n - 1 || self.separators.len() != self.edges.len() {
            return v(format!("{} cliques but {} edges", n, self.edges.len()));
        }
        let reach = |allowed: &dyn Fn(usize) -> bool, start: usize| -> BTreeSet<usize> {
            let mut seen = BTreeSet::from([start]);
            let mut q = VecDeque::from([start]);
            while let Some(u) = q.pop_front() {
                for (w, _) in self.neighbours(u) {
                    if allowed(w) && seen.insert(w) {
                        q.push_back(w);
                    }
                }
            }
            seen
        };
        if reach(&|_| true, 0).len() != n {
            return v("clique graph is not connected".into());
        }
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            let inter: BTreeSet<VariableId> = self.cliques[a].intersection(&self.cliques[b]).cloned().collect();
            if inter != self.separators[k] {
                return v(format!("separator {k} differs from the intersection of cliques {a} and {b}"));
            }
        }
        for (x, fam) in families {
            match self.assignment.get(x) {
                Some(&c) if c < n && fam.is_subset(&self.cliques[c]) => {}
                _ => return v(format!("family of {x} is not covered by its clique")),
            }
        }
        let all: BTreeSet<&VariableId> = self.cliques.iter().flatten().collect();
        for x in all {
            let holders: Vec<usize> = (0..n).filter(|&i| self.cliques[i].contains(x)).collect();
            let got = reach(&|i| self.cliques[i].contains(x), holders[0]);
            if got.len() != holders.len() {
                return v(format!("cliques holding {x} are not connected"));
            }
        }
        Ok(())
    }
}

/// The clique tree read off a factorized net: one clique per wiring, separators
/// from the linking cuts, each box CPT on its neighbouring wiring.
pub fn clique_tree_of(f: &FactorizedNet) -> Result<CliqueTree, FactorizeError> {
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cliques: Vec<BTreeSet<VariableId>> = vec![];
    for w in f.wirings() {
        index.insert(w, cliques.len());
        cliques.push(f.comps[w].atoms.iter().cloned().collect());
    }
    let mut edges = vec![];
    let mut separators = vec![];
    let mut assignment = BTreeMap::new();
    for (i, c) in f.comps.iter().enumerate() {
        match c.kind {
            CompKind::Wiring => {
                if let Some(p) = c.parent {
                    let pi = *index.get(&p).ok_or_else(|| {
                        FactorizeError::NotFactorized(format!("wiring {i} hangs below box component {p}"))
                    })?;
                    let sep: BTreeSet<VariableId> = c.output_atoms.iter().cloned().collect();
                    let inter: BTreeSet<VariableId> = cliques[pi].intersection(&cliques[index[&i]]).cloned().collect();
                    if sep != inter {
                        return Err(FactorizeError::JointreeViolation(format!(
                            "interface of wiring {i} is {sep:?} but the clique intersection is {inter:?}"
                        )));
                    }
                    edges.push((pi, index[&i]));
                    separators.push(sep);
                }
            }
            CompKind::Leaf(b) => {
                let x = f.net.box_atom(b).ok_or_else(|| FactorizeError::NotBpn(format!("box {b} has no output")))?;
                let host = match (c.parent, c.children.as_slice()) {
                    (Some(p), []) => index.get(&p).copied(),
                    (None, [ch]) => index.get(ch).copied(),
                    (None, []) => {
                        cliques.push(c.atoms.iter().cloned().collect());
                        Some(cliques.len() - 1)
                    }
                    _ => None,
                };
                let host = host.ok_or_else(|| FactorizeError::NotFactorized(format!("box {b} is not a leaf")))?;
                assignment.insert(x, host);
            }
        }
    }
    // Join the trees of a forest through empty separators.
    let heads: Vec<usize> = f
        .roots
        .iter()
        .map(|&r| match f.comps[r].kind {
            CompKind::Wiring => index[&r],
            CompKind::Leaf(b) => assignment[&f.net.box_atom(b).unwrap()],
        })
        .collect();
    for w in heads.windows(2) {
        edges.push((w[0], w[1]));
        separators.push(BTreeSet::new());
    }
    Ok(CliqueTree { cliques, edges, separators, assignment })
}
