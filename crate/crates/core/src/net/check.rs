use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::{EdgeId, Formula, Net, NetError, NodeId, NodeKind, Pol};
use crate::factors::VariableId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorrectnessReport {
    pub is_atomic: bool,
    pub switching_acyclic: bool,
    pub switching_witness: Option<Vec<EdgeId>>,
    pub polarized_dag: Option<bool>,
    pub polarized_witness: Option<Vec<EdgeId>>,
}

/// Step budget for the exact switching search inside [`check_pre_module`].
const CHECK_BUDGET: u64 = 2_000_000;

/// Arity and label discipline of every node.
pub fn check_structure(net: &Net) -> Result<(), NetError> {
    net.check_consistency()?;
    for (id, node) in net.nodes() {
        let np = node.premises.len();
        let nc = node.conclusions.len();
        let prem: Vec<&Formula> = node.premises.iter().map(|&e| net.label(e)).collect();
        let conc: Vec<&Formula> = node.conclusions.iter().map(|&e| net.label(e)).collect();
        let arity_ok = match node.kind {
            NodeKind::Ax => np == 0 && nc == 2,
            NodeKind::Box => np == 0 && nc >= 1,
            NodeKind::Cut => np == 2 && nc == 0,
            NodeKind::Tensor | NodeKind::Par => np == 2 && nc == 1,
            NodeKind::Contraction => np >= 1 && nc == 1,
            NodeKind::Weakening | NodeKind::One | NodeKind::Bot => np == 0 && nc == 1,
        };
        if !arity_ok {
            return Err(NetError::ArityViolation(id));
        }
        let labels_ok = match node.kind {
            NodeKind::Ax => conc[0].dual() == *conc[1],
            NodeKind::Box => {
                conc.iter().all(|f| f.is_atomic())
                    && conc.iter().filter(|f| matches!(f.atom(), Some((_, Pol::Pos)))).count() == 1
            }
            NodeKind::Cut => prem[0].dual() == *prem[1],
            NodeKind::Tensor => *conc[0] == Formula::tensor(prem[0].clone(), prem[1].clone()),
            NodeKind::Par => *conc[0] == Formula::par(prem[0].clone(), prem[1].clone()),
            NodeKind::Contraction => {
                matches!(conc[0].atom(), Some((_, Pol::Neg))) && prem.iter().all(|f| *f == conc[0])
            }
            NodeKind::Weakening => matches!(conc[0].atom(), Some((_, Pol::Neg))),
            NodeKind::One => *conc[0] == Formula::One,
            NodeKind::Bot => *conc[0] == Formula::Bot,
        };
        if !labels_ok {
            return Err(NetError::LabelMismatch(id));
        }
    }
    Ok(())
}

/// Structural validation followed by the correctness report.
pub fn check_pre_module(net: &Net) -> Result<CorrectnessReport, NetError> {
    check_structure(net)?;
    let is_atomic = net.is_atomic();
    if !is_atomic {
        let w = switching_cycle(net, None).expect("unbounded search");
        return Ok(CorrectnessReport {
            is_atomic,
            switching_acyclic: w.is_none(),
            switching_witness: w,
            polarized_dag: None,
            polarized_witness: None,
        });
    }
    let pol = polarized_orient(net)?;
    let (pdag, pw) = match &pol {
        Orientation::Dag(_) => (true, None),
        Orientation::Cycle(c) => (false, Some(c.clone())),
    };
    let (sa, sw) = match switching_cycle(net, Some(CHECK_BUDGET)) {
        Ok(w) => (w.is_none(), w),
        Err(BudgetExceeded) => (pdag, pw.clone()),
    };
    Ok(CorrectnessReport {
        is_atomic,
        switching_acyclic: sa,
        switching_witness: sw,
        polarized_dag: Some(pdag),
        polarized_witness: pw,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetExceeded;

/// Exact switching-acyclicity test. Returns a violating cycle (edge ids in order)
/// when one exists.
pub fn switching_acyclic(net: &Net) -> Result<(), Vec<EdgeId>> {
    match switching_cycle(net, None).expect("unbounded search") {
        None => Ok(()),
        Some(c) => Err(c),
    }
}

struct Adj {
    /// (edge, other endpoint, edge is a premise of this node)
    out: BTreeMap<NodeId, Vec<(EdgeId, NodeId, bool)>>,
    switched: BTreeSet<NodeId>,
}

/// Backtracking search for a simple cycle that never uses two premises of the same
/// par or contraction node.
pub fn switching_cycle(net: &Net, budget: Option<u64>) -> Result<Option<Vec<EdgeId>>, BudgetExceeded> {
    let mut adj = Adj { out: BTreeMap::new(), switched: BTreeSet::new() };
    for (id, node) in net.nodes() {
        adj.out.insert(id, vec![]);
        if node.kind.is_switched() {
            adj.switched.insert(id);
        }
    }
    for (id, e) in net.edges() {
        if let (Some(s), Some(d)) = (e.src, e.dst) {
            if s == d {
                return Ok(Some(vec![id]));
            }
            adj.out.get_mut(&s).unwrap().push((id, d, false));
            adj.out.get_mut(&d).unwrap().push((id, s, true));
        }
    }
    let mut alive: BTreeSet<NodeId> = adj.out.keys().copied().collect();
    prune(&adj, &mut alive);
    let mut steps = 0u64;
    let starts: Vec<NodeId> = alive.iter().copied().collect();
    for s in starts {
        if !alive.contains(&s) {
            continue;
        }
        let mut path_nodes = vec![s];
        let mut path_edges: Vec<(EdgeId, bool, bool)> = vec![];
        let mut on_path = BTreeSet::from([s]);
        if let Some(c) = dfs(&adj, &alive, s, s, &mut path_nodes, &mut path_edges, &mut on_path, &mut steps, budget)? {
            return Ok(Some(c));
        }
        alive.remove(&s);
        prune(&adj, &mut alive);
    }
    Ok(None)
}

fn usable(adj: &Adj, alive: &BTreeSet<NodeId>, n: NodeId) -> bool {
    let edges = adj.out[&n].iter().filter(|(_, o, _)| alive.contains(o));
    if adj.switched.contains(&n) {
        let (mut p, mut c) = (0, 0);
        for (_, _, is_prem) in edges {
            if *is_prem {
                p += 1
            } else {
                c += 1
            }
        }
        c >= 1 && p + c >= 2
    } else {
        edges.count() >= 2
    }
}

fn prune(adj: &Adj, alive: &mut BTreeSet<NodeId>) {
    loop {
        let dead: Vec<NodeId> = alive.iter().copied().filter(|&n| !usable(adj, alive, n)).collect();
        if dead.is_empty() {
            return;
        }
        for n in dead {
            alive.remove(&n);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    adj: &Adj,
    alive: &BTreeSet<NodeId>,
    start: NodeId,
    at: NodeId,
    path_nodes: &mut Vec<NodeId>,
    path_edges: &mut Vec<(EdgeId, bool, bool)>,
    on_path: &mut BTreeSet<NodeId>,
    steps: &mut u64,
    budget: Option<u64>,
) -> Result<Option<Vec<EdgeId>>, BudgetExceeded> {
    *steps += 1;
    if budget.is_some_and(|b| *steps > b) {
        return Err(BudgetExceeded);
    }
    // Premise flag of the entering edge at `at`.
    let entered = path_edges.last().map(|&(e, _, prem_at_end)| (e, prem_at_end));
    for &(e, other, prem_here) in &adj.out[&at] {
        if !alive.contains(&other) || other < start {
            continue;
        }
        if let Some((ein, prem_in)) = entered {
            if e == ein || (adj.switched.contains(&at) && prem_in && prem_here) {
                continue;
            }
        }
        // Premise flag of `e` at `other`.
        let prem_other = edge_is_premise_at(adj, e, other);
        if other == start {
            if path_edges.is_empty() {
                continue;
            }
            let (first, prem_first_at_start, _) = path_edges[0];
            if first == e || (adj.switched.contains(&start) && prem_first_at_start && prem_other) {
                continue;
            }
            let mut c: Vec<EdgeId> = path_edges.iter().map(|x| x.0).collect();
            c.push(e);
            return Ok(Some(c));
        }
        if on_path.contains(&other) {
            continue;
        }
        path_nodes.push(other);
        on_path.insert(other);
        path_edges.push((e, prem_here, prem_other));
        let r = dfs(adj, alive, start, other, path_nodes, path_edges, on_path, steps, budget)?;
        if r.is_some() {
            return Ok(r);
        }
        path_edges.pop();
        on_path.remove(&other);
        path_nodes.pop();
    }
    Ok(None)
}

fn edge_is_premise_at(adj: &Adj, e: EdgeId, n: NodeId) -> bool {
    adj.out[&n].iter().any(|&(x, _, p)| x == e && p)
}

/// Checks that `cycle` is a closed, simple path of edges that never uses two
/// premises of one par or contraction node.
pub fn is_switching_cycle(net: &Net, cycle: &[EdgeId]) -> bool {
    if cycle.is_empty() || cycle.iter().any(|&e| !net.has_edge(e)) {
        return false;
    }
    let ends = |e: EdgeId| (net.edge(e).src, net.edge(e).dst);
    if cycle.len() == 1 {
        let (s, d) = ends(cycle[0]);
        return s.is_some() && s == d;
    }
    let shared = |a: EdgeId, b: EdgeId| -> Option<NodeId> {
        let (s1, d1) = ends(a);
        let (s2, d2) = ends(b);
        [s1, d1].into_iter().flatten().find(|n| [s2, d2].contains(&Some(*n)))
    };
    let k = cycle.len();
    let mut seen = BTreeSet::new();
    for i in 0..k {
        let (a, b) = (cycle[i], cycle[(i + 1) % k]);
        if a == b {
            return false;
        }
        let Some(n) = shared(a, b) else { return false };
        if !seen.insert(n) {
            return false;
        }
        if net.kind(n).is_switched() && net.edge(a).dst == Some(n) && net.edge(b).dst == Some(n) {
            return false;
        }
    }
    seen.len() == k
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolarizedOrder {
    /// Nodes in a topological order (ascending ids among ready nodes).
    pub order: Vec<NodeId>,
    /// Minimal edges: their start is pending or has no incoming edge.
    pub initial_edges: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Orientation {
    Dag(PolarizedOrder),
    Cycle(Vec<EdgeId>),
}

impl Orientation {
    pub fn is_dag(&self) -> bool {
        matches!(self, Orientation::Dag(_))
    }
}

/// Start and end of an atomic edge under the polarized orientation.
pub fn polar_ends(net: &Net, e: EdgeId) -> (Option<NodeId>, Option<NodeId>) {
    let edge = net.edge(e);
    match edge.atom() {
        Some((_, Pol::Neg)) => (edge.dst, edge.src),
        _ => (edge.src, edge.dst),
    }
}

/// Orients positive edges downwards and negative edges upwards.
pub fn polarized_orient(net: &Net) -> Result<Orientation, NetError> {
    if !net.is_atomic() {
        return Err(NetError::NotAtomic);
    }
    let mut indeg: BTreeMap<NodeId, usize> = net.nodes().map(|(n, _)| (n, 0)).collect();
    let mut succ: BTreeMap<NodeId, Vec<(EdgeId, NodeId)>> = BTreeMap::new();
    let mut pred: BTreeMap<NodeId, Vec<(EdgeId, NodeId)>> = BTreeMap::new();
    for (e, _) in net.edges() {
        if let (Some(a), Some(b)) = polar_ends(net, e) {
            *indeg.get_mut(&b).unwrap() += 1;
            succ.entry(a).or_default().push((e, b));
            pred.entry(b).or_default().push((e, a));
        }
    }
    let entered: BTreeSet<NodeId> = net.edges().filter_map(|(e, _)| polar_ends(net, e).1).collect();
    let initial_edges: Vec<EdgeId> = net
        .edges()
        .filter(|(e, _)| match polar_ends(net, *e).0 {
            None => true,
            Some(n) => !entered.contains(&n),
        })
        .map(|(e, _)| e)
        .collect();
    let mut deg = indeg.clone();
    let mut ready: BTreeSet<NodeId> = deg.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
    let mut order = vec![];
    while let Some(n) = ready.pop_first() {
        order.push(n);
        for &(_, m) in succ.get(&n).map(|v| v.as_slice()).unwrap_or(&[]) {
            let d = deg.get_mut(&m).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(m);
            }
        }
    }
    if order.len() == indeg.len() {
        return Ok(Orientation::Dag(PolarizedOrder { order, initial_edges }));
    }
    // Every remaining node has a remaining predecessor: walk back until a repeat.
    let done: BTreeSet<NodeId> = order.into_iter().collect();
    let mut cur = *indeg.keys().find(|n| !done.contains(n)).unwrap();
    let mut seen: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut walk: Vec<(EdgeId, NodeId)> = vec![];
    loop {
        if let Some(&i) = seen.get(&cur) {
            let mut cyc: Vec<EdgeId> = walk[i..].iter().map(|x| x.0).collect();
            cyc.reverse();
            return Ok(Orientation::Cycle(cyc));
        }
        seen.insert(cur, walk.len());
        let &(e, p) = pred[&cur].iter().find(|(_, p)| !done.contains(p)).unwrap();
        walk.push((e, p));
        cur = p;
    }
}

/// A maximal connected component of an atomic MLL module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub edges: Vec<EdgeId>,
    pub nodes: Vec<NodeId>,
    pub atom: VariableId,
    pub initial_edges: Vec<EdgeId>,
}

fn require_mll_atomic(m: &Net) -> Result<(), NetError> {
    if !m.is_atomic() {
        return Err(NetError::NotAtomic);
    }
    for (id, n) in m.nodes() {
        if !matches!(n.kind, NodeKind::Ax | NodeKind::Contraction | NodeKind::Weakening | NodeKind::Cut) {
            return Err(NetError::NotMllAtomic(id));
        }
    }
    check_structure(m)
}

fn find(p: &mut BTreeMap<EdgeId, EdgeId>, x: EdgeId) -> EdgeId {
    let mut r = x;
    while p[&r] != r {
        r = p[&r];
    }
    let mut c = x;
    while p[&c] != r {
        let n = p[&c];
        p.insert(c, r);
        c = n;
    }
    r
}

pub fn connected_components(m: &Net) -> Result<Vec<Component>, NetError> {
    require_mll_atomic(m)?;
    let mut parent: BTreeMap<EdgeId, EdgeId> = m.edges().map(|(e, _)| (e, e)).collect();
    for (n, _) in m.nodes() {
        let inc: Vec<EdgeId> = m.incident(n).collect();
        for w in inc.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent.insert(a.max(b), a.min(b));
            }
        }
    }
    let mut groups: BTreeMap<EdgeId, Vec<EdgeId>> = BTreeMap::new();
    let ids: Vec<EdgeId> = parent.keys().copied().collect();
    for e in ids {
        let r = find(&mut parent, e);
        groups.entry(r).or_default().push(e);
    }
    let orient = polarized_orient(m)?;
    let initial: BTreeSet<EdgeId> = match &orient {
        Orientation::Dag(o) => o.initial_edges.iter().copied().collect(),
        Orientation::Cycle(_) => pending_start_edges(m),
    };
    let mut out = vec![];
    for (_, edges) in groups {
        let mut nodes = BTreeSet::new();
        for &e in &edges {
            let ed = m.edge(e);
            nodes.extend(ed.src);
            nodes.extend(ed.dst);
        }
        let atom = m.edge(edges[0]).atom().unwrap().0.clone();
        let init = edges.iter().copied().filter(|e| initial.contains(e)).collect();
        out.push(Component { edges, nodes: nodes.into_iter().collect(), atom, initial_edges: init });
    }
    Ok(out)
}

/// Negative conclusions and positive pending premises.
pub fn pending_start_edges(m: &Net) -> BTreeSet<EdgeId> {
    m.edges()
        .filter(|(_, e)| match e.atom() {
            Some((_, Pol::Neg)) => e.dst.is_none(),
            Some((_, Pol::Pos)) => e.src.is_none(),
            None => false,
        })
        .map(|(id, _)| id)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WellLabelling {
    pub same_atom_connected: bool,
    pub components_distinct_atoms: bool,
    pub initial_edges_distinct_atoms: bool,
    pub interface_positives_distinct: bool,
    pub verdict: bool,
}

/// Evaluates the four equivalent forms of "one component = one atom" and checks
/// that they agree. The module must be switching-acyclic.
pub fn well_labelled(m: &Net) -> Result<WellLabelling, NetError> {
    require_mll_atomic(m)?;
    let orient = polarized_orient(m)?;
    let order = match orient {
        Orientation::Dag(o) => o,
        Orientation::Cycle(c) => return Err(NetError::SwitchingCycle(c)),
    };

    // Same-atom edges reachable from each other.
    let mut by_atom: BTreeMap<VariableId, Vec<EdgeId>> = BTreeMap::new();
    for (id, e) in m.edges() {
        by_atom.entry(e.atom().unwrap().0.clone()).or_default().push(id);
    }
    let mut c1 = true;
    for edges in by_atom.values() {
        let reach = reachable_edges(m, edges[0]);
        if edges.iter().any(|e| !reach.contains(e)) {
            c1 = false;
            break;
        }
    }

    let comps = connected_components(m)?;
    let mut atoms_seen = BTreeSet::new();
    let c2 = comps.iter().all(|c| atoms_seen.insert(c.atom.clone()));

    let mut init_atoms = BTreeSet::new();
    let c3 = order.initial_edges.iter().all(|&e| init_atoms.insert(m.edge(e).atom().unwrap().0.clone()));

    let mut pos = BTreeSet::new();
    let mut c4 = true;
    for (_, e) in m.edges() {
        let (x, p) = e.atom().unwrap();
        let counts = (p == Pol::Pos && e.src.is_none()) || (p == Pol::Neg && e.dst.is_none());
        if counts && !pos.insert(x.clone()) {
            c4 = false;
        }
    }

    let all = [c1, c2, c3, c4];
    if all.iter().any(|&c| c != c1) {
        return Err(NetError::InternalInconsistency(all));
    }
    Ok(WellLabelling {
        same_atom_connected: c1,
        components_distinct_atoms: c2,
        initial_edges_distinct_atoms: c3,
        interface_positives_distinct: c4,
        verdict: c1,
    })
}

fn reachable_edges(m: &Net, from: EdgeId) -> BTreeSet<EdgeId> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(e) = queue.pop_front() {
        let ed = m.edge(e);
        for n in [ed.src, ed.dst].into_iter().flatten() {
            for f in m.incident(n) {
                if seen.insert(f) {
                    queue.push_back(f);
                }
            }
        }
    }
    seen
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BpnReport {
    pub is_bpn: bool,
    pub repetition_free_conclusions: bool,
    pub repetition_free_box_interfaces: bool,
    pub unique_positive_per_atom: bool,
    pub nax_well_labelled: Option<bool>,
    pub violations: Vec<String>,
}

fn repeated_atom(net: &Net, edges: &[EdgeId]) -> Option<VariableId> {
    let mut seen = BTreeSet::new();
    for &e in edges {
        let mut atoms = BTreeSet::new();
        net.label(e).collect_atoms(&mut atoms);
        for a in atoms {
            if !seen.insert(a.clone()) {
                return Some(a);
            }
        }
    }
    None
}

/// Interface conditions of a Bayesian proof-net, cross-checked against the
/// well-labelling of the module without boxes.
pub fn is_bpn(net: &Net) -> Result<BpnReport, NetError> {
    let mut violations = vec![];
    if !net.is_atomic() {
        violations.push("net is not atomic".to_string());
        return Ok(BpnReport {
            is_bpn: false,
            repetition_free_conclusions: false,
            repetition_free_box_interfaces: false,
            unique_positive_per_atom: false,
            nax_well_labelled: None,
            violations,
        });
    }
    let rf_concl = match repeated_atom(net, net.conclusions()) {
        Some(a) => {
            violations.push(format!("conclusions repeat atom {a}"));
            false
        }
        None => true,
    };
    let mut rf_box = true;
    let mut producers: BTreeMap<VariableId, Vec<NodeId>> = BTreeMap::new();
    for b in net.box_nodes() {
        if let Some(a) = repeated_atom(net, &net.node(b).conclusions) {
            violations.push(format!("box {b} repeats atom {a}"));
            rf_box = false;
        }
        if let Some(x) = net.box_atom(b) {
            producers.entry(x).or_default().push(b);
        }
    }
    let mut unique = true;
    let neg_concl: BTreeSet<VariableId> = net
        .conclusions()
        .iter()
        .filter_map(|&e| match net.edge(e).atom() {
            Some((x, Pol::Neg)) => Some(x.clone()),
            _ => None,
        })
        .collect();
    for (x, bs) in &producers {
        if bs.len() > 1 {
            violations.push(format!("atom {x} is the positive conclusion of boxes {bs:?}"));
            unique = false;
        }
        if neg_concl.contains(x) {
            violations.push(format!("{x}- is a conclusion while {x}+ is a box output"));
            unique = false;
        }
    }
    let nax_ok = if rf_concl && rf_box {
        match well_labelled(&nax(net)) {
            Ok(w) => Some(w.verdict),
            Err(NetError::SwitchingCycle(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    if let Some(w) = nax_ok {
        if w != unique {
            return Err(NetError::CrossCheck(format!(
                "interface conditions give {unique} but module well-labelling gives {w}"
            )));
        }
    }
    Ok(BpnReport {
        is_bpn: rf_concl && rf_box && unique,
        repetition_free_conclusions: rf_concl,
        repetition_free_box_interfaces: rf_box,
        unique_positive_per_atom: unique,
        nax_well_labelled: nax_ok,
        violations,
    })
}

/// The module left after removing every box (box conclusions become pending).
pub fn nax(net: &Net) -> Net {
    let boxes: BTreeSet<NodeId> = net.box_nodes().into_iter().collect();
    net.detach_nodes(&boxes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub boxes: Net,
    pub module: Net,
    pub conclusions: Vec<EdgeId>,
}

/// Splits a net into its boxes and the remaining module, sharing edge ids.
pub fn decompose(net: &Net) -> Decomposition {
    let boxes: BTreeSet<NodeId> = net.box_nodes().into_iter().collect();
    Decomposition {
        boxes: net.restrict(&boxes),
        module: nax(net),
        conclusions: net.conclusions().to_vec(),
    }
}

/// Glues the two halves of a decomposition back along shared edge ids.
pub fn glue(d: &Decomposition) -> Net {
    let mut j = d.module.to_json();
    let bj = d.boxes.to_json();
    j.nodes.extend(bj.nodes);
    j.nodes.sort_by_key(|n| n.id);
    for be in bj.edges {
        match j.edges.iter_mut().find(|e| e.id == be.id) {
            Some(e) => {
                if be.src.node().is_some() {
                    e.src = be.src;
                }
            }
            None => j.edges.push(be),
        }
    }
    j.edges.sort_by_key(|e| e.id);
    j.conclusions = d.conclusions.clone();
    Net::from_json(&j).expect("decomposition glues back")
}

pub fn internal_atoms(net: &Net) -> BTreeSet<VariableId> {
    let concl = net.conclusion_atoms();
    net.atoms().into_iter().filter(|a| !concl.contains(a)).collect()
}

/// Directed graph over boxes: an edge when a polarized path joins two boxes with
/// no box in between.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoxDag {
    pub names: BTreeMap<NodeId, VariableId>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

impl BoxDag {
    /// Parents of each box, keyed by box atom.
    pub fn parents(&self) -> BTreeMap<VariableId, BTreeSet<VariableId>> {
        let mut out: BTreeMap<VariableId, BTreeSet<VariableId>> =
            self.names.values().map(|x| (x.clone(), BTreeSet::new())).collect();
        for (a, b) in &self.edges {
            out.get_mut(&self.names[b]).unwrap().insert(self.names[a].clone());
        }
        out
    }

    pub fn named_edges(&self) -> Vec<(VariableId, VariableId)> {
        let mut v: Vec<_> = self.edges.iter().map(|(a, b)| (self.names[a].clone(), self.names[b].clone())).collect();
        v.sort();
        v
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<NodeId, usize> = self.names.keys().map(|&n| (n, 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b).unwrap() += 1;
        }
        let mut ready: Vec<NodeId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
        let mut done = 0;
        while let Some(n) = ready.pop() {
            done += 1;
            for (a, b) in &self.edges {
                if *a == n {
                    let d = indeg.get_mut(b).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(*b);
                    }
                }
            }
        }
        done == self.names.len()
    }
}

pub fn bnet(net: &Net) -> Result<BoxDag, NetError> {
    if !net.is_atomic() {
        return Err(NetError::NotAtomic);
    }
    let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (e, _) in net.edges() {
        if let (Some(a), Some(b)) = polar_ends(net, e) {
            succ.entry(a).or_default().push(b);
        }
    }
    let boxes = net.box_nodes();
    let names: BTreeMap<NodeId, VariableId> = boxes
        .iter()
        .map(|&b| (b, net.box_atom(b).unwrap_or_else(|| VariableId::new(&format!("#{b}")))))
        .collect();
    let mut edges = BTreeSet::new();
    for &b in &boxes {
        let mut seen = BTreeSet::from([b]);
        let mut stack: Vec<NodeId> = succ.get(&b).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if net.kind(n) == NodeKind::Box {
                edges.insert((b, n));
                continue;
            }
            stack.extend(succ.get(&n).into_iter().flatten().copied());
        }
    }
    Ok(BoxDag { names, edges })
}
