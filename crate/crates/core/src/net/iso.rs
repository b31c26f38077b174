use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::DiGraph;

use super::{Formula, Net, NodeKind};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Vertex {
    Node(NodeKind),
    Edge(Formula),
    Premise,
    Conclusion,
}

/// Encodes a net as a simple directed graph: one vertex per node, per edge and per
/// pending end. Ordered ports (tensor, par, contraction premises) are kept as
/// edge weights.
fn encode(net: &Net) -> DiGraph<Vertex, usize> {
    let mut g = DiGraph::new();
    let mut idx = std::collections::BTreeMap::new();
    for (id, n) in net.nodes() {
        idx.insert(id, g.add_node(Vertex::Node(n.kind)));
    }
    for (id, e) in net.edges() {
        let v = g.add_node(Vertex::Edge(e.label.clone()));
        match e.src {
            Some(s) => {
                g.add_edge(idx[&s], v, 0);
            }
            None => {
                let p = g.add_node(Vertex::Premise);
                g.add_edge(p, v, 0);
            }
        }
        match e.dst {
            Some(d) => {
                let node = net.node(d);
                let port = match node.kind {
                    NodeKind::Tensor | NodeKind::Par | NodeKind::Contraction => {
                        node.premises.iter().position(|&x| x == id).unwrap()
                    }
                    _ => 0,
                };
                g.add_edge(v, idx[&d], port);
            }
            None => {
                let c = g.add_node(Vertex::Conclusion);
                g.add_edge(v, c, 0);
            }
        }
    }
    g
}

/// Structural isomorphism up to node and edge ids, respecting labels and premise
/// order. Conclusion order is ignored.
pub fn isomorphic(a: &Net, b: &Net) -> bool {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    let (ga, gb) = (encode(a), encode(b));
    is_isomorphic_matching(&ga, &gb, |x, y| x == y, |x, y| x == y)
}
