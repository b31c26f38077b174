//! Graphviz export for nets, clique trees and box DAGs. Output order follows ids,
//! so identical inputs give identical text.

use std::fmt::Write;

use crate::bayes::BayesNet;
use crate::factorize::CliqueTree;
use crate::factors::VariableId;
use crate::net::{BoxDag, Net, NodeKind};
use crate::Scalar;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn record_escape(s: &str) -> String {
    s.chars()
        .flat_map(|c| match c {
            '{' | '}' | '|' | '<' | '>' | ' ' => vec!['\\', c],
            _ => vec![c],
        })
        .collect()
}

pub fn net_to_dot(net: &Net) -> String {
    let mut out = String::from("digraph net {\n  rankdir=TB;\n");
    for (id, n) in net.nodes() {
        let label = match n.kind {
            NodeKind::Box => match net.box_atom(id) {
                Some(x) => format!("box {x}"),
                None => "box".to_string(),
            },
            NodeKind::Contraction => "@".to_string(),
            NodeKind::Weakening => "w".to_string(),
            k => k.name().to_string(),
        };
        let shape = if n.kind == NodeKind::Box { "box" } else { "ellipse" };
        writeln!(out, "  n{id} [label={}, shape={shape}];", quote(&label)).unwrap();
    }
    for (id, e) in net.edges() {
        let src = match e.src {
            Some(s) => format!("n{s}"),
            None => {
                writeln!(out, "  p{id} [shape=point];").unwrap();
                format!("p{id}")
            }
        };
        let dst = match e.dst {
            Some(d) => format!("n{d}"),
            None => {
                writeln!(out, "  c{id} [shape=point];").unwrap();
                format!("c{id}")
            }
        };
        writeln!(out, "  {src} -> {dst} [label={}];", quote(&format!("{} ({id})", e.label))).unwrap();
    }
    out.push_str("}\n");
    out
}

fn set_label<'a>(xs: impl IntoIterator<Item = &'a VariableId>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn cliques_to_dot(t: &CliqueTree) -> String {
    let mut out = String::from("graph cliques {\n  node [shape=record];\n");
    for (i, c) in t.cliques.iter().enumerate() {
        let fields: Vec<String> = c.iter().map(|x| record_escape(x.as_str())).collect();
        let assigned: Vec<String> =
            t.assignment.iter().filter(|(_, &k)| k == i).map(|(x, _)| record_escape(x.as_str())).collect();
        let label = if assigned.is_empty() {
            format!("{{{}}}", fields.join("|"))
        } else {
            format!("{{{}|cpt:\\ {}}}", fields.join("|"), assigned.join(","))
        };
        writeln!(out, "  c{i} [label={}];", quote(&label)).unwrap();
    }
    for ((a, b), s) in t.edges.iter().zip(&t.separators) {
        writeln!(out, "  c{a} -- c{b} [label={}];", quote(&set_label(s))).unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn boxdag_to_dot(d: &BoxDag) -> String {
    let edges = d.named_edges();
    let names: Vec<VariableId> = d.names.values().cloned().collect();
    dag_to_dot(&names, &edges)
}

pub fn bn_to_dot<S: Scalar>(bn: &BayesNet<S>) -> String {
    let mut edges = vec![];
    for x in bn.var_ids() {
        for p in bn.parents(&x) {
            edges.push((p.clone(), x.clone()));
        }
    }
    dag_to_dot(&bn.var_ids(), &edges)
}

fn dag_to_dot(names: &[VariableId], edges: &[(VariableId, VariableId)]) -> String {
    let mut names = names.to_vec();
    names.sort();
    let mut edges = edges.to_vec();
    edges.sort();
    let mut out = String::from("digraph bnet {\n");
    for x in &names {
        writeln!(out, "  {};", quote(x.as_str())).unwrap();
    }
    for (a, b) in &edges {
        writeln!(out, "  {} -> {};", quote(a.as_str()), quote(b.as_str())).unwrap();
    }
    out.push_str("}\n");
    out
}
