use alloc::string::String;
use core::fmt::Write;

use super::{ComputationalGraph, NodeKind};

pub(super) fn render(graph: &ComputationalGraph) -> String {
    let mut out = String::from("digraph G {\n");
    for (i, node) in graph.nodes.iter().enumerate() {
        let shape = match node.kind {
            NodeKind::Variable => "ellipse",
            NodeKind::Function => "box",
        };
        let _ = writeln!(out, "  n{i} [label=\"{}\", shape={shape}];", escape(&node.label));
    }
    for (from, to) in graph.edges() {
        let _ = writeln!(out, "  {from} -> {to};");
    }
    out.push_str("}\n");
    out
}

fn escape(label: &str) -> String {
    let mut s = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            _ => s.push(c),
        }
    }
    s
}
