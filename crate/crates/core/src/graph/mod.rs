//! Directed acyclic factor graphs of variable and function nodes.
//!
//! A [`GraphBuilder`] collects variable nodes and function nodes that map
//! input variables to output variables. Acyclicity is checked on every
//! [`GraphBuilder::add_function`], so a built [`ComputationalGraph`] is
//! always a DAG. Independence queries run on the [`VariableDag`] obtained by
//! dissolving every function node into parent relations (each input of a
//! function becomes a parent of each of its outputs).

mod dag;
mod dot;
mod oracle;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use dag::VariableDag;
pub use oracle::{d_separated_bruteforce, path_is_open, ORACLE_MAX_NODES};

/// Opaque handle of a node, unique within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_index(index: usize) -> Self {
        NodeId(index as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Variable,
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("adding {function:?} would create a directed cycle")]
    Cycle { function: String },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is a function node, expected a variable node")]
    NotAVariable(NodeId),
    #[error("function {0:?} needs at least one input and one output")]
    EmptyFunction(String),
    #[error("node sets passed to a d-separation query must be pairwise disjoint")]
    Overlap,
    #[error("brute-force oracle supports at most {max} nodes, got {got}")]
    Size { max: usize, got: usize },
    #[error("edge ({0}, {1}) references a node outside the graph")]
    BadEdge(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Node {
    kind: NodeKind,
    label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Factor {
    id: NodeId,
    inputs: Vec<NodeId>,
    outputs: Vec<NodeId>,
}

/// Mutable construction phase of a [`ComputationalGraph`].
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    factors: Vec<Factor>,
    // variable -> variables it feeds through some function node
    successors: Vec<Vec<NodeId>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, label: impl Into<String>) -> NodeId {
        let id = NodeId::from_index(self.nodes.len());
        self.nodes.push(Node {
            kind: NodeKind::Variable,
            label: label.into(),
        });
        self.successors.push(Vec::new());
        id
    }

    /// Adds a function node computing `outputs` from `inputs`.
    ///
    /// Fails without modifying the graph if an id is unknown or refers to a
    /// function node, if either list is empty, or if the new edges would
    /// close a directed cycle.
    pub fn add_function(
        &mut self,
        label: impl Into<String>,
        inputs: &[NodeId],
        outputs: &[NodeId],
    ) -> Result<NodeId, GraphError> {
        let label = label.into();
        for &id in inputs.iter().chain(outputs) {
            match self.nodes.get(id.index()) {
                None => return Err(GraphError::UnknownNode(id)),
                Some(n) if n.kind != NodeKind::Variable => return Err(GraphError::NotAVariable(id)),
                Some(_) => {}
            }
        }
        if inputs.is_empty() || outputs.is_empty() {
            return Err(GraphError::EmptyFunction(label));
        }
        let inputs = dedup(inputs);
        let outputs = dedup(outputs);
        // A cycle appears iff some output already reaches some input (or is one).
        let targets: BTreeSet<NodeId> = inputs.iter().copied().collect();
        if self.reaches_any(&outputs, &targets) {
            return Err(GraphError::Cycle { function: label });
        }

        let id = NodeId::from_index(self.nodes.len());
        self.nodes.push(Node {
            kind: NodeKind::Function,
            label,
        });
        self.successors.push(Vec::new());
        for &i in &inputs {
            for &o in &outputs {
                if !self.successors[i.index()].contains(&o) {
                    self.successors[i.index()].push(o);
                }
            }
        }
        self.factors.push(Factor { id, inputs, outputs });
        Ok(id)
    }

    fn reaches_any(&self, from: &[NodeId], targets: &BTreeSet<NodeId>) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = from.to_vec();
        while let Some(v) = stack.pop() {
            if targets.contains(&v) {
                return true;
            }
            if core::mem::replace(&mut seen[v.index()], true) {
                continue;
            }
            stack.extend(self.successors[v.index()].iter().copied());
        }
        false
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(id.index()).map(|n| n.label.as_str())
    }

    /// Freezes the graph. Every invariant is already enforced by
    /// [`add_function`](Self::add_function), so this cannot fail.
    pub fn finalize(self) -> ComputationalGraph {
        ComputationalGraph {
            nodes: self.nodes,
            factors: self.factors,
        }
    }
}

fn dedup(ids: &[NodeId]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::with_capacity(ids.len());
    for &id in ids {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// Immutable directed acyclic factor graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputationalGraph {
    nodes: Vec<Node>,
    factors: Vec<Factor>,
}

impl ComputationalGraph {
    pub fn empty() -> Self {
        GraphBuilder::new().finalize()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.nodes.get(id.index()).map(|n| n.kind)
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(id.index()).map(|n| n.label.as_str())
    }

    /// Variable nodes in id order.
    pub fn variables(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids_of(NodeKind::Variable)
    }

    /// Function nodes in id order.
    pub fn functions(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids_of(NodeKind::Function)
    }

    fn ids_of(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(i, _)| NodeId::from_index(i))
    }

    /// First variable node carrying `label`.
    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.variables().find(|&id| self.label(id) == Some(label))
    }

    pub fn function_inputs(&self, function: NodeId) -> Option<&[NodeId]> {
        self.factor(function).map(|f| f.inputs.as_slice())
    }

    pub fn function_outputs(&self, function: NodeId) -> Option<&[NodeId]> {
        self.factor(function).map(|f| f.outputs.as_slice())
    }

    fn factor(&self, function: NodeId) -> Option<&Factor> {
        self.factors.iter().find(|f| f.id == function)
    }

    /// All factor-graph edges `(from, to)`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut edges = Vec::new();
        for f in &self.factors {
            edges.extend(f.inputs.iter().map(|&i| (i, f.id)));
            edges.extend(f.outputs.iter().map(|&o| (f.id, o)));
        }
        edges.sort_unstable();
        edges
    }

    /// Dissolves function nodes: inputs of each function become parents of
    /// each of its outputs.
    pub fn to_variable_dag(&self) -> VariableDag {
        let ids: Vec<NodeId> = self.variables().collect();
        let mut edges = BTreeSet::new();
        for f in &self.factors {
            for &i in &f.inputs {
                for &o in &f.outputs {
                    edges.insert((i, o));
                }
            }
        }
        let labels = ids.iter().map(|&id| self.nodes[id.index()].label.clone()).collect();
        VariableDag::from_parts(ids, labels, edges.into_iter())
    }

    pub fn export_dot(&self) -> String {
        dot::render(self)
    }
}
