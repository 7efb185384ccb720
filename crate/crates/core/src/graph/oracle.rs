//! Literal path-enumeration d-separation, kept independent of the
//! reachability implementation in `dag.rs` so each can check the other.

use alloc::vec;
use alloc::vec::Vec;

use super::{GraphError, NodeId, VariableDag};

/// Largest DAG the brute-force oracle accepts.
pub const ORACLE_MAX_NODES: usize = 25;

fn index_set(dag: &VariableDag, set: &[NodeId]) -> Result<Vec<usize>, GraphError> {
    set.iter()
        .map(|&id| dag.pos(id).ok_or(GraphError::UnknownNode(id)))
        .collect()
}

fn descendants(dag: &VariableDag, v: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut seen = vec![false; dag.len()];
    let mut stack = dag.child_idx(v).to_vec();
    while let Some(c) = stack.pop() {
        if seen[c] {
            continue;
        }
        seen[c] = true;
        out.push(c);
        stack.extend_from_slice(dag.child_idx(c));
    }
    out
}

fn has_edge(dag: &VariableDag, from: usize, to: usize) -> bool {
    dag.child_idx(from).contains(&to)
}

/// Whether a given trail (consecutive nodes adjacent in either direction)
/// is left open by `z`: no interior chain/fork node in `z`, and every
/// interior collider is in `z` or has a descendant in `z`.
pub fn path_is_open(dag: &VariableDag, path: &[NodeId], z: &[NodeId]) -> Result<bool, GraphError> {
    let p = index_set(dag, path)?;
    let zs = index_set(dag, z)?;
    for w in p.windows(2) {
        if !has_edge(dag, w[0], w[1]) && !has_edge(dag, w[1], w[0]) {
            return Ok(false);
        }
    }
    Ok(interior_open(dag, &p, &zs))
}

fn interior_open(dag: &VariableDag, p: &[usize], zs: &[usize]) -> bool {
    for w in p.windows(3) {
        let (i, m, j) = (w[0], w[1], w[2]);
        let collider = has_edge(dag, i, m) && has_edge(dag, j, m);
        if collider {
            let activated = zs.contains(&m) || descendants(dag, m).iter().any(|d| zs.contains(d));
            if !activated {
                return false;
            }
        } else if zs.contains(&m) {
            return false;
        }
    }
    true
}

/// d-separation by enumerating every simple undirected path between `x`
/// and `y` and testing each against the blocking rules one by one.
pub fn d_separated_bruteforce(dag: &VariableDag, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Result<bool, GraphError> {
    if dag.len() > ORACLE_MAX_NODES {
        return Err(GraphError::Size {
            max: ORACLE_MAX_NODES,
            got: dag.len(),
        });
    }
    let xs = index_set(dag, x)?;
    let ys = index_set(dag, y)?;
    let zs = index_set(dag, z)?;
    let overlap = xs.iter().any(|v| ys.contains(v) || zs.contains(v)) || ys.iter().any(|v| zs.contains(v));
    if overlap {
        return Err(GraphError::Overlap);
    }
    for &a in &xs {
        for &b in &ys {
            let mut path = vec![a];
            if any_open_path(dag, b, &zs, &mut path) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn any_open_path(dag: &VariableDag, goal: usize, zs: &[usize], path: &mut Vec<usize>) -> bool {
    let cur = *path.last().expect("non-empty");
    if cur == goal {
        return interior_open(dag, path, zs);
    }
    let neighbours: Vec<usize> = dag.parent_idx(cur).iter().chain(dag.child_idx(cur)).copied().collect();
    for next in neighbours {
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        if any_open_path(dag, goal, zs, path) {
            return true;
        }
        path.pop();
    }
    false
}
