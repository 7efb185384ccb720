use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{GraphError, NodeId};

/// DAG over variable nodes only, in sorted-id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableDag {
    ids: Vec<NodeId>,
    labels: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl VariableDag {
    /// `ids` must be sorted and unique; edges are `(parent, child)` pairs.
    pub(crate) fn from_parts(
        ids: Vec<NodeId>,
        labels: Vec<String>,
        edges: impl Iterator<Item = (NodeId, NodeId)>,
    ) -> Self {
        let n = ids.len();
        let mut dag = VariableDag {
            ids,
            labels,
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
        };
        for (p, c) in edges {
            let (p, c) = (dag.pos(p).expect("edge parent"), dag.pos(c).expect("edge child"));
            dag.parents[c].push(p);
            dag.children[p].push(c);
        }
        for list in dag.parents.iter_mut().chain(dag.children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        dag
    }

    /// DAG on nodes `0..n` labelled `v0, v1, ...` from `(parent, child)` index pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(GraphError::BadEdge(a, b));
        }
        let ids = (0..n).map(NodeId::from_index).collect();
        let labels = (0..n).map(|i| format!("v{i}")).collect();
        let dag = Self::from_parts(
            ids,
            labels,
            edges.iter().map(|&(a, b)| (NodeId::from_index(a), NodeId::from_index(b))),
        );
        if !dag.is_acyclic() {
            return Err(GraphError::Cycle {
                function: String::from("edge list"),
            });
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.pos(id).map(|p| self.labels[p].as_str())
    }

    pub fn parents_of(&self, id: NodeId) -> Option<Vec<NodeId>> {
        self.pos(id).map(|p| self.parents[p].iter().map(|&q| self.ids[q]).collect())
    }

    pub fn children_of(&self, id: NodeId) -> Option<Vec<NodeId>> {
        self.pos(id).map(|p| self.children[p].iter().map(|&q| self.ids[q]).collect())
    }

    pub(crate) fn pos(&self, id: NodeId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub(crate) fn parent_idx(&self, p: usize) -> &[usize] {
        &self.parents[p]
    }

    pub(crate) fn child_idx(&self, p: usize) -> &[usize] {
        &self.children[p]
    }

    pub fn is_acyclic(&self) -> bool {
        // Kahn
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        seen == self.len()
    }

    fn mask(&self, set: &[NodeId]) -> Result<Vec<bool>, GraphError> {
        let mut mask = vec![false; self.len()];
        for &id in set {
            let p = self.pos(id).ok_or(GraphError::UnknownNode(id))?;
            mask[p] = true;
        }
        Ok(mask)
    }

    /// `mask` plus every ancestor of a masked node.
    pub(crate) fn ancestral_closure(&self, mask: &[bool]) -> Vec<bool> {
        let mut out = mask.to_vec();
        let mut stack: Vec<usize> = (0..self.len()).filter(|&v| mask[v]).collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !out[p] {
                    out[p] = true;
                    stack.push(p);
                }
            }
        }
        out
    }

    fn disjoint_masks(
        &self,
        x: &[NodeId],
        y: &[NodeId],
        z: &[NodeId],
    ) -> Result<(Vec<bool>, Vec<bool>, Vec<bool>), GraphError> {
        let (mx, my, mz) = (self.mask(x)?, self.mask(y)?, self.mask(z)?);
        let clash = (0..self.len()).any(|v| (mx[v] as u8 + my[v] as u8 + mz[v] as u8) > 1);
        if clash {
            return Err(GraphError::Overlap);
        }
        Ok((mx, my, mz))
    }

    /// Whether `z` d-separates `x` from `y`.
    ///
    /// Reachability over (node, direction) states: a trail may pass a
    /// non-collider outside `z`, and a collider that is in `z` or has a
    /// descendant in `z`.
    pub fn d_separated(&self, x: &[NodeId], y: &[NodeId], z: &[NodeId]) -> Result<bool, GraphError> {
        let (mx, my, mz) = self.disjoint_masks(x, y, z)?;
        let anc_z = self.ancestral_closure(&mz);

        // visited[v][0]: arrived from a child (moving up), [1]: from a parent (moving down)
        let mut visited = vec![[false; 2]; self.len()];
        let mut queue: VecDeque<(usize, usize)> = (0..self.len()).filter(|&v| mx[v]).map(|v| (v, 0)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if my[v] {
                return Ok(false);
            }
            let up = dir == 0;
            if up && !mz[v] {
                queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                queue.extend(self.children[v].iter().map(|&c| (c, 1)));
            } else if !up {
                if !mz[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
                if anc_z[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                }
            }
        }
        Ok(true)
    }

    /// Lexicographically first (by node label sequence) trail from `from` to
    /// `to` that is not blocked by `z`, if any.
    pub fn first_open_path(&self, from: NodeId, to: NodeId, z: &[NodeId]) -> Result<Option<Vec<NodeId>>, GraphError> {
        let (_, _, mz) = self.disjoint_masks(&[from], &[to], z)?;
        let anc_z = self.ancestral_closure(&mz);
        let start = self.pos(from).ok_or(GraphError::UnknownNode(from))?;
        let goal = self.pos(to).ok_or(GraphError::UnknownNode(to))?;

        // Neighbours sorted by label (then id) so the DFS meets paths in
        // lexicographic order.
        let neighbours: Vec<Vec<usize>> = (0..self.len())
            .map(|v| {
                let mut ns: Vec<usize> = self.parents[v].iter().chain(&self.children[v]).copied().collect();
                ns.sort_by(|&a, &b| self.labels[a].cmp(&self.labels[b]).then(a.cmp(&b)));
                ns.dedup();
                ns
            })
            .collect();

        let mut on_path = vec![false; self.len()];
        let mut path = vec![start];
        on_path[start] = true;
        let found = self.dfs_open(goal, &neighbours, &mz, &anc_z, &mut path, &mut on_path);
        Ok(found.then(|| path.iter().map(|&p| self.ids[p]).collect()))
    }

    fn dfs_open(
        &self,
        goal: usize,
        neighbours: &[Vec<usize>],
        mz: &[bool],
        anc_z: &[bool],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
    ) -> bool {
        let cur = *path.last().expect("non-empty path");
        if cur == goal {
            return true;
        }
        for &next in &neighbours[cur] {
            if on_path[next] {
                continue;
            }
            if path.len() >= 2 {
                let prev = path[path.len() - 2];
                let collider = self.parents[cur].contains(&prev) && self.parents[cur].contains(&next);
                let open = if collider { anc_z[cur] } else { !mz[cur] };
                if !open {
                    continue;
                }
            }
            path.push(next);
            on_path[next] = true;
            if self.dfs_open(goal, neighbours, mz, anc_z, path, on_path) {
                return true;
            }
            on_path[next] = false;
            path.pop();
        }
        false
    }
}
