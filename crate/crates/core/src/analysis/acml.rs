use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{AlgorithmClass, CreditKind, Horizon, TraceSkeleton};
use crate::graph::{ComputationalGraph, GraphBuilder, NodeId};

/// Flattened execution + credit-assignment graph of one learning step.
#[derive(Debug, Clone)]
pub struct Acml {
    pub graph: ComputationalGraph,
    /// Trace variables and mechanisms: the inputs of the credit assignment.
    pub conditioning: Vec<NodeId>,
    /// One gradient node per step, in step order.
    pub gradients: Vec<NodeId>,
    /// Internal variables of the credit assignment.
    pub hidden: Vec<NodeId>,
}

struct Execution {
    builder: GraphBuilder,
    mechanisms: Vec<NodeId>,
    states: Vec<NodeId>,
    bids: Vec<Vec<NodeId>>,
    flags: Vec<NodeId>,
    rewards: Vec<NodeId>,
}

impl Execution {
    fn conditioning(&self) -> Vec<NodeId> {
        let mut z: Vec<NodeId> = self.mechanisms.clone();
        z.extend(&self.states);
        z.extend(self.bids.iter().flatten());
        z.extend(&self.flags);
        z.extend(&self.rewards);
        z.sort_unstable();
        z
    }
}

fn wire(builder: &mut GraphBuilder, label: String, inputs: &[NodeId], outputs: &[NodeId]) {
    builder
        .add_function(label, inputs, outputs)
        .expect("construction only adds edges from earlier to later nodes");
}

fn execution(skeleton: &TraceSkeleton) -> Execution {
    let n = skeleton.decisions();
    let steps = skeleton.steps();
    let mut b = GraphBuilder::new();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(b.add_variable("s_0"));
    let mechanisms: Vec<NodeId> = (1..=n).map(|k| b.add_variable(format!("f^{k}"))).collect();
    let mut bids = Vec::with_capacity(steps);
    let mut flags = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    for t in 0..steps {
        let step_bids: Vec<NodeId> = (1..=n).map(|k| b.add_variable(format!("b^{k}_{t}"))).collect();
        let w = b.add_variable(format!("w_{t}"));
        let next = b.add_variable(format!("s_{}", t + 1));
        let r = b.add_variable(format!("r_{t}"));
        for k in 0..n {
            wire(
                &mut b,
                format!("APPLY^{}_{t}", k + 1),
                &[mechanisms[k], states[t]],
                &[step_bids[k], w, next, r],
            );
        }
        bids.push(step_bids);
        flags.push(w);
        states.push(next);
        rewards.push(r);
    }
    Execution {
        builder: b,
        mechanisms,
        states,
        bids,
        flags,
        rewards,
    }
}

/// Forward rollout as a factor graph: at each step every mechanism f^k is
/// applied to s_t, producing its bid b^k_t together with the selection flag
/// w_t, the successor s_{t+1} and the reward r_t.
pub fn build_execution_graph(skeleton: &TraceSkeleton) -> ComputationalGraph {
    execution(skeleton).builder.finalize()
}

/// Execution graph extended with the credit-assignment internals of `algo`
/// and one gradient node per step feeding `UPDATE` of the selected mechanism.
pub fn build_acml(algo: &AlgorithmClass, skeleton: &TraceSkeleton) -> Acml {
    let mut ex = execution(skeleton);
    let conditioning = ex.conditioning();
    let steps = skeleton.steps();
    let selected = skeleton.selected();

    // hidden_for[t]: hidden variables feeding the gradient of step t
    let mut hidden_for: Vec<Vec<NodeId>> = alloc::vec![Vec::new(); steps];
    let mut hidden = Vec::new();
    let b = &mut ex.builder;

    if steps > 0 {
        match algo.kind() {
            CreditKind::PolicyGradient => {
                // softmax normalizer and return, both read by every step's gradient
                let all_bids: Vec<NodeId> = ex.bids.iter().flatten().copied().collect();
                let norm = b.add_variable("sum_k b^k");
                wire(b, String::from("NORMALIZE"), &all_bids, &[norm]);
                let ret = b.add_variable("sum_t r_t");
                wire(b, String::from("RETURN"), &ex.rewards, &[ret]);
                for h in hidden_for.iter_mut() {
                    h.extend([norm, ret]);
                }
                hidden.extend([norm, ret]);
            }
            CreditKind::TdN(Horizon::MonteCarlo) => {
                let ret = b.add_variable("sum_t r_t");
                wire(b, String::from("RETURN"), &ex.rewards, &[ret]);
                for h in hidden_for.iter_mut() {
                    h.push(ret);
                }
                hidden.push(ret);
            }
            CreditKind::TdN(Horizon::Steps(n)) => {
                // one reward-window sum per start step, read by every gradient
                // whose step lies inside the window
                let n = n as usize;
                for j in 0..steps {
                    let end = (j + n).min(steps);
                    let node = b.add_variable(format!("sum r[{j}..{end})"));
                    let mut inputs: Vec<NodeId> = ex.rewards[j..end].to_vec();
                    if j + n <= steps {
                        inputs.push(ex.states[j + n]);
                        inputs.extend(&ex.mechanisms);
                    }
                    wire(b, format!("WINDOW_{j}"), &inputs, &[node]);
                    for h in &mut hidden_for[j..end] {
                        h.push(node);
                    }
                    hidden.push(node);
                }
            }
            CreditKind::Td0 { on_policy } => {
                // one bootstrap target per distinct successor state
                let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
                let mut order: Vec<u64> = Vec::new();
                for t in 0..steps {
                    let s = skeleton.states()[t + 1];
                    let g = groups.entry(s).or_default();
                    if g.is_empty() {
                        order.push(s);
                    }
                    g.push(t);
                }
                for s in order {
                    let group = &groups[&s];
                    let first = group[0] + 1;
                    let mut inputs = Vec::new();
                    let label = if on_policy {
                        for &t in group {
                            if t + 1 < steps {
                                inputs.extend(&ex.bids[t + 1]);
                                inputs.push(ex.flags[t + 1]);
                            } else {
                                inputs.push(ex.states[t + 1]);
                            }
                        }
                        format!("next_bid[s_{first}]")
                    } else {
                        for &t in group {
                            inputs.push(ex.states[t + 1]);
                        }
                        inputs.extend(&ex.mechanisms);
                        format!("max_k b^k[s_{first}]")
                    };
                    let node = b.add_variable(label);
                    wire(b, format!("TARGET[s_{first}]"), &inputs, &[node]);
                    for &t in group {
                        hidden_for[t].push(node);
                    }
                    hidden.push(node);
                }
            }
        }
    }

    let mut gradients = Vec::with_capacity(steps);
    for t in 0..steps {
        let k = selected[t];
        let delta = b.add_variable(format!("delta^{}_{t}", k + 1));
        let mut inputs = alloc::vec![
            ex.bids[t][k],
            ex.states[t],
            ex.states[t + 1],
            ex.rewards[t],
            ex.flags[t],
            ex.mechanisms[k],
        ];
        inputs.extend(&hidden_for[t]);
        wire(b, format!("PI_{t}"), &inputs, &[delta]);
        gradients.push(delta);
    }
    for k in 0..skeleton.decisions() {
        let updated = b.add_variable(format!("f'^{}", k + 1));
        let mut inputs = alloc::vec![ex.mechanisms[k]];
        inputs.extend((0..steps).filter(|&t| selected[t] == k).map(|t| gradients[t]));
        wire(b, format!("UPDATE^{}", k + 1), &inputs, &[updated]);
    }

    Acml {
        graph: ex.builder.finalize(),
        conditioning,
        gradients,
        hidden,
    }
}
