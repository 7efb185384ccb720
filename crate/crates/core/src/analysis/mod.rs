//! Modularity analysis of credit-assignment schemes.
//!
//! A learning algorithm is described by an [`AlgorithmClass`] (how its
//! gradients are computed and whether decision mechanisms share
//! parameters) and a [`TraceSkeleton`] (the decision sequence of one
//! rollout). [`build_acml`] flattens the forward rollout and the gradient
//! computation into one factor graph; the credit assignment is modular iff
//! every pair of per-step gradient nodes is d-separated by the trace
//! variables and the mechanisms.

mod acml;
mod report;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use acml::{build_acml, build_execution_graph, Acml};
pub use report::factorization_report;

/// Return horizon of a multi-step temporal-difference method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Steps(u32),
    MonteCarlo,
}

/// How the per-step feedback is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CreditKind {
    PolicyGradient,
    /// TD(n) with n > 1, including Monte Carlo, TD(lambda) and GAE-style estimators.
    TdN(Horizon),
    Td0 { on_policy: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParameterSharing {
    Monolithic,
    FactorizedPerDecision,
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("n-step horizon must be at least 2, got {0}")]
    Horizon(u32),
    #[error("trace has {states} states for {steps} steps (need steps + 1)")]
    StateCount { states: usize, steps: usize },
    #[error("decision index {index} at step {step} is out of range for {decisions} decisions")]
    Decision { step: usize, index: usize, decisions: usize },
    #[error("a trace needs at least one decision mechanism")]
    NoDecisions,
    #[error("cannot place a collision at step {step} of a {steps}-step trace (need 1 <= step < steps)")]
    CollisionStep { step: usize, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmClass {
    kind: CreditKind,
    sharing: ParameterSharing,
}

impl AlgorithmClass {
    pub fn new(kind: CreditKind, sharing: ParameterSharing) -> Result<Self, AnalysisError> {
        if let CreditKind::TdN(Horizon::Steps(n)) = kind {
            if n < 2 {
                return Err(AnalysisError::Horizon(n));
            }
        }
        Ok(AlgorithmClass { kind, sharing })
    }

    pub fn kind(&self) -> CreditKind {
        self.kind
    }

    pub fn sharing(&self) -> ParameterSharing {
        self.sharing
    }

    /// Cloned Vickrey society: on-policy TD(0), one network per decision.
    pub fn cvs() -> Self {
        AlgorithmClass {
            kind: CreditKind::Td0 { on_policy: true },
            sharing: ParameterSharing::FactorizedPerDecision,
        }
    }

    pub fn ppo() -> Self {
        AlgorithmClass {
            kind: CreditKind::PolicyGradient,
            sharing: ParameterSharing::Monolithic,
        }
    }

    /// PPO with each action logit produced by its own network.
    pub fn ppof() -> Self {
        AlgorithmClass {
            kind: CreditKind::PolicyGradient,
            sharing: ParameterSharing::FactorizedPerDecision,
        }
    }

    pub fn tabular_q_learning() -> Self {
        AlgorithmClass {
            kind: CreditKind::Td0 { on_policy: false },
            sharing: ParameterSharing::Tabular,
        }
    }

    pub fn tabular_sarsa() -> Self {
        AlgorithmClass {
            kind: CreditKind::Td0 { on_policy: true },
            sharing: ParameterSharing::Tabular,
        }
    }

    /// Q-learning with one network producing every action value.
    pub fn dqn() -> Self {
        AlgorithmClass {
            kind: CreditKind::Td0 { on_policy: false },
            sharing: ParameterSharing::Monolithic,
        }
    }
}

impl fmt::Display for AlgorithmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            CreditKind::PolicyGradient => String::from("policy-gradient"),
            CreditKind::TdN(Horizon::MonteCarlo) => String::from("td-mc"),
            CreditKind::TdN(Horizon::Steps(n)) => alloc::format!("td{n}"),
            CreditKind::Td0 { on_policy: true } => String::from("td0-on-policy"),
            CreditKind::Td0 { on_policy: false } => String::from("td0-off-policy"),
        };
        let sharing = match self.sharing {
            ParameterSharing::Monolithic => "monolithic",
            ParameterSharing::FactorizedPerDecision => "factorized",
            ParameterSharing::Tabular => "tabular",
        };
        write!(f, "{kind}/{sharing}")
    }
}

/// Decision sequence of one rollout: `states[t]` is s_t for t in 0..=T and
/// `selected[t]` is the (0-based) decision chosen at step t.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSkeleton {
    states: Vec<u64>,
    selected: Vec<usize>,
    decisions: usize,
}

impl TraceSkeleton {
    pub fn new(states: Vec<u64>, selected: Vec<usize>, decisions: usize) -> Result<Self, AnalysisError> {
        if decisions == 0 {
            return Err(AnalysisError::NoDecisions);
        }
        if states.len() != selected.len() + 1 {
            return Err(AnalysisError::StateCount {
                states: states.len(),
                steps: selected.len(),
            });
        }
        if let Some((step, &index)) = selected.iter().enumerate().find(|(_, &k)| k >= decisions) {
            return Err(AnalysisError::Decision { step, index, decisions });
        }
        Ok(TraceSkeleton {
            states,
            selected,
            decisions,
        })
    }

    /// `steps` transitions through distinct states, decisions chosen round-robin.
    pub fn acyclic(steps: usize, decisions: usize) -> Result<Self, AnalysisError> {
        Self::new((0..=steps as u64).collect(), (0..steps).map(|t| t % decisions.max(1)).collect(), decisions)
    }

    /// Like [`acyclic`](Self::acyclic) but step `step` bounces: its
    /// successor equals the successor of step `step - 1`.
    pub fn with_collision_at(steps: usize, decisions: usize, step: usize) -> Result<Self, AnalysisError> {
        if step == 0 || step >= steps {
            return Err(AnalysisError::CollisionStep { step, steps });
        }
        let mut skeleton = Self::acyclic(steps, decisions)?;
        skeleton.states[step + 1] = skeleton.states[step];
        Ok(skeleton)
    }

    pub fn steps(&self) -> usize {
        self.selected.len()
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }
}

/// True iff two distinct steps transition into the same state.
pub fn detect_cycle(skeleton: &TraceSkeleton) -> bool {
    let successors = &skeleton.states[1..];
    successors
        .iter()
        .enumerate()
        .any(|(i, s)| successors[i + 1..].contains(s))
}

/// Static modularity: decision mechanisms share no parameters.
pub fn check_static_modularity(algo: &AlgorithmClass) -> bool {
    matches!(
        algo.sharing,
        ParameterSharing::FactorizedPerDecision | ParameterSharing::Tabular
    )
}

/// Outcome of the d-separation test over all gradient pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub satisfied: bool,
    /// Labels of the first unblocked path, present iff not satisfied.
    pub witness: Option<Vec<String>>,
}

/// Conditions on every trace variable and every mechanism and tests each
/// pair of gradient nodes for d-separation. Pairs are visited in step
/// order; the witness is the lexicographically first open path of the
/// first connected pair.
pub fn check_criterion(algo: &AlgorithmClass, skeleton: &TraceSkeleton) -> CriterionResult {
    let acml = build_acml(algo, skeleton);
    let dag = acml.graph.to_variable_dag();
    for (i, &a) in acml.gradients.iter().enumerate() {
        for &b in &acml.gradients[i + 1..] {
            let path = dag
                .first_open_path(a, b, &acml.conditioning)
                .expect("gradient and conditioning sets are disjoint by construction");
            if let Some(path) = path {
                let labels = path
                    .iter()
                    .map(|&id| String::from(acml.graph.label(id).unwrap_or("?")))
                    .collect();
                return CriterionResult {
                    satisfied: false,
                    witness: Some(labels),
                };
            }
        }
    }
    CriterionResult {
        satisfied: true,
        witness: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModularityVerdict {
    pub criterion_satisfied: bool,
    pub static_modularity: bool,
    pub dynamic_modularity: bool,
    pub witness: Option<Vec<String>>,
    pub cyclic_trace: bool,
}

/// Dynamic modularity holds iff the mechanisms start out independent and
/// the credit assignment keeps the gradients independent.
pub fn check_dynamic_modularity(algo: &AlgorithmClass, skeleton: &TraceSkeleton) -> ModularityVerdict {
    let criterion = check_criterion(algo, skeleton);
    let static_modularity = check_static_modularity(algo);
    ModularityVerdict {
        criterion_satisfied: criterion.satisfied,
        static_modularity,
        dynamic_modularity: criterion.satisfied && static_modularity,
        witness: criterion.witness,
        cyclic_trace: detect_cycle(skeleton),
    }
}
