//! On-policy learners over encoded states.
//!
//! Every learner turns an encoded state into one bid per decision and a
//! chosen decision, and learns from a [`Batch`] of consecutive transitions
//! collected under its current parameters.

mod cvs;
mod gae;
mod ppo;
mod tabular;

use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cvs::{
    cvs_act, cvs_step_contribution, cvs_update, vickrey_select, vickrey_utility, CvsAct, CvsConfig, Society, TargetRefresh,
};
pub use gae::gae;
pub use ppo::{
    ppo_logit_grad, ppo_step_contribution, ppo_update, LogitGrad, PolicyArch, PolicyNet, PpoAgent, PpoConfig,
};
pub use tabular::{tabular_td_update, QTable, TabularAgent, TabularConfig, TdKind, TdTransition};

use crate::analysis::AlgorithmClass;
use crate::nn::NnError;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RlError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("no bids")]
    EmptyBids,
    #[error("index {index} out of range for {len}")]
    Index { index: usize, len: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One recorded environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: Vec<f64>,
    /// Dense state index (used by tabular learners).
    pub state: usize,
    pub action: usize,
    pub bids: Vec<f64>,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    /// The episode ends here, either at a terminal state or at the cut-off.
    pub done: bool,
    /// The episode was cut off at the step limit in a non-terminal state.
    #[serde(default)]
    pub truncated: bool,
    pub next_obs: Vec<f64>,
    pub next_state: usize,
}

impl Step {
    /// Whether the successor state's value enters the target.
    pub fn bootstraps(&self) -> bool {
        !self.done || self.truncated
    }
}

/// Consecutive steps; an episode continues into the next step unless `done`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub steps: Vec<Step>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: usize,
    pub logp: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmId {
    Cvs,
    Ppo,
    Ppof,
    QLearning,
    Sarsa,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::Cvs,
        AlgorithmId::Ppo,
        AlgorithmId::Ppof,
        AlgorithmId::QLearning,
        AlgorithmId::Sarsa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Cvs => "cvs",
            AlgorithmId::Ppo => "ppo",
            AlgorithmId::Ppof => "ppof",
            AlgorithmId::QLearning => "q-learning",
            AlgorithmId::Sarsa => "sarsa",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        AlgorithmId::ALL.into_iter().find(|a| a.name() == name)
    }

    /// The credit-assignment class this learner belongs to.
    pub fn class(self) -> AlgorithmClass {
        match self {
            AlgorithmId::Cvs => AlgorithmClass::cvs(),
            AlgorithmId::Ppo => AlgorithmClass::ppo(),
            AlgorithmId::Ppof => AlgorithmClass::ppof(),
            AlgorithmId::QLearning => AlgorithmClass::tabular_q_learning(),
            AlgorithmId::Sarsa => AlgorithmClass::tabular_sarsa(),
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All hyperparameters, one section per learner family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub ppo: PpoConfig,
    pub cvs: CvsConfig,
    pub tabular: TabularConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Learner {
    Ppo(PpoAgent),
    Cvs(Society),
    Tabular(TabularAgent),
}

impl Learner {
    pub fn new(
        algo: AlgorithmId,
        obs_len: usize,
        states: usize,
        actions: usize,
        config: &LearnerConfig,
        rng: &mut Stream,
    ) -> Self {
        match algo {
            AlgorithmId::Ppo => Learner::Ppo(PpoAgent::new(PolicyArch::Monolithic, obs_len, actions, &config.ppo, rng)),
            AlgorithmId::Ppof => Learner::Ppo(PpoAgent::new(PolicyArch::Factorized, obs_len, actions, &config.ppo, rng)),
            AlgorithmId::Cvs => Learner::Cvs(Society::new(obs_len, actions, &config.cvs, rng)),
            AlgorithmId::QLearning => Learner::Tabular(TabularAgent::new(TdKind::QLearning, states, actions, &config.tabular)),
            AlgorithmId::Sarsa => Learner::Tabular(TabularAgent::new(TdKind::Sarsa, states, actions, &config.tabular)),
        }
    }

    pub fn act(&mut self, obs: &[f64], state: usize, rng: &mut Stream) -> Result<(Decision, Vec<f64>), RlError> {
        match self {
            Learner::Ppo(a) => a.act(obs, rng),
            Learner::Cvs(s) => {
                let act = cvs_act(s, obs, rng)?;
                Ok((
                    Decision {
                        action: act.winner,
                        logp: 0.0,
                        value: 0.0,
                    },
                    act.bids,
                ))
            }
            Learner::Tabular(t) => t.act(state, rng),
        }
    }

    pub fn update(&mut self, batch: &Batch, config: &LearnerConfig, rng: &mut Stream) -> Result<UpdateStats, RlError> {
        match self {
            Learner::Ppo(a) => ppo_update(a, batch, &config.ppo, rng),
            Learner::Cvs(s) => cvs_update(s, batch, &config.cvs, rng),
            Learner::Tabular(t) => t.update(batch, &config.tabular),
        }
    }

    /// Current per-decision bids at a state, without sampling.
    pub fn bids(&self, obs: &[f64], state: usize) -> Result<Vec<f64>, RlError> {
        match self {
            Learner::Ppo(a) => a.policy.probs(obs),
            Learner::Cvs(s) => s.means(obs),
            Learner::Tabular(t) => Ok(t.table.row(state)?.to_vec()),
        }
    }

    /// Highest-bid decision without exploration noise (lowest index on ties).
    pub fn greedy(&self, obs: &[f64], state: usize) -> Result<usize, RlError> {
        Ok(crate::math::argmax(&self.bids(obs, state)?))
    }

    /// Clears optimizer moments, keeping parameters.
    pub fn reset_optimizers(&mut self) {
        match self {
            Learner::Ppo(a) => a.reset_optimizers(),
            Learner::Cvs(s) => s.reset_optimizers(),
            Learner::Tabular(_) => {}
        }
    }

    /// Flattened parameters, used for equality checks across checkpoints.
    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            Learner::Ppo(a) => a.flat_params(),
            Learner::Cvs(s) => s.flat_params(),
            Learner::Tabular(t) => t.table.values().to_vec(),
        }
    }

    /// Flat parameter indices that influence decision `k`'s bid.
    pub fn decision_parameters(&self, k: usize) -> Vec<usize> {
        match self {
            Learner::Ppo(a) => a.policy.decision_parameters(k),
            Learner::Cvs(s) => s.decision_parameters(k),
            Learner::Tabular(t) => t.table.column_indices(k),
        }
    }
}
