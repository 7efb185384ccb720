use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Batch, Decision, RlError, Stream, UpdateStats};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TdKind {
    QLearning,
    Sarsa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            alpha: 0.5,
            gamma: 0.99,
            epsilon: 0.1,
        }
    }
}

/// Row-major `states x actions` action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        QTable {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, state: usize, action: usize) -> Result<f64, RlError> {
        Ok(self.values[self.cell(state, action)?])
    }

    pub fn row(&self, state: usize) -> Result<&[f64], RlError> {
        let start = self.cell(state, 0)?;
        Ok(&self.values[start..start + self.actions])
    }

    fn cell(&self, state: usize, action: usize) -> Result<usize, RlError> {
        if state >= self.states {
            return Err(RlError::Index { index: state, len: self.states });
        }
        if action >= self.actions {
            return Err(RlError::Index { index: action, len: self.actions });
        }
        Ok(state * self.actions + action)
    }

    pub fn column_indices(&self, action: usize) -> Vec<usize> {
        (0..self.states).map(|s| s * self.actions + action).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// Action taken at `next_state` (used by SARSA only).
    pub next_action: Option<usize>,
    /// The next state is terminal, so nothing is bootstrapped.
    pub terminal: bool,
}

/// One TD(0) update of the visited cell. Q-learning bootstraps from the
/// best next value, SARSA from the value of the next action taken.
pub fn tabular_td_update(table: &mut QTable, tr: &TdTransition, kind: TdKind, alpha: f64, gamma: f64) -> Result<(), RlError> {
    let cell = table.cell(tr.state, tr.action)?;
    let bootstrap = if tr.terminal {
        0.0
    } else {
        match (kind, tr.next_action) {
            (TdKind::Sarsa, Some(a)) => table.get(tr.next_state, a)?,
            _ => {
                let row = table.row(tr.next_state)?;
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    };
    let target = tr.reward + gamma * bootstrap;
    table.values[cell] += alpha * (target - table.values[cell]);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularAgent {
    pub kind: TdKind,
    pub table: QTable,
    epsilon: f64,
}

impl TabularAgent {
    pub fn new(kind: TdKind, states: usize, actions: usize, config: &TabularConfig) -> Self {
        TabularAgent {
            kind,
            table: QTable::zeros(states, actions),
            epsilon: config.epsilon,
        }
    }

    /// Epsilon-greedy over the row; greedy ties go to the lowest index.
    pub fn act(&self, state: usize, rng: &mut Stream) -> Result<(Decision, Vec<f64>), RlError> {
        let row = self.table.row(state)?;
        let action = if rng.random::<f64>() < self.epsilon {
            rng.random_range(0..row.len())
        } else {
            math::argmax(row)
        };
        Ok((
            Decision {
                action,
                logp: 0.0,
                value: row[action],
            },
            row.to_vec(),
        ))
    }

    /// Replays the batch in order, one update per step.
    pub fn update(&mut self, batch: &Batch, config: &TabularConfig) -> Result<UpdateStats, RlError> {
        if batch.is_empty() {
            return Err(RlError::EmptyBatch);
        }
        let steps = &batch.steps;
        for (t, s) in steps.iter().enumerate() {
            let next_action = steps.get(t + 1).filter(|_| !s.done).map(|n| n.action);
            let tr = TdTransition {
                state: s.state,
                action: s.action,
                reward: s.reward,
                next_state: s.next_state,
                next_action,
                terminal: !s.bootstraps(),
            };
            tabular_td_update(&mut self.table, &tr, self.kind, config.alpha, config.gamma)?;
        }
        Ok(UpdateStats::default())
    }
}
