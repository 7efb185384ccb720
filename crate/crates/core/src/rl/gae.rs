use alloc::vec;
use alloc::vec::Vec;

use super::RlError;

/// Generalized advantage estimates over consecutive steps.
///
/// `next_values[t]` is the bootstrap value of the state reached at step t
/// (zero when that state is terminal). The accumulation restarts after
/// every step with `dones[t]`, which also marks episodes cut off early.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, RlError> {
    let n = rewards.len();
    for len in [values.len(), next_values.len(), dones.len()] {
        if len != n {
            return Err(crate::nn::NnError::Shape { expected: n, got: len }.into());
        }
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    Ok(adv)
}
