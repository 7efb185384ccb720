use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Batch, RlError, Step, Stream, UpdateStats};
use crate::math;
use crate::nn::{Adam, Cache, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvsConfig {
    pub lr: f64,
    /// Standard deviation of the Gaussian bid noise around each bidder's mean.
    pub bid_std: f64,
    pub gamma: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub targets: TargetRefresh,
}

/// When valuations are recomputed from the bidders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRefresh {
    /// Once per batch, before any parameter moves.
    Batch,
    /// Before every minibatch step, from the current parameters.
    Minibatch,
}

impl Default for CvsConfig {
    fn default() -> Self {
        CvsConfig {
            lr: 5e-3,
            bid_std: 0.1,
            gamma: 0.99,
            minibatch: 256,
            epochs: 10,
            targets: TargetRefresh::Minibatch,
        }
    }
}

/// N bidders with disjoint parameters; bidder k bids for decision k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Society {
    bidders: Vec<Mlp>,
    opts: Vec<Adam>,
    bid_std: f64,
}

impl Society {
    pub fn new(obs_len: usize, agents: usize, config: &CvsConfig, rng: &mut Stream) -> Self {
        let bidders = (0..agents).map(|_| Mlp::standard(obs_len, 1, rng)).collect();
        Society::from_bidders(bidders, config)
    }

    pub fn from_bidders(bidders: Vec<Mlp>, config: &CvsConfig) -> Self {
        let opts = bidders.iter().map(|b: &Mlp| Adam::new(b.num_params(), config.lr)).collect();
        Society {
            bidders,
            opts,
            bid_std: config.bid_std,
        }
    }

    pub fn agents(&self) -> usize {
        self.bidders.len()
    }

    pub fn bidders(&self) -> &[Mlp] {
        &self.bidders
    }

    pub fn set_bid_std(&mut self, std: f64) {
        self.bid_std = std;
    }

    /// Mean bid of every agent.
    pub fn means(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        let mut cache = Cache::default();
        self.bidders
            .iter()
            .map(|b| Ok(math::sigmoid(b.forward(obs, &mut cache)?[0])))
            .collect()
    }

    pub fn reset_optimizers(&mut self) {
        self.opts.iter_mut().for_each(Adam::reset);
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.bidders.iter().flat_map(|b| b.params().iter().copied()).collect()
    }

    pub fn decision_parameters(&self, k: usize) -> Vec<usize> {
        let start: usize = self.bidders[..k].iter().map(Mlp::num_params).sum();
        (start..start + self.bidders[k].num_params()).collect()
    }
}

/// Second-price auction where every agent submits two bids. The winner is
/// the agent holding the highest bid (lowest index on ties) and pays the
/// highest remaining bid, which may be its own clone's.
pub fn vickrey_select(bids: &[[f64; 2]]) -> Result<(usize, f64), RlError> {
    if bids.is_empty() {
        return Err(RlError::EmptyBids);
    }
    let top: Vec<f64> = bids.iter().map(|b| b[0].max(b[1])).collect();
    let winner = math::argmax(&top);
    let mut price = bids[winner][0].min(bids[winner][1]);
    for (k, b) in bids.iter().enumerate() {
        if k != winner {
            price = price.max(b[0]).max(b[1]);
        }
    }
    Ok((winner, price))
}

/// Winner's utility: reward plus discounted best next bid, minus the price.
/// `next_bids` is empty after a terminal step. Losers receive 0.
pub fn vickrey_utility(reward: f64, gamma: f64, next_bids: &[f64], price: f64) -> f64 {
    let next = next_bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let next = if next_bids.is_empty() { 0.0 } else { next };
    reward + gamma * next - price
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvsAct {
    pub means: Vec<f64>,
    pub bids: Vec<f64>,
    pub winner: usize,
    pub price: f64,
    pub flags: Vec<bool>,
}

/// Samples each agent's bid from a Gaussian around its mean, clamped to
/// [0, 1], and runs the cloned auction.
pub fn cvs_act(society: &Society, obs: &[f64], rng: &mut Stream) -> Result<CvsAct, RlError> {
    let means = society.means(obs)?;
    let bids: Vec<f64> = means
        .iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            (m + society.bid_std * z).clamp(0.0, 1.0)
        })
        .collect();
    let cloned: Vec<[f64; 2]> = bids.iter().map(|&b| [b, b]).collect();
    let (winner, price) = vickrey_select(&cloned)?;
    let flags = (0..bids.len()).map(|k| k == winner).collect();
    Ok(CvsAct {
        means,
        bids,
        winner,
        price,
        flags,
    })
}

/// Valuation `r_t + gamma * max_j mean_j(s_{t+1})` of every step, without
/// the bootstrap after a terminal step.
fn valuations(society: &Society, batch: &Batch, gamma: f64) -> Result<Vec<f64>, RlError> {
    batch.steps.iter().map(|s| valuation(society, s, gamma)).collect()
}

fn valuation(society: &Society, step: &Step, gamma: f64) -> Result<f64, RlError> {
    let next = if step.bootstraps() { society.means(&step.next_obs)? } else { Vec::new() };
    Ok(vickrey_utility(step.reward, gamma, &next, 0.0))
}

/// Gradient of the logistic loss between the mean bid of bidder k and the
/// valuation `v` in [0, 1], added into `grad`. With respect to the logit
/// it is simply `mean - v`, so it does not vanish when the sigmoid
/// saturates. Returns the squared error.
fn accumulate(bidder: &Mlp, obs: &[f64], target: f64, scale: f64, cache: &mut Cache, grad: &mut [f64]) -> Result<f64, RlError> {
    let mean = math::sigmoid(bidder.forward(obs, cache)?[0]);
    let err = mean - target;
    bidder.backward(cache, &[scale * err], grad)?;
    Ok(0.5 * err * err)
}

/// Each winning bidder regresses its mean bid at the states it won onto the
/// valuation it received, with the successor bids held constant. Agents without wins in the batch are not touched.
pub fn cvs_update(society: &mut Society, batch: &Batch, config: &CvsConfig, rng: &mut Stream) -> Result<UpdateStats, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let frozen = match config.targets {
        TargetRefresh::Batch => Some(valuations(society, batch, config.gamma)?),
        TargetRefresh::Minibatch => None,
    };
    let mut won: Vec<Vec<usize>> = vec![Vec::new(); society.agents()];
    for (t, s) in batch.steps.iter().enumerate() {
        won[s.action].push(t);
    }
    let mut cache = Cache::default();
    let mut stats = UpdateStats::default();
    let mut samples = 0usize;
    let mut targets = vec![0.0; config.minibatch.max(1)];
    for (k, steps) in won.iter_mut().enumerate() {
        if steps.is_empty() {
            continue;
        }
        let mut grad = vec![0.0; society.bidders[k].num_params()];
        for _ in 0..config.epochs {
            steps.shuffle(rng);
            for chunk in steps.chunks(config.minibatch.max(1)) {
                for (slot, &t) in targets.iter_mut().zip(chunk) {
                    *slot = match &frozen {
                        Some(v) => v[t],
                        None => valuation(society, &batch.steps[t], config.gamma)?,
                    };
                }
                grad.fill(0.0);
                let scale = 1.0 / chunk.len() as f64;
                let bidder = &mut society.bidders[k];
                for (&t, &v) in chunk.iter().zip(&targets) {
                    stats.value_loss += accumulate(bidder, &batch.steps[t].obs, v, scale, &mut cache, &mut grad)?;
                    samples += 1;
                }
                society.opts[k].step(bidder.params_mut(), &grad)?;
            }
        }
    }
    stats.value_loss /= samples.max(1) as f64;
    Ok(stats)
}

/// The parameter update direction contributed by step `t` alone: the
/// winner's index and the gradient with respect to its bidder.
pub fn cvs_step_contribution(society: &Society, batch: &Batch, t: usize, gamma: f64) -> Result<(usize, Vec<f64>), RlError> {
    let step = batch.steps.get(t).ok_or(RlError::Index {
        index: t,
        len: batch.len(),
    })?;
    let target = valuation(society, step, gamma)?;
    let k = step.action;
    let bidder = &society.bidders[k];
    let mut grad = vec![0.0; bidder.num_params()];
    accumulate(bidder, &step.obs, target, 1.0, &mut Cache::default(), &mut grad)?;
    Ok((k, grad))
}
