use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gae, Batch, Decision, RlError, Stream, UpdateStats};
use crate::math;
use crate::nn::{Adam, Cache, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub policy_lr: f64,
    pub value_lr: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub batch: usize,
    pub minibatch: usize,
    /// Passes over each batch.
    pub epochs: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            policy_lr: 4e-5,
            value_lr: 5e-3,
            clip: 0.2,
            gae_lambda: 0.95,
            gamma: 0.99,
            entropy_coef: 0.1,
            batch: 4096,
            minibatch: 256,
            epochs: 10,
            normalize_advantages: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArch {
    /// One network producing every logit.
    Monolithic,
    /// One single-output network per logit.
    Factorized,
}

/// Per-call scratch space; never serialized or compared.
#[derive(Debug, Clone, Default)]
struct Scratch {
    policy: Vec<Cache>,
    value: Cache,
}

impl PartialEq for Scratch {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    arch: PolicyArch,
    actions: usize,
    nets: Vec<Mlp>,
}

impl PolicyNet {
    pub fn new(arch: PolicyArch, obs_len: usize, actions: usize, rng: &mut Stream) -> Self {
        let nets = match arch {
            PolicyArch::Monolithic => vec![Mlp::standard(obs_len, actions, rng)],
            PolicyArch::Factorized => (0..actions).map(|_| Mlp::standard(obs_len, 1, rng)).collect(),
        };
        PolicyNet { arch, actions, nets }
    }

    pub fn from_nets(arch: PolicyArch, nets: Vec<Mlp>) -> Self {
        let actions = match arch {
            PolicyArch::Monolithic => nets[0].output_len(),
            PolicyArch::Factorized => nets.len(),
        };
        PolicyNet { arch, actions, nets }
    }

    pub fn arch(&self) -> PolicyArch {
        self.arch
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    fn logits_into(&self, obs: &[f64], caches: &mut Vec<Cache>, out: &mut [f64]) -> Result<(), RlError> {
        caches.resize_with(self.nets.len(), Cache::default);
        match self.arch {
            PolicyArch::Monolithic => out.copy_from_slice(self.nets[0].forward(obs, &mut caches[0])?),
            PolicyArch::Factorized => {
                for (k, net) in self.nets.iter().enumerate() {
                    out[k] = net.forward(obs, &mut caches[k])?[0];
                }
            }
        }
        Ok(())
    }

    fn backward(&self, caches: &mut [Cache], dlogits: &[f64], grads: &mut [Vec<f64>]) -> Result<(), RlError> {
        match self.arch {
            PolicyArch::Monolithic => self.nets[0].backward(&mut caches[0], dlogits, &mut grads[0])?,
            PolicyArch::Factorized => {
                for (k, net) in self.nets.iter().enumerate() {
                    if dlogits[k] != 0.0 {
                        net.backward(&mut caches[k], &dlogits[k..k + 1], &mut grads[k])?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn logits(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        let mut out = vec![0.0; self.actions];
        self.logits_into(obs, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// Action distribution: softmax over the logits.
    pub fn probs(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        let logits = self.logits(obs)?;
        let mut p = vec![0.0; self.actions];
        math::softmax_into(&logits, &mut p);
        Ok(p)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    pub fn decision_parameters(&self, k: usize) -> Vec<usize> {
        match self.arch {
            PolicyArch::Factorized => {
                let start: usize = self.nets[..k].iter().map(Mlp::num_params).sum();
                (start..start + self.nets[k].num_params()).collect()
            }
            PolicyArch::Monolithic => {
                // hidden layers feed every logit; the output layer row and bias are per logit
                let net = &self.nets[0];
                let sizes = net.sizes();
                let fan_in = sizes[sizes.len() - 2];
                let out = self.actions;
                let last = fan_in * out + out;
                let shared = net.num_params() - last;
                let mut idx: Vec<usize> = (0..shared).collect();
                idx.extend(shared + k * fan_in..shared + (k + 1) * fan_in);
                idx.push(shared + fan_in * out + k);
                idx
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoAgent {
    pub policy: PolicyNet,
    pub value: Mlp,
    policy_opts: Vec<Adam>,
    value_opt: Adam,
    #[serde(skip)]
    scratch: Scratch,
}

impl PpoAgent {
    pub fn new(arch: PolicyArch, obs_len: usize, actions: usize, config: &PpoConfig, rng: &mut Stream) -> Self {
        let policy = PolicyNet::new(arch, obs_len, actions, rng);
        let value = Mlp::standard(obs_len, 1, rng);
        PpoAgent::from_parts(policy, value, config)
    }

    pub fn from_parts(policy: PolicyNet, value: Mlp, config: &PpoConfig) -> Self {
        let policy_opts = policy.nets.iter().map(|n| Adam::new(n.num_params(), config.policy_lr)).collect();
        let value_opt = Adam::new(value.num_params(), config.value_lr);
        PpoAgent {
            policy,
            value,
            policy_opts,
            value_opt,
            scratch: Scratch::default(),
        }
    }

    pub fn act(&mut self, obs: &[f64], rng: &mut Stream) -> Result<(Decision, Vec<f64>), RlError> {
        let n = self.policy.actions;
        let mut logits = vec![0.0; n];
        self.policy.logits_into(obs, &mut self.scratch.policy, &mut logits)?;
        let mut p = vec![0.0; n];
        math::softmax_into(&logits, &mut p);
        let action = sample_categorical(&p, rng);
        let value = self.value.forward(obs, &mut self.scratch.value)?[0];
        Ok((
            Decision {
                action,
                logp: math::ln(p[action]),
                value,
            },
            p,
        ))
    }

    pub fn reset_optimizers(&mut self) {
        self.policy_opts.iter_mut().for_each(Adam::reset);
        self.value_opt.reset();
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.policy.flat_params();
        p.extend_from_slice(self.value.params());
        p
    }
}

pub(crate) fn sample_categorical(p: &[f64], rng: &mut Stream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Per-sample loss gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrad {
    pub dlogits: Vec<f64>,
    /// The clipped surrogate objective (to be maximized).
    pub surrogate: f64,
    pub entropy: f64,
    pub clipped: bool,
}

/// Gradient of `-min(r A, clip(r, 1-c, 1+c) A) - ent_coef * H(p)` where
/// `r = p[action] / exp(logp_old)`.
pub fn ppo_logit_grad(probs: &[f64], action: usize, logp_old: f64, adv: f64, clip: f64, ent_coef: f64) -> LogitGrad {
    let ratio = math::exp(math::ln(probs[action]) - logp_old);
    let clipped_ratio = ratio.clamp(1.0 - clip, 1.0 + clip);
    let unclipped = ratio * adv;
    let bounded = clipped_ratio * adv;
    let active = unclipped <= bounded;
    let entropy: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * math::ln(p)).sum::<f64>();
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let mut g = 0.0;
            if active {
                let onehot = if j == action { 1.0 } else { 0.0 };
                g -= adv * ratio * (onehot - pj);
            }
            if pj > 0.0 {
                g += ent_coef * pj * (math::ln(pj) + entropy);
            }
            g
        })
        .collect();
    LogitGrad {
        dlogits,
        surrogate: unclipped.min(bounded),
        entropy,
        clipped: !active,
    }
}

struct Targets {
    adv: Vec<f64>,
    returns: Vec<f64>,
}

fn targets(agent: &PpoAgent, batch: &Batch, config: &PpoConfig) -> Result<Targets, RlError> {
    let steps = &batch.steps;
    let n = steps.len();
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
    let dones: Vec<bool> = steps.iter().map(|s| s.done).collect();
    let mut next_values = vec![0.0; n];
    for (t, s) in steps.iter().enumerate() {
        if s.bootstraps() {
            next_values[t] = if t + 1 < n && !s.done {
                values[t + 1]
            } else {
                agent.value.predict(&s.next_obs)?[0]
            };
        }
    }
    let mut adv = gae(&rewards, &values, &next_values, &dones, config.gamma, config.gae_lambda)?;
    let returns: Vec<f64> = adv.iter().zip(&values).map(|(a, v)| a + v).collect();
    if config.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let std = math::sqrt(var);
        for a in &mut adv {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
    Ok(Targets { adv, returns })
}

/// Clipped-surrogate update with entropy bonus on the policy and squared
/// error on the value network, over shuffled minibatches.
pub fn ppo_update(agent: &mut PpoAgent, batch: &Batch, config: &PpoConfig, rng: &mut Stream) -> Result<UpdateStats, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let Targets { adv, returns } = targets(agent, batch, config)?;
    let n = batch.len();
    let actions = agent.policy.actions;
    let mut order: Vec<usize> = (0..n).collect();
    let mut pgrads: Vec<Vec<f64>> = agent.policy.nets.iter().map(|m| vec![0.0; m.num_params()]).collect();
    let mut vgrad = vec![0.0; agent.value.num_params()];
    let mut caches: Vec<Cache> = Vec::new();
    let mut vcache = Cache::default();
    let mut logits = vec![0.0; actions];
    let mut probs = vec![0.0; actions];
    let mut stats = UpdateStats::default();
    let mut samples = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch.max(1)) {
            let scale = 1.0 / chunk.len() as f64;
            pgrads.iter_mut().for_each(|g| g.fill(0.0));
            vgrad.fill(0.0);
            for &i in chunk {
                let step = &batch.steps[i];
                agent.policy.logits_into(&step.obs, &mut caches, &mut logits)?;
                math::softmax_into(&logits, &mut probs);
                let mut g = ppo_logit_grad(&probs, step.action, step.logp, adv[i], config.clip, config.entropy_coef);
                g.dlogits.iter_mut().for_each(|d| *d *= scale);
                agent.policy.backward(&mut caches, &g.dlogits, &mut pgrads)?;
                let v = agent.value.forward(&step.obs, &mut vcache)?[0];
                let err = v - returns[i];
                agent.value.backward(&mut vcache, &[err * scale], &mut vgrad)?;
                stats.policy_loss -= g.surrogate;
                stats.value_loss += 0.5 * err * err;
                stats.entropy += g.entropy;
                stats.clip_fraction += f64::from(u8::from(g.clipped));
                samples += 1;
            }
            for ((net, opt), grad) in agent.policy.nets.iter_mut().zip(&mut agent.policy_opts).zip(&pgrads) {
                opt.step(net.params_mut(), grad)?;
            }
            agent.value_opt.step(agent.value.params_mut(), &vgrad)?;
        }
    }
    let denom = samples.max(1) as f64;
    stats.policy_loss /= denom;
    stats.value_loss /= denom;
    stats.entropy /= denom;
    stats.clip_fraction /= denom;
    Ok(stats)
}

/// Policy-loss gradient of step `t` alone at the current parameters, with
/// advantages computed from the whole batch as in [`ppo_update`].
pub fn ppo_step_contribution(agent: &PpoAgent, batch: &Batch, t: usize, config: &PpoConfig) -> Result<Vec<f64>, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    if t >= batch.len() {
        return Err(RlError::Index { index: t, len: batch.len() });
    }
    let Targets { adv, .. } = targets(agent, batch, config)?;
    let step = &batch.steps[t];
    let mut caches = Vec::new();
    let mut logits = vec![0.0; agent.policy.actions];
    agent.policy.logits_into(&step.obs, &mut caches, &mut logits)?;
    let mut probs = vec![0.0; logits.len()];
    math::softmax_into(&logits, &mut probs);
    let g = ppo_logit_grad(&probs, step.action, step.logp, adv[t], config.clip, config.entropy_coef);
    let mut grads: Vec<Vec<f64>> = agent.policy.nets.iter().map(|m| vec![0.0; m.num_params()]).collect();
    agent.policy.backward(&mut caches, &g.dlogits, &mut grads)?;
    Ok(grads.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::Step;
    use rand::SeedableRng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ratio_one_gives_vanilla_policy_gradient() {
        let p = [0.2, 0.5, 0.3];
        let g = ppo_logit_grad(&p, 1, math::ln(0.5), 2.0, 0.2, 0.0);
        // -A * d log p_a / dz = -A (e_a - p)
        assert!(close(&g.dlogits, &[0.4, -1.0, 0.6], 1e-12));
        assert!(!g.clipped);
    }

    #[test]
    fn zero_advantage_leaves_only_entropy() {
        let p = [0.2, 0.5, 0.3];
        let c = 0.1;
        let g = ppo_logit_grad(&p, 0, math::ln(0.2), 0.0, 0.2, c);
        let h: f64 = -p.iter().map(|&q| q * math::ln(q)).sum::<f64>();
        let expected: Vec<f64> = p.iter().map(|&q| c * q * (math::ln(q) + h)).collect();
        assert!(close(&g.dlogits, &expected, 1e-15));
    }

    #[test]
    fn clipped_sample_has_no_surrogate_gradient() {
        let p = [0.6, 0.4];
        // ratio = 0.6 / 0.4 = 1.5 with positive advantage
        let g = ppo_logit_grad(&p, 0, math::ln(0.4), 1.0, 0.2, 0.0);
        assert!(g.clipped);
        assert!(g.dlogits.iter().all(|&d| d == 0.0));
        assert!((g.surrogate - 1.2).abs() < 1e-12);
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let z = [0.3, -1.0, 0.8, 0.1];
        let ent = |z: &[f64]| {
            let mut p = [0.0; 4];
            math::softmax_into(z, &mut p);
            -p.iter().map(|&q| q * math::ln(q)).sum::<f64>()
        };
        let mut p = [0.0; 4];
        math::softmax_into(&z, &mut p);
        let g = ppo_logit_grad(&p, 0, math::ln(p[0]), 0.0, 0.2, 1.0);
        for j in 0..4 {
            let mut a = z;
            let mut b = z;
            a[j] += 1e-6;
            b[j] -= 1e-6;
            let fd = -(ent(&a) - ent(&b)) / 2e-6;
            assert!((fd - g.dlogits[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn factorized_distribution_is_valid() {
        let mut rng = Stream::seed_from_u64(4);
        let pol = PolicyNet::new(PolicyArch::Factorized, 10, 6, &mut rng);
        let p = pol.probs(&[1., 0., 0., 0., 1., 0., 0., 0., 0., 0.]).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|&q| q >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_logits_are_uniform() {
        let nets = (0..4).map(|_| Mlp::zeros(&[3, 20, 20, 1])).collect();
        let pol = PolicyNet::from_nets(PolicyArch::Factorized, nets);
        let p = pol.probs(&[0.3, 0.1, 0.9]).unwrap();
        assert!(p.iter().all(|&q| (q - 0.25).abs() < 1e-15));
    }

    #[test]
    fn factorized_log_prob_is_coupled_across_networks() {
        // d log p(a=0) / d params of network 1 is nonzero through the softmax
        let mut rng = Stream::seed_from_u64(9);
        let pol = PolicyNet::new(PolicyArch::Factorized, 5, 3, &mut rng);
        let x = [0.2, 0.4, -0.1, 0.9, 0.0];
        let logp0 = |p: &PolicyNet| math::ln(p.probs(&x).unwrap()[0]);
        let last = pol.nets()[1].num_params() - 1; // output bias of network 1
        let mut plus = pol.clone();
        plus.nets_mut()[1].params_mut()[last] += 1e-5;
        let mut minus = pol.clone();
        minus.nets_mut()[1].params_mut()[last] -= 1e-5;
        let fd = (logp0(&plus) - logp0(&minus)) / 2e-5;
        let p1 = pol.probs(&x).unwrap()[1];
        assert!((fd + p1).abs() < 1e-8, "{fd} vs {}", -p1);
        assert!(fd.abs() > 1e-3);
    }

    fn toy_batch(agent: &mut PpoAgent, rng: &mut Stream) -> Batch {
        let mut steps = Vec::new();
        for t in 0..12 {
            let mut obs = vec![0.0; 6];
            obs[t % 3] = 1.0;
            obs[3 + (t % 2)] = 1.0;
            let (d, bids) = agent.act(&obs, rng).unwrap();
            let done = t % 3 == 2;
            steps.push(Step {
                next_obs: obs.clone(),
                obs,
                state: 0,
                action: d.action,
                bids,
                logp: d.logp,
                value: d.value,
                reward: if done { 1.0 } else { 0.0 },
                done,
                truncated: false,
                next_state: 0,
            });
        }
        Batch { steps }
    }

    #[test]
    fn update_is_deterministic_and_moves_parameters() {
        let cfg = PpoConfig {
            minibatch: 4,
            epochs: 2,
            ..PpoConfig::default()
        };
        for arch in [PolicyArch::Monolithic, PolicyArch::Factorized] {
            let mut rng = Stream::seed_from_u64(1);
            let mut agent = PpoAgent::new(arch, 6, 3, &cfg, &mut rng);
            let batch = toy_batch(&mut agent, &mut rng);
            let before = agent.flat_params();
            let mut a = agent.clone();
            let mut b = agent.clone();
            ppo_update(&mut a, &batch, &cfg, &mut Stream::seed_from_u64(5)).unwrap();
            ppo_update(&mut b, &batch, &cfg, &mut Stream::seed_from_u64(5)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.flat_params(), before);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let cfg = PpoConfig::default();
        let mut rng = Stream::seed_from_u64(1);
        let mut agent = PpoAgent::new(PolicyArch::Monolithic, 4, 2, &cfg, &mut rng);
        assert_eq!(
            ppo_update(&mut agent, &Batch::default(), &cfg, &mut rng),
            Err(RlError::EmptyBatch)
        );
    }

    #[test]
    fn step_contribution_depends_on_other_rewards() {
        let cfg = PpoConfig::default();
        let mut rng = Stream::seed_from_u64(2);
        let mut agent = PpoAgent::new(PolicyArch::Factorized, 6, 3, &cfg, &mut rng);
        let batch = toy_batch(&mut agent, &mut rng);
        let base = ppo_step_contribution(&agent, &batch, 0, &cfg).unwrap();
        let mut perturbed = batch.clone();
        perturbed.steps[7].reward += 0.5;
        let moved = ppo_step_contribution(&agent, &perturbed, 0, &cfg).unwrap();
        let diff: f64 = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-9);
    }
}
