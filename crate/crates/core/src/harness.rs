//! Epoch-based training, evaluation and convergence bookkeeping.
//!
//! An epoch collects `epoch_size` transitions with the current policy,
//! performs one learner update, then measures the mean undiscounted return
//! of the (still stochastic) policy over `eval_episodes` fresh episodes.
//! Episodes run across epoch boundaries. A run owns four independent
//! random streams (initialization, rollout, update, evaluation) derived
//! from its seed, so every run is reproducible and can be checkpointed.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, EnvState, TaskSpec};
use crate::rl::{AlgorithmId, Batch, Learner, LearnerConfig, RlError, Step, Stream};

pub const EPOCH_SIZE: usize = 4096;
pub const DESK_SAMPLES: u64 = 2_000_000;
pub const FULL_SAMPLES: u64 = 10_000_000;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("training budget {samples} is smaller than one epoch of {epoch} samples")]
    Budget { samples: u64, epoch: usize },
    #[error("no seeds configured")]
    NoSeeds,
    #[error("convergence window must be at least 1")]
    Window,
    #[error("task {task} has {got} doors/inputs but the learner expects {expected}")]
    TaskShape { task: String, expected: usize, got: usize },
    #[error("checkpoint version {0} is not supported")]
    Version(u32),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Rl(#[from] RlError),
}

/// How the band around the target is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceBand {
    /// `|return - target| <= eps`.
    Symmetric,
    /// `return >= target - eps`.
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceSpec {
    pub target: f64,
    pub eps: f64,
    pub window: usize,
    pub band: ConvergenceBand,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            target: 0.8,
            eps: 0.01,
            window: 30,
            band: ConvergenceBand::Floor,
        }
    }
}

impl ConvergenceSpec {
    pub fn in_band(&self, value: f64) -> bool {
        match self.band {
            ConvergenceBand::Symmetric => (value - self.target).abs() <= self.eps,
            ConvergenceBand::Floor => value >= self.target - self.eps,
        }
    }
}

/// How evaluation episodes pick decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    /// Highest bid, no exploration noise.
    #[default]
    Greedy,
    /// Same selection rule as during training.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmId,
    pub train_task: String,
    pub transfer_tasks: Vec<String>,
    /// Training budget H per leg, in samples; rounded up to whole epochs.
    pub samples: u64,
    pub seeds: Vec<u64>,
    pub epoch_size: usize,
    pub eval_episodes: usize,
    pub eval_policy: EvalPolicy,
    pub convergence: ConvergenceSpec,
    /// End a transfer leg as soon as its convergence window is complete.
    pub early_stop: bool,
    pub learner: LearnerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: AlgorithmId::Cvs,
            train_task: String::from("linear_chain/train"),
            transfer_tasks: Vec::new(),
            samples: DESK_SAMPLES,
            seeds: (0..10).collect(),
            epoch_size: EPOCH_SIZE,
            eval_episodes: 128,
            eval_policy: EvalPolicy::Greedy,
            convergence: ConvergenceSpec::default(),
            early_stop: true,
            learner: LearnerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epoch_size == 0 || self.samples < self.epoch_size as u64 {
            return Err(HarnessError::Budget {
                samples: self.samples,
                epoch: self.epoch_size,
            });
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::NoSeeds);
        }
        if self.convergence.window == 0 {
            return Err(HarnessError::Window);
        }
        crate::env::task_by_id(&self.train_task)?;
        for t in &self.transfer_tasks {
            crate::env::task_by_id(t)?;
        }
        Ok(())
    }

    /// Whole epochs covering at least `samples`.
    pub fn epochs(&self) -> usize {
        self.samples.div_ceil(self.epoch_size as u64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 1-based: the point after `epoch` epochs of training.
    pub epoch: usize,
    pub samples: u64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Curve with one point per value, `epoch_size` samples apart.
    pub fn from_returns(seed: u64, epoch_size: usize, returns: &[f64]) -> Self {
        let points = returns
            .iter()
            .enumerate()
            .map(|(i, &r)| CurvePoint {
                epoch: i + 1,
                samples: (i as u64 + 1) * epoch_size as u64,
                mean_return: r,
            })
            .collect();
        LearningCurve { seed, points }
    }

    pub fn returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_return).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    At(u64),
    NotConverged,
}

impl Convergence {
    pub fn samples(self) -> Option<u64> {
        match self {
            Convergence::At(s) => Some(s),
            Convergence::NotConverged => None,
        }
    }
}

/// Samples at the first epoch from which the return stays in band for
/// `window` consecutive epochs.
pub fn convergence_samples(curve: &LearningCurve, spec: &ConvergenceSpec) -> Convergence {
    let window = spec.window.max(1);
    let mut run = 0;
    for (i, p) in curve.points.iter().enumerate() {
        if spec.in_band(p.mean_return) {
            run += 1;
            if run == window {
                return Convergence::At(curve.points[i + 1 - window].samples);
            }
        } else {
            run = 0;
        }
    }
    Convergence::NotConverged
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    /// Mean convergence samples of B over mean convergence samples of A.
    pub ratio: f64,
    pub converged_a: usize,
    pub converged_b: usize,
    pub seeds_a: usize,
    pub seeds_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("ratio undefined: one side has no converged seed")]
pub struct Undefined;

fn mean_converged(results: &[Convergence]) -> Option<(f64, usize)> {
    let xs: Vec<u64> = results.iter().filter_map(|c| c.samples()).collect();
    (!xs.is_empty()).then(|| (xs.iter().sum::<u64>() as f64 / xs.len() as f64, xs.len()))
}

/// How many times fewer samples A needs than B, over converged seeds only.
pub fn relative_efficiency(a: &[Convergence], b: &[Convergence]) -> Result<Ratio, Undefined> {
    let (ma, ca) = mean_converged(a).ok_or(Undefined)?;
    let (mb, cb) = mean_converged(b).ok_or(Undefined)?;
    Ok(Ratio {
        ratio: mb / ma,
        converged_a: ca,
        converged_b: cb,
        seeds_a: a.len(),
        seeds_b: b.len(),
    })
}

/// Convergence point of one (cell, algorithm, seed) curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cell: String,
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub epochs: usize,
    pub converged_at: Option<u64>,
}

/// Efficiency of `a` relative to `b` on one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub cell: String,
    pub a: AlgorithmId,
    pub b: AlgorithmId,
    /// `None` when either side has no converged seed.
    pub ratio: Option<f64>,
    pub converged_a: usize,
    pub converged_b: usize,
    pub seeds_a: usize,
    pub seeds_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub convergence: ConvergenceSpec,
    pub rows: Vec<ConvergenceRow>,
    pub ratios: Vec<RatioRow>,
}

impl EfficiencyReport {
    /// Rows from `(cell, algorithm, curve)` triples; ratios for every
    /// ordered algorithm pair on every cell.
    pub fn build<'a>(
        spec: &ConvergenceSpec,
        curves: impl IntoIterator<Item = (&'a str, AlgorithmId, &'a LearningCurve)>,
    ) -> Self {
        let mut rows: Vec<ConvergenceRow> = curves
            .into_iter()
            .map(|(cell, algorithm, curve)| ConvergenceRow {
                cell: String::from(cell),
                algorithm,
                seed: curve.seed,
                epochs: curve.points.len(),
                converged_at: convergence_samples(curve, spec).samples(),
            })
            .collect();
        rows.sort_by(|x, y| (&x.cell, x.algorithm, x.seed).cmp(&(&y.cell, y.algorithm, y.seed)));
        let mut cells: Vec<&str> = rows.iter().map(|r| r.cell.as_str()).collect();
        cells.dedup();
        let mut ratios = Vec::new();
        for cell in cells {
            let mut algos: Vec<AlgorithmId> = rows.iter().filter(|r| r.cell == cell).map(|r| r.algorithm).collect();
            algos.dedup();
            let results = |algo: AlgorithmId| -> Vec<Convergence> {
                rows.iter()
                    .filter(|r| r.cell == cell && r.algorithm == algo)
                    .map(|r| r.converged_at.map_or(Convergence::NotConverged, Convergence::At))
                    .collect()
            };
            for &a in &algos {
                for &b in algos.iter().filter(|&&b| b != a) {
                    let (ra, rb) = (results(a), results(b));
                    let count = |r: &[Convergence]| r.iter().filter(|c| c.samples().is_some()).count();
                    ratios.push(RatioRow {
                        cell: String::from(cell),
                        a,
                        b,
                        ratio: relative_efficiency(&ra, &rb).ok().map(|r| r.ratio),
                        converged_a: count(&ra),
                        converged_b: count(&rb),
                        seeds_a: ra.len(),
                        seeds_b: rb.len(),
                    });
                }
            }
        }
        EfficiencyReport {
            convergence: *spec,
            rows,
            ratios,
        }
    }

    pub fn ratio(&self, cell: &str, a: AlgorithmId, b: AlgorithmId) -> Option<&RatioRow> {
        self.ratios.iter().find(|r| r.cell == cell && r.a == a && r.b == b)
    }

    /// Mean convergence samples over converged seeds.
    pub fn mean_samples(&self, cell: &str, algorithm: AlgorithmId) -> Option<f64> {
        let xs: Vec<u64> = self
            .rows
            .iter()
            .filter(|r| r.cell == cell && r.algorithm == algorithm)
            .filter_map(|r| r.converged_at)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<u64>() as f64 / xs.len() as f64)
    }

    pub fn converged(&self, cell: &str, algorithm: AlgorithmId) -> (usize, usize) {
        let rows: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.cell == cell && r.algorithm == algorithm).collect();
        (rows.iter().filter(|r| r.converged_at.is_some()).count(), rows.len())
    }
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub task: String,
    /// Epochs completed on the current task.
    pub epoch: usize,
    pub learner: Learner,
    pub episode: Option<EnvState>,
    pub rollout_rng: Stream,
    pub update_rng: Stream,
    pub eval_rng: Stream,
}

/// A live training run of one algorithm and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    algorithm: AlgorithmId,
    seed: u64,
    task: TaskSpec,
    epoch: usize,
    pub learner: Learner,
    episode: Option<EnvState>,
    rollout_rng: Stream,
    update_rng: Stream,
    eval_rng: Stream,
}

fn stream(seed: u64, id: u64) -> Stream {
    let mut s = Stream::seed_from_u64(seed);
    s.set_stream(id);
    s
}

impl Run {
    pub fn new(algorithm: AlgorithmId, seed: u64, task: TaskSpec, config: &LearnerConfig) -> Self {
        let mut init = stream(seed, 0);
        let learner = Learner::new(
            algorithm,
            task.encoding_len(),
            task.state_index_count(),
            task.doors,
            config,
            &mut init,
        );
        Run {
            algorithm,
            seed,
            task,
            epoch: 0,
            learner,
            episode: None,
            rollout_rng: stream(seed, 1),
            update_rng: stream(seed, 2),
            eval_rng: stream(seed, 3),
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Moves to a new task keeping the learned parameters. Optimizer
    /// moments and the running episode are dropped.
    pub fn transfer(&mut self, task: TaskSpec) -> Result<(), HarnessError> {
        for (expected, got) in [
            (self.task.encoding_len(), task.encoding_len()),
            (self.task.doors, task.doors),
        ] {
            if expected != got {
                return Err(HarnessError::TaskShape {
                    task: task.id,
                    expected,
                    got,
                });
            }
        }
        self.task = task;
        self.epoch = 0;
        self.episode = None;
        self.learner.reset_optimizers();
        Ok(())
    }

    fn collect(&mut self, n: usize) -> Result<Batch, HarnessError> {
        let mut steps = Vec::with_capacity(n);
        let task = &self.task;
        for _ in 0..n {
            let state = match self.episode {
                Some(s) => s,
                None => task.reset(&mut self.rollout_rng),
            };
            let obs = task.encode(&state);
            let idx = task.state_index(&state);
            let (decision, bids) = self.learner.act(&obs, idx, &mut self.rollout_rng)?;
            let res = task.step(&state, decision.action);
            steps.push(Step {
                obs,
                state: idx,
                action: decision.action,
                bids,
                logp: decision.logp,
                value: decision.value,
                reward: res.reward,
                done: res.done,
                truncated: res.truncated,
                next_obs: task.encode(&res.next_state),
                next_state: task.state_index(&res.next_state),
            });
            self.episode = (!res.done).then_some(res.next_state);
        }
        Ok(Batch { steps })
    }

    /// Mean undiscounted return of the current policy.
    pub fn evaluate(&mut self, episodes: usize, policy: EvalPolicy) -> Result<f64, HarnessError> {
        let task = &self.task;
        let mut total = 0.0;
        let mut obs = alloc::vec![0.0; task.encoding_len()];
        for _ in 0..episodes {
            let mut state = task.reset(&mut self.eval_rng);
            loop {
                task.encode_into(&state, &mut obs);
                let idx = task.state_index(&state);
                let action = match policy {
                    EvalPolicy::Greedy => self.learner.greedy(&obs, idx)?,
                    EvalPolicy::Sampled => self.learner.act(&obs, idx, &mut self.eval_rng)?.0.action,
                };
                let res = task.step(&state, action);
                total += res.reward;
                if res.done {
                    break;
                }
                state = res.next_state;
            }
        }
        Ok(total / episodes.max(1) as f64)
    }

    /// Collect, update, evaluate.
    pub fn run_epoch(&mut self, config: &ExperimentConfig) -> Result<CurvePoint, HarnessError> {
        let batch = self.collect(config.epoch_size)?;
        self.learner.update(&batch, &config.learner, &mut self.update_rng)?;
        self.epoch += 1;
        let mean_return = self.evaluate(config.eval_episodes, config.eval_policy)?;
        Ok(CurvePoint {
            epoch: self.epoch,
            samples: self.epoch as u64 * config.epoch_size as u64,
            mean_return,
        })
    }

    /// Trains for the configured budget on the current task; with
    /// `stop_early` the leg ends once the convergence window is complete.
    /// `on_epoch` sees the run after every epoch.
    pub fn train_leg(
        &mut self,
        config: &ExperimentConfig,
        stop_early: bool,
        mut on_epoch: impl FnMut(&Run, &CurvePoint),
    ) -> Result<LearningCurve, HarnessError> {
        let mut curve = LearningCurve {
            seed: self.seed,
            points: Vec::with_capacity(config.epochs()),
        };
        let mut run = 0usize;
        while self.epoch < config.epochs() {
            let p = self.run_epoch(config)?;
            on_epoch(self, &p);
            run = if config.convergence.in_band(p.mean_return) { run + 1 } else { 0 };
            curve.points.push(p);
            if stop_early && run >= config.convergence.window {
                break;
            }
        }
        Ok(curve)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            algorithm: self.algorithm,
            seed: self.seed,
            task: self.task.id.clone(),
            epoch: self.epoch,
            learner: self.learner.clone(),
            episode: self.episode,
            rollout_rng: self.rollout_rng.clone(),
            update_rng: self.update_rng.clone(),
            eval_rng: self.eval_rng.clone(),
        }
    }

    pub fn restore(cp: Checkpoint) -> Result<Self, HarnessError> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Version(cp.version));
        }
        Ok(Run {
            algorithm: cp.algorithm,
            seed: cp.seed,
            task: crate::env::task_by_id(&cp.task)?,
            epoch: cp.epoch,
            learner: cp.learner,
            episode: cp.episode,
            rollout_rng: cp.rollout_rng,
            update_rng: cp.update_rng,
            eval_rng: cp.eval_rng,
        })
    }
}

/// Runs one seed through a sequence of tasks: the first leg trains from
/// scratch for the full budget, every later leg transfers from the end of
/// the previous one.
pub fn run_protocol(
    config: &ExperimentConfig,
    seed: u64,
    legs: &[TaskSpec],
    mut on_epoch: impl FnMut(usize, &Run, &CurvePoint),
) -> Result<Vec<LearningCurve>, HarnessError> {
    let mut curves = Vec::with_capacity(legs.len());
    let Some(first) = legs.first() else {
        return Ok(curves);
    };
    let mut run = Run::new(config.algorithm, seed, first.clone(), &config.learner);
    for (i, task) in legs.iter().enumerate() {
        if i > 0 {
            run.transfer(task.clone())?;
        }
        let stop = config.early_stop && i > 0;
        curves.push(run.train_leg(config, stop, |r, p| on_epoch(i, r, p))?);
    }
    Ok(curves)
}
