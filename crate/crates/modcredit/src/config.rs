//! TOML run configuration.
//!
//! ```toml
//! name = "desk-triplets"          # run directory name (default: file stem)
//! suite = "triplets"              # triplets | forgetting | bids
//! samples = 2000000               # training budget H per leg
//! full = false                    # true sets samples = 1e7
//! seeds = [0, 1, 2]
//! algorithms = ["cvs", "ppo", "ppof"]
//! topologies = ["linear_chain"]   # triplets only; default: all three
//! variants = ["transfer_last"]    # transfer edits to run; default: all
//! eval_episodes = 128
//! eval_policy = "greedy"          # greedy | sampled
//! early_stop = true               # end transfer legs once converged
//! save_checkpoints = false        # write training-final checkpoints
//!
//! [convergence]
//! target = 0.8
//! eps = 0.01
//! window = 30
//! band = "floor"                  # floor | symmetric
//!
//! [learner.ppo]                   # any PpoConfig field
//! epochs = 10
//! [learner.cvs]                   # any CvsConfig field
//! bid_std = 0.1
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use modcredit_core::env::{make_task, transfer_variants, Topology};
use modcredit_core::harness::{ConvergenceSpec, EvalPolicy, ExperimentConfig, DESK_SAMPLES, EPOCH_SIZE, FULL_SAMPLES};
use modcredit_core::rl::{AlgorithmId, LearnerConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Train, then three single-door transfers, per topology.
    Triplets,
    /// Train on (a), transfer to (b), transfer back to (a).
    Forgetting,
    /// Linear-chain transfer with per-epoch bids at the optimal-path states.
    Bids,
}

impl SuiteKind {
    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Triplets => "triplets",
            SuiteKind::Forgetting => "forgetting",
            SuiteKind::Bids => "bids",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub suite: SuiteKind,
    pub samples: u64,
    pub full: bool,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<AlgorithmId>,
    pub topologies: Vec<Topology>,
    pub variants: Vec<String>,
    pub epoch_size: usize,
    pub eval_episodes: usize,
    pub eval_policy: EvalPolicy,
    pub early_stop: bool,
    pub save_checkpoints: bool,
    pub convergence: ConvergenceSpec,
    pub learner: LearnerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        RunConfig {
            name: None,
            suite: SuiteKind::Triplets,
            samples: DESK_SAMPLES,
            full: false,
            seeds: exp.seeds,
            algorithms: vec![AlgorithmId::Cvs, AlgorithmId::Ppo, AlgorithmId::Ppof],
            topologies: vec![Topology::LinearChain, Topology::CommonAncestor, Topology::CommonDescendant],
            variants: Vec::new(),
            epoch_size: EPOCH_SIZE,
            eval_episodes: exp.eval_episodes,
            eval_policy: exp.eval_policy,
            early_stop: exp.early_stop,
            save_checkpoints: false,
            convergence: exp.convergence,
            learner: exp.learner,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok((RunConfig::parse(&text)?, text))
    }

    pub fn budget(&self) -> u64 {
        if self.full {
            FULL_SAMPLES
        } else {
            self.samples
        }
    }

    /// Transfer variants to run for `topology`, honouring the filter.
    pub fn variants_for(&self, topology: Topology) -> Vec<String> {
        let all = transfer_variants(topology);
        if self.variants.is_empty() {
            all.into_iter().map(String::from).collect()
        } else {
            self.variants.iter().filter(|v| all.contains(&v.as_str())).cloned().collect()
        }
    }

    pub fn experiment(&self, algorithm: AlgorithmId) -> ExperimentConfig {
        ExperimentConfig {
            algorithm,
            samples: self.budget(),
            seeds: self.seeds.clone(),
            epoch_size: self.epoch_size,
            eval_episodes: self.eval_episodes,
            eval_policy: self.eval_policy,
            convergence: self.convergence,
            early_stop: self.early_stop,
            learner: self.learner.clone(),
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.algorithms.is_empty() {
            bail!("no algorithms configured");
        }
        let topologies: &[Topology] = match self.suite {
            SuiteKind::Triplets => &self.topologies,
            SuiteKind::Bids => &[Topology::LinearChain],
            SuiteKind::Forgetting => &[],
        };
        if self.suite == SuiteKind::Triplets && topologies.iter().any(|t| *t == Topology::Forgetting) {
            bail!("the forgetting tasks belong to the forgetting suite");
        }
        for v in &self.variants {
            if !topologies.iter().any(|&t| make_task(t, v).is_ok()) {
                bail!("unknown task variant {v:?} for suite {}", self.suite.name());
            }
        }
        self.experiment(self.algorithms[0]).validate()?;
        Ok(())
    }
}
