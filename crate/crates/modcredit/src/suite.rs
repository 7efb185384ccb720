//! Experiment suites: work units fanned out over a thread pool, results
//! merged in (cell, algorithm, seed) order and written as CSV / JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use modcredit_core::env::{door_label, make_task, TaskSpec, Topology};
use modcredit_core::harness::{Checkpoint, EfficiencyReport, LearningCurve, Run};
use modcredit_core::rl::AlgorithmId;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SuiteKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitKind {
    Triplet(Topology),
    Forgetting,
    Bids,
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    algorithm: AlgorithmId,
    seed: u64,
    kind: UnitKind,
}

impl Unit {
    fn label(&self) -> String {
        let what = match self.kind {
            UnitKind::Triplet(t) => t.name(),
            UnitKind::Forgetting => "forgetting",
            UnitKind::Bids => "bids",
        };
        format!("{} seed {} {}", self.algorithm, self.seed, what)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellCurve {
    pub cell: String,
    pub algorithm: AlgorithmId,
    pub curve: LearningCurve,
}

/// Bid of one door at one optimal-path state after a transfer epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidRow {
    pub cell: String,
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub epoch: usize,
    pub room: usize,
    pub door: char,
    pub bid: f64,
}

#[derive(Debug, Clone)]
pub struct SavedCheckpoint {
    pub name: String,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub suite: SuiteKind,
    pub curves: Vec<CellCurve>,
    pub bids: Vec<BidRow>,
    pub checkpoints: Vec<SavedCheckpoint>,
    pub report: EfficiencyReport,
}

#[derive(Default)]
struct UnitOutput {
    curves: Vec<CellCurve>,
    bids: Vec<BidRow>,
    checkpoints: Vec<SavedCheckpoint>,
}

pub struct SuiteOptions {
    pub jobs: usize,
    pub progress: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            progress: false,
        }
    }
}

fn units(cfg: &RunConfig) -> Vec<Unit> {
    let kinds: Vec<UnitKind> = match cfg.suite {
        SuiteKind::Triplets => cfg.topologies.iter().map(|&t| UnitKind::Triplet(t)).collect(),
        SuiteKind::Forgetting => vec![UnitKind::Forgetting],
        SuiteKind::Bids => vec![UnitKind::Bids],
    };
    let mut out = Vec::new();
    for &kind in &kinds {
        for &algorithm in &cfg.algorithms {
            for &seed in &cfg.seeds {
                out.push(Unit { algorithm, seed, kind });
            }
        }
    }
    out
}

fn checkpoint_name(unit: &Unit, task: &TaskSpec) -> String {
    format!("{}_{}_seed{}", unit.algorithm, task.id.replace('/', "_"), unit.seed)
}

/// States along subtask 0's optimal path, one per non-terminal room.
fn optimal_path(task: &TaskSpec) -> Vec<(usize, Vec<f64>, usize)> {
    let mut state = task.start_state(0);
    let mut out = Vec::new();
    for door in task.optimal_sequence(0) {
        out.push((state.room, task.encode(&state), task.state_index(&state)));
        state = task.step(&state, door).next_state;
    }
    out
}

fn run_unit(cfg: &RunConfig, unit: Unit) -> anyhow::Result<UnitOutput> {
    let exp = cfg.experiment(unit.algorithm);
    let mut out = UnitOutput::default();
    let push = |out: &mut UnitOutput, cell: String, curve: LearningCurve| {
        out.curves.push(CellCurve {
            cell,
            algorithm: unit.algorithm,
            curve,
        })
    };
    let train = |topology: Topology, out: &mut UnitOutput| -> anyhow::Result<Run> {
        let variant = if topology == Topology::Forgetting { "a" } else { "train" };
        let task = make_task(topology, variant)?;
        let mut run = Run::new(unit.algorithm, unit.seed, task, &exp.learner);
        let curve = run.train_leg(&exp, false, |_, _| {})?;
        if cfg.save_checkpoints {
            out.checkpoints.push(SavedCheckpoint {
                name: checkpoint_name(&unit, run.task()),
                checkpoint: run.checkpoint(),
            });
        }
        push(out, run.task().id.clone(), curve);
        Ok(run)
    };
    match unit.kind {
        UnitKind::Triplet(topology) => {
            let trained = train(topology, &mut out)?;
            for variant in cfg.variants_for(topology) {
                let task = make_task(topology, &variant)?;
                let cell = task.id.clone();
                let mut run = trained.clone();
                run.transfer(task)?;
                let curve = run.train_leg(&exp, cfg.early_stop, |_, _| {})?;
                push(&mut out, cell, curve);
            }
        }
        UnitKind::Bids => {
            let mut run = train(Topology::LinearChain, &mut out)?;
            let variants = if cfg.variants.is_empty() {
                vec!["transfer_last".to_string()]
            } else {
                cfg.variants_for(Topology::LinearChain)
            };
            for variant in variants {
                let task = make_task(Topology::LinearChain, &variant)?;
                let cell = task.id.clone();
                let path = optimal_path(&task);
                let mut leg = run.clone();
                leg.transfer(task)?;
                let mut bids = Vec::new();
                let mut failure = None;
                let curve = leg.train_leg(&exp, cfg.early_stop, |r, p| {
                    for (room, obs, idx) in &path {
                        match r.learner.bids(obs, *idx) {
                            Ok(values) => bids.extend(values.into_iter().enumerate().map(|(d, bid)| BidRow {
                                cell: cell.clone(),
                                algorithm: unit.algorithm,
                                seed: unit.seed,
                                epoch: p.epoch,
                                room: *room,
                                door: door_label(d),
                                bid,
                            })),
                            Err(e) => failure = Some(e),
                        }
                    }
                })?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                out.bids.extend(bids);
                push(&mut out, cell, curve);
                run = leg;
            }
        }
        UnitKind::Forgetting => {
            let mut run = train(Topology::Forgetting, &mut out)?;
            for (variant, cell) in [("b", "forgetting/b"), ("a", "forgetting/a_return")] {
                run.transfer(make_task(Topology::Forgetting, variant)?)?;
                let curve = run.train_leg(&exp, cfg.early_stop, |_, _| {})?;
                push(&mut out, cell.to_string(), curve);
            }
        }
    }
    Ok(out)
}

pub fn run_suite(cfg: &RunConfig, opts: &SuiteOptions) -> anyhow::Result<SuiteOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .context("cannot start worker pool")?;
    let work = units(cfg);
    let total = work.len();
    let results: Vec<UnitOutput> = pool.install(|| {
        work.par_iter()
            .map(|&unit| {
                let started = Instant::now();
                let r = run_unit(cfg, unit).with_context(|| unit.label());
                if opts.progress {
                    eprintln!("[{total} units] {} done in {:.1}s", unit.label(), started.elapsed().as_secs_f64());
                }
                r
            })
            .collect::<anyhow::Result<_>>()
    })?;

    let mut curves = Vec::new();
    let mut bids = Vec::new();
    let mut checkpoints = Vec::new();
    for r in results {
        curves.extend(r.curves);
        bids.extend(r.bids);
        checkpoints.extend(r.checkpoints);
    }
    curves.sort_by(|a, b| (&a.cell, a.algorithm, a.curve.seed).cmp(&(&b.cell, b.algorithm, b.curve.seed)));
    bids.sort_by(|a, b| {
        (&a.cell, a.algorithm, a.seed, a.epoch, a.room, a.door).cmp(&(&b.cell, b.algorithm, b.seed, b.epoch, b.room, b.door))
    });
    checkpoints.sort_by(|a, b| a.name.cmp(&b.name));
    let report = EfficiencyReport::build(
        &cfg.convergence,
        curves.iter().map(|c| (c.cell.as_str(), c.algorithm, &c.curve)),
    );
    Ok(SuiteOutput {
        suite: cfg.suite,
        curves,
        bids,
        checkpoints,
        report,
    })
}

#[derive(Serialize)]
struct CurveRow<'a> {
    suite: &'a str,
    cell: &'a str,
    algorithm: AlgorithmId,
    seed: u64,
    epoch: usize,
    samples: u64,
    mean_return: f64,
}

fn write_curves(path: &Path, suite: &str, curves: &[&CellCurve]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for c in curves {
        for p in &c.curve.points {
            w.serialize(CurveRow {
                suite,
                cell: &c.cell,
                algorithm: c.algorithm,
                seed: c.curve.seed,
                epoch: p.epoch,
                samples: p.samples,
                mean_return: p.mean_return,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CellSummary {
    cell: String,
    algorithm: AlgorithmId,
    seeds: usize,
    converged: usize,
    mean_samples: Option<f64>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    suite: &'a str,
    samples: u64,
    epoch_size: usize,
    seeds: &'a [u64],
    summary: Vec<CellSummary>,
    #[serde(flatten)]
    report: &'a EfficiencyReport,
}

impl SuiteOutput {
    /// Writes the run directory:
    ///
    /// ```text
    /// config.toml        copy of the input
    /// curves.csv         suite,cell,algorithm,seed,epoch,samples,mean_return
    /// cells/<cell>.csv   the same rows split per cell
    /// report.json        convergence rows, per-cell summary, pairwise ratios
    /// bids.csv           bids suite only
    /// checkpoints/*.json with save_checkpoints
    /// ```
    pub fn write(&self, dir: &Path, cfg: &RunConfig, config_text: &str) -> anyhow::Result<()> {
        fs::create_dir_all(dir.join("cells")).with_context(|| format!("cannot create {}", dir.display()))?;
        fs::write(dir.join("config.toml"), config_text)?;
        let suite = self.suite.name();
        write_curves(&dir.join("curves.csv"), suite, &self.curves.iter().collect::<Vec<_>>())?;
        let mut cells: Vec<&str> = self.curves.iter().map(|c| c.cell.as_str()).collect();
        cells.dedup();
        for cell in &cells {
            let rows: Vec<&CellCurve> = self.curves.iter().filter(|c| c.cell == *cell).collect();
            write_curves(&dir.join("cells").join(format!("{}.csv", cell.replace('/', "__"))), suite, &rows)?;
        }

        let mut summary = Vec::new();
        for cell in &cells {
            for &algorithm in &cfg.algorithms {
                let (converged, seeds) = self.report.converged(cell, algorithm);
                summary.push(CellSummary {
                    cell: cell.to_string(),
                    algorithm,
                    seeds,
                    converged,
                    mean_samples: self.report.mean_samples(cell, algorithm),
                });
            }
        }
        let report = ReportJson {
            suite,
            samples: cfg.budget(),
            epoch_size: cfg.epoch_size,
            seeds: &cfg.seeds,
            summary,
            report: &self.report,
        };
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;

        if self.suite == SuiteKind::Bids {
            let mut w = csv::Writer::from_path(dir.join("bids.csv"))?;
            for b in &self.bids {
                w.serialize(b)?;
            }
            w.flush()?;
        }
        if !self.checkpoints.is_empty() {
            let cp_dir = dir.join("checkpoints");
            fs::create_dir_all(&cp_dir)?;
            for cp in &self.checkpoints {
                crate::checkpoint::save(&cp_dir.join(format!("{}.json", cp.name)), &cp.checkpoint)?;
            }
        }
        Ok(())
    }
}

/// `<root>/<name>` where the name comes from the config or the file stem.
pub fn run_dir(root: &Path, cfg: &RunConfig, config_path: &Path) -> PathBuf {
    let name = cfg.name.clone().unwrap_or_else(|| {
        config_path
            .file_stem()
            .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned())
    });
    root.join(name)
}
