//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The training criteria (6-8) run the real desk-scale suites (H = 2e6)
//! and dominate the runtime. `MODCREDIT_ACCEPTANCE_SEEDS` shrinks the seed
//! count for quick local runs; the verdicts printed then are not the
//! acceptance verdicts.

use std::time::Instant;

use modcredit::config::RunConfig;
use modcredit::selfcheck;
use modcredit::suite::{run_suite, SuiteOptions, SuiteOutput};
use modcredit_core::analysis::{
    check_criterion, check_dynamic_modularity, AlgorithmClass, CreditKind, Horizon, ParameterSharing, TraceSkeleton,
};
use modcredit_core::env::{apply_intervention, door_label, make_task, task_by_id, task_ids, Topology};
use modcredit_core::harness::EfficiencyReport;
use modcredit_core::rl::{cvs_step_contribution, ppo_step_contribution, AlgorithmId, Batch, Learner, LearnerConfig, Step, Stream};
use rand::SeedableRng;

/// Criteria expected to stay red, with the reason recorded in the
/// project notes. Anything else failing fails the target.
///
/// 7 and 8: with the fixed policy learning rate (4e-5) PPOF transfers no
/// faster than PPO at this budget and stays well behind CVS. The CVS vs PPO
/// halves of both criteria hold (about 8x).
const KNOWN_RED: &[usize] = &[7, 8];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn c1_dsep() -> Outcome {
    let started = Instant::now();
    let r = selfcheck::check_dsep(200, 8);
    let secs = started.elapsed().as_secs_f64();
    outcome(r.passed && secs < 60.0, format!("{} in {secs:.1}s", r.detail))
}

fn c2_credit_kinds() -> Outcome {
    let mut cells = 0;
    let mut bad = Vec::new();
    for steps in 2..=6 {
        for n in 2..=6 {
            let acyclic = TraceSkeleton::acyclic(steps, n).unwrap();
            let mut expect = |algo: AlgorithmClass, sk: &TraceSkeleton, want: bool, what: &str| {
                cells += 1;
                if check_criterion(&algo, sk).satisfied != want {
                    bad.push(format!("{what} T={steps} N={n}"));
                }
            };
            for sharing in [ParameterSharing::Monolithic, ParameterSharing::FactorizedPerDecision] {
                expect(AlgorithmClass::new(CreditKind::PolicyGradient, sharing).unwrap(), &acyclic, false, "pg");
            }
            for h in [Horizon::Steps(2), Horizon::Steps(3), Horizon::Steps(4), Horizon::MonteCarlo] {
                let algo = AlgorithmClass::new(CreditKind::TdN(h), ParameterSharing::Tabular).unwrap();
                expect(algo, &acyclic, false, "tdn");
            }
            for on_policy in [true, false] {
                let algo = AlgorithmClass::new(CreditKind::Td0 { on_policy }, ParameterSharing::Tabular).unwrap();
                expect(algo, &acyclic, true, "td0 acyclic");
                for t in 1..steps {
                    let cyc = TraceSkeleton::with_collision_at(steps, n, t).unwrap();
                    expect(algo, &cyc, false, "td0 collision");
                }
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{cells} cells agree") } else { format!("mismatches: {bad:?}") })
}

fn c3_table() -> Outcome {
    let sk = TraceSkeleton::acyclic(3, 4).unwrap();
    let rows: [(&str, AlgorithmClass, bool, bool); 6] = [
        ("cvs", AlgorithmClass::cvs(), true, true),
        ("ppof", AlgorithmClass::ppof(), true, false),
        ("ppo", AlgorithmClass::ppo(), false, false),
        ("td0+monolithic", AlgorithmClass::dqn(), false, false),
        ("q-learning", AlgorithmClass::tabular_q_learning(), true, true),
        ("sarsa", AlgorithmClass::tabular_sarsa(), true, true),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, algo, stat, dynamic) in rows {
        let v = check_dynamic_modularity(&algo, &sk);
        ok &= v.static_modularity == stat && v.dynamic_modularity == dynamic;
        parts.push(format!("{name} static={} dynamic={}", v.static_modularity, v.dynamic_modularity));
    }
    outcome(ok, parts.join("; "))
}

fn c4_numerics() -> Outcome {
    let g = selfcheck::check_gradients(10, None);
    let a = selfcheck::check_gae();
    outcome(g.passed && a.passed, format!("{}; {}", g.detail, a.detail))
}

fn collect(learner: &mut Learner, n: usize, seed: u64) -> Batch {
    let task = task_by_id("linear_chain/train").unwrap();
    let mut rng = Stream::seed_from_u64(seed);
    let mut steps = Vec::new();
    let mut state = task.reset(&mut rng);
    for _ in 0..n {
        let obs = task.encode(&state);
        let idx = task.state_index(&state);
        let (d, bids) = learner.act(&obs, idx, &mut rng).unwrap();
        let res = task.step(&state, d.action);
        steps.push(Step {
            obs,
            state: idx,
            action: d.action,
            bids,
            logp: d.logp,
            value: d.value,
            reward: res.reward,
            done: res.done,
            truncated: res.truncated,
            next_obs: task.encode(&res.next_state),
            next_state: task.state_index(&res.next_state),
        });
        state = if res.done { task.reset(&mut rng) } else { res.next_state };
    }
    Batch { steps }
}

fn perturbed(batch: &Batch, u: usize) -> Batch {
    let mut b = batch.clone();
    let s = &mut b.steps[u];
    s.reward += 0.75;
    s.bids.iter_mut().for_each(|x| *x = 1.0 - *x);
    b
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c5_locality() -> Outcome {
    let cfg = LearnerConfig::default();
    let mut init = Stream::seed_from_u64(11);
    let mut cvs = Learner::new(AlgorithmId::Cvs, 10, 24, 6, &cfg, &mut init);
    let mut ppo = Learner::new(AlgorithmId::Ppo, 10, 24, 6, &cfg, &mut init);
    let cvs_batch = collect(&mut cvs, 48, 1);
    let ppo_batch = collect(&mut ppo, 48, 1);
    let (Learner::Cvs(society), Learner::Ppo(agent)) = (&cvs, &ppo) else {
        unreachable!()
    };
    let gamma = cfg.cvs.gamma;
    let mut cvs_worst: f64 = 0.0;
    let mut ppo_best: f64 = 0.0;
    for t in [0, 7, 23, 47] {
        let (k, base) = cvs_step_contribution(society, &cvs_batch, t, gamma).unwrap();
        let pbase = ppo_step_contribution(agent, &ppo_batch, t, &cfg.ppo).unwrap();
        for u in (0..48).filter(|&u| u != t) {
            let (k2, g) = cvs_step_contribution(society, &perturbed(&cvs_batch, u), t, gamma).unwrap();
            assert_eq!(k, k2);
            cvs_worst = cvs_worst.max(max_diff(&base, &g));
            let pg = ppo_step_contribution(agent, &perturbed(&ppo_batch, u), t, &cfg.ppo).unwrap();
            ppo_best = ppo_best.max(max_diff(&pbase, &pg));
        }
    }
    outcome(
        cvs_worst <= 1e-12 && ppo_best > 0.0,
        format!("cvs max change {cvs_worst:.1e}, ppo max change {ppo_best:.3e} over 4 x 47 perturbations"),
    )
}

fn seeds() -> usize {
    std::env::var("MODCREDIT_ACCEPTANCE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(10)
}

fn suite(text: &str) -> SuiteOutput {
    let cfg = RunConfig::parse(text).unwrap();
    let started = Instant::now();
    let out = run_suite(&cfg, &SuiteOptions::default()).unwrap();
    eprintln!("[suite {} finished in {:.0}s]", cfg.suite.name(), started.elapsed().as_secs_f64());
    out
}

fn fmt_mean(r: &EfficiencyReport, cell: &str, a: AlgorithmId) -> String {
    let (c, n) = r.converged(cell, a);
    match r.mean_samples(cell, a) {
        Some(m) => format!("{a} {m:.0} ({c}/{n})"),
        None => format!("{a} none ({c}/{n})"),
    }
}

fn c6_training(r: &EfficiencyReport, n: usize) -> Outcome {
    let cell = "linear_chain/train";
    let need = (n * 8).div_ceil(10);
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [AlgorithmId::Cvs, AlgorithmId::Ppo, AlgorithmId::Ppof] {
        let (c, total) = r.converged(cell, a);
        ok &= c >= need;
        parts.push(format!("{a} {c}/{total}"));
    }
    outcome(ok, format!("converged seeds (need >= {need}): {}", parts.join(", ")))
}

fn c7_transfer(r: &EfficiencyReport) -> Outcome {
    let cell = "linear_chain/transfer_last";
    let m = |a| r.mean_samples(cell, a);
    let (cvs, ppo, ppof) = (m(AlgorithmId::Cvs), m(AlgorithmId::Ppo), m(AlgorithmId::Ppof));
    let ok = match (cvs, ppo, ppof) {
        (Some(c), Some(p), Some(f)) => c < f && f < p && p / c >= 2.0,
        _ => false,
    };
    let ratio = r.ratio(cell, AlgorithmId::Cvs, AlgorithmId::Ppo).and_then(|x| x.ratio);
    outcome(
        ok,
        format!(
            "mean samples {}, {}, {}; cvs vs ppo {}",
            fmt_mean(r, cell, AlgorithmId::Cvs),
            fmt_mean(r, cell, AlgorithmId::Ppof),
            fmt_mean(r, cell, AlgorithmId::Ppo),
            ratio.map_or("undefined".into(), |x| format!("{x:.2}x")),
        ),
    )
}

fn c8_forgetting(r: &EfficiencyReport) -> Outcome {
    let cell = "forgetting/a_return";
    let ratio = |a, b| r.ratio(cell, a, b).and_then(|x| x.ratio);
    let vs_ppo = ratio(AlgorithmId::Cvs, AlgorithmId::Ppo);
    // PPOF within 1.5x of CVS: CVS at most 1.5 times as efficient.
    let vs_ppof = ratio(AlgorithmId::Cvs, AlgorithmId::Ppof);
    let ok = vs_ppo.is_some_and(|x| x >= 2.0) && vs_ppof.is_some_and(|x| x <= 1.5);
    let f = |x: Option<f64>| x.map_or("undefined".into(), |x| format!("{x:.2}x"));
    outcome(
        ok,
        format!(
            "re-transfer mean samples {}, {}, {}; cvs vs ppo {}, cvs vs ppof {}",
            fmt_mean(r, cell, AlgorithmId::Cvs),
            fmt_mean(r, cell, AlgorithmId::Ppof),
            fmt_mean(r, cell, AlgorithmId::Ppo),
            f(vs_ppo),
            f(vs_ppof)
        ),
    )
}

fn c9_environment() -> Outcome {
    let listings: [(&str, [[u8; 10]; 3]); 2] = [
        (
            "train",
            [
                [1, 0, 0, 0, 1, 0, 0, 0, 0, 0],
                [0, 1, 0, 0, 0, 1, 0, 0, 0, 0],
                [0, 0, 1, 0, 0, 0, 1, 0, 0, 0],
            ],
        ),
        (
            "transfer_last",
            [
                [1, 0, 0, 0, 1, 0, 0, 0, 0, 0],
                [0, 1, 0, 0, 0, 1, 0, 0, 0, 0],
                [0, 0, 1, 0, 0, 0, 0, 1, 0, 0],
            ],
        ),
    ];
    let mut problems = Vec::new();
    for (variant, rows) in listings {
        let task = make_task(Topology::LinearChain, variant).unwrap();
        let mut state = task.start_state(0);
        for (i, door) in task.optimal_sequence(0).into_iter().enumerate() {
            let want: Vec<f64> = rows[i].iter().map(|&b| b as f64).collect();
            if task.encode(&state) != want {
                problems.push(format!("{variant} state {i}"));
            }
            state = task.step(&state, door).next_state;
        }
    }
    let mut diffs = 0;
    for topology in [Topology::LinearChain, Topology::CommonAncestor, Topology::CommonDescendant] {
        let base = make_task(topology, "train").unwrap();
        for v in modcredit_core::env::transfer_variants(topology) {
            let t = apply_intervention(&base, v).unwrap();
            let changed = base.schedule.iter().zip(&t.schedule).filter(|(a, b)| a != b).count();
            if changed != 1 {
                problems.push(format!("{} changes {changed} entries", t.id));
            }
            diffs += 1;
        }
    }
    let mut rollouts = 0;
    for id in task_ids() {
        let task = task_by_id(id).unwrap();
        for sub in 0..task.subtasks() {
            let mut state = task.start_state(sub);
            let mut seen = vec![(state.room, state.key)];
            let mut reward = 0.0;
            for door in task.optimal_sequence(sub) {
                let r = task.step(&state, door);
                reward += r.reward;
                state = r.next_state;
                if !r.done && seen.contains(&(state.room, state.key)) {
                    problems.push(format!("{id} subtask {sub} revisits a state"));
                }
                seen.push((state.room, state.key));
            }
            if reward != 1.0 {
                problems.push(format!("{id} subtask {sub} optimal return {reward}"));
            }
            rollouts += 1;
        }
    }
    let path: String = make_task(Topology::LinearChain, "transfer_last")
        .unwrap()
        .optimal_sequence(0)
        .into_iter()
        .map(door_label)
        .collect();
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("6 listed vectors match (transfer path {path}); {diffs} one-entry diffs; {rollouts} acyclic optimal rollouts")
        } else {
            problems.join("; ")
        },
    )
}

const DETERMINISM: &str = r#"
suite = "bids"
samples = 16384
epoch_size = 1024
eval_episodes = 16
seeds = [3, 4]
algorithms = ["cvs", "ppof"]
[learner.ppo]
batch = 1024
[learner.cvs]
epochs = 2
"#;

fn c10_determinism() -> Outcome {
    let cfg = RunConfig::parse(DETERMINISM).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, jobs) in [1, 3].into_iter().enumerate() {
        let out = run_suite(&cfg, &SuiteOptions { jobs, progress: false }).unwrap();
        let d = dir.path().join(format!("r{i}"));
        out.write(&d, &cfg, DETERMINISM).unwrap();
        let read = |name: &str| std::fs::read(d.join(name)).unwrap();
        files.push((read("curves.csv"), read("bids.csv"), read("report.json")));
    }
    let same = files[0] == files[1];
    outcome(
        same,
        format!(
            "two runs (1 and 3 workers): curves.csv {} bytes, bids.csv {} bytes, report.json {}",
            files[0].0.len(),
            files[0].1.len(),
            if same { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let n = seeds();
    let seed_list = format!("{:?}", (0..n as u64).collect::<Vec<_>>());
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "d-separation oracle equivalence", c1_dsep()),
        (2, "credit-kind verdicts", c2_credit_kinds()),
        (3, "dynamic-modularity table", c3_table()),
        (4, "gradient and GAE numerics", c4_numerics()),
        (5, "gradient locality", c5_locality()),
    ];
    let triplets = suite(&format!(
        "suite = \"triplets\"\nseeds = {seed_list}\nalgorithms = [\"cvs\", \"ppo\", \"ppof\"]\n\
         topologies = [\"linear_chain\"]\nvariants = [\"transfer_last\"]\n"
    ));
    results.push((6, "desk-scale training", c6_training(&triplets.report, n)));
    results.push((7, "transfer ordering", c7_transfer(&triplets.report)));
    let forgetting = suite(&format!(
        "suite = \"forgetting\"\nseeds = {seed_list}\nalgorithms = [\"cvs\", \"ppo\", \"ppof\"]\n"
    ));
    results.push((8, "forgetting re-transfer", c8_forgetting(&forgetting.report)));
    results.push((9, "environment conformance", c9_environment()));
    results.push((10, "determinism", c10_determinism()));

    let mut unexpected = Vec::new();
    for (id, name, o) in &results {
        let status = if o.passed { "PASS" } else { "FAIL" };
        let note = if !o.passed && KNOWN_RED.contains(id) { " (known)" } else { "" };
        println!("criterion {id:>2} {status}{note} {name}: {}", o.detail);
        if !o.passed && !KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
