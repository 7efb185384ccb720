//! Self-test suite behind `modcredit check`: d-separation against the
//! path-enumeration oracle, backprop against finite differences, and GAE
//! against a hand-unrolled recursion.

use modcredit_core::graph::{d_separated_bruteforce, VariableDag};
use modcredit_core::nn::{Cache, Mlp};
use modcredit_core::rl::gae;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Deliberate defects used to show the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Drops the output-layer bias gradient.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Random DAG on `n` nodes: each pair is joined with probability `p`,
/// oriented along a random topological order.
pub fn random_dag(rng: &mut impl Rng, n: usize, p: f64) -> VariableDag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((order[i], order[j]));
            }
        }
    }
    VariableDag::from_edges(n, &edges).expect("edges follow a topological order")
}

/// Chain, fork and collider on three nodes.
pub fn motifs() -> Vec<(&'static str, VariableDag)> {
    let dag = |edges: &[(usize, usize)]| VariableDag::from_edges(3, edges).expect("acyclic motif");
    vec![
        ("chain", dag(&[(0, 1), (1, 2)])),
        ("fork", dag(&[(1, 0), (1, 2)])),
        ("collider", dag(&[(0, 1), (2, 1)])),
    ]
}

/// Compares fast and brute-force d-separation on every singleton pair
/// and every conditioning subset of the remaining nodes. Returns the
/// number of queries, or a description of the first disagreement.
pub fn compare_dsep(dag: &VariableDag) -> Result<usize, String> {
    let ids = dag.ids().to_vec();
    let mut queries = 0;
    for (a, &x) in ids.iter().enumerate() {
        for (b, &y) in ids.iter().enumerate() {
            if a == b {
                continue;
            }
            let rest: Vec<_> = ids.iter().copied().enumerate().filter(|&(i, _)| i != a && i != b).map(|(_, v)| v).collect();
            for mask in 0u32..1 << rest.len() {
                let z: Vec<_> = rest.iter().enumerate().filter(|&(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect();
                let fast = dag.d_separated(&[x], &[y], &z).map_err(|e| e.to_string())?;
                let slow = d_separated_bruteforce(dag, &[x], &[y], &z).map_err(|e| e.to_string())?;
                if fast != slow {
                    return Err(format!("x={a} y={b} z={z:?}: fast {fast}, oracle {slow}"));
                }
                queries += 1;
            }
        }
    }
    Ok(queries)
}

pub fn check_dsep(seeds: u64, max_nodes: usize) -> CheckResult {
    check_dsep_from(0, seeds, max_nodes)
}

/// Motifs plus DAGs drawn from seeds `base..base + seeds`.
pub fn check_dsep_from(base: u64, seeds: u64, max_nodes: usize) -> CheckResult {
    let mut total = 0;
    let mut outcome = Ok(());
    for (name, dag) in motifs() {
        match compare_dsep(&dag) {
            Ok(q) => total += q,
            Err(e) => {
                outcome = Err(format!("{name}: {e}"));
                break;
            }
        }
    }
    if outcome.is_ok() {
        for seed in base..base + seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=max_nodes);
            let p = rng.random_range(0.15..0.6);
            let dag = random_dag(&mut rng, n, p);
            match compare_dsep(&dag) {
                Ok(q) => total += q,
                Err(e) => {
                    outcome = Err(format!("seed {seed}: {e}"));
                    break;
                }
            }
        }
    }
    CheckResult {
        name: "d-separation matches the path oracle".into(),
        passed: outcome.is_ok(),
        detail: match outcome {
            Ok(()) => format!("{total} queries over 3 motifs and {seeds} random DAGs (<= {max_nodes} nodes)"),
            Err(e) => e,
        },
    }
}

/// Worst relative error between backprop and central differences of
/// `<dout, net(x)>` over all parameters.
pub fn gradient_error(net: &Mlp, x: &[f64], dout: &[f64], fault: Option<Fault>) -> f64 {
    let mut cache = Cache::default();
    net.forward(x, &mut cache).expect("input matches the network");
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&mut cache, dout, &mut grads).expect("shapes match");
    if fault == Some(Fault::Backward) {
        let n = grads.len();
        grads[n - net.output_len()..].iter_mut().for_each(|g| *g = 0.0);
    }
    let objective = |n: &Mlp| -> f64 { n.predict(x).expect("shapes match").iter().zip(dout).map(|(o, d)| o * d).sum() };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (i, &g) in grads.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let plus = objective(&probe);
        probe.params_mut()[i] = orig - h;
        let minus = objective(&probe);
        probe.params_mut()[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
    }
    worst
}

/// Input and output widths of every network the learners build for the
/// key-door tasks: monolithic policy, single-logit policy, value, bidder.
pub const NETWORK_SHAPES: [(&str, usize, usize); 4] =
    [("policy", 10, 6), ("factorized-logit", 10, 1), ("value", 10, 1), ("bidder", 10, 1)];

pub fn check_gradients(instances: usize, fault: Option<Fault>) -> CheckResult {
    let mut worst: (f64, &str) = (0.0, "");
    for (k, &(name, input, output)) in NETWORK_SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        for _ in 0..instances {
            let net = Mlp::standard(input, output, &mut rng);
            let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dout: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = gradient_error(&net, &x, &dout, fault);
            if err > worst.0 {
                worst = (err, name);
            }
        }
    }
    CheckResult {
        name: "backprop matches central differences".into(),
        passed: worst.0 < 1e-4,
        detail: format!(
            "worst relative error {:.3e} ({}) over {instances} instances of {} network types, h = 1e-5",
            worst.0,
            worst.1,
            NETWORK_SHAPES.len()
        ),
    }
}

/// Three-step episode, reward only at the end, gamma 0.99, lambda 0.95:
/// once with zero values (advantages 0.95^2 * 0.99^2, 0.95 * 0.99, 1) and
/// once with a nonzero value baseline against the unrolled recursion.
pub fn check_gae() -> CheckResult {
    let (gamma, lambda) = (0.99, 0.95);
    let rewards = [0.0, 0.0, 1.0];
    let dones = [false, false, true];
    let zero = gae(&rewards, &[0.0; 3], &[0.0; 3], &dones, gamma, lambda).unwrap_or_default();
    let mut err = max_err(&zero, &[0.88454025, 0.9405, 1.0]);

    let values = [0.5, 0.6, 0.7];
    let based = gae(&rewards, &values, &[0.6, 0.7, 0.0], &dones, gamma, lambda).unwrap_or_default();
    let d = [gamma * 0.6 - 0.5, gamma * 0.7 - 0.6, 1.0 - 0.7];
    let a2 = d[2];
    let a1 = d[1] + gamma * lambda * a2;
    let a0 = d[0] + gamma * lambda * a1;
    err = err.max(max_err(&based, &[a0, a1, a2]));
    CheckResult {
        name: "GAE matches the unrolled recursion".into(),
        passed: err <= 1e-12,
        detail: format!("advantages {zero:?} and {based:?}, max error {err:.1e}"),
    }
}

fn max_err(got: &[f64], expected: &[f64]) -> f64 {
    if got.len() != expected.len() {
        return f64::INFINITY;
    }
    got.iter().zip(expected).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max)
}

pub fn run_all(fault: Option<Fault>) -> Vec<CheckResult> {
    vec![check_dsep(200, 8), check_gradients(10, fault), check_gae()]
}
