use modcredit_core::analysis::{
    build_acml, check_criterion, check_dynamic_modularity, AlgorithmClass, CreditKind, Horizon, ParameterSharing,
    TraceSkeleton,
};
use modcredit_core::graph::{d_separated_bruteforce, path_is_open, NodeId, VariableDag};
use proptest::prelude::*;

/// Node count, edges along a topological order given by `perm`.
fn dag_strategy() -> impl Strategy<Value = VariableDag> {
    (2usize..=8).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), pairs))
            .prop_map(|(n, perm, mask)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if mask[k] {
                            edges.push((perm[i], perm[j]));
                        }
                        k += 1;
                    }
                }
                VariableDag::from_edges(n, &edges).unwrap()
            })
    })
}

/// Disjoint X, Y (non-empty) and Z from a per-node role assignment.
fn split(ids: &[NodeId], roles: &[u8]) -> Option<(Vec<NodeId>, Vec<NodeId>, Vec<NodeId>)> {
    let pick = |r: u8| ids.iter().zip(roles).filter(|(_, &x)| x == r).map(|(&id, _)| id).collect::<Vec<_>>();
    let (x, y, z) = (pick(0), pick(1), pick(2));
    (!x.is_empty() && !y.is_empty()).then_some((x, y, z))
}

fn class_strategy() -> impl Strategy<Value = AlgorithmClass> {
    let kind = prop_oneof![
        Just(CreditKind::PolicyGradient),
        (2u32..5).prop_map(|n| CreditKind::TdN(Horizon::Steps(n))),
        Just(CreditKind::TdN(Horizon::MonteCarlo)),
        any::<bool>().prop_map(|on_policy| CreditKind::Td0 { on_policy }),
    ];
    let sharing = prop_oneof![
        Just(ParameterSharing::Monolithic),
        Just(ParameterSharing::FactorizedPerDecision),
        Just(ParameterSharing::Tabular),
    ];
    (kind, sharing).prop_map(|(k, s)| AlgorithmClass::new(k, s).unwrap())
}

/// States drawn from a small pool so that collisions happen.
fn skeleton_strategy() -> impl Strategy<Value = TraceSkeleton> {
    (1usize..=4, 2usize..=4).prop_flat_map(|(steps, n)| {
        (
            prop::collection::vec(0u64..4, steps + 1),
            prop::collection::vec(0..n, steps),
            Just(n),
        )
            .prop_map(|(states, selected, n)| TraceSkeleton::new(states, selected, n).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dsep_matches_oracle_on_set_queries(dag in dag_strategy(), roles in prop::collection::vec(0u8..4, 8)) {
        let ids = dag.ids().to_vec();
        if let Some((x, y, z)) = split(&ids, &roles[..ids.len()]) {
            prop_assert_eq!(dag.d_separated(&x, &y, &z).unwrap(), d_separated_bruteforce(&dag, &x, &y, &z).unwrap());
        }
    }

    #[test]
    fn dsep_is_symmetric(dag in dag_strategy(), roles in prop::collection::vec(0u8..4, 8)) {
        let ids = dag.ids().to_vec();
        if let Some((x, y, z)) = split(&ids, &roles[..ids.len()]) {
            prop_assert_eq!(dag.d_separated(&x, &y, &z).unwrap(), dag.d_separated(&y, &x, &z).unwrap());
        }
    }

    #[test]
    fn open_paths_are_open(dag in dag_strategy(), roles in prop::collection::vec(0u8..4, 8)) {
        let ids = dag.ids().to_vec();
        if let Some((x, y, z)) = split(&ids, &roles[..ids.len()]) {
            let path = dag.first_open_path(x[0], y[0], &z).unwrap();
            let separated = dag.d_separated(&x[..1], &y[..1], &z).unwrap();
            prop_assert_eq!(path.is_none(), separated);
            if let Some(p) = path {
                prop_assert!(path_is_open(&dag, &p, &z).unwrap());
            }
        }
    }

    #[test]
    fn verdict_is_consistent(algo in class_strategy(), sk in skeleton_strategy()) {
        let v = check_dynamic_modularity(&algo, &sk);
        prop_assert_eq!(v.dynamic_modularity, v.criterion_satisfied && v.static_modularity);
        prop_assert_eq!(v.witness.is_some(), !v.criterion_satisfied);
    }

    #[test]
    fn verdict_survives_relabeling(
        algo in class_strategy(),
        sk in skeleton_strategy(),
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        offset in 10u64..1000,
    ) {
        let n = sk.decisions();
        // Permutation of 0..n derived from a permutation of 0..4.
        let dperm: Vec<usize> = perm.iter().copied().filter(|&d| d < n).collect();
        let states: Vec<u64> = sk.states().iter().map(|s| s * 7 + offset).collect();
        let selected: Vec<usize> = sk.selected().iter().map(|&d| dperm[d]).collect();
        let relabeled = TraceSkeleton::new(states, selected, n).unwrap();
        let a = check_dynamic_modularity(&algo, &sk);
        let b = check_dynamic_modularity(&algo, &relabeled);
        prop_assert_eq!(
            (a.criterion_satisfied, a.static_modularity, a.dynamic_modularity, a.cyclic_trace),
            (b.criterion_satisfied, b.static_modularity, b.dynamic_modularity, b.cyclic_trace)
        );
    }

    #[test]
    fn witnesses_are_open_in_the_acml(algo in class_strategy(), sk in skeleton_strategy()) {
        let r = check_criterion(&algo, &sk);
        if let Some(labels) = r.witness {
            let acml = build_acml(&algo, &sk);
            let dag = acml.graph.to_variable_dag();
            let path: Vec<NodeId> = labels.iter().map(|l| acml.graph.find(l).unwrap()).collect();
            prop_assert!(path_is_open(&dag, &path, &acml.conditioning).unwrap());
            prop_assert!(acml.gradients.contains(&path[0]));
            prop_assert!(acml.gradients.contains(path.last().unwrap()));
        }
    }
}

#[test]
fn criterion_does_not_depend_on_decision_count() {
    let classes = [
        AlgorithmClass::ppo(),
        AlgorithmClass::ppof(),
        AlgorithmClass::cvs(),
        AlgorithmClass::tabular_q_learning(),
        AlgorithmClass::new(CreditKind::TdN(Horizon::Steps(3)), ParameterSharing::Tabular).unwrap(),
    ];
    for algo in classes {
        for steps in 2..=6 {
            let base = check_criterion(&algo, &TraceSkeleton::acyclic(steps, 2).unwrap()).satisfied;
            for n in 3..=6 {
                assert_eq!(check_criterion(&algo, &TraceSkeleton::acyclic(steps, n).unwrap()).satisfied, base, "{algo} T={steps} N={n}");
            }
        }
    }
}

#[test]
fn one_collision_flips_td0() {
    for steps in 2..=6 {
        for t in 1..steps {
            let acyclic = TraceSkeleton::acyclic(steps, 3).unwrap();
            let hit = TraceSkeleton::with_collision_at(steps, 3, t).unwrap();
            assert!(check_criterion(&AlgorithmClass::cvs(), &acyclic).satisfied);
            assert!(!check_criterion(&AlgorithmClass::cvs(), &hit).satisfied, "T={steps} t={t}");
        }
    }
}
