//! Worked examples for each module, checked against independent oracles.

use std::path::Path;

use approx::assert_abs_diff_eq;
use ibmdp::dataset::{toy_generating_tree, toy_task, Dataset, LabelColumn, TOY_TASK_COUNT};
use ibmdp::exec::Execution;
use ibmdp::ibmdp::{
    apply_iga, enumerate_observations, extract_tree, split_threshold, Action, Bound, IbmdpConfig, Observation,
    ObservationSet,
};
use ibmdp::obs_mdp::{monte_carlo_return, LinearSolver, ObservationMdp};
use ibmdp::policy::{DeterministicPolicy, TabularPolicy};
use ibmdp::solvers::{
    ascend, brute_force_best_tree, enumerate_trees, erpi, exact_gradient, optimal_step_size, policy_gradient,
    theorem1_bound, value_iteration, AdvantageNoise, AscentOptions, SolverKind, DEFAULT_ENUMERATION_CAP,
};
use ibmdp::trees::{greedy_baseline, tree_policy, DecisionTree, GreedyOptions, SplitCriterion, ThresholdMode};

fn load(name: &str, label: &str) -> Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    Dataset::load(path, &LabelColumn::parse(label)).unwrap()
}

fn toy_mdp(i: usize, zeta: f64, m: u32) -> (Dataset, ObservationMdp) {
    let data = toy_task(i).unwrap();
    let config = IbmdpConfig::new(&data, zeta, 0.99, 1, m).unwrap();
    let mdp = ObservationMdp::build(&data, &config).unwrap();
    (data, mdp)
}

fn r(n: i64, d: i64) -> Bound {
    Bound::new(n, d)
}

#[test]
fn real_datasets_load_with_expected_shape() {
    let iris = load("iris.csv", "species");
    assert_eq!((iris.len(), iris.feature_count(), iris.class_count()), (150, 4, 3));
    let wine = load("wine.csv", "class");
    assert_eq!((wine.len(), wine.feature_count(), wine.class_count()), (178, 13, 3));
    let root = iris.class_masses(&Observation::root(4)).unwrap();
    assert_eq!(root.count, 150);
    for f in root.fractions {
        assert_abs_diff_eq!(f, 1.0 / 3.0, epsilon = 1e-15);
    }
    for data in [&iris, &wine] {
        assert!(data.rows().flatten().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn toy_half_plane_holds_eight_points() {
    let data = toy_task(0).unwrap();
    let obs = Observation::from_bounds(vec![(r(0, 1), r(1, 2)), (r(0, 1), r(1, 1))]).unwrap();
    assert_eq!(data.class_masses(&obs).unwrap().count, 8);
}

#[test]
fn thresholds_and_refinements_follow_the_worked_sequence() {
    let root = Observation::root(2);
    let iga = |feature| Action::Iga {
        feature,
        fraction_index: 1,
    };
    assert_eq!(split_threshold(&root, iga(1), 1).unwrap(), r(1, 2));
    let low = apply_iga(&root, iga(1), 1, true).unwrap();
    assert_eq!(low.to_string(), "((0,1),(0,1/2))");
    assert_eq!(split_threshold(&low, iga(1), 1).unwrap(), r(1, 4));
    let high = apply_iga(&root, iga(1), 1, false).unwrap();
    assert_eq!(high.to_string(), "((0,1),(1/2,1))");
    let mid = Observation::from_bounds(vec![(r(1, 4), r(3, 4)), (r(0, 1), r(1, 1))]).unwrap();
    assert_eq!(split_threshold(&mid, iga(0), 1).unwrap(), r(1, 2));
    assert!(split_threshold(&root, Action::Base(0), 1).is_err());
}

#[test]
fn enumeration_sizes_respect_the_bound() {
    let data = toy_task(0).unwrap();
    let m0 = enumerate_observations(&IbmdpConfig::new(&data, 0.5, 0.99, 1, 0).unwrap(), &data).unwrap();
    assert_eq!(m0.len(), 1);
    let m2 = enumerate_observations(&IbmdpConfig::new(&data, 0.5, 0.99, 1, 2).unwrap(), &data).unwrap();
    assert!(m2.len() <= 21);
    let wine = load("wine.csv", "class");
    let w = enumerate_observations(&IbmdpConfig::new(&wine, 0.5, 0.99, 1, 2).unwrap(), &wine).unwrap();
    assert!(w.len() <= 26 * 26 + 26 + 1);
}

#[test]
fn observation_mdp_rewards_and_transitions() {
    let (_, mdp) = toy_mdp(0, 0.5, 2);
    let root = ObservationSet::ROOT;
    assert_eq!(mdp.reward(root, 0), 0.0);
    assert_eq!(mdp.reward(root, 1), 0.0);
    for a in 2..4 {
        assert_eq!(mdp.reward(root, a), 0.5);
        let t = mdp.transitions(root, a);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|&(_, p)| p == 0.5));
    }
    for o in 0..mdp.observation_count() {
        for a in 0..mdp.action_count() {
            if mdp.is_legal(o, a) {
                let total: f64 = mdp.transitions(o, a).iter().map(|t| t.1).sum();
                assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn majority_policy_return_is_a_constant_reward_series() {
    let iris = load("iris.csv", "species");
    let config = IbmdpConfig::new(&iris, 0.5, 0.99, 1, 2).unwrap();
    let mdp = ObservationMdp::build(&iris, &config).unwrap();
    let policy = DeterministicPolicy::new(vec![0; mdp.observation_count()]);
    let j = mdp
        .evaluate(&policy.to_probabilities(mdp.action_count()))
        .unwrap()
        .return_j;
    let accuracy = 1.0 / 3.0;
    assert_abs_diff_eq!(j, (2.0 * accuracy - 1.0) / 0.01, epsilon = 1e-9);
}

#[test]
fn depth_two_tree_return_matches_series_summation() {
    let (data, mdp) = toy_mdp(0, 0.5, 2);
    let policy = tree_policy(&toy_generating_tree(0).unwrap(), mdp.observations()).unwrap();
    let j = mdp
        .evaluate(&policy.to_probabilities(mdp.action_count()))
        .unwrap()
        .return_j;
    // Rewards repeat as ζ, ζ, 1; sum the discounted series directly.
    let (mut series, mut discount) = (0.0, 1.0);
    for t in 0..30_000 {
        series += discount * [0.5, 0.5, 1.0][t % 3];
        discount *= 0.99;
    }
    assert_abs_diff_eq!(j, series, epsilon = 1e-9);
    assert_abs_diff_eq!(j, 66.50, epsilon = 5e-3);
    assert_eq!(toy_generating_tree(0).unwrap().accuracy(&data).unwrap(), 1.0);
}

#[test]
fn solvers_agree_on_a_large_observation_set() {
    let iris = load("iris.csv", "species");
    let config = IbmdpConfig::new(&iris, 0.3, 0.99, 1, 3).unwrap();
    let mdp = ObservationMdp::build(&iris, &config).unwrap();
    let mut policy = mdp.uniform_policy();
    for (i, t) in policy.logits_mut().iter_mut().enumerate() {
        *t = ((i * 7919) % 13) as f64 / 5.0;
    }
    let probs = policy.probabilities();
    let structured = mdp.evaluate_with(&probs, LinearSolver::Structured).unwrap();
    let dense = mdp.evaluate_with(&probs, LinearSolver::Dense).unwrap();
    for (a, b) in structured.v.iter().zip(&dense.v) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
    for (a, b) in structured.state_distribution.iter().zip(&dense.state_distribution) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
    assert!(mdp.bellman_residual(&probs, &structured.v) <= 1e-10);
    assert!(structured.state_distribution[0] >= 0.01 - 1e-15);
}

#[test]
fn monte_carlo_matches_the_optimal_toy_policy() {
    let (data, mdp) = toy_mdp(0, 0.5, 2);
    let vi = value_iteration(&mdp, 1e-10).unwrap();
    let probs = vi.policy.to_probabilities(mdp.action_count());
    let mc = monte_carlo_return(&data, mdp.observations(), &probs, 10_000, 1000, 11, Execution::Parallel).unwrap();
    assert!((mc.mean - vi.j).abs() <= 3.0 * mc.standard_error + 0.99f64.powi(1000) / 0.01);
}

#[test]
fn expensive_tests_give_a_stump() {
    for i in 0..TOY_TASK_COUNT {
        let (data, mdp) = toy_mdp(i, -10.0, 2);
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        let tree = extract_tree(&vi.policy, mdp.observations()).unwrap();
        assert_eq!(tree.depth(), 0);
        assert_abs_diff_eq!(vi.j, 0.0, epsilon = 1e-9);
        let brute = brute_force_best_tree(&data, mdp.config(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_abs_diff_eq!(brute.j, 0.0, epsilon = 1e-9);
    }
}

#[test]
fn zero_depth_cap_gives_the_root_majority() {
    let iris = load("iris.csv", "species");
    let mut labels = iris.labels().to_vec();
    labels[0] = 2; // class 2 becomes the strict majority
    let rows: Vec<Vec<f64>> = iris.rows().map(<[f64]>::to_vec).collect();
    let data = Dataset::new(rows, labels).unwrap();
    let config = IbmdpConfig::new(&data, 0.5, 0.99, 1, 0).unwrap();
    let mdp = ObservationMdp::build(&data, &config).unwrap();
    let vi = value_iteration(&mdp, 1e-10).unwrap();
    assert_eq!(vi.policy.actions(), &[2]);
    let brute = brute_force_best_tree(&data, &config, DEFAULT_ENUMERATION_CAP).unwrap();
    assert_eq!(brute.tree, DecisionTree::leaf(2));
}

#[test]
fn first_erpi_iterate_is_uniform() {
    let (_, mdp) = toy_mdp(3, 0.5, 2);
    let report = erpi(&mdp, 1.0, 1).unwrap();
    let uniform = mdp.evaluate_policy(&mdp.uniform_policy()).unwrap().return_j;
    assert_eq!(report.records[0].j, uniform);
    assert_eq!(report.records.len(), 1);
}

#[test]
fn erpi_bound_arithmetic() {
    let (_, mdp) = toy_mdp(0, 0.5, 2);
    assert_eq!(mdp.action_count(), 4);
    let expected = (2.0 * 4f64.ln()).sqrt() * 2.0 / (2.0 * (0.01f64.powi(3) * 1e4).sqrt());
    assert_abs_diff_eq!(theorem1_bound(mdp.config(), 10_000), expected, epsilon = 1e-9);
    assert_abs_diff_eq!(theorem1_bound(mdp.config(), 10_000), 16.65, epsilon = 5e-3);
    assert_abs_diff_eq!(
        theorem1_bound(mdp.config(), 400) / theorem1_bound(mdp.config(), 100),
        0.5,
        epsilon = 1e-12
    );
    let eta = optimal_step_size(mdp.config(), 100);
    assert_abs_diff_eq!(eta, (8.0 * 4f64.ln() * 0.01).sqrt() / (2.0 * 10.0), epsilon = 1e-15);
    // ζ below -1 widens the reward span.
    let wide = IbmdpConfig {
        zeta: -3.0,
        ..*mdp.config()
    };
    assert_abs_diff_eq!(
        theorem1_bound(&wide, 1) / theorem1_bound(mdp.config(), 1),
        2.0,
        epsilon = 1e-12
    );
}

#[test]
fn zero_noise_is_bitwise_noiseless() {
    let (_, mdp) = toy_mdp(1, 0.5, 2);
    for kind in [SolverKind::Erpi, SolverKind::PolicyGradient] {
        let clean = ascend(
            &mdp,
            kind,
            &AscentOptions {
                step_size: 0.7,
                iterations: 40,
                noise: None,
            },
        )
        .unwrap();
        let zero = ascend(
            &mdp,
            kind,
            &AscentOptions {
                step_size: 0.7,
                iterations: 40,
                noise: Some(AdvantageNoise { sigma: 0.0, seed: 9 }),
            },
        )
        .unwrap();
        assert_eq!(clean.records, zero.records);
        assert_eq!(clean.stochastic, zero.stochastic);
        let noisy = ascend(
            &mdp,
            kind,
            &AscentOptions {
                step_size: 0.7,
                iterations: 40,
                noise: Some(AdvantageNoise { sigma: 3.0, seed: 9 }),
            },
        )
        .unwrap();
        // The first record is taken before any (noisy) update.
        assert_eq!(noisy.records[0].j, clean.records[0].j);
        assert_ne!(noisy.records[5].j, clean.records[5].j);
    }
}

#[test]
fn erpi_updates_are_invariant_to_per_observation_logit_shifts() {
    let (_, mdp) = toy_mdp(2, 0.5, 2);
    let base = mdp.uniform_policy();
    let na = mdp.action_count();
    let mut shifted = base.clone();
    for t in &mut shifted.logits_mut()[3 * na..4 * na] {
        *t += 17.0;
    }
    let (pa, pb) = (base.probabilities(), shifted.probabilities());
    for (a, b) in pa.values().iter().zip(pb.values()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }
    let (ea, eb) = (
        mdp.evaluate_policy(&base).unwrap(),
        mdp.evaluate_policy(&shifted).unwrap(),
    );
    assert_abs_diff_eq!(ea.return_j, eb.return_j, epsilon = 1e-12);
}

#[test]
fn policy_gradient_approaches_the_optimum() {
    for i in 0..TOY_TASK_COUNT {
        let (_, mdp) = toy_mdp(i, 0.5, 2);
        let j_star = value_iteration(&mdp, 1e-10).unwrap().j;
        let report = policy_gradient(&mdp, 1.0, 2000).unwrap();
        assert!(j_star - report.best_j().unwrap() < 0.01, "task {i}");
        assert!(report.bound_at_k.is_none());
    }
}

#[test]
fn gradient_vanishes_near_a_deterministic_optimum() {
    let (_, mdp) = toy_mdp(0, 0.5, 2);
    let vi = value_iteration(&mdp, 1e-10).unwrap();
    let norm_at = |scale: f64| {
        let mut logits = vec![0.0; mdp.legal_mask().len()];
        for (o, &a) in vi.policy.actions().iter().enumerate() {
            logits[o * mdp.action_count() + a] = scale;
        }
        let policy = TabularPolicy::from_logits(mdp.action_count(), logits, mdp.legal_mask().to_vec()).unwrap();
        exact_gradient(&mdp, &policy)
            .unwrap()
            .0
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()))
    };
    assert!(norm_at(20.0) < 1e-3 * norm_at(1.0));
}

#[test]
fn brute_force_optimum_is_piecewise_linear_in_zeta() {
    let data = toy_task(0).unwrap();
    let config = IbmdpConfig::new(&data, 0.0, 0.99, 1, 2).unwrap();
    let trees = enumerate_trees(&data, &config, DEFAULT_ENUMERATION_CAP).unwrap();
    let best = |z: f64| trees.iter().map(|t| t.stats.j(z)).fold(f64::NEG_INFINITY, f64::max);
    let zs: Vec<f64> = (0..=40).map(|i| -1.0 + 0.05 * i as f64).collect();
    let values: Vec<f64> = zs.iter().map(|&z| best(z)).collect();
    // Convex (a max of affine functions) and non-decreasing.
    for w in values.windows(3) {
        assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
    }
    for w in values.windows(2) {
        assert!(w[1] >= w[0]);
    }
    // There is a switch from the stump to the depth-2 tree.
    let pick = |z: f64| {
        brute_force_best_tree(
            &data,
            &IbmdpConfig::new(&data, z, 0.99, 1, 2).unwrap(),
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap()
        .tree
        .depth()
    };
    assert_eq!(pick(-1.0), 0);
    assert_eq!(pick(0.5), 2);
}

#[test]
fn extracted_trees_classify_like_the_policy() {
    let wine = load("wine.csv", "class");
    let config = IbmdpConfig::new(&wine, 0.4, 0.99, 1, 3).unwrap();
    let mdp = ObservationMdp::build(&wine, &config).unwrap();
    let policy = value_iteration(&mdp, 1e-10).unwrap().policy;
    let tree = extract_tree(&policy, mdp.observations()).unwrap();
    assert!(tree.node_count() < 1 << (config.max_igas + 1));
    let omega = mdp.observations();
    let actions = config.actions();
    for (i, row) in wine.rows().enumerate() {
        let mut o = ObservationSet::ROOT;
        let class = loop {
            match actions.action(policy.action_index(o)) {
                Action::Base(c) => break c,
                Action::Iga {
                    feature,
                    fraction_index,
                } => {
                    let outcome = &omega.node(o).outcomes[feature * config.p as usize + fraction_index as usize - 1];
                    o = if row[feature] <= outcome.threshold {
                        outcome.low.unwrap()
                    } else {
                        outcome.high.unwrap()
                    };
                }
            }
        };
        assert_eq!(tree.classify(row).unwrap(), class, "row {i}");
    }
}

#[test]
fn greedy_accuracy_never_drops_with_depth() {
    for data in [load("iris.csv", "species"), load("wine.csv", "class")] {
        for mode in [ThresholdMode::DataValues, ThresholdMode::IbmdpGrid { p: 1 }] {
            let mut last = 0.0;
            for depth in 0..5 {
                let tree = greedy_baseline(
                    &data,
                    &GreedyOptions {
                        max_depth: depth,
                        mode,
                        criterion: SplitCriterion::Gini,
                    },
                )
                .unwrap();
                let acc = tree.accuracy(&data).unwrap();
                assert!(acc >= last);
                assert!(tree.depth() <= depth);
                last = acc;
            }
        }
    }
}

#[test]
fn greedy_error_rate_criterion_runs() {
    let iris = load("iris.csv", "species");
    let tree = greedy_baseline(
        &iris,
        &GreedyOptions {
            max_depth: 2,
            mode: ThresholdMode::DataValues,
            criterion: SplitCriterion::ErrorRate,
        },
    )
    .unwrap();
    assert!(tree.accuracy(&iris).unwrap() > 0.9);
}

#[test]
fn embedded_tree_returns_match_the_closed_form() {
    for i in 0..TOY_TASK_COUNT {
        let (data, mdp) = toy_mdp(i, 0.3, 2);
        for t in enumerate_trees(&data, mdp.config(), DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .iter()
            .step_by(7)
        {
            let policy = tree_policy(&t.tree, mdp.observations()).unwrap();
            let j = mdp
                .evaluate(&policy.to_probabilities(mdp.action_count()))
                .unwrap()
                .return_j;
            assert_abs_diff_eq!(j, t.tree.ibmdp_return(&data, 0.3, 0.99), epsilon = 1e-8);
        }
    }
}

#[test]
fn data_value_trees_usually_do_not_embed() {
    let iris = load("iris.csv", "species");
    let config = IbmdpConfig::new(&iris, 0.5, 0.99, 1, 2).unwrap();
    let omega = enumerate_observations(&config, &iris).unwrap();
    let tree = greedy_baseline(
        &iris,
        &GreedyOptions {
            max_depth: 2,
            mode: ThresholdMode::DataValues,
            criterion: SplitCriterion::Gini,
        },
    )
    .unwrap();
    assert!(matches!(
        tree_policy(&tree, &omega),
        Err(ibmdp::Error::NotEmbeddable(_))
    ));
}
