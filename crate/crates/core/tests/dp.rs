use rand::Rng;
use skeleton_control::dp::*;
use skeleton_control::rng::{stream, Purpose};
use skeleton_control::skeleton::{simulate_path, SkeletonConfig, SkeletonPath};
use skeleton_control::structures::*;
use skeleton_control::Error;
use std::sync::Arc;

/// State = the most recent action.
struct ActionRecorder {
    r: usize,
}

impl ControlledStructure for ActionRecorder {
    fn state_dim(&self) -> usize {
        self.r
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.r]
    }
    fn step(
        &self,
        _: usize,
        _: &SkeletonPath,
        _: &Driver,
        _: &StepContext<'_>,
        a: &[f64],
        out: &mut [f64],
    ) {
        out.copy_from_slice(a);
    }
}

fn one_step_config(seed: u64) -> SkeletonConfig {
    // ε = 1/2, χ = 1, T = 1/4 ⇒ e(k,T) = 1
    let cfg = SkeletonConfig::dyadic(1, 1, 0.25, 1.0, seed).unwrap();
    assert_eq!(cfg.steps(), 1);
    cfg
}

fn tree_config(seed: u64) -> SkeletonConfig {
    // ε = 1/2, χ = 1, T = 1/2 ⇒ e(k,T) = 2
    let cfg = SkeletonConfig::dyadic(1, 1, 0.5, 1.0, seed).unwrap();
    assert_eq!(cfg.steps(), 2);
    cfg
}

#[test]
fn one_step_linear_payoff_picks_the_maximizing_corner() {
    let grid = ActionSpace::new(2, 1.5, 3).unwrap().grid();
    let payoff = |p: &StatePath| 2.0 * p.terminal()[0] - 0.5 * p.terminal()[1];
    let sol = backward_solve(
        &ActionRecorder { r: 2 },
        &payoff,
        &grid,
        &RegressionSpec::quadratic(900).unwrap(),
        &one_step_config(1),
    )
    .unwrap();
    assert_eq!(sol.v0.mean, 2.0 * 1.5 + 0.5 * 1.5);
    assert_eq!(sol.v0.std_err, 0.0);
    let skel = simulate_path(&one_step_config(1), 1, 0);
    let view = HistoryView::new(0, &skel, 2, &[0.0, 0.0], 2, &[]);
    assert_eq!(sol.policy.act(&view), vec![1.5, -1.5]);
}

#[test]
fn one_step_quadratic_matches_the_projected_vertex() {
    let grid = ActionSpace::new(1, 1.0, 11).unwrap().grid();
    let vertex: f64 = 0.37;
    let payoff = move |p: &StatePath| -(p.terminal()[0] - vertex).powi(2);
    let sol = backward_solve(
        &ActionRecorder { r: 1 },
        &payoff,
        &grid,
        &RegressionSpec::quadratic(1100).unwrap(),
        &one_step_config(2),
    )
    .unwrap();
    let nearest = grid
        .points()
        .iter()
        .map(|a| a[0])
        .min_by(|a, b| (a - vertex).abs().partial_cmp(&(b - vertex).abs()).unwrap())
        .unwrap();
    assert!((nearest - 0.4).abs() < 1e-12);
    assert!((sol.v0.mean + (nearest - vertex).powi(2)).abs() < 1e-12);
    let skel = simulate_path(&one_step_config(2), 1, 0);
    let view = HistoryView::new(0, &skel, 1, &[0.0], 1, &[]);
    assert!((sol.policy.act(&view)[0] - nearest).abs() < 1e-12);
}

#[test]
fn two_step_tree_matches_enumeration() {
    let tree = SignTree::default();
    let exact = tree.enumerate();
    let grid = ActionSpace::new(1, 1.0, 2).unwrap().grid();
    let payoff = |p: &StatePath| tree.payoff(p);
    let sol = backward_solve(
        &tree,
        &payoff,
        &grid,
        &RegressionSpec::quadratic(20_000).unwrap(),
        &tree_config(3),
    )
    .unwrap();
    assert!(sol.v0.within(exact, 3.0), "V0 {:?} vs {exact}", sol.v0);

    let policy = extract_epsilon_policy(&sol.value_functions, 0.0).unwrap();
    let value = evaluate_policy(&policy, &tree, &payoff, &tree_config(4), 20_000).unwrap();
    assert!(value.within(exact, 3.0), "policy {value:?} vs {exact}");
    assert!(value.mean <= sol.v0.mean + 2.0 * (sol.v0.std_err + value.std_err));

    let again = evaluate_policy(&policy, &tree, &payoff, &tree_config(5), 20_000).unwrap();
    assert!(
        (again.mean - value.mean).abs()
            < 4.0 * (value.std_err.powi(2) + again.std_err.powi(2)).sqrt()
    );
}

#[test]
fn huge_budget_selects_the_lexicographically_largest_action() {
    let tree = SignTree::default();
    let grid = ActionSpace::new(1, 1.0, 5).unwrap().grid();
    let payoff = |p: &StatePath| tree.payoff(p);
    let sol = backward_solve(
        &tree,
        &payoff,
        &grid,
        &RegressionSpec::quadratic(2_000).unwrap(),
        &tree_config(6),
    )
    .unwrap();
    let policy = extract_epsilon_policy(&sol.value_functions, 1e9).unwrap();
    assert_eq!(policy.tolerance(), 1e9 / 2.0);
    for i in 0..20 {
        let skel = simulate_path(&tree_config(6), 2, i);
        let (_, actions) = rollout(&policy, &tree, &skel, 2).unwrap();
        assert!(actions.iter().all(|a| a == &vec![1.0]));
    }
}

#[test]
fn one_step_dp_equals_direct_grid_maximization() {
    let cfg = SkeletonConfig::dyadic(1, 1, 0.25, 1.0, 8).unwrap();
    let coef = ControlledDrift {
        x0: vec![1.0],
        sigma: 0.5,
        noise_dim: 1,
    };
    let structure = EulerSde::new(coef);
    let grid = ActionSpace::new(1, 2.0, 7).unwrap().grid();
    let payoff = |p: &StatePath| -(p.terminal()[0] - 1.3).powi(2);
    let n = 3_000;
    let sol = backward_solve(
        &structure,
        &payoff,
        &grid,
        &RegressionSpec::quadratic(n).unwrap(),
        &cfg,
    )
    .unwrap();

    let mut cells = vec![Vec::new(); grid.len()];
    for i in 0..n {
        let skel = skeleton_control::skeleton::simulate_skeleton(
            &cfg,
            1,
            &mut stream(8, Purpose::Skeleton, i as u64),
        );
        let g = stream(8, Purpose::Exploration, i as u64).random_range(0..grid.len());
        let path = evaluate(&structure, &skel, &[grid.get(g).to_vec()], 1, 0).unwrap();
        cells[g].push(payoff(&path));
    }
    let direct = cells
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(sol.v0.mean, direct);
}

#[test]
fn adding_a_dominated_action_does_not_lower_v0() {
    let tree = SignTree::default();
    let payoff = |p: &StatePath| tree.payoff(p);
    let spec = RegressionSpec::quadratic(20_000).unwrap();
    let small = ActionGrid::from_points(1.0, vec![vec![-1.0], vec![1.0]]).unwrap();
    let large = ActionGrid::from_points(1.0, vec![vec![-1.0], vec![-0.5], vec![1.0]]).unwrap();
    let a = backward_solve(&tree, &payoff, &small, &spec, &tree_config(9)).unwrap();
    let b = backward_solve(&tree, &payoff, &large, &spec, &tree_config(9)).unwrap();
    assert!(b.v0.mean - a.v0.mean >= -3.0 * (a.v0.std_err + b.v0.std_err));
}

#[test]
fn policy_rules_ignore_the_future() {
    let cfg = SkeletonConfig::dyadic(2, 2, 0.5, 0.6, 10).unwrap();
    let coef = ControlledDrift {
        x0: vec![0.0, 0.0],
        sigma: 1.0,
        noise_dim: 2,
    };
    let structure = EulerSde::new(coef);
    let grid = ActionSpace::new(2, 1.0, 3).unwrap().grid();
    let payoff = |p: &StatePath| -p.terminal().iter().map(|x| (x - 0.2).powi(2)).sum::<f64>();
    let sol = backward_solve(
        &structure,
        &payoff,
        &grid,
        &RegressionSpec::quadratic(4_000).unwrap(),
        &cfg,
    )
    .unwrap();
    let m = cfg.steps();
    for i in 0..20u64 {
        let a = simulate_path(&cfg, m, i);
        let b = simulate_path(&cfg, m, 1000 + i);
        let (path_a, acts_a) = rollout(&sol.policy, &structure, &a, m).unwrap();
        for j in 0..m {
            // splice: b's history only agrees with a's up to step j
            let deltas: Vec<f64> = a.delta_times()[..j]
                .iter()
                .chain(&b.delta_times()[j..])
                .cloned()
                .collect();
            let incs: Vec<f64> = a.increments_flat()[..2 * j]
                .iter()
                .chain(&b.increments_flat()[2 * j..])
                .cloned()
                .collect();
            let spliced = SkeletonPath::from_parts(2, a.epsilon_k(), deltas, incs).unwrap();
            let mut states = path_a.rows()[..2 * (j + 1)].to_vec();
            states.extend(std::iter::repeat_n(f64::NAN, 2 * (m - j)));
            let mut flat: Vec<f64> = acts_a[..j].concat();
            flat.extend(std::iter::repeat_n(f64::NAN, 2 * (m - j)));
            let view = HistoryView::new(j, &spliced, 2, &states, 2, &flat);
            assert_eq!(sol.policy.act(&view), acts_a[j], "path {i} step {j}");
        }
    }
}

#[test]
fn constant_policy_on_a_frozen_structure_is_exact() {
    let cfg = SkeletonConfig::dyadic(1, 2, 1.0, 1.0, 11).unwrap();
    let structure = EulerSde::new(ZeroCoefficients {
        x0: vec![2.5],
        noise_dim: 1,
    });
    let policy = ConstantPolicy {
        action: vec![0.3],
        steps: cfg.steps(),
    };
    let v = evaluate_policy(
        &policy,
        &structure,
        &|p: &StatePath| p.terminal()[0],
        &cfg,
        500,
    )
    .unwrap();
    assert_eq!(v.mean, 2.5);
    assert_eq!(v.std_err, 0.0);

    let short = ConstantPolicy {
        action: vec![0.3],
        steps: 1,
    };
    assert!(evaluate_policy(
        &short,
        &structure,
        &|p: &StatePath| p.terminal()[0],
        &cfg,
        5
    )
    .is_err());
}

#[test]
fn non_finite_payoffs_name_the_path() {
    let tree = SignTree::default();
    let grid = ActionSpace::new(1, 1.0, 2).unwrap().grid();
    let payoff = |p: &StatePath| if p.terminal()[1] > 0.0 { f64::NAN } else { 0.0 };
    let err = backward_solve(
        &tree,
        &payoff,
        &grid,
        &RegressionSpec::quadratic(100).unwrap(),
        &tree_config(12),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NonFinitePayoff { .. }), "{err}");
}

#[test]
fn policy_text_round_trip() {
    let tree = SignTree::default();
    let grid = ActionSpace::new(1, 1.0, 3).unwrap().grid();
    let payoff = |p: &StatePath| tree.payoff(p);
    let sol = backward_solve(
        &tree,
        &payoff,
        &grid,
        &RegressionSpec::quadratic(3_000).unwrap(),
        &tree_config(13),
    )
    .unwrap();
    let policy = extract_epsilon_policy(&sol.value_functions, 0.01).unwrap();
    let mut text = Vec::new();
    policy.write_text(&mut text).unwrap();
    let back = GridPolicy::read_text(text.as_slice()).unwrap();
    let mut again = Vec::new();
    back.write_text(&mut again).unwrap();
    assert_eq!(text, again);
    assert_eq!(back.epsilon(), 0.01);
    for i in 0..20 {
        let skel = simulate_path(&tree_config(13), 2, i);
        assert_eq!(
            rollout(&policy, &tree, &skel, 2).unwrap().1,
            rollout(&back, &tree, &skel, 2).unwrap().1
        );
    }

    let mut csv = Vec::new();
    sol.value_functions.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    let broken = String::from_utf8(text)
        .unwrap()
        .replace("fit 1 2", "fit 1 7");
    assert!(matches!(
        GridPolicy::read_text(broken.as_bytes()),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn feature_maps_have_declared_dimensions() {
    let skel = simulate_path(&tree_config(0), 2, 0);
    let states = [0.5, -0.5, 1.0, 2.0, 3.0, 4.0];
    let actions = [0.25, 0.75];
    for name in ["quadratic", "linear", "quadratic-state", "linear-state"] {
        let fmap = feature_registry(name).unwrap();
        for j in 0..2 {
            let view = HistoryView::new(j, &skel, 2, &states, 1, &actions);
            let mut phi = Vec::new();
            fmap.features(&view, None, &mut phi);
            assert_eq!(phi.len(), fmap.dim(2, 1, false), "{name}");
            fmap.features(&view, Some(&[0.5]), &mut phi);
            assert_eq!(phi.len(), fmap.dim(2, 1, true), "{name}");
        }
    }
    assert!(feature_registry("cubic").is_err());
    let custom: Arc<dyn FeatureMap> = Arc::new(Polynomial::new("mine", 1, Inputs::StateTime));
    assert_eq!(custom.dim(3, 2, false), 5);
    assert_eq!(custom.dim(3, 2, true), 7);
}

#[test]
fn joint_regression_recovers_a_quadratic_in_the_action() {
    let grid = ActionSpace::new(1, 1.0, 11).unwrap().grid();
    let payoff = |p: &StatePath| -(p.terminal()[0] - 0.37).powi(2);
    let spec = RegressionSpec::quadratic(500).unwrap().joint(true);
    let sol = backward_solve(
        &ActionRecorder { r: 1 },
        &payoff,
        &grid,
        &spec,
        &one_step_config(2),
    )
    .unwrap();
    assert!((sol.v0.mean + 0.03f64.powi(2)).abs() < 1e-9, "{:?}", sol.v0);
    assert_eq!(sol.value_functions.fits(0).len(), 1);
    let skel = simulate_path(&one_step_config(2), 1, 0);
    let view = HistoryView::new(0, &skel, 1, &[0.0], 1, &[]);
    assert!((sol.policy.act(&view)[0] - 0.4).abs() < 1e-12);
}

#[test]
fn joint_tree_policy_round_trips() {
    let tree = SignTree::default();
    let grid = ActionSpace::new(1, 1.0, 2).unwrap().grid();
    let payoff = |p: &StatePath| tree.payoff(p);
    let spec = RegressionSpec::quadratic(4_000).unwrap().joint(true);
    let sol = backward_solve(&tree, &payoff, &grid, &spec, &tree_config(21)).unwrap();
    let mut text = Vec::new();
    sol.policy.write_text(&mut text).unwrap();
    let back = GridPolicy::read_text(text.as_slice()).unwrap();
    assert!(back.value_functions().joint());
    for i in 0..20 {
        let skel = simulate_path(&tree_config(21), 2, i);
        assert_eq!(
            rollout(&sol.policy, &tree, &skel, 2).unwrap().1,
            rollout(&back, &tree, &skel, 2).unwrap().1
        );
    }
    let mut csv = Vec::new();
    sol.value_functions.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2);
}
