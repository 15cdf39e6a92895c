use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use skeleton_control::distributions::{chi_by_quadrature, ExitTimeDist};
use skeleton_control::dp::{rollout, HistoryView, Policy, RegressionSpec};
use skeleton_control::hedging::*;
use skeleton_control::quadrature::integrate_to_infinity;
use skeleton_control::rng::{stream, Purpose};
use skeleton_control::skeleton::{simulate_path, simulate_skeleton};
use skeleton_control::stats::{norm_cdf, norm_pdf, ValueEstimate};

fn chi2() -> f64 {
    chi_by_quadrature(2)
}

#[test]
fn margrabe_matches_lognormal_monte_carlo() {
    let spec = HedgeSpec::baseline(1, chi2(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (v1, v2) = (spec.sigma1 * spec.sigma1, spec.sigma2 * spec.sigma2);
    let samples: Vec<f64> = (0..10_000_000)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let s1 = 49.0 * (spec.sigma1 * z1 - 0.5 * v1).exp();
            let s2 = 52.0 * (spec.sigma2 * z2 - 0.5 * v2).exp();
            (s1 - s2).max(0.0)
        })
        .collect();
    let mc = ValueEstimate::from_samples(&samples);
    assert!(
        mc.within(margrabe_price(&spec), 3.0),
        "{mc:?} vs {}",
        margrabe_price(&spec)
    );
}

#[test]
fn zero_volatility_assets_stay_constant() {
    let mut spec = HedgeSpec::baseline(2, chi2(), 3);
    spec.sigma1 = 0.0;
    spec.sigma2 = 0.0;
    for i in 0..10 {
        let skel = simulate_path(&spec.skeleton(), spec.steps(), i);
        let (s1, s2) = simulate_hedge_assets(&spec, &skel).unwrap();
        assert!(s1.rows().iter().all(|&x| x == 49.0));
        assert!(s2.rows().iter().all(|&x| x == 52.0));
    }
}

#[test]
fn asset_is_a_martingale_up_to_the_horizon() {
    let spec = HedgeSpec::baseline(2, chi2(), 4);
    let m = spec.steps();
    let at_t: Vec<f64> = (0..20_000)
        .map(|i| {
            let skel = simulate_path(&spec.skeleton(), m, i);
            let (s1, _) = simulate_hedge_assets(&spec, &skel).unwrap();
            s1.value(skel.index_at(spec.horizon).min(m))[0]
        })
        .collect();
    let est = ValueEstimate::from_samples(&at_t);
    assert!(est.within(49.0, 3.0), "{est:?}");
}

/// `E(η¹)² / ε²` for a d=2 skeleton step: half the steps exit on axis 1
/// (`η = ±ε`); otherwise `η` is truncated normal with variance `ε²u`, where
/// `u` has the density `2f(u)S(u)` of the smaller of two exit times.
fn increment_second_moment_d2() -> f64 {
    let dist = ExitTimeDist::default();
    let truncated_var = |u: f64| {
        let z = 1.0 / u.sqrt();
        u * (1.0 - 2.0 * z * norm_pdf(z) / (2.0 * norm_cdf(z) - 1.0))
    };
    let inner = integrate_to_infinity(
        |u| {
            if u <= 0.0 {
                0.0
            } else {
                2.0 * dist.density(u) * dist.survival(u) * truncated_var(u)
            }
        },
        0.0,
        1e-12,
        1e-14,
    );
    0.5 + 0.5 * inner
}

#[test]
fn one_step_variance_matches_increment_moment() {
    let spec = HedgeSpec::baseline(2, chi2(), 5);
    let n = 200_000;
    let first: Vec<f64> = (0..n)
        .map(|i| {
            let skel = simulate_path(&spec.skeleton(), spec.steps(), i);
            simulate_hedge_assets(&spec, &skel).unwrap().0.value(1)[0]
        })
        .collect();
    let mean = first.iter().sum::<f64>() / n as f64;
    let sq: Vec<f64> = first.iter().map(|x| (x - mean).powi(2)).collect();
    let var = ValueEstimate::from_samples(&sq);
    let oracle = (49.0 * spec.sigma1 * spec.epsilon()).powi(2) * increment_second_moment_d2();
    assert!(var.within(oracle, 4.0), "{var:?} vs {oracle}");
}

#[test]
fn premium_is_the_mean_of_the_hedge_residual() {
    let mut spec = HedgeSpec::baseline(1, chi2(), 6);
    spec.n_mc = 5_000;
    let r = solve_hedge_analytic(&spec).unwrap();
    assert_eq!(r.residuals.len(), spec.n_mc);
    let mean = r.residuals.iter().sum::<f64>() / r.residuals.len() as f64;
    assert!((r.c_star.mean - mean).abs() < 1e-12);
    assert_eq!(r.mse, r.c_star.std_err.powi(2));
    assert_eq!(r.floored_paths, 0);

    // replaying the policy forward on the training skeletons gives the same residuals
    let structure = HedgeStructure { spec };
    let m = spec.steps();
    let replayed: Vec<f64> = (0..spec.n_mc)
        .map(|i| {
            let skel = simulate_skeleton(
                &spec.skeleton(),
                m,
                &mut stream(spec.seed, Purpose::Skeleton, i as u64),
            );
            let (path, _) = rollout(&r.policy, &structure, &skel, m).unwrap();
            hedge_claim(&path) - path.terminal()[0]
        })
        .collect();
    let worst = replayed
        .iter()
        .zip(&r.residuals)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    let replayed_mean = replayed.iter().sum::<f64>() / replayed.len() as f64;
    assert!((replayed_mean - r.c_star.mean).abs() < 1e-12);
}

#[test]
fn hedging_reduces_the_spread_of_the_claim() {
    let mut spec = HedgeSpec::baseline(1, chi2(), 7);
    spec.n_mc = 10_000;
    let r = solve_hedge_analytic(&spec).unwrap();
    let var_claim = r.claim.std_err.powi(2) * spec.n_mc as f64;
    assert!(
        r.objective.mean < 0.5 * var_claim,
        "{} vs {var_claim}",
        r.objective.mean
    );
    assert!(r.c_star.std_err < r.claim.std_err);
    for fit in r.policy.fits().iter().flatten() {
        assert_eq!(fit[0].weights.len(), 6);
    }
}

#[test]
fn analytic_ratios_are_zero_after_the_horizon() {
    let mut spec = HedgeSpec::baseline(1, chi2(), 8);
    spec.n_mc = 2_000;
    let r = solve_hedge_analytic(&spec).unwrap();
    let skel = simulate_path(&spec.skeleton(), spec.steps(), 0);
    let states = vec![0.0, 49.0, 52.0];
    let mut view_states = Vec::new();
    for _ in 0..spec.steps() {
        view_states.extend_from_slice(&states);
    }
    let actions = vec![0.0; 2 * spec.steps()];
    for j in 0..spec.steps() {
        let view = HistoryView::new(j, &skel, 3, &view_states, 2, &actions);
        let a = r.policy.act(&view);
        assert!(a.iter().all(|x| x.abs() <= 1.0));
        if view.time() > spec.horizon {
            assert_eq!(a, vec![0.0, 0.0]);
        }
    }
}

#[test]
fn generic_solver_is_bounded_by_the_analytic_policy_and_refines() {
    let mut spec = HedgeSpec::baseline(1, chi2(), 9);
    spec.n_mc = 20_000;
    let analytic = solve_hedge_analytic(&spec).unwrap();
    let coarse = solve_hedge_generic(&spec, 3, &generic_regression(spec.n_mc).unwrap()).unwrap();
    let fine = solve_hedge_generic(&spec, 9, &generic_regression(spec.n_mc).unwrap()).unwrap();
    let at_analytic = hedge_objective(&analytic.policy, &spec, coarse.c, spec.n_mc).unwrap();
    for g in [&coarse, &fine] {
        assert!(
            at_analytic.mean <= g.objective.mean + 3.0 * g.objective.std_err,
            "analytic {at_analytic:?} generic {:?}",
            g.objective
        );
    }
    assert!(
        coarse.objective.mean >= fine.objective.mean - 3.0 * fine.objective.std_err,
        "coarse {:?} fine {:?}",
        coarse.objective,
        fine.objective
    );
}

#[test]
fn zero_volatility_generic_optimum_is_zero_premium() {
    let mut spec = HedgeSpec::baseline(1, chi2(), 10);
    spec.sigma1 = 0.0;
    spec.sigma2 = 0.0;
    spec.n_mc = 500;
    let reg = RegressionSpec::quadratic(spec.n_mc).unwrap();
    let r = solve_hedge_generic(&spec, 3, &reg).unwrap();
    assert_eq!(r.c, 0.0);
    assert_eq!(r.objective_in_sample.mean, 0.0);
    assert_eq!(r.objective.mean, 0.0);
    assert_eq!(margrabe_price(&spec), 0.0);
}

#[test]
fn table_rows_have_the_expected_shape() {
    let mut spec = HedgeSpec::baseline(1, chi2(), 11);
    spec.n_mc = 2_000;
    let r = solve_hedge_analytic(&spec).unwrap();
    let row = TableRow::from_result(1, &r, BASELINE_TRUE_VALUE);
    let mut csv = Vec::new();
    write_table_csv(&mut csv, &[row]).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,result,mse,true_value,difference,pct_error");
    assert_eq!(lines[1].split(',').count(), 6);
    assert!(lines[1].starts_with("1,"));
}
