use crate::config::{ChiArgs, HedgeArgs, RatesArgs, SampleArgs, SolveArgs};
use crate::output::Run;
use anyhow::{bail, Context, Result};
use serde_json::json;
use skeleton_control::distributions::estimate_chi;
use skeleton_control::dp::{
    backward_solve, evaluate_policy, extract_epsilon_policy, feature_registry, ActionSpace,
    RegressionSpec, SignTree,
};
use skeleton_control::hedging::{
    generic_regression, hedge_objective, solve_hedge_analytic, solve_hedge_generic,
    write_table_csv, HedgeSpec, TableRow,
};
use skeleton_control::io::{write_skeleton_batch, ChiTable};
use skeleton_control::rng::{stream, Purpose};
use skeleton_control::skeleton::{e_steps, horizon_gap_stats, simulate_batch, SkeletonConfig};
use skeleton_control::stats::linear_fit;
use skeleton_control::structures::{
    coefficient_registry, geometric_strong_error, ControlledStructure, EulerSde, Geometric,
    StatePath,
};
use skeleton_control::ValueEstimate;

pub struct Setup {
    pub seed: u64,
    pub chi: ChiTable,
    pub dry_run: bool,
}

impl Setup {
    /// `χ_1 = E τ = 1` exactly; other dimensions come from the table.
    pub fn chi(&self, d: usize) -> Result<f64> {
        if d == 1 {
            return Ok(1.0);
        }
        Ok(self.chi.get(d)?.estimate)
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("field `{name}`: must be positive, got {v}");
    }
    Ok(v)
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v < min {
        bail!("field `{name}`: must be at least {min}, got {v}");
    }
    Ok(v)
}

fn dry(lines: &[(&str, String)]) {
    for (k, v) in lines {
        println!("{k} = {v}");
    }
}

pub fn estimate_chi_cmd(ctx: &Setup, a: &mut ChiArgs, run: Option<&mut Run>) -> Result<()> {
    let d = at_least("d", *a.d.get_or_insert(2), 1)?;
    let n = at_least("n", *a.n.get_or_insert(1_000_000), 2)?;
    let fixture = ctx.chi.get(d).ok();
    if ctx.dry_run {
        dry(&[
            ("d", d.to_string()),
            ("samples", n.to_string()),
            ("work", format!("{} exit-time draws", n * d)),
        ]);
        return Ok(());
    }
    let run = run.expect("run present unless dry");
    run.resolved(&*a)?;
    let est = estimate_chi(d, n, &mut stream(ctx.seed, Purpose::Sampling, d as u64));
    let (f_est, f_se, z) = match fixture {
        Some(f) => {
            let z = (est.mean - f.estimate) / (est.std_err.powi(2) + f.std_err.powi(2)).sqrt();
            (
                f.estimate.to_string(),
                f.std_err.to_string(),
                format!("{z:.4}"),
            )
        }
        None => (String::new(), String::new(), String::new()),
    };
    println!(
        "chi_{d} = {:.6} ± {:.6} (n = {n}, fixture {f_est}, z = {z})",
        est.mean, est.std_err
    );
    run.csv(
        "chi.csv",
        "d,estimate,std_err,n_samples,fixture,fixture_std_err,z",
        &[format!(
            "{d},{},{},{n},{f_est},{f_se},{z}",
            est.mean, est.std_err
        )],
    )?;
    run.summary.insert("estimate".into(), json!(est.mean));
    run.summary.insert("std_err".into(), json!(est.std_err));
    Ok(())
}

pub fn sample_skeleton_cmd(ctx: &Setup, a: &mut SampleArgs, run: Option<&mut Run>) -> Result<()> {
    let d = at_least("d", *a.d.get_or_insert(1), 1)?;
    let k = *a.k.get_or_insert(3);
    let horizon = positive("horizon", *a.horizon.get_or_insert(1.0))?;
    let n_paths = at_least("n-paths", *a.n_paths.get_or_insert(1000), 1)?;
    let format = a.format.get_or_insert_with(|| "bin".into()).clone();
    if format != "bin" && format != "csv" {
        bail!("field `format`: expected `bin` or `csv`, got `{format}`");
    }
    let cfg = SkeletonConfig::dyadic(d, k, horizon, ctx.chi(d)?, ctx.seed)?;
    let m = cfg.steps();
    if ctx.dry_run {
        dry(&[
            ("e(k,T)", m.to_string()),
            ("paths", n_paths.to_string()),
            ("work", format!("{} skeleton steps", m * n_paths)),
        ]);
        return Ok(());
    }
    let run = run.expect("run present unless dry");
    run.resolved(&*a)?;
    let paths = simulate_batch(&cfg, m, n_paths);
    if format == "bin" {
        let mut buf = Vec::new();
        write_skeleton_batch(&mut buf, &paths)?;
        run.bytes("skeleton.bin", &buf)?;
    } else {
        let header = std::iter::once("path,step,time,delta_time".to_string())
            .chain((0..d).map(|j| format!("eta{j}")))
            .collect::<Vec<_>>()
            .join(",");
        let mut rows = Vec::with_capacity(n_paths * m);
        for (i, p) in paths.iter().enumerate() {
            for q in 1..=m {
                let mut row = format!("{i},{q},{},{}", p.times()[q], p.delta_time(q));
                for x in p.increment(q) {
                    row.push_str(&format!(",{x}"));
                }
                rows.push(row);
            }
        }
        run.csv("skeleton.csv", &header, &rows)?;
    }
    let ends: Vec<f64> = paths.iter().map(|p| p.times()[m]).collect();
    let end = ValueEstimate::from_samples(&ends);
    println!(
        "{n_paths} paths × {m} steps, mean T_e = {:.6} ± {:.6}",
        end.mean, end.std_err
    );
    run.summary.insert("steps".into(), json!(m));
    run.summary
        .insert("mean_terminal_time".into(), json!(end.mean));
    Ok(())
}

pub fn solve_cmd(ctx: &Setup, a: &mut SolveArgs, run: Option<&mut Run>) -> Result<()> {
    let problem = a.problem.get_or_insert_with(|| "tree".into()).clone();
    let tree = match problem.as_str() {
        "tree" => true,
        "sde" => false,
        other => bail!("field `problem`: expected `tree` or `sde`, got `{other}`"),
    };
    let k = *a.k.get_or_insert(if tree { 1 } else { 2 });
    let horizon = positive(
        "horizon",
        *a.horizon.get_or_insert(if tree { 0.5 } else { 1.0 }),
    )?;
    let a_bar = positive("a-bar", *a.a_bar.get_or_insert(1.0))?;
    let grid_points = at_least("grid", *a.grid.get_or_insert(if tree { 2 } else { 5 }), 1)?;
    let n_paths = at_least("n-paths", *a.n_paths.get_or_insert(20_000), 2)?;
    let eval_paths = at_least("eval-paths", *a.eval_paths.get_or_insert(20_000), 2)?;
    let epsilon = *a.epsilon.get_or_insert(0.0);
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        bail!("field `epsilon`: must be non-negative");
    }
    let features = feature_registry(
        a.features
            .get_or_insert_with(|| "quadratic".into())
            .as_str(),
    )?;
    let regression = RegressionSpec::new(features, *a.ridge.get_or_insert(0.0), n_paths)?
        .joint(*a.joint.get_or_insert(false));
    let grid = ActionSpace::new(1, a_bar, grid_points)?.grid();

    let mut params = Vec::new();
    for p in a.params.iter().flatten() {
        let (key, value) = p
            .split_once('=')
            .with_context(|| format!("field `param`: expected key=value, got `{p}`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("field `param`: `{key}` is not a number"))?;
        params.push((key.trim().to_string(), value));
    }
    let lookup = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| *v);

    let (structure, payoff, reference): (
        Box<dyn ControlledStructure>,
        Box<dyn Fn(&StatePath) -> f64 + Sync>,
        Option<f64>,
    ) = if tree {
        let t = SignTree::default();
        let exact = t.enumerate();
        let table = t.clone();
        (
            Box::new(t),
            Box::new(move |p: &StatePath| table.payoff(p)),
            Some(exact),
        )
    } else {
        let coef = coefficient_registry(
            a.model.get_or_insert_with(|| "linear".into()).as_str(),
            lookup,
        )?;
        let target = *a.target.get_or_insert(1.0);
        let payoff: Box<dyn Fn(&StatePath) -> f64 + Sync> =
            match a.payoff.get_or_insert_with(|| "tracking".into()).as_str() {
                "tracking" => Box::new(move |p: &StatePath| -(p.terminal()[0] - target).powi(2)),
                "terminal" => Box::new(|p: &StatePath| p.terminal()[0]),
                other => bail!("field `payoff`: expected `tracking` or `terminal`, got `{other}`"),
            };
        (Box::new(EulerSde::new(coef)), payoff, None)
    };
    let d = structure.noise_dim();
    let cfg = SkeletonConfig::dyadic(d, k, horizon, ctx.chi(d)?, ctx.seed)?;
    let m = cfg.steps();
    if tree && m != 2 {
        bail!("problem `tree` needs e(k,T) = 2, got {m} (use k = 1, horizon = 0.5)");
    }
    if m == 0 {
        bail!("field `horizon`: e(k,T) is zero");
    }
    if ctx.dry_run {
        dry(&[
            ("e(k,T)", m.to_string()),
            ("grid", grid.len().to_string()),
            (
                "work",
                format!(
                    "{} training steps, {} value evaluations, {} rollout steps",
                    n_paths * m,
                    n_paths * m * grid.len(),
                    eval_paths * m
                ),
            ),
        ]);
        return Ok(());
    }
    let run = run.expect("run present unless dry");
    run.resolved(&*a)?;
    let sol = backward_solve(structure.as_ref(), &payoff, &grid, &regression, &cfg)?;
    let policy = extract_epsilon_policy(&sol.value_functions, epsilon)?;
    let value = evaluate_policy(&policy, structure.as_ref(), &payoff, &cfg, eval_paths)?;
    let reference_s = reference.map(|r| r.to_string()).unwrap_or_default();
    println!(
        "V0 = {:.6} ± {:.6}, policy value = {:.6} ± {:.6}{}",
        sol.v0.mean,
        sol.v0.std_err,
        value.mean,
        value.std_err,
        reference
            .map(|r| format!(", enumeration = {r}"))
            .unwrap_or_default()
    );
    run.csv(
        "solve.csv",
        "v0,v0_std_err,policy_value,policy_std_err,steps,grid,reference",
        &[format!(
            "{},{},{},{},{m},{},{reference_s}",
            sol.v0.mean,
            sol.v0.std_err,
            value.mean,
            value.std_err,
            grid.len()
        )],
    )?;
    let mut text = Vec::new();
    policy.write_text(&mut text)?;
    run.bytes("policy.txt", &text)?;
    let mut csv = Vec::new();
    sol.value_functions.write_csv(&mut csv)?;
    run.bytes("value_functions.csv", &csv)?;
    run.summary.insert("v0".into(), json!(sol.v0.mean));
    run.summary
        .insert("v0_std_err".into(), json!(sol.v0.std_err));
    run.summary.insert("policy_value".into(), json!(value.mean));
    run.summary
        .insert("policy_std_err".into(), json!(value.std_err));
    Ok(())
}

pub fn hedge_cmd(ctx: &Setup, a: &mut HedgeArgs, run: Option<&mut Run>) -> Result<()> {
    let ks = a.k.get_or_insert_with(|| vec![1, 2, 3]).clone();
    if ks.is_empty() {
        bail!("field `k`: need at least one level");
    }
    let chi = ctx.chi(2)?;
    let specs: Vec<HedgeSpec> = ks
        .iter()
        .map(|&k| {
            let mut s = HedgeSpec::baseline(k, chi, ctx.seed);
            s.n_mc = *a.n_mc.get_or_insert(s.n_mc);
            s.s1_0 = *a.s1_0.get_or_insert(s.s1_0);
            s.s2_0 = *a.s2_0.get_or_insert(s.s2_0);
            s.sigma1 = *a.sigma1.get_or_insert(s.sigma1);
            s.sigma2 = *a.sigma2.get_or_insert(s.sigma2);
            s.horizon = *a.horizon.get_or_insert(s.horizon);
            s.validate().map(|_| s)
        })
        .collect::<skeleton_control::Result<_>>()?;
    if let Some(g) = a.generic_grid {
        at_least("generic-grid", g, 1)?;
    }
    if ctx.dry_run {
        for s in &specs {
            let generic = a.generic_grid.map(|g| g * g).unwrap_or(0);
            dry(&[
                ("k", s.k.to_string()),
                ("e(k,T)", s.steps().to_string()),
                ("grid", generic.to_string()),
                (
                    "work",
                    format!("{} path steps", s.n_mc * s.steps() * (1 + generic)),
                ),
            ]);
        }
        return Ok(());
    }
    let run = run.expect("run present unless dry");
    run.resolved(&*a)?;
    let mut rows = Vec::new();
    let mut generic_rows = Vec::new();
    for s in &specs {
        let r = solve_hedge_analytic(s)?;
        let truth = skeleton_control::hedging::margrabe_price(s);
        let row = TableRow::from_result(s.k, &r, truth);
        println!(
            "k = {}: c* = {:.4} ± {:.4}, true = {truth:.6}, objective = {:.4}",
            s.k, r.c_star.mean, r.c_star.std_err, r.objective.mean
        );
        let dump: Vec<String> = r.residuals.iter().map(|x| x.to_string()).collect();
        run.csv(&format!("hedge_k{}_residuals.csv", s.k), "residual", &dump)?;
        rows.push(row);
        if let Some(g) = a.generic_grid {
            let gen = solve_hedge_generic(s, g, &generic_regression(s.n_mc)?)?;
            let analytic = hedge_objective(&r.policy, s, gen.c, s.n_mc)?;
            println!(
                "k = {}: generic objective = {:.4} ± {:.4} (analytic policy {:.4} ± {:.4})",
                s.k, gen.objective.mean, gen.objective.std_err, analytic.mean, analytic.std_err
            );
            generic_rows.push(format!(
                "{},{g},{},{},{},{},{},{},{}",
                s.k,
                gen.c,
                gen.objective_in_sample.mean,
                gen.objective_in_sample.std_err,
                gen.objective.mean,
                gen.objective.std_err,
                analytic.mean,
                analytic.std_err
            ));
        }
    }
    let mut table = Vec::new();
    write_table_csv(&mut table, &rows)?;
    let table = String::from_utf8(table)?;
    let mut lines = table.lines();
    let header = lines.next().unwrap_or_default().to_string();
    let body: Vec<String> = lines.map(str::to_string).collect();
    run.csv("hedge.csv", &header, &body)?;
    if !generic_rows.is_empty() {
        run.csv(
            "hedge_generic.csv",
            "k,grid,c,objective_in_sample,in_sample_std_err,objective,objective_std_err,analytic_objective,analytic_std_err",
            &generic_rows,
        )?;
    }
    for row in &rows {
        run.summary
            .insert(format!("c_star_k{}", row.k), json!(row.result));
    }
    Ok(())
}

pub fn rates_cmd(ctx: &Setup, a: &mut RatesArgs, run: Option<&mut Run>) -> Result<()> {
    let kind = a.kind.get_or_insert_with(|| "mesh".into()).clone();
    if kind != "mesh" && kind != "euler" {
        bail!("field `kind`: expected `mesh` or `euler`, got `{kind}`");
    }
    let k_min = *a.k_min.get_or_insert(2);
    let k_max = *a.k_max.get_or_insert(if kind == "mesh" { 6 } else { 5 });
    if k_min == 0 || k_max < k_min + 1 {
        bail!("fields `k-min`/`k-max`: need 1 ≤ k-min < k-max");
    }
    let n_paths = at_least("n-paths", *a.n_paths.get_or_insert(10_000), 2)?;
    let coef = Geometric {
        x0: positive("x0", *a.x0.get_or_insert(1.0))?,
        mu: *a.mu.get_or_insert(0.05),
        sigma: *a.sigma.get_or_insert(0.2),
    };
    let configs: Vec<SkeletonConfig> = (k_min..=k_max)
        .map(|k| SkeletonConfig::dyadic(1, k, 1.0, 1.0, ctx.seed))
        .collect::<skeleton_control::Result<_>>()?;
    if ctx.dry_run {
        let steps: usize = configs.iter().map(|c| e_steps(1.0, c.epsilon_k, 1.0)).sum();
        dry(&[
            (
                "e(k,T)",
                configs
                    .iter()
                    .map(|c| c.steps().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("grid", "0".into()),
            ("work", format!("{} path steps", steps * n_paths)),
        ]);
        return Ok(());
    }
    let run = run.expect("run present unless dry");
    run.resolved(&*a)?;
    let mut rows = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, cfg) in (k_min..).zip(&configs) {
        let est = if kind == "mesh" {
            horizon_gap_stats(cfg, 1.0, 1.0, n_paths)?
        } else {
            geometric_strong_error(coef, cfg, n_paths)?
        };
        println!("k = {k}: {:.6e} ± {:.2e}", est.mean, est.std_err);
        rows.push(format!(
            "{k},{},{},{},{}",
            cfg.epsilon_k,
            cfg.steps(),
            est.mean,
            est.std_err
        ));
        xs.push(cfg.epsilon_k.ln());
        ys.push(est.mean.ln());
    }
    let (slope, _) = linear_fit(&xs, &ys);
    println!("log-log slope = {slope:.4}");
    run.csv("rates.csv", "k,epsilon,steps,estimate,std_err", &rows)?;
    run.summary.insert("slope".into(), json!(slope));
    Ok(())
}
