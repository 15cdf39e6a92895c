//! Quadratic hedging of an exchange option in a two-asset driftless
//! Black–Scholes model, discretized on the skeleton.
//!
//! The claim is `H = max(S¹ − S²)⁺` read at `T ∧ T_{e(k,T)}`; the hedge gains
//! are `X = Σ_n v_n · ΔS_{n+1}` over the same stopped horizon, and the
//! criterion is `E(c + X − H)²`.

use crate::dp::{
    backward_solve, evaluate_policy, ridge_fit, ActionSpace, CellFit, FeatureMap, GridPolicy,
    HistoryView, Policy, RegressionSpec,
};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::skeleton::{simulate_skeleton, SkeletonConfig, SkeletonPath};
use crate::stats::{norm_cdf, ValueEstimate};
use crate::structures::{ControlledStructure, Driver, StatePath, StepContext};
use rayon::prelude::*;
use std::io::Write;
use std::sync::Arc;

/// Reference value of the exchange option for the baseline fixture.
pub const BASELINE_TRUE_VALUE: f64 = 5.821608;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeSpec {
    pub s1_0: f64,
    pub s2_0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub horizon: f64,
    /// `ε_k = 2^{-k}`.
    pub k: u32,
    pub n_mc: usize,
    pub chi_d: f64,
    pub seed: u64,
}

impl HedgeSpec {
    /// `S¹₀ = 49, S²₀ = 52, σ₁ = 0.2, σ₂ = 0.3, T = 1`, 3·10⁴ paths.
    pub fn baseline(k: u32, chi_d: f64, seed: u64) -> Self {
        Self {
            s1_0: 49.0,
            s2_0: 52.0,
            sigma1: 0.2,
            sigma2: 0.3,
            horizon: 1.0,
            k,
            n_mc: 30_000,
            chi_d,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s1_0", self.s1_0),
            ("s2_0", self.s2_0),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        for (name, v) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if self.k == 0 || self.k > 30 {
            return Err(Error::invalid("k", "must lie in 1..=30"));
        }
        if self.n_mc < 2 {
            return Err(Error::invalid("n_mc", "need at least two paths"));
        }
        self.skeleton().validate()
    }

    pub fn epsilon(&self) -> f64 {
        0.5f64.powi(self.k as i32)
    }

    pub fn skeleton(&self) -> SkeletonConfig {
        SkeletonConfig {
            dimension: 2,
            epsilon_k: self.epsilon(),
            horizon: self.horizon,
            chi_d: self.chi_d,
            seed: self.seed,
        }
    }

    /// `e(k,T)`.
    pub fn steps(&self) -> usize {
        self.skeleton().steps()
    }

    fn sigma(&self, i: usize) -> f64 {
        if i == 0 {
            self.sigma1
        } else {
            self.sigma2
        }
    }
}

/// Margrabe's price of the option to exchange asset 2 for asset 1.
pub fn margrabe_price(spec: &HedgeSpec) -> f64 {
    let sigma = (spec.sigma1.powi(2) + spec.sigma2.powi(2)).sqrt();
    let vol = sigma * spec.horizon.sqrt();
    if vol == 0.0 {
        return (spec.s1_0 - spec.s2_0).max(0.0);
    }
    let d1 = ((spec.s1_0 / spec.s2_0).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    spec.s1_0 * norm_cdf(d1) - spec.s2_0 * norm_cdf(d2)
}

/// `S^{k,i}` on the skeleton's steps, frozen after `e(k,T)`:
/// `S_q = S_{q−1}(1 + σ_i η^i_q)`.
pub fn simulate_hedge_assets(
    spec: &HedgeSpec,
    skeleton: &SkeletonPath,
) -> Result<(StatePath, StatePath)> {
    if skeleton.dimension() != 2 {
        return Err(Error::invalid(
            "skeleton",
            "hedging needs a 2-dimensional skeleton",
        ));
    }
    let m = spec.steps();
    if skeleton.len() < m {
        return Err(Error::LengthMismatch {
            what: "skeleton steps",
            needed: m,
            got: skeleton.len(),
        });
    }
    let asset = |i: usize, s0: f64| {
        let mut values = Vec::with_capacity(m + 1);
        values.push(s0);
        for q in 1..=m {
            let last = values[q - 1];
            values.push(last * (1.0 + spec.sigma(i) * skeleton.increment(q)[i]));
        }
        StatePath::from_rows(1, values, m)
    };
    Ok((asset(0, spec.s1_0), asset(1, spec.s2_0)))
}

/// `min(e(k,T), N(T))`: the step index read at time `T` on the stopped path.
fn horizon_index(spec: &HedgeSpec, skeleton: &SkeletonPath) -> usize {
    skeleton.index_at(spec.horizon).min(spec.steps())
}

/// State `(X, S¹, S²)` under hedge ratios `v = (v¹, v²)`; all three freeze once
/// `T_q > T` or `q > e(k,T)`.
#[derive(Debug, Clone, Copy)]
pub struct HedgeStructure {
    pub spec: HedgeSpec,
}

impl ControlledStructure for HedgeStructure {
    fn state_dim(&self) -> usize {
        3
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, self.spec.s1_0, self.spec.s2_0]
    }

    fn step(
        &self,
        q: usize,
        skeleton: &SkeletonPath,
        _driver: &Driver,
        ctx: &StepContext<'_>,
        action: &[f64],
        out: &mut [f64],
    ) {
        let prev = ctx.current();
        out.copy_from_slice(prev);
        if skeleton.times()[q] > self.spec.horizon {
            return;
        }
        let eta = skeleton.increment(q);
        for i in 0..2 {
            let ds = prev[1 + i] * self.spec.sigma(i) * eta[i];
            out[0] += action[i] * ds;
            out[1 + i] += ds;
        }
    }
}

/// Exchange-option claim on a hedge state path.
pub fn hedge_claim(path: &StatePath) -> f64 {
    let x = path.terminal();
    (x[1] - x[2]).max(0.0)
}

fn quadratic_features(s1: f64, s2: f64) -> [f64; 6] {
    [1.0, s1, s2, s1 * s1, s1 * s2, s2 * s2]
}

const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Hedge ratios from the backward recursion: at step `n`,
/// `v^i_n = E_n[(H − G_{n+1}) ΔS^i_{n+1}] / ((S^i_n)² σ_i² ε²)`, where `G_{n+1}`
/// are the gains of the later steps and `E_n` is a regression on quadratic
/// monomials of `(S¹_n, S²_n)`. Ratios are projected onto `[−1, 1]²`.
#[derive(Debug, Clone)]
pub struct AnalyticHedgePolicy {
    spec: HedgeSpec,
    /// `None` where no path is still running at that step.
    fits: Vec<Option<[CellFit; 2]>>,
}

impl AnalyticHedgePolicy {
    pub fn fits(&self) -> &[Option<[CellFit; 2]>] {
        &self.fits
    }

    /// Returns the ratios and whether a denominator was floored.
    fn ratios(&self, n: usize, s: [f64; 2]) -> ([f64; 2], bool) {
        let Some(fit) = &self.fits[n] else {
            return ([0.0, 0.0], false);
        };
        let phi = quadratic_features(s[0], s[1]);
        let eps2 = self.spec.epsilon().powi(2);
        let mut floored = false;
        let mut v = [0.0; 2];
        for i in 0..2 {
            let mut den = s[i] * s[i] * self.spec.sigma(i).powi(2) * eps2;
            if den < DENOMINATOR_FLOOR {
                den = DENOMINATOR_FLOOR;
                floored = true;
            }
            v[i] = (fit[i].predict(&phi) / den).clamp(-1.0, 1.0);
        }
        (v, floored)
    }
}

impl Policy for AnalyticHedgePolicy {
    fn steps(&self) -> usize {
        self.fits.len()
    }

    fn action_dim(&self) -> usize {
        2
    }

    /// Expects the [`HedgeStructure`] state `(X, S¹, S²)`.
    fn act(&self, view: &HistoryView<'_>) -> Vec<f64> {
        if view.time() > self.spec.horizon {
            return vec![0.0, 0.0];
        }
        let x = view.state();
        self.ratios(view.step(), [x[1], x[2]]).0.to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct HedgeResult {
    /// `c^{k,*}`: the sample mean of `H − X` with its standard error.
    pub c_star: ValueEstimate,
    /// Variance of the `c^{k,*}` estimator (`std_err²`).
    pub mse: f64,
    /// `E(c^{k,*} + X − H)²` at the fitted policy, in sample.
    pub objective: ValueEstimate,
    /// Sample mean of the claim alone.
    pub claim: ValueEstimate,
    /// Paths on which a recursion denominator hit the floor.
    pub floored_paths: usize,
    /// Per-path `H − X`, in path order.
    pub residuals: Vec<f64>,
    pub policy: AnalyticHedgePolicy,
}

struct HedgePath {
    s: Vec<[f64; 2]>,
    n_t: usize,
    claim: f64,
}

fn hedge_paths(spec: &HedgeSpec, purpose: Purpose) -> Vec<HedgePath> {
    let cfg = spec.skeleton();
    let m = spec.steps();
    (0..spec.n_mc)
        .into_par_iter()
        .map(|i| {
            let skel = simulate_skeleton(&cfg, m, &mut stream(spec.seed, purpose, i as u64));
            let (s1, s2) = simulate_hedge_assets(spec, &skel).expect("skeleton has e(k,T) steps");
            let n_t = horizon_index(spec, &skel);
            let s: Vec<[f64; 2]> = s1
                .rows()
                .iter()
                .zip(s2.rows())
                .map(|(&a, &b)| [a, b])
                .collect();
            let claim = (s[n_t][0] - s[n_t][1]).max(0.0);
            HedgePath { s, n_t, claim }
        })
        .collect()
}

/// The explicit hedge recursion with regression estimates of the
/// conditional expectations, `n_mc` paths shared across all steps.
pub fn solve_hedge_analytic(spec: &HedgeSpec) -> Result<HedgeResult> {
    spec.validate()?;
    let m = spec.steps();
    let paths = hedge_paths(spec, Purpose::Skeleton);
    let n = paths.len();
    let mut gains = vec![0.0; n];
    let mut floored = vec![false; n];
    let mut policy = AnalyticHedgePolicy {
        spec: *spec,
        fits: vec![None; m],
    };
    for step in (0..m).rev() {
        // paths with T_step ≤ T still carry a decision at this step
        let active: Vec<usize> = (0..n).filter(|&i| step <= paths[i].n_t).collect();
        if active.is_empty() {
            continue;
        }
        let increment = |p: &HedgePath, i: usize| {
            if step < p.n_t {
                p.s[step + 1][i] - p.s[step][i]
            } else {
                0.0
            }
        };
        let rows: Vec<f64> = active
            .iter()
            .flat_map(|&i| quadratic_features(paths[i].s[step][0], paths[i].s[step][1]))
            .collect();
        let mut pair = Vec::with_capacity(2);
        for asset in 0..2 {
            let y: Vec<f64> = active
                .iter()
                .map(|&i| (paths[i].claim - gains[i]) * increment(&paths[i], asset))
                .collect();
            pair.push(ridge_fit(&rows, &y, 6, 0.0, step, asset)?);
        }
        let second = pair.pop().expect("two fits");
        let first = pair.pop().expect("two fits");
        policy.fits[step] = Some([first, second]);
        for &i in &active {
            let p = &paths[i];
            let (v, was_floored) = policy.ratios(step, p.s[step]);
            floored[i] |= was_floored;
            gains[i] += v[0] * increment(p, 0) + v[1] * increment(p, 1);
        }
    }
    let residual: Vec<f64> = paths.iter().zip(&gains).map(|(p, x)| p.claim - x).collect();
    let c_star = ValueEstimate::from_samples(&residual);
    let squared: Vec<f64> = residual.iter().map(|r| (r - c_star.mean).powi(2)).collect();
    let claims: Vec<f64> = paths.iter().map(|p| p.claim).collect();
    Ok(HedgeResult {
        mse: c_star.std_err * c_star.std_err,
        c_star,
        objective: ValueEstimate::from_samples(&squared),
        claim: ValueEstimate::from_samples(&claims),
        floored_paths: floored.iter().filter(|&&f| f).count(),
        residuals: residual,
        policy,
    })
}

/// `E(c + X − H)²` of a policy on fresh paths (evaluation streams of `seed`).
pub fn hedge_objective<P: Policy + ?Sized>(
    policy: &P,
    spec: &HedgeSpec,
    c: f64,
    n_paths: usize,
) -> Result<ValueEstimate> {
    let structure = HedgeStructure { spec: *spec };
    let payoff = |p: &StatePath| (c + p.terminal()[0] - hedge_claim(p)).powi(2);
    evaluate_policy(policy, &structure, &payoff, &spec.skeleton(), n_paths)
}

#[derive(Debug)]
pub struct HedgeGenericResult {
    /// Premium used in the criterion: the sample mean of the claim (the
    /// optimal `c` for any self-financing hedge, whose gains have mean zero).
    pub c: f64,
    /// `−V(0)` of the regression DP, in sample.
    pub objective_in_sample: ValueEstimate,
    /// Criterion at the extracted policy on fresh paths.
    pub objective: ValueEstimate,
    pub policy: GridPolicy,
}

/// Default regression for the generic hedge: one joint regression per step on
/// [`HedgeFeatures`], no ridge penalty.
pub fn generic_regression(n_paths: usize) -> Result<RegressionSpec> {
    Ok(RegressionSpec::new(Arc::new(HedgeFeatures), 0.0, n_paths)?.joint(true))
}

/// Minimize `E ϱ_c` with the generic regression DP over a
/// `grid_points × grid_points` grid on `[−1, 1]²`.
pub fn solve_hedge_generic(
    spec: &HedgeSpec,
    grid_points: usize,
    regression: &RegressionSpec,
) -> Result<HedgeGenericResult> {
    spec.validate()?;
    let claims: Vec<f64> = hedge_paths(spec, Purpose::Skeleton)
        .iter()
        .map(|p| p.claim)
        .collect();
    let c = ValueEstimate::from_samples(&claims).mean;
    let structure = HedgeStructure { spec: *spec };
    let grid = ActionSpace::new(2, 1.0, grid_points)?.grid();
    let payoff = |p: &StatePath| -(c + p.terminal()[0] - hedge_claim(p)).powi(2);
    let solution = backward_solve(&structure, &payoff, &grid, regression, &spec.skeleton())?;
    let objective = hedge_objective(&solution.policy, spec, c, spec.n_mc)?;
    Ok(HedgeGenericResult {
        c,
        objective_in_sample: ValueEstimate {
            mean: -solution.v0.mean,
            ..solution.v0
        },
        objective,
        policy: solution.policy,
    })
}

/// Degree-2 monomials in `(X, S¹, S², t, a¹S¹, a²S²)` for the hedging state
/// `(X, S¹, S²)`: the hedge gains are linear in the dollar positions `aⁱSⁱ`.
/// The action is the candidate one, else the last one taken (zero at step 0).
#[derive(Debug, Clone, Copy, Default)]
pub struct HedgeFeatures;

impl FeatureMap for HedgeFeatures {
    fn name(&self) -> &str {
        "hedge"
    }

    fn dim(&self, _: usize, _: usize, _: bool) -> usize {
        28
    }

    fn features(&self, view: &HistoryView<'_>, candidate: Option<&[f64]>, out: &mut Vec<f64>) {
        let s = view.state();
        assert_eq!(s.len(), 3, "hedge features need the state (X, S1, S2)");
        let a = candidate.or(view.last_action()).unwrap_or(&[0.0, 0.0]);
        out.clear();
        out.extend_from_slice(&[1.0, s[0], s[1], s[2], view.time(), a[0] * s[1], a[1] * s[2]]);
        for i in 1..7 {
            for l in i..7 {
                let v = out[i] * out[l];
                out.push(v);
            }
        }
    }
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub k: u32,
    pub result: f64,
    pub mse: f64,
    pub true_value: f64,
}

impl TableRow {
    pub fn from_result(k: u32, result: &HedgeResult, true_value: f64) -> Self {
        Self {
            k,
            result: result.c_star.mean,
            mse: result.mse,
            true_value,
        }
    }

    pub fn difference(&self) -> f64 {
        (self.result - self.true_value).abs()
    }

    /// Relative error in percent.
    pub fn pct_error(&self) -> f64 {
        100.0 * self.difference() / self.true_value
    }
}

pub fn write_table_csv<W: Write>(mut w: W, rows: &[TableRow]) -> std::io::Result<()> {
    writeln!(w, "k,result,mse,true_value,difference,pct_error")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.8},{:.6},{:.8},{:.4}",
            r.k,
            r.result,
            r.mse,
            r.true_value,
            r.difference(),
            r.pct_error()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margrabe_fixture() {
        let spec = HedgeSpec::baseline(1, 0.6, 0);
        assert!((margrabe_price(&spec) - BASELINE_TRUE_VALUE).abs() < 1e-5);
    }

    #[test]
    fn margrabe_degenerate_volatility() {
        let mut spec = HedgeSpec::baseline(1, 0.6, 0);
        spec.s2_0 = 49.0;
        for &s in &[1e-2, 1e-4, 1e-6] {
            spec.sigma1 = s;
            spec.sigma2 = s;
            let vol = s * 2f64.sqrt();
            let expected = 49.0 * (norm_cdf(vol / 2.0) - norm_cdf(-vol / 2.0));
            assert!((margrabe_price(&spec) - expected).abs() < 1e-9);
        }
        spec.sigma1 = 0.0;
        spec.sigma2 = 0.0;
        assert_eq!(margrabe_price(&spec), 0.0);
    }

    #[test]
    fn table_rows_format() {
        let mut out = Vec::new();
        let row = TableRow {
            k: 1,
            result: 5.9740,
            mse: 0.01689567,
            true_value: BASELINE_TRUE_VALUE,
        };
        write_table_csv(&mut out, &[row]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "1,5.974000,0.01689567,5.821608,0.15239200,2.6177"
        );
    }
}
