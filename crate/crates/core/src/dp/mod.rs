//! Backward dynamic programming over the history space by regression Monte
//! Carlo.
//!
//! Training paths are driven by exploration actions drawn uniformly from the
//! action grid. At each step `j`, for every grid action `g`, the next-step
//! value `𝕍_{j+1}` of the paths that explored `g` is regressed on features of
//! their step-`j` histories; the fit is the state-action value `𝐔_j(·, g)`
//! and `𝕍_j = max_g 𝐔_j(·, g)`. The terminal value is the payoff.
//!
//! In joint mode a single regression per step is fitted on features of
//! (history, explored action) over all paths and evaluated at every grid
//! action instead.

mod actions;
mod history;
mod policy;
mod regression;
mod tree;

pub use actions::{ActionGrid, ActionSpace};
pub use history::{feature_registry, FeatureMap, History, HistoryView, Inputs, Polynomial};
pub use policy::{
    choose_action, extract_epsilon_policy, tie_tolerance, ConstantPolicy, FnPolicy, GridPolicy,
    Policy,
};
pub use regression::{ridge_fit, CellFit};
pub use tree::SignTree;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::skeleton::{simulate_skeleton, SkeletonConfig, SkeletonPath};
use crate::stats::ValueEstimate;
use crate::structures::{evaluate, ControlledStructure, PathBuilder, StatePath};
use rand::Rng;
use rayon::prelude::*;
use std::io::Write;
use std::sync::Arc;

#[derive(Clone)]
pub struct RegressionSpec {
    pub feature_map: Arc<dyn FeatureMap>,
    pub ridge_lambda: f64,
    pub n_paths: usize,
    /// One regression per step on (history, action) features instead of one
    /// per grid action.
    pub joint: bool,
}

impl std::fmt::Debug for RegressionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegressionSpec")
            .field("feature_map", &self.feature_map.name())
            .field("ridge_lambda", &self.ridge_lambda)
            .field("n_paths", &self.n_paths)
            .field("joint", &self.joint)
            .finish()
    }
}

impl RegressionSpec {
    pub fn new(
        feature_map: Arc<dyn FeatureMap>,
        ridge_lambda: f64,
        n_paths: usize,
    ) -> Result<Self> {
        if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::invalid("ridge_lambda", "must be non-negative"));
        }
        if n_paths < 2 {
            return Err(Error::invalid(
                "n_paths",
                "need at least two training paths",
            ));
        }
        Ok(Self {
            feature_map,
            ridge_lambda,
            n_paths,
            joint: false,
        })
    }

    pub fn joint(mut self, joint: bool) -> Self {
        self.joint = joint;
        self
    }

    /// Quadratic features in (state, time, last action), no ridge penalty.
    pub fn quadratic(n_paths: usize) -> Result<Self> {
        Self::new(feature_registry("quadratic")?, 0.0, n_paths)
    }
}

/// Fitted state-action values `𝐔_j(·, g)` for every step and grid action.
pub struct ValueFunctions {
    feature_map: Arc<dyn FeatureMap>,
    actions: ActionGrid,
    state_dim: usize,
    joint: bool,
    fits: Vec<Vec<CellFit>>,
}

impl std::fmt::Debug for ValueFunctions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueFunctions")
            .field("feature_map", &self.feature_map.name())
            .field("actions", &self.actions.len())
            .field("joint", &self.joint)
            .field("steps", &self.fits.len())
            .finish()
    }
}

impl ValueFunctions {
    pub fn from_parts(
        feature_map: Arc<dyn FeatureMap>,
        actions: ActionGrid,
        state_dim: usize,
        joint: bool,
        fits: Vec<Vec<CellFit>>,
    ) -> Result<Self> {
        let f = feature_map.dim(state_dim, actions.dim(), joint);
        let per_step = if joint { 1 } else { actions.len() };
        for (j, step) in fits.iter().enumerate() {
            if step.len() != per_step {
                return Err(Error::LengthMismatch {
                    what: "fits per step",
                    needed: per_step,
                    got: step.len(),
                });
            }
            if let Some(bad) = step.iter().position(|c| c.weights.len() != f) {
                return Err(Error::invalid(
                    "fits",
                    format!("step {j} action {bad}: expected {f} weights"),
                ));
            }
        }
        Ok(Self {
            feature_map,
            actions,
            state_dim,
            joint,
            fits,
        })
    }

    pub fn steps(&self) -> usize {
        self.fits.len()
    }

    pub fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    pub fn feature_map(&self) -> &Arc<dyn FeatureMap> {
        &self.feature_map
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn joint(&self) -> bool {
        self.joint
    }

    /// The step's fits: one per grid action, or a single one in joint mode.
    pub fn fits(&self, step: usize) -> &[CellFit] {
        &self.fits[step]
    }

    /// `𝐔_j(𝐨_j, g)` for every grid action, `j = view.step()`.
    pub fn state_action_values(&self, view: &HistoryView<'_>) -> Vec<f64> {
        let mut phi = Vec::new();
        let fits = &self.fits[view.step()];
        if self.joint {
            self.actions
                .points()
                .iter()
                .map(|a| {
                    self.feature_map.features(view, Some(a), &mut phi);
                    fits[0].predict(&phi)
                })
                .collect()
        } else {
            self.feature_map.features(view, None, &mut phi);
            fits.iter().map(|c| c.predict(&phi)).collect()
        }
    }

    /// `𝕍_j(𝐨_j)`.
    pub fn value(&self, view: &HistoryView<'_>) -> f64 {
        self.state_action_values(view)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One row per (step, action) fit, coefficients in raw feature
    /// coordinates. Joint fits have an empty action index and coordinates.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let r = self.actions.dim();
        let f = self.feature_map.dim(self.state_dim, r, self.joint);
        write!(w, "step,action_index")?;
        for i in 0..r {
            write!(w, ",a{i}")?;
        }
        write!(w, ",n,lambda,residual_std,intercept")?;
        for i in 0..f {
            write!(w, ",w{i}")?;
        }
        writeln!(w)?;
        for (j, step) in self.fits.iter().enumerate() {
            for (g, fit) in step.iter().enumerate() {
                if self.joint {
                    write!(w, "{j},{}", ",".repeat(r))?;
                } else {
                    write!(w, "{j},{g}")?;
                    for x in self.actions.get(g) {
                        write!(w, ",{x}")?;
                    }
                }
                write!(
                    w,
                    ",{},{},{},{}",
                    fit.n, fit.lambda, fit.residual_std, fit.intercept
                )?;
                for x in &fit.weights {
                    write!(w, ",{x}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Solution {
    /// In-sample estimate of the optimal value `V(0)`.
    pub v0: ValueEstimate,
    pub value_functions: Arc<ValueFunctions>,
    /// Exact-argmax policy (`ε = 0`).
    pub policy: GridPolicy,
}

/// One simulated training path.
struct TrainingPath {
    skeleton: SkeletonPath,
    actions: Vec<usize>,
    action_coords: Vec<f64>,
    states: StatePath,
    payoff: f64,
}

fn training_path<S, P>(
    structure: &S,
    payoff: &P,
    grid: &ActionGrid,
    cfg: &SkeletonConfig,
    m: usize,
    i: usize,
) -> Result<TrainingPath>
where
    S: ControlledStructure + ?Sized,
    P: Fn(&StatePath) -> f64 + Sync,
{
    let skeleton = simulate_skeleton(cfg, m, &mut stream(cfg.seed, Purpose::Skeleton, i as u64));
    let mut explore = stream(cfg.seed, Purpose::Exploration, i as u64);
    let actions: Vec<usize> = (0..m)
        .map(|_| explore.random_range(0..grid.len()))
        .collect();
    let chosen: Vec<Vec<f64>> = actions.iter().map(|&g| grid.get(g).to_vec()).collect();
    let states = evaluate(structure, &skeleton, &chosen, m, 0)?;
    let value = payoff(&states);
    if !value.is_finite() {
        return Err(Error::NonFinitePayoff { path: i, value });
    }
    Ok(TrainingPath {
        skeleton,
        actions,
        action_coords: chosen.concat(),
        states,
        payoff: value,
    })
}

/// Regression Monte Carlo solution of the dynamic programming equation for
/// `e(k,T)` periods (taken from `skeleton`).
pub fn backward_solve<S, P>(
    structure: &S,
    payoff: &P,
    grid: &ActionGrid,
    regression: &RegressionSpec,
    skeleton: &SkeletonConfig,
) -> Result<Solution>
where
    S: ControlledStructure + ?Sized,
    P: Fn(&StatePath) -> f64 + Sync,
{
    skeleton.validate()?;
    let m = skeleton.steps();
    if m == 0 {
        return Err(Error::invalid("horizon", "e(k,T) must be at least 1"));
    }
    if skeleton.dimension != structure.noise_dim() {
        return Err(Error::invalid(
            "dimension",
            format!(
                "structure needs d = {}, skeleton has d = {}",
                structure.noise_dim(),
                skeleton.dimension
            ),
        ));
    }
    let n = regression.n_paths;
    let paths: Vec<TrainingPath> = (0..n)
        .into_par_iter()
        .map(|i| training_path(structure, payoff, grid, skeleton, m, i))
        .collect::<Result<_>>()?;

    let state_dim = structure.state_dim();
    let r = grid.dim();
    let fmap = &regression.feature_map;
    let joint = regression.joint;
    let f = fmap.dim(state_dim, r, joint);
    let fit_cells = if joint { 1 } else { grid.len() };

    let mut next: Vec<f64> = paths.iter().map(|p| p.payoff).collect();
    let mut fits_rev = Vec::with_capacity(m);
    let mut v0 = ValueEstimate::from_samples(&[]);
    for j in (0..m).rev() {
        let features: Vec<Vec<f64>> = paths
            .par_iter()
            .map(|p| {
                let view = HistoryView::new(
                    j,
                    &p.skeleton,
                    state_dim,
                    p.states.rows(),
                    r,
                    &p.action_coords,
                );
                let mut phi = Vec::with_capacity(f);
                let explored = joint.then(|| grid.get(p.actions[j]));
                fmap.features(&view, explored, &mut phi);
                phi
            })
            .collect();
        if let Some(i) = features.iter().position(|phi| phi.len() != f) {
            return Err(Error::invalid(
                "feature_map",
                format!(
                    "path {i} step {j}: produced {} features, declared {f}",
                    features[i].len()
                ),
            ));
        }
        let fits: Vec<CellFit> = (0..fit_cells)
            .into_par_iter()
            .map(|g| {
                let mut rows = Vec::new();
                let mut y = Vec::new();
                for (p, (phi, &v)) in paths.iter().zip(features.iter().zip(&next)) {
                    if joint || p.actions[j] == g {
                        rows.extend_from_slice(phi);
                        y.push(v);
                    }
                }
                ridge_fit(&rows, &y, f, regression.ridge_lambda, j, g)
            })
            .collect::<Result<_>>()?;
        let best = |it: &mut dyn Iterator<Item = (f64, usize)>| {
            it.fold(
                (f64::NEG_INFINITY, 0),
                |a, b| if b.0 >= a.0 { b } else { a },
            )
        };
        let values: Vec<(f64, usize)> = if joint {
            paths
                .par_iter()
                .map(|p| {
                    let view = HistoryView::new(
                        j,
                        &p.skeleton,
                        state_dim,
                        p.states.rows(),
                        r,
                        &p.action_coords,
                    );
                    let mut phi = Vec::with_capacity(f);
                    best(&mut grid.points().iter().enumerate().map(|(g, a)| {
                        fmap.features(&view, Some(a), &mut phi);
                        (fits[0].predict(&phi), g)
                    }))
                })
                .collect()
        } else {
            features
                .par_iter()
                .map(|phi| best(&mut fits.iter().enumerate().map(|(g, c)| (c.predict(phi), g))))
                .collect()
        };
        if let Some(i) = values.iter().position(|v| !v.0.is_finite()) {
            return Err(Error::NonFiniteValue { step: j, path: i });
        }
        if j == 0 {
            let cell = &fits[if joint { 0 } else { values[0].1 }];
            let all_equal = values.iter().all(|v| v.0 == values[0].0);
            let mean = if all_equal {
                values[0].0
            } else {
                values.iter().map(|v| v.0).sum::<f64>() / n as f64
            };
            v0 = ValueEstimate {
                mean,
                std_err: cell.residual_std / (cell.n as f64).sqrt(),
                n_paths: n,
            };
        }
        next = values.into_iter().map(|v| v.0).collect();
        fits_rev.push(fits);
    }
    fits_rev.reverse();
    let value_functions = Arc::new(ValueFunctions::from_parts(
        fmap.clone(),
        grid.clone(),
        state_dim,
        joint,
        fits_rev,
    )?);
    let policy = extract_epsilon_policy(&value_functions, 0.0)?;
    Ok(Solution {
        v0,
        value_functions,
        policy,
    })
}

/// Run `policy` along one skeleton path, returning the state path and the
/// actions taken.
pub fn rollout<Pol, S>(
    policy: &Pol,
    structure: &S,
    skeleton: &SkeletonPath,
    steps: usize,
) -> Result<(StatePath, Vec<Vec<f64>>)>
where
    Pol: Policy + ?Sized,
    S: ControlledStructure + ?Sized,
{
    let mut builder = PathBuilder::new(structure, skeleton, steps)?;
    let n = structure.state_dim();
    let r = policy.action_dim();
    let mut flat = Vec::with_capacity(steps * r);
    let mut taken = Vec::with_capacity(steps);
    for j in 0..steps {
        let a = {
            let ctx = builder.context();
            let view = HistoryView::new(j, skeleton, n, ctx.prefix, r, &flat);
            policy.act(&view)
        };
        flat.extend_from_slice(&a);
        builder.advance(&a);
        taken.push(a);
    }
    Ok((builder.finish(steps + 1), taken))
}

/// Out-of-sample value of a policy on fresh skeleton paths.
pub fn evaluate_policy<Pol, S, P>(
    policy: &Pol,
    structure: &S,
    payoff: &P,
    skeleton: &SkeletonConfig,
    n_paths: usize,
) -> Result<ValueEstimate>
where
    Pol: Policy + ?Sized,
    S: ControlledStructure + ?Sized,
    P: Fn(&StatePath) -> f64 + Sync,
{
    skeleton.validate()?;
    let m = skeleton.steps();
    if policy.steps() != m {
        return Err(Error::LengthMismatch {
            what: "policy steps",
            needed: m,
            got: policy.steps(),
        });
    }
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let skel = simulate_skeleton(
                skeleton,
                m,
                &mut stream(skeleton.seed, Purpose::Evaluation, i as u64),
            );
            let (states, _) = rollout(policy, structure, &skel, m)?;
            let value = payoff(&states);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFinitePayoff { path: i, value })
            }
        })
        .collect::<Result<_>>()?;
    Ok(ValueEstimate::from_samples(&samples))
}
