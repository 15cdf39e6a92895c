//! Controlled imbedded discrete structures: maps from a skeleton path and a
//! control sequence to a stepwise-constant state path, frozen after the stop
//! step `e(k,T)`.
//!
//! A structure splits its work into a control-independent [`Driver`]
//! (precomputed once per skeleton path, e.g. fractional noise) and a one-step
//! transition that sees only the state prefix, so the same implementation
//! serves whole-path evaluation and step-by-step policy roll-outs.

mod coefficients;
mod euler;
mod fbm;
mod rough_vol;

pub use coefficients::{
    coefficient_registry, ConstantDrift, ControlledDrift, FnCoefficients, Geometric,
    IdentityDiffusion, OrnsteinUhlenbeck, SdeCoefficients, ZeroCoefficients,
};
pub use euler::{euler_pd_sde, geometric_strong_error, EulerSde};
pub use fbm::{
    fbm_drift_sde, fbm_high, fbm_low, fbm_path, fbm_value_at, rho_h, FbmDriftSde, FbmSpec,
};
pub use rough_vol::{rough_vol_paths, RoughVol, RoughVolSpec};

pub use crate::dp::{ActionGrid, ActionSpace};

use crate::error::{Error, Result};
use crate::skeleton::SkeletonPath;

/// `X(T_0), …, X(T_n)` for one path, frozen after `stop_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    dim: usize,
    values: Vec<f64>,
    stop_index: usize,
}

impl StatePath {
    pub fn from_rows(dim: usize, values: Vec<f64>, stop_index: usize) -> Self {
        debug_assert_eq!(values.len() % dim, 0);
        Self {
            dim,
            values,
            stop_index,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored rows (steps + 1).
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stop_index(&self) -> usize {
        self.stop_index
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Value at the stop step.
    pub fn terminal(&self) -> &[f64] {
        self.value(self.stop_index)
    }

    /// `X(t ∧ T_stop)` on the skeleton's clock.
    pub fn at_time(&self, skeleton: &SkeletonPath, t: f64) -> &[f64] {
        self.value(skeleton.index_at(t).min(self.stop_index))
    }

    pub fn rows(&self) -> &[f64] {
        &self.values
    }

    /// First coordinate of every row.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(i)
            .step_by(self.dim)
            .copied()
            .collect()
    }
}

/// Read-only view of a path prefix `X(T_0), …, X(T_j)` at step `j`.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub step: usize,
    pub time: f64,
    pub dim: usize,
    pub prefix: &'a [f64],
}

impl<'a> StepContext<'a> {
    pub fn current(&self) -> &'a [f64] {
        &self.prefix[self.step * self.dim..(self.step + 1) * self.dim]
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        assert!(
            i <= self.step,
            "row {i} is in the future of step {}",
            self.step
        );
        &self.prefix[i * self.dim..(i + 1) * self.dim]
    }
}

/// Control-independent per-path data: row `q` belongs to step `q`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Driver {
    pub width: usize,
    pub data: Vec<f64>,
}

impl Driver {
    pub fn row(&self, q: usize) -> &[f64] {
        &self.data[q * self.width..(q + 1) * self.width]
    }
}

pub trait ControlledStructure: Sync {
    fn state_dim(&self) -> usize;

    /// Dimension of the skeleton this structure consumes.
    fn noise_dim(&self) -> usize;

    fn initial_state(&self) -> Vec<f64>;

    /// Precompute control-independent data for steps `0..=n`.
    fn driver(&self, _skeleton: &SkeletonPath, _n: usize) -> Result<Driver> {
        Ok(Driver::default())
    }

    /// Write `X(T_q)` into `out`, given the prefix up to `q - 1` and the
    /// action `a_{q-1}` chosen at `T_{q-1}`.
    fn step(
        &self,
        q: usize,
        skeleton: &SkeletonPath,
        driver: &Driver,
        ctx: &StepContext<'_>,
        action: &[f64],
        out: &mut [f64],
    );
}

/// Incremental evaluation of a structure along one skeleton path.
pub struct PathBuilder<'a, S: ControlledStructure + ?Sized> {
    structure: &'a S,
    skeleton: &'a SkeletonPath,
    driver: Driver,
    values: Vec<f64>,
    stop: usize,
    step: usize,
}

impl<'a, S: ControlledStructure + ?Sized> PathBuilder<'a, S> {
    pub fn new(structure: &'a S, skeleton: &'a SkeletonPath, stop: usize) -> Result<Self> {
        if skeleton.len() < stop {
            return Err(Error::LengthMismatch {
                what: "skeleton steps",
                needed: stop,
                got: skeleton.len(),
            });
        }
        if skeleton.dimension() != structure.noise_dim() {
            return Err(Error::invalid(
                "skeleton",
                format!(
                    "structure needs a {}-dimensional skeleton, got {}",
                    structure.noise_dim(),
                    skeleton.dimension()
                ),
            ));
        }
        let driver = structure.driver(skeleton, stop)?;
        let values = structure.initial_state();
        Ok(Self {
            structure,
            skeleton,
            driver,
            values,
            stop,
            step: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.stop
    }

    pub fn context(&self) -> StepContext<'_> {
        StepContext {
            step: self.step,
            time: self.skeleton.times()[self.step],
            dim: self.structure.state_dim(),
            prefix: &self.values,
        }
    }

    /// Apply `a_j` and move to step `j + 1`. No-op after the stop step.
    pub fn advance(&mut self, action: &[f64]) {
        if self.is_done() {
            return;
        }
        let n = self.structure.state_dim();
        let mut next = vec![0.0; n];
        let q = self.step + 1;
        let ctx = StepContext {
            step: self.step,
            time: self.skeleton.times()[self.step],
            dim: n,
            prefix: &self.values,
        };
        self.structure
            .step(q, self.skeleton, &self.driver, &ctx, action, &mut next);
        self.values.extend_from_slice(&next);
        self.step = q;
    }

    /// Finish, padding frozen rows up to `len - 1` steps.
    pub fn finish(self, len: usize) -> StatePath {
        let n = self.structure.state_dim();
        let mut values = self.values;
        let last = values[values.len() - n..].to_vec();
        while values.len() / n < len {
            values.extend_from_slice(&last);
        }
        StatePath::from_rows(n, values, self.stop)
    }
}

/// Evaluate a structure on a skeleton with a fixed action sequence; the state
/// is frozen after `stop`, and `extra` frozen rows are appended beyond it.
pub fn evaluate<S: ControlledStructure + ?Sized>(
    structure: &S,
    skeleton: &SkeletonPath,
    actions: &[Vec<f64>],
    stop: usize,
    extra: usize,
) -> Result<StatePath> {
    if actions.len() < stop {
        return Err(Error::LengthMismatch {
            what: "actions",
            needed: stop,
            got: actions.len(),
        });
    }
    let mut builder = PathBuilder::new(structure, skeleton, stop)?;
    for a in &actions[..stop] {
        builder.advance(a);
    }
    Ok(builder.finish(stop + 1 + extra))
}
