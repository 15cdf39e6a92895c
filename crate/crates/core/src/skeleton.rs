//! Simulation of the discrete-type skeleton: the random times at which some
//! coordinate of a `d`-dimensional Brownian motion has moved by `ε_k` since the
//! previous such time, together with the increments observed at those times.

use crate::distributions::{sample_nonexit_coordinate, ExitTimeDist};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::stats::ValueEstimate;
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonConfig {
    pub dimension: usize,
    pub epsilon_k: f64,
    pub horizon: f64,
    pub chi_d: f64,
    pub seed: u64,
}

impl SkeletonConfig {
    /// Config with `ε_k = 2^{-k}`.
    pub fn dyadic(dimension: usize, k: u32, horizon: f64, chi_d: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            dimension,
            epsilon_k: 0.5f64.powi(k as i32),
            horizon,
            chi_d,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("dimension", "must be at least 1"));
        }
        if !(self.epsilon_k > 0.0 && self.epsilon_k.is_finite()) {
            return Err(Error::invalid("epsilon_k", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        let lo = 1.0 / (2.0 * self.dimension as f64);
        if !(self.chi_d >= lo && self.chi_d <= 1.0) {
            return Err(Error::invalid(
                "chi_d",
                format!("must lie in [1/(2d), 1] = [{lo}, 1], got {}", self.chi_d),
            ));
        }
        Ok(())
    }

    /// `e(k, T)` for this config's horizon.
    pub fn steps(&self) -> usize {
        e_steps(self.horizon, self.epsilon_k, self.chi_d)
    }
}

/// `e(k,t) = ⌈ε_k^{-2} t / χ_d⌉`.
pub fn e_steps(t: f64, epsilon_k: f64, chi_d: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let x = t / (epsilon_k * epsilon_k * chi_d);
    // absorb round-off so that exact integers are not pushed up by one
    let floor = x.floor();
    if x - floor <= 1e-12 * x {
        floor as usize
    } else {
        floor as usize + 1
    }
}

/// One realization of the skeleton: waiting times `ΔT_n` and increments `η_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonPath {
    dimension: usize,
    epsilon_k: f64,
    delta_times: Vec<f64>,
    /// Row-major `n × d`.
    increments: Vec<f64>,
    /// `T_0 = 0, T_1, …, T_n`.
    times: Vec<f64>,
}

impl SkeletonPath {
    pub fn new(dimension: usize, epsilon_k: f64) -> Self {
        Self {
            dimension,
            epsilon_k,
            delta_times: Vec::new(),
            increments: Vec::new(),
            times: vec![0.0],
        }
    }

    /// Build from raw arrays; checks positivity of waiting times and
    /// membership of every increment in `𝕀_k`.
    pub fn from_parts(
        dimension: usize,
        epsilon_k: f64,
        delta_times: Vec<f64>,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if increments.len() != delta_times.len() * dimension {
            return Err(Error::LengthMismatch {
                what: "skeleton increments",
                needed: delta_times.len() * dimension,
                got: increments.len(),
            });
        }
        let mut path = Self::new(dimension, epsilon_k);
        for (i, &dt) in delta_times.iter().enumerate() {
            let eta = &increments[i * dimension..(i + 1) * dimension];
            if !(dt > 0.0) {
                return Err(Error::invalid(
                    "delta_times",
                    format!("step {} is not positive", i + 1),
                ));
            }
            if !is_lattice_increment(eta, epsilon_k) {
                return Err(Error::invalid(
                    "increments",
                    format!("step {} is not in 𝕀_k: {eta:?}", i + 1),
                ));
            }
            path.push(dt, eta);
        }
        Ok(path)
    }

    pub(crate) fn push(&mut self, dt: f64, eta: &[f64]) {
        debug_assert_eq!(eta.len(), self.dimension);
        let last = *self.times.last().expect("times starts with 0");
        self.delta_times.push(dt);
        self.increments.extend_from_slice(eta);
        self.times.push(last + dt);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn epsilon_k(&self) -> f64 {
        self.epsilon_k
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.delta_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_times.is_empty()
    }

    pub fn delta_times(&self) -> &[f64] {
        &self.delta_times
    }

    /// `T_0 = 0, …, T_n`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `ΔT_n` for `n ≥ 1`.
    pub fn delta_time(&self, n: usize) -> f64 {
        self.delta_times[n - 1]
    }

    /// `η_n` for `n ≥ 1`.
    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[(n - 1) * self.dimension..n * self.dimension]
    }

    pub fn increments_flat(&self) -> &[f64] {
        &self.increments
    }

    /// Axis (0-based) of the coordinate that hit `±ε_k` at step `n`.
    pub fn exit_axis(&self, n: usize) -> usize {
        self.increment(n)
            .iter()
            .position(|x| x.abs() == self.epsilon_k)
            .expect("skeleton increment without an exiting coordinate")
    }

    /// Largest `n` with `T_n ≤ t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Path restricted to its first `n` steps.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dimension: self.dimension,
            epsilon_k: self.epsilon_k,
            delta_times: self.delta_times[..n].to_vec(),
            increments: self.increments[..n * self.dimension].to_vec(),
            times: self.times[..=n].to_vec(),
        }
    }

    /// Same times, increments multiplied by `factor` (no 𝕀_k check).
    pub fn scaled_increments(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.increments.iter_mut().for_each(|x| *x *= factor);
        out.epsilon_k *= factor.abs();
        out
    }
}

/// Exactly one coordinate at magnitude `ε`, all others strictly inside.
pub fn is_lattice_increment(eta: &[f64], epsilon_k: f64) -> bool {
    let at_boundary = eta.iter().filter(|x| x.abs() == epsilon_k).count();
    at_boundary == 1 && eta.iter().all(|x| x.abs() <= epsilon_k)
}

fn sample_step<R: Rng + ?Sized>(
    dist: &ExitTimeDist,
    dimension: usize,
    epsilon_k: f64,
    rng: &mut R,
    eta: &mut [f64],
) -> f64 {
    let scale = epsilon_k * epsilon_k;
    let mut axis = 0;
    let mut tau = f64::INFINITY;
    for j in 0..dimension {
        let t = dist.sample(rng);
        // strict comparison: ties go to the lowest index
        if t < tau {
            tau = t;
            axis = j;
        }
    }
    let dt = scale * tau;
    for (j, x) in eta.iter_mut().enumerate() {
        *x = if j == axis {
            if rng.random::<bool>() {
                epsilon_k
            } else {
                -epsilon_k
            }
        } else {
            sample_nonexit_coordinate(dt, epsilon_k, rng)
        };
    }
    dt
}

/// Simulate `n_steps` skeleton steps from `rng`.
pub fn simulate_skeleton<R: Rng + ?Sized>(
    config: &SkeletonConfig,
    n_steps: usize,
    rng: &mut R,
) -> SkeletonPath {
    let dist = ExitTimeDist::default();
    let mut path = SkeletonPath::new(config.dimension, config.epsilon_k);
    path.delta_times.reserve(n_steps);
    path.increments.reserve(n_steps * config.dimension);
    let mut eta = vec![0.0; config.dimension];
    for _ in 0..n_steps {
        let dt = sample_step(&dist, config.dimension, config.epsilon_k, rng, &mut eta);
        path.push(dt, &eta);
    }
    path
}

/// Simulate until the cumulative time strictly exceeds `horizon`, and at least
/// `min_steps` steps.
pub fn simulate_past_horizon<R: Rng + ?Sized>(
    config: &SkeletonConfig,
    horizon: f64,
    min_steps: usize,
    rng: &mut R,
) -> SkeletonPath {
    let dist = ExitTimeDist::default();
    let mut path = SkeletonPath::new(config.dimension, config.epsilon_k);
    let mut eta = vec![0.0; config.dimension];
    while path.len() < min_steps || *path.times.last().unwrap() <= horizon {
        let dt = sample_step(&dist, config.dimension, config.epsilon_k, rng, &mut eta);
        path.push(dt, &eta);
    }
    path
}

/// Path `index` of the batch keyed by `config.seed`.
pub fn simulate_path(config: &SkeletonConfig, n_steps: usize, index: u64) -> SkeletonPath {
    let mut rng = rng::stream(config.seed, Purpose::Skeleton, index);
    simulate_skeleton(config, n_steps, &mut rng)
}

/// `n_paths` independent paths, path `i` on stream `i`.
pub fn simulate_batch(
    config: &SkeletonConfig,
    n_steps: usize,
    n_paths: usize,
) -> Vec<SkeletonPath> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(config, n_steps, i))
        .collect()
}

/// Right-continuous step function `t ↦ values(T_n)` for `T_n ≤ t < T_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub dimension: usize,
    pub times: Vec<f64>,
    /// Row-major `(n+1) × dimension`.
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn value(&self, n: usize) -> &[f64] {
        &self.values[n * self.dimension..(n + 1) * self.dimension]
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let n = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.value(n)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `A^k`: cumulative sums of the skeleton increments.
pub fn reconstruct_ak(path: &SkeletonPath) -> StepFunction {
    let d = path.dimension;
    let mut values = vec![0.0; (path.len() + 1) * d];
    for n in 1..=path.len() {
        let (prev, cur) = values.split_at_mut(n * d);
        let eta = path.increment(n);
        for j in 0..d {
            cur[j] = prev[(n - 1) * d + j] + eta[j];
        }
    }
    StepFunction {
        dimension: d,
        times: path.times.clone(),
        values,
    }
}

/// Monte Carlo estimate of `E|t - T_{e(k,t)}|^p`.
pub fn horizon_gap_stats(
    config: &SkeletonConfig,
    t: f64,
    p: f64,
    n_paths: usize,
) -> Result<ValueEstimate> {
    config.validate()?;
    if !(t >= 0.0 && t <= config.horizon) {
        return Err(Error::invalid("t", "must lie in [0, T]"));
    }
    if p < 1.0 {
        return Err(Error::invalid("p", "must be at least 1"));
    }
    let m = e_steps(t, config.epsilon_k, config.chi_d);
    let gaps: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(config, m, i);
            (t - path.times()[m]).abs().powf(p)
        })
        .collect();
    Ok(ValueEstimate::from_samples(&gaps))
}

/// Monte Carlo estimate of `E[T_{e(k,t)}]`.
pub fn terminal_time_stats(config: &SkeletonConfig, t: f64, n_paths: usize) -> ValueEstimate {
    let m = e_steps(t, config.epsilon_k, config.chi_d);
    let ends: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(config, m, i).times()[m])
        .collect();
    ValueEstimate::from_samples(&ends)
}

/// Monte Carlo estimate of `E max_{n ≤ e(k,T)} ΔT_n`.
pub fn max_step_stats(config: &SkeletonConfig, n_paths: usize) -> ValueEstimate {
    let m = config.steps();
    let maxima: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            simulate_path(config, m, i)
                .delta_times()
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .collect();
    ValueEstimate::from_samples(&maxima)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn cfg(d: usize, k: u32) -> SkeletonConfig {
        SkeletonConfig::dyadic(d, k, 1.0, if d == 1 { 1.0 } else { 0.5 }, 11).unwrap()
    }

    #[test]
    fn e_steps_formula() {
        assert_eq!(e_steps(0.0, 0.5, 1.0), 0);
        assert_eq!(e_steps(1.0, 0.5, 1.0), 4);
        assert_eq!(e_steps(1.0, 0.5, 0.6), 7);
        assert_eq!(e_steps(1.0, 0.125, 1.0), 64);
        assert_eq!(e_steps(0.3, 0.125, 1.0), 20);
    }

    #[test]
    fn config_rejects_out_of_range_chi() {
        assert!(SkeletonConfig::dyadic(2, 3, 1.0, 0.2, 0).is_err());
        assert!(SkeletonConfig::dyadic(2, 3, 1.0, 1.1, 0).is_err());
        assert!(SkeletonConfig::dyadic(0, 3, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn increments_live_on_the_lattice() {
        let c = cfg(3, 2);
        let path = simulate_path(&c, 2000, 0);
        for n in 1..=path.len() {
            assert!(is_lattice_increment(path.increment(n), c.epsilon_k));
            assert!(path.delta_time(n) > 0.0);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let c = cfg(2, 3);
        assert_eq!(simulate_path(&c, 100, 5), simulate_path(&c, 100, 5));
        assert_ne!(simulate_path(&c, 100, 5), simulate_path(&c, 100, 6));
    }

    #[test]
    fn reconstruct_empty_and_single_step() {
        let empty = SkeletonPath::new(2, 0.5);
        let a = reconstruct_ak(&empty);
        assert_eq!(a.at(3.0), &[0.0, 0.0]);
        let one = SkeletonPath::from_parts(2, 0.5, vec![0.2], vec![0.5, 0.1]).unwrap();
        let a = reconstruct_ak(&one);
        assert_eq!(a.at(0.1999), &[0.0, 0.0]);
        assert_eq!(a.at(0.2), &[0.5, 0.1]);
        assert_eq!(a.at(10.0), &[0.5, 0.1]);
    }

    #[test]
    fn from_parts_checks_membership() {
        assert!(SkeletonPath::from_parts(2, 0.5, vec![0.2], vec![0.5, 0.5]).is_err());
        assert!(SkeletonPath::from_parts(2, 0.5, vec![0.2], vec![0.4, 0.1]).is_err());
        assert!(SkeletonPath::from_parts(1, 0.5, vec![0.0], vec![0.5]).is_err());
    }

    #[test]
    fn index_at_finds_last_time_not_after() {
        let p =
            SkeletonPath::from_parts(1, 1.0, vec![0.5, 0.5, 1.0], vec![1.0, -1.0, 1.0]).unwrap();
        assert_eq!(p.index_at(0.0), 0);
        assert_eq!(p.index_at(0.49), 0);
        assert_eq!(p.index_at(0.5), 1);
        assert_eq!(p.index_at(1.99), 2);
        assert_eq!(p.index_at(5.0), 3);
    }

    #[test]
    fn horizon_gap_at_zero_is_zero() {
        let c = cfg(1, 3);
        let v = horizon_gap_stats(&c, 0.0, 1.0, 50).unwrap();
        assert_eq!(v.mean, 0.0);
    }

    #[test]
    fn past_horizon_crosses_horizon() {
        let c = cfg(2, 2);
        let mut rng = stream(3, Purpose::Skeleton, 0);
        let p = simulate_past_horizon(&c, 1.0, 3, &mut rng);
        assert!(*p.times().last().unwrap() > 1.0);
        assert!(p.times()[p.len() - 1] <= 1.0 || p.len() == 3);
    }
}
