use super::fbm::{fbm_path, FbmSpec};
use super::{evaluate, ControlledStructure, Driver, StatePath, StepContext};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonPath;
use std::fmt;
use std::sync::Arc;

pub type VolFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Rough fractional Ornstein–Uhlenbeck volatility factor driving a price:
/// `dZ = ν dW_H − β(Z − m) dt`, `dX = X(μ(Z,v) dt + ϑ(Z,v) dB¹)`.
#[derive(Clone)]
pub struct RoughVolSpec {
    pub hurst: f64,
    pub nu: f64,
    pub beta: f64,
    pub m: f64,
    pub z0: f64,
    pub rho: f64,
    pub x0: f64,
    pub mu: VolFn,
    /// Must be bounded.
    pub vartheta: VolFn,
}

impl fmt::Debug for RoughVolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoughVolSpec")
            .field("hurst", &self.hurst)
            .field("nu", &self.nu)
            .field("beta", &self.beta)
            .field("m", &self.m)
            .field("z0", &self.z0)
            .field("rho", &self.rho)
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

impl RoughVolSpec {
    /// Zero drift and `ϑ(z) = clamp(ξ e^z, lo, hi)`.
    pub fn exponential(
        hurst: f64,
        nu: f64,
        beta: f64,
        z0: f64,
        rho: f64,
        x0: f64,
        xi: f64,
        lo: f64,
        hi: f64,
    ) -> Self {
        Self {
            hurst,
            nu,
            beta,
            m: 0.0,
            z0,
            rho,
            x0,
            mu: Arc::new(|_, _| 0.0),
            vartheta: Arc::new(move |z, _| (xi * z.exp()).clamp(lo, hi)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return Err(Error::invalid(
                "hurst",
                format!("must lie in (0, 1/2), got {}", self.hurst),
            ));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu", "must be non-negative"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", "must be non-negative"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::invalid(
                "rho",
                format!("must lie in (-1, 1), got {}", self.rho),
            ));
        }
        if !(self.z0.is_finite() && self.m.is_finite() && self.x0.is_finite()) {
            return Err(Error::invalid("z0", "z0, m and x0 must be finite"));
        }
        Ok(())
    }
}

/// State `(X, Z)`; the volatility factor is control-free and precomputed.
pub struct RoughVol {
    pub spec: RoughVolSpec,
}

impl RoughVol {
    pub fn new(spec: RoughVolSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    /// `Z^k(T_0), …, Z^k(T_n)`.
    pub fn factor_path(&self, skeleton: &SkeletonPath, n: usize) -> Result<Vec<f64>> {
        let s = &self.spec;
        let fbm = FbmSpec::new(s.hurst, 1.0)?;
        let w1 = fbm_path(skeleton, &fbm, 0, n)?.values;
        let w2 = fbm_path(skeleton, &fbm, 1, n)?.values;
        let rho_bar = (1.0 - s.rho * s.rho).sqrt();
        let times = skeleton.times();
        let mut z = Vec::with_capacity(n + 1);
        // running Σ_{j<q} W(T_j) e^{β T_j} ΔT_{j+1}
        let mut integral = 0.0;
        for q in 0..=n {
            let w = s.rho * w1[q] + rho_bar * w2[q];
            let t = times[q];
            let decay = (-s.beta * t).exp();
            z.push(s.m + decay * (s.z0 - s.m) + s.nu * w - s.beta * s.nu * decay * integral);
            if q < n {
                integral += w * (s.beta * t).exp() * (times[q + 1] - t);
            }
        }
        Ok(z)
    }
}

impl ControlledStructure for RoughVol {
    fn state_dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![self.spec.x0, self.spec.z0]
    }

    fn driver(&self, skeleton: &SkeletonPath, n: usize) -> Result<Driver> {
        Ok(Driver {
            width: 1,
            data: self.factor_path(skeleton, n)?,
        })
    }

    fn step(
        &self,
        q: usize,
        skeleton: &SkeletonPath,
        driver: &Driver,
        ctx: &StepContext<'_>,
        action: &[f64],
        out: &mut [f64],
    ) {
        let prev = ctx.current();
        let (x, z) = (prev[0], prev[1]);
        let mu = (self.spec.mu)(z, action);
        let theta = (self.spec.vartheta)(z, action);
        out[0] = x * (1.0 + mu * skeleton.delta_time(q) + theta * skeleton.increment(q)[0]);
        out[1] = driver.row(q)[0];
    }
}

/// Price path and volatility-factor path, both frozen after `stop`.
pub fn rough_vol_paths(
    spec: RoughVolSpec,
    skeleton: &SkeletonPath,
    actions: &[Vec<f64>],
    stop: usize,
) -> Result<(StatePath, StatePath)> {
    if skeleton.dimension() != 2 {
        return Err(Error::invalid(
            "skeleton",
            "rough volatility needs a 2-dimensional skeleton",
        ));
    }
    let path = evaluate(&RoughVol::new(spec)?, skeleton, actions, stop, 0)?;
    let split = |i: usize| StatePath::from_rows(1, path.component(i), path.stop_index());
    Ok((split(0), split(1)))
}
