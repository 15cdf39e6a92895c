use super::{
    evaluate, ControlledStructure, Driver, Geometric, SdeCoefficients, StatePath, StepContext,
};
use crate::error::{Error, Result};
use crate::skeleton::{simulate_path, SkeletonConfig, SkeletonPath};
use crate::stats::ValueEstimate;
use rayon::prelude::*;

/// Euler scheme on the skeleton's random partition:
/// `X_q = X_{q-1} + α ΔT_q + σ η_q`, coefficients evaluated at step `q − 1`.
pub struct EulerSde<C> {
    pub coefficients: C,
}

impl<C: SdeCoefficients> EulerSde<C> {
    pub fn new(coefficients: C) -> Self {
        Self { coefficients }
    }
}

impl<C: SdeCoefficients> ControlledStructure for EulerSde<C> {
    fn state_dim(&self) -> usize {
        self.coefficients.state_dim()
    }

    fn noise_dim(&self) -> usize {
        self.coefficients.noise_dim()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.coefficients.x0()
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
        let n = self.state_dim();
        let d = self.noise_dim();
        let mut sigma = vec![0.0; n * d];
        self.coefficients.drift(ctx, action, out);
        self.coefficients.diffusion(ctx, action, &mut sigma);
        let dt = skeleton.delta_time(q);
        let eta = skeleton.increment(q);
        let prev = ctx.current();
        for i in 0..n {
            let noise: f64 = sigma[i * d..(i + 1) * d]
                .iter()
                .zip(eta)
                .map(|(s, e)| s * e)
                .sum();
            out[i] = prev[i] + out[i] * dt + noise;
        }
    }
}

/// Run the Euler scheme for `stop` steps with the given actions.
pub fn euler_pd_sde<C: SdeCoefficients>(
    coefficients: C,
    skeleton: &SkeletonPath,
    actions: &[Vec<f64>],
    stop: usize,
) -> Result<StatePath> {
    evaluate(&EulerSde::new(coefficients), skeleton, actions, stop, 0)
}

impl<C: SdeCoefficients + ?Sized> SdeCoefficients for Box<C> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn x0(&self) -> Vec<f64> {
        (**self).x0()
    }
    fn drift(&self, ctx: &StepContext<'_>, action: &[f64], out: &mut [f64]) {
        (**self).drift(ctx, action, out)
    }
    fn diffusion(&self, ctx: &StepContext<'_>, action: &[f64], out: &mut [f64]) {
        (**self).diffusion(ctx, action, out)
    }
}

/// Monte Carlo estimate of `E max_{n ≤ e(k,T)} |X^k(T_n) − X(T_n)|` for the
/// scalar geometric SDE. With `d = 1` the skeleton visits Brownian motion
/// exactly (`B(T_n) = A_n`), so `X(T_n) = x0 exp((μ − σ²/2)T_n + σA_n)`.
pub fn geometric_strong_error(
    coef: Geometric,
    config: &SkeletonConfig,
    n_paths: usize,
) -> Result<ValueEstimate> {
    config.validate()?;
    if config.dimension != 1 {
        return Err(Error::invalid(
            "dimension",
            "the exact solution needs d = 1",
        ));
    }
    let m = config.steps();
    let errors: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let skel = simulate_path(config, m, i);
            let euler = euler_pd_sde(coef, &skel, &vec![Vec::new(); m], m)?;
            let drift = coef.mu - 0.5 * coef.sigma * coef.sigma;
            let mut a = 0.0;
            let mut worst = 0.0f64;
            for n in 1..=m {
                a += skel.increment(n)[0];
                let exact = coef.x0 * (drift * skel.times()[n] + coef.sigma * a).exp();
                worst = worst.max((euler.value(n)[0] - exact).abs());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(ValueEstimate::from_samples(&errors))
}
