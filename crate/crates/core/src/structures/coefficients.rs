use super::StepContext;
use crate::error::{Error, Result};

/// Drift and diffusion of a path-dependent SDE. Coefficients see the state
/// prefix up to the current step and the current action only; callers are
/// responsible for the Lipschitz and growth conditions the scheme relies on.
pub trait SdeCoefficients: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn x0(&self) -> Vec<f64>;

    /// `α`, an `n`-vector.
    fn drift(&self, ctx: &StepContext<'_>, action: &[f64], out: &mut [f64]);

    /// `σ`, an `n × d` matrix in row-major order.
    fn diffusion(&self, ctx: &StepContext<'_>, action: &[f64], out: &mut [f64]);
}

/// `α ≡ 0`, `σ ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroCoefficients {
    pub x0: Vec<f64>,
    pub noise_dim: usize,
}

impl SdeCoefficients for ZeroCoefficients {
    fn state_dim(&self) -> usize {
        self.x0.len()
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn x0(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn drift(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `α ≡ 0`, `σ ≡ I` with `n = d`.
#[derive(Debug, Clone)]
pub struct IdentityDiffusion {
    pub x0: Vec<f64>,
}

impl SdeCoefficients for IdentityDiffusion {
    fn state_dim(&self) -> usize {
        self.x0.len()
    }
    fn noise_dim(&self) -> usize {
        self.x0.len()
    }
    fn x0(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn drift(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        let n = self.x0.len();
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = 1.0;
        }
    }
}

/// Scalar geometric motion `dX = μX dt + σX dB`.
#[derive(Debug, Clone, Copy)]
pub struct Geometric {
    pub x0: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl SdeCoefficients for Geometric {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> Vec<f64> {
        vec![self.x0]
    }
    fn drift(&self, ctx: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out[0] = self.mu * ctx.current()[0];
    }
    fn diffusion(&self, ctx: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * ctx.current()[0];
    }
}

/// Scalar `dX = θ(m − X) dt + σ dB`.
#[derive(Debug, Clone, Copy)]
pub struct OrnsteinUhlenbeck {
    pub x0: f64,
    pub theta: f64,
    pub mean: f64,
    pub sigma: f64,
}

impl SdeCoefficients for OrnsteinUhlenbeck {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> Vec<f64> {
        vec![self.x0]
    }
    fn drift(&self, ctx: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out[0] = self.theta * (self.mean - ctx.current()[0]);
    }
    fn diffusion(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
}

/// Constant drift `α ≡ c`, constant scalar volatility.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDrift {
    pub x0: f64,
    pub drift: f64,
    pub sigma: f64,
}

impl SdeCoefficients for ConstantDrift {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> Vec<f64> {
        vec![self.x0]
    }
    fn drift(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out[0] = self.drift;
    }
    fn diffusion(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
}

/// Linear controlled drift: `α = a` (action dimension equals state dimension)
/// and a constant diagonal volatility acting on the first `n` noise axes.
#[derive(Debug, Clone)]
pub struct ControlledDrift {
    pub x0: Vec<f64>,
    pub sigma: f64,
    pub noise_dim: usize,
}

impl SdeCoefficients for ControlledDrift {
    fn state_dim(&self) -> usize {
        self.x0.len()
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn x0(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn drift(&self, _: &StepContext<'_>, action: &[f64], out: &mut [f64]) {
        for (o, a) in out
            .iter_mut()
            .zip(action.iter().chain(std::iter::repeat(&0.0)))
        {
            *o = *a;
        }
    }
    fn diffusion(&self, _: &StepContext<'_>, _: &[f64], out: &mut [f64]) {
        let (n, d) = (self.x0.len(), self.noise_dim);
        out.fill(0.0);
        for i in 0..n.min(d) {
            out[i * d + i] = self.sigma;
        }
    }
}

type CoefFn = dyn Fn(&StepContext<'_>, &[f64], &mut [f64]) + Send + Sync;

/// Coefficients from closures, for user-defined models.
pub struct FnCoefficients {
    pub x0: Vec<f64>,
    pub noise_dim: usize,
    pub drift: Box<CoefFn>,
    pub diffusion: Box<CoefFn>,
}

impl SdeCoefficients for FnCoefficients {
    fn state_dim(&self) -> usize {
        self.x0.len()
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn x0(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn drift(&self, ctx: &StepContext<'_>, action: &[f64], out: &mut [f64]) {
        (self.drift)(ctx, action, out)
    }
    fn diffusion(&self, ctx: &StepContext<'_>, action: &[f64], out: &mut [f64]) {
        (self.diffusion)(ctx, action, out)
    }
}

/// Build a scalar built-in by name. Parameters are looked up with defaults:
/// `x0` (1), `mu` (0), `sigma` (0.2), `theta` (1), `mean` (0), `drift` (0).
pub fn coefficient_registry(
    name: &str,
    param: impl Fn(&str) -> Option<f64>,
) -> Result<Box<dyn SdeCoefficients>> {
    let get = |key: &str, default: f64| param(key).unwrap_or(default);
    let x0 = get("x0", 1.0);
    let sigma = get("sigma", 0.2);
    Ok(match name {
        "zero" => Box::new(ZeroCoefficients {
            x0: vec![x0],
            noise_dim: 1,
        }),
        "identity" => Box::new(IdentityDiffusion { x0: vec![x0] }),
        "geometric" => Box::new(Geometric {
            x0,
            mu: get("mu", 0.0),
            sigma,
        }),
        "ou" => Box::new(OrnsteinUhlenbeck {
            x0,
            theta: get("theta", 1.0),
            mean: get("mean", 0.0),
            sigma,
        }),
        "constant" => Box::new(ConstantDrift {
            x0,
            drift: get("drift", 0.0),
            sigma,
        }),
        "linear" => Box::new(ControlledDrift {
            x0: vec![x0],
            sigma,
            noise_dim: 1,
        }),
        other => {
            return Err(Error::UnknownName {
                kind: "coefficients",
                name: other.to_string(),
            })
        }
    })
}
