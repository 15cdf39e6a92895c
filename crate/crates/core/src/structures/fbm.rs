//! Fractional Brownian motion driven by the skeleton.
//!
//! For `H > 1/2` the path is `Y(t) = ∫₀ᵗ ρ_H(t,s) A(s) ds`; since `A` is
//! constant between hitting times, the integral reduces to a sum of exact
//! step integrals of `ρ_H`, which after summation by parts read
//! `B(T_m) = c_H Σ_{n<m} K̃(T_m, T_n) η_n` with
//! `K̃(t,s) = s^{1/2−H} ∫_s^t u^{H−1/2} (u−s)^{H−3/2} du`.
//!
//! For `H < 1/2` the operator `Λ_H` is applied to the step path: on each step
//! the brackets are constant and `∂_s K_{H,i}` integrates to a difference of
//! `K_{H,i}` values, with `K_{H,2}` in closed form through the regularized
//! incomplete beta function.

use super::{evaluate, ControlledStructure, Driver, SdeCoefficients, StatePath, StepContext};
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::skeleton::{SkeletonPath, StepFunction};
use statrs::function::beta::{beta_reg, ln_beta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbmSpec {
    pub hurst: f64,
    pub sigma: f64,
    /// `c_H`; [`FbmSpec::new`] picks the normalization with `Var B_H(t) = t^{2H}`.
    pub molchan_constant: f64,
}

impl FbmSpec {
    pub fn new(hurst: f64, sigma: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) || hurst == 0.5 {
            return Err(Error::invalid(
                "hurst",
                format!("must lie in (0,1) \\ {{1/2}}, got {hurst}"),
            ));
        }
        if !sigma.is_finite() {
            return Err(Error::invalid("sigma", "must be finite"));
        }
        Ok(Self {
            hurst,
            sigma,
            molchan_constant: molchan_constant(hurst),
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) || self.hurst == 0.5 {
            return Err(Error::invalid(
                "hurst",
                format!("must lie in (0,1) \\ {{1/2}}, got {}", self.hurst),
            ));
        }
        if !(self.molchan_constant > 0.0 && self.molchan_constant.is_finite()) {
            return Err(Error::invalid("molchan_constant", "must be positive"));
        }
        Ok(())
    }
}

/// Molchan–Golosov constant giving `Var B_H(t) = t^{2H}`.
pub fn molchan_constant(h: f64) -> f64 {
    if h > 0.5 {
        (h * (2.0 * h - 1.0) / ln_beta(2.0 - 2.0 * h, h - 0.5).exp()).sqrt()
    } else {
        (2.0 * h / ((1.0 - 2.0 * h) * ln_beta(1.0 - 2.0 * h, h + 0.5).exp())).sqrt()
    }
}

/// `K̃(t,s) = s^{-a} ∫_s^t u^a (u−s)^{a−1} du` with `a = H − 1/2 > 0`.
/// Substituting `u = s/x` and integrating by parts once gives
/// `s^a [z^{−2a}(1−z)^a / (2a) + ½ B(1−2a, a)(1 − I_z(1−2a, a))]`, `z = s/t`.
#[cfg(test)]
fn ktilde(t: f64, s: f64, a: f64) -> f64 {
    ktilde_with(t, s, a, ln_beta(1.0 - 2.0 * a, a).exp())
}

fn ktilde_with(t: f64, s: f64, a: f64, beta_full: f64) -> f64 {
    if s >= t {
        return 0.0;
    }
    let z = s / t;
    let boundary = z.powf(-2.0 * a) * (1.0 - z).powf(a) / (2.0 * a);
    let tail = 1.0 - beta_reg(1.0 - 2.0 * a, a, z);
    s.powf(a) * (boundary + 0.5 * beta_full * tail)
}

/// `K̃` by quadrature after `u − s = v^{1/a}`, which removes the endpoint
/// singularity.
fn ktilde_by_quadrature(t: f64, s: f64, a: f64) -> f64 {
    let h = t - s;
    let g = |w: f64| (s + h * w.powf(1.0 / a)).powf(a);
    // g bends where h·w^{1/a} ≈ s
    let knee = (s / h).powf(a).min(1.0);
    let integral = integrate(g, 0.0, knee, 1e-13, 0.0) + integrate(g, knee, 1.0, 1e-13, 0.0);
    s.powf(-a) * h.powf(a) / a * integral
}

/// Pointwise `ρ_H(t,s)` for `H > 1/2`, with `d_H = −c_H` so that the
/// resulting process is positively correlated with the driving motion.
pub fn rho_h(t: f64, s: f64, spec: &FbmSpec) -> f64 {
    let h = spec.hurst;
    assert!(h > 0.5, "ρ_H is the H > 1/2 kernel");
    let a = h - 0.5;
    let inner = s.powf(a) * ktilde_by_quadrature(t, s, a);
    let d_h = -spec.molchan_constant;
    d_h * (a * s.powf(-h - 0.5) * inner
        - s.powf(-h - 0.5) * t.powf(h + 0.5) * (t - s).powf(h - 1.5))
}

fn k1(t: f64, s: f64, h: f64, c: f64) -> f64 {
    if s <= 0.0 || s >= t {
        return 0.0;
    }
    c * (t / s).powf(h - 0.5) * (t - s).powf(h - 0.5)
}

/// `K_{H,2}(t,s) = c (1/2−H) s^{H−1/2} B(1−2H, H+1/2) (1 − I_{s/t}(1−2H, H+1/2))`.
fn k2(t: f64, s: f64, h: f64, c: f64, beta_full: f64) -> f64 {
    if s >= t {
        return 0.0;
    }
    let tail = 1.0 - beta_reg(1.0 - 2.0 * h, h + 0.5, s / t);
    c * (0.5 - h) * s.powf(h - 0.5) * beta_full * tail
}

/// `K_{H,2}` by direct quadrature, used to cross-check the closed form.
#[cfg(test)]
fn k2_by_quadrature(t: f64, s: f64, spec: &FbmSpec) -> f64 {
    let h = spec.hurst;
    let b = h + 0.5;
    // u − s = v^{1/b} removes the (u−s)^{H−1/2} singularity
    let f = |v: f64| {
        let u = s + v.powf(1.0 / b);
        u.powf(h - 1.5) / b
    };
    let inner = integrate(f, 0.0, (t - s).powf(b), 1e-12, 0.0);
    spec.molchan_constant * (0.5 - h) * s.powf(0.5 - h) * inner
}

#[cfg(test)]
fn k2_closed(t: f64, s: f64, spec: &FbmSpec) -> f64 {
    let h = spec.hurst;
    k2(
        t,
        s,
        h,
        spec.molchan_constant,
        ln_beta(1.0 - 2.0 * h, h + 0.5).exp(),
    )
}

/// Per-axis view of the skeleton: times and partial sums `A_0 = 0, …, A_n`.
struct AxisData<'a> {
    times: &'a [f64],
    sums: Vec<f64>,
}

impl<'a> AxisData<'a> {
    fn new(skeleton: &'a SkeletonPath, axis: usize, n: usize) -> Self {
        let d = skeleton.dimension();
        let flat = skeleton.increments_flat();
        let mut sums = Vec::with_capacity(n + 1);
        sums.push(0.0);
        for i in 0..n {
            let last = sums[i];
            sums.push(last + flat[i * d + axis]);
        }
        Self {
            times: &skeleton.times()[..=n],
            sums,
        }
    }
}

fn value_high(data: &AxisData<'_>, m: usize, spec: &FbmSpec) -> f64 {
    let a = spec.hurst - 0.5;
    let beta_full = ln_beta(1.0 - 2.0 * a, a).exp();
    let t = data.times[m];
    let mut acc = 0.0;
    for n in 1..m {
        let eta = data.sums[n] - data.sums[n - 1];
        if eta != 0.0 {
            acc += ktilde_with(t, data.times[n], a, beta_full) * eta;
        }
    }
    spec.molchan_constant * acc
}

fn value_low(data: &AxisData<'_>, m: usize, spec: &FbmSpec, beta_full: f64) -> f64 {
    let h = spec.hurst;
    let c = spec.molchan_constant;
    let t = data.times[m];
    let a = &data.sums;
    let k1v: Vec<f64> = data.times[..=m].iter().map(|&s| k1(t, s, h, c)).collect();
    let mut first = 0.0;
    for n in 0..m.saturating_sub(1) {
        first += (a[m] - a[n + 1]) * (k1v[n + 1] - k1v[n]);
    }
    let mut second = 0.0;
    if m >= 2 {
        let mut k2_next = k2(t, data.times[1], h, c, beta_full);
        for n in 1..m {
            let k2_cur = k2_next;
            k2_next = k2(t, data.times[n + 1], h, c, beta_full);
            second += a[n] * (k2_next - k2_cur);
        }
    }
    first - second
}

fn value_at_index(data: &AxisData<'_>, m: usize, spec: &FbmSpec) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if spec.hurst > 0.5 {
        value_high(data, m, spec)
    } else {
        let h = spec.hurst;
        value_low(data, m, spec, ln_beta(1.0 - 2.0 * h, h + 0.5).exp())
    }
}

/// `B^k_H(T_0), …, B^k_H(T_n)` on one skeleton axis. Cost is quadratic in `n`.
pub fn fbm_path(
    skeleton: &SkeletonPath,
    spec: &FbmSpec,
    axis: usize,
    n: usize,
) -> Result<StepFunction> {
    spec.validate()?;
    if axis >= skeleton.dimension() {
        return Err(Error::invalid(
            "axis",
            format!("{axis} out of range for d = {}", skeleton.dimension()),
        ));
    }
    if n > skeleton.len() {
        return Err(Error::LengthMismatch {
            what: "skeleton steps",
            needed: n,
            got: skeleton.len(),
        });
    }
    let data = AxisData::new(skeleton, axis, n);
    let mut values = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let v = value_at_index(&data, m, spec);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { step: m, path: 0 });
        }
        values.push(v);
    }
    Ok(StepFunction {
        dimension: 1,
        times: data.times.to_vec(),
        values,
    })
}

/// `B^k_H(t) = B^k_H(t̄_k)` on one axis, in time linear in the number of steps
/// before `t`.
pub fn fbm_value_at(skeleton: &SkeletonPath, spec: &FbmSpec, axis: usize, t: f64) -> Result<f64> {
    spec.validate()?;
    let m = skeleton.index_at(t);
    let data = AxisData::new(skeleton, axis, m);
    let v = value_at_index(&data, m, spec);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue { step: m, path: 0 })
    }
}

/// Axis-0 path for `H > 1/2`.
pub fn fbm_high(skeleton: &SkeletonPath, spec: &FbmSpec) -> Result<StepFunction> {
    if spec.hurst <= 0.5 {
        return Err(Error::invalid("hurst", "fbm_high needs H > 1/2"));
    }
    fbm_path(skeleton, spec, 0, skeleton.len())
}

/// Axis-0 path for `H < 1/2`.
pub fn fbm_low(skeleton: &SkeletonPath, spec: &FbmSpec) -> Result<StepFunction> {
    if spec.hurst >= 0.5 {
        return Err(Error::invalid("hurst", "fbm_low needs H < 1/2"));
    }
    fbm_path(skeleton, spec, 0, skeleton.len())
}

/// Scalar `X_m = X_{m−1} + α ΔT_m + σ ΔB^k_H(T_m)`; only the drift of the
/// coefficients is used, `σ` comes from the [`FbmSpec`].
pub struct FbmDriftSde<C> {
    pub coefficients: C,
    pub spec: FbmSpec,
}

impl<C: SdeCoefficients> ControlledStructure for FbmDriftSde<C> {
    fn state_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        self.coefficients.x0()
    }

    fn driver(&self, skeleton: &SkeletonPath, n: usize) -> Result<Driver> {
        let path = fbm_path(skeleton, &self.spec, 0, n)?;
        Ok(Driver {
            width: 1,
            data: path.values,
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
        self.coefficients.drift(ctx, action, out);
        let db = driver.row(q)[0] - driver.row(q - 1)[0];
        out[0] = ctx.current()[0] + out[0] * skeleton.delta_time(q) + self.spec.sigma * db;
    }
}

pub fn fbm_drift_sde<C: SdeCoefficients>(
    coefficients: C,
    spec: FbmSpec,
    skeleton: &SkeletonPath,
    actions: &[Vec<f64>],
    stop: usize,
) -> Result<StatePath> {
    if coefficients.state_dim() != 1 {
        return Err(Error::invalid(
            "coefficients",
            "fbm_drift_sde needs a scalar state",
        ));
    }
    spec.validate()?;
    let structure = FbmDriftSde { coefficients, spec };
    evaluate(&structure, skeleton, actions, stop, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k2_closed_form_matches_quadrature() {
        for &h in &[0.1, 0.3, 0.45] {
            let spec = FbmSpec::new(h, 1.0).unwrap();
            for &(t, s) in &[(1.0, 0.001), (1.0, 0.3), (0.7, 0.69), (2.0, 1.5)] {
                let a = k2_closed(t, s, &spec);
                let b = k2_by_quadrature(t, s, &spec);
                assert!(
                    (a - b).abs() <= 1e-8 * b.abs().max(1e-12),
                    "H={h} t={t} s={s}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn ktilde_closed_form_matches_quadrature() {
        for &h in &[0.55, 0.7, 0.95] {
            let a = h - 0.5;
            for &(t, s) in &[
                (1.0, 0.2),
                (1.0, 0.9),
                (0.5, 0.01),
                (1.0, 1e-5),
                (1.0, 0.999),
            ] {
                let got = ktilde(t, s, a);
                let direct = ktilde_by_quadrature(t, s, a);
                assert!(
                    (got - direct).abs() <= 1e-9 * direct.abs(),
                    "H={h} s={s}: {got} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn step_integral_of_rho_matches_kernel_difference() {
        let spec = FbmSpec::new(0.7, 1.0).unwrap();
        let a = spec.hurst - 0.5;
        let (t, lo, hi) = (1.0, 0.2, 0.45);
        let direct = integrate(|s| rho_h(t, s, &spec), lo, hi, 1e-10, 0.0);
        let closed = spec.molchan_constant * (ktilde(t, hi, a) - ktilde(t, lo, a)) * -1.0;
        // ∫_lo^hi ρ = d_H (K̃(t,hi) − K̃(t,lo)) with d_H = −c_H
        assert!(
            (direct - closed).abs() < 1e-8 * closed.abs(),
            "{direct} vs {closed}"
        );
    }

    #[test]
    fn molchan_constants_are_positive() {
        for &h in &[0.1, 0.3, 0.7, 0.9] {
            assert!(molchan_constant(h) > 0.0);
        }
        assert!(FbmSpec::new(0.5, 1.0).is_err());
        assert!(FbmSpec::new(1.0, 1.0).is_err());
    }
}
