//! Building-block laws of the skeleton.
//!
//! `τ` denotes the first exit time of a standard Brownian motion started at 0
//! from the interval `[-1, 1]`. Its survival function has two classical series
//! representations: a reflection (theta) series that converges fast for small
//! `t` and a spectral series that converges fast for large `t`.

use crate::error::{Error, Result};
use crate::quadrature;
use crate::stats::{norm_cdf, norm_pdf, norm_ppf, norm_sf, ValueEstimate};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use std::f64::consts::PI;

const PI2_OVER_8: f64 = PI * PI / 8.0;

/// Law of the exit time `τ` of standard Brownian motion from `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitTimeDist {
    /// Maximum number of terms kept from either series.
    pub series_terms: usize,
    /// Times below this use the reflection series, times at or above it the
    /// spectral series.
    pub switch_point: f64,
}

impl Default for ExitTimeDist {
    fn default() -> Self {
        // Both series decay at the same geometric rate at t = 2/π.
        Self {
            series_terms: 20,
            switch_point: 2.0 / PI,
        }
    }
}

impl ExitTimeDist {
    pub fn new(series_terms: usize, switch_point: f64) -> Result<Self> {
        if series_terms == 0 {
            return Err(Error::invalid("series_terms", "must be positive"));
        }
        if !(switch_point > 0.0 && switch_point.is_finite()) {
            return Err(Error::invalid(
                "switch_point",
                "must be a positive finite time",
            ));
        }
        Ok(Self {
            series_terms,
            switch_point,
        })
    }

    /// `P(τ ≤ t)` from the reflection series, `4 Σ (-1)^n Φc((2n+1)/√t)`.
    fn cdf_small(&self, t: f64) -> f64 {
        let rt = t.sqrt();
        let mut acc = 0.0;
        for n in 0..self.series_terms {
            let term = norm_sf((2 * n + 1) as f64 / rt);
            if term == 0.0 {
                break;
            }
            acc += if n % 2 == 0 { term } else { -term };
        }
        4.0 * acc
    }

    /// `P(τ > t)` from the spectral series, `(4/π) Σ (-1)^n e^{-(2n+1)²π²t/8} / (2n+1)`.
    fn survival_large(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.series_terms {
            let m = (2 * n + 1) as f64;
            let term = (-m * m * PI2_OVER_8 * t).exp() / m;
            if term == 0.0 {
                break;
            }
            acc += if n % 2 == 0 { term } else { -term };
        }
        4.0 / PI * acc
    }

    /// `P(τ > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else if t < self.switch_point {
            1.0 - self.cdf_small(t)
        } else {
            self.survival_large(t)
        }
    }

    /// `P(τ ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t < self.switch_point {
            self.cdf_small(t)
        } else {
            1.0 - self.survival_large(t)
        }
    }

    /// Density of `τ`.
    pub fn density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        if t < self.switch_point {
            let rt = t.sqrt();
            for n in 0..self.series_terms {
                let m = (2 * n + 1) as f64;
                let term = m * norm_pdf(m / rt);
                if term == 0.0 {
                    break;
                }
                acc += if n % 2 == 0 { term } else { -term };
            }
            2.0 * acc / (t * rt)
        } else {
            for n in 0..self.series_terms {
                let m = (2 * n + 1) as f64;
                let term = m * (-m * m * PI2_OVER_8 * t).exp();
                if term == 0.0 {
                    break;
                }
                acc += if n % 2 == 0 { term } else { -term };
            }
            PI / 2.0 * acc
        }
    }

    /// Inverse CDF at `u ∈ (0, 1)`: safeguarded Newton on `cdf(t) = u`,
    /// converged to an absolute tolerance of `1e-12` in `t`.
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        // S(t) ≤ (4/π) e^{-π²t/8} gives an upper bracket.
        let mut hi = (4.0 / (PI * (1.0 - u))).ln().max(0.0) / PI2_OVER_8 + 1e-3;
        while self.cdf(hi) < u {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut t = if u < 0.5 {
            // P(τ ≤ t) ≈ 4Φc(1/√t) for small t
            let z = norm_ppf(u / 4.0);
            (1.0 / (z * z)).clamp(1e-6, hi)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..200 {
            let g = self.cdf(t) - u;
            if g == 0.0 {
                return t;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let f = self.density(t);
            let mut next = t - g / f;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let step = (next - t).abs();
            t = next;
            if step <= 1e-12 || hi - lo <= 1e-12 {
                break;
            }
        }
        t
    }

    /// One draw of `τ` at unit scale by inversion of the CDF.
    pub fn sample_by_inversion<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile(u);
            }
        }
    }

    /// One draw of `τ` at unit scale.
    ///
    /// Exact alternating-series rejection sampler (Devroye): the proposal is a
    /// Lévy law truncated to `(0, t*)` glued to an exponential tail on
    /// `[t*, ∞)`, both proportional to the leading term of the density series.
    /// The series is then evaluated only as far as needed to accept or reject.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = if rng.random::<f64>() < *TAIL_WEIGHT {
                SERIES_CUT + rng.sample::<f64, _>(Exp1) / PI2_OVER_8
            } else {
                // Z ~ N(0,1) conditioned on Z > 1/√t*, then x = 1/Z²
                let a = 1.0 / SERIES_CUT.sqrt();
                let z = loop {
                    let e1: f64 = rng.sample(Exp1);
                    let e2: f64 = rng.sample(Exp1);
                    let x = e1 / a;
                    if 2.0 * e2 > x * x {
                        break a + x;
                    }
                };
                1.0 / (z * z)
            };
            let mut s = series_coefficient(0, x);
            let y = rng.random::<f64>() * s;
            let mut n = 0;
            loop {
                n += 1;
                let a = series_coefficient(n, x);
                if n % 2 == 1 {
                    s -= a;
                    if y <= s {
                        return x;
                    }
                } else {
                    s += a;
                    if y > s {
                        break;
                    }
                }
            }
        }
    }
}

/// Split point between the small-time and large-time density series used by
/// the rejection sampler.
const SERIES_CUT: f64 = 0.64;

/// Mass of the exponential-tail part of the proposal, `p / (p + q)` with
/// `p = (4/π) e^{-π² t*/8}` and `q = 4 Φc(1/√t*)`.
static TAIL_WEIGHT: std::sync::LazyLock<f64> = std::sync::LazyLock::new(|| {
    let p = 4.0 / PI * (-PI2_OVER_8 * SERIES_CUT).exp();
    let q = 4.0 * norm_sf(1.0 / SERIES_CUT.sqrt());
    p / (p + q)
});

/// n-th term of the density series, small-time form below the cut and
/// spectral form above it.
fn series_coefficient(n: usize, x: f64) -> f64 {
    let m = n as f64 + 0.5;
    if x > SERIES_CUT {
        PI * m * (-m * m * PI * PI * x / 2.0).exp()
    } else {
        PI * m * (2.0 / (PI * x)).powf(1.5) * (-2.0 * m * m / x).exp()
    }
}

/// One draw of `τ` with the default series settings.
pub fn sample_exit_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ExitTimeDist::default().sample(rng)
}

/// `P(τ > t)` with the default series settings.
pub fn exit_time_survival(t: f64) -> f64 {
    ExitTimeDist::default().survival(t)
}

/// Draw from `N(0, variance)` conditioned on `(-bound, bound)`.
pub fn sample_nonexit_coordinate<R: Rng + ?Sized>(variance: f64, bound: f64, rng: &mut R) -> f64 {
    debug_assert!(variance > 0.0 && bound > 0.0);
    let sd = variance.sqrt();
    let z = bound / sd;
    if z > 4.0 {
        // acceptance probability above 0.9999
        loop {
            let x: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            if x.abs() < bound {
                return x;
            }
        }
    }
    let p_lo = norm_cdf(-z);
    let width = norm_cdf(z) - p_lo;
    loop {
        let u: f64 = rng.random();
        let x = sd * norm_ppf(p_lo + u * width);
        if x.abs() < bound && x.is_finite() {
            return x;
        }
    }
}

/// CDF of `N(0, variance)` truncated to `(-bound, bound)`.
pub fn truncated_normal_cdf(x: f64, variance: f64, bound: f64) -> f64 {
    if x <= -bound {
        return 0.0;
    }
    if x >= bound {
        return 1.0;
    }
    let sd = variance.sqrt();
    let lo = norm_cdf(-bound / sd);
    (norm_cdf(x / sd) - lo) / (norm_cdf(bound / sd) - lo)
}

/// Monte Carlo estimate of `χ_d = E min(τ¹, …, τ^d)`.
pub fn estimate_chi<R: Rng + ?Sized>(d: usize, n_samples: usize, rng: &mut R) -> ValueEstimate {
    let dist = ExitTimeDist::default();
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            (0..d)
                .map(|_| dist.sample(rng))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    ValueEstimate::from_samples(&samples)
}

/// `χ_d = ∫_0^∞ P(τ > t)^d dt` by quadrature.
pub fn chi_by_quadrature(d: usize) -> f64 {
    let dist = ExitTimeDist::default();
    quadrature::integrate_to_infinity(|t| dist.survival(t).powi(d as i32), 0.0, 1e-12, 1e-14)
}

/// One-step transition kernel `ν^k` of the skeleton: the joint law of the
/// waiting time `ΔT`, the exiting axis with its sign, and the positions of the
/// non-exiting coordinates.
///
/// Given `ΔT = ε² u`, each non-exiting coordinate is a centred normal with
/// variance `ΔT` truncated to `(-ε, ε)`, matching [`crate::skeleton`]'s sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNu {
    pub epsilon_k: f64,
    pub dimension: usize,
}

impl KernelNu {
    pub fn new(epsilon_k: f64, dimension: usize) -> Result<Self> {
        if !(epsilon_k > 0.0 && epsilon_k.is_finite()) {
            return Err(Error::invalid("epsilon_k", "must be positive"));
        }
        if dimension == 0 {
            return Err(Error::invalid("dimension", "must be at least 1"));
        }
        Ok(Self {
            epsilon_k,
            dimension,
        })
    }

    /// `ν^k((a,b) × {exit_sign·ε on exit_axis} × Π (lo_i, hi_i))`, where
    /// `others` lists the ranges of the non-exiting coordinates in axis order.
    pub fn mass(
        &self,
        interval: (f64, f64),
        exit_sign: i32,
        exit_axis: usize,
        others: &[(f64, f64)],
    ) -> Result<f64> {
        let eps = self.epsilon_k;
        let d = self.dimension;
        let (a, b) = interval;
        if !(a >= 0.0 && b > a) {
            return Err(Error::invalid(
                "interval",
                format!("need 0 <= a < b, got ({a}, {b})"),
            ));
        }
        if exit_sign != 1 && exit_sign != -1 {
            return Err(Error::invalid("exit_sign", "must be +1 or -1"));
        }
        if exit_axis == 0 || exit_axis > d {
            return Err(Error::invalid("exit_axis", format!("must lie in 1..={d}")));
        }
        if others.len() != d - 1 {
            return Err(Error::LengthMismatch {
                what: "non-exiting coordinate ranges",
                needed: d - 1,
                got: others.len(),
            });
        }
        for &(lo, hi) in others {
            if !(lo >= -eps && hi <= eps && lo < hi) {
                return Err(Error::invalid(
                    "other_range",
                    format!("need -ε <= y < ȳ <= ε, got ({lo}, {hi}) with ε={eps}"),
                ));
            }
        }
        let dist = ExitTimeDist::default();
        let ranges: Vec<(f64, f64)> = others
            .iter()
            .map(|&(lo, hi)| (lo / eps, hi / eps))
            .collect();
        // In unit time u = ΔT/ε², the non-exiting coordinate divided by ε is
        // N(0, u) truncated to (-1, 1).
        let integrand = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let f = dist.density(u);
            if f == 0.0 {
                return 0.0;
            }
            let s = dist.survival(u);
            let ru = u.sqrt();
            let norm = 1.0 - 2.0 * norm_sf(1.0 / ru);
            let mut q = 1.0;
            for &(lo, hi) in &ranges {
                q *= (norm_cdf(hi / ru) - norm_cdf(lo / ru)) / norm;
            }
            // density of the minimum of d exit times is d·f·S^{d-1}; the
            // exiting axis is uniform and the sign symmetric.
            0.5 * f * s.powi(d as i32 - 1) * q
        };
        let (ua, ub) = (a / (eps * eps), b / (eps * eps));
        let v = if ub.is_infinite() {
            quadrature::integrate(&integrand, ua, ua + 1.0, 1e-10, 1e-15)
                + quadrature::integrate_to_infinity(&integrand, ua + 1.0, 1e-10, 1e-15)
        } else {
            quadrature::integrate(&integrand, ua, ub, 1e-10, 1e-15)
        };
        Ok(v)
    }
}

/// Two-dimensional kernel evaluation:
/// `ν^k((a,b) × {exit_sign·ε_k on exit_axis} × (y, ȳ))`.
pub fn nu_density_d2(
    interval: (f64, f64),
    exit_sign: i32,
    exit_axis: usize,
    other_range: (f64, f64),
    epsilon_k: f64,
) -> Result<f64> {
    KernelNu::new(epsilon_k, 2)?.mass(interval, exit_sign, exit_axis, &[other_range])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn survival_at_zero_is_one() {
        assert_eq!(exit_time_survival(0.0), 1.0);
        assert_eq!(ExitTimeDist::default().cdf(0.0), 0.0);
    }

    #[test]
    fn the_two_series_agree_where_both_converge() {
        let d = ExitTimeDist::default();
        for &t in &[0.2, 0.4, 2.0 / PI, 1.0, 1.5, 3.0] {
            let small = 1.0 - d.cdf_small(t);
            let large = d.survival_large(t);
            assert!((small - large).abs() < 1e-13, "t={t}: {small} vs {large}");
        }
    }

    #[test]
    fn tail_matches_leading_spectral_term() {
        // far in the tail every correction term is below 1e-170
        let t = 50.0;
        let leading = 4.0 / PI * (-PI2_OVER_8 * t).exp();
        let s = exit_time_survival(t);
        assert!((s - leading).abs() <= 1e-12 * leading, "{s} vs {leading}");
    }

    #[test]
    fn derivative_of_survival_is_minus_density() {
        let d = ExitTimeDist::default();
        let mut t: f64 = 0.05;
        while t <= 10.0 {
            let h = 1e-5 * t.max(0.1);
            let num = -(d.survival(t + h) - d.survival(t - h)) / (2.0 * h);
            assert!((num - d.density(t)).abs() < 1e-6, "t={t}");
            t += 0.05;
        }
    }

    #[test]
    fn density_is_bounded_by_one() {
        let d = ExitTimeDist::default();
        for i in 0..=4000 {
            let f = d.density(i as f64 * 0.005);
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn survival_integrates_to_mean_one() {
        let d = ExitTimeDist::default();
        let n = 600_000;
        let h = 60.0 / n as f64;
        let mut acc = 0.5 * (d.survival(0.0) + d.survival(60.0));
        for i in 1..n {
            acc += d.survival(i as f64 * h);
        }
        let mean = acc * h;
        assert!(mean <= 1.0 && mean >= 1.0 - 1e-6, "{mean}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = ExitTimeDist::default();
        for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-12] {
            let t = d.quantile(u);
            assert!((d.cdf(t) - u).abs() < 1e-10, "u={u}, t={t}");
        }
    }

    #[test]
    fn truncated_normal_degenerate_variance_concentrates() {
        let mut rng = stream(1, Purpose::Sampling, 0);
        let bound: f64 = 0.5;
        for _ in 0..10_000 {
            let x = sample_nonexit_coordinate((bound / 1000.0).powi(2), bound, &mut rng);
            assert!(x.abs() < bound / 100.0);
        }
    }

    #[test]
    fn nu_rejects_malformed_ranges() {
        let eps = 0.25;
        assert!(nu_density_d2((1.0, 0.5), 1, 1, (-0.1, 0.1), eps).is_err());
        assert!(nu_density_d2((0.0, 1.0), 1, 1, (0.1, -0.1), eps).is_err());
        assert!(nu_density_d2((0.0, 1.0), 1, 1, (-0.3, 0.1), eps).is_err());
        assert!(nu_density_d2((0.0, 1.0), 0, 1, (-0.1, 0.1), eps).is_err());
        assert!(nu_density_d2((0.0, 1.0), 1, 3, (-0.1, 0.1), eps).is_err());
    }

    #[test]
    fn nu_total_mass_and_exchangeability() {
        let eps = 0.125;
        let full = (0.0, f64::INFINITY);
        let mut total = 0.0;
        for axis in 1..=2 {
            for sign in [-1, 1] {
                total += nu_density_d2(full, sign, axis, (-eps, eps), eps).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        let axis1: f64 = [-1, 1]
            .iter()
            .map(|&s| nu_density_d2(full, s, 1, (-eps, eps), eps).unwrap())
            .sum();
        assert!((axis1 - 0.5).abs() < 1e-8);
    }

    #[test]
    fn nu_sign_symmetry() {
        let eps = 0.5;
        let c = 0.2;
        let p = nu_density_d2((0.01, 0.2), 1, 2, (-c, c), eps).unwrap();
        let m = nu_density_d2((0.01, 0.2), -1, 2, (-c, c), eps).unwrap();
        assert_eq!(p, m);
        assert!(p > 0.0);
    }

    #[test]
    fn chi_quadrature_respects_bounds() {
        assert!((chi_by_quadrature(1) - 1.0).abs() < 1e-9);
        for d in 2..=4 {
            let chi = chi_by_quadrature(d);
            assert!(chi >= 1.0 / (2.0 * d as f64) && chi <= 1.0);
        }
    }
}
