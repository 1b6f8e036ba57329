//! Random variates for the Laplace / Rayleigh / Gaussian family and the
//! rejection sampler for measurement-noise scales.
//!
//! A Laplace variable `v ~ L(0, b)` is a Gaussian `N(0, τ²)` whose standard
//! deviation is itself Rayleigh, `τ ~ R(b)`. Conditioning on the scales turns
//! the Laplace-noise estimation problem into a Gaussian one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// Laplace distribution `L(a, b)` with density `exp(-|v - a| / b) / (2b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParam {
    pub a: f64,
    pub b: f64,
}

impl LaplaceParam {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() || !a.is_finite() {
            return Err(Error::validation("b", format!("Laplace scale must be > 0, got {b}")));
        }
        Ok(LaplaceParam { a, b })
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.b * self.b
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let z = (v - self.a) / self.b;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    }
}

/// Rayleigh distribution `R(θ)` with density `x/θ² exp(-x²/(2θ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighParam {
    pub theta: f64,
}

impl RayleighParam {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::validation(
                "theta",
                format!("Rayleigh scale must be > 0, got {theta}"),
            ));
        }
        Ok(RayleighParam { theta })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let t2 = self.theta * self.theta;
        x / t2 * (-x * x / (2.0 * t2)).exp()
    }
}

/// One draw of `T[k] = diag(τ_1², …, τ_p²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix {
    pub tau_sq: DVector<f64>,
    pub k: usize,
}

impl ScaleMatrix {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.tau_sq)
    }
}

/// Inverse CDF of the Laplace distribution at `u ∈ (-½, ½)`.
pub fn laplace_from_uniform(param: &LaplaceParam, u: f64) -> f64 {
    if u == 0.0 {
        return param.a;
    }
    param.a - param.b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Inverse CDF of the Rayleigh distribution at `u ∈ (0, 1]` (`u = 1` maps to 0).
pub fn rayleigh_from_uniform(param: &RayleighParam, u: f64) -> f64 {
    param.theta * (-2.0 * u.ln()).max(0.0).sqrt()
}

pub fn sample_laplace<R: Rng + ?Sized>(param: &LaplaceParam, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // u = -½ maps to -∞.
        if u > -0.5 {
            return laplace_from_uniform(param, u);
        }
    }
}

pub fn sample_rayleigh<R: Rng + ?Sized>(param: &RayleighParam, rng: &mut R) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    rayleigh_from_uniform(param, u)
}

/// Draws `τ ~ R(b)` then `v ~ N(0, τ²)`; the result is `L(0, b)`.
pub fn laplace_via_rayleigh_gaussian<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let tau = sample_rayleigh(&RayleighParam { theta: b }, rng);
    if tau == 0.0 {
        return 0.0;
    }
    tau * rng.sample::<f64, _>(StandardNormal)
}

/// Posterior of one noise scale `τ` given a scalar measurement whose
/// conditional law is `N(m, s₀ + τ²)` and the prior `τ ~ R(sqrt(V/2))`:
///
/// ```text
/// p(τ | y) ∝ g(τ) · (2τ/V) exp(-τ²/V),   g(τ) = exp(-e² / (2(s₀+τ²))) / (s₀+τ²)
/// ```
///
/// where `e = y - m` is the measurement (memory-less case, `m = 0`) or the
/// innovation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleTarget {
    pub innovation: f64,
    pub prior_var: f64,
    pub v_ii: f64,
}

impl ScaleTarget {
    pub fn new(innovation: f64, prior_var: f64, v_ii: f64) -> Result<Self> {
        if !(prior_var >= 0.0) || !prior_var.is_finite() {
            return Err(Error::validation(
                "prior_var",
                format!("prior variance must be >= 0, got {prior_var}"),
            ));
        }
        if !(v_ii > 0.0) || !v_ii.is_finite() {
            return Err(Error::validation("V_ii", format!("must be > 0, got {v_ii}")));
        }
        if !innovation.is_finite() {
            return Err(Error::validation("y", "measurement is not finite"));
        }
        if prior_var == 0.0 && innovation == 0.0 {
            return Err(Error::ImproperScalePosterior);
        }
        Ok(ScaleTarget {
            innovation,
            prior_var,
            v_ii,
        })
    }

    /// `ln g(τ)`.
    pub fn log_likelihood(&self, tau: f64) -> f64 {
        let s = self.prior_var + tau * tau;
        let e2 = self.innovation * self.innovation;
        if s == 0.0 {
            return if e2 == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        -s.ln() - e2 / (2.0 * s)
    }

    /// `ln ϖ` with `ϖ = max_τ g(τ)`.
    ///
    /// As a function of `s = s₀ + τ² ≥ s₀`, `ln g = -ln s - e²/(2s)` peaks at
    /// `s* = e²/2`; below `s*` it increases, above it decreases.
    pub fn log_bound(&self) -> f64 {
        let e2 = self.innovation * self.innovation;
        let s_star = e2 / 2.0;
        if s_star >= self.prior_var {
            // (2/e²)·e⁻¹
            (2.0 / e2).ln() - 1.0
        } else {
            -self.prior_var.ln() - e2 / (2.0 * self.prior_var)
        }
    }

    pub fn rayleigh_prior(&self) -> RayleighParam {
        RayleighParam {
            theta: (self.v_ii / 2.0).sqrt(),
        }
    }

    /// Unnormalized posterior density `g(τ) · prior(τ)`.
    pub fn unnormalized_density(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let prior = 2.0 * tau / self.v_ii * (-tau * tau / self.v_ii).exp();
        self.log_likelihood(tau).exp() * prior
    }

    /// Mode of the posterior of `u = τ²`. In `s = s₀ + u` the log density
    /// `-(s − s₀)/V − e²/(2s) − ln s` is stationary at the positive root of
    /// `s²/V + s − e²/2 = 0`.
    pub fn posterior_mode_u(&self) -> f64 {
        let (v, e2) = (self.v_ii, self.innovation * self.innovation);
        let s = e2 / (1.0 + (1.0 + 2.0 * e2 / v).sqrt());
        (s - self.prior_var).max(0.0)
    }

    /// `ln q(s) = −(s − s₀)/V − e²/(2s) − ln s`, the log density of
    /// `s = s₀ + τ²` up to a constant.
    fn log_density_s(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let e2 = self.innovation * self.innovation;
        -(s - self.prior_var) / self.v_ii - e2 / (2.0 * s) - s.ln()
    }

    /// The envelope with the least mass among the Rayleigh prior, a tilted
    /// exponential and a three-piece envelope.
    pub fn proposal(&self) -> Proposal {
        let v = self.v_ii;
        let s0 = self.prior_var;
        let e2 = self.innovation * self.innovation;
        let mut best = Proposal::Prior {
            log_bound: self.log_bound(),
        };
        let mut best_mass = best.log_mass(v);

        let mode = self.posterior_mode_u();
        if mode > v {
            let tilt = 1.0 / v - 1.0 / mode;
            let cand = Proposal::Tilted {
                mean: mode,
                tilt,
                log_bound: self.log_tilted_bound(tilt),
            };
            let mass = cand.log_mass(v);
            if mass < best_mass {
                best = cand;
                best_mass = mass;
            }
        }

        // q ≤ g(b₁) on [s₀, b₁], q ≤ e^{−(b₁−s₀)/V}/s on [b₁, b₂] and
        // q ≤ e^{−(s−s₀)/V}/b₂ beyond, with b₁ = max(s₀, e²/2) where g peaks.
        let b1 = s0.max(e2 / 2.0);
        let b2 = b1.max(v);
        let log_a = if b1 > s0 {
            -b1.ln() - e2 / (2.0 * b1) + (b1 - s0).ln()
        } else {
            f64::NEG_INFINITY
        };
        let log_b = if b2 > b1 {
            -(b1 - s0) / v + (b2 / b1).ln().ln()
        } else {
            f64::NEG_INFINITY
        };
        let log_c = -(b2 - s0) / v + v.ln() - b2.ln();
        let top = log_a.max(log_b).max(log_c);
        let mass = top + ((log_a - top).exp() + (log_b - top).exp() + (log_c - top).exp()).ln();
        if mass < best_mass {
            let w = [(log_a - top).exp(), (log_b - top).exp(), (log_c - top).exp()];
            let total = w[0] + w[1] + w[2];
            best = Proposal::Piecewise {
                b1,
                b2,
                p_a: w[0] / total,
                p_b: w[1] / total,
            };
        }
        best
    }

    /// Rejection sampling of `τ` from the envelope chosen by
    /// [`ScaleTarget::proposal`]. Returns the draw and the number of
    /// proposals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: u64) -> Result<(f64, u64)> {
        let proposal = self.proposal();
        let (v, s0) = (self.v_ii, self.prior_var);
        for attempt in 1..=max_attempts {
            let (tau, log_ratio) = match proposal {
                Proposal::Prior { log_bound } => {
                    // τ² ~ Exp(V) is the Rayleigh prior.
                    let tau = (-v * (1.0 - rng.random::<f64>()).ln()).sqrt();
                    (tau, self.log_likelihood(tau) - log_bound)
                }
                Proposal::Tilted { mean, tilt, log_bound } => {
                    let u_sq = -mean * (1.0 - rng.random::<f64>()).ln();
                    let tau = u_sq.sqrt();
                    (tau, self.log_likelihood(tau) - tilt * u_sq - log_bound)
                }
                Proposal::Piecewise { b1, b2, p_a, p_b } => {
                    let pick: f64 = rng.random();
                    let w: f64 = rng.random();
                    let (s, log_env) = if pick < p_a {
                        let s = s0 + (b1 - s0) * w;
                        (s, -b1.ln() - self.innovation.powi(2) / (2.0 * b1))
                    } else if pick < p_a + p_b {
                        let s = b1 * (b2 / b1).powf(w);
                        (s, -(b1 - s0) / v - s.ln())
                    } else {
                        let s = b2 - v * (1.0 - w).ln();
                        (s, -(s - s0) / v - b2.ln())
                    };
                    ((s - s0).max(0.0).sqrt(), self.log_density_s(s) - log_env)
                }
            };
            debug_assert!(log_ratio <= 1e-9, "acceptance ratio exceeds one: ln ratio = {log_ratio}");
            let u = 1.0 - rng.random::<f64>();
            if u.ln() <= log_ratio {
                return Ok((tau, attempt));
            }
        }
        Err(Error::RejectionExhausted {
            attempts: max_attempts,
        })
    }

    /// `max_{s ≥ s₀} −a(s − s₀) − e²/(2s) − ln s` for `a > 0`: the
    /// objective rises then falls, with its turning point at the positive
    /// root of `a s² + s − e²/2 = 0`.
    fn log_tilted_bound(&self, a: f64) -> f64 {
        let e2 = self.innovation * self.innovation;
        let root = e2 / (1.0 + (1.0 + 2.0 * a * e2).sqrt());
        let s = root.max(self.prior_var);
        -a * (s - self.prior_var) - e2 / (2.0 * s) - s.ln()
    }
}

/// Envelope for the scale rejection sampler, in `u = τ²` or `s = s₀ + τ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    /// `τ ~ R(√(V/2))`, accepted with probability `g(τ)/ϖ`.
    Prior { log_bound: f64 },
    /// `τ² ~ Exp(mean)` with the ratio tilted by `exp(−tilt·τ²)`.
    Tilted { mean: f64, tilt: f64, log_bound: f64 },
    /// Uniform on `[s₀, b₁]`, log-uniform on `[b₁, b₂]`, shifted
    /// exponential beyond `b₂`, with piece probabilities `p_a`, `p_b`.
    Piecewise { b1: f64, b2: f64, p_a: f64, p_b: f64 },
}

impl Proposal {
    /// Log of the envelope mass over `u` (the Prior and Tilted cases only).
    fn log_mass(&self, v: f64) -> f64 {
        match *self {
            Proposal::Prior { log_bound } => log_bound + v.ln(),
            Proposal::Tilted { mean, log_bound, .. } => log_bound + mean.ln(),
            Proposal::Piecewise { .. } => f64::NAN,
        }
    }
}

/// Samples `τ_i` from the scale posterior for measurement `y_scalar` with
/// prior output variance `prior_var = C_i X C_iᵀ`.
pub fn rejection_sample_tau<R: Rng + ?Sized>(
    y_scalar: f64,
    prior_var: f64,
    v_ii: f64,
    rng: &mut R,
    max_attempts: u64,
) -> Result<f64> {
    ScaleTarget::new(y_scalar, prior_var, v_ii)?
        .sample(rng, max_attempts)
        .map(|(tau, _)| tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats;

    #[test]
    fn laplace_median_and_rayleigh_zero() {
        let p = LaplaceParam::new(1.25, 3.0).unwrap();
        assert_eq!(laplace_from_uniform(&p, 0.0), 1.25);
        let r = RayleighParam::new(2.0).unwrap();
        assert_eq!(rayleigh_from_uniform(&r, 1.0), 0.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(LaplaceParam::new(0.0, 0.0).is_err());
        assert!(RayleighParam::new(-1.0).is_err());
        assert!(ScaleTarget::new(1.0, -1.0, 1.0).is_err());
        assert!(ScaleTarget::new(1.0, 1.0, 0.0).is_err());
        assert!(matches!(
            ScaleTarget::new(0.0, 0.0, 1.0),
            Err(Error::ImproperScalePosterior)
        ));
    }

    #[test]
    fn laplace_variance_is_two_b_squared() {
        let b = 5.0_f64.sqrt();
        let p = LaplaceParam::new(0.0, b).unwrap();
        let mut rng = stream(1, &[]);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = sample_laplace(&p, &mut rng);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 10.0).abs() / 10.0 < 0.01, "variance {var}");
    }

    #[test]
    fn laplace_ks_against_cdf() {
        let p = LaplaceParam::new(0.5, 2.0).unwrap();
        let mut rng = stream(2, &[]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace(&p, &mut rng)).collect();
        let d = stats::ks_one_sample(&draws, |v| p.cdf(v));
        assert!(d < 1.95 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn rayleigh_moments() {
        let theta = 5.0_f64.sqrt();
        let r = RayleighParam::new(theta).unwrap();
        let mut rng = stream(3, &[]);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let t = sample_rayleigh(&r, &mut rng);
            s += t;
            s2 += t * t;
        }
        let mean = s / n as f64;
        let m2 = s2 / n as f64;
        // Mean formula θ√(π/2), checked against quadrature of the density.
        let quad_mean = stats::integrate(|x| x * r.pdf(x), 0.0, 40.0 * theta, 1e-12);
        let formula = theta * (std::f64::consts::PI / 2.0).sqrt();
        assert!((quad_mean - formula).abs() < 1e-8);
        assert!((mean - formula).abs() / formula < 0.01, "mean {mean}");
        assert!((m2 - 2.0 * theta * theta).abs() / 10.0 < 0.01, "second moment {m2}");
    }

    #[test]
    fn scale_mixture_variance() {
        let b = 5.0_f64.sqrt();
        let mut rng = stream(4, &[]);
        let n = 1_000_000;
        let s2: f64 = (0..n)
            .map(|_| laplace_via_rayleigh_gaussian(b, &mut rng).powi(2))
            .sum();
        let var = s2 / n as f64;
        assert!((var - 10.0).abs() / 10.0 < 0.01, "variance {var}");
    }

    struct ZeroRng;
    impl rand::RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    #[test]
    fn degenerate_stream_gives_zero_mixture() {
        assert_eq!(laplace_via_rayleigh_gaussian(2.0, &mut ZeroRng), 0.0);
    }

    /// Grid search over τ ∈ [0, 20√V] refined by golden section.
    fn grid_max(target: &ScaleTarget) -> f64 {
        let hi = 20.0 * target.v_ii.sqrt();
        let g = |t: f64| target.log_likelihood(t).exp();
        let steps = 200_000;
        let h = hi / steps as f64;
        let (mut best_t, mut best) = (0.0, g(0.0));
        for i in 1..=steps {
            let t = i as f64 * h;
            let v = g(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let (mut a, mut b) = ((best_t - h).max(0.0), (best_t + h).min(hi));
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if g(c) >= g(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(g(0.5 * (a + b))).max(g(0.0))
    }

    #[test]
    fn closed_form_bound_matches_grid_search() {
        for &(y, s0, v) in &[
            (3.0, 0.5, 10.0),
            (0.5, 2.0, 10.0),
            (10.0, 0.0, 10.0),
            (0.0, 1.0, 4.0),
            (-4.0, 8.0, 1.0),
            (2.0, 2.0, 0.5),
        ] {
            let t = ScaleTarget::new(y, s0, v).unwrap();
            let closed = t.log_bound().exp();
            let grid = grid_max(&t);
            assert!(
                (closed - grid).abs() <= 1e-9 * closed.max(1.0),
                "(y={y}, s0={s0}, V={v}): closed {closed} grid {grid}"
            );
        }
    }

    #[test]
    fn acceptance_ratio_never_exceeds_one() {
        let mut rng = stream(5, &[]);
        for &(y, s0, v) in &[(3.0, 0.5, 10.0), (0.1, 0.05, 2.0), (7.0, 0.0, 1.0)] {
            let t = ScaleTarget::new(y, s0, v).unwrap();
            for _ in 0..10_000 {
                let tau = sample_rayleigh(&t.rayleigh_prior(), &mut rng);
                assert!(t.log_likelihood(tau) - t.log_bound() <= 1e-12);
            }
        }
    }

    #[test]
    fn extreme_measurement_terminates() {
        // An all-zero stream proposes τ = 0, which is never accepted for s₀ = 0.
        let r = rejection_sample_tau(3.0, 0.0, 1.0, &mut ZeroRng, 1000);
        assert!(matches!(r, Err(Error::RejectionExhausted { attempts: 1000 })));
        let mut rng = stream(6, &[]);
        for y in [8.0, 60.0, 1e6] {
            let (tau, attempts) = ScaleTarget::new(y, 0.0, 10.0).unwrap().sample(&mut rng, DEFAULT_MAX_ATTEMPTS).unwrap();
            assert!(tau > 0.0 && attempts < 20_000, "y={y}: {attempts} attempts");
        }
    }

    #[test]
    fn tilted_bound_matches_grid_search() {
        for &(y, s0, v) in &[(25.0, 0.0, 10.0), (300.0, 4.0, 1.0), (12.0, 3.0, 2.0), (40.0, 600.0, 1.0)] {
            let t = ScaleTarget::new(y, s0, v).unwrap();
            let mode = t.posterior_mode_u();
            let a = 1.0 / v - 1.0 / mode.max(2.0 * v);
            let f = |u: f64| t.log_likelihood(u.sqrt()) - a * u;
            let hi = 50.0 * (y * y + s0 + v);
            let steps = 400_000;
            let node = |i: usize| hi * (i as f64 / steps as f64).powi(2);
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..=steps {
                // Quadratic spacing resolves small u.
                if f(node(i)) > best.0 {
                    best = (f(node(i)), i);
                }
            }
            let (mut lo, mut up) = (node(best.1.saturating_sub(1)), node((best.1 + 1).min(steps)));
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let (c, d) = (up - phi * (up - lo), lo + phi * (up - lo));
                if f(c) >= f(d) {
                    up = d;
                } else {
                    lo = c;
                }
            }
            let grid = best.0.max(f(0.5 * (lo + up)));
            let closed = t.log_tilted_bound(a);
            assert!(closed >= grid - 1e-12, "(y={y}): closed {closed} below grid {grid}");
            assert!(closed - grid < 1e-9 * closed.abs().max(1.0), "(y={y}): closed {closed} grid {grid}");
        }
    }

    /// One-sample KS of draws against the normalized target, tabulated in
    /// log space on a quadratically spaced τ grid so that both far tails
    /// and tiny scales are resolved.
    fn ks_against_target(t: &ScaleTarget, draws: &[f64]) -> f64 {
        let mode = t.posterior_mode_u() + t.prior_var;
        let width = (mode * t.v_ii).sqrt() + t.v_ii;
        let hi = (mode + 40.0 * width).sqrt();
        let log_dens = |tau: f64| {
            if tau <= 0.0 {
                return f64::NEG_INFINITY;
            }
            t.log_likelihood(tau) + (2.0 * tau / t.v_ii).ln() - tau * tau / t.v_ii
        };
        let n = 400_000;
        let grid: Vec<f64> = (0..=n).map(|i| hi * (i as f64 / n as f64).powi(2)).collect();
        let peak = grid.iter().map(|&x| log_dens(x)).fold(f64::NEG_INFINITY, f64::max);
        let mut cdf = vec![0.0; n + 1];
        for i in 0..n {
            let (a, b) = (grid[i], grid[i + 1]);
            let w = |x: f64| (log_dens(x) - peak).exp();
            cdf[i + 1] = cdf[i] + (b - a) * (w(a) + 4.0 * w(0.5 * (a + b)) + w(b)) / 6.0;
        }
        let total = cdf[n];
        stats::ks_one_sample(draws, |x| {
            let i = grid.partition_point(|&g| g <= x).clamp(1, n);
            let frac = ((x - grid[i - 1]) / (grid[i] - grid[i - 1])).clamp(0.0, 1.0);
            (cdf[i - 1] + frac * (cdf[i] - cdf[i - 1])) / total
        })
    }

    #[test]
    fn every_envelope_samples_target() {
        let mut rng = stream(8, &[]);
        let n = 20_000;
        let mut kinds = Vec::new();
        for &(y, s0, v) in &[
            (25.0, 0.0, 10.0),
            (300.0, 4.0, 1.0),
            (-9.0, 1.0, 2.0),
            (1e-3, 0.0, 10.0),
            (0.05, 0.0, 2.0),
            (1.0, 0.5, 10.0),
            (2.0, 30.0, 10.0),
        ] {
            let t = ScaleTarget::new(y, s0, v).unwrap();
            kinds.push(std::mem::discriminant(&t.proposal()));
            let mut attempts = 0;
            let draws: Vec<f64> = (0..n)
                .map(|_| {
                    let (tau, a) = t.sample(&mut rng, DEFAULT_MAX_ATTEMPTS).unwrap();
                    attempts += a;
                    tau
                })
                .collect();
            let d = ks_against_target(&t, &draws);
            assert!(d < 1.95 / (n as f64).sqrt(), "(y={y}, s0={s0}, V={v}): KS {d}");
            assert!(attempts < 50 * n as u64, "(y={y}, s0={s0}, V={v}): {attempts} proposals");
        }
        kinds.sort_by_key(|k| format!("{k:?}"));
        kinds.dedup();
        assert_eq!(kinds.len(), 3, "all three envelopes exercised");
    }
}
