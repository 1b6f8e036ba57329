//! Randomized approximation of the conditional-mean estimate.
//!
//! Each Laplace noise `v_i[k]` is rewritten as `N(0, τ_i²[k])` with
//! `τ_i[k] ~ R(sqrt(V_ii[k]/2))`. Given a scale sequence `T[0..k]`, the
//! conditional mean is a time-varying Kalman filter with measurement
//! covariance `T[k]`. The ensemble runs `I` such filters, each driven by its
//! own sampled scale sequence, and averages their means:
//!
//! ```text
//! x̂appx[k] = (1/I) Σ_i E{x[k] | y[0..k], T^i[0..k]}
//! ```
//!
//! By Chebyshev, `P{‖x̂appx − x̂‖ ≤ ε} ≥ 1 − M[k]/(I ε²)` where `M[k]` is the
//! variance of a single member around the conditional mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::KalmanState;
use crate::linalg;
use crate::model::{simulate_with_rng, InitialState, LtvModel};
use crate::noise::{ScaleMatrix, ScaleTarget, DEFAULT_MAX_ATTEMPTS};
use crate::rng::{self, Stream};

/// How the scales `T^i[k]` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// `p(T[k] | y[k])` under the open-loop prior `x[k] ~ N(0, X[k])`.
    #[default]
    #[serde(alias = "memoryless")]
    MemoryLess,
    /// `p(T[k] | y[0..k])` with `p(x[k] | y[0..k-1])` replaced by the
    /// linear estimator's prediction `N(μ[k], P̄[k])`.
    #[serde(alias = "gauss-approx")]
    GaussianApprox,
    /// Always `T[k] = V[k]`; every member is then the linear estimator.
    /// Diagnostic only.
    Nominal,
}

#[derive(Debug, Clone)]
pub struct Member {
    pub filter: KalmanState,
    stream: Stream,
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub members: Vec<Member>,
    pub sampler: SamplerKind,
    /// Open-loop prior variance `X[k]`.
    pub prior_var: DMatrix<f64>,
    /// Linear estimator run alongside (used by [`SamplerKind::GaussianApprox`]).
    pub companion: KalmanState,
    pub k: usize,
    pub max_attempts: u64,
    started: bool,
}

/// Output of one ensemble step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub x_hat: DVector<f64>,
    /// `(1/I) Σ_i Tr(P̃^i[k])`.
    pub avg_trace: f64,
}

impl EnsembleState {
    /// `size` members; member `i` draws from the stream `(seed, i)`.
    pub fn new(model: &LtvModel, size: usize, sampler: SamplerKind, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::validation("ensemble_size", "must be at least 1"));
        }
        let prior = KalmanState::init(model);
        Ok(EnsembleState {
            members: (0..size)
                .map(|i| Member {
                    filter: prior.clone(),
                    stream: rng::stream(seed, &[i as u64]),
                })
                .collect(),
            sampler,
            prior_var: model.x0().clone(),
            companion: prior,
            k: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            started: false,
        })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Absorbs `y[k]` and advances to the next time step's prior.
    pub fn step(&mut self, model: &LtvModel, y: &DVector<f64>) -> Result<EnsembleEstimate> {
        if self.started {
            self.k += 1;
            for member in &mut self.members {
                member.filter.predict(model)?;
            }
            self.companion.predict(model)?;
        }
        model.ensure_time(self.k)?;
        let k = self.k;
        for (idx, member) in self.members.iter_mut().enumerate() {
            match self.sampler {
                SamplerKind::MemoryLess => sample_scales_memoryless(
                    y,
                    &self.prior_var,
                    model,
                    k,
                    &mut member.stream,
                    self.max_attempts,
                ),
                SamplerKind::GaussianApprox => sample_scales_gaussian_approx(
                    y,
                    &self.companion,
                    model,
                    k,
                    &mut member.stream,
                    self.max_attempts,
                ),
                SamplerKind::Nominal => Ok(ScaleMatrix {
                    tau_sq: model.v(k).diagonal(),
                    k,
                }),
            }
            .and_then(|t| member.filter.update(model, y, &t.as_matrix()))
            .map_err(|e| Error::Member {
                member: idx,
                source: Box::new(e),
            })?;
        }
        let v = model.v(k).clone();
        self.companion.update(model, y, &v)?;
        self.started = true;

        let estimate = self.estimate();
        if model.ensure_time(k + 1).is_ok() {
            self.prior_var = prior_variance_step(&self.prior_var, model, k);
        }
        Ok(estimate)
    }

    /// Current ensemble mean and average posterior trace.
    pub fn estimate(&self) -> EnsembleEstimate {
        let n = self.companion.mean.len();
        let size = self.members.len() as f64;
        let mut sum = DVector::zeros(n);
        for m in &self.members {
            sum += &m.filter.mean;
        }
        // Sorted summation makes the trace average independent of member order.
        let mut traces: Vec<f64> = self.members.iter().map(|m| m.filter.p_post.trace()).collect();
        traces.sort_by(f64::total_cmp);
        EnsembleEstimate {
            x_hat: sum / size,
            avg_trace: traces.iter().sum::<f64>() / size,
        }
    }

    pub fn member_means(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.members.iter().map(|m| &m.filter.mean)
    }
}

/// Functional form of [`EnsembleState::step`].
pub fn ensemble_step(
    ens: &EnsembleState,
    model: &LtvModel,
    y: &DVector<f64>,
) -> Result<(EnsembleState, DVector<f64>, f64)> {
    let mut next = ens.clone();
    let est = next.step(model, y)?;
    Ok((next, est.x_hat, est.avg_trace))
}

/// `X[k+1] = A[k] X[k] A[k]ᵀ + W[k]`.
pub fn prior_variance_step(x: &DMatrix<f64>, model: &LtvModel, k: usize) -> DMatrix<f64> {
    let a = model.a(k);
    let mut next = a * x * a.transpose() + model.w(k);
    linalg::symmetrize_in_place(&mut next);
    next
}

fn row_quadratic(c: &DMatrix<f64>, i: usize, cov: &DMatrix<f64>) -> f64 {
    let row = c.row(i);
    (row * cov * row.transpose())[(0, 0)].max(0.0)
}

/// `τ_i ~ p(τ_i | y_i[k])` independently for each output, using the
/// open-loop prior variance `X = X[k]`.
pub fn sample_scales_memoryless(
    y: &DVector<f64>,
    prior_var: &DMatrix<f64>,
    model: &LtvModel,
    k: usize,
    stream: &mut Stream,
    max_attempts: u64,
) -> Result<ScaleMatrix> {
    let c = model.c(k);
    let tau_sq = (0..model.p())
        .map(|i| {
            let target = ScaleTarget::new(y[i], row_quadratic(c, i, prior_var), model.v_ii(k, i))?;
            target.sample(stream, max_attempts).map(|(tau, _)| tau * tau)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleMatrix {
        tau_sq: DVector::from_vec(tau_sq),
        k,
    })
}

/// As [`sample_scales_memoryless`] but with the predicted mean `μ[k]` and
/// covariance `P̄[k]` of the linear estimator; the likelihood uses the
/// innovation `y_i − C_i μ[k]`.
pub fn sample_scales_gaussian_approx(
    y: &DVector<f64>,
    companion: &KalmanState,
    model: &LtvModel,
    k: usize,
    stream: &mut Stream,
    max_attempts: u64,
) -> Result<ScaleMatrix> {
    let c = model.c(k);
    let predicted = c * &companion.mean;
    let tau_sq = (0..model.p())
        .map(|i| {
            let target = ScaleTarget::new(
                y[i] - predicted[i],
                row_quadratic(c, i, &companion.p_pred),
                model.v_ii(k, i),
            )?;
            target.sample(stream, max_attempts).map(|(tau, _)| tau * tau)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleMatrix {
        tau_sq: DVector::from_vec(tau_sq),
        k,
    })
}

/// Accuracy target `P{‖x̂appx − x̂‖ ≤ ε} ≥ 1 − δ` for variance bound `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    pub epsilon: f64,
    pub delta: f64,
    pub m: f64,
}

impl TheoremParams {
    pub fn new(epsilon: f64, delta: f64, m: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::validation("epsilon", format!("must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::validation("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::validation("M", format!("must be >= 0, got {m}")));
        }
        Ok(TheoremParams { epsilon, delta, m })
    }

    /// Chebyshev lower bound `1 − M/(I ε²)` on the success probability.
    pub fn success_bound(&self, size: usize) -> f64 {
        1.0 - self.m / (size as f64 * self.epsilon * self.epsilon)
    }
}

/// `I = ceil(M / (δ ε²))`, at least one.
pub fn ensemble_size_for(params: &TheoremParams) -> usize {
    let raw = params.m / (params.delta * params.epsilon * params.epsilon);
    // Guard the ceiling against representation error (2/(0.1·0.25) = 80.000…01).
    let rounded = raw.round();
    let size = if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        raw.ceil()
    };
    (size as usize).max(1)
}

/// Monte Carlo estimate of `M[k]` for every `k ≤ horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MEstimate {
    pub m: Vec<f64>,
    pub stderr: Vec<f64>,
    pub spectral_radius: f64,
    /// `2 lim E{‖x[k]‖²}` when `ρ(A) < 1` and the model is time-invariant.
    pub corollary_bound: Option<f64>,
    pub warnings: Vec<String>,
}

impl MEstimate {
    pub fn max(&self) -> f64 {
        self.m.iter().cloned().fold(0.0, f64::max)
    }
}

/// Estimates `M[k] = E{‖E{x[k] | y, T} − x̂[k]‖²}`: for each trial a fresh
/// trajectory is filtered with `reference_size` members; the sample
/// variance of the member means around their average stands in for the
/// variance around the unavailable conditional mean.
pub fn estimate_m(
    model: &LtvModel,
    horizon: usize,
    trials: usize,
    reference_size: usize,
    sampler: SamplerKind,
    seed: u64,
) -> Result<MEstimate> {
    if trials == 0 {
        return Err(Error::validation("trials", "must be at least 1"));
    }
    if reference_size < 2 {
        return Err(Error::validation("reference_size", "must be at least 2"));
    }
    let spectral_radius = model.spectral_radius()?;
    let mut warnings = Vec::new();
    if spectral_radius >= 1.0 {
        let msg = format!(
            "spectral radius of A is {spectral_radius:.4} >= 1: no time-uniform bound on M exists"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let corollary_bound = model.stationary_second_moment().map(|m2| 2.0 * m2);

    use rayon::prelude::*;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut sim_stream = rng::stream(seed, &[t as u64, 0]);
            let traj =
                simulate_with_rng(model, horizon, &mut sim_stream, &InitialState::Sample)?;
            let mut ens = EnsembleState::new(
                model,
                reference_size,
                sampler,
                rng::derive_seed(seed, &[t as u64, 1]),
            )?;
            traj.y
                .iter()
                .map(|y| {
                    let est = ens.step(model, y)?;
                    let spread: f64 = ens
                        .member_means()
                        .map(|m| (m - &est.x_hat).norm_squared())
                        .sum();
                    Ok(spread / (reference_size - 1) as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut m = Vec::with_capacity(horizon + 1);
    let mut stderr = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let col: Vec<f64> = per_trial.iter().map(|row| row[k]).collect();
        let (mean, se) = crate::stats::mean_and_se(&col);
        m.push(mean);
        stderr.push(se);
    }
    Ok(MEstimate {
        m,
        stderr,
        spectral_radius,
        corollary_bound,
        warnings,
    })
}
