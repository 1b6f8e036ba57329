//! Bootstrap particle filter (sequential importance resampling).
//!
//! Particles are propagated through the dynamics with fresh process noise
//! and reweighted by the measurement likelihood; systematic resampling runs
//! when the effective sample size drops below `N/2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::LtvModel;
use crate::rng::{self, Stream};

/// Measurement likelihood used for weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    /// `∏ (1/2b_i) exp(−|y_i − C_i x| / b_i)`, `b_i = √(V_ii/2)`.
    #[default]
    Laplace,
    /// `N(y; Cx, diag V)`, for checks against the Kalman filter.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    /// `n × N`, one particle per column.
    pub particles: DMatrix<f64>,
    /// Normalized weights.
    pub weights: Vec<f64>,
    pub k: usize,
    pub ess: f64,
    pub likelihood: Likelihood,
    pub resample_count: usize,
    stream: Stream,
    started: bool,
}

impl ParticleSet {
    /// `count` particles drawn from `N(0, X₀)`.
    pub fn new(model: &LtvModel, count: usize, likelihood: Likelihood, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::validation("particles", "must be at least 1"));
        }
        let mut stream = rng::stream(seed, &[]);
        let factor = linalg::psd_factor(model.x0());
        let z = gaussian_matrix(&mut stream, model.n(), count);
        Ok(ParticleSet {
            particles: factor * z,
            weights: vec![1.0 / count as f64; count],
            k: 0,
            ess: count as f64,
            likelihood,
            resample_count: 0,
            stream,
            started: false,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weighted_mean(&self) -> DVector<f64> {
        let w = DVector::from_column_slice(&self.weights);
        &self.particles * w
    }

    /// Absorbs `y[k]` and returns the weighted-mean estimate of `x[k]`.
    pub fn step(&mut self, model: &LtvModel, y: &DVector<f64>) -> Result<DVector<f64>> {
        if self.started {
            model.ensure_time(self.k + 1)?;
            let count = self.len();
            let noise = linalg::psd_factor(model.w(self.k))
                * gaussian_matrix(&mut self.stream, model.n(), count);
            self.particles = model.a(self.k) * &self.particles + noise;
            self.k += 1;
        }
        model.ensure_time(self.k)?;
        self.started = true;
        self.reweight(model, y)?;
        let estimate = self.weighted_mean();
        if self.ess < 0.5 * self.len() as f64 {
            self.resample();
        }
        Ok(estimate)
    }

    fn reweight(&mut self, model: &LtvModel, y: &DVector<f64>) -> Result<()> {
        let k = self.k;
        let predicted = model.c(k) * &self.particles;
        let p = model.p();
        let scales: Vec<f64> = (0..p)
            .map(|i| match self.likelihood {
                Likelihood::Laplace => model.laplace_scale(k, i),
                Likelihood::Gaussian => model.v_ii(k, i),
            })
            .collect();
        let mut logw: Vec<f64> = self
            .weights
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let ll: f64 = (0..p)
                    .map(|i| {
                        let e = y[i] - predicted[(i, j)];
                        match self.likelihood {
                            Likelihood::Laplace => -e.abs() / scales[i],
                            Likelihood::Gaussian => -0.5 * e * e / scales[i],
                        }
                    })
                    .sum();
                w.ln() + ll
            })
            .collect();
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateWeights { k });
        }
        let mut total = 0.0;
        for lw in &mut logw {
            *lw = (*lw - max).exp();
            total += *lw;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateWeights { k });
        }
        let mut sum_sq = 0.0;
        for (w, e) in self.weights.iter_mut().zip(&logw) {
            *w = e / total;
            sum_sq += *w * *w;
        }
        self.ess = 1.0 / sum_sq;
        Ok(())
    }

    /// Systematic resampling to uniform weights.
    pub fn resample(&mut self) {
        let n = self.len();
        let u0: f64 = self.stream.random::<f64>() / n as f64;
        let mut picks = Vec::with_capacity(n);
        let mut cum = self.weights[0];
        let mut j = 0;
        for i in 0..n {
            let u = u0 + i as f64 / n as f64;
            while u > cum && j + 1 < n {
                j += 1;
                cum += self.weights[j];
            }
            picks.push(j);
        }
        self.particles = self.particles.select_columns(&picks);
        self.weights = vec![1.0 / n as f64; n];
        self.ess = n as f64;
        self.resample_count += 1;
    }
}

/// Functional form of [`ParticleSet::step`].
pub fn pf_step(
    ps: &ParticleSet,
    model: &LtvModel,
    y: &DVector<f64>,
) -> Result<(ParticleSet, DVector<f64>)> {
    let mut next = ps.clone();
    let est = next.step(model, y)?;
    Ok((next, est))
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}
