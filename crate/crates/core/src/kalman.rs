//! Time-varying Kalman filter.
//!
//! The same predict/update core serves two roles: conditioned on a sampled
//! scale sequence (measurement covariance `T[k]`, one ensemble member) and
//! as the optimal linear estimator (measurement covariance `V[k]`).
//!
//! Time convention: `predict` moves the state from `k-1` to `k` using
//! `A[k-1]`, `W[k-1]`; `update` at `k` uses `C[k]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::LtvModel;

/// Pivot tolerance for the innovation-covariance Cholesky factor.
pub const INNOVATION_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// Conditional mean (predicted before `update`, filtered after).
    pub mean: DVector<f64>,
    /// Predicted covariance at `k`.
    pub p_pred: DMatrix<f64>,
    /// Posterior covariance at `k` (equals `p_pred` until updated).
    pub p_post: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub k: usize,
    /// Whether the measurement at `k` has been absorbed.
    pub updated: bool,
}

impl KalmanState {
    /// Prior at time 0: zero mean, covariance `X0`.
    pub fn init(model: &LtvModel) -> Self {
        KalmanState {
            mean: DVector::zeros(model.n()),
            p_pred: model.x0().clone(),
            p_post: model.x0().clone(),
            gain: DMatrix::zeros(model.n(), model.p()),
            k: 0,
            updated: false,
        }
    }

    pub fn predict(&mut self, model: &LtvModel) -> Result<()> {
        model.ensure_time(self.k + 1)?;
        let a = model.a(self.k);
        self.mean = a * &self.mean;
        // p_pred ← A P Aᵀ + W, using p_pred as scratch for A P.
        self.p_pred.gemm(1.0, a, &self.p_post, 0.0);
        self.p_post.copy_from(model.w(self.k));
        self.p_post.gemm(1.0, &self.p_pred, &a.transpose(), 1.0);
        linalg::symmetrize_in_place(&mut self.p_post);
        self.p_pred.copy_from(&self.p_post);
        self.k += 1;
        self.updated = false;
        Ok(())
    }

    /// Measurement update with covariance `r`, Joseph form.
    pub fn update(&mut self, model: &LtvModel, y: &DVector<f64>, r: &DMatrix<f64>) -> Result<()> {
        model.ensure_time(self.k)?;
        if model.p() == 1 {
            return self.update_scalar(model, y[0], r[(0, 0)]);
        }
        let c = model.c(self.k);
        let pct = &self.p_pred * c.transpose();
        let s = c * &pct + r;
        let chol = linalg::cholesky_checked(&s, INNOVATION_PIVOT_TOL)
            .ok_or(Error::SingularInnovation { k: self.k })?;
        // L = P Cᵀ S⁻¹, computed as (S⁻¹ C P)ᵀ.
        let gain = linalg::cholesky_solve(&chol, &pct.transpose()).transpose();
        let innovation = y - c * &self.mean;
        self.mean += &gain * innovation;
        let n = self.mean.len();
        let ilc = DMatrix::<f64>::identity(n, n) - &gain * c;
        let mut p = &ilc * &self.p_pred * ilc.transpose() + &gain * r * gain.transpose();
        linalg::symmetrize_in_place(&mut p);
        self.p_post = p;
        self.gain = gain;
        self.updated = true;
        Ok(())
    }

    /// Scalar-measurement update without temporaries. With `g = Pcᵀ` and
    /// `s = cPcᵀ + r` the Joseph form `(I − Lc)P(I − Lc)ᵀ + rLLᵀ` expands to
    /// `P − Lgᵀ − gLᵀ + s LLᵀ`.
    fn update_scalar(&mut self, model: &LtvModel, y: f64, r: f64) -> Result<()> {
        let c = model.c(self.k);
        let n = self.mean.len();
        let p = &self.p_pred;
        let mut s = r;
        let mut scale = r.abs();
        let mut innovation = y;
        for i in 0..n {
            let mut g = 0.0;
            for j in 0..n {
                g += p[(i, j)] * c[(0, j)];
            }
            self.gain[(i, 0)] = g;
            s += c[(0, i)] * g;
            scale += (c[(0, i)] * g).abs();
            innovation -= c[(0, i)] * self.mean[i];
        }
        // Relative to the magnitudes summed, so cancellation is caught.
        if !(s > INNOVATION_PIVOT_TOL * scale) {
            return Err(Error::SingularInnovation { k: self.k });
        }
        for i in 0..n {
            let l = self.gain[(i, 0)] / s;
            self.mean[i] += l * innovation;
        }
        for j in 0..n {
            let gj = self.gain[(j, 0)];
            let lj = gj / s;
            for i in 0..=j {
                let gi = self.gain[(i, 0)];
                let li = gi / s;
                let v = p[(i, j)] - li * gj - gi * lj + s * li * lj;
                self.p_post[(i, j)] = v;
                self.p_post[(j, i)] = v;
            }
        }
        for i in 0..n {
            self.gain[(i, 0)] /= s;
        }
        self.updated = true;
        Ok(())
    }

    /// One step of the optimal linear estimator: predict (unless this is the
    /// untouched prior at time 0) and update with `R = V[k]`.
    pub fn linear_step(&mut self, model: &LtvModel, y: &DVector<f64>) -> Result<()> {
        if self.updated {
            self.predict(model)?;
        }
        self.update(model, y, model.v(self.k))
    }
}

pub fn kf_init(model: &LtvModel) -> KalmanState {
    KalmanState::init(model)
}

pub fn kf_predict(state: &KalmanState, model: &LtvModel) -> Result<KalmanState> {
    let mut next = state.clone();
    next.predict(model)?;
    Ok(next)
}

pub fn kf_update(
    state: &KalmanState,
    model: &LtvModel,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<KalmanState> {
    let mut next = state.clone();
    next.update(model, y, r)?;
    Ok(next)
}

pub fn linear_estimator_step(
    state: &KalmanState,
    model: &LtvModel,
    y: &DVector<f64>,
) -> Result<KalmanState> {
    let mut next = state.clone();
    next.linear_step(model, y)?;
    Ok(next)
}

/// Runs the linear estimator over `ys`, returning the filtered state at
/// every time step.
pub fn run_linear(model: &LtvModel, ys: &[DVector<f64>]) -> Result<Vec<KalmanState>> {
    let mut state = KalmanState::init(model);
    let mut out = Vec::with_capacity(ys.len());
    for y in ys {
        state.linear_step(model, y)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Posterior covariance traces `Tr(P̌[k])` of the linear estimator, which do
/// not depend on the data.
pub fn linear_error_traces(model: &LtvModel, horizon: usize) -> Result<Vec<f64>> {
    let zeros = vec![DVector::zeros(model.p()); horizon + 1];
    Ok(run_linear(model, &zeros)?
        .iter()
        .map(|s| s.p_post.trace())
        .collect())
}
