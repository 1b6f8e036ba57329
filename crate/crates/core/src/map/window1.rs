//! Window-of-one MAP filter for scalar measurements.
//!
//! The past is summarized by `x[k] ~ N(μ, Ξ)`. After the time update
//! `μ′ = Aμ`, `Ξ′ = AΞAᵀ + W` the estimate solves
//!
//! ```text
//! min_x  ½ (x − μ′)ᵀ Ξ′⁻¹ (x − μ′) + √(2/V) |C x − y|
//! ```
//!
//! whose minimizer, with `ζ = √(2/V) Ξ′Cᵀ`, is `μ′ − ζ` when
//! `y < Cμ′ − Cζ`, `μ′ + ζ` when `y > Cμ′ + Cζ`, and otherwise the point
//! of `{Cx = y}` closest to `μ′` in the `Ξ′⁻¹` metric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::LtvModel;

/// Below this `CΞ′Cᵀ` the prior is treated as exact along `C`.
const DEGENERATE_GAIN_TOL: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window1Case {
    /// `y < Cμ′ − Cζ`.
    Below,
    /// `y > Cμ′ + Cζ`.
    Above,
    /// Measurement interpolated: `C x̂ = y`.
    Interpolate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window1MapState {
    pub mu: DVector<f64>,
    pub xi: DMatrix<f64>,
    pub k: usize,
    started: bool,
}

/// One-step quantities, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Window1Step {
    pub mu_pred: DVector<f64>,
    pub xi_pred: DMatrix<f64>,
    pub zeta: DVector<f64>,
    pub case: Window1Case,
    pub x_hat: DVector<f64>,
}

/// Requires `p = 1`.
pub fn window1_init(model: &LtvModel) -> Result<Window1MapState> {
    if model.p() != 1 {
        return Err(Error::Unsupported(format!(
            "window-one MAP: scalar measurements required (model has p={})",
            model.p()
        )));
    }
    Ok(Window1MapState {
        mu: DVector::zeros(model.n()),
        xi: model.x0().clone(),
        k: 0,
        started: false,
    })
}

/// Closed-form minimizer of the one-step objective.
pub fn window1_point(
    mu_pred: &DVector<f64>,
    xi_pred: &DMatrix<f64>,
    c: &DMatrix<f64>,
    v: f64,
    y: f64,
) -> Result<(DVector<f64>, DVector<f64>, Window1Case)> {
    let ct = c.transpose();
    if c.norm_squared() == 0.0 {
        return Err(Error::Numerical("measurement row C is zero".into()));
    }
    let xct = xi_pred * &ct;
    let cxc = (c * &xct)[(0, 0)].max(0.0);
    let zeta = xct.column(0) * (2.0 / v).sqrt();
    let c_mu = (c * mu_pred)[(0, 0)];
    let c_zeta = (c * &zeta)[0];
    let (x, case) = if y < c_mu - c_zeta {
        (mu_pred - &zeta, Window1Case::Below)
    } else if y > c_mu + c_zeta {
        (mu_pred + &zeta, Window1Case::Above)
    } else if cxc > DEGENERATE_GAIN_TOL {
        (mu_pred + xct.column(0) * ((y - c_mu) / cxc), Window1Case::Interpolate)
    } else {
        (mu_pred.clone(), Window1Case::Interpolate)
    };
    Ok((x, zeta, case))
}

/// Interpolation branch written as `x′ + N Nᵀ μ′` with `x′ = Cᵀy/(CCᵀ)`:
/// the Euclidean projection of `μ′` onto `{Cx = y}`. Coincides with the
/// `Ξ′⁻¹`-metric projection only when `Ξ′Cᵀ ∝ Cᵀ`.
pub fn euclidean_interpolant(mu_pred: &DVector<f64>, c: &DMatrix<f64>, y: f64) -> DVector<f64> {
    let row = c.row(0).transpose();
    let x_prime = &row * (y / row.norm_squared());
    let nb = null_space_basis(c);
    x_prime + &nb * (nb.transpose() * mu_pred)
}

/// Orthonormal basis of `{x : Cx = 0}` for a single row `C` (`n × (n−1)`).
pub fn null_space_basis(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.ncols();
    let row = c.row(0).transpose();
    let proj = DMatrix::identity(n, n) - &row * row.transpose() / row.norm_squared();
    let eig = proj.symmetric_eigen();
    let cols: Vec<_> = (0..n)
        .filter(|&j| eig.eigenvalues[j] > 0.5)
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// `½ (x − μ′)ᵀ Ξ′⁻¹ (x − μ′) + √(2/V) |Cx − y|`; `xi_inv` is `Ξ′⁻¹`.
pub fn window1_objective(
    x: &DVector<f64>,
    mu_pred: &DVector<f64>,
    xi_inv: &DMatrix<f64>,
    c: &DMatrix<f64>,
    v: f64,
    y: f64,
) -> f64 {
    let d = x - mu_pred;
    0.5 * d.dot(&(xi_inv * &d)) + (2.0 / v).sqrt() * ((c * x)[0] - y).abs()
}

impl Window1MapState {
    /// Absorbs `y[k]`; the first call applies the MAP step to the prior
    /// `N(0, X₀)` without a time update.
    pub fn step_detailed(&mut self, model: &LtvModel, y: f64) -> Result<Window1Step> {
        let (mu_pred, xi_pred) = if self.started {
            model.ensure_time(self.k + 1)?;
            let a = model.a(self.k);
            let mut xi = a * &self.xi * a.transpose() + model.w(self.k);
            linalg::symmetrize_in_place(&mut xi);
            self.k += 1;
            (a * &self.mu, xi)
        } else {
            model.ensure_time(0)?;
            (self.mu.clone(), self.xi.clone())
        };
        let k = self.k;
        let c = model.c(k);
        let v = model.v_ii(k, 0);
        let (x_hat, zeta, case) = window1_point(&mu_pred, &xi_pred, c, v, y)?;

        let xct = &xi_pred * c.transpose();
        let s = (c * &xct)[(0, 0)] + v;
        let gain = &xct / s;
        let mut xi = &xi_pred - &gain * (c * &xi_pred);
        linalg::symmetrize_in_place(&mut xi);
        self.mu = x_hat.clone();
        self.xi = xi;
        self.started = true;
        Ok(Window1Step {
            mu_pred,
            xi_pred,
            zeta,
            case,
            x_hat,
        })
    }

    pub fn step(&mut self, model: &LtvModel, y: f64) -> Result<DVector<f64>> {
        self.step_detailed(model, y).map(|s| s.x_hat)
    }
}

/// Functional form of [`Window1MapState::step`].
pub fn window1_step(
    state: &Window1MapState,
    model: &LtvModel,
    y: f64,
) -> Result<(Window1MapState, DVector<f64>)> {
    let mut next = state.clone();
    let x = next.step(model, y)?;
    Ok((next, x))
}
