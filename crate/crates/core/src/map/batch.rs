//! Batch MAP over the stacked states `x = (x[0], …, x[k])`.
//!
//! With `x = Ω x[0] + Ψ w`, `X = Ω X₀ Ωᵀ + Ψ W Ψᵀ`, `Φ₁ = X^{-1/2}/√2` and
//! `Φ₂ = √2 diag(V)^{-1/2}` the program is
//!
//! ```text
//! min_x  ‖Φ₁ x‖² + ‖Φ₂ (y − C x)‖₁
//! ```
//!
//! Writing `D = Φ₂ C`, `s = Φ₂ y` and `H = D X Dᵀ`, every minimizer has the
//! form `x = X Dᵀ ν` with `ν` minimizing `½ νᵀHν + ‖s − Hν‖₁`. The solver
//! works on `ν` (dimension `p(k+1)` instead of `n(k+1)`): ADMM with the
//! split `z = s − Hν`, followed by an active-set polish that sets each
//! `ν_i` to `±1` or solves for a zero residual.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::soft_threshold;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::LtvModel;

/// Added to the stacked prior covariance before factorization.
pub const XBIG_REGULARIZATION: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50_000;
const RHO: f64 = 1.0;
const POLISH_EVERY: usize = 10;
const POLISH_ROUNDS: usize = 25;

/// Model-dependent stacked quantities for horizons up to `k`. The blocks
/// for any shorter horizon are leading submatrices.
#[derive(Debug, Clone)]
pub struct BatchStructure {
    pub k: usize,
    pub n: usize,
    pub p: usize,
    /// `n(k+1) × n`, block `t` is `A[t-1]⋯A[0]` (first block `I`).
    pub omega: DMatrix<f64>,
    /// `n(k+1) × nk`, block `(t, s)` is `A[t-1]⋯A[s+1]` for `s < t`.
    pub psi: DMatrix<f64>,
    /// `Ω X₀ Ωᵀ + Ψ W Ψᵀ + 1e-10·I`.
    pub xbig: DMatrix<f64>,
    /// `diag(C[0], …, C[k])`.
    pub cbig: DMatrix<f64>,
    /// Diagonal of `Φ₂`.
    pub phi2: DVector<f64>,
}

impl BatchStructure {
    pub fn new(model: &LtvModel, k: usize) -> Result<Self> {
        model.ensure_time(k)?;
        let (n, p) = (model.n(), model.p());
        let big_n = n * (k + 1);
        let mut omega = DMatrix::zeros(big_n, n);
        let mut psi = DMatrix::zeros(big_n, n * k);
        let mut wbig = DMatrix::zeros(n * k, n * k);
        omega.view_mut((0, 0), (n, n)).fill_with_identity();
        for t in 1..=k {
            let a = model.a(t - 1);
            let prev = omega.view((n * (t - 1), 0), (n, n)) * 1.0;
            omega.view_mut((n * t, 0), (n, n)).copy_from(&(a * prev));
            for s in 0..t - 1 {
                let prev = psi.view((n * (t - 1), n * s), (n, n)) * 1.0;
                psi.view_mut((n * t, n * s), (n, n)).copy_from(&(a * prev));
            }
            psi.view_mut((n * t, n * (t - 1)), (n, n)).fill_with_identity();
            wbig.view_mut((n * (t - 1), n * (t - 1)), (n, n))
                .copy_from(model.w(t - 1));
        }
        let mut xbig = &omega * model.x0() * omega.transpose() + &psi * &wbig * psi.transpose();
        linalg::symmetrize_in_place(&mut xbig);
        for i in 0..big_n {
            xbig[(i, i)] += XBIG_REGULARIZATION;
        }
        if !linalg::all_finite(&xbig) {
            return Err(Error::Numerical("stacked prior covariance is not finite".into()));
        }

        let mut cbig = DMatrix::zeros(p * (k + 1), big_n);
        let mut phi2 = DVector::zeros(p * (k + 1));
        for t in 0..=k {
            cbig.view_mut((p * t, n * t), (p, n)).copy_from(model.c(t));
            for i in 0..p {
                phi2[p * t + i] = (2.0 / model.v_ii(t, i)).sqrt();
            }
        }
        Ok(BatchStructure {
            k,
            n,
            p,
            omega,
            psi,
            xbig,
            cbig,
            phi2,
        })
    }

    fn dims(&self, k: usize) -> (usize, usize) {
        (self.n * (k + 1), self.p * (k + 1))
    }
}

/// A complete batch MAP instance for horizon `k`.
#[derive(Debug, Clone)]
pub struct BatchMapProblem {
    pub structure: BatchStructure,
    pub ybig: DVector<f64>,
    /// `(1/√2)·Xbig^{-1/2}`.
    pub phi1: DMatrix<f64>,
}

impl BatchMapProblem {
    pub fn k(&self) -> usize {
        self.structure.k
    }

    /// `‖Φ₁ x‖² + ‖Φ₂ (y − C x)‖₁`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let quad = (&self.phi1 * x).norm_squared();
        let resid = &self.ybig - &self.structure.cbig * x;
        quad + resid.component_mul(&self.structure.phi2).lp_norm(1)
    }
}

/// Stacks `ys = (y[0], …, y[k])`; `k = ys.len() − 1`.
pub fn build_batch_problem(model: &LtvModel, ys: &[DVector<f64>]) -> Result<BatchMapProblem> {
    if ys.is_empty() {
        return Err(Error::validation("measurements", "need at least y[0]"));
    }
    let k = ys.len() - 1;
    let structure = BatchStructure::new(model, k)?;
    let p = model.p();
    let mut ybig = DVector::zeros(p * (k + 1));
    for (t, y) in ys.iter().enumerate() {
        if y.len() != p {
            return Err(Error::validation(
                format!("y[{t}]"),
                format!("expected length {p}, got {}", y.len()),
            ));
        }
        ybig.rows_mut(p * t, p).copy_from(y);
    }
    if linalg::min_eigenvalue(&structure.xbig) <= 0.5 * XBIG_REGULARIZATION {
        return Err(Error::Numerical(
            "stacked prior covariance is singular beyond the regularization floor".into(),
        ));
    }
    let (_, inv_sqrt) = linalg::sym_sqrt_and_inv_sqrt(&structure.xbig);
    Ok(BatchMapProblem {
        structure,
        ybig,
        phi1: inv_sqrt * std::f64::consts::FRAC_1_SQRT_2,
    })
}

/// Measurement-space operators for one horizon. Independent of `y`, so a
/// plan is shared by every trajectory of a model.
#[derive(Debug, Clone)]
pub struct BatchMapPlan {
    pub k: usize,
    pub n: usize,
    /// `X Dᵀ`, maps `ν` to the stacked state.
    pub xdt: DMatrix<f64>,
    /// `H = D X Dᵀ`.
    pub h: DMatrix<f64>,
    pub phi2: DVector<f64>,
    eig_vectors: DMatrix<f64>,
    eig_values: DVector<f64>,
}

/// Result of a batch solve.
#[derive(Debug, Clone)]
pub struct BatchMapSolution {
    /// Stacked minimizer `x*`.
    pub x: DVector<f64>,
    /// Last block of `x*`, the estimate of `x[k]`.
    pub x_final: DVector<f64>,
    pub nu: DVector<f64>,
    pub iterations: usize,
    /// `‖r − soft(r + ν, 1)‖∞` with `r = s − Hν`; zero iff optimal.
    pub kkt_residual: f64,
    /// `½ νᵀHν + ‖s − Hν‖₁`, equal to the objective at `x*`.
    pub objective: f64,
    /// Best objective seen after each ADMM iteration.
    pub objective_trace: Vec<f64>,
}

impl BatchMapPlan {
    pub fn from_structure(structure: &BatchStructure, k: usize) -> Self {
        assert!(k <= structure.k, "plan horizon exceeds structure");
        let (big_n, m) = structure.dims(k);
        let phi2 = structure.phi2.rows(0, m).into_owned();
        let d = DMatrix::from_diagonal(&phi2) * structure.cbig.view((0, 0), (m, big_n));
        let xdt = structure.xbig.view((0, 0), (big_n, big_n)) * d.transpose();
        let mut h = &d * &xdt;
        linalg::symmetrize_in_place(&mut h);
        let eig = h.clone().symmetric_eigen();
        BatchMapPlan {
            k,
            n: structure.n,
            xdt,
            h,
            phi2,
            eig_vectors: eig.eigenvectors,
            eig_values: eig.eigenvalues.map(|l| l.max(0.0)),
        }
    }

    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    fn residual(&self, s: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        s - &self.h * nu
    }

    fn objective_nu(&self, s: &DVector<f64>, nu: &DVector<f64>) -> f64 {
        let hnu = &self.h * nu;
        0.5 * nu.dot(&hnu) + (s - hnu).lp_norm(1)
    }

    /// Solves for stacked measurements `ybig`. `warm` may be shorter than
    /// `m` (the previous horizon's `ν`); missing entries start at zero.
    pub fn solve(
        &self,
        ybig: &DVector<f64>,
        warm: Option<&DVector<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> Result<BatchMapSolution> {
        let m = self.m();
        if ybig.len() != m {
            return Err(Error::validation(
                "measurements",
                format!("expected {m} stacked values, got {}", ybig.len()),
            ));
        }
        let s = ybig.component_mul(&self.phi2);
        let mut nu = DVector::zeros(m);
        if let Some(w) = warm {
            let len = w.len().min(m);
            nu.rows_mut(0, len).copy_from(&w.rows(0, len));
        }

        // ADMM state; u = ν/ρ is the fixed-point relation at convergence.
        let mut u = &nu / RHO;
        let r0 = self.residual(&s, &nu);
        let mut z = (&r0 + &u).map(|v| soft_threshold(v, 1.0 / RHO));
        let q = &self.eig_vectors;
        let shrink = self.eig_values.map(|l| 1.0 / (l + 1.0 / RHO));

        let mut trace = Vec::new();
        let mut best = f64::INFINITY;
        let try_finish = |nu: &DVector<f64>, iterations: usize, trace: &Vec<f64>| {
            let r = self.residual(&s, nu);
            if kkt_residual(&r, nu) <= tol {
                return Some(self.finish(&s, nu.clone(), iterations, trace.clone()));
            }
            self.polish(&s, nu, tol)
                .map(|nu| self.finish(&s, nu, iterations, trace.clone()))
        };
        if let Some(sol) = try_finish(&nu, 0, &trace) {
            return Ok(sol);
        }

        let mut last_residual = f64::INFINITY;
        for it in 1..=max_iter {
            let b = &s - &z + &u;
            let c = (q.transpose() * b).component_mul(&shrink);
            nu = q * &c;
            let hnu = q * c.component_mul(&self.eig_values);
            let r = &s - hnu;
            z = (&r + &u).map(|v| soft_threshold(v, 1.0 / RHO));
            u += &r - &z;

            let f = 0.5 * nu.dot(&(&s - &r)) + r.lp_norm(1);
            best = best.min(f);
            trace.push(best);

            if it % POLISH_EVERY == 0 || it == max_iter {
                last_residual = kkt_residual(&r, &nu);
                if let Some(sol) = try_finish(&nu, it, &trace) {
                    return Ok(sol);
                }
            }
        }
        Err(Error::NotConverged {
            iterations: max_iter,
            residual: last_residual,
        })
    }

    /// Primal-dual active-set iterations from `start`. Returns a `ν` whose
    /// KKT residual is within `tol`, or `None`.
    fn polish(&self, s: &DVector<f64>, start: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
        let m = self.m();
        let mut nu = start.clone();
        let mut prev_sign: Option<Vec<i8>> = None;
        for _ in 0..POLISH_ROUNDS {
            let r = self.residual(s, &nu);
            let sign: Vec<i8> = (0..m)
                .map(|i| {
                    let t = r[i] + nu[i];
                    if t > 1.0 {
                        1
                    } else if t < -1.0 {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            if prev_sign.as_ref() == Some(&sign) {
                break;
            }
            let free: Vec<usize> = (0..m).filter(|&i| sign[i] == 0).collect();
            let mut next = DVector::from_iterator(m, sign.iter().map(|&v| v as f64));
            if !free.is_empty() {
                let bound: Vec<usize> = (0..m).filter(|&i| sign[i] != 0).collect();
                let hzz = self.h.select_rows(&free).select_columns(&free);
                let mut rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| s[i]));
                if !bound.is_empty() {
                    let hzb = self.h.select_rows(&free).select_columns(&bound);
                    let nb = DVector::from_iterator(bound.len(), bound.iter().map(|&i| next[i]));
                    rhs -= hzb * nb;
                }
                let sol = match hzz.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => hzz.svd(true, true).solve(&rhs, 1e-14).ok()?,
                };
                for (j, &i) in free.iter().enumerate() {
                    next[i] = sol[j];
                }
            }
            nu = next;
            let r = self.residual(s, &nu);
            if kkt_residual(&r, &nu) <= tol {
                return Some(nu);
            }
            prev_sign = Some(sign);
        }
        None
    }

    fn finish(
        &self,
        s: &DVector<f64>,
        nu: DVector<f64>,
        iterations: usize,
        objective_trace: Vec<f64>,
    ) -> BatchMapSolution {
        let x = &self.xdt * &nu;
        let x_final = x.rows(x.len() - self.n, self.n).into_owned();
        let r = self.residual(s, &nu);
        BatchMapSolution {
            kkt_residual: kkt_residual(&r, &nu),
            objective: self.objective_nu(s, &nu),
            x,
            x_final,
            nu,
            iterations,
            objective_trace,
        }
    }
}

/// `‖r − soft(r + ν, 1)‖∞`: zero exactly when `ν_i ∈ ∂|r_i|` for all `i`.
pub fn kkt_residual(r: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    r.iter()
        .zip(nu.iter())
        .map(|(&ri, &ni)| (ri - soft_threshold(ri + ni, 1.0)).abs())
        .fold(0.0, f64::max)
}

/// Minimizes the batch objective of `problem`.
pub fn solve_batch_map(
    problem: &BatchMapProblem,
    tol: f64,
    max_iter: usize,
) -> Result<BatchMapSolution> {
    let plan = BatchMapPlan::from_structure(&problem.structure, problem.k());
    plan.solve(&problem.ybig, None, tol, max_iter)
}

/// Plans for every horizon `0..=k`, built from one structure.
#[derive(Debug, Clone)]
pub struct BatchMapPlans {
    plans: Vec<BatchMapPlan>,
}

impl BatchMapPlans {
    pub fn new(model: &LtvModel, k: usize) -> Result<Self> {
        let structure = BatchStructure::new(model, k)?;
        Ok(BatchMapPlans {
            plans: (0..=k).map(|t| BatchMapPlan::from_structure(&structure, t)).collect(),
        })
    }

    pub fn get(&self, k: usize) -> Option<&BatchMapPlan> {
        self.plans.get(k)
    }

    pub fn horizon(&self) -> usize {
        self.plans.len() - 1
    }
}

/// Online use of the batch MAP: at each `k` the whole history is re-solved,
/// warm-started from the previous `ν`.
#[derive(Debug, Clone)]
pub struct BatchMapFilter {
    plans: Arc<BatchMapPlans>,
    ybig: Vec<f64>,
    nu: Option<DVector<f64>>,
    k: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl BatchMapFilter {
    pub fn new(plans: Arc<BatchMapPlans>, tol: f64, max_iter: usize) -> Self {
        BatchMapFilter {
            plans,
            ybig: Vec::new(),
            nu: None,
            k: 0,
            tol,
            max_iter,
        }
    }

    pub fn step(&mut self, y: &DVector<f64>) -> Result<BatchMapSolution> {
        let k = self.k;
        let plan = self.plans.get(k).ok_or(Error::HorizonExceedsSchedule {
            field: "map plan",
            horizon: k,
        })?;
        self.ybig.extend(y.iter());
        let ybig = DVector::from_column_slice(&self.ybig);
        let sol = plan.solve(&ybig, self.nu.as_ref(), self.tol, self.max_iter)?;
        self.nu = Some(sol.nu.clone());
        self.k += 1;
        Ok(sol)
    }
}
