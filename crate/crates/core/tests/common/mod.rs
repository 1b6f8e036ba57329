//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use lapkf::noise::ScaleTarget;
use lapkf::stats;
use nalgebra::{DMatrix, DVector};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Nested golden-section minimization of a convex function of two
/// variables over the box `center ± half_width`.
pub fn golden_min_2d(
    f: impl Fn(f64, f64) -> f64,
    center: (f64, f64),
    half_width: f64,
    tol: f64,
) -> (f64, f64) {
    let inner = |x0: f64| {
        golden_min(|x1| f(x0, x1), center.1 - half_width, center.1 + half_width, tol)
    };
    let (x0, _) = golden_min(|x0| inner(x0).1, center.0 - half_width, center.0 + half_width, tol);
    (x0, inner(x0).0)
}

/// Maximum of `g(τ) = exp(−e²/(2(s₀+τ²)))/(s₀+τ²)` over `τ ≥ 0` by a grid
/// in `ln τ` refined with golden-section search.
pub fn grid_bound(e: f64, s0: f64) -> f64 {
    // g → 0 as τ → 0 when s₀ = 0 and e ≠ 0.
    let g = |tau: f64| {
        let s = s0 + tau * tau;
        if s == 0.0 {
            return 0.0;
        }
        (-e * e / (2.0 * s)).exp() / s
    };
    let mut best = (g(0.0), 0.0);
    let (lo, hi) = (-12.0_f64, 8.0_f64);
    let steps = 20_000;
    for i in 0..=steps {
        let t = (lo + (hi - lo) * i as f64 / steps as f64).exp();
        let v = g(t);
        if v > best.0 {
            best = (v, t);
        }
    }
    if best.1 > 0.0 {
        let d = (hi - lo) / steps as f64;
        let (l, r) = (best.1 * (-d).exp(), best.1 * d.exp());
        let (t, v) = golden_min(|t| -g(t), l, r, 1e-14 * best.1.max(1.0));
        best = (-v, t);
    }
    best.0
}

/// χ² statistic and the `1 − α` critical value for draws of `τ` against
/// the quadrature-normalized target, on `bins` equiprobable bins.
pub fn chi_square_vs_target(target: &ScaleTarget, draws: &[f64], bins: usize, alpha: f64) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let hi = 10.0 * target.v_ii.sqrt();
    let dens = |t: f64| target.unnormalized_density(t);
    // Cumulative integrals on a fine grid, then linear inversion.
    let pieces = 4000;
    let mut cum = vec![0.0; pieces + 1];
    for i in 0..pieces {
        let a = hi * i as f64 / pieces as f64;
        let b = hi * (i + 1) as f64 / pieces as f64;
        cum[i + 1] = cum[i] + stats::integrate(dens, a, b, 1e-15);
    }
    let total = cum[pieces];
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(0.0);
    for b in 1..bins {
        let q = total * b as f64 / bins as f64;
        let i = cum.partition_point(|&c| c < q).clamp(1, pieces);
        // Refine inside piece i-1 by bisection on the exact integral.
        let (mut lo, mut up) = (hi * (i - 1) as f64 / pieces as f64, hi * i as f64 / pieces as f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + up);
            if cum[i - 1] + stats::integrate(dens, hi * (i - 1) as f64 / pieces as f64, mid, 1e-15) < q {
                lo = mid;
            } else {
                up = mid;
            }
        }
        edges.push(0.5 * (lo + up));
    }
    let mut counts = vec![0u64; bins];
    for &d in draws {
        let idx = edges.partition_point(|&e| e <= d).saturating_sub(1).min(bins - 1);
        counts[idx] += 1;
    }
    let expected = vec![draws.len() as f64 / bins as f64; bins];
    let chi2 = stats::chi_square(&counts, &expected);
    let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(1.0 - alpha);
    (chi2, crit)
}

/// Stabilizing solution `P⁻` of the filtering Riccati equation
/// `P = A P Aᵀ − A P Cᵀ (C P Cᵀ + V)⁻¹ C P Aᵀ + W`
/// by the structured doubling algorithm.
pub fn dare_sda(a: &DMatrix<f64>, c: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.transpose();
    let mut gk = c.transpose() * v.clone().try_inverse().unwrap() * c;
    let mut hk = w.clone();
    for _ in 0..100 {
        let m = (&eye + &gk * &hk).try_inverse().unwrap();
        let a_next = &ak * &m * &ak;
        let g_next = &gk + &ak * &m * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &m * &ak;
        let delta = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if delta <= 1e-15 * hk.norm() {
            break;
        }
    }
    (&hk + hk.transpose()) * 0.5
}

/// Filtered covariance from the predicted one.
pub fn filtered_from_predicted(p: &DMatrix<f64>, c: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let s = c * p * c.transpose() + v;
    p - p * c.transpose() * s.try_inverse().unwrap() * c * p
}

/// Fraction with binomial standard error.
pub fn frequency(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

pub fn stack(xs: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = xs.iter().map(|x| x.len()).sum();
    DVector::from_iterator(n, xs.iter().flat_map(|x| x.iter().cloned()))
}
