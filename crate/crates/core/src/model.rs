//! Linear time-varying system with Gaussian process noise and Laplace
//! measurement noise:
//!
//! ```text
//! x[k+1] = A[k] x[k] + w[k],   w[k] ~ N(0, W[k])
//! y[k]   = C[k] x[k] + v[k],   v_i[k] ~ Laplace(0, sqrt(V_ii[k] / 2))
//! ```
//!
//! with `E{x[0]} = 0` and `E{x[0] x[0]ᵀ} = X0`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::{sample_laplace, LaplaceParam};
use crate::rng;

/// Tolerance on the smallest eigenvalue of covariance inputs.
pub const PSD_TOLERANCE: f64 = -1e-10;

/// A matrix that is either constant over time or given per time step.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(DMatrix<f64>),
    PerStep(Vec<DMatrix<f64>>),
}

impl Schedule {
    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        match self {
            Schedule::Constant(m) => m,
            Schedule::PerStep(list) => &list[k],
        }
    }

    /// Number of explicit entries, `None` when constant.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> Option<usize> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::PerStep(list) => Some(list.len()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }

    fn entries(&self) -> Vec<&DMatrix<f64>> {
        match self {
            Schedule::Constant(m) => vec![m],
            Schedule::PerStep(list) => list.iter().collect(),
        }
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Schedule {
        match self {
            Schedule::Constant(m) => Schedule::Constant(f(m)),
            Schedule::PerStep(list) => Schedule::PerStep(list.iter().map(f).collect()),
        }
    }
}

impl From<DMatrix<f64>> for Schedule {
    fn from(m: DMatrix<f64>) -> Self {
        Schedule::Constant(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtvModel {
    n: usize,
    p: usize,
    a: Schedule,
    c: Schedule,
    w: Schedule,
    v: Schedule,
    x0: DMatrix<f64>,
}

impl LtvModel {
    /// Builds and validates a model.
    pub fn new(
        a: impl Into<Schedule>,
        c: impl Into<Schedule>,
        w: impl Into<Schedule>,
        v: impl Into<Schedule>,
        x0: DMatrix<f64>,
    ) -> Result<Self> {
        let a = a.into();
        let c = c.into();
        let n = a.entries().first().map(|m| m.nrows()).unwrap_or(0);
        let p = c.entries().first().map(|m| m.nrows()).unwrap_or(0);
        let mut model = LtvModel {
            n,
            p,
            a,
            c,
            w: w.into(),
            v: v.into(),
            x0,
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model checking only dimensions. Covariances may be
    /// singular or zero (e.g. noise-free propagation experiments).
    pub fn new_unchecked(
        a: impl Into<Schedule>,
        c: impl Into<Schedule>,
        w: impl Into<Schedule>,
        v: impl Into<Schedule>,
        x0: DMatrix<f64>,
    ) -> Result<Self> {
        let a = a.into();
        let c = c.into();
        let n = a.entries().first().map(|m| m.nrows()).unwrap_or(0);
        let p = c.entries().first().map(|m| m.nrows()).unwrap_or(0);
        let model = LtvModel {
            n,
            p,
            a,
            c,
            w: w.into(),
            v: v.into(),
            x0,
        };
        model.check_dimensions()?;
        Ok(model)
    }

    /// The two-state example system: `A = [[0.9, 1], [0, 0.8]]`,
    /// `C = [1, 0]`, `W = diag(1, 1.5)`, `V = 10`, `X0 = 0`.
    pub fn example_two_state() -> Self {
        LtvModel::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.8]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.5])),
            DMatrix::from_element(1, 1, 10.0),
            DMatrix::zeros(2, 2),
        )
        .expect("example model is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        self.a.at(k)
    }

    pub fn c(&self, k: usize) -> &DMatrix<f64> {
        self.c.at(k)
    }

    pub fn w(&self, k: usize) -> &DMatrix<f64> {
        self.w.at(k)
    }

    pub fn v(&self, k: usize) -> &DMatrix<f64> {
        self.v.at(k)
    }

    pub fn x0(&self) -> &DMatrix<f64> {
        &self.x0
    }

    pub fn schedules(&self) -> [(&'static str, &Schedule); 4] {
        [("A", &self.a), ("C", &self.c), ("W", &self.w), ("V", &self.v)]
    }

    pub fn is_time_invariant(&self) -> bool {
        self.schedules().iter().all(|(_, s)| s.is_constant())
    }

    /// Measurement-noise variance `V_ii[k]`.
    pub fn v_ii(&self, k: usize, i: usize) -> f64 {
        self.v.at(k)[(i, i)]
    }

    /// Laplace scale `b_i[k] = sqrt(V_ii[k] / 2)`.
    pub fn laplace_scale(&self, k: usize, i: usize) -> f64 {
        (self.v_ii(k, i) / 2.0).sqrt()
    }

    /// Longest horizon `K` the schedules support: `A`, `W` are needed for
    /// `k < K` and `C`, `V` for `k ≤ K`. `None` means unbounded.
    pub fn max_horizon(&self) -> Option<usize> {
        let mut limit: Option<usize> = None;
        let mut tighten = |cap: usize| limit = Some(limit.map_or(cap, |l: usize| l.min(cap)));
        if let Some(len) = self.a.len() {
            tighten(len);
        }
        if let Some(len) = self.w.len() {
            tighten(len);
        }
        if let Some(len) = self.c.len() {
            tighten(len.saturating_sub(1));
        }
        if let Some(len) = self.v.len() {
            tighten(len.saturating_sub(1));
        }
        limit
    }

    /// Error unless measurements at time `k` (and transitions before it)
    /// are covered by the schedules.
    pub fn ensure_time(&self, k: usize) -> Result<()> {
        for (field, sched, need) in [
            ("C", &self.c, k + 1),
            ("V", &self.v, k + 1),
            ("A", &self.a, k),
            ("W", &self.w, k),
        ] {
            if let Some(len) = sched.len() {
                if len < need {
                    return Err(Error::HorizonExceedsSchedule { field, horizon: k });
                }
            }
        }
        Ok(())
    }

    /// Spectral radius of `A` (the maximum over the schedule when
    /// time-varying).
    pub fn spectral_radius(&self) -> Result<f64> {
        self.a
            .entries()
            .into_iter()
            .map(linalg::spectral_radius)
            .try_fold(0.0_f64, |acc, r| r.map(|r| acc.max(r)))
    }

    /// `lim E{‖x[k]‖²} = Tr(X∞)` for a stable time-invariant model.
    pub fn stationary_second_moment(&self) -> Option<f64> {
        if !(self.a.is_constant() && self.w.is_constant()) {
            return None;
        }
        if self.spectral_radius().ok()? >= 1.0 {
            return None;
        }
        linalg::lyapunov_fixed_point(self.a(0), self.w(0), 1_000_000).map(|x| x.trace())
    }

    fn check_dimensions(&self) -> Result<()> {
        let (n, p) = (self.n, self.p);
        if n == 0 {
            return Err(Error::validation("A", "state dimension must be positive"));
        }
        if p == 0 {
            return Err(Error::validation("C", "output dimension must be positive"));
        }
        let checks: [(&str, &Schedule, usize, usize); 4] = [
            ("A", &self.a, n, n),
            ("C", &self.c, p, n),
            ("W", &self.w, n, n),
            ("V", &self.v, p, p),
        ];
        for (field, sched, rows, cols) in checks {
            for (idx, m) in sched.entries().into_iter().enumerate() {
                if m.nrows() != rows || m.ncols() != cols {
                    return Err(Error::validation(
                        field,
                        format!(
                            "entry {idx} is {}x{}, expected {rows}x{cols}",
                            m.nrows(),
                            m.ncols()
                        ),
                    ));
                }
                if !linalg::all_finite(m) {
                    return Err(Error::validation(field, format!("entry {idx} is not finite")));
                }
            }
            if sched.len() == Some(0) {
                return Err(Error::validation(field, "schedule is empty"));
            }
        }
        if self.x0.nrows() != n || self.x0.ncols() != n {
            return Err(Error::validation(
                "X0",
                format!("is {}x{}, expected {n}x{n}", self.x0.nrows(), self.x0.ncols()),
            ));
        }
        if !linalg::all_finite(&self.x0) {
            return Err(Error::validation("X0", "is not finite"));
        }
        Ok(())
    }

    fn validate(&mut self) -> Result<()> {
        self.check_dimensions()?;
        for (field, sched) in [("W", &self.w)] {
            for (idx, m) in sched.entries().into_iter().enumerate() {
                check_psd(field, idx, m)?;
            }
        }
        check_psd("X0", 0, &self.x0)?;
        for (idx, m) in self.v.entries().into_iter().enumerate() {
            for i in 0..self.p {
                for j in 0..self.p {
                    if i != j && m[(i, j)] != 0.0 {
                        return Err(Error::validation(
                            "V",
                            format!(
                                "entry {idx} must be diagonal (measurement noises are independent); \
                                 element ({i},{j}) = {}",
                                m[(i, j)]
                            ),
                        ));
                    }
                }
                if !(m[(i, i)] > 0.0) {
                    return Err(Error::validation(
                        "V",
                        format!("entry {idx} has non-positive variance V_{i}{i} = {}", m[(i, i)]),
                    ));
                }
            }
        }
        self.w = self.w.map(linalg::symmetrize);
        self.x0 = linalg::symmetrize(&self.x0);
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_model()
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_model()
    }

    pub fn to_document(&self) -> ModelDocument {
        let sched = |s: &Schedule| match s {
            Schedule::Constant(m) => ScheduleSpec::Single(MatrixSpec::from_matrix(m)),
            Schedule::PerStep(list) => ScheduleSpec::Schedule {
                schedule: list.iter().map(MatrixSpec::from_matrix).collect(),
            },
        };
        ModelDocument {
            n: self.n,
            p: self.p,
            a: sched(&self.a),
            c: sched(&self.c),
            w: sched(&self.w),
            v: sched(&self.v),
            x0: MatrixSpec::from_matrix(&self.x0),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }
}

fn check_psd(field: &str, idx: usize, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::validation(
            field,
            format!("entry {idx} is not symmetric (max asymmetry {asym:.3e})"),
        ));
    }
    let min_eig = linalg::min_eigenvalue(&linalg::symmetrize(m));
    if min_eig < PSD_TOLERANCE {
        return Err(Error::validation(
            field,
            format!("entry {idx} is not positive semidefinite (min eigenvalue {min_eig:.3e})"),
        ));
    }
    Ok(())
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<LtvModel> {
    let text = std::fs::read_to_string(path.as_ref())?;
    LtvModel::from_json_str(&text)
}

/// A matrix in a model document: a 2-D array or `{"diag": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixSpec {
    Dense(Vec<Vec<f64>>),
    Diag { diag: Vec<f64> },
}

impl MatrixSpec {
    fn to_matrix(&self, field: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Diag { diag } => {
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
            }
            MatrixSpec::Dense(rows) => {
                let nrows = rows.len();
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != ncols) {
                    return Err(Error::validation(field, "rows have unequal lengths"));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixSpec::Dense(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Schedule { schedule: Vec<MatrixSpec> },
    Single(MatrixSpec),
}

impl ScheduleSpec {
    fn to_schedule(&self, field: &str) -> Result<Schedule> {
        match self {
            ScheduleSpec::Single(m) => Ok(Schedule::Constant(m.to_matrix(field)?)),
            ScheduleSpec::Schedule { schedule } => Ok(Schedule::PerStep(
                schedule
                    .iter()
                    .map(|m| m.to_matrix(field))
                    .collect::<Result<_>>()?,
            )),
        }
    }
}

/// JSON model file: keys `n, p, A, C, W, V, X0`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: ScheduleSpec,
    #[serde(rename = "C")]
    pub c: ScheduleSpec,
    #[serde(rename = "W")]
    pub w: ScheduleSpec,
    #[serde(rename = "V")]
    pub v: ScheduleSpec,
    #[serde(rename = "X0")]
    pub x0: MatrixSpec,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<LtvModel> {
        let model = LtvModel::new(
            self.a.to_schedule("A")?,
            self.c.to_schedule("C")?,
            self.w.to_schedule("W")?,
            self.v.to_schedule("V")?,
            self.x0.to_matrix("X0")?,
        )?;
        if model.n() != self.n {
            return Err(Error::validation(
                "n",
                format!("declared {} but A is {}x{}", self.n, model.n(), model.n()),
            ));
        }
        if model.p() != self.p {
            return Err(Error::validation(
                "p",
                format!("declared {} but C has {} rows", self.p, model.p()),
            ));
        }
        Ok(model)
    }
}

/// Initial state used by [`simulate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    Zero,
    /// `x[0] ~ N(0, X0)`.
    #[default]
    Sample,
    Given(DVector<f64>),
}

/// Realized sequences of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    /// `x[0..=K]`
    pub x: Vec<DVector<f64>>,
    /// `w[0..K]`
    pub w: Vec<DVector<f64>>,
    /// `v[0..=K]`
    pub v: Vec<DVector<f64>>,
    /// `y[0..=K]`
    pub y: Vec<DVector<f64>>,
}

/// Simulates `K` steps from a fresh stream seeded by `seed`.
pub fn simulate(
    model: &LtvModel,
    horizon: usize,
    seed: u64,
    x0_mode: &InitialState,
) -> Result<Trajectory> {
    let mut stream = rng::stream(seed, &[]);
    simulate_with_rng(model, horizon, &mut stream, x0_mode)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    model: &LtvModel,
    horizon: usize,
    rng: &mut R,
    x0_mode: &InitialState,
) -> Result<Trajectory> {
    model.ensure_time(horizon)?;
    let n = model.n();
    let p = model.p();

    let mut w_factor_cache: Option<(usize, DMatrix<f64>)> = None;
    let mut w_factor = |k: usize| -> DMatrix<f64> {
        let key = if model.w.is_constant() { 0 } else { k };
        match &w_factor_cache {
            Some((cached, f)) if *cached == key => f.clone(),
            _ => {
                let f = linalg::psd_factor(model.w(k));
                w_factor_cache = Some((key, f.clone()));
                f
            }
        }
    };

    let x_start = match x0_mode {
        InitialState::Zero => DVector::zeros(n),
        InitialState::Given(x) => {
            if x.len() != n {
                return Err(Error::validation(
                    "x0",
                    format!("has length {}, expected {n}", x.len()),
                ));
            }
            x.clone()
        }
        InitialState::Sample => {
            let factor = linalg::psd_factor(model.x0());
            let z = standard_normal_vector(rng, n);
            factor * z
        }
    };

    let mut x = Vec::with_capacity(horizon + 1);
    let mut w = Vec::with_capacity(horizon);
    let mut v = Vec::with_capacity(horizon + 1);
    let mut y = Vec::with_capacity(horizon + 1);
    x.push(x_start);

    for k in 0..=horizon {
        let vk = DVector::from_iterator(
            p,
            (0..p).map(|i| {
                let b = model.laplace_scale(k, i);
                if b > 0.0 {
                    sample_laplace(&LaplaceParam { a: 0.0, b }, rng)
                } else {
                    0.0
                }
            }),
        );
        y.push(model.c(k) * &x[k] + &vk);
        v.push(vk);
        if k < horizon {
            let wk = w_factor(k) * standard_normal_vector(rng, n);
            let next = model.a(k) * &x[k] + &wk;
            w.push(wk);
            x.push(next);
        }
    }

    Ok(Trajectory { horizon, x, w, v, y })
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}
