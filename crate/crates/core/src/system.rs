//! Time grids, coefficient functions `A(t)`, and perturbations `B(t)`.
//!
//! A [`LinearSystem`] is one of three kinds: a constant matrix, a builtin
//! parametric family from the catalog, or piecewise-linear interpolation of
//! sampled matrices loaded from CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, Matrix};

/// Largest supported state dimension.
pub const MAX_DIM: usize = 64;
/// Largest supported number of grid intervals.
pub const MAX_GRID_INTERVALS: usize = 10_000_000;

const GRID_INTEGRALITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unknown builtin system `{0}`")]
    UnknownSystem(String),
    #[error("invalid parameter for `{system}`: {message}")]
    InvalidParameter { system: String, message: String },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{entries} matrix entries per row is not a perfect square")]
    Dimension { entries: usize },
    #[error("sample times not strictly increasing at line {line}")]
    NonMonotoneTime { line: usize },
    #[error("time {t} outside the sampled range [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Uniform grid `t_min + k·h`, `k = 0..=intervals`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    t_min: f64,
    t_max: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, h: f64) -> Result<Self, SystemError> {
        if !(t_min.is_finite() && t_max.is_finite() && h.is_finite()) {
            return Err(SystemError::InvalidGrid("non-finite bounds or step".into()));
        }
        if t_min >= t_max {
            return Err(SystemError::InvalidGrid(format!("t_min {t_min} must be below t_max {t_max}")));
        }
        if h <= 0.0 {
            return Err(SystemError::InvalidGrid(format!("step {h} must be positive")));
        }
        let ratio = (t_max - t_min) / h;
        if ratio > MAX_GRID_INTERVALS as f64 + 0.5 {
            return Err(SystemError::InvalidGrid(format!("{ratio:.0} intervals exceeds the cap of {MAX_GRID_INTERVALS}")));
        }
        let intervals = ratio.round();
        if (ratio - intervals).abs() > GRID_INTEGRALITY_TOL * ratio.max(1.0) || intervals < 1.0 {
            return Err(SystemError::InvalidGrid(format!(
                "(t_max - t_min)/h = {ratio} is not an integer"
            )));
        }
        Ok(Self { t_min, t_max, intervals: intervals as usize })
    }

    /// Symmetric window `[-half, half]` with step `h`.
    pub fn symmetric(half: f64, h: f64) -> Result<Self, SystemError> {
        Self::new(-half, half, h)
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&self) -> f64 {
        (self.t_max - self.t_min) / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn point(&self, k: usize) -> f64 {
        debug_assert!(k <= self.intervals);
        if k == self.intervals {
            self.t_max
        } else {
            self.t_min + (self.t_max - self.t_min) * (k as f64 / self.intervals as f64)
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Index of the grid point equal to `t` (within 1e-9 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.t_min) / self.step();
        let k = pos.round();
        if k < 0.0 || k > self.intervals as f64 || (pos - k).abs() > 1e-9 {
            return None;
        }
        Some(k as usize)
    }

    /// Index of the grid point closest to `t`, clamped into the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = ((t - self.t_min) / self.step()).round();
        pos.clamp(0.0, self.intervals as f64) as usize
    }

    /// Sub-grid spanning indices `lo..=hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> TimeGrid {
        assert!(lo < hi && hi <= self.intervals, "invalid grid slice {lo}..={hi}");
        TimeGrid { t_min: self.point(lo), t_max: self.point(hi), intervals: hi - lo }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Constant,
    BuiltinParametric,
    Sampled,
}

/// Dichotomy status documented by the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KnownStatus {
    Dichotomic,
    NotDichotomic,
    Unknown,
}

type MatrixFn = Arc<dyn Fn(f64) -> Matrix + Send + Sync>;

#[derive(Clone)]
enum Coefficient {
    Constant(Matrix),
    Function(MatrixFn),
    Sampled { times: Vec<f64>, values: Vec<Matrix> },
}

/// Coefficient function `A(t)` of `x' = A(t) x`.
#[derive(Clone)]
pub struct LinearSystem {
    dim: usize,
    kind: SystemKind,
    name: String,
    params: BTreeMap<String, Vec<f64>>,
    status: KnownStatus,
    domain: Option<(f64, f64)>,
    coefficient: Coefficient,
}

impl fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("params", &self.params)
            .finish()
    }
}

impl LinearSystem {
    pub fn constant(name: impl Into<String>, a: Matrix) -> Self {
        assert!(a.is_square(), "coefficient must be square");
        let status = constant_status(&a);
        Self {
            dim: a.nrows(),
            kind: SystemKind::Constant,
            name: name.into(),
            params: BTreeMap::new(),
            status,
            domain: None,
            coefficient: Coefficient::Constant(a),
        }
    }

    pub fn from_fn(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(f64) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            kind: SystemKind::BuiltinParametric,
            name: name.into(),
            params: BTreeMap::new(),
            status: KnownStatus::Unknown,
            domain: None,
            coefficient: Coefficient::Function(Arc::new(f)),
        }
    }

    pub fn sampled(times: Vec<f64>, values: Vec<Matrix>) -> Self {
        assert!(times.len() == values.len() && times.len() >= 2);
        let domain = Some((times[0], *times.last().unwrap()));
        Self {
            dim: values[0].nrows(),
            kind: SystemKind::Sampled,
            name: "sampled".into(),
            params: BTreeMap::new(),
            status: KnownStatus::Unknown,
            domain,
            coefficient: Coefficient::Sampled { times, values },
        }
    }

    fn with_meta(mut self, params: BTreeMap<String, Vec<f64>>, status: KnownStatus) -> Self {
        self.params = params;
        self.status = status;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.params
    }

    pub fn known_status(&self) -> KnownStatus {
        self.status
    }

    /// The matrix of a constant-kind system.
    pub fn constant_matrix(&self) -> Option<&Matrix> {
        match &self.coefficient {
            Coefficient::Constant(a) => Some(a),
            _ => None,
        }
    }

    /// Time interval on which `A(t)` is defined (`None` means all of ℝ).
    pub fn domain(&self) -> Option<(f64, f64)> {
        self.domain
    }

    pub fn covers(&self, grid: &TimeGrid) -> bool {
        match self.domain() {
            None => true,
            Some((lo, hi)) => grid.t_min() >= lo && grid.t_max() <= hi,
        }
    }

    pub fn coefficient(&self, t: f64) -> Result<Matrix, SystemError> {
        match &self.coefficient {
            Coefficient::Constant(a) => Ok(a.clone()),
            Coefficient::Function(f) => Ok(f(t)),
            Coefficient::Sampled { times, values } => interpolate(times, values, t),
        }
    }

    /// The system `x' = (A(t) + B(t)) x`.
    pub fn perturbed(&self, b: &PerturbationSpec) -> LinearSystem {
        assert_eq!(self.dim, b.dim, "perturbation dimension mismatch");
        let name = format!("{}+B", self.name);
        let mut sys = match (self.constant_matrix(), b.constant_matrix()) {
            (Some(a), Some(bm)) => LinearSystem::constant(name, a + bm),
            _ => {
                let base = self.clone();
                let bf = b.function.clone();
                LinearSystem::from_fn(name, self.dim, move |t| {
                    // out-of-domain queries are rejected by `propagate` before evaluation
                    let a = base
                        .coefficient(t)
                        .unwrap_or_else(|_| Matrix::from_element(base.dim, base.dim, f64::NAN));
                    a + bf(t)
                })
            }
        };
        sys.params = self.params.clone();
        sys.domain = self.domain;
        sys
    }
}

fn interpolate(times: &[f64], values: &[Matrix], t: f64) -> Result<Matrix, SystemError> {
    let lo = times[0];
    let hi = *times.last().unwrap();
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    if !(t >= lo - slack && t <= hi + slack) {
        return Err(SystemError::OutOfDomain { t, lo, hi });
    }
    let t = t.clamp(lo, hi);
    // index of the last sample time <= t
    let i = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => return Ok(values[i].clone()),
        Err(i) => i - 1,
    };
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    Ok(&values[i] * (1.0 - w) + &values[i + 1] * w)
}

fn constant_status(a: &Matrix) -> KnownStatus {
    if a.iter().any(|x| !x.is_finite()) {
        return KnownStatus::Unknown;
    }
    if linalg::eigenvalues(a).iter().any(|z| z.re.abs() < crate::dichotomy::SPECTRAL_MARGIN) {
        KnownStatus::NotDichotomic
    } else {
        KnownStatus::Dichotomic
    }
}

/// One entry of the builtin catalog.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub status: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "const_diag",
        description: "A = diag(d); params: diag (default [-1, 1])",
        status: "dichotomic iff every d_i is nonzero",
    },
    CatalogEntry {
        name: "const_full",
        description: "A = constant matrix; params: matrix, row-major n² entries (default [[0,1],[1,0]])",
        status: "dichotomic iff no eigenvalue on the imaginary axis",
    },
    CatalogEntry {
        name: "rotating_hyperbolic",
        description: "A(t) = R(ωt) diag(-λ, λ) R(-ωt) + ω J; params: omega (0.1), lambda (1)",
        status: "dichotomic for every ω when λ > 0, N = 1, ν = λ",
    },
    CatalogEntry {
        name: "periodic_hyperbolic",
        description: "A(t) = [[-1 + a sin t, b cos t], [0, 1 + a cos t]]; params: a (0.5), b (0.5)",
        status: "dichotomic (triangular, averaged diagonal rates -1 and +1)",
    },
    CatalogEntry {
        name: "no_dichotomy_shear",
        description: "A = [[0, s], [0, 0]]; params: s (1)",
        status: "not dichotomic (polynomial growth)",
    },
];

fn scalar_param(
    system: &str,
    params: &BTreeMap<String, Vec<f64>>,
    key: &str,
    default: f64,
) -> Result<f64, SystemError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) if v.len() == 1 && v[0].is_finite() => Ok(v[0]),
        Some(_) => Err(SystemError::InvalidParameter {
            system: system.into(),
            message: format!("`{key}` must be a single finite number"),
        }),
    }
}

fn check_known(system: &str, params: &BTreeMap<String, Vec<f64>>, known: &[&str]) -> Result<(), SystemError> {
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(SystemError::InvalidParameter {
                system: system.into(),
                message: format!("unknown parameter `{key}`"),
            });
        }
    }
    Ok(())
}

fn rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Builds a system from the builtin catalog.
pub fn builtin(name: &str, params: &BTreeMap<String, Vec<f64>>) -> Result<LinearSystem, SystemError> {
    let invalid = |message: String| SystemError::InvalidParameter { system: name.into(), message };
    let sys = match name {
        "const_diag" => {
            check_known(name, params, &["diag"])?;
            let diag = params.get("diag").cloned().unwrap_or_else(|| vec![-1.0, 1.0]);
            if diag.is_empty() || diag.len() > MAX_DIM || diag.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("`diag` needs 1..={MAX_DIM} finite entries")));
            }
            let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
            LinearSystem::constant(name, a)
        }
        "const_full" => {
            check_known(name, params, &["matrix"])?;
            let entries = params.get("matrix").cloned().unwrap_or_else(|| vec![0.0, 1.0, 1.0, 0.0]);
            let n = (entries.len() as f64).sqrt().round() as usize;
            if n == 0 || n * n != entries.len() || n > MAX_DIM || entries.iter().any(|x| !x.is_finite()) {
                return Err(invalid("`matrix` needs n² finite row-major entries".into()));
            }
            LinearSystem::constant(name, Matrix::from_row_slice(n, n, &entries))
        }
        "rotating_hyperbolic" => {
            check_known(name, params, &["omega", "lambda"])?;
            let omega = scalar_param(name, params, "omega", 0.1)?;
            let lambda = scalar_param(name, params, "lambda", 1.0)?;
            let status = if lambda > 0.0 { KnownStatus::Dichotomic } else { KnownStatus::NotDichotomic };
            let d = Matrix::from_row_slice(2, 2, &[-lambda, 0.0, 0.0, lambda]);
            let j = Matrix::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0]);
            LinearSystem::from_fn(name, 2, move |t| rotation(omega * t) * &d * rotation(-omega * t) + &j)
                .with_meta(BTreeMap::new(), status)
        }
        "periodic_hyperbolic" => {
            check_known(name, params, &["a", "b"])?;
            let a = scalar_param(name, params, "a", 0.5)?;
            let b = scalar_param(name, params, "b", 0.5)?;
            LinearSystem::from_fn(name, 2, move |t| {
                let (s, c) = t.sin_cos();
                Matrix::from_row_slice(2, 2, &[-1.0 + a * s, b * c, 0.0, 1.0 + a * c])
            })
            .with_meta(BTreeMap::new(), KnownStatus::Dichotomic)
        }
        "no_dichotomy_shear" => {
            check_known(name, params, &["s"])?;
            let s = scalar_param(name, params, "s", 1.0)?;
            LinearSystem::constant(name, Matrix::from_row_slice(2, 2, &[0.0, s, 0.0, 0.0]))
        }
        _ => return Err(SystemError::UnknownSystem(name.into())),
    };
    let status = sys.status;
    Ok(sys.with_meta(params.clone(), status))
}

/// Loads a sampled system from CSV: header `t,a11,...,ann`, one row per
/// sample time, `#` comment lines ignored.
pub fn load_sampled(path: impl AsRef<Path>) -> Result<LinearSystem, SystemError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SystemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_sampled(&text)
}

pub fn parse_sampled(text: &str) -> Result<LinearSystem, SystemError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| SystemError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.is_empty() || header.get(0) != Some("t") {
        return Err(SystemError::Parse { line: 1, message: "header must start with `t`".into() });
    }
    let entries = header.len() - 1;
    let n = (entries as f64).sqrt().round() as usize;
    if n == 0 || n * n != entries {
        return Err(SystemError::Dimension { entries });
    }
    if n > MAX_DIM {
        return Err(SystemError::Parse { line: 1, message: format!("dimension {n} exceeds {MAX_DIM}") });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| SystemError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != header.len() {
            return Err(SystemError::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let nums = record
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| SystemError::Parse { line, message: "non-numeric or non-finite field".into() })?;
        if let Some(&last) = times.last() {
            if nums[0] <= last {
                return Err(SystemError::NonMonotoneTime { line });
            }
        }
        times.push(nums[0]);
        values.push(Matrix::from_row_slice(n, n, &nums[1..]));
    }
    if times.len() < 2 {
        return Err(SystemError::Parse { line: 0, message: "need at least two sample rows".into() });
    }
    Ok(LinearSystem::sampled(times, values))
}

/// Perturbation `B(t)` with its sup norm measured on a grid.
#[derive(Clone)]
pub struct PerturbationSpec {
    dim: usize,
    function: MatrixFn,
    constant: Option<Matrix>,
    sup_norm: f64,
    pub description: String,
}

impl fmt::Debug for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationSpec")
            .field("dim", &self.dim)
            .field("sup_norm", &self.sup_norm)
            .field("description", &self.description)
            .finish()
    }
}

fn grid_sup_norm(f: &MatrixFn, grid: &TimeGrid) -> f64 {
    (0..grid.len()).map(|k| linalg::spectral_norm(&f(grid.point(k)))).fold(0.0, f64::max)
}

impl PerturbationSpec {
    pub fn from_fn(
        dim: usize,
        grid: &TimeGrid,
        f: impl Fn(f64) -> Matrix + Send + Sync + 'static,
        description: impl Into<String>,
    ) -> Self {
        let function: MatrixFn = Arc::new(f);
        let sup_norm = grid_sup_norm(&function, grid);
        Self { dim, function, constant: None, sup_norm, description: description.into() }
    }

    pub fn constant(b: Matrix) -> Self {
        let sup_norm = linalg::spectral_norm(&b);
        let held = b.clone();
        Self {
            dim: b.nrows(),
            function: Arc::new(move |_| held.clone()),
            constant: Some(b),
            sup_norm,
            description: "constant".into(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(Matrix::zeros(dim, dim))
    }

    /// Seeded random perturbation `M0 + sin(ωt + φ) M1` with unit sup norm
    /// over the whole line. The norm is convex in `sin(ωt + φ)`, so the sup
    /// is `max(‖M0 + M1‖, ‖M0 − M1‖)`.
    pub fn random_unit(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m0 = Matrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let m1 = Matrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let omega: f64 = rng.random_range(0.1..0.6);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let scale = linalg::spectral_norm(&(&m0 + &m1)).max(linalg::spectral_norm(&(&m0 - &m1)));
        let (m0, m1) = (m0 / scale, m1 / scale);
        Self {
            dim,
            function: Arc::new(move |t: f64| &m0 + &m1 * (omega * t + phase).sin()),
            constant: None,
            sup_norm: 1.0,
            description: format!("random(seed={seed}, omega={omega:.6})"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// `max_k ‖B(t_k)‖` on another grid (exact for constant `B`).
    pub fn sup_norm_on(&self, grid: &TimeGrid) -> f64 {
        match &self.constant {
            Some(_) => self.sup_norm,
            None => grid_sup_norm(&self.function, grid),
        }
    }

    pub fn eval(&self, t: f64) -> Matrix {
        (self.function)(t)
    }

    pub fn constant_matrix(&self) -> Option<&Matrix> {
        self.constant.as_ref()
    }

    /// `c · B` with `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0, "scale must be nonnegative");
        let f = self.function.clone();
        Self {
            dim: self.dim,
            function: Arc::new(move |t| f(t) * c),
            constant: self.constant.as_ref().map(|m| m * c),
            sup_norm: self.sup_norm * c,
            description: format!("{} * {c}", self.description),
        }
    }
}
