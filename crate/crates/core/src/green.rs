//! The operator `Lx = x' − A(t)x`, its Green's kernel, and the bounded
//! solution `u(t) = ∫ G(t,s) f(s) ds` of `Lu = f`.
//!
//! The kernel is split through the projector factors `P = L·R`, `Q = M·N`:
//! `G(t,s) = Φ(t,ref)L · RΦ(ref,s)` for `t ≥ s` and `−Φ(t,ref)M · NΦ(ref,s)`
//! otherwise, so the trapezoid quadrature reduces to prefix and suffix sums.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dichotomy::{DichotomyConstants, DichotomyError, DichotomyReport, Verdict};
use crate::linalg::{self, Matrix, Vector};
use crate::propagator::{PropagatorError, TransitionCache};
use crate::system::TimeGrid;

/// Reported points need `tail_error_bound ≤ TAIL_FRACTION · ‖f‖∞`.
pub const TAIL_FRACTION: f64 = 0.01;
/// Constant of the residual tolerance `c_res h²`, per unit `‖f‖∞`.
/// Catalog systems measure between 0.08 and 0.28.
pub const RESIDUAL_CONSTANT: f64 = 1.0;
/// Smallest half-window accepted by [`lemma2_split`].
pub const SPLIT_MIN_HALF: f64 = 4.0;

pub fn residual_tol(h: f64) -> f64 {
    RESIDUAL_CONSTANT * h * h
}

#[derive(Debug, Error)]
pub enum GreenError {
    #[error("report verdict is {0:?}, dichotomic required")]
    NotDichotomic(Verdict),
    #[error("truncation tail exceeds {TAIL_FRACTION} of the forcing norm everywhere on the window")]
    TailDominates,
    #[error("grid has {0} points, at least 3 needed")]
    GridTooCoarse(usize),
    #[error("grid [{t_min}, {t_max}] must contain [-{SPLIT_MIN_HALF}, {SPLIT_MIN_HALF}]")]
    GridTooShort { t_min: f64, t_max: f64 },
    #[error("expected {expected} samples of dimension {dim}, got {got}")]
    Shape { expected: usize, dim: usize, got: usize },
    #[error("forcing is not finite at t = {0}")]
    NonFinite(f64),
    #[error("forcing is undefined at t = {0}")]
    ForcingDomain(f64),
    #[error("time {0} is not a grid point")]
    OffGrid(f64),
    #[error("‖u‖∞ = {u_sup:e} exceeds bound {bound:e} (constants too small)")]
    BoundViolated { u_sup: f64, bound: f64 },
    #[error(transparent)]
    Dichotomy(#[from] DichotomyError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

type ForcingFn = dyn Fn(f64) -> Option<Vector> + Send + Sync;

/// A continuous forcing `f: ℝ → ℝⁿ`, possibly defined on a bounded domain.
#[derive(Clone)]
pub struct ForcingFunction {
    dim: usize,
    f: Arc<ForcingFn>,
    description: String,
}

impl std::fmt::Debug for ForcingFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForcingFunction").field("dim", &self.dim).field("description", &self.description).finish()
    }
}

impl ForcingFunction {
    pub fn new(dim: usize, f: impl Fn(f64) -> Vector + Send + Sync + 'static, description: impl Into<String>) -> Self {
        Self { dim, f: Arc::new(move |t| Some(f(t))), description: description.into() }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, move |_| Vector::zeros(dim), "0")
    }

    pub fn constant(c: Vector) -> Self {
        let description = format!("const {:?}", c.as_slice());
        Self::new(c.len(), move |_| c.clone(), description)
    }

    /// `cos t` on `component` (0-based), zero elsewhere.
    pub fn cosine(dim: usize, component: usize) -> Self {
        Self::new(
            dim,
            move |t| {
                let mut v = Vector::zeros(dim);
                v[component] = t.cos();
                v
            },
            format!("cos t on component {}", component + 1),
        )
    }

    /// Piecewise-linear interpolation of samples; undefined outside.
    pub fn sampled(times: Vec<f64>, values: Vec<Vector>) -> Self {
        let dim = values.first().map_or(0, |v| v.len());
        let description = format!("sampled on [{}, {}]", times[0], times[times.len() - 1]);
        let f = move |t: f64| {
            let (lo, hi) = (times[0], times[times.len() - 1]);
            if !(t >= lo && t <= hi) {
                return None;
            }
            let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
            let (t0, t1) = (times[k - 1], times[k]);
            let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            Some(&values[k - 1] * (1.0 - w) + &values[k] * w)
        };
        Self { dim, f: Arc::new(f), description }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// `f(t)`, or `None` outside the domain.
    pub fn eval(&self, t: f64) -> Option<Vector> {
        (self.f)(t)
    }

    pub fn sample(&self, grid: &TimeGrid) -> Result<Vec<Vector>, GreenError> {
        grid.points()
            .into_iter()
            .map(|t| {
                let v = self.eval(t).ok_or(GreenError::ForcingDomain(t))?;
                if v.len() != self.dim {
                    return Err(GreenError::Shape { expected: 1, dim: self.dim, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(GreenError::NonFinite(t));
                }
                Ok(v)
            })
            .collect()
    }

    /// `max_k ‖f(t_k)‖`.
    pub fn sup_norm(&self, grid: &TimeGrid) -> Result<f64, GreenError> {
        Ok(sup_norm(&self.sample(grid)?))
    }

    pub fn add(&self, other: &ForcingFunction) -> ForcingFunction {
        let (a, b) = (self.f.clone(), other.f.clone());
        Self {
            dim: self.dim,
            f: Arc::new(move |t| Some(a(t)? + b(t)?)),
            description: format!("{} + {}", self.description, other.description),
        }
    }

    pub fn scaled(&self, c: f64) -> ForcingFunction {
        let a = self.f.clone();
        Self { dim: self.dim, f: Arc::new(move |t| a(t).map(|v| v * c)), description: format!("{c} * {}", self.description) }
    }
}

fn sup_norm(values: &[Vector]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Discrete `Lx`: central differences inside, second-order one-sided
/// differences at both ends, minus `A(t_k) x_k`.
#[allow(non_snake_case)]
pub fn apply_L(cache: &TransitionCache, x: &[Vector]) -> Result<Vec<Vector>, GreenError> {
    let len = cache.len();
    if len < 3 {
        return Err(GreenError::GridTooCoarse(len));
    }
    let n = cache.dim();
    if x.len() != len || x.iter().any(|v| v.len() != n) {
        return Err(GreenError::Shape { expected: len, dim: n, got: x.len() });
    }
    let h = cache.grid().step();
    let m = len - 1;
    Ok((0..len)
        .map(|k| {
            let d = if k == 0 {
                (&x[1] * 4.0 - &x[0] * 3.0 - &x[2]) / (2.0 * h)
            } else if k == m {
                (&x[m] * 3.0 - &x[m - 1] * 4.0 + &x[m - 2]) / (2.0 * h)
            } else {
                (&x[k + 1] - &x[k - 1]) / (2.0 * h)
            };
            d - cache.coefficient(k) * &x[k]
        })
        .collect())
}

fn require_dichotomic(report: &DichotomyReport) -> Result<DichotomyConstants, GreenError> {
    if !report.is_dichotomic() {
        return Err(GreenError::NotDichotomic(report.verdict));
    }
    Ok(report.constants.ok_or(DichotomyError::MissingConstants)?)
}

fn reference_index(cache: &TransitionCache, report: &DichotomyReport) -> Result<usize, GreenError> {
    cache.grid().index_of(report.reference_time).ok_or(GreenError::OffGrid(report.reference_time))
}

/// `G(t, s)`; the `t = s` case takes the `t ≥ s` branch and equals `P(s)`.
pub fn green_kernel(cache: &TransitionCache, report: &DichotomyReport, t: f64, s: f64) -> Result<Matrix, GreenError> {
    require_dichotomic(report)?;
    let i = cache.grid().index_of(t).ok_or(GreenError::OffGrid(t))?;
    let j = cache.grid().index_of(s).ok_or(GreenError::OffGrid(s))?;
    let r = reference_index(cache, report)?;
    let left = cache.transition_idx(i, r);
    let right = cache.transition_idx(r, j);
    Ok(if i >= j { left * &report.p * right } else { -(left * &report.q * right) })
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenSolution {
    #[serde(skip)]
    pub grid: TimeGrid,
    #[serde(skip)]
    pub u: Vec<Vector>,
    /// `‖(discrete L)u − f‖` at every grid point.
    #[serde(skip)]
    pub residual: Vec<f64>,
    /// Per-point bound on the error from truncating the integral to the grid.
    #[serde(skip)]
    pub tail_error_bound: Vec<f64>,
    /// Grid index range `lo..=hi` where the solution is reported.
    pub region: (usize, usize),
    pub f_sup: f64,
    /// `‖u‖∞` over the reported region.
    pub u_sup: f64,
    /// Largest residual at interior points of the reported region.
    pub residual_sup: f64,
    /// `N₁/ν₁ + N₂/ν₂`.
    pub inverse_bound: f64,
    /// `inverse_bound · ‖f‖∞ / ‖u‖∞` (infinite for `u = 0`).
    pub bound_margin: f64,
}

impl GreenSolution {
    /// `residual_sup ≤ c_res h² max(1, ‖f‖∞)`.
    pub fn residual_ok(&self) -> bool {
        self.residual_sup <= residual_tol(self.grid.step()) * self.f_sup.max(1.0)
    }

    pub fn region_times(&self) -> (f64, f64) {
        (self.grid.point(self.region.0), self.grid.point(self.region.1))
    }

    pub fn in_region(&self, k: usize) -> bool {
        k >= self.region.0 && k <= self.region.1
    }
}

/// Trapezoid quadrature of `∫ G(t_k, s) f(s) ds` over the grid.
fn quadrature(cache: &TransitionCache, report: &DichotomyReport, fs: &[Vector]) -> Result<Vec<Vector>, GreenError> {
    let n = cache.dim();
    let len = cache.len();
    let h = cache.grid().step();
    let r = reference_index(cache, report)?;
    let mut u = vec![Vector::zeros(n); len];
    let (l, rr) = linalg::low_rank_factors(&report.p, 1e-10);
    if l.ncols() > 0 {
        let ls = cache.push_columns(r, &l);
        let rs = cache.pull_rows(r, &rr);
        let c: Vec<Vector> = rs.iter().zip(fs).map(|(row, f)| row * f).collect();
        let mut acc = Vector::zeros(l.ncols());
        for k in 0..len {
            if k > 0 {
                acc += (&c[k - 1] + &c[k]) * (0.5 * h);
            }
            u[k] += &ls[k] * &acc;
        }
    }
    let (m, nn) = linalg::low_rank_factors(&report.q, 1e-10);
    if m.ncols() > 0 {
        let ms = cache.push_columns(r, &m);
        let ns = cache.pull_rows(r, &nn);
        let c: Vec<Vector> = ns.iter().zip(fs).map(|(row, f)| row * f).collect();
        let mut acc = Vector::zeros(m.ncols());
        for k in (0..len).rev() {
            if k + 1 < len {
                acc += (&c[k + 1] + &c[k]) * (0.5 * h);
            }
            u[k] -= &ms[k] * &acc;
        }
    }
    Ok(u)
}

fn tail_bounds(grid: &TimeGrid, constants: &DichotomyConstants, f_sup: f64) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&t| {
            let lower = constants.stable.map_or(0.0, |c| c.n / c.nu * (-c.nu * (t - grid.t_min())).exp());
            let upper = constants.unstable.map_or(0.0, |c| c.n / c.nu * (-c.nu * (grid.t_max() - t)).exp());
            (lower + upper) * f_sup
        })
        .collect()
}

/// Bounded solution of `Lu = f`, reported on the points where the
/// truncation tail is below [`TAIL_FRACTION`]` · ‖f‖∞` and, for window
/// reports, `P(t)` is trusted.
pub fn green_solve(
    cache: &TransitionCache,
    report: &DichotomyReport,
    f: &ForcingFunction,
) -> Result<GreenSolution, GreenError> {
    let constants = require_dichotomic(report)?;
    let grid = cache.grid().clone();
    let fs = f.sample(&grid)?;
    if fs.first().map_or(0, |v| v.len()) != cache.dim() {
        return Err(GreenError::Shape { expected: grid.len(), dim: cache.dim(), got: f.dim() });
    }
    let f_sup = sup_norm(&fs);
    let tail = tail_bounds(&grid, &constants, f_sup);
    let ok: Vec<usize> = (0..grid.len())
        .filter(|&k| tail[k] <= TAIL_FRACTION * f_sup && report.trusts(grid.point(k)))
        .collect();
    let (Some(&lo), Some(&hi)) = (ok.first(), ok.last()) else {
        return Err(GreenError::TailDominates);
    };
    let u = quadrature(cache, report, &fs)?;
    let lu = apply_L(cache, &u)?;
    let residual: Vec<f64> = lu.iter().zip(&fs).map(|(a, b)| (a - b).norm()).collect();
    let residual_sup = if hi > lo + 1 { residual[lo + 1..hi].iter().cloned().fold(0.0, f64::max) } else { 0.0 };
    let u_sup = sup_norm(&u[lo..=hi]);
    let inverse_bound = constants.inverse_bound();
    let bound_margin = if u_sup > 0.0 { inverse_bound * f_sup / u_sup } else { f64::INFINITY };
    Ok(GreenSolution {
        grid,
        u,
        residual,
        tail_error_bound: tail,
        region: (lo, hi),
        f_sup,
        u_sup,
        residual_sup,
        inverse_bound,
        bound_margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseBoundCheck {
    /// `‖u‖∞ / ‖f‖∞`, an empirical lower estimate of `‖L⁻¹‖`.
    pub ratio: f64,
    /// `N₁/ν₁ + N₂/ν₂`.
    pub bound: f64,
    /// Largest truncation tail on the reported region.
    pub tail_allowance: f64,
}

/// Checks `‖u‖∞ ≤ (N₁/ν₁ + N₂/ν₂)‖f‖∞ + tail` on the reported region.
pub fn check_inverse_bound(solution: &GreenSolution, report: &DichotomyReport) -> Result<InverseBoundCheck, GreenError> {
    let bound = require_dichotomic(report)?.inverse_bound();
    let (lo, hi) = solution.region;
    let tail_allowance = solution.tail_error_bound[lo..=hi].iter().cloned().fold(0.0, f64::max);
    if solution.u_sup > bound * solution.f_sup + tail_allowance {
        return Err(GreenError::BoundViolated { u_sup: solution.u_sup, bound: bound * solution.f_sup + tail_allowance });
    }
    let ratio = if solution.f_sup > 0.0 { solution.u_sup / solution.f_sup } else { 0.0 };
    Ok(InverseBoundCheck { ratio, bound, tail_allowance })
}

/// Quintic cut-off ramp, 0 on `(−∞, 0]`, 1 on `[1, ∞)`.
pub fn ramp(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

pub fn ramp_derivative(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitResult {
    #[serde(skip)]
    pub x: Vector,
    /// Component in the forward-bounded subspace, `w(0)`.
    #[serde(skip)]
    pub x1: Vector,
    /// Component in the backward-bounded subspace, `−v(0)`.
    #[serde(skip)]
    pub x2: Vector,
    /// `sup ‖w‖` over trusted points of `[0, T]`.
    pub forward_sup: f64,
    /// `sup ‖v‖` over trusted points of `[−T, 0]`.
    pub backward_sup: f64,
    /// `max ‖(discrete L)w‖` over trusted interior points.
    pub homogeneous_residual: f64,
}

/// Splits `x = x1 + x2` by solving `Lv = α'u` for the solution `u` through
/// `x` at time 0 and setting `w = (1 − α)u + v`, which solves the
/// homogeneous equation and stays bounded forward.
pub fn lemma2_split(cache: &TransitionCache, report: &DichotomyReport, x: &Vector) -> Result<SplitResult, GreenError> {
    require_dichotomic(report)?;
    let grid = cache.grid();
    if grid.t_min() > -SPLIT_MIN_HALF || grid.t_max() < SPLIT_MIN_HALF {
        return Err(GreenError::GridTooShort { t_min: grid.t_min(), t_max: grid.t_max() });
    }
    let n = cache.dim();
    if x.len() != n {
        return Err(GreenError::Shape { expected: 1, dim: n, got: x.len() });
    }
    let origin = grid.index_of(0.0).ok_or(GreenError::OffGrid(0.0))?;
    let u: Vec<Vector> = cache
        .push_columns(origin, &Matrix::from_column_slice(n, 1, x.as_slice()))
        .into_iter()
        .map(|m| m.column(0).into_owned())
        .collect();
    let ts = grid.points();
    let g: Vec<Vector> = u.iter().zip(&ts).map(|(uk, &t)| uk * ramp_derivative(t)).collect();
    let v = quadrature(cache, report, &g)?;
    let w: Vec<Vector> = u.iter().zip(&v).zip(&ts).map(|((uk, vk), &t)| uk * (1.0 - ramp(t)) + vk).collect();
    let lw = apply_L(cache, &w)?;
    let last = grid.len() - 1;
    let trusted = |k: usize| report.trusts(ts[k]);
    let forward_sup = (origin..=last).filter(|&k| trusted(k)).map(|k| w[k].norm()).fold(0.0, f64::max);
    let backward_sup = (0..=origin).filter(|&k| trusted(k)).map(|k| v[k].norm()).fold(0.0, f64::max);
    let homogeneous_residual = (1..last).filter(|&k| trusted(k)).map(|k| lw[k].norm()).fold(0.0, f64::max);
    Ok(SplitResult {
        x: x.clone(),
        x1: w[origin].clone(),
        x2: -&v[origin],
        forward_sup,
        backward_sup,
        homogeneous_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::spectral_projector;
    use crate::propagator::propagate;
    use crate::system::{builtin, LinearSystem};
    use std::collections::BTreeMap;

    fn diag_sys() -> LinearSystem {
        builtin("const_diag", &BTreeMap::new()).unwrap()
    }

    fn setup(half: f64, h: f64) -> (TransitionCache, DichotomyReport) {
        let sys = diag_sys();
        let report = spectral_projector(&sys).unwrap();
        let cache = propagate(&sys, &TimeGrid::symmetric(half, h).unwrap()).unwrap();
        (cache, report)
    }

    #[test]
    fn apply_l_examples() {
        let zero = LinearSystem::constant("zero", Matrix::zeros(2, 2));
        let cache = propagate(&zero, &TimeGrid::new(0.0, 1.0, 0.1).unwrap()).unwrap();
        let c: Vec<Vector> = (0..11).map(|_| Vector::from_vec(vec![2.0, -1.0])).collect();
        assert!(apply_L(&cache, &c).unwrap().iter().all(|v| v.norm() == 0.0));
        let lin: Vec<Vector> = cache.grid().points().iter().map(|&t| Vector::from_vec(vec![t, 0.0])).collect();
        for v in apply_L(&cache, &lin).unwrap() {
            assert!((v - Vector::from_vec(vec![1.0, 0.0])).norm() < 1e-12);
        }
        let (cache, _) = setup(2.0, 0.01);
        let e: Vec<Vector> = cache.grid().points().iter().map(|&t| Vector::from_vec(vec![(-t).exp(), 0.0])).collect();
        let worst = apply_L(&cache, &e).unwrap().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
        let short = propagate(&zero, &TimeGrid::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(apply_L(&short, &c[..2]), Err(GreenError::GridTooCoarse(2))));
    }

    #[test]
    fn kernel_closed_form() {
        let (cache, report) = setup(3.0, 0.01);
        let g = green_kernel(&cache, &report, 1.0, -0.5).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[(-1.5f64).exp(), 0.0, 0.0, 0.0]);
        assert!((g - want).norm() < 1e-8);
        let g = green_kernel(&cache, &report, -0.5, 1.0).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -(-1.5f64).exp()]);
        assert!((g - want).norm() < 1e-8);
        let g = green_kernel(&cache, &report, 0.7, 0.7).unwrap();
        assert!((g - &report.p).norm() < 1e-8);
        assert!(matches!(green_kernel(&cache, &report, 0.705, 0.0), Err(GreenError::OffGrid(_))));
    }

    #[test]
    fn constant_forcing() {
        let (cache, report) = setup(15.0, 0.01);
        let f = ForcingFunction::constant(Vector::from_vec(vec![1.0, 1.0]));
        let sol = green_solve(&cache, &report, &f).unwrap();
        let grid = cache.grid();
        for k in grid.index_of(-5.0).unwrap()..=grid.index_of(5.0).unwrap() {
            assert!((&sol.u[k] - Vector::from_vec(vec![1.0, -1.0])).norm() < 1e-4);
        }
        let check = check_inverse_bound(&sol, &report).unwrap();
        assert!((check.ratio - 1.0).abs() < 1e-3);
        assert!((check.bound - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_forcing_is_exactly_zero() {
        let (cache, report) = setup(10.0, 0.01);
        let sol = green_solve(&cache, &report, &ForcingFunction::zero(2)).unwrap();
        assert!(sol.u.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        assert_eq!(check_inverse_bound(&sol, &report).unwrap().ratio, 0.0);
    }

    #[test]
    fn cosine_forcing_closed_form() {
        let (cache, report) = setup(15.0, 0.01);
        let sol = green_solve(&cache, &report, &ForcingFunction::cosine(2, 0)).unwrap();
        let grid = cache.grid();
        for k in grid.index_of(-5.0).unwrap()..=grid.index_of(5.0).unwrap() {
            let t = grid.point(k);
            assert!((sol.u[k][0] - 0.5 * (t.cos() + t.sin())).abs() < 1e-4);
            assert!(sol.u[k][1].abs() < 1e-12);
        }
        assert!(sol.residual_sup <= residual_tol(0.01), "{}", sol.residual_sup);
    }

    #[test]
    fn short_window_tail_dominates() {
        let (cache, report) = setup(2.0, 0.01);
        let f = ForcingFunction::constant(Vector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(green_solve(&cache, &report, &f), Err(GreenError::TailDominates)));
    }

    #[test]
    fn split_examples() {
        let (cache, report) = setup(6.0, 0.01);
        let s = lemma2_split(&cache, &report, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((s.x1 - Vector::from_vec(vec![1.0, 0.0])).norm() < 1e-9);
        assert!(s.x2.norm() < 1e-9);
        let z = lemma2_split(&cache, &report, &Vector::zeros(2)).unwrap();
        assert_eq!(z.x1.norm() + z.x2.norm(), 0.0);
        let x = Vector::from_vec(vec![0.3, -1.7]);
        let s = lemma2_split(&cache, &report, &x).unwrap();
        assert!((&s.x1 + &s.x2 - &x).norm() <= 1e-9 * x.norm());
        assert!((&s.x1 - &report.p * &x).norm() < 1e-5);
        assert!(s.forward_sup <= 2.0 * x.norm());
    }

    #[test]
    fn ramp_shape() {
        assert_eq!(ramp(-1.0), 0.0);
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        assert_eq!(ramp(3.0), 1.0);
        assert!((ramp(0.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        for t in [0.1, 0.4, 0.9] {
            assert!(((ramp(t + h) - ramp(t - h)) / (2.0 * h) - ramp_derivative(t)).abs() < 1e-8);
        }
    }
}
