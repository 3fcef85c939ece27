//! Fundamental matrices of `x' = A(t) x` on a grid and the exponential
//! growth bound `‖U(t)U(s)⁻¹‖ ≤ α e^{β|t−s|}`.
//!
//! The cache keeps the one-step transition matrices `Φ(t_{k+1}, t_k)` from
//! classical fourth-order Runge–Kutta together with their LU inverses.
//! Transitions between arbitrary grid points are ordered products of these
//! steps (accelerated by checkpoint blocks), which stays accurate on windows
//! where a single anchored fundamental matrix is numerically singular.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::envelope::{Envelope, PairPlan, PAIR_SEED};
use crate::linalg::{self, Matrix};
use crate::system::{LinearSystem, SystemError, TimeGrid, MAX_DIM};

/// Norm beyond which a fundamental matrix is treated as overflowed.
pub const MAX_FUNDAMENTAL_NORM: f64 = 1e150;
/// Largest accepted condition number of a one-step transition.
pub const MAX_STEP_CONDITION: f64 = 1e14;
const COCYCLE_TRIPLES: usize = 100;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("fundamental matrix norm exceeded {MAX_FUNDAMENTAL_NORM:e} at t = {t}")]
    StepUnstable { t: f64 },
    #[error("one-step transition at t = {t} has condition number {condition:e}")]
    SingularTransition { t: f64, condition: f64 },
    #[error("time {t} is not a grid point")]
    OffGrid { t: f64 },
    #[error("grid [{t_min}, {t_max}] leaves the system domain")]
    OutsideDomain { t_min: f64, t_max: f64 },
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    Dimension(usize),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Sampled Cauchy operator of a linear system on a grid.
#[derive(Debug, Clone)]
pub struct TransitionCache {
    grid: TimeGrid,
    dim: usize,
    steps: Vec<Matrix>,
    inv_steps: Vec<Matrix>,
    coefficients: Vec<Matrix>,
    fundamental: Vec<Matrix>,
    block: usize,
    fwd_blocks: Vec<Matrix>,
    inv_blocks: Vec<Matrix>,
    cocycle_defect: f64,
}

/// Exponential growth constants with the pair where the bound is tight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub attained_at: (f64, f64),
}

impl GrowthEstimate {
    pub fn bound(&self, separation: f64) -> f64 {
        self.alpha * (self.beta * separation.abs()).exp()
    }
}

fn rk4_step(sys: &LinearSystem, t: f64, h: f64) -> Result<Matrix, SystemError> {
    let n = sys.dim();
    let id = Matrix::identity(n, n);
    let a0 = sys.coefficient(t)?;
    let a1 = sys.coefficient(t + 0.5 * h)?;
    let a2 = sys.coefficient(t + h)?;
    let k1 = a0;
    let k2 = &a1 * (&id + &k1 * (0.5 * h));
    let k3 = &a1 * (&id + &k2 * (0.5 * h));
    let k4 = &a2 * (&id + &k3 * h);
    Ok(id + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates `U' = A(t)U` across the grid with fixed-step RK4.
pub fn propagate(sys: &LinearSystem, grid: &TimeGrid) -> Result<TransitionCache, PropagatorError> {
    let n = sys.dim();
    if n == 0 || n > MAX_DIM {
        return Err(PropagatorError::Dimension(n));
    }
    if !sys.covers(grid) {
        return Err(PropagatorError::OutsideDomain { t_min: grid.t_min(), t_max: grid.t_max() });
    }
    let m = grid.intervals();
    let steps = (0..m)
        .into_par_iter()
        .map(|k| {
            let t = grid.point(k);
            let step = rk4_step(sys, t, grid.point(k + 1) - t)?;
            if step.iter().any(|x| !x.is_finite()) {
                return Err(PropagatorError::StepUnstable { t });
            }
            let inv = linalg::lu_inverse(&step);
            let condition = match &inv {
                Some(inv) => linalg::spectral_norm(&step) * linalg::spectral_norm(inv),
                None => f64::INFINITY,
            };
            if !(condition <= MAX_STEP_CONDITION) {
                return Err(PropagatorError::SingularTransition { t, condition });
            }
            Ok((step, inv.unwrap()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (steps, inv_steps): (Vec<Matrix>, Vec<Matrix>) = steps.into_iter().unzip();
    let coefficients = grid.points().iter().map(|&t| sys.coefficient(t)).collect::<Result<Vec<_>, _>>()?;
    TransitionCache::from_steps(grid.clone(), n, steps, inv_steps, coefficients)
}

impl TransitionCache {
    fn from_steps(
        grid: TimeGrid,
        dim: usize,
        steps: Vec<Matrix>,
        inv_steps: Vec<Matrix>,
        coefficients: Vec<Matrix>,
    ) -> Result<Self, PropagatorError> {
        let mut fundamental = Vec::with_capacity(steps.len() + 1);
        fundamental.push(Matrix::identity(dim, dim));
        for (k, step) in steps.iter().enumerate() {
            let next = step * fundamental.last().unwrap();
            let norm = linalg::spectral_norm(&next);
            if !norm.is_finite() || norm > MAX_FUNDAMENTAL_NORM {
                return Err(PropagatorError::StepUnstable { t: grid.point(k + 1) });
            }
            fundamental.push(next);
        }
        let block = ((steps.len() as f64).sqrt().ceil() as usize).max(1);
        let nblocks = steps.len() / block;
        let (fwd_blocks, inv_blocks) = (0..nblocks)
            .into_par_iter()
            .map(|j| {
                let mut f = Matrix::identity(dim, dim);
                let mut b = Matrix::identity(dim, dim);
                for k in j * block..(j + 1) * block {
                    f = &steps[k] * f;
                    b *= &inv_steps[k];
                }
                (f, b)
            })
            .unzip();
        let mut cache = Self {
            grid,
            dim,
            steps,
            inv_steps,
            coefficients,
            fundamental,
            block,
            fwd_blocks,
            inv_blocks,
            cocycle_defect: 0.0,
        };
        cache.cocycle_defect = cache.measure_cocycle_defect(COCYCLE_TRIPLES, PAIR_SEED);
        Ok(cache)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Local order of the one-step method.
    pub fn order(&self) -> u32 {
        4
    }

    /// `U(t_k)` normalized by `U(t_min) = I`.
    pub fn fundamental(&self, k: usize) -> &Matrix {
        &self.fundamental[k]
    }

    /// `A(t_k)`.
    pub fn coefficient(&self, k: usize) -> &Matrix {
        &self.coefficients[k]
    }

    /// `Φ(t_{k+1}, t_k)`.
    pub fn step(&self, k: usize) -> &Matrix {
        &self.steps[k]
    }

    /// `Φ(t_k, t_{k+1})`.
    pub fn inverse_step(&self, k: usize) -> &Matrix {
        &self.inv_steps[k]
    }

    /// Largest relative cocycle defect seen on the random spot check,
    /// `‖Φ(t,s)Φ(s,r) − Φ(t,r)‖ / max(1, ‖Φ(t,s)‖‖Φ(s,r)‖)`.
    pub fn cocycle_defect(&self) -> f64 {
        self.cocycle_defect
    }

    pub fn index(&self, t: f64) -> Result<usize, PropagatorError> {
        self.grid.index_of(t).ok_or(PropagatorError::OffGrid { t })
    }

    /// `U(t)U(s)⁻¹` for grid times `t`, `s`.
    pub fn transition(&self, t: f64, s: f64) -> Result<Matrix, PropagatorError> {
        Ok(self.transition_idx(self.index(t)?, self.index(s)?))
    }

    /// `U(t_i)U(t_j)⁻¹` by grid index.
    pub fn transition_idx(&self, i: usize, j: usize) -> Matrix {
        let n = self.dim;
        let mut acc = Matrix::identity(n, n);
        let mut tmp = Matrix::zeros(n, n);
        let b = self.block;
        let mut k = j;
        if i >= j {
            while k < i {
                let (factor, next) = if k % b == 0 && k + b <= i && k / b < self.fwd_blocks.len() {
                    (&self.fwd_blocks[k / b], k + b)
                } else {
                    (&self.steps[k], k + 1)
                };
                tmp.gemm(1.0, factor, &acc, 0.0);
                std::mem::swap(&mut acc, &mut tmp);
                k = next;
            }
        } else {
            while k > i {
                let (factor, next) = if k % b == 0 && k >= b && k - b >= i && k / b - 1 < self.inv_blocks.len() {
                    (&self.inv_blocks[k / b - 1], k - b)
                } else {
                    (&self.inv_steps[k - 1], k - 1)
                };
                tmp.gemm(1.0, factor, &acc, 0.0);
                std::mem::swap(&mut acc, &mut tmp);
                k = next;
            }
        }
        acc
    }

    /// `Φ(t_k, t_anchor) · x` for every grid index `k`, propagated step by step.
    pub fn push_columns(&self, anchor: usize, x: &Matrix) -> Vec<Matrix> {
        let len = self.len();
        let mut out = vec![Matrix::zeros(0, 0); len];
        out[anchor] = x.clone();
        for k in anchor..len - 1 {
            out[k + 1] = &self.steps[k] * &out[k];
        }
        for k in (0..anchor).rev() {
            out[k] = &self.inv_steps[k] * &out[k + 1];
        }
        out
    }

    /// `w · Φ(t_anchor, t_k)` for every grid index `k`.
    pub fn pull_rows(&self, anchor: usize, w: &Matrix) -> Vec<Matrix> {
        let len = self.len();
        let mut out = vec![Matrix::zeros(0, 0); len];
        out[anchor] = w.clone();
        for k in anchor..len - 1 {
            out[k + 1] = &out[k] * &self.inv_steps[k];
        }
        for k in (0..anchor).rev() {
            out[k] = &out[k + 1] * &self.steps[k];
        }
        out
    }

    /// Sub-cache over grid indices `lo..=hi`.
    pub fn restrict(&self, lo: usize, hi: usize) -> Result<TransitionCache, PropagatorError> {
        let grid = self.grid.slice(lo, hi);
        Self::from_steps(
            grid,
            self.dim,
            self.steps[lo..hi].to_vec(),
            self.inv_steps[lo..hi].to_vec(),
            self.coefficients[lo..=hi].to_vec(),
        )
    }

    /// Relative cocycle defect over `count` random grid triples.
    pub fn measure_cocycle_defect(&self, count: usize, seed: u64) -> f64 {
        let len = self.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples: Vec<(usize, usize, usize)> = (0..count)
            .map(|_| (rng.random_range(0..len), rng.random_range(0..len), rng.random_range(0..len)))
            .collect();
        triples
            .par_iter()
            .map(|&(t, s, r)| {
                let ts = self.transition_idx(t, s);
                let sr = self.transition_idx(s, r);
                let tr = self.transition_idx(t, r);
                let scale = (linalg::spectral_norm(&ts) * linalg::spectral_norm(&sr)).max(1.0);
                linalg::spectral_norm(&(&ts * &sr - tr)) / scale
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Fits `α`, `β` of the growth bound over grid pairs in both time orders.
///
/// `β` is the least-squares slope of the per-separation envelope of
/// `log ‖Φ(t,s)‖` over separations ≥ 1 (clamped at 0), and `α` is the
/// smallest amplitude making the bound hold on every visited pair.
pub fn estimate_growth(cache: &TransitionCache) -> GrowthEstimate {
    let len = cache.len();
    let h = cache.grid().step();
    let n = cache.dim();
    let env = match PairPlan::for_len(len) {
        PairPlan::All(_) => (0..len)
            .into_par_iter()
            .fold(
                || Envelope::new(len, h),
                |mut env, s| {
                    env.record(0, 0.0, s, s);
                    let mut acc = Matrix::identity(n, n);
                    let mut tmp = Matrix::zeros(n, n);
                    for t in s + 1..len {
                        tmp.gemm(1.0, cache.step(t - 1), &acc, 0.0);
                        std::mem::swap(&mut acc, &mut tmp);
                        env.record(t - s, linalg::spectral_norm(&acc).ln(), t, s);
                    }
                    acc.fill_with_identity();
                    for t in (0..s).rev() {
                        tmp.gemm(1.0, cache.inverse_step(t), &acc, 0.0);
                        std::mem::swap(&mut acc, &mut tmp);
                        env.record(s - t, linalg::spectral_norm(&acc).ln(), t, s);
                    }
                    env
                },
            )
            .reduce(
                || Envelope::new(len, h),
                |mut a, b| {
                    a.merge(&b);
                    a
                },
            ),
        PairPlan::Sampled(pairs) => {
            let mut env = pairs
                .par_chunks(4096)
                .map(|chunk| {
                    let mut env = Envelope::new(len, h);
                    for (i, &(late, early)) in chunk.iter().enumerate() {
                        // alternate the time order so both directions are sampled
                        let (t, s) = if i % 2 == 0 { (late, early) } else { (early, late) };
                        let norm = linalg::spectral_norm(&cache.transition_idx(t, s));
                        env.record(late - early, norm.ln(), t, s);
                    }
                    env
                })
                .reduce(
                    || Envelope::new(len, h),
                    |mut a, b| {
                        a.merge(&b);
                        a
                    },
                );
            env.record(0, 0.0, 0, 0);
            env
        }
    };
    let beta = env.slope().unwrap_or(0.0).max(0.0);
    let (alpha, (t, s)) = env.amplitude(beta).unwrap_or((1.0, (0, 0)));
    let grid = cache.grid();
    GrowthEstimate { alpha: alpha.max(1.0), beta, attained_at: (grid.point(t), grid.point(s)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn diag(d: &[f64]) -> LinearSystem {
        crate::system::builtin("const_diag", &BTreeMap::from([("diag".to_string(), d.to_vec())])).unwrap()
    }

    #[test]
    fn zero_field_gives_identity() {
        let sys = diag(&[0.0, 0.0]);
        let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let cache = propagate(&sys, &grid).unwrap();
        for k in 0..cache.len() {
            assert_eq!(cache.fundamental(k), &Matrix::identity(2, 2));
        }
        let g = estimate_growth(&cache);
        assert_eq!((g.alpha, g.beta), (1.0, 0.0));
    }

    #[test]
    fn first_fundamental_is_exact_identity() {
        let sys = crate::system::builtin("periodic_hyperbolic", &BTreeMap::new()).unwrap();
        let cache = propagate(&sys, &TimeGrid::new(-1.0, 1.0, 0.01).unwrap()).unwrap();
        assert_eq!(cache.fundamental(0), &Matrix::identity(2, 2));
    }

    #[test]
    fn transition_identity_and_off_grid() {
        let sys = diag(&[-1.0, 1.0]);
        let cache = propagate(&sys, &TimeGrid::new(0.0, 2.0, 0.01).unwrap()).unwrap();
        let id = cache.transition(1.3, 1.3).unwrap();
        assert!((id - Matrix::identity(2, 2)).norm() < 1e-12);
        assert!(matches!(cache.transition(1.005, 0.0), Err(PropagatorError::OffGrid { .. })));
    }

    #[test]
    fn outside_sampled_domain_rejected() {
        let sys = crate::system::parse_sampled("t,a11\n0,1\n1,1\n").unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 0.5).unwrap();
        assert!(matches!(propagate(&sys, &grid), Err(PropagatorError::OutsideDomain { .. })));
    }

    #[test]
    fn overflow_detected() {
        let sys = diag(&[400.0]);
        let grid = TimeGrid::new(0.0, 1.0, 0.001).unwrap();
        assert!(matches!(propagate(&sys, &grid), Err(PropagatorError::StepUnstable { .. })));
    }

    #[test]
    fn restrict_matches_parent() {
        let sys = crate::system::builtin("rotating_hyperbolic", &BTreeMap::new()).unwrap();
        let cache = propagate(&sys, &TimeGrid::new(-2.0, 2.0, 0.01).unwrap()).unwrap();
        let sub = cache.restrict(100, 300).unwrap();
        assert_eq!(sub.grid().t_min(), cache.grid().point(100));
        let a = sub.transition_idx(150, 20);
        let b = cache.transition_idx(250, 120);
        assert!((a - b).norm() < 1e-13);
    }
}
