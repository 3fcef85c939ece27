//! Dichotomy projections, constants, and their verification.
//!
//! Two routes produce a projection `P` onto the forward-decaying subspace:
//!
//! * [`spectral_projector`] for constant coefficients, from an ordered
//!   complex Schur form and a triangular Sylvester solve;
//! * [`window_projector`] for any system, from the singular spectra of
//!   `Φ(T, 0)` and `Φ(−T, 0)` on a symmetric window.
//!
//! Either way the constants `N₁, ν₁, N₂, ν₂` are fitted as exact envelopes
//! over grid pairs ([`fit_constants`]) and checked ([`verify_dichotomy`]).
//! Window reports fit on the inner half of the window, where the computed
//! `P(t)` is accurate; the outer halves only serve to resolve the splitting.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::envelope::{Envelope, PairPlan};
use crate::linalg::{self, Matrix, Vector};
use crate::propagator::{self, GrowthEstimate, PropagatorError, TransitionCache};
use crate::system::{LinearSystem, SystemKind, TimeGrid};

/// Eigenvalues with `|Re λ|` below this are treated as on the imaginary axis.
pub const SPECTRAL_MARGIN: f64 = 1e-8;
/// Required ratio between the singular values across the splitting.
pub const GAP_MIN: f64 = 1e3;
/// Smallest fitted rate accepted as exponential decay.
pub const RATE_MIN: f64 = 1e-3;
/// Smallest principal angle between `X₁` and `X₂` accepted as a splitting.
pub const DEGENERATE_ANGLE: f64 = 1e-6;
/// Each certified side must contract by at least this factor across the
/// fitting half-window, `N e^{−ν T_fit} ≤ WINDOW_CONTRACTION`.
pub const WINDOW_CONTRACTION: f64 = 0.5;
/// Idempotency defect accepted for an input projection.
pub const PROJECTION_TOL: f64 = 1e-6;
/// Boundedness screen of [`decay_check`], relative to `‖x0‖`.
pub const BOUNDED_SCREEN: f64 = 1e3;
const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DichotomyError {
    #[error("spectral projector needs a constant-coefficient system")]
    NotConstant,
    #[error("window [{t_min}, {t_max}] is not symmetric about a grid point at 0")]
    NotSymmetricWindow { t_min: f64, t_max: f64 },
    #[error("matrix is not a projection (idempotency defect {defect:e})")]
    NotProjection { defect: f64 },
    #[error("{side} side decays at fitted rate {rate:e}, at most {RATE_MIN:e}")]
    NoDecay { side: Side, rate: f64 },
    #[error("report verdict is {0:?}, dichotomic required")]
    NotDichotomic(Verdict),
    #[error("report carries no dichotomy constants")]
    MissingConstants,
    #[error("time {0} is not a grid point of the cache")]
    OffGrid(f64),
    #[error("inverse-norm bound must be positive, got {0}")]
    InvalidBound(f64),
    #[error("solution is not bounded on the {side} semi-axis (growth factor {factor:e})")]
    NotBounded { side: Side, factor: f64 },
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    System(#[from] crate::system::SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Range of `P`, decaying forward (`t ≥ s`).
    Stable,
    /// Range of `Q`, decaying backward (`s ≥ t`).
    Unstable,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Stable => "stable",
            Side::Unstable => "unstable",
        })
    }
}

/// Semi-axis selector for [`decay_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Dichotomic,
    NotDichotomic,
    Inconclusive,
}

/// Why a report is not (or not yet) certified dichotomic.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    OnAxisEigenvalue { real_part: f64 },
    NoGap { forward: Vec<f64>, backward: Vec<f64> },
    DimensionMismatch { forward_bounded: usize, backward_bounded: usize },
    DegenerateSplit { angle: f64 },
    NoDecay { side: Side, rate: f64 },
    WindowTooShort { side: Side, contraction: f64 },
    VerificationFailed { margin: f64 },
}

/// How the splitting projection was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorSource {
    /// Exact spectral projection of a constant matrix; `P(t)` is valid on
    /// any grid.
    Spectral,
    /// Finite-window splitting; `P(t)` is trusted on the fit window only.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideConstants {
    pub n: f64,
    pub nu: f64,
}

impl SideConstants {
    pub fn bound(&self, separation: f64) -> f64 {
        self.n * (-self.nu * separation).exp()
    }
}

/// `N₁, ν₁` (stable) and `N₂, ν₂` (unstable); `None` marks a vacuous side
/// (`P = 0` or `Q = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DichotomyConstants {
    pub stable: Option<SideConstants>,
    pub unstable: Option<SideConstants>,
}

impl DichotomyConstants {
    /// `N₁/ν₁ + N₂/ν₂`, an upper bound for `‖L⁻¹‖`; vacuous sides add 0.
    pub fn inverse_bound(&self) -> f64 {
        [self.stable, self.unstable].iter().flatten().map(|c| c.n / c.nu).sum()
    }

    pub fn side(&self, side: Side) -> Option<SideConstants> {
        match side {
            Side::Stable => self.stable,
            Side::Unstable => self.unstable,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyReport {
    pub source: ProjectorSource,
    #[serde(serialize_with = "crate::serialize_matrix")]
    pub p: Matrix,
    #[serde(serialize_with = "crate::serialize_matrix")]
    pub q: Matrix,
    #[serde(serialize_with = "crate::serialize_matrix")]
    pub x1_basis: Matrix,
    #[serde(serialize_with = "crate::serialize_matrix")]
    pub x2_basis: Matrix,
    /// Time at which `p` is the splitting projection.
    pub reference_time: f64,
    /// Sub-window on which the constants were fitted and verified.
    pub fit_window: (f64, f64),
    pub constants: Option<DichotomyConstants>,
    pub verdict: Verdict,
    pub gap_ratio: f64,
    pub finding: Option<Finding>,
    /// Minimal multiplicative margin of the final verification.
    pub margin: Option<f64>,
}

impl DichotomyReport {
    fn failed(n: usize, reference_time: f64, verdict: Verdict, finding: Finding) -> Self {
        Self {
            source: ProjectorSource::Window,
            p: Matrix::zeros(n, n),
            q: Matrix::identity(n, n),
            x1_basis: Matrix::zeros(n, 0),
            x2_basis: Matrix::zeros(n, 0),
            reference_time,
            fit_window: (reference_time, reference_time),
            constants: None,
            verdict,
            gap_ratio: 0.0,
            finding: Some(finding),
            margin: None,
        }
    }

    /// Whether `P(t)` derived from this report can be trusted at time `t`.
    pub fn trusts(&self, t: f64) -> bool {
        match self.source {
            ProjectorSource::Spectral => true,
            ProjectorSource::Window => {
                let slack = 1e-9 * (1.0 + t.abs());
                t >= self.fit_window.0 - slack && t <= self.fit_window.1 + slack
            }
        }
    }

    pub fn is_dichotomic(&self) -> bool {
        self.verdict == Verdict::Dichotomic
    }

    /// Dichotomy constants of a certified report.
    pub fn certified_constants(&self) -> Result<DichotomyConstants, DichotomyError> {
        if !self.is_dichotomic() {
            return Err(DichotomyError::NotDichotomic(self.verdict));
        }
        self.constants.ok_or(DichotomyError::MissingConstants)
    }
}

fn idempotency_defect(p: &Matrix) -> f64 {
    linalg::spectral_norm(&(p * p - p)) / linalg::spectral_norm(p).max(1.0)
}

/// Norms `‖Φ(t_i, ref) L · R Φ(ref, t_j)‖` of a rank-k projected transition
/// family, evaluated from per-index k×k factors.
struct ProjectedFamily {
    k: usize,
    left: Vec<Matrix>,
    right_gram: Vec<Matrix>,
    left_scalar: Vec<f64>,
    right_scalar: Vec<f64>,
}

impl ProjectedFamily {
    fn new(cache: &TransitionCache, reference: usize, factor_left: &Matrix, factor_right: &Matrix) -> Self {
        let k = factor_left.ncols();
        let ls = cache.push_columns(reference, factor_left);
        let rs = cache.pull_rows(reference, factor_right);
        if k == 1 {
            return Self {
                k,
                left: Vec::new(),
                right_gram: Vec::new(),
                left_scalar: ls.iter().map(|l| l.norm()).collect(),
                right_scalar: rs.iter().map(|r| r.norm()).collect(),
            };
        }
        let left = ls.into_par_iter().map(|l| l.qr().r()).collect();
        let right_gram = rs.par_iter().map(|r| r * r.transpose()).collect();
        Self { k, left, right_gram, left_scalar: Vec::new(), right_scalar: Vec::new() }
    }

    fn norm(&self, i: usize, j: usize) -> f64 {
        if self.k == 1 {
            return self.left_scalar[i] * self.right_scalar[j];
        }
        let t = &self.left[i];
        let g = t * &self.right_gram[j] * t.transpose();
        linalg::sym_lambda_max(&g).max(0.0).sqrt()
    }
}

/// The two projected families of a splitting `P`, `Q = I − P`.
struct SplitFamilies {
    stable: Option<ProjectedFamily>,
    unstable: Option<ProjectedFamily>,
}

impl SplitFamilies {
    fn new(cache: &TransitionCache, p: &Matrix, reference: usize) -> Self {
        let n = p.nrows();
        let q = Matrix::identity(n, n) - p;
        let build = |m: &Matrix| {
            let (l, r) = linalg::low_rank_factors(m, 1e-10);
            (l.ncols() > 0).then(|| ProjectedFamily::new(cache, reference, &l, &r))
        };
        Self { stable: build(p), unstable: build(&q) }
    }

    fn family(&self, side: Side) -> Option<&ProjectedFamily> {
        match side {
            Side::Stable => self.stable.as_ref(),
            Side::Unstable => self.unstable.as_ref(),
        }
    }
}

/// Evaluates `visit(sep, norm, t, s)` over the pair plan for one side.
/// Stable side pairs have `t ≥ s`; unstable side pairs have `s ≥ t`.
fn side_envelope(fam: &ProjectedFamily, side: Side, plan: &PairPlan, len: usize, h: f64) -> Envelope {
    let norm_at = |late: usize, early: usize| match side {
        Side::Stable => fam.norm(late, early),
        Side::Unstable => fam.norm(early, late),
    };
    let merge = |mut a: Envelope, b: Envelope| {
        a.merge(&b);
        a
    };
    match plan {
        PairPlan::All(_) => (0..len)
            .into_par_iter()
            .fold(
                || Envelope::new(len, h),
                |mut env, late| {
                    for early in 0..=late {
                        env.record(late - early, norm_at(late, early).ln(), late, early);
                    }
                    env
                },
            )
            .reduce(|| Envelope::new(len, h), merge),
        PairPlan::Sampled(pairs) => pairs
            .par_chunks(4096)
            .map(|chunk| {
                let mut env = Envelope::new(len, h);
                for &(late, early) in chunk {
                    env.record(late - early, norm_at(late, early).ln(), late, early);
                }
                env
            })
            .reduce(|| Envelope::new(len, h), merge),
    }
}

fn side_margin(fam: &ProjectedFamily, side: Side, c: SideConstants, plan: &PairPlan, len: usize, h: f64) -> f64 {
    let ratio = |late: usize, early: usize| {
        let norm = match side {
            Side::Stable => fam.norm(late, early),
            Side::Unstable => fam.norm(early, late),
        };
        let bound = c.bound((late - early) as f64 * h);
        if norm > 0.0 {
            bound / norm
        } else {
            f64::INFINITY
        }
    };
    match plan {
        PairPlan::All(_) => (0..len)
            .into_par_iter()
            .map(|late| (0..=late).map(|early| ratio(late, early)).fold(f64::INFINITY, f64::min))
            .reduce(|| f64::INFINITY, f64::min),
        PairPlan::Sampled(pairs) => pairs
            .par_iter()
            .map(|&(late, early)| ratio(late, early))
            .reduce(|| f64::INFINITY, f64::min),
    }
}

fn reference_index(cache: &TransitionCache, reference_time: f64) -> Result<usize, DichotomyError> {
    cache.grid().index_of(reference_time).ok_or(DichotomyError::OffGrid(reference_time))
}

/// Fits `(N₁, ν₁, N₂, ν₂)` as exact envelopes of
/// `‖Φ(t,s)P(s)‖` (`t ≥ s`) and `‖Φ(t,s)Q(s)‖` (`s ≥ t`) over the cache,
/// where `P(s) = Φ(s, t_ref) P Φ(t_ref, s)`.
pub fn fit_constants(
    cache: &TransitionCache,
    p: &Matrix,
    reference_time: f64,
) -> Result<DichotomyConstants, DichotomyError> {
    let defect = idempotency_defect(p);
    if !(defect <= PROJECTION_TOL) {
        return Err(DichotomyError::NotProjection { defect });
    }
    let reference = reference_index(cache, reference_time)?;
    let families = SplitFamilies::new(cache, p, reference);
    let plan = PairPlan::for_len(cache.len());
    let h = cache.grid().step();
    let fit = |side: Side| -> Result<Option<SideConstants>, DichotomyError> {
        let Some(fam) = families.family(side) else { return Ok(None) };
        let env = side_envelope(fam, side, &plan, cache.len(), h);
        let rate = -env.slope().unwrap_or(0.0);
        if !(rate > RATE_MIN) {
            return Err(DichotomyError::NoDecay { side, rate });
        }
        let (n, _) = env.amplitude(-rate).expect("nonempty envelope");
        Ok(Some(SideConstants { n, nu: rate }))
    };
    Ok(DichotomyConstants { stable: fit(Side::Stable)?, unstable: fit(Side::Unstable)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verification {
    pub passed: bool,
    /// Minimal ratio of claimed bound to measured norm over visited pairs.
    pub margin: f64,
}

/// Checks the dichotomy estimates with the report's constants on every pair
/// (or the seeded sample) inside the report's fit window.
pub fn verify_dichotomy(
    cache: &TransitionCache,
    report: &DichotomyReport,
    tolerance: f64,
) -> Result<Verification, DichotomyError> {
    let constants = report.constants.ok_or(DichotomyError::MissingConstants)?;
    let grid = cache.grid();
    let lo = grid.nearest_index(report.fit_window.0);
    let hi = grid.nearest_index(report.fit_window.1);
    let window = if lo == 0 && hi == grid.intervals() || hi <= lo {
        cache.clone()
    } else {
        cache.restrict(lo, hi)?
    };
    verify_on(&window, &report.p, report.reference_time, &constants, tolerance)
}

fn verify_on(
    cache: &TransitionCache,
    p: &Matrix,
    reference_time: f64,
    constants: &DichotomyConstants,
    tolerance: f64,
) -> Result<Verification, DichotomyError> {
    let reference = reference_index(cache, reference_time)?;
    let families = SplitFamilies::new(cache, p, reference);
    let plan = PairPlan::for_len(cache.len());
    let h = cache.grid().step();
    let mut margin = f64::INFINITY;
    for side in [Side::Stable, Side::Unstable] {
        let Some(fam) = families.family(side) else { continue };
        match constants.side(side) {
            Some(c) => margin = margin.min(side_margin(fam, side, c, &plan, cache.len(), h)),
            None => margin = 0.0,
        }
    }
    Ok(Verification { passed: margin >= 1.0 - tolerance, margin })
}

fn bases_of(p: &Matrix) -> (Matrix, Matrix) {
    let n = p.nrows();
    let (l1, _) = linalg::low_rank_factors(p, 1e-10);
    let (l2, _) = linalg::low_rank_factors(&(Matrix::identity(n, n) - p), 1e-10);
    (linalg::orthonormalize(&l1), linalg::orthonormalize(&l2))
}

/// Half-length and step of the grid used to fit constants for a constant
/// system with the given eigenvalue real parts.
fn default_window(real_parts: &[f64], spectral_radius: f64) -> (f64, f64) {
    let nu_min = real_parts.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min);
    let hi = real_parts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = real_parts.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo).max(1e-12);
    let half = (8.0 / nu_min).min(24.0 / spread).clamp(1.0, 40.0);
    let h_target = (0.01f64).min(0.1 / spectral_radius.max(1e-12));
    let intervals = ((2.0 * half / h_target).ceil() as usize).clamp(2, 2000);
    let intervals = intervals + intervals % 2;
    (half, 2.0 * half / intervals as f64)
}

/// Spectral projection of a constant `A` onto the eigenvalues with negative
/// real part, with constants fitted on a default symmetric grid.
pub fn spectral_projector(sys: &LinearSystem) -> Result<DichotomyReport, DichotomyError> {
    let a = match (sys.kind(), sys.constant_matrix()) {
        (SystemKind::Constant, Some(a)) => a.clone(),
        _ => return Err(DichotomyError::NotConstant),
    };
    let n = a.nrows();
    let eigs = linalg::eigenvalues(&a);
    if let Some(z) = eigs.iter().find(|z| z.re.abs() < SPECTRAL_MARGIN) {
        let mut report =
            DichotomyReport::failed(n, 0.0, Verdict::NotDichotomic, Finding::OnAxisEigenvalue { real_part: z.re });
        report.source = ProjectorSource::Spectral;
        return Ok(report);
    }
    let (p, _) = linalg::spectral_projector(&a, |z| z.re < 0.0);
    let q = Matrix::identity(n, n) - &p;
    let (x1_basis, x2_basis) = bases_of(&p);
    let real_parts: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    let radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (half, h) = default_window(&real_parts, radius);
    let grid = TimeGrid::symmetric(half, h)?;
    let cache = propagator::propagate(sys, &grid)?;
    let stable_max = real_parts.iter().cloned().filter(|r| *r < 0.0).fold(f64::NEG_INFINITY, f64::max);
    let unstable_min = real_parts.iter().cloned().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    let gap = if stable_max.is_finite() && unstable_min.is_finite() {
        unstable_min - stable_max
    } else {
        2.0 * real_parts.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min)
    };
    let mut report = DichotomyReport {
        source: ProjectorSource::Spectral,
        p,
        q,
        x1_basis,
        x2_basis,
        reference_time: 0.0,
        fit_window: (grid.t_min(), grid.t_max()),
        constants: None,
        verdict: Verdict::Inconclusive,
        gap_ratio: (gap * half).exp(),
        finding: None,
        margin: None,
    };
    certify(&cache, &mut report, None)?;
    Ok(report)
}

/// Fits constants on `cache` (already restricted to the fit window), checks
/// the optional window contraction criterion, and verifies.
fn certify(
    cache: &TransitionCache,
    report: &mut DichotomyReport,
    contraction_half: Option<f64>,
) -> Result<(), DichotomyError> {
    let constants = match fit_constants(cache, &report.p, report.reference_time) {
        Ok(c) => c,
        Err(DichotomyError::NoDecay { side, rate }) => {
            report.verdict = Verdict::NotDichotomic;
            report.finding = Some(Finding::NoDecay { side, rate });
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    report.constants = Some(constants);
    if let Some(half) = contraction_half {
        for side in [Side::Stable, Side::Unstable] {
            if let Some(c) = constants.side(side) {
                let contraction = c.bound(half);
                if contraction > WINDOW_CONTRACTION {
                    report.verdict = Verdict::Inconclusive;
                    report.finding = Some(Finding::WindowTooShort { side, contraction });
                    return Ok(());
                }
            }
        }
    }
    let check = verify_on(cache, &report.p, report.reference_time, &constants, VERIFY_TOL)?;
    report.margin = Some(check.margin);
    if check.passed {
        report.verdict = Verdict::Dichotomic;
    } else {
        report.verdict = Verdict::Inconclusive;
        report.finding = Some(Finding::VerificationFailed { margin: check.margin });
    }
    Ok(())
}

/// Splits the singular values (descending) into growing and bounded groups.
/// Returns the number of growing values and the ratio across the split.
fn split_spectrum(sv: &[f64]) -> Option<(usize, f64)> {
    let n = sv.len();
    let root = GAP_MIN.sqrt();
    (0..=n).find_map(|k| {
        let large_ok = k == 0 || sv[k - 1] >= root;
        let small_ok = k == n || sv[k] <= 1.0 / root;
        if !(large_ok && small_ok) {
            return None;
        }
        let upper = if k == 0 { 1.0 } else { sv[k - 1] };
        let lower = if k == n { 1.0 } else { sv[k] };
        Some((k, upper / lower))
    })
}

/// Right singular vectors of `m` belonging to the bounded group, plus the
/// descending singular values and the gap ratio.
fn bounded_directions(m: &Matrix) -> (Option<(Matrix, f64)>, Vec<f64>) {
    let n = m.nrows();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let split = split_spectrum(&sv).map(|(k, ratio)| {
        let mut basis = Matrix::zeros(n, n - k);
        for (c, &i) in order[k..].iter().enumerate() {
            basis.set_column(c, &vt.row(i).transpose());
        }
        (basis, ratio)
    });
    (split, sv)
}

/// Finite-window splitting: `X₁` from the bounded right singular directions
/// of `Φ(T, 0)`, `X₂` from those of `Φ(−T, 0)`.
pub fn window_projector(cache: &TransitionCache) -> Result<DichotomyReport, DichotomyError> {
    let grid = cache.grid();
    let n = cache.dim();
    let (t_min, t_max) = (grid.t_min(), grid.t_max());
    let center = match grid.index_of(0.0) {
        Some(c) if 2 * c == grid.intervals() => c,
        _ => return Err(DichotomyError::NotSymmetricWindow { t_min, t_max }),
    };
    let last = grid.intervals();
    let forward = cache.transition_idx(last, center);
    let backward = cache.transition_idx(0, center);
    let (fwd_split, fwd_sv) = bounded_directions(&forward);
    let (bwd_split, bwd_sv) = bounded_directions(&backward);
    let (Some((x1, r1)), Some((x2, r2))) = (fwd_split, bwd_split) else {
        return Ok(DichotomyReport::failed(
            n,
            0.0,
            Verdict::Inconclusive,
            Finding::NoGap { forward: fwd_sv, backward: bwd_sv },
        ));
    };
    if x1.ncols() + x2.ncols() != n {
        return Ok(DichotomyReport::failed(
            n,
            0.0,
            Verdict::Inconclusive,
            Finding::DimensionMismatch { forward_bounded: x1.ncols(), backward_bounded: x2.ncols() },
        ));
    }
    let angle = linalg::smallest_principal_angle(&x1, &x2);
    if angle < DEGENERATE_ANGLE {
        return Ok(DichotomyReport::failed(n, 0.0, Verdict::NotDichotomic, Finding::DegenerateSplit { angle }));
    }
    let p = linalg::oblique_projector(&x1, &x2).expect("complementary bases");
    let q = Matrix::identity(n, n) - &p;
    let lo = center / 2;
    let hi = center + center / 2;
    let inner = cache.restrict(lo, hi)?;
    let fit_window = (grid.point(lo), grid.point(hi));
    let mut report = DichotomyReport {
        source: ProjectorSource::Window,
        p,
        q,
        x1_basis: x1,
        x2_basis: x2,
        reference_time: 0.0,
        fit_window,
        constants: None,
        verdict: Verdict::Inconclusive,
        gap_ratio: r1.min(r2),
        finding: None,
        margin: None,
    };
    certify(&inner, &mut report, Some(0.5 * (fit_window.1 - fit_window.0)))?;
    Ok(report)
}

/// Result of a window analysis with escalation.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub cache: TransitionCache,
    pub report: DichotomyReport,
    /// Half-lengths tried, in order.
    pub attempts: Vec<f64>,
}

/// Number of window doublings tried after an inconclusive verdict.
pub const MAX_WINDOW_DOUBLINGS: usize = 2;

/// Runs [`window_projector`] on `[-half, half]`, doubling the half-length up
/// to [`MAX_WINDOW_DOUBLINGS`] times while the verdict is inconclusive.
pub fn analyze_window(sys: &LinearSystem, half: f64, h: f64) -> Result<WindowAnalysis, DichotomyError> {
    let mut attempts = Vec::new();
    let mut half = half;
    loop {
        attempts.push(half);
        let grid = TimeGrid::symmetric(half, h)?;
        let cache = propagator::propagate(sys, &grid)?;
        let report = window_projector(&cache)?;
        let done = report.verdict != Verdict::Inconclusive || attempts.len() > MAX_WINDOW_DOUBLINGS;
        let next = TimeGrid::symmetric(2.0 * half, h)?;
        if done || !sys.covers(&next) {
            return Ok(WindowAnalysis { cache, report, attempts });
        }
        half *= 2.0;
    }
}

/// `P(t_k) = Φ(t_k, t_ref) P Φ(t_ref, t_k)` on every grid point.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    pub projectors: Vec<Matrix>,
    /// `sup_k ‖P(t_k)‖` over the whole grid.
    pub sup_norm: f64,
    /// Supremum restricted to the report's fit window.
    pub fit_window_sup_norm: f64,
}

pub fn projector_family(cache: &TransitionCache, report: &DichotomyReport) -> Result<ProjectorFamily, DichotomyError> {
    if !report.is_dichotomic() {
        return Err(DichotomyError::NotDichotomic(report.verdict));
    }
    let reference = reference_index(cache, report.reference_time)?;
    let n = cache.dim();
    let (l, r) = linalg::low_rank_factors(&report.p, 1e-10);
    let projectors: Vec<Matrix> = if l.ncols() == 0 {
        vec![Matrix::zeros(n, n); cache.len()]
    } else {
        let ls = cache.push_columns(reference, &l);
        let rs = cache.pull_rows(reference, &r);
        ls.iter().zip(&rs).map(|(a, b)| a * b).collect()
    };
    let grid = cache.grid();
    let norms: Vec<f64> = projectors.par_iter().map(linalg::spectral_norm).collect();
    let sup_norm = norms.iter().cloned().fold(0.0, f64::max);
    let fit_window_sup_norm = norms
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let t = grid.point(*k);
            t >= report.fit_window.0 - 1e-12 && t <= report.fit_window.1 + 1e-12
        })
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    Ok(ProjectorFamily { projectors, sup_norm, fit_window_sup_norm })
}

/// Decay constants implied by exponential growth and an inverse-norm bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants {
    /// `2 α e^β max{1, ‖L⁻¹‖}`.
    pub c: f64,
    /// Dwell length over which bounded solutions halve.
    pub n_step: f64,
    /// `ln 2 / n_step`.
    pub rate: f64,
    /// Amplitude of the decay estimate, one halving period above `c`.
    pub c_decay: f64,
    pub inv_norm_bound: f64,
}

impl DecayConstants {
    pub fn bound(&self, separation: f64) -> f64 {
        self.c_decay * (-self.rate * separation).exp()
    }
}

pub fn lemma1_constants(growth: &GrowthEstimate, inv_norm_bound: f64) -> Result<DecayConstants, DichotomyError> {
    if !(inv_norm_bound > 0.0 && inv_norm_bound.is_finite()) {
        return Err(DichotomyError::InvalidBound(inv_norm_bound));
    }
    let c = 2.0 * growth.alpha * growth.beta.exp() * inv_norm_bound.max(1.0);
    let n_step = 2.0 * c * c * inv_norm_bound * (1.0 + 1e-6);
    Ok(DecayConstants { c, n_step, rate: std::f64::consts::LN_2 / n_step, c_decay: 2.0 * c, inv_norm_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayOutcome {
    pub passed: bool,
    /// Minimal ratio of the guaranteed bound to the measured norm ratio.
    pub margin: f64,
    /// Least-squares decay rate of `log ‖u(t)‖` along the semi-axis
    /// (`None` for the zero solution).
    pub measured_rate: Option<f64>,
}

/// Checks `‖u(t)‖ ≤ C_decay e^{−rate|t−s|} ‖u(s)‖` for the solution through
/// `x0` at time 0, on all grid pairs of the chosen semi-axis ordered away
/// from 0.
pub fn decay_check(
    cache: &TransitionCache,
    x0: &Vector,
    direction: Direction,
    constants: &DecayConstants,
) -> Result<DecayOutcome, DichotomyError> {
    let grid = cache.grid();
    let origin = grid.index_of(0.0).ok_or(DichotomyError::OffGrid(0.0))?;
    let x = Matrix::from_column_slice(x0.len(), 1, x0.as_slice());
    let path = cache.push_columns(origin, &x);
    let indices: Vec<usize> = match direction {
        Direction::Forward => (origin..cache.len()).collect(),
        Direction::Backward => (0..=origin).rev().collect(),
    };
    let norms: Vec<f64> = indices.iter().map(|&k| path[k].norm()).collect();
    let x0_norm = x0.norm();
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    if peak > BOUNDED_SCREEN * x0_norm {
        let side = match direction {
            Direction::Forward => Side::Stable,
            Direction::Backward => Side::Unstable,
        };
        return Err(DichotomyError::NotBounded { side, factor: peak / x0_norm });
    }
    if x0_norm == 0.0 {
        return Ok(DecayOutcome { passed: true, margin: f64::INFINITY, measured_rate: None });
    }
    let h = grid.step();
    // indices run away from 0, so position difference is |t − s| / h
    let margin = (0..norms.len())
        .into_par_iter()
        .map(|j| {
            let mut m = f64::INFINITY;
            for i in 0..=j {
                if norms[j] > 0.0 {
                    let bound = constants.bound((j - i) as f64 * h) * norms[i];
                    m = m.min(bound / norms[j]);
                }
            }
            m
        })
        .reduce(|| f64::INFINITY, f64::min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = norms
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (i as f64 * h, v.ln()))
        .unzip();
    let measured_rate = linalg::ls_slope(&xs, &ys).map(|s| -s);
    Ok(DecayOutcome { passed: margin >= 1.0, margin, measured_rate })
}
