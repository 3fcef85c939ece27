//! Persistence of the dichotomy under perturbations `x' = (A(t) + B(t))x`
//! with `‖B‖∞ < (N₁/ν₁ + N₂/ν₂)⁻¹`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dichotomy::{
    self, lemma1_constants, DecayConstants, DichotomyConstants, DichotomyError, DichotomyReport, Verdict,
};
use crate::propagator::{estimate_growth, GrowthEstimate};
use crate::system::{LinearSystem, PerturbationSpec, TimeGrid};

#[derive(Debug, Error)]
pub enum RoughnessError {
    #[error("report verdict is {0:?}, dichotomic required")]
    NotDichotomic(Verdict),
    #[error("b_norm · inverse bound = {product} is not below 1")]
    NotAdmissible { product: f64 },
    #[error("grid [{t_min}, {t_max}] is not symmetric about 0")]
    NotSymmetric { t_min: f64, t_max: f64 },
    #[error("perturbation has dimension {got}, system has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("admissible perturbation (b_norm {b_norm:e} < {threshold:e}) but the perturbed system was not certified: {verdict:?}")]
    TheoremViolationSuspected { b_norm: f64, threshold: f64, verdict: Verdict, report: Box<RoughnessReport> },
    #[error(transparent)]
    Dichotomy(#[from] DichotomyError),
    #[error(transparent)]
    System(#[from] crate::system::SystemError),
}

/// `(N₁/ν₁ + N₂/ν₂)⁻¹`.
pub fn threshold(report: &DichotomyReport) -> Result<f64, RoughnessError> {
    if !report.is_dichotomic() {
        return Err(RoughnessError::NotDichotomic(report.verdict));
    }
    let constants = report.constants.ok_or(DichotomyError::MissingConstants)?;
    Ok(threshold_of(&constants))
}

fn threshold_of(constants: &DichotomyConstants) -> f64 {
    1.0 / constants.inverse_bound()
}

/// `‖L⁻¹‖ / (1 − ‖B‖·‖L⁻¹‖)`, a bound for the inverse of `L − B`.
pub fn neumann_bound(inv_norm_bound: f64, b_norm: f64) -> Result<f64, RoughnessError> {
    let product = b_norm * inv_norm_bound;
    if !(product < 1.0) {
        return Err(RoughnessError::NotAdmissible { product });
    }
    Ok(inv_norm_bound / (1.0 - product))
}

/// Inputs from which the certified perturbed constants are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceInputs {
    pub base: DichotomyConstants,
    pub growth: GrowthEstimate,
    pub b_norm: f64,
}

impl TraceInputs {
    /// Growth of the perturbed equation, `α e^{(β + α‖B‖)|t−s|}`.
    pub fn perturbed_growth(&self) -> GrowthEstimate {
        GrowthEstimate {
            alpha: self.growth.alpha,
            beta: self.growth.beta + self.growth.alpha * self.b_norm,
            attained_at: self.growth.attained_at,
        }
    }

    /// Certified constants; `None` when the perturbation is not admissible.
    pub fn certified(&self) -> Option<(f64, DecayConstants)> {
        let inv = neumann_bound(self.base.inverse_bound(), self.b_norm).ok()?;
        let decay = lemma1_constants(&self.perturbed_growth(), inv).ok()?;
        Some((inv, decay))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoughnessReport {
    pub threshold: f64,
    pub b_norm: f64,
    pub admissible: bool,
    pub perturbation: String,
    pub base: DichotomyReport,
    pub perturbed: DichotomyReport,
    /// Half-lengths tried for the perturbed window.
    pub perturbed_windows: Vec<f64>,
    pub perturbed_inv_bound: Option<f64>,
    /// Constants guaranteed from the base constants, growth and `‖B‖∞`.
    pub certified: Option<DecayConstants>,
    pub trace: TraceInputs,
    pub constants_traceable: bool,
}

impl RoughnessReport {
    /// Constants fitted numerically on the perturbed system.
    pub fn fitted(&self) -> Option<DichotomyConstants> {
        self.perturbed.constants
    }
}

/// Base analysis reused across perturbations of one system.
#[derive(Debug, Clone)]
pub struct RoughnessContext {
    sys: LinearSystem,
    half: f64,
    h: f64,
    pub base: DichotomyReport,
    pub growth: GrowthEstimate,
    pub threshold: f64,
}

impl RoughnessContext {
    /// Certifies the base system on `grid` (a symmetric window, widened if
    /// the verdict is inconclusive) and estimates its growth.
    pub fn new(sys: &LinearSystem, grid: &TimeGrid) -> Result<Self, RoughnessError> {
        let (t_min, t_max) = (grid.t_min(), grid.t_max());
        if (t_min + t_max).abs() > 1e-9 * t_max.abs().max(1.0) {
            return Err(RoughnessError::NotSymmetric { t_min, t_max });
        }
        let analysis = dichotomy::analyze_window(sys, t_max, grid.step())?;
        let threshold = threshold(&analysis.report)?;
        let growth = estimate_growth(&analysis.cache);
        Ok(Self { sys: sys.clone(), half: t_max, h: grid.step(), base: analysis.report, growth, threshold })
    }

    pub fn inverse_bound(&self) -> f64 {
        1.0 / self.threshold
    }

    /// Analyzes `A + B` and attaches the guaranteed constants.
    pub fn verify(&self, b: &PerturbationSpec) -> Result<RoughnessReport, RoughnessError> {
        if b.dim() != self.sys.dim() {
            return Err(RoughnessError::Dimension { expected: self.sys.dim(), got: b.dim() });
        }
        let perturbed_sys = self.sys.perturbed(b);
        let analysis = dichotomy::analyze_window(&perturbed_sys, self.half, self.h)?;
        let b_norm = b.sup_norm().max(b.sup_norm_on(analysis.cache.grid()));
        let admissible = b_norm < self.threshold;
        let trace = TraceInputs { base: self.base.constants.expect("certified base"), growth: self.growth, b_norm };
        let certified = if admissible { trace.certified() } else { None };
        let report = RoughnessReport {
            threshold: self.threshold,
            b_norm,
            admissible,
            perturbation: b.description.clone(),
            base: self.base.clone(),
            perturbed: analysis.report,
            perturbed_windows: analysis.attempts,
            perturbed_inv_bound: certified.map(|(inv, _)| inv),
            certified: certified.map(|(_, d)| d),
            trace,
            constants_traceable: true,
        };
        if admissible && !report.perturbed.is_dichotomic() {
            return Err(RoughnessError::TheoremViolationSuspected {
                b_norm,
                threshold: self.threshold,
                verdict: report.perturbed.verdict,
                report: Box::new(report),
            });
        }
        Ok(report)
    }
}

/// Certifies `sys` on `grid`, then analyzes the perturbed system `A + B`.
pub fn perturb_and_verify(
    sys: &LinearSystem,
    b: &PerturbationSpec,
    grid: &TimeGrid,
) -> Result<RoughnessReport, RoughnessError> {
    RoughnessContext::new(sys, grid)?.verify(b)
}

/// One amplitude of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub amplitude: f64,
    pub b_norm: f64,
    pub threshold: f64,
    pub admissible: bool,
    /// Verdict name, or `error: ...` when the row failed.
    pub verdict: String,
    pub fitted: Option<DichotomyConstants>,
    pub perturbed_inv_bound: Option<f64>,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Dichotomic => "dichotomic",
        Verdict::NotDichotomic => "not_dichotomic",
        Verdict::Inconclusive => "inconclusive",
    }
}

impl SweepRow {
    fn from_result(ctx: &RoughnessContext, amplitude: f64, b_norm: f64, result: Result<RoughnessReport, RoughnessError>) -> Self {
        match result {
            Ok(r) => Self::from_report(amplitude, &r),
            Err(RoughnessError::TheoremViolationSuspected { report, .. }) => {
                let mut row = Self::from_report(amplitude, &report);
                row.verdict = format!("theorem_violation_suspected:{}", verdict_name(report.perturbed.verdict));
                row
            }
            Err(e) => Self {
                amplitude,
                b_norm,
                threshold: ctx.threshold,
                admissible: b_norm < ctx.threshold,
                verdict: format!("error: {e}"),
                fitted: None,
                perturbed_inv_bound: None,
            },
        }
    }

    fn from_report(amplitude: f64, r: &RoughnessReport) -> Self {
        Self {
            amplitude,
            b_norm: r.b_norm,
            threshold: r.threshold,
            admissible: r.admissible,
            verdict: verdict_name(r.perturbed.verdict).to_string(),
            fitted: r.fitted(),
            perturbed_inv_bound: r.perturbed_inv_bound,
        }
    }
}

/// Runs [`RoughnessContext::verify`] for `amplitude · direction` over the
/// amplitudes (in parallel), returning rows sorted by amplitude.
pub fn sweep(ctx: &RoughnessContext, direction: &PerturbationSpec, amplitudes: &[f64]) -> Vec<SweepRow> {
    let mut amps = amplitudes.to_vec();
    amps.sort_by(f64::total_cmp);
    amps.par_iter()
        .map(|&a| {
            let b = direction.scaled(a.abs());
            let result = ctx.verify(&b);
            SweepRow::from_result(ctx, a, b.sup_norm(), result)
        })
        .collect()
}
