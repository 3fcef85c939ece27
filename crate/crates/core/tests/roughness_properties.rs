use std::collections::BTreeMap;

use dichotomy_kit::dichotomy::{lemma1_constants, spectral_projector, Verdict};
use dichotomy_kit::linalg::{spectral_norm, Matrix};
use dichotomy_kit::roughness::{neumann_bound, sweep, threshold, RoughnessContext, RoughnessError};
use dichotomy_kit::system::{builtin, LinearSystem, PerturbationSpec, TimeGrid};
use proptest::prelude::*;

fn diag_context() -> RoughnessContext {
    let sys = builtin("const_diag", &BTreeMap::new()).unwrap();
    RoughnessContext::new(&sys, &TimeGrid::symmetric(8.0, 0.01).unwrap()).unwrap()
}

fn swap() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

#[test]
fn diag_threshold_is_one_half() {
    let ctx = diag_context();
    assert!((ctx.threshold - 0.5).abs() < 1e-6, "{}", ctx.threshold);
    assert_eq!(threshold(&ctx.base).unwrap(), ctx.threshold);
}

#[test]
fn symmetric_perturbation_tracks_spectral_projector() {
    let ctx = diag_context();
    let b = PerturbationSpec::constant(swap() * 0.45);
    let report = ctx.verify(&b).unwrap();
    assert!(report.admissible);
    assert_eq!(report.perturbed.verdict, Verdict::Dichotomic);
    let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.45, 0.45, 1.0]);
    let exact = spectral_projector(&LinearSystem::constant("a_plus_b", a)).unwrap();
    assert!(spectral_norm(&(&report.perturbed.p - &exact.p)) < 1e-5);
}

#[test]
fn certified_constants_trace_bit_for_bit() {
    let ctx = diag_context();
    let report = ctx.verify(&PerturbationSpec::constant(swap() * 0.3)).unwrap();
    assert!(report.constants_traceable);
    let t = report.trace;
    assert_eq!(t.base, ctx.base.constants.unwrap());
    assert_eq!(t.growth, ctx.growth);
    assert_eq!(t.b_norm, report.b_norm);
    let inv = neumann_bound(t.base.inverse_bound(), t.b_norm).unwrap();
    let growth = t.perturbed_growth();
    assert_eq!(growth.alpha.to_bits(), ctx.growth.alpha.to_bits());
    assert_eq!(growth.beta.to_bits(), (ctx.growth.beta + ctx.growth.alpha * t.b_norm).to_bits());
    let again = lemma1_constants(&growth, inv).unwrap();
    let certified = report.certified.unwrap();
    assert_eq!(certified, again);
    assert_eq!(report.perturbed_inv_bound.unwrap().to_bits(), inv.to_bits());
}

#[test]
fn threshold_is_strict() {
    let ctx = diag_context();
    let direction = PerturbationSpec::constant(swap());
    let at = ctx.verify(&direction.scaled(ctx.threshold)).unwrap();
    assert!(!at.admissible);
    assert!(at.certified.is_none());
    let below = ctx.verify(&direction.scaled(ctx.threshold * (1.0 - 1e-9))).unwrap();
    assert!(below.admissible);
    assert!(below.certified.is_some());
}

#[test]
fn large_amplitudes_not_admissible() {
    let ctx = diag_context();
    let direction = PerturbationSpec::constant(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    for amplitude in [0.6, 1.5] {
        let r = ctx.verify(&direction.scaled(amplitude)).unwrap();
        assert!(!r.admissible, "{amplitude}");
        assert!(r.certified.is_none());
        assert!(r.perturbed_inv_bound.is_none());
    }
    // diag(-1, 1) + 1.5 diag(1, -1) = diag(0.5, -0.5): still hyperbolic, and
    // the check reports it without claiming anything from the bound
    let r = ctx.verify(&direction.scaled(1.5)).unwrap();
    assert_eq!(r.perturbed.verdict, Verdict::Dichotomic);
}

#[test]
fn admissible_random_perturbations_stay_dichotomic() {
    let sys = builtin("rotating_hyperbolic", &BTreeMap::new()).unwrap();
    let ctx = RoughnessContext::new(&sys, &TimeGrid::symmetric(8.0, 0.01).unwrap()).unwrap();
    for seed in 0..4 {
        let b = PerturbationSpec::random_unit(2, seed).scaled(0.8 * ctx.threshold);
        let r = ctx.verify(&b).unwrap();
        assert!(r.admissible);
        assert_eq!(r.perturbed.verdict, Verdict::Dichotomic, "seed {seed}");
    }
}

#[test]
fn sweep_reports_every_amplitude() {
    let ctx = diag_context();
    let direction = PerturbationSpec::constant(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    let amps = [0.49, 0.1, 0.3, 0.2];
    let rows = sweep(&ctx, &direction, &amps);
    assert_eq!(rows.iter().map(|r| r.amplitude).collect::<Vec<_>>(), vec![0.1, 0.2, 0.3, 0.49]);
    for r in &rows {
        assert!(r.admissible);
        assert_eq!(r.verdict, "dichotomic");
    }
}

#[test]
fn rejects_asymmetric_grid_and_bad_dimension() {
    let sys = builtin("const_diag", &BTreeMap::new()).unwrap();
    let err = RoughnessContext::new(&sys, &TimeGrid::new(-4.0, 8.0, 0.01).unwrap()).unwrap_err();
    assert!(matches!(err, RoughnessError::NotSymmetric { .. }));
    let ctx = diag_context();
    let err = ctx.verify(&PerturbationSpec::zero(3)).unwrap_err();
    assert!(matches!(err, RoughnessError::Dimension { .. }));
}

proptest! {
    #[test]
    fn neumann_bound_is_monotone(inv in 0.1f64..10.0, x in 0.0f64..0.99, y in 0.0f64..0.99) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let a = neumann_bound(inv, lo / inv).unwrap();
        let b = neumann_bound(inv, hi / inv).unwrap();
        prop_assert!(a <= b);
        prop_assert!(a >= inv);
    }

    #[test]
    fn neumann_bound_rejects_inadmissible(inv in 0.1f64..10.0, k in 1.0f64..5.0) {
        let is_not_admissible = matches!(neumann_bound(inv, k / inv), Err(RoughnessError::NotAdmissible { .. }));
        prop_assert!(is_not_admissible);
    }
}
