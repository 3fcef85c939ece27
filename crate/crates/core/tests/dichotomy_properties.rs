use std::collections::BTreeMap;

use dichotomy_kit::dichotomy::{
    analyze_window, fit_constants, projector_family, spectral_projector, verify_dichotomy, window_projector, Finding,
    Verdict,
};
use dichotomy_kit::linalg::{spectral_norm, Matrix};
use dichotomy_kit::propagator::propagate;
use dichotomy_kit::system::{builtin, LinearSystem, TimeGrid};
use proptest::prelude::*;

fn diag(d: &[f64]) -> LinearSystem {
    builtin("const_diag", &BTreeMap::from([("diag".to_string(), d.to_vec())])).unwrap()
}

#[test]
fn diagonal_constants_match_rates() {
    let cache = propagate(&diag(&[-0.5, 2.0]), &TimeGrid::symmetric(8.0, 0.01).unwrap()).unwrap();
    let p = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let c = fit_constants(&cache, &p, 0.0).unwrap();
    let (s, u) = (c.stable.unwrap(), c.unstable.unwrap());
    assert!((s.nu - 0.5).abs() < 1e-6 && (s.n - 1.0).abs() < 1e-6, "{s:?}");
    assert!((u.nu - 2.0).abs() < 1e-6 && (u.n - 1.0).abs() < 1e-6, "{u:?}");
}

#[test]
fn rotating_constants_match_closed_form() {
    // ‖Φ(t,s)P(s)‖ = e^{−λ(t−s)} exactly, so N = 1 and ν = λ
    let sys = builtin("rotating_hyperbolic", &BTreeMap::from([("lambda".to_string(), vec![0.8])])).unwrap();
    let a = analyze_window(&sys, 10.0, 0.01).unwrap();
    assert_eq!(a.report.verdict, Verdict::Dichotomic);
    let c = a.report.constants.unwrap();
    for side in [c.stable.unwrap(), c.unstable.unwrap()] {
        assert!((side.nu - 0.8).abs() < 1e-5, "{side:?}");
        assert!((side.n - 1.0).abs() < 1e-5, "{side:?}");
    }
}

#[test]
fn report_invariants_hold() {
    for name in ["const_diag", "const_full", "rotating_hyperbolic", "periodic_hyperbolic"] {
        let sys = builtin(name, &BTreeMap::new()).unwrap();
        let a = analyze_window(&sys, 8.0, 0.01).unwrap();
        let r = &a.report;
        assert_eq!(r.verdict, Verdict::Dichotomic, "{name}");
        let n = sys.dim();
        assert!(spectral_norm(&(&r.p * &r.p - &r.p)) < 1e-9, "{name}");
        assert_eq!(&r.p + &r.q, Matrix::identity(n, n), "{name}");
        assert_eq!(r.x1_basis.ncols() + r.x2_basis.ncols(), n);
        let check = verify_dichotomy(&a.cache, r, 1e-9).unwrap();
        assert!(check.passed, "{name}: {}", check.margin);
        let fam = projector_family(&a.cache, r).unwrap();
        let grid = a.cache.grid();
        for k in (0..grid.len()).filter(|&k| r.trusts(grid.point(k))) {
            let pk = &fam.projectors[k];
            assert!(spectral_norm(&(pk * pk - pk)) <= 1e-7 * spectral_norm(pk).max(1.0), "{name} {k}");
        }
    }
}

#[test]
fn periodic_window_matches_invariant_subspaces() {
    // A(t) is upper triangular: e1 spans the stable fibre for every t, and
    // the unstable fibre at 0 is the bounded-backward direction.
    let sys = builtin("periodic_hyperbolic", &BTreeMap::new()).unwrap();
    let a = analyze_window(&sys, 16.0, 0.01).unwrap();
    let p = &a.report.p;
    let e1 = dichotomy_kit::linalg::Vector::from_vec(vec![1.0, 0.0]);
    assert!((p * &e1 - &e1).norm() < 1e-8, "{}", (p * &e1 - &e1).norm());
}

#[test]
fn window_and_spectral_agree_on_random_hyperbolic_matrices() {
    let cases = [
        [-1.0, 0.7, 0.0, 1.5],
        [-2.0, -1.0, 0.3, 1.0],
        [0.5, 2.0, 0.0, -1.0],
        [-1.2, 0.0, 0.9, 2.2],
    ];
    for m in cases {
        let sys = LinearSystem::constant("case", Matrix::from_row_slice(2, 2, &m));
        let spectral = spectral_projector(&sys).unwrap();
        // truncation error of the window projector is about e^{-(ν₁+ν₂)T}
        let cache = propagate(&sys, &TimeGrid::symmetric(16.0, 0.01).unwrap()).unwrap();
        let window = window_projector(&cache).unwrap();
        assert_eq!(window.verdict, Verdict::Dichotomic, "{m:?}");
        assert!(spectral_norm(&(&window.p - &spectral.p)) < 1e-6, "{m:?} {} {}", window.p, spectral.p);
    }
}

#[test]
fn all_unstable_side() {
    let cache = propagate(&diag(&[1.0, 2.0]), &TimeGrid::symmetric(8.0, 0.01).unwrap()).unwrap();
    let r = window_projector(&cache).unwrap();
    assert_eq!(r.p, Matrix::zeros(2, 2));
    assert_eq!(r.verdict, Verdict::Dichotomic);
    assert!(r.constants.unwrap().stable.is_none());
}

#[test]
fn center_direction_is_rejected() {
    let cache = propagate(&diag(&[-1.0, 0.0]), &TimeGrid::symmetric(8.0, 0.01).unwrap()).unwrap();
    let r = window_projector(&cache).unwrap();
    assert_ne!(r.verdict, Verdict::Dichotomic);
    assert!(matches!(r.finding, Some(Finding::NoGap { .. })), "{:?}", r.finding);
}

#[test]
fn shear_never_certified() {
    let sys = builtin("no_dichotomy_shear", &BTreeMap::new()).unwrap();
    for half in [8.0, 16.0, 32.0] {
        let cache = propagate(&sys, &TimeGrid::symmetric(half, 0.01).unwrap()).unwrap();
        let r = window_projector(&cache).unwrap();
        assert_ne!(r.verdict, Verdict::Dichotomic, "T = {half}");
    }
}

#[test]
fn spectral_default_grid_constants() {
    let r = spectral_projector(&diag(&[-1.0, 1.0])).unwrap();
    let c = r.constants.unwrap();
    assert!((c.inverse_bound() - 2.0).abs() < 0.1, "{c:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn spectral_projection_invariants(a in 0.3f64..2.0, b in 0.3f64..2.0, c in -1.0f64..1.0) {
        let sys = LinearSystem::constant("tri", Matrix::from_row_slice(2, 2, &[-a, c, 0.0, b]));
        let r = spectral_projector(&sys).unwrap();
        let p = &r.p;
        prop_assert!(spectral_norm(&(p * p - p)) < 1e-10);
        let am = sys.constant_matrix().unwrap();
        prop_assert!(spectral_norm(&(am * p - p * am)) < 1e-10);
        prop_assert_eq!(r.verdict, Verdict::Dichotomic);
    }

    #[test]
    fn fitted_constants_pass_verification(a in 0.5f64..2.0, b in 0.5f64..2.0, c in -1.0f64..1.0) {
        let sys = LinearSystem::constant("tri", Matrix::from_row_slice(2, 2, &[-a, c, 0.0, b]));
        let cache = propagate(&sys, &TimeGrid::symmetric(8.0, 0.02).unwrap()).unwrap();
        let r = window_projector(&cache).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Dichotomic);
        prop_assert!(verify_dichotomy(&cache, &r, 1e-9).unwrap().passed);
    }
}
