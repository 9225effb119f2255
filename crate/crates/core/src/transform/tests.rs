use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::coefficients::{build_piecewise_drift, registry, VectorField};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn config(epsilon: f64) -> TransformConfig {
    TransformConfig { epsilon, newton_tol: 1e-12, newton_max_iter: 100, hessian_fd_step: 1e-6 }
}

fn circle_tf(eps: f64) -> TransformedProblem {
    TransformedProblem::with_config(registry::circle2d(), config(eps)).unwrap()
}

/// Drift `(-1, 0.5)` left of `x1 = 0` and `(1, -0.5)` right of it, unit
/// diffusion; `alpha = (-1, 0.5)` everywhere on the line.
fn hyperplane_problem() -> SdeProblem {
    let theta = HypersurfaceDescriptor::hyperplane(v(&[1.0, 0.0]), 0.0).unwrap();
    let drift = build_piecewise_drift(
        vec![Arc::new(|x: &DVector<f64>| x[0] < 0.0), Arc::new(|x: &DVector<f64>| x[0] > 0.0)],
        vec![VectorField::constant(v(&[-1.0, 0.5])), VectorField::constant(v(&[1.0, -0.5]))],
        VectorField::constant(v(&[1.0, -0.5])),
        theta.clone(),
    )
    .unwrap();
    SdeProblem::new(
        "line",
        v(&[0.0, 0.0]),
        drift.into_field(),
        MatrixField::constant(DMatrix::identity(2, 2)),
        theta,
        HypersurfaceDescriptor::empty(),
    )
    .unwrap()
}

/// `circle2d`'s geometry with a continuous drift.
fn continuous_problem() -> SdeProblem {
    let mut p = registry::circle2d();
    p.mu = VectorField::constant(v(&[0.3, -0.2]));
    p.mu_limits = None;
    p
}

fn random_near(tf: &TransformedProblem, rng: &mut ChaCha8Rng, width: f64) -> DVector<f64> {
    let theta = tf.theta();
    let y = &theta.sample_surface(1, tf.base().x0.as_slice(), 3.0, rng)[0];
    let n = theta.normal_field(y.as_slice());
    y + n * (width * rng.random_range(-1.0..1.0))
}

#[test]
fn bump_values() {
    assert_eq!(bump(0.0), 1.0);
    assert_eq!(bump(1.0), 0.0);
    assert_eq!(bump_deriv(1.0), 0.0);
    assert_eq!(bump(0.5), 0.2373046875);
    assert_eq!(bump(1.5), 0.0);
    assert_eq!(bump_deriv(-2.0), 0.0);
    let h = 1e-6;
    for x in [-0.9, -0.3, 0.2, 0.77] {
        assert!((bump_deriv(x) - (bump(x + h) - bump(x - h)) / (2.0 * h)).abs() < 1e-8);
    }
}

#[test]
fn capital_phi_closed_form() {
    let tf = circle_tf(0.1);
    // d = 0.05 on the plus side: d^2 bump(d / eps).
    let phi = tf.capital_phi(&v(&[0.0, 2.05])).unwrap();
    assert!((phi - 5.9326171875e-4).abs() < 1e-15, "{phi}");
    let inside = tf.capital_phi(&v(&[0.0, 1.95])).unwrap();
    assert!((inside + 5.9326171875e-4).abs() < 1e-15);
    assert_eq!(tf.capital_phi(&v(&[0.0, 2.0])).unwrap(), 0.0);
    assert_eq!(tf.capital_phi(&v(&[0.0, 2.1])).unwrap(), 0.0);
    assert_eq!(tf.capital_phi(&v(&[0.0, 0.0])).unwrap(), 0.0);
}

#[test]
fn capital_phi_gradient_bound_and_differences() {
    let eps = 0.1;
    let tf = circle_tf(eps);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let x = random_near(&tf, &mut rng, eps);
        let grad = tf.capital_phi_grad(&x).unwrap();
        assert!(grad.norm() <= 112.0 * eps);
        if tf.theta().distance(x.as_slice()) < 1e-4 {
            continue;
        }
        let h = 1e-7;
        for k in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (tf.capital_phi(&xp).unwrap() - tf.capital_phi(&xm).unwrap()) / (2.0 * h);
            assert!((grad[k] - fd).abs() <= 1e-6 * grad.norm().max(1e-3), "{} vs {fd}", grad[k]);
        }
    }
    assert_eq!(tf.capital_phi_grad(&v(&[0.0, 2.5])).unwrap(), RowDVector::zeros(2));
    assert_eq!(tf.capital_phi_grad(&v(&[0.0, 2.0])).unwrap(), RowDVector::zeros(2));
}

#[test]
fn alpha_examples() {
    let p = registry::circle2d();
    let a = alpha(&p, &v(&[0.0, 2.0]), 1e-9).unwrap();
    assert!((a - v(&[-0.125, -0.125])).norm() < 1e-15);
    // Without the stored limits the one-sided probes give the same value.
    let mut probed = registry::circle2d();
    probed.mu_limits = None;
    let b = alpha(&probed, &v(&[2f64.sqrt(), -(2f64.sqrt())]), 1e-9).unwrap();
    assert!((b - v(&[-0.125, -0.125])).norm() < 1e-12);

    let c = alpha(&continuous_problem(), &v(&[2.0, 0.0]), 1e-9).unwrap();
    assert_eq!(c, DVector::zeros(2));

    let mut degenerate = registry::circle2d();
    degenerate.sigma = MatrixField::constant(DMatrix::zeros(2, 2));
    assert!(matches!(alpha(&degenerate, &v(&[0.0, 2.0]), 1e-9), Err(Error::DegenerateDiffusion(_))));
}

#[test]
fn select_epsilon_examples() {
    let p = registry::circle2d();
    // Oracle: sup|alpha| 112 eps + eps^2 M < 1/2 with M = 0 for a constant alpha.
    let alpha_sup = 0.125 * 2f64.sqrt();
    assert!(alpha_sup * 112.0 * 0.25 > 0.5);
    let eps = select_epsilon(&p, Some(0.25)).unwrap();
    assert!(eps < 0.25);
    assert!(alpha_sup * 112.0 * eps < 0.5);
    assert!(alpha_sup * 112.0 * (2.0 * eps) >= 0.5, "not the largest grid value: {eps}");
    assert_eq!(eps, 2f64.powi(-6));

    assert_eq!(select_epsilon(&continuous_problem(), Some(0.3)).unwrap(), 0.3);
    assert_eq!(select_epsilon(&continuous_problem(), None).unwrap(), 1.0);
    assert_eq!(select_epsilon(&registry::gbm2d(), Some(0.7)).unwrap(), 0.7);

    let tf = TransformedProblem::new(p, TransformSettings::default()).unwrap();
    assert_eq!(tf.epsilon(), 2f64.powi(-6));
    assert!((tf.alpha_sup() - alpha_sup).abs() < 1e-12);
}

#[test]
fn identity_outside_and_on_theta() {
    let tf = circle_tf(0.1);
    let i2 = DMatrix::identity(2, 2);
    for x in [[0.0, 2.1], [3.0, 1.0], [0.0, 0.5], [0.0, 2.0], [2.0, 0.0]] {
        let x = v(&x);
        assert_eq!(tf.g_forward(&x).unwrap(), x);
        assert_eq!(tf.g_jacobian(&x).unwrap(), i2);
        assert!(tf.g_hessian_rows(&x).unwrap().iter().all(|r| r == &DMatrix::zeros(2, 2)));
        assert_eq!(tf.g_inverse(&x).unwrap(), x);
    }
}

#[test]
fn g_forward_composes_phi_and_alpha() {
    let tf = TransformedProblem::new(registry::circle2d(), TransformSettings::default()).unwrap();
    let eps = tf.epsilon();
    let x = v(&[0.0, 2.0 + eps / 2.0]);
    let expected = &x + v(&[-0.125, -0.125]) * ((eps / 2.0).powi(2) * bump(0.5));
    assert!((tf.g_forward(&x).unwrap() - expected).norm() < 1e-15);
}

#[test]
fn jacobian_matches_finite_differences() {
    let tf = circle_tf(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let x = random_near(&tf, &mut rng, 0.1);
        let jac = tf.g_jacobian(&x).unwrap();
        let h = 1e-6;
        let mut fd = DMatrix::zeros(2, 2);
        for k in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            fd.set_column(k, &((tf.g_forward(&xp).unwrap() - tf.g_forward(&xm).unwrap()) / (2.0 * h)));
        }
        assert!((&jac - &fd).norm() <= 1e-5 * jac.norm(), "{jac} vs {fd}");
    }
}

/// Second derivative of `t |t| (1 - t^2/eps^2)^5`.
fn psi_second(t: f64, eps: f64) -> f64 {
    let q = (t / eps).powi(2);
    if q >= 1.0 {
        return 0.0;
    }
    let value = (1.0 - q).powi(3) * (2.0 * (1.0 - q).powi(2) - 50.0 * q * (1.0 - q) + 80.0 * q * q);
    value * t.signum()
}

#[test]
fn hessian_matches_hyperplane_closed_form() {
    let eps = 0.05;
    let tf = TransformedProblem::with_config(hyperplane_problem(), config(eps)).unwrap();
    let alpha = v(&[-1.0, 0.5]);
    for t in [-0.04, -0.013, -1e-4, 3e-7, 0.002, 0.02, 0.049] {
        let x = v(&[t, 0.7]);
        let rows = tf.g_hessian_rows(&x).unwrap();
        let second = psi_second(t, eps);
        for (i, r) in rows.iter().enumerate() {
            let mut expected = DMatrix::zeros(2, 2);
            expected[(0, 0)] = alpha[i] * second;
            let err = (r - &expected).norm();
            assert!(err <= 1e-3 * expected.norm().max(1e-3), "t = {t}: {r} vs {expected}");
        }
    }
}

#[test]
fn inverse_round_trip() {
    let tf = TransformedProblem::new(registry::circle2d(), TransformSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let x = random_near(&tf, &mut rng, 1.5 * tf.epsilon());
        let back = tf.g_inverse(&tf.g_forward(&x).unwrap()).unwrap();
        assert!((back - &x).norm() <= 1e-9);
    }
}

#[test]
fn inverse_reports_failure() {
    let mut cfg = config(0.1);
    cfg.newton_max_iter = 0;
    let tf = TransformedProblem::with_config(registry::circle2d(), cfg).unwrap();
    let y = tf.g_forward(&v(&[0.0, 2.05])).unwrap();
    assert!(matches!(tf.g_inverse(&y), Err(Error::InverseDidNotConverge { .. })));
}

#[test]
fn transformed_coefficients() {
    let tf = TransformedProblem::new(registry::circle2d(), TransformSettings::default()).unwrap();
    let base = tf.base().clone();
    let on = v(&[2f64.sqrt(), 2f64.sqrt()]);
    assert!((tf.sigma_g(&on).unwrap() - base.sigma.eval(&on)).norm() < 1e-9);
    for y in [[0.0, 3.0], [0.5, 0.5]] {
        let y = v(&y);
        assert_eq!(tf.mu_g(&y).unwrap(), base.mu.eval(&y));
        assert_eq!(tf.sigma_g(&y).unwrap(), base.sigma.eval(&y));
    }
    let smooth = TransformedProblem::new(continuous_problem(), TransformSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let y = random_near(&smooth, &mut rng, 0.5);
        assert_eq!(smooth.g_forward(&y).unwrap(), y);
        assert_eq!(smooth.mu_g(&y).unwrap(), smooth.base().mu.eval(&y));
        assert_eq!(smooth.sigma_g(&y).unwrap(), smooth.base().sigma.eval(&y));
    }
}

#[test]
fn sigma_g_derivative_matches_differences() {
    let tf = TransformedProblem::new(registry::circle2d(), TransformSettings::default()).unwrap();
    let eps = tf.epsilon();
    let mut ev = Evaluation::new(2);
    for y in [[0.0, 2.0 + 0.4 * eps], [1.0, -(4.0f64 - 1.0).sqrt() + 0.3 * eps]] {
        let y = v(&y);
        tf.evaluate(&y, true, &mut ev).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut fd = DMatrix::zeros(2, 2);
            for l in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[l] += h;
                ym[l] -= h;
                let diff = (tf.sigma_g(&yp).unwrap() - tf.sigma_g(&ym).unwrap()) / (2.0 * h);
                fd.set_column(l, &diff.column(j));
            }
            let err = (&ev.diffusion_derivatives[j] - &fd).norm();
            assert!(err <= 1e-4 * fd.norm(), "{} vs {fd}", ev.diffusion_derivatives[j]);
        }
    }
}

#[test]
fn invariant_suite_passes_for_circle2d() {
    let tf = TransformedProblem::new(registry::circle2d(), TransformSettings::default()).unwrap();
    let report = check_invariants(&tf, 300, 4).unwrap();
    assert!(report.passed(), "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn phi_bounded_by_eps_squared(r in 0.0..4.0f64, angle in 0.0..6.3f64) {
        let eps = 0.1;
        let tf = circle_tf(eps);
        let x = v(&[r * angle.cos(), r * angle.sin()]);
        prop_assert!(tf.capital_phi(&x).unwrap().abs() <= eps * eps);
        prop_assert!(tf.capital_phi_grad(&x).unwrap().norm() <= 112.0 * eps);
    }
}
