//! Sampled invariant checks of a transform, as run by `discosde validate`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TransformedProblem, PHI_GRADIENT_CONSTANT};
use crate::coefficients::check_commutativity;
use crate::error::Result;

#[derive(Debug, Clone, Default)]
pub struct InvariantReport {
    pub samples: usize,
    /// `max |Phi| / eps^2`, at most 1.
    pub phi_ratio: f64,
    /// `max |Phi'| / (112 eps)`, at most 1.
    pub grad_ratio: f64,
    /// Points on `theta` or outside the neighbourhood where `G != id` or
    /// `G' != I`.
    pub identity_failures: usize,
    /// Max relative deviation of `G'` from central differences of `G`.
    pub jacobian_rel_err: f64,
    pub round_trip_err: f64,
    /// Max `|sigma_G - sigma|` on `theta`.
    pub sigma_on_theta_err: f64,
    pub commutativity_residual: f64,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.phi_ratio <= 1.0
            && self.grad_ratio <= 1.0
            && self.identity_failures == 0
            && self.jacobian_rel_err <= 1e-5
            && self.round_trip_err <= 1e-9
            && self.sigma_on_theta_err <= 1e-9
            && self.commutativity_residual <= 1e-6
    }
}

fn fd_jacobian(tf: &TransformedProblem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = x.len();
    let h = 1e-6 * (1.0 + x.norm());
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        jac.set_column(k, &((tf.g_forward(&xp)? - tf.g_forward(&xm)?) / (2.0 * h)));
    }
    Ok(jac)
}

/// Runs every check on `count` points spread over the neighbourhood of
/// `theta`, the surface itself, and the identity region. Only sampled
/// commutativity is meaningful when the base diffusion is commutative.
pub fn check_invariants(tf: &TransformedProblem, count: usize, seed: u64) -> Result<InvariantReport> {
    let theta = tf.theta();
    let mut report = InvariantReport { samples: count, ..Default::default() };
    if theta.is_empty() {
        return Ok(report);
    }
    let eps = tf.epsilon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surface = theta.sample_surface(count, tf.base().x0.as_slice(), 10.0, &mut rng);
    let mut near = Vec::with_capacity(count);
    for y in &surface {
        let n = theta.normal_field(y.as_slice());
        let lambda = eps * rng.random_range(-1.0..1.0);
        let x = y + &n * lambda;
        let far = y + &n * (eps * rng.random_range(1.0..1.5_f64).min(0.99 * theta.reach() / eps));

        let phi = tf.capital_phi(&x)?;
        report.phi_ratio = report.phi_ratio.max(phi.abs() / (eps * eps));
        let grad = tf.capital_phi_grad(&x)?;
        report.grad_ratio = report.grad_ratio.max(grad.norm() / (PHI_GRADIENT_CONSTANT * eps));

        let jac = tf.g_jacobian(&x)?;
        let fd = fd_jacobian(tf, &x)?;
        report.jacobian_rel_err = report.jacobian_rel_err.max((&jac - fd).norm() / jac.norm());

        let back = tf.g_inverse(&tf.g_forward(&x)?)?;
        report.round_trip_err = report.round_trip_err.max((back - &x).norm());

        let d = x.len();
        for p in [y, &far] {
            if p == &far && theta.distance(far.as_slice()) < eps {
                continue;
            }
            if tf.g_forward(p)? != *p || tf.g_jacobian(p)? != DMatrix::identity(d, d) {
                report.identity_failures += 1;
            }
        }
        let sg = tf.sigma_g(y)?;
        report.sigma_on_theta_err = report.sigma_on_theta_err.max((sg - tf.base().sigma.eval(y)).norm());
        near.push(x);
    }
    let field = tf.sigma_g_field();
    let off_theta: Vec<_> = near.into_iter().filter(|x| !theta.contains(x.as_slice(), 1e-9)).collect();
    report.commutativity_residual = check_commutativity(&field, theta, &off_theta, 0.0).max_residual;
    Ok(report)
}
