//! Sampled, advisory checks of the checkable parts of the coefficient
//! conditions. Sampling can flag a violation but never prove a condition.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SdeProblem;
use crate::geometry::HypersurfaceDescriptor;

/// Below this `|sigma^T n|` a surface point counts as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SampleSpec {
    /// Points per sampled set.
    pub count: usize,
    pub seed: u64,
    /// Half-width of the box around `x0` used for the growth estimate, and
    /// the patch radius for unbounded surfaces.
    pub extent: f64,
    /// Width of the neighbourhood of `theta` checked for boundedness.
    pub neighbourhood: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { count: 100, seed: 0, extent: 10.0, neighbourhood: 0.1 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConditionReport {
    /// Sampled `inf |sigma(x)^T n(x)|` over `theta`.
    pub inf_normal_sigma_theta: Option<f64>,
    /// The same over `delta`.
    pub inf_normal_sigma_delta: Option<f64>,
    /// Sampled `max (|mu(x)| + |sigma(x)|) / (1 + |x|)`.
    pub growth_constant: f64,
    /// Sampled sup of `|mu|` and `|sigma|` on the neighbourhood of `theta`.
    pub sup_mu_near_theta: Option<f64>,
    pub sup_sigma_near_theta: Option<f64>,
    pub violations: Vec<String>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_conditions(problem: &SdeProblem, spec: &SampleSpec) -> ConditionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = ConditionReport::default();
    let d = problem.dim();

    let mut normal_inf = |surface: &HypersurfaceDescriptor, label: &str, rng: &mut ChaCha8Rng| {
        if surface.is_empty() {
            return None;
        }
        let mut inf = f64::INFINITY;
        for y in surface.sample_surface(spec.count, problem.x0.as_slice(), spec.extent, rng) {
            let n = surface.normal_field(y.as_slice());
            let value = (problem.sigma.eval(&y).transpose() * n).norm();
            inf = inf.min(value);
        }
        if inf.is_nan() || inf <= DEGENERACY_TOL {
            report
                .violations
                .push(format!("diffusion degenerate in normal direction on {label}: inf |sigma^T n| = {inf:e}"));
        }
        Some(inf)
    };
    report.inf_normal_sigma_theta = normal_inf(&problem.theta, "theta", &mut rng);
    report.inf_normal_sigma_delta = normal_inf(&problem.delta, "delta", &mut rng);

    let mut growth: f64 = 0.0;
    for _ in 0..spec.count {
        let offset = DVector::from_fn(d, |_, _| rng.random_range(-spec.extent..=spec.extent));
        let x = &problem.x0 + offset;
        let value = problem.mu.eval(&x).norm() + problem.sigma.eval(&x).norm();
        growth = if value.is_finite() { growth.max(value / (1.0 + x.norm())) } else { f64::INFINITY };
    }
    if !growth.is_finite() {
        report.violations.push("coefficients not finite on the sampled box".into());
    }
    report.growth_constant = growth;

    if !problem.theta.is_empty() {
        let width = spec.neighbourhood.min(0.99 * problem.theta.reach());
        let mut sup_mu: f64 = 0.0;
        let mut sup_sigma: f64 = 0.0;
        let surface = problem.theta.sample_surface(spec.count, problem.x0.as_slice(), spec.extent, &mut rng);
        for y in surface {
            let n = problem.theta.normal_field(y.as_slice());
            let lambda = rng.random_range(-width..=width);
            let x = &y + n * lambda;
            sup_mu = sup_mu.max(problem.mu.eval(&x).norm());
            sup_sigma = sup_sigma.max(problem.sigma.eval(&x).norm());
        }
        if !(sup_mu.is_finite() && sup_sigma.is_finite()) {
            report.violations.push("coefficients unbounded near theta".into());
        }
        report.sup_mu_near_theta = Some(sup_mu);
        report.sup_sigma_near_theta = Some(sup_sigma);
    }
    report
}
