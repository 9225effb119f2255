//! The drift-removing transformation `G(x) = x + Phi(x) alpha(pr(x))`.
//!
//! `Phi` is a signed, squared distance to `theta` cut off smoothly at
//! distance `epsilon` by the bump `(1 - t^2)^5`, and `alpha` is the drift jump
//! across `theta` scaled by `2 |sigma^T n|^2`. `G` is the identity on `theta`
//! and outside the `epsilon`-neighbourhood; its first derivative is the
//! identity there as well. The transformed SDE has coefficients
//!
//! ```text
//! sigma_G = (G' sigma) o G^-1
//! mu_G    = (G' mu + 1/2 (tr(R_i sigma sigma^T))_i) o G^-1
//! ```
//!
//! where `R_i` is the Hessian of `G_i` off `theta`, extended by zero onto it.

mod invariants;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{Coefficients, Evaluation, MatrixField, SdeProblem, EXCEPTIONAL_TOL};
use crate::error::{Error, Result};
use crate::geometry::{HypersurfaceDescriptor, Side};

pub use invariants::{check_invariants, InvariantReport};

/// Uniform bound on `|f'|` over `[0, eps^2]` for `f(u) = u (1 - u/eps^2)^5`,
/// giving `|Phi'| <= 112 eps`.
pub const PHI_GRADIENT_CONSTANT: f64 = 112.0;

/// `|G' - I|` must stay below this on the samples for an epsilon to pass.
const INVERTIBILITY_MARGIN: f64 = 0.5;

const SURFACE_SAMPLES: usize = 256;
const SAMPLE_SEED: u64 = 0x5eed;
const GRID_DEPTH: i32 = 60;
/// Below this `|sigma^T n|` the jump field is undefined.
const DEGENERACY_TOL: f64 = 1e-9;

/// `(1 - x^2)^5` on `[-1, 1]`, zero elsewhere.
pub fn bump(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (1.0 - x * x).powi(5)
    } else {
        0.0
    }
}

pub fn bump_deriv(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        -10.0 * x * (1.0 - x * x).powi(4)
    } else {
        0.0
    }
}

/// Derivative of `u -> u (1 - u/eps^2)^5`.
fn cutoff_deriv(u: f64, eps: f64) -> f64 {
    let q = u / (eps * eps);
    (1.0 - q).powi(4) * (1.0 - 6.0 * q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSettings {
    /// Requested epsilon; auto-selected when `None` or inadmissible.
    pub epsilon: Option<f64>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub hessian_fd_step: f64,
}

impl Default for TransformSettings {
    fn default() -> Self {
        Self { epsilon: None, newton_tol: 1e-12, newton_max_iter: 100, hessian_fd_step: 1e-6 }
    }
}

/// Resolved transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub epsilon: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub hessian_fd_step: f64,
}

/// `alpha(y) = (mu^-(y) - mu^+(y)) / (2 |sigma(y)^T n(y)|^2)` at a point of
/// `theta`. One-sided limits come from `problem.mu_limits` when present,
/// otherwise from `mu(y -+ probe n(y))`.
pub fn alpha(problem: &SdeProblem, y: &DVector<f64>, probe: f64) -> Result<DVector<f64>> {
    let theta = &problem.theta;
    let n = theta.unit_normal(y.as_slice())?;
    alpha_with_normal(problem, y, &n, probe)
}

fn alpha_with_normal(problem: &SdeProblem, y: &DVector<f64>, n: &DVector<f64>, probe: f64) -> Result<DVector<f64>> {
    let sigma_n = problem.sigma.eval(y).tr_mul(n);
    let norm = sigma_n.norm();
    if norm.is_nan() || norm < DEGENERACY_TOL {
        return Err(Error::DegenerateDiffusion(norm));
    }
    let d = problem.dim();
    let mut minus = DVector::zeros(d);
    let mut plus = DVector::zeros(d);
    match &problem.mu_limits {
        Some(limits) => {
            (limits.minus)(y, &mut minus);
            (limits.plus)(y, &mut plus);
        }
        None => {
            problem.mu.eval_into(&(y - n * probe), &mut minus);
            problem.mu.eval_into(&(y + n * probe), &mut plus);
        }
    }
    Ok((minus - plus) / (2.0 * norm * norm))
}

/// The jump field and its extension `alpha o pr` near `theta`.
struct JumpField<'a> {
    problem: &'a SdeProblem,
    probe: f64,
}

impl JumpField<'_> {
    fn theta(&self) -> &HypersurfaceDescriptor {
        &self.problem.theta
    }

    /// `alpha(pr(x))`.
    fn at_projection(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.theta().project(x.as_slice())?;
        let n = self.theta().normal_field(y.as_slice());
        alpha_with_normal(self.problem, &y, &n, self.probe)
    }

    /// `(alpha o pr)'(x) = (alpha o pr)'(pr(x)) pr'(x)`, using the closed-form
    /// projection Jacobian and central differences of `alpha o pr` at the
    /// surface point.
    fn composite_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let theta = self.theta();
        let y = theta.project(x.as_slice())?;
        let d = x.len();
        let h = (1e-5 * (1.0 + y.norm())).min(0.25 * theta.reach());
        let mut at_surface = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += h;
            ym[k] -= h;
            let col = (self.at_projection(&yp)? - self.at_projection(&ym)?) / (2.0 * h);
            at_surface.set_column(k, &col);
        }
        Ok(at_surface * theta.projection_jacobian(x.as_slice())?)
    }
}

/// Sampled `sup |alpha|` over `theta`.
fn sampled_alpha_sup(problem: &SdeProblem, probe: f64) -> Result<f64> {
    let theta = &problem.theta;
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let field = JumpField { problem, probe };
    let mut sup: f64 = 0.0;
    for y in theta.sample_surface(SURFACE_SAMPLES, problem.x0.as_slice(), 10.0, &mut rng) {
        sup = sup.max(field.at_projection(&y)?.norm());
    }
    Ok(sup)
}

/// Sampled bound on `|(alpha o pr)'|` over the `eps`-neighbourhood.
fn sampled_alpha_slope(problem: &SdeProblem, eps: f64) -> Result<f64> {
    let theta = &problem.theta;
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED + 1);
    let field = JumpField { problem, probe: probe_step(eps) };
    let mut sup: f64 = 0.0;
    for y in theta.sample_surface(SURFACE_SAMPLES / 4, problem.x0.as_slice(), 10.0, &mut rng) {
        let n = theta.normal_field(y.as_slice());
        for lambda in [-0.9 * eps, 0.0, 0.9 * eps] {
            let x = &y + &n * lambda;
            sup = sup.max(field.composite_jacobian(&x)?.norm());
        }
    }
    Ok(sup)
}

fn probe_step(eps: f64) -> f64 {
    eps * 2f64.powi(-20)
}

/// Sufficient invertibility test `sup|alpha| 112 eps + eps^2 M < 1/2`.
fn epsilon_admissible(problem: &SdeProblem, eps: f64, alpha_sup: f64) -> Result<bool> {
    if !(eps > 0.0 && eps < problem.theta.reach()) {
        return Ok(false);
    }
    let slope = sampled_alpha_slope(problem, eps)?;
    Ok(alpha_sup * PHI_GRADIENT_CONSTANT * eps + eps * eps * slope < INVERTIBILITY_MARGIN)
}

fn grid_start(theta: &HypersurfaceDescriptor) -> f64 {
    let reach = theta.reach();
    if reach.is_finite() {
        reach / 2.0
    } else {
        1.0
    }
}

/// Choose the transform's epsilon: `requested` if it passes the sufficient
/// invertibility test, otherwise the largest admissible value on the grid
/// `start * 2^-k`.
pub fn select_epsilon(problem: &SdeProblem, requested: Option<f64>) -> Result<f64> {
    let theta = &problem.theta;
    if theta.is_empty() {
        return Ok(requested.unwrap_or(1.0));
    }
    let start = grid_start(theta);
    let alpha_sup = sampled_alpha_sup(problem, probe_step(requested.unwrap_or(start)))?;
    if let Some(eps) = requested {
        if epsilon_admissible(problem, eps, alpha_sup)? {
            return Ok(eps);
        }
    }
    for k in 0..GRID_DEPTH {
        let eps = start * 2f64.powi(-k);
        if epsilon_admissible(problem, eps, alpha_sup)? {
            return Ok(eps);
        }
    }
    Err(Error::NoValidEpsilon { alpha_sup })
}

/// An SDE problem together with its transformation.
#[derive(Debug, Clone)]
pub struct TransformedProblem {
    base: SdeProblem,
    config: TransformConfig,
    alpha_sup: f64,
}

impl TransformedProblem {
    pub fn new(base: SdeProblem, settings: TransformSettings) -> Result<Self> {
        let epsilon = select_epsilon(&base, settings.epsilon)?;
        let config = TransformConfig {
            epsilon,
            newton_tol: settings.newton_tol,
            newton_max_iter: settings.newton_max_iter,
            hessian_fd_step: settings.hessian_fd_step,
        };
        let alpha_sup = if base.theta.is_empty() { 0.0 } else { sampled_alpha_sup(&base, probe_step(epsilon))? };
        Ok(Self { base, config, alpha_sup })
    }

    /// Use `config` as given, skipping the invertibility test. Only the
    /// requirement `epsilon < reach(theta)` is enforced.
    pub fn with_config(base: SdeProblem, config: TransformConfig) -> Result<Self> {
        if !(config.epsilon > 0.0 && config.epsilon < base.theta.reach()) {
            return Err(Error::NotUniquelyProjectable { distance: config.epsilon, reach: base.theta.reach() });
        }
        let alpha_sup = if base.theta.is_empty() { 0.0 } else { sampled_alpha_sup(&base, probe_step(config.epsilon))? };
        Ok(Self { base, config, alpha_sup })
    }

    pub fn base(&self) -> &SdeProblem {
        &self.base
    }

    pub fn config(&self) -> &TransformConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    pub fn alpha_sup(&self) -> f64 {
        self.alpha_sup
    }

    pub fn theta(&self) -> &HypersurfaceDescriptor {
        &self.base.theta
    }

    fn jump(&self) -> JumpField<'_> {
        JumpField { problem: &self.base, probe: probe_step(self.config.epsilon) }
    }

    /// Whether `G` is the identity near `x`: empty `theta` or `d(x) >= eps`.
    fn in_identity_region(&self, x: &DVector<f64>) -> bool {
        self.theta().is_empty() || self.theta().distance(x.as_slice()) >= self.config.epsilon
    }

    fn on_theta(&self, x: &DVector<f64>) -> bool {
        self.theta().contains(x.as_slice(), EXCEPTIONAL_TOL)
    }

    /// `alpha` at a point of `theta`.
    pub fn alpha_at(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        alpha(&self.base, y, probe_step(self.config.epsilon))
    }

    /// `Phi_eps(x) = n(pr x)^T (x - pr x) |x - pr x| bump(|x - pr x| / eps)`.
    pub fn capital_phi(&self, x: &DVector<f64>) -> Result<f64> {
        if self.in_identity_region(x) {
            return Ok(0.0);
        }
        let y = self.theta().project(x.as_slice())?;
        let offset = x - &y;
        let dist = offset.norm();
        if dist == 0.0 {
            return Ok(0.0);
        }
        let n = self.theta().normal_field(y.as_slice());
        Ok(n.dot(&offset) * dist * bump(dist / self.config.epsilon))
    }

    /// `Phi_eps'(x) = s f'(d^2) 2 (x - pr x)^T`; the zero row on `theta` and
    /// outside the neighbourhood.
    pub fn capital_phi_grad(&self, x: &DVector<f64>) -> Result<RowDVector<f64>> {
        let d = x.len();
        if self.in_identity_region(x) {
            return Ok(RowDVector::zeros(d));
        }
        let s = self.theta().side(x.as_slice(), 0.0)?;
        if s == Side::On {
            return Ok(RowDVector::zeros(d));
        }
        let y = self.theta().project(x.as_slice())?;
        let offset = x - y;
        let u = offset.norm_squared();
        Ok(offset.transpose() * (2.0 * s.sign() * cutoff_deriv(u, self.config.epsilon)))
    }

    pub fn g_forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.in_identity_region(x) {
            return Ok(x.clone());
        }
        let phi = self.capital_phi(x)?;
        if phi == 0.0 {
            return Ok(x.clone());
        }
        Ok(x + self.jump().at_projection(x)? * phi)
    }

    /// `G'(x) = I + alpha(pr x) Phi'(x) + Phi(x) (alpha o pr)'(x)`.
    pub fn g_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = x.len();
        let mut jac = DMatrix::identity(d, d);
        if self.in_identity_region(x) || self.on_theta(x) {
            return Ok(jac);
        }
        let jump = self.jump();
        let grad = self.capital_phi_grad(x)?;
        let a = jump.at_projection(x)?;
        jac += &a * &grad;
        let phi = self.capital_phi(x)?;
        if phi != 0.0 {
            jac += jump.composite_jacobian(x)? * phi;
        }
        Ok(jac)
    }

    /// Second derivatives `R_i` of the components of `G`, by central
    /// differences of `G'` with the stencil kept on one side of `theta`;
    /// zero on `theta` and outside the neighbourhood. Symmetrized.
    pub fn g_hessian_rows(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let d = x.len();
        let mut rows = vec![DMatrix::zeros(d, d); d];
        if self.in_identity_region(x) || self.on_theta(x) {
            return Ok(rows);
        }
        let h = self.config.hessian_fd_step * (1.0 + x.norm());
        let theta = self.theta();
        let dist = theta.distance(x.as_slice());
        let center = if dist < 2.0 * h {
            let s = theta.side(x.as_slice(), 0.0)?.sign();
            let n = theta.normal_field(theta.project(x.as_slice())?.as_slice());
            x + n * (s * (2.0 * h - dist))
        } else {
            x.clone()
        };
        for l in 0..d {
            let mut xp = center.clone();
            let mut xm = center.clone();
            xp[l] += h;
            xm[l] -= h;
            let diff = (self.g_jacobian(&xp)? - self.g_jacobian(&xm)?) / (2.0 * h);
            for (i, r) in rows.iter_mut().enumerate() {
                for k in 0..d {
                    r[(k, l)] = diff[(i, k)];
                }
            }
        }
        for r in rows.iter_mut() {
            let sym = (&*r + r.transpose()) * 0.5;
            *r = sym;
        }
        Ok(rows)
    }

    /// Damped Newton inversion of `G` started at `y`.
    pub fn g_inverse(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if self.in_identity_region(y) || self.on_theta(y) {
            return Ok(y.clone());
        }
        let tol = self.config.newton_tol * (1.0 + y.norm());
        let mut x = y.clone();
        let mut residual = self.g_forward(&x)? - y;
        let mut best = residual.norm();
        for _ in 0..self.config.newton_max_iter {
            if best <= tol {
                return Ok(x);
            }
            let jac = self.g_jacobian(&x)?;
            let step = jac.lu().solve(&residual).ok_or(Error::InverseDidNotConverge { residual: best })?;
            let mut damping = 1.0;
            loop {
                let candidate = &x - &step * damping;
                let r = self.g_forward(&candidate)? - y;
                let norm = r.norm();
                if norm < best || damping < 1e-6 {
                    x = candidate;
                    residual = r;
                    best = best.min(norm);
                    break;
                }
                damping *= 0.5;
            }
        }
        if best <= tol {
            Ok(x)
        } else {
            Err(Error::InverseDidNotConverge { residual: best })
        }
    }

    /// `G(x0)`, the start of the transformed SDE.
    pub fn transformed_x0(&self) -> Result<DVector<f64>> {
        self.g_forward(&self.base.x0)
    }

    pub fn mu_g(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ev = Evaluation::new(self.base.dim());
        self.evaluate(y, false, &mut ev)?;
        Ok(ev.drift)
    }

    pub fn sigma_g(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = self.g_inverse(y)?;
        Ok(self.g_jacobian(&x)? * self.base.sigma.eval(&x))
    }

    /// `sigma_G` as a plain field, for sampled checks. Failed inversions
    /// evaluate to NaN.
    pub fn sigma_g_field(&self) -> MatrixField {
        let d = self.base.dim();
        let me = self.clone();
        let jac_me = self.clone();
        MatrixField::new(d, move |y, out| match me.sigma_g(y) {
            Ok(m) => out.copy_from(&m),
            Err(_) => out.fill(f64::NAN),
        })
        .with_column_jacobian(move |j, y, out| {
            let mut ev = Evaluation::new(d);
            match jac_me.evaluate(y, true, &mut ev) {
                Ok(()) => out.copy_from(&ev.diffusion_derivatives[j]),
                Err(_) => out.fill(f64::NAN),
            }
        })
    }
}

impl Coefficients for TransformedProblem {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Evaluates `mu_G`, `sigma_G` and, off `theta`,
    /// `(sigma_G)_j' = [ (R_i sigma_j)^T ; G' sigma_j' ] (G')^-1` at `G^-1(y)`.
    fn evaluate(&self, y: &DVector<f64>, with_derivatives: bool, out: &mut Evaluation) -> Result<()> {
        let d = self.base.dim();
        // A drift without a jump gives G = id, and the base problem is
        // used unchanged.
        if self.theta().is_empty() || self.alpha_sup == 0.0 {
            return self.base.evaluate(y, with_derivatives, out);
        }
        let x = self.g_inverse(y)?;
        let mut base = Evaluation::new(d);
        self.base.evaluate(&x, with_derivatives, &mut base)?;
        let gp = self.g_jacobian(&x)?;
        let hessians = self.g_hessian_rows(&x)?;

        out.diffusion.gemm(1.0, &gp, &base.diffusion, 0.0);
        out.drift.gemv(1.0, &gp, &base.drift, 0.0);
        let cov = &base.diffusion * base.diffusion.transpose();
        for (i, r) in hessians.iter().enumerate() {
            out.drift[i] += 0.5 * r.component_mul(&cov).sum();
        }

        if with_derivatives {
            if self.on_theta(y) {
                for m in out.diffusion_derivatives.iter_mut() {
                    m.fill(0.0);
                }
                return Ok(());
            }
            let gp_inv = gp.clone().try_inverse().ok_or(Error::InverseDidNotConverge { residual: f64::NAN })?;
            for j in 0..d {
                let col = base.diffusion.column(j);
                let mut m = &gp * &base.diffusion_derivatives[j];
                for (i, r) in hessians.iter().enumerate() {
                    let row = r * col;
                    for l in 0..d {
                        m[(i, l)] += row[l];
                    }
                }
                out.diffusion_derivatives[j] = m * &gp_inv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
