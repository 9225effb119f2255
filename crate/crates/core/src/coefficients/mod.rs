//! Drift and diffusion coefficients with exceptional-set-aware derivatives.
//!
//! Fields are closures behind `Arc`, so problems are cheap to clone and can be
//! shared across worker threads. Derivatives follow the quasi-Milstein
//! convention: on the exceptional set they are the zero matrix.

mod piecewise;
pub mod registry;
mod validate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{HypersurfaceDescriptor, Side};

pub use piecewise::{build_piecewise_drift, PiecewiseDrift, Region};
pub use validate::{validate_conditions, ConditionReport, SampleSpec};

/// Relative tolerance deciding that a point lies on an exceptional set.
pub const EXCEPTIONAL_TOL: f64 = 1e-12;

pub type EvalFn = dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync;
pub type MatrixFn = dyn Fn(&DVector<f64>, &mut DMatrix<f64>) + Send + Sync;
pub type ColumnJacobianFn = dyn Fn(usize, &DVector<f64>, &mut DMatrix<f64>) + Send + Sync;

/// A map `R^d -> R^d` with an optional closed-form Jacobian valid off the
/// exceptional set.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<MatrixFn>>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField").field("dim", &self.dim).field("jacobian", &self.jacobian.is_some()).finish()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync + 'static,
    {
        Self { dim, eval: Arc::new(eval), jacobian: None }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>, &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn constant(value: DVector<f64>) -> Self {
        let dim = value.len();
        Self::new(dim, move |_, out| out.copy_from(&value)).with_jacobian(|_, out| out.fill(0.0))
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(DVector::zeros(dim))
    }

    /// `x -> offset + a x`.
    pub fn affine(a: DMatrix<f64>, offset: DVector<f64>) -> Self {
        let dim = offset.len();
        let jac = a.clone();
        Self::new(dim, move |x, out| {
            out.copy_from(&offset);
            out.gemv(1.0, &a, x, 1.0);
        })
        .with_jacobian(move |_, out| out.copy_from(&jac))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    #[inline]
    pub fn eval_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(x, &mut out);
        out
    }

    /// Closed-form Jacobian; returns `false` when none was supplied.
    #[inline]
    pub fn jacobian_into(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) -> bool {
        match &self.jacobian {
            Some(j) => {
                j(x, out);
                true
            }
            None => false,
        }
    }
}

/// A map `R^d -> R^{d x d}`; column `j` is the coefficient of `dW_j`.
#[derive(Clone)]
pub struct MatrixField {
    dim: usize,
    eval: Arc<MatrixFn>,
    column_jacobian: Option<Arc<ColumnJacobianFn>>,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixField")
            .field("dim", &self.dim)
            .field("column_jacobian", &self.column_jacobian.is_some())
            .finish()
    }
}

impl MatrixField {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>, &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        Self { dim, eval: Arc::new(eval), column_jacobian: None }
    }

    pub fn with_column_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(usize, &DVector<f64>, &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        self.column_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn constant(value: DMatrix<f64>) -> Self {
        let dim = value.nrows();
        Self::new(dim, move |_, out| out.copy_from(&value)).with_column_jacobian(|_, _, out| out.fill(0.0))
    }

    /// Column `j` is `offsets[j] + linear[j] x`.
    pub fn affine_columns(offsets: Vec<DVector<f64>>, linear: Vec<DMatrix<f64>>) -> Self {
        let dim = offsets.len();
        assert_eq!(linear.len(), dim, "one linear part per column");
        let jac = linear.clone();
        Self::new(dim, move |x, out| {
            for (j, (b, a)) in offsets.iter().zip(&linear).enumerate() {
                let mut col = out.column_mut(j);
                col.copy_from(b);
                col.gemv(1.0, a, x, 1.0);
            }
        })
        .with_column_jacobian(move |j, _, out| out.copy_from(&jac[j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_column_jacobian(&self) -> bool {
        self.column_jacobian.is_some()
    }

    #[inline]
    pub fn eval_into(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        self.eval_into(x, &mut out);
        out
    }

    #[inline]
    pub fn column_jacobian_into(&self, j: usize, x: &DVector<f64>, out: &mut DMatrix<f64>) -> bool {
        match &self.column_jacobian {
            Some(f) => {
                f(j, x, out);
                true
            }
            None => false,
        }
    }
}

/// One-sided drift limits on `theta`: `(minus side, plus side)`.
#[derive(Clone)]
pub struct DriftLimits {
    pub minus: Arc<EvalFn>,
    pub plus: Arc<EvalFn>,
}

/// An autonomous SDE `dX = mu(X) dt + sigma(X) dW` on `[0, 1]`.
#[derive(Clone)]
pub struct SdeProblem {
    pub name: String,
    pub x0: DVector<f64>,
    pub mu: VectorField,
    pub sigma: MatrixField,
    /// Exceptional set of the drift.
    pub theta: HypersurfaceDescriptor,
    /// Exceptional set of the diffusion.
    pub delta: HypersurfaceDescriptor,
    pub mu_limits: Option<DriftLimits>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("name", &self.name)
            .field("x0", &self.x0.as_slice())
            .field("theta", &self.theta)
            .field("delta", &self.delta)
            .finish()
    }
}

impl SdeProblem {
    pub fn new(
        name: impl Into<String>,
        x0: DVector<f64>,
        mu: VectorField,
        sigma: MatrixField,
        theta: HypersurfaceDescriptor,
        delta: HypersurfaceDescriptor,
    ) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        for got in [mu.dim(), sigma.dim()] {
            if got != d {
                return Err(Error::DimensionMismatch { expected: d, got });
            }
        }
        for surface in [&theta, &delta] {
            if let Some(got) = surface.dim() {
                if got != d {
                    return Err(Error::DimensionMismatch { expected: d, got });
                }
            }
        }
        if delta.is_empty() && !sigma.has_column_jacobian() {
            return Err(Error::InvalidProblem(
                "diffusion without exceptional set needs a global column Jacobian".into(),
            ));
        }
        Ok(Self { name: name.into(), x0, mu, sigma, theta, delta, mu_limits: None })
    }

    pub fn with_mu_limits(mut self, limits: DriftLimits) -> Self {
        self.mu_limits = Some(limits);
        self
    }

    pub fn with_x0(mut self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x0.len() });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `mu'(x)` off `theta`, the zero matrix on it.
    pub fn partial_drift(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        if self.theta.contains(x.as_slice(), EXCEPTIONAL_TOL) {
            return out;
        }
        if !self.mu.jacobian_into(x, &mut out) {
            let f = |p: &DVector<f64>, o: &mut DVector<f64>| self.mu.eval_into(p, o);
            out = finite_difference_jacobian(&f, x, &self.theta);
        }
        out
    }

    /// `sigma_j'(x)` off `delta`, the zero matrix on it. `j` is zero-based.
    pub fn partial_diffusion_column(&self, j: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        if !self.delta.contains(x.as_slice(), EXCEPTIONAL_TOL) {
            self.diffusion_column_derivative(j, x, &mut out);
        }
        out
    }

    fn diffusion_column_derivative(&self, j: usize, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        if !self.sigma.column_jacobian_into(j, x, out) {
            let sigma = &self.sigma;
            let f = |p: &DVector<f64>, o: &mut DVector<f64>| {
                let m = sigma.eval(p);
                o.copy_from(&m.column(j));
            };
            out.copy_from(&finite_difference_jacobian(&f, x, &self.delta));
        }
    }
}

/// Buffers for one coefficient evaluation at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub drift: DVector<f64>,
    pub diffusion: DMatrix<f64>,
    /// `partial sigma_j` per column, zero on the diffusion's exceptional set.
    pub diffusion_derivatives: Vec<DMatrix<f64>>,
}

impl Evaluation {
    pub fn new(d: usize) -> Self {
        Self {
            drift: DVector::zeros(d),
            diffusion: DMatrix::zeros(d, d),
            diffusion_derivatives: vec![DMatrix::zeros(d, d); d],
        }
    }
}

/// Anything a one-step scheme can evaluate: an SDE problem or its
/// transformed counterpart.
pub trait Coefficients: Sync {
    fn dim(&self) -> usize;

    /// Fill `out` at `x`; derivatives only when `with_derivatives` is set.
    fn evaluate(&self, x: &DVector<f64>, with_derivatives: bool, out: &mut Evaluation) -> Result<()>;
}

impl Coefficients for SdeProblem {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    #[inline]
    fn evaluate(&self, x: &DVector<f64>, with_derivatives: bool, out: &mut Evaluation) -> Result<()> {
        self.mu.eval_into(x, &mut out.drift);
        self.sigma.eval_into(x, &mut out.diffusion);
        if with_derivatives {
            let on_delta = self.delta.contains(x.as_slice(), EXCEPTIONAL_TOL);
            for (j, m) in out.diffusion_derivatives.iter_mut().enumerate() {
                if on_delta {
                    m.fill(0.0);
                } else {
                    self.diffusion_column_derivative(j, x, m);
                }
            }
        }
        Ok(())
    }
}

/// Central differences with step `1e-6 (1 + |x|)`, switching to a one-sided
/// stencil on `x`'s side whenever a stencil point would cross `surface`.
pub fn finite_difference_jacobian(
    f: &dyn Fn(&DVector<f64>, &mut DVector<f64>),
    x: &DVector<f64>,
    surface: &HypersurfaceDescriptor,
) -> DMatrix<f64> {
    let d = x.len();
    let h = 1e-6 * (1.0 + x.norm());
    let side_of = |p: &DVector<f64>| surface.side(p.as_slice(), 0.0).unwrap_or(Side::On);
    let here = side_of(x);
    let mut jac = DMatrix::zeros(d, d);
    let (mut fp, mut fm, mut f0) = (DVector::zeros(d), DVector::zeros(d), DVector::zeros(d));
    let mut f0_ready = false;
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let plus_ok = side_of(&xp) == here;
        let minus_ok = side_of(&xm) == here;
        let col = if plus_ok && minus_ok {
            f(&xp, &mut fp);
            f(&xm, &mut fm);
            (&fp - &fm) / (2.0 * h)
        } else {
            if !f0_ready {
                f(x, &mut f0);
                f0_ready = true;
            }
            if plus_ok {
                f(&xp, &mut fp);
                (&fp - &f0) / h
            } else {
                f(&xm, &mut fm);
                (&f0 - &fm) / h
            }
        };
        jac.set_column(k, &col);
    }
    jac
}

/// Outcome of a sampled commutativity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutativityReport {
    pub commutative: bool,
    pub max_residual: f64,
}

/// Max over samples and column pairs of `|sigma_a' sigma_b - sigma_b' sigma_a|`.
pub fn check_commutativity(
    sigma: &MatrixField,
    delta: &HypersurfaceDescriptor,
    samples: &[DVector<f64>],
    tol: f64,
) -> CommutativityReport {
    let d = sigma.dim();
    let mut max_residual: f64 = 0.0;
    let mut jacs = vec![DMatrix::zeros(d, d); d];
    for x in samples {
        if delta.contains(x.as_slice(), EXCEPTIONAL_TOL) {
            continue;
        }
        let s = sigma.eval(x);
        for (j, m) in jacs.iter_mut().enumerate() {
            if !sigma.column_jacobian_into(j, x, m) {
                let f = |p: &DVector<f64>, o: &mut DVector<f64>| o.copy_from(&sigma.eval(p).column(j));
                m.copy_from(&finite_difference_jacobian(&f, x, delta));
            }
        }
        for a in 0..d {
            for b in (a + 1)..d {
                let r = &jacs[a] * s.column(b) - &jacs[b] * s.column(a);
                let norm = r.norm();
                max_residual = if norm.is_nan() { f64::NAN } else { max_residual.max(norm) };
            }
        }
    }
    CommutativityReport { commutative: max_residual <= tol, max_residual }
}
