//! One-step schemes on `[0, 1]` driven by shared [`CoarseDrivers`].
//!
//! The quasi-Milstein step is
//!
//! ```text
//! X_{k+1} = X_k + mu(X_k) h + sigma(X_k) dW_k
//!         + sum_{a,b} (partial sigma_b . sigma_a)(X_k) J_{ab}(k)
//! ```
//!
//! with `partial sigma_b` the column Jacobian off the diffusion's exceptional
//! set and zero on it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, DVectorView};

use crate::brownian::{CoarseDrivers, PathBundle};
use crate::coefficients::{Coefficients, Evaluation, SdeProblem};
use crate::error::{Error, Result};
use crate::transform::TransformedProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Milstein,
    TransformedMilstein,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
            Scheme::TransformedMilstein => "transformed_milstein",
        }
    }

    /// Run the scheme on `drivers`. The transformed scheme needs `transform`.
    pub fn simulate(
        self,
        problem: &SdeProblem,
        transform: Option<&TransformedProblem>,
        drivers: &CoarseDrivers,
    ) -> Result<Trajectory> {
        match self {
            Scheme::Euler => euler_path(problem, &problem.x0, drivers),
            Scheme::Milstein => milstein_path(problem, &problem.x0, drivers),
            Scheme::TransformedMilstein => {
                let tf = transform.ok_or_else(|| Error::Config("transformed_milstein needs a transform".into()))?;
                transformed_milstein_path(tf, drivers)
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euler" => Ok(Scheme::Euler),
            "milstein" => Ok(Scheme::Milstein),
            "transformed_milstein" => Ok(Scheme::TransformedMilstein),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// States of a scheme at the grid points `k / n`, row-major `(n + 1) x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(n: usize, dim: usize, states: Vec<f64>) -> Result<Self> {
        if states.len() != (n + 1) * dim {
            return Err(Error::DimensionMismatch { expected: (n + 1) * dim, got: states.len() });
        }
        Ok(Self { n, dim, states })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.n)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }
}

fn check_dims(dim: usize, x0: &DVector<f64>, drivers: &CoarseDrivers) -> Result<()> {
    for got in [x0.len(), drivers.dim()] {
        if got != dim {
            return Err(Error::DimensionMismatch { expected: dim, got });
        }
    }
    Ok(())
}

/// Add `sum_{a,b} (partial sigma_b sigma_a) J_ab` to `x`.
#[inline]
fn add_correction(ev: &Evaluation, iterated: &[f64], buf: &mut DVector<f64>, x: &mut DVector<f64>) {
    let d = x.len();
    for b in 0..d {
        // buf = sum_a sigma_a J_ab
        buf.fill(0.0);
        for a in 0..d {
            let jab = iterated[a * d + b];
            if jab != 0.0 {
                buf.axpy(jab, &ev.diffusion.column(a), 1.0);
            }
        }
        x.gemv(1.0, &ev.diffusion_derivatives[b], buf, 1.0);
    }
}

fn run<C: Coefficients + ?Sized>(
    coeffs: &C,
    x0: &DVector<f64>,
    drivers: &CoarseDrivers,
    correction: bool,
) -> Result<Trajectory> {
    let d = coeffs.dim();
    check_dims(d, x0, drivers)?;
    let n = drivers.n();
    let h = drivers.step();
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0.as_slice());
    let mut ev = Evaluation::new(d);
    let mut x = x0.clone();
    let mut next = DVector::zeros(d);
    let mut buf = DVector::zeros(d);
    for k in 0..n {
        coeffs.evaluate(&x, correction, &mut ev)?;
        let dw = DVectorView::from_slice(drivers.increment(k), d);
        next.copy_from(&x);
        next.axpy(h, &ev.drift, 1.0);
        next.gemv(1.0, &ev.diffusion, &dw, 1.0);
        if correction {
            add_correction(&ev, drivers.iterated(k), &mut buf, &mut next);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.extend_from_slice(next.as_slice());
        std::mem::swap(&mut x, &mut next);
    }
    Ok(Trajectory { n, dim: d, states })
}

/// Euler-Maruyama: `X_{k+1} = X_k + mu(X_k) / n + sigma(X_k) dW_k`.
pub fn euler_path<C: Coefficients + ?Sized>(
    coeffs: &C,
    x0: &DVector<f64>,
    drivers: &CoarseDrivers,
) -> Result<Trajectory> {
    run(coeffs, x0, drivers, false)
}

/// The quasi-Milstein scheme.
pub fn milstein_path<C: Coefficients + ?Sized>(
    coeffs: &C,
    x0: &DVector<f64>,
    drivers: &CoarseDrivers,
) -> Result<Trajectory> {
    run(coeffs, x0, drivers, true)
}

/// Milstein on the transformed SDE started at `G(x0)`, mapped back by
/// `G^-1` at every grid point.
pub fn transformed_milstein_path(tf: &TransformedProblem, drivers: &CoarseDrivers) -> Result<Trajectory> {
    let z = milstein_path(tf, &tf.transformed_x0()?, drivers)?;
    map_back(tf, &z)
}

/// Apply `G^-1` to every state of a transformed trajectory.
pub fn map_back(tf: &TransformedProblem, z: &Trajectory) -> Result<Trajectory> {
    let d = z.dim;
    let mut states = Vec::with_capacity(z.states.len());
    for row in z.states.chunks_exact(d) {
        let x = tf.g_inverse(&DVector::from_column_slice(row))?;
        states.extend_from_slice(x.as_slice());
    }
    Ok(Trajectory { n: z.n, dim: d, states })
}

/// The time-continuous scheme at every fine grid point of `bundle`,
/// row-major `(fine_n + 1) x d`. Within coarse step `k` the scheme is frozen
/// at its anchor `X_k` and driven by the partial increment and partial
/// iterated integrals accumulated from the fine path.
pub fn continuous_interpolation<C: Coefficients + ?Sized>(
    coeffs: &C,
    trajectory: &Trajectory,
    bundle: &PathBundle,
    correction: bool,
) -> Result<Vec<f64>> {
    let d = coeffs.dim();
    let n = trajectory.n;
    if bundle.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: bundle.dim() });
    }
    if !bundle.fine_n().is_multiple_of(n) {
        return Err(Error::NotDivisible { fine_n: bundle.fine_n(), n });
    }
    let ratio = bundle.fine_n() / n;
    let h_fine = 1.0 / bundle.fine_n() as f64;
    let mut out = Vec::with_capacity((bundle.fine_n() + 1) * d);
    out.extend_from_slice(trajectory.state(0));
    let mut ev = Evaluation::new(d);
    let mut partial = DVector::zeros(d);
    let mut iterated = vec![0.0; d * d];
    let mut buf = DVector::zeros(d);
    let mut x = DVector::zeros(d);
    for k in 0..n {
        let anchor = DVector::from_column_slice(trajectory.state(k));
        coeffs.evaluate(&anchor, correction, &mut ev)?;
        partial.fill(0.0);
        iterated.fill(0.0);
        for i in 0..ratio {
            let dw = bundle.increment(k * ratio + i);
            for a in 0..d {
                for b in (a + 1)..d {
                    iterated[a * d + b] += partial[a] * dw[b];
                }
            }
            for (p, w) in partial.iter_mut().zip(dw) {
                *p += w;
            }
            let elapsed = (i + 1) as f64 * h_fine;
            x.copy_from(&anchor);
            x.axpy(elapsed, &ev.drift, 1.0);
            x.gemv(1.0, &ev.diffusion, &partial, 1.0);
            if correction {
                crate::brownian::close_block(&mut iterated, partial.as_slice(), elapsed);
                add_correction(&ev, &iterated, &mut buf, &mut x);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: k * ratio + i + 1 });
            }
            out.extend_from_slice(x.as_slice());
        }
    }
    Ok(out)
}

/// [`continuous_interpolation`] of the transformed scheme, mapped back by
/// `G^-1` at every fine point.
pub fn transformed_interpolation(
    tf: &TransformedProblem,
    transformed: &Trajectory,
    bundle: &PathBundle,
) -> Result<Vec<f64>> {
    let z = continuous_interpolation(tf, transformed, bundle, true)?;
    let d = transformed.dim;
    let mut out = Vec::with_capacity(z.len());
    for row in z.chunks_exact(d) {
        out.extend_from_slice(tf.g_inverse(&DVector::from_column_slice(row))?.as_slice());
    }
    Ok(out)
}
