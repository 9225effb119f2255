//! Built-in problems, addressable by name from experiment configs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{build_piecewise_drift, DriftLimits, MatrixField, SdeProblem, VectorField};
use crate::error::{Error, Result};
use crate::geometry::HypersurfaceDescriptor;

pub const NAMES: &[&str] = &["circle2d", "gbm2d"];

pub fn by_name(name: &str) -> Result<SdeProblem> {
    match name {
        "circle2d" => Ok(circle2d()),
        "gbm2d" => Ok(gbm2d()),
        other => Err(Error::Config(format!("unknown problem '{other}', expected one of {NAMES:?}"))),
    }
}

/// Drift `-(1,1)` inside the circle of radius 2 and `(1,1)` on and outside
/// it; both diffusion columns equal `x`. Starts on the circle at `(0, 2)`.
pub fn circle2d() -> SdeProblem {
    let theta = HypersurfaceDescriptor::sphere(DVector::zeros(2), 2.0).expect("valid circle");
    let inside = DVector::from_vec(vec![-1.0, -1.0]);
    let outside = DVector::from_vec(vec![1.0, 1.0]);
    let drift = build_piecewise_drift(
        vec![Arc::new(|x: &DVector<f64>| x.norm() < 2.0), Arc::new(|x: &DVector<f64>| x.norm() > 2.0)],
        vec![VectorField::constant(inside.clone()), VectorField::constant(outside.clone())],
        VectorField::constant(outside.clone()),
        theta.clone(),
    )
    .expect("valid partition");
    let sigma = MatrixField::affine_columns(
        vec![DVector::zeros(2), DVector::zeros(2)],
        vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
    );
    let limits = DriftLimits {
        minus: Arc::new(move |_, out| out.copy_from(&inside)),
        plus: Arc::new(move |_, out| out.copy_from(&outside)),
    };
    SdeProblem::new(
        "circle2d",
        DVector::from_vec(vec![0.0, 2.0]),
        drift.into_field(),
        sigma,
        theta,
        HypersurfaceDescriptor::empty(),
    )
    .expect("consistent dimensions")
    .with_mu_limits(limits)
}

/// Constant drift `minus` where the signed distance to `theta` is negative
/// and `plus` elsewhere, including on `theta`.
pub fn piecewise_constant(
    name: &str,
    x0: DVector<f64>,
    theta: HypersurfaceDescriptor,
    minus: DVector<f64>,
    plus: DVector<f64>,
    sigma: MatrixField,
) -> Result<SdeProblem> {
    let d = x0.len();
    for got in [minus.len(), plus.len()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    let surface = theta.clone();
    let (m, p) = (minus.clone(), plus.clone());
    let mu = VectorField::new(d, move |x, out| {
        if surface.signed_distance(x.as_slice()) < 0.0 {
            out.copy_from(&m);
        } else {
            out.copy_from(&p);
        }
    })
    .with_jacobian(|_, out| out.fill(0.0));
    let limits = DriftLimits {
        minus: Arc::new(move |_, out| out.copy_from(&minus)),
        plus: Arc::new(move |_, out| out.copy_from(&plus)),
    };
    Ok(SdeProblem::new(name, x0, mu, sigma, theta, HypersurfaceDescriptor::empty())?.with_mu_limits(limits))
}

/// Two independent geometric Brownian motions: smooth, globally Lipschitz
/// coefficients and no exceptional sets.
pub fn gbm2d() -> SdeProblem {
    let a = [0.1, -0.2];
    let b = [0.5, 0.8];
    let mu = VectorField::affine(DMatrix::from_diagonal(&DVector::from_row_slice(&a)), DVector::zeros(2));
    let linear = (0..2)
        .map(|j| {
            let mut m = DMatrix::zeros(2, 2);
            m[(j, j)] = b[j];
            m
        })
        .collect();
    let sigma = MatrixField::affine_columns(vec![DVector::zeros(2); 2], linear);
    SdeProblem::new(
        "gbm2d",
        DVector::from_vec(vec![1.0, 1.0]),
        mu,
        sigma,
        HypersurfaceDescriptor::empty(),
        HypersurfaceDescriptor::empty(),
    )
    .expect("consistent dimensions")
}
