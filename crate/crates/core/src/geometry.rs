//! Closed-form hypersurfaces: the exceptional sets of drift and diffusion.
//!
//! Every surface exposes the distance function, the orthogonal projection,
//! the unit normal along the surface, and a side classification of the
//! tubular neighbourhood. A sphere is oriented by its outward normal; a
//! hyperplane `{x : <n, x> = offset}` by its stored normal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance on the unit norm of a hyperplane normal.
const UNIT_NORMAL_TOL: f64 = 1e-12;

/// Default relative tolerance for "is this point on the surface".
pub const ON_SURFACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    Sphere { center: DVector<f64>, radius: f64 },
    Hyperplane { unit_normal: DVector<f64>, offset: f64 },
    Empty,
}

/// Which open side of the tubular neighbourhood a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
    On,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
            Side::On => 0.0,
        }
    }
}

/// An immutable hypersurface descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct HypersurfaceDescriptor {
    kind: SurfaceKind,
}

impl HypersurfaceDescriptor {
    pub fn sphere(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSurface(format!("sphere radius {radius} must be positive")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSurface("sphere center must be a finite point".into()));
        }
        Ok(Self { kind: SurfaceKind::Sphere { center, radius } })
    }

    pub fn hyperplane(unit_normal: DVector<f64>, offset: f64) -> Result<Self> {
        let norm = unit_normal.norm();
        if unit_normal.is_empty() || (norm - 1.0).abs() > UNIT_NORMAL_TOL {
            return Err(Error::InvalidSurface(format!("hyperplane normal must have unit norm, got {norm}")));
        }
        if !offset.is_finite() {
            return Err(Error::InvalidSurface("hyperplane offset must be finite".into()));
        }
        Ok(Self { kind: SurfaceKind::Hyperplane { unit_normal, offset } })
    }

    pub fn empty() -> Self {
        Self { kind: SurfaceKind::Empty }
    }

    pub fn kind(&self) -> &SurfaceKind {
        &self.kind
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.kind, SurfaceKind::Empty)
    }

    /// Ambient dimension, `None` for the empty set.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            SurfaceKind::Sphere { center, .. } => Some(center.len()),
            SurfaceKind::Hyperplane { unit_normal, .. } => Some(unit_normal.len()),
            SurfaceKind::Empty => None,
        }
    }

    pub fn reach(&self) -> f64 {
        match &self.kind {
            SurfaceKind::Sphere { radius, .. } => *radius,
            _ => f64::INFINITY,
        }
    }

    /// Signed distance, positive on the side the normal points to.
    /// `+inf` for the empty set.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SurfaceKind::Sphere { center, radius } => {
                let r2: f64 = x.iter().zip(center.iter()).map(|(a, c)| (a - c) * (a - c)).sum();
                r2.sqrt() - radius
            }
            SurfaceKind::Hyperplane { unit_normal, offset } => {
                x.iter().zip(unit_normal.iter()).map(|(a, n)| a * n).sum::<f64>() - offset
            }
            SurfaceKind::Empty => f64::INFINITY,
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).abs()
    }

    /// Whether `x` lies on the surface within `rel_tol * (1 + |x|)`.
    pub fn contains(&self, x: &[f64], rel_tol: f64) -> bool {
        let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.distance(x) <= rel_tol * scale
    }

    fn check_projectable(&self, x: &[f64]) -> Result<f64> {
        let distance = self.distance(x);
        let reach = self.reach();
        if distance.is_finite() && distance < reach {
            Ok(distance)
        } else {
            Err(Error::NotUniquelyProjectable { distance, reach })
        }
    }

    /// Nearest point on the surface.
    pub fn project(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_projectable(x)?;
        match &self.kind {
            SurfaceKind::Sphere { center, radius } => {
                let rel = DVector::from_column_slice(x) - center;
                let rho = rel.norm();
                Ok(center + rel * (radius / rho))
            }
            SurfaceKind::Hyperplane { unit_normal, .. } => {
                let t = self.signed_distance(x);
                Ok(DVector::from_column_slice(x) - unit_normal * t)
            }
            SurfaceKind::Empty => unreachable!("empty surface is never projectable"),
        }
    }

    /// Unit normal at a point `y` on the surface.
    pub fn unit_normal(&self, y: &[f64]) -> Result<DVector<f64>> {
        self.unit_normal_with_tol(y, ON_SURFACE_TOL)
    }

    pub fn unit_normal_with_tol(&self, y: &[f64], rel_tol: f64) -> Result<DVector<f64>> {
        if self.is_empty() || !self.contains(y, rel_tol) {
            return Err(Error::NotOnSurface { distance: self.distance(y) });
        }
        Ok(self.normal_field(y))
    }

    /// The normal of the projection, `n(pr(x))`, for any projectable `x`
    /// other than a sphere center. On the surface this is the unit normal.
    pub(crate) fn normal_field(&self, x: &[f64]) -> DVector<f64> {
        match &self.kind {
            SurfaceKind::Sphere { center, .. } => {
                let rel = DVector::from_column_slice(x) - center;
                let rho = rel.norm();
                rel / rho
            }
            SurfaceKind::Hyperplane { unit_normal, .. } => unit_normal.clone(),
            SurfaceKind::Empty => unreachable!("empty surface has no normal"),
        }
    }

    /// Side of `x`; `On` iff `distance(x) <= tol`. The empty set places
    /// every point on the `Plus` side.
    pub fn side(&self, x: &[f64], tol: f64) -> Result<Side> {
        if self.is_empty() {
            return Ok(Side::Plus);
        }
        self.check_projectable(x)?;
        let sd = self.signed_distance(x);
        Ok(if sd.abs() <= tol {
            Side::On
        } else if sd > 0.0 {
            Side::Plus
        } else {
            Side::Minus
        })
    }

    /// Jacobian of the projection `pr` at a projectable point.
    pub fn projection_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_projectable(x)?;
        let d = x.len();
        Ok(match &self.kind {
            SurfaceKind::Sphere { center, radius } => {
                let rel = DVector::from_column_slice(x) - center;
                let rho = rel.norm();
                let u = rel / rho;
                (DMatrix::identity(d, d) - &u * u.transpose()) * (radius / rho)
            }
            SurfaceKind::Hyperplane { unit_normal, .. } => {
                DMatrix::identity(d, d) - unit_normal * unit_normal.transpose()
            }
            SurfaceKind::Empty => unreachable!(),
        })
    }

    /// Random points on the surface. Hyperplane samples are drawn from the
    /// patch of radius `extent` around `anchor`'s projection.
    pub fn sample_surface<R: Rng + ?Sized>(
        &self,
        count: usize,
        anchor: &[f64],
        extent: f64,
        rng: &mut R,
    ) -> Vec<DVector<f64>> {
        match &self.kind {
            SurfaceKind::Sphere { center, radius } => (0..count)
                .map(|_| {
                    let dir = gaussian_direction(center.len(), rng);
                    center + dir * *radius
                })
                .collect(),
            SurfaceKind::Hyperplane { unit_normal, .. } => {
                let base = self.project(anchor).expect("hyperplanes project every point");
                (0..count)
                    .map(|_| {
                        let g: DVector<f64> = DVector::from_fn(unit_normal.len(), |_, _| rng.sample(StandardNormal));
                        let tangent = &g - unit_normal * unit_normal.dot(&g);
                        let scale = extent * rng.random::<f64>().sqrt();
                        let len = tangent.norm();
                        if len > 0.0 {
                            &base + tangent * (scale / len)
                        } else {
                            base.clone()
                        }
                    })
                    .collect()
            }
            SurfaceKind::Empty => Vec::new(),
        }
    }
}

pub(crate) fn gaussian_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}
