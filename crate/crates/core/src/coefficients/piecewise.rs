use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{VectorField, EXCEPTIONAL_TOL};
use crate::error::{Error, Result};
use crate::geometry::HypersurfaceDescriptor;

/// Membership predicate of an open region.
pub type Region = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

/// A drift given by `f_i` on open regions `K_i` and by a separate value on
/// the surface separating them.
#[derive(Clone)]
pub struct PiecewiseDrift {
    regions: Vec<Region>,
    fields: Vec<VectorField>,
    surface_value: VectorField,
    theta: HypersurfaceDescriptor,
}

pub fn build_piecewise_drift(
    regions: Vec<Region>,
    fields: Vec<VectorField>,
    surface_value: VectorField,
    theta: HypersurfaceDescriptor,
) -> Result<PiecewiseDrift> {
    if regions.is_empty() || regions.len() != fields.len() {
        return Err(Error::InvalidProblem(format!("{} regions for {} fields", regions.len(), fields.len())));
    }
    let dim = surface_value.dim();
    if let Some(f) = fields.iter().find(|f| f.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
    }
    Ok(PiecewiseDrift { regions, fields, surface_value, theta })
}

impl PiecewiseDrift {
    pub fn dim(&self) -> usize {
        self.surface_value.dim()
    }

    /// Index of the region containing `x`; `None` on the surface.
    pub fn active_piece(&self, x: &DVector<f64>) -> Result<Option<usize>> {
        if let Some(i) = self.regions.iter().position(|r| r(x)) {
            return Ok(Some(i));
        }
        if self.theta.contains(x.as_slice(), EXCEPTIONAL_TOL) {
            Ok(None)
        } else {
            Err(Error::NoRegionMatched)
        }
    }

    pub fn try_eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(match self.active_piece(x)? {
            Some(i) => self.fields[i].eval(x),
            None => self.surface_value.eval(x),
        })
    }

    /// Checks on sample points that the regions are pairwise disjoint and
    /// cover everything off the surface.
    pub fn check_partition(&self, samples: &[DVector<f64>]) -> Result<()> {
        for x in samples {
            let hits = self.regions.iter().filter(|r| r(x)).count();
            let on_surface = self.theta.contains(x.as_slice(), EXCEPTIONAL_TOL);
            if hits > 1 {
                return Err(Error::InvalidProblem(format!("regions overlap at {:?}", x.as_slice())));
            }
            if hits == 0 && !on_surface {
                return Err(Error::NoRegionMatched);
            }
        }
        Ok(())
    }

    /// The drift as a plain field. Points in no region evaluate to NaN,
    /// which schemes report as a non-finite state.
    pub fn into_field(self) -> VectorField {
        let dim = self.dim();
        let me = Arc::new(self);
        let eval_me = Arc::clone(&me);
        VectorField::new(dim, move |x, out| match eval_me.active_piece(x) {
            Ok(Some(i)) => eval_me.fields[i].eval_into(x, out),
            Ok(None) => eval_me.surface_value.eval_into(x, out),
            Err(_) => out.fill(f64::NAN),
        })
        .with_jacobian(move |x, out: &mut DMatrix<f64>| match me.active_piece(x) {
            Ok(Some(i)) => {
                if !me.fields[i].jacobian_into(x, out) {
                    out.fill(f64::NAN);
                }
            }
            Ok(None) => out.fill(0.0),
            Err(_) => out.fill(f64::NAN),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::registry;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn circle_drift() -> PiecewiseDrift {
        let theta = HypersurfaceDescriptor::sphere(DVector::zeros(2), 2.0).unwrap();
        build_piecewise_drift(
            vec![Arc::new(|x: &DVector<f64>| x.norm() < 2.0), Arc::new(|x: &DVector<f64>| x.norm() > 2.0)],
            vec![VectorField::constant(v(&[-1.0, -1.0])), VectorField::constant(v(&[1.0, 1.0]))],
            VectorField::constant(v(&[1.0, 1.0])),
            theta,
        )
        .unwrap()
    }

    #[test]
    fn evaluates_active_piece() {
        let p = circle_drift();
        assert_eq!(p.try_eval(&v(&[0.0, 1.0])).unwrap().as_slice(), &[-1.0, -1.0]);
        assert_eq!(p.try_eval(&v(&[0.0, 3.0])).unwrap().as_slice(), &[1.0, 1.0]);
        assert_eq!(p.try_eval(&v(&[0.0, 2.0])).unwrap().as_slice(), &[1.0, 1.0]);
        let field = p.into_field();
        assert_eq!(field.eval(&v(&[0.0, 1.0])).as_slice(), &[-1.0, -1.0]);
    }

    #[test]
    fn single_region_zero_field() {
        let p = build_piecewise_drift(
            vec![Arc::new(|_: &DVector<f64>| true)],
            vec![VectorField::zero(3)],
            VectorField::zero(3),
            HypersurfaceDescriptor::empty(),
        )
        .unwrap();
        assert_eq!(p.try_eval(&v(&[4.0, -1.0, 2.0])).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn uncovered_point_is_reported() {
        let theta = HypersurfaceDescriptor::sphere(DVector::zeros(2), 2.0).unwrap();
        let p = build_piecewise_drift(
            vec![Arc::new(|x: &DVector<f64>| x.norm() < 2.0)],
            vec![VectorField::zero(2)],
            VectorField::zero(2),
            theta,
        )
        .unwrap();
        assert_eq!(p.try_eval(&v(&[0.0, 3.0])), Err(Error::NoRegionMatched));
        assert!(p.check_partition(&[v(&[0.0, 3.0])]).is_err());
        assert!(p.into_field().eval(&v(&[0.0, 3.0]))[0].is_nan());
    }

    #[test]
    fn registry_drift_matches() {
        let p = registry::circle2d();
        assert_eq!(p.mu.eval(&v(&[0.0, 1.0])).as_slice(), &[-1.0, -1.0]);
        assert_eq!(p.mu.eval(&v(&[0.0, 3.0])).as_slice(), &[1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn constant_along_segments_inside_one_region(
            r0 in 0.0..1.9f64, t0 in 0.0..std::f64::consts::TAU, r1 in 0.0..1.9f64, t1 in 0.0..std::f64::consts::TAU, s in 0.0..1.0f64,
        ) {
            // The open disc is convex, so the segment stays in K_1.
            let p = circle_drift();
            let a = v(&[r0 * t0.cos(), r0 * t0.sin()]);
            let b = v(&[r1 * t1.cos(), r1 * t1.sin()]);
            let m = &a + (&b - &a) * s;
            prop_assert_eq!(p.try_eval(&a).unwrap(), p.try_eval(&m).unwrap());
        }
    }
}
