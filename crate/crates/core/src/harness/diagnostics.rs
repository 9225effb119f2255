//! Occupation and side-crossing fractions of a time-continuous scheme.
//!
//! `fine_states` is row-major `(N + 1) x d`, the scheme evaluated at the
//! fine grid `i / N`.

use crate::geometry::HypersurfaceDescriptor;
use crate::schemes::Trajectory;

/// Fraction of fine grid points within `eps_tilde` of `surface`, a Riemann
/// sum for the time spent in the neighbourhood.
pub fn occupation_fraction(fine_states: &[f64], dim: usize, surface: &HypersurfaceDescriptor, eps_tilde: f64) -> f64 {
    let rows = fine_states.len() / dim;
    if rows == 0 {
        return 0.0;
    }
    let inside = fine_states.chunks_exact(dim).filter(|x| surface.distance(x) < eps_tilde).count();
    inside as f64 / rows as f64
}

/// Fraction of fine points `t` in `(0, 1]` whose distance to `surface` is at
/// most their displacement from the coarse anchor `X(floor_n t)`, i.e. where
/// the step may have changed sides.
pub fn crossing_fraction(fine_states: &[f64], anchors: &Trajectory, surface: &HypersurfaceDescriptor) -> f64 {
    let d = anchors.dim();
    let fine_n = fine_states.len() / d - 1;
    if fine_n == 0 {
        return 0.0;
    }
    let ratio = fine_n / anchors.n();
    let mut hits = 0usize;
    for i in 1..=fine_n {
        let x = &fine_states[i * d..(i + 1) * d];
        let anchor = anchors.state((i - 1) / ratio);
        let disp = x.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if surface.distance(x) <= disp {
            hits += 1;
        }
    }
    hits as f64 / fine_n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::{generate_fine_path, CoarseDrivers};
    use crate::coefficients::registry;
    use crate::schemes::{continuous_interpolation, milstein_path};
    use nalgebra::DVector;

    fn circle() -> HypersurfaceDescriptor {
        HypersurfaceDescriptor::sphere(DVector::zeros(2), 2.0).unwrap()
    }

    fn constant(x: [f64; 2], rows: usize) -> Vec<f64> {
        x.iter().copied().cycle().take(2 * rows).collect()
    }

    #[test]
    fn occupation_examples() {
        assert_eq!(occupation_fraction(&constant([0.0, 7.0], 65), 2, &circle(), 1.0), 0.0);
        let on: Vec<f64> = (0..65)
            .flat_map(|i| {
                let t = i as f64 * 0.1;
                [2.0 * t.cos(), 2.0 * t.sin()]
            })
            .collect();
        assert_eq!(occupation_fraction(&on, 2, &circle(), 1e-6), 1.0);
        let half = [constant([0.0, 2.05], 10), constant([0.0, 3.0], 10)].concat();
        assert_eq!(occupation_fraction(&half, 2, &circle(), 0.1), 0.5);
    }

    #[test]
    fn crossing_examples() {
        let p = registry::circle2d();
        let bundle = generate_fine_path(0, 0, 64, 2);
        let drivers = CoarseDrivers::from_bundle(&bundle, 8).unwrap();
        let traj = milstein_path(&p, &p.x0, &drivers).unwrap();
        let fine = continuous_interpolation(&p, &traj, &bundle, true).unwrap();
        let f = crossing_fraction(&fine, &traj, &p.theta);
        assert!((0.0..=1.0).contains(&f));

        // Frozen paths: zero displacement from every anchor.
        let traj = Trajectory::from_states(8, 2, constant([0.0, 5.0], 9)).unwrap();
        assert_eq!(crossing_fraction(&constant([0.0, 5.0], 65), &traj, &p.theta), 0.0);
        let traj = Trajectory::from_states(8, 2, constant([0.0, 2.0], 9)).unwrap();
        assert_eq!(crossing_fraction(&constant([0.0, 2.0], 65), &traj, &p.theta), 1.0);
    }
}
