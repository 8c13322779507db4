use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Band used when snapping handle coordinates onto their valid ranges.
pub const HANDLE_EPS: f64 = 1e-12;

/// One of the two gluing spheres: O at the origin, P at (0, 0, L).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mouth {
    O,
    P,
}

impl Mouth {
    pub fn center(self, length: f64) -> Vector3<f64> {
        match self {
            Mouth::O => Vector3::zeros(),
            Mouth::P => Vector3::new(0.0, 0.0, length),
        }
    }

    /// Fiber coordinate of the handle end glued to this sphere.
    pub fn fiber_end(self) -> f64 {
        match self {
            Mouth::O => 0.0,
            Mouth::P => 1.0,
        }
    }

    pub fn other(self) -> Mouth {
        match self {
            Mouth::O => Mouth::P,
            Mouth::P => Mouth::O,
        }
    }
}

impl fmt::Display for Mouth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mouth::O => write!(f, "O"),
            Mouth::P => write!(f, "P"),
        }
    }
}

/// A point of the wormhole manifold, tagged with its chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManifoldPoint {
    /// Cartesian point of ℝ³ outside both open unit balls.
    Exterior(Vector3<f64>),
    /// Unit vector on S² and fiber coordinate s ∈ [0, 1].
    Handle { u: Vector3<f64>, s: f64 },
}

impl ManifoldPoint {
    pub fn exterior(x: f64, y: f64, z: f64) -> Self {
        ManifoldPoint::Exterior(Vector3::new(x, y, z))
    }

    pub fn is_handle(&self) -> bool {
        matches!(self, ManifoldPoint::Handle { .. })
    }
}

pub fn normalize_handle_point(u: Vector3<f64>, s: f64) -> Result<ManifoldPoint> {
    let n = u.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    if !(-HANDLE_EPS..=1.0 + HANDLE_EPS).contains(&s) {
        return Err(Error::FiberOutOfRange(s));
    }
    Ok(ManifoldPoint::Handle {
        u: u / n,
        s: s.clamp(0.0, 1.0),
    })
}

/// Handle point from the polar angle ψ measured from the south pole (0,0,−1) and azimuth θ.
pub fn handle_from_angles(psi: f64, theta: f64, s: f64) -> Result<ManifoldPoint> {
    let u = Vector3::new(psi.sin() * theta.cos(), psi.sin() * theta.sin(), -psi.cos());
    normalize_handle_point(u, s)
}

/// Polar angle from the south pole and azimuth of a unit vector.
pub fn sphere_angles(u: &Vector3<f64>) -> (f64, f64) {
    let rho = u.x.hypot(u.y);
    (rho.atan2(-u.z), u.y.atan2(u.x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescales_direction() {
        let p = normalize_handle_point(Vector3::new(0.0, 0.0, 2.0), 0.5).unwrap();
        assert_eq!(
            p,
            ManifoldPoint::Handle {
                u: Vector3::new(0.0, 0.0, 1.0),
                s: 0.5
            }
        );
    }

    #[test]
    fn rejects_zero_vector() {
        assert_eq!(
            normalize_handle_point(Vector3::zeros(), 0.5),
            Err(Error::ZeroVector)
        );
    }

    #[test]
    fn fiber_range() {
        assert!(matches!(
            normalize_handle_point(Vector3::x(), 1.5),
            Err(Error::FiberOutOfRange(_))
        ));
        let p = normalize_handle_point(Vector3::x(), 1.0 + 5e-13).unwrap();
        assert_eq!(
            p,
            ManifoldPoint::Handle {
                u: Vector3::x(),
                s: 1.0
            }
        );
        assert!(normalize_handle_point(Vector3::x(), -2e-12).is_err());
    }

    #[test]
    fn angles_round_trip() {
        let p = handle_from_angles(1.1, -2.0, 0.3).unwrap();
        let ManifoldPoint::Handle { u, .. } = p else {
            unreachable!()
        };
        let (psi, theta) = sphere_angles(&u);
        assert!((psi - 1.1).abs() < 1e-14 && (theta + 2.0).abs() < 1e-14);
    }
}
