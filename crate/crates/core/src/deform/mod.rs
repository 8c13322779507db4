//! The deformation map F from the wormhole manifold (minus the blown-up curve) onto the device
//! region N = ℝ³ ∖ K, its Jacobian and its inverse.
//!
//! F is rotationally symmetric. On the exterior it acts in the meridian half-plane (see
//! [`meridian`]); on the handle it flattens each sphere onto the unit disc, r = ψ/π, and
//! stretches the fiber onto [0, L].

pub mod coons;
pub mod meridian;

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::config::{validate_config, WormholeConfig};
use crate::error::{Error, Result};
use crate::handle::classify_raw;
use crate::point::{sphere_angles, ManifoldPoint, HANDLE_EPS};
use meridian::{MeridianEval, MeridianMap, Piece};

/// Distance from the slit below which a point counts as on it.
pub const CURVE_BAND: f64 = 1e-12;

/// Point (r, z) of the meridian half-plane, r ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint {
    pub r: f64,
    pub z: f64,
}

impl HalfPlanePoint {
    pub fn new(r: f64, z: f64) -> Self {
        HalfPlanePoint { r, z }
    }
}

/// Cylindrical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylindrical {
    pub r: f64,
    pub theta: f64,
    pub z: f64,
}

/// Geometry of the device: the obstacle K (points within distance 1 of the segment
/// {r = 2, 0 ≤ z ≤ L}), its surface Σ, the channel and the identity region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceRegionModel {
    pub length: f64,
}

impl DeviceRegionModel {
    pub fn outer_arc_length(&self) -> f64 {
        self.length + 2.0 * PI
    }

    /// Outer arc of Σ by arclength from B' = (1, 0) through (2,−1), (3,0), (3,L), (2,L+1) to C' = (1,L).
    pub fn outer_arc(&self, sigma: f64) -> HalfPlanePoint {
        let p = meridian::outer_arc(self.length, sigma);
        HalfPlanePoint::new(p.x, p.y)
    }

    /// Meridian distance to the segment {r = 2, 0 ≤ z ≤ L}.
    pub fn segment_distance(&self, r: f64, z: f64) -> f64 {
        let dz = (-z).max(z - self.length).max(0.0);
        (r - 2.0).hypot(dz)
    }

    pub fn dist_sigma(&self, y: &Vector3<f64>) -> f64 {
        (self.segment_distance(y.x.hypot(y.y), y.z) - 1.0).abs()
    }

    /// Inside the open obstacle K.
    pub fn in_obstacle(&self, y: &Vector3<f64>) -> bool {
        self.segment_distance(y.x.hypot(y.y), y.z) < 1.0
    }

    pub fn in_channel(&self, y: &Vector3<f64>) -> bool {
        let r = y.x.hypot(y.y);
        r < 1.0 && y.z > 0.0 && y.z < self.length
    }

    /// r > 4 or z outside [−2, L+2], where F is the identity.
    pub fn in_identity_region(&self, y: &Vector3<f64>) -> bool {
        y.x.hypot(y.y) > 4.0 || y.z < -2.0 || y.z > self.length + 2.0
    }
}

/// A point of the boundary of the meridian domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryParam {
    /// Angle ψ ∈ [0, π] on the semicircle at O, measured from A = (0, −1).
    SemicircleO(f64),
    /// Height z ∈ [1, L−1] on the slit.
    Slit(f64),
    /// Angle ψ ∈ [0, π] on the semicircle at P, measured from D = (0, L+1).
    SemicircleP(f64),
    /// Axis point with z ≤ −1.
    AxisBelow(f64),
    /// Axis point with z ≥ L+1.
    AxisAbove(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianRecord {
    /// DF in the Cartesian frame of N; columns follow the chart of the source point
    /// (Cartesian on the exterior, (ψcosθ, ψsinθ, s) on the handle).
    pub matrix: Matrix3<f64>,
    pub det: f64,
    /// Ratio of extreme singular values.
    pub condition: f64,
}

impl JacobianRecord {
    pub fn new(matrix: Matrix3<f64>) -> Self {
        let sv = matrix.singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        JacobianRecord {
            matrix,
            det: matrix.determinant(),
            condition: hi / lo,
        }
    }
}

/// Smooth piece of F containing a point; finite differences are only meaningful within one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PieceId {
    Meridian(Piece),
    Handle,
}

/// Handle chart coordinates (ψcosθ, ψsinθ, s) of a handle point.
pub fn handle_chart(u: &Vector3<f64>, s: f64) -> Vector3<f64> {
    let rho = u.x.hypot(u.y);
    let (psi, _) = sphere_angles(u);
    if rho == 0.0 {
        return Vector3::new(0.0, 0.0, s);
    }
    Vector3::new(psi * u.x / rho, psi * u.y / rho, s)
}

/// Inverse of [`handle_chart`] for |(q₁, q₂)| < π.
pub fn handle_from_chart(q: &Vector3<f64>) -> ManifoldPoint {
    let psi = q.x.hypot(q.y);
    let u = if psi == 0.0 {
        Vector3::new(0.0, 0.0, -1.0)
    } else {
        let f = psi.sin() / psi;
        Vector3::new(q.x * f, q.y * f, -psi.cos())
    };
    ManifoldPoint::Handle { u, s: q.z }
}

pub struct DeformationMap {
    cfg: WormholeConfig,
    meridian: MeridianMap,
    pub device: DeviceRegionModel,
}

impl DeformationMap {
    pub fn new(cfg: &WormholeConfig) -> Result<Self> {
        let cfg = validate_config(cfg)?;
        let meridian = MeridianMap::new(cfg.length, 0.5 * cfg.collar_width, cfg.newton_tol);
        Ok(DeformationMap {
            device: DeviceRegionModel { length: cfg.length },
            meridian,
            cfg,
        })
    }

    pub fn config(&self) -> &WormholeConfig {
        &self.cfg
    }

    pub fn meridian(&self) -> &MeridianMap {
        &self.meridian
    }

    /// Image of a boundary point of the meridian domain on the boundary of the device meridian.
    pub fn f1_boundary(&self, param: BoundaryParam) -> Result<HalfPlanePoint> {
        let l = self.cfg.length;
        let axis = |z: f64| if z >= -2.0 { 2.0 * z + 2.0 } else { z };
        match param {
            BoundaryParam::SemicircleO(psi) | BoundaryParam::SemicircleP(psi)
                if !(0.0..=PI).contains(&psi) =>
            {
                Err(Error::BoundaryParam(psi))
            }
            BoundaryParam::SemicircleO(psi) => Ok(HalfPlanePoint::new(psi / PI, 0.0)),
            BoundaryParam::SemicircleP(psi) => Ok(HalfPlanePoint::new(psi / PI, l)),
            BoundaryParam::Slit(z) if (1.0..=l - 1.0).contains(&z) => {
                let p = self.meridian.slit_image(z);
                Ok(HalfPlanePoint::new(p.x, p.y))
            }
            BoundaryParam::AxisBelow(z) if z <= -1.0 => Ok(HalfPlanePoint::new(0.0, axis(z))),
            BoundaryParam::AxisAbove(z) if z >= l + 1.0 => {
                Ok(HalfPlanePoint::new(0.0, l - axis(l - z)))
            }
            BoundaryParam::Slit(z) | BoundaryParam::AxisBelow(z) | BoundaryParam::AxisAbove(z) => {
                Err(Error::BoundaryParam(z))
            }
        }
    }

    /// The domain point that a boundary parameter names.
    pub fn boundary_point(&self, param: BoundaryParam) -> HalfPlanePoint {
        let l = self.cfg.length;
        match param {
            BoundaryParam::SemicircleO(psi) => HalfPlanePoint::new(psi.sin(), -psi.cos()),
            BoundaryParam::SemicircleP(psi) => HalfPlanePoint::new(psi.sin(), l + psi.cos()),
            BoundaryParam::Slit(z) | BoundaryParam::AxisBelow(z) | BoundaryParam::AxisAbove(z) => {
                HalfPlanePoint::new(0.0, z)
            }
        }
    }

    fn check_meridian_domain(&self, p: HalfPlanePoint) -> Result<()> {
        let l = self.cfg.length;
        if !(p.r >= 0.0) || !p.z.is_finite() || !p.r.is_finite() {
            return Err(Error::OutsideDomain(p.r, p.z));
        }
        let band = 1.0 - CURVE_BAND;
        if p.r.hypot(p.z) < band || p.r.hypot(p.z - l) < band {
            return Err(Error::OutsideDomain(p.r, p.z));
        }
        if p.r <= CURVE_BAND && p.z >= 1.0 && p.z <= l - 1.0 {
            return Err(Error::OnCurve);
        }
        Ok(())
    }

    /// Meridian map with its derivative and piece.
    pub fn f1_eval(&self, p: HalfPlanePoint) -> Result<MeridianEval> {
        self.check_meridian_domain(p)?;
        self.meridian
            .forward(p.r, p.z)
            .ok_or(Error::NoConvergence(f64::NAN))
    }

    pub fn f1_forward(&self, p: HalfPlanePoint) -> Result<HalfPlanePoint> {
        let e = self.f1_eval(p)?;
        Ok(HalfPlanePoint::new(e.image.x, e.image.y))
    }

    pub fn f2_forward(&self, u: &Vector3<f64>, s: f64) -> Result<Cylindrical> {
        let (psi, theta) = sphere_angles(u);
        if PI - psi <= HANDLE_EPS {
            return Err(Error::NorthPole);
        }
        Ok(Cylindrical {
            r: psi / PI,
            theta,
            z: s * self.cfg.length,
        })
    }

    pub fn f_forward(&self, x: &ManifoldPoint) -> Result<Vector3<f64>> {
        match x {
            ManifoldPoint::Exterior(p) => {
                classify_raw(p, &self.cfg)?;
                let r = p.x.hypot(p.y);
                if self.meridian.outside_box(r, p.z) {
                    return Ok(*p);
                }
                let e = self.f1_eval(HalfPlanePoint::new(r, p.z))?;
                Ok(revolve(p, r, e.image.x, e.image.y))
            }
            ManifoldPoint::Handle { u, s } => {
                let c = self.f2_forward(u, *s)?;
                let rho = u.x.hypot(u.y);
                if rho == 0.0 {
                    return Ok(Vector3::new(0.0, 0.0, c.z));
                }
                Ok(Vector3::new(c.r * u.x / rho, c.r * u.y / rho, c.z))
            }
        }
    }

    pub fn f_inverse(&self, y: &Vector3<f64>) -> Result<ManifoldPoint> {
        let big_r = y.x.hypot(y.y);
        if self.meridian.outside_box(big_r, y.z) {
            return Ok(ManifoldPoint::Exterior(*y));
        }
        let d = self.device.segment_distance(big_r, y.z);
        if d < 1.0 + 1e-9 && d > 1.0 - 1e-9 || d < 1.0 {
            return Err(Error::InsideObstacle);
        }
        // The channel's end discs are the gluing spheres; report them on the handle side.
        if big_r < 1.0 && y.z >= 0.0 && y.z <= self.cfg.length {
            let psi = PI * big_r;
            let (su, cu) = psi.sin_cos();
            let u = if big_r == 0.0 {
                Vector3::new(0.0, 0.0, -1.0)
            } else {
                Vector3::new(su * y.x / big_r, su * y.y / big_r, -cu)
            };
            return Ok(ManifoldPoint::Handle {
                u,
                s: y.z / self.cfg.length,
            });
        }
        let p = self
            .meridian
            .inverse(big_r, y.z)
            .ok_or(Error::NoConvergence(f64::NAN))?;
        Ok(ManifoldPoint::Exterior(revolve(y, big_r, p.x, p.y)))
    }

    /// DF at a point of M, refusing seams of the piecewise construction.
    pub fn jacobian(&self, x: &ManifoldPoint) -> Result<JacobianRecord> {
        match self.jacobian_one_sided(x)? {
            (_, true) => Err(Error::OnSeam),
            (rec, false) => Ok(rec),
        }
    }

    /// DF on the piece the point is assigned to, and whether the point lies within the seam band
    /// (where the value is a one-sided limit).
    pub fn jacobian_one_sided(&self, x: &ManifoldPoint) -> Result<(JacobianRecord, bool)> {
        match x {
            ManifoldPoint::Exterior(p) => {
                classify_raw(p, &self.cfg)?;
                let r = p.x.hypot(p.y);
                if self.meridian.outside_box(r, p.z) {
                    return Ok((JacobianRecord::new(Matrix3::identity()), false));
                }
                let e = self.f1_eval(HalfPlanePoint::new(r, p.z))?;
                let rec = JacobianRecord::new(cartesian_jacobian(p, r, e.image.x, &e.jacobian));
                if !(rec.det > 0.0) {
                    return Err(Error::NonPositiveDeterminant(rec.det));
                }
                Ok((rec, e.on_seam))
            }
            ManifoldPoint::Handle { u, .. } => {
                let (psi, _) = sphere_angles(u);
                if PI - psi <= HANDLE_EPS {
                    return Err(Error::NorthPole);
                }
                let d = Vector3::new(1.0 / PI, 1.0 / PI, self.cfg.length);
                Ok((JacobianRecord::new(Matrix3::from_diagonal(&d)), false))
            }
        }
    }

    pub fn piece(&self, x: &ManifoldPoint) -> Result<PieceId> {
        match x {
            ManifoldPoint::Exterior(p) => {
                let r = p.x.hypot(p.y);
                Ok(PieceId::Meridian(
                    self.f1_eval(HalfPlanePoint::new(r, p.z))?.piece,
                ))
            }
            ManifoldPoint::Handle { .. } => Ok(PieceId::Handle),
        }
    }
}

/// Cartesian point at the azimuth of `p` with meridian coordinates (R, Z).
fn revolve(p: &Vector3<f64>, r: f64, big_r: f64, big_z: f64) -> Vector3<f64> {
    if r == 0.0 {
        return Vector3::new(0.0, 0.0, big_z);
    }
    Vector3::new(big_r * p.x / r, big_r * p.y / r, big_z)
}

/// Revolves the meridian derivative: R_r e_r e_rᵀ + (R/r) e_θ e_θᵀ + R_z e_r e_zᵀ + Z_r e_z e_rᵀ + Z_z e_z e_zᵀ.
/// On the axis R/r is replaced by its limit R_r.
fn cartesian_jacobian(p: &Vector3<f64>, r: f64, big_r: f64, b: &Matrix2<f64>) -> Matrix3<f64> {
    let (c, s, a) = if r == 0.0 {
        (1.0, 0.0, b[(0, 0)])
    } else {
        (p.x / r, p.y / r, big_r / r)
    };
    let (rr, rz, zr, zz) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
    Matrix3::new(
        rr * c * c + a * s * s,
        (rr - a) * c * s,
        rz * c,
        (rr - a) * c * s,
        rr * s * s + a * c * c,
        rz * s,
        zr * c,
        zr * s,
        zz,
    )
}
