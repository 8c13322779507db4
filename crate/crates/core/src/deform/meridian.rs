//! The meridian map (r, z) ↦ (R, Z) outside the channel.
//!
//! Built on the lower half z ≤ L/2 and mirrored across z = L/2. The lower half of the box
//! {0 ≤ r ≤ 4, −2 ≤ z ≤ L/2} is split into three zones, each mapped by source-patch inverse
//! followed by target patch:
//!
//! * inlet: between the semicircle at O and an ellipse through (2,−2) and the slit point z_a,
//!   onto the square [0,2]×[−2,0] minus the cap disc of Σ;
//! * cap: between the ellipse, the rest of the slit up to z_π and a second quarter ellipse from
//!   (2,−2) to (4,z_π), onto the region wrapping the lower cap of Σ; the box corner beyond that
//!   ellipse is mapped identically;
//! * wall: the rectangle [0,4]×[z_π, L/2] onto the strip between the straight wall r = 3 and
//!   the box side, in closed form.
//!
//! The slit is sent onto the outer arc of Σ at constant speed (L+2π)/(L−2), the semicircle onto
//! the channel end with r = ψ/π, and the axis below O by z ↦ 2z+2.
//!
//! Inlet and cap share a prescribed transversal derivative along their common ellipse (source)
//! and segment r = 2 (target), so F's derivative does not jump there. Without it the strong
//! shear across that seam bends grid cells into bow-ties.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;

use super::coons::{Blend, Coons, Curve, InvertiblePatch, V2};

/// Shape parameter of the cap zone's radial reparametrization v ↦ v(1 + b(1−v)).
const CAP_STRETCH: f64 = 0.8;
/// Length of the seam transversal at (2,−2), which is also the rim's speed there.
const SEAM_SPEED: f64 = 1.0;
/// Bucket grid resolution for seeding patch inversion.
pub const LOOKUP_RES: usize = 256;
/// Half-width of the band around seams where derivatives are refused.
pub const SEAM_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    Identity,
    Inlet,
    Cap,
    Wall,
}

/// Smooth piece of the map: zone, sub-piece index and whether the point was mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Piece {
    pub zone: Zone,
    pub sub: u8,
    pub upper: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct MeridianEval {
    pub image: V2,
    /// ∂(R,Z)/∂(r,z).
    pub jacobian: Matrix2<f64>,
    pub piece: Piece,
    /// Whether the point is within the seam band of a piece boundary.
    pub on_seam: bool,
}

pub struct MeridianMap {
    length: f64,
    half: f64,
    z_pi: f64,
    z_a: f64,
    tol: f64,
    inlet_src: InvertiblePatch,
    inlet_dst: InvertiblePatch,
    cap_src: InvertiblePatch,
    cap_dst: InvertiblePatch,
}

fn stretch(v: f64) -> (f64, f64) {
    let b = CAP_STRETCH;
    (v * (1.0 + b * (1.0 - v)), 1.0 + b - 2.0 * b * v)
}

/// Outer arc of Σ near O, by arclength from B' = (1, 0).
fn arc(sigma: f64) -> (V2, V2) {
    (
        V2::new(2.0 - sigma.cos(), -sigma.sin()),
        V2::new(sigma.sin(), -sigma.cos()),
    )
}

/// Quarter ellipse from (2,−2) (t = 0) to the slit point (0, z_a) (t = 1).
fn ellipse(z_a: f64) -> impl Fn(f64) -> (V2, V2) + Copy + Send + Sync {
    move |t: f64| {
        let (s, c) = (t * FRAC_PI_2).sin_cos();
        (
            V2::new(2.0 * c, -2.0 + (z_a + 2.0) * s),
            V2::new(-2.0 * s, (z_a + 2.0) * c) * FRAC_PI_2,
        )
    }
}

fn bottom(ub: f64) -> impl Fn(f64) -> (V2, V2) + Copy + Send + Sync {
    move |u: f64| (V2::new(2.0 * u / ub, -2.0), V2::new(2.0 / ub, 0.0))
}

fn past_bottom(u: f64, ub: f64) -> f64 {
    (u - ub) / (1.0 - ub)
}

/// Transversal field along the inlet/cap seam in the source, by ellipse parameter t. It is the
/// outward derivative of both zones there, so F's derivative is continuous across the seam.
/// At t = 0 it is the rim tangent (SEAM_SPEED, 0); at t = 1 the slit direction (0, z_a − 1).
fn seam_field_source(z_a: f64) -> impl Fn(f64) -> (V2, V2) + Copy + Send + Sync {
    move |t: f64| {
        let (s, c) = (t * FRAC_PI_2).sin_cos();
        let (a, b) = (SEAM_SPEED, z_a - 1.0);
        (V2::new(a * c, b * s), V2::new(-a * s, b * c) * FRAC_PI_2)
    }
}

/// Target counterpart: horizontal, from (SEAM_SPEED, 0) at (2,−2) to (π/2, 0) at (2,−1).
fn seam_field_target(t: f64) -> (V2, V2) {
    let (s, c) = (t * FRAC_PI_2).sin_cos();
    let a = SEAM_SPEED;
    (
        V2::new(a * c + FRAC_PI_2 * s, 0.0),
        V2::new((-a * s + FRAC_PI_2 * c) * FRAC_PI_2, 0.0),
    )
}

/// Cross field for the inlet's outer side: on the bottom branch it turns from the axis
/// direction `axis` to (SEAM_SPEED, 0) at the corner; on the ellipse branch it is the seam field.
fn inlet_cross(
    ub: f64,
    axis: V2,
    seam: impl Fn(f64) -> (V2, V2) + Copy + Send + Sync + 'static,
) -> Vec<Curve> {
    let corner = V2::new(SEAM_SPEED, 0.0);
    vec![
        Box::new(move |u| {
            let w = u / ub;
            (axis * (1.0 - w) + corner * w, (corner - axis) / ub)
        }),
        Box::new(move |u| {
            let (w, wt) = seam(past_bottom(u, ub));
            (w, wt / (1.0 - ub))
        }),
    ]
}

fn inlet_source(z_a: f64, ub: f64) -> Coons {
    let ell = ellipse(z_a);
    Coons::with_kink(
        Box::new(|u| {
            let (s, c) = (PI * u).sin_cos();
            (V2::new(s, -c), V2::new(c, s) * PI)
        }),
        Box::new(bottom(ub)),
        Box::new(move |u| {
            let (p, d) = ell(past_bottom(u, ub));
            (p, d / (1.0 - ub))
        }),
        ub,
        Box::new(|v| (V2::new(0.0, -1.0 - v), V2::new(0.0, -1.0))),
        Box::new(move |v| (V2::new(0.0, 1.0 + v * (z_a - 1.0)), V2::new(0.0, z_a - 1.0))),
        Blend::Cubic,
    )
    .with_cross(inlet_cross(ub, V2::new(0.0, -1.0), seam_field_source(z_a)))
}

fn inlet_target(ub: f64) -> Coons {
    Coons::with_kink(
        Box::new(|u| (V2::new(u, 0.0), V2::new(1.0, 0.0))),
        Box::new(bottom(ub)),
        Box::new(move |u| {
            (
                V2::new(2.0, -2.0 + past_bottom(u, ub)),
                V2::new(0.0, 1.0 / (1.0 - ub)),
            )
        }),
        ub,
        Box::new(|v| (V2::new(0.0, -2.0 * v), V2::new(0.0, -2.0))),
        Box::new(|v| {
            let (p, d) = arc(v * FRAC_PI_2);
            (p, d * FRAC_PI_2)
        }),
        Blend::Cubic,
    )
    .with_cross(inlet_cross(ub, V2::new(0.0, -2.0), seam_field_target))
}

impl MeridianMap {
    /// `ub` is the fraction of the inlet zone's outer side spent on the bottom segment z = −2;
    /// `tol` is the residual accepted from patch inversion.
    pub fn new(length: f64, ub: f64, tol: f64) -> Self {
        let k = (length - 2.0) / (length + 2.0 * PI);
        let z_pi = 1.0 + PI * k;
        let z_a = 1.0 + FRAC_PI_2 * k;
        let ell = ellipse(z_a);
        // Quarter ellipse from (2,−2) to (4,z_π) closing the cap zone; F is the identity beyond it.
        // Angle θ(u) = (π/2)(u + κu(1−u)) gives the rim speed SEAM_SPEED at (2,−2).
        let kappa = SEAM_SPEED / PI - 1.0;
        let rim = move |u: f64| {
            let th = FRAC_PI_2 * (u + kappa * u * (1.0 - u));
            let dth = FRAC_PI_2 * (1.0 + kappa * (1.0 - 2.0 * u));
            let (s, c) = th.sin_cos();
            (
                V2::new(2.0 + 2.0 * s, z_pi - (z_pi + 2.0) * c),
                V2::new(2.0 * c, (z_pi + 2.0) * s) * dth,
            )
        };
        let seam_src = seam_field_source(z_a);

        // The cap runs from the top segment (v = 0) to the ellipse (v = 1), with u from the slit
        // to the rim; its cross derivative on the ellipse is minus the inlet's.
        let cap_src = Coons::new(
            Box::new(move |u| (V2::new(4.0 * u, z_pi), V2::new(4.0, 0.0))),
            Box::new(move |u| {
                let (g, dg) = stretch(u);
                let (p, d) = ell(1.0 - g);
                (p, -d * dg)
            }),
            Box::new(move |v| {
                (
                    V2::new(0.0, z_pi - v * (z_pi - z_a)),
                    V2::new(0.0, z_a - z_pi),
                )
            }),
            Box::new(move |v| {
                let (p, d) = rim(1.0 - v);
                (p, -d)
            }),
            Blend::Linear,
        )
        .with_cross(vec![Box::new(move |u| {
            let (g, dg) = stretch(u);
            let (w, wt) = seam_src(1.0 - g);
            (-w, wt * dg)
        })]);
        let cap_dst = Coons::new(
            Box::new(move |u| (V2::new(3.0 + u, u * z_pi), V2::new(1.0, z_pi))),
            Box::new(|u| {
                let (g, dg) = stretch(u);
                (V2::new(2.0, -1.0 - g), V2::new(0.0, -dg))
            }),
            Box::new(|v| {
                let (p, d) = arc(PI - v * FRAC_PI_2);
                (p, -d * FRAC_PI_2)
            }),
            Box::new(move |v| {
                let (p, d) = rim(1.0 - v);
                (p, -d)
            }),
            Blend::Linear,
        )
        .with_cross(vec![Box::new(|u| {
            let (g, dg) = stretch(u);
            let (w, wt) = seam_field_target(1.0 - g);
            (-w, wt * dg)
        })]);
        let inlet_src = inlet_source(z_a, ub);
        let inlet_dst = inlet_target(ub);
        let patch = |c: Coons| InvertiblePatch::new(c, LOOKUP_RES);
        MeridianMap {
            length,
            half: 0.5 * length,
            z_pi,
            z_a,
            tol,
            inlet_src: patch(inlet_src),
            inlet_dst: patch(inlet_dst),
            cap_src: patch(cap_src),
            cap_dst: patch(cap_dst),
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Height where the wall zone starts (image of the arc point (3, 0)).
    pub fn wall_start(&self) -> f64 {
        self.z_pi
    }

    /// Points where the map is the identity: r > 4, z < −2 or z > L+2.
    pub fn outside_box(&self, r: f64, z: f64) -> bool {
        r > 4.0 || z < -2.0 || z > self.length + 2.0
    }

    fn ellipse_level(&self, r: f64, z: f64) -> f64 {
        ((r / 2.0).powi(2) + ((z + 2.0) / (self.z_a + 2.0)).powi(2)).sqrt()
    }

    /// Level of the rim ellipse; above 1 (with r > 2, z < z_π) is the corner region mapped identically.
    fn rim_level(&self, r: f64, z: f64) -> f64 {
        (((r - 2.0) / 2.0).powi(2) + ((z - self.z_pi) / (self.z_pi + 2.0)).powi(2)).sqrt()
    }

    fn in_corner(&self, r: f64, z: f64) -> bool {
        r > 2.0 && z < self.z_pi && self.rim_level(r, z) > 1.0
    }

    /// Forward map with derivative. `p` must lie in the closed meridian domain: r ≥ 0, outside
    /// the open unit half-discs at z = 0 and z = L, and off the slit.
    pub fn forward(&self, r: f64, z: f64) -> Option<MeridianEval> {
        if self.outside_box(r, z) {
            return Some(MeridianEval {
                image: V2::new(r, z),
                jacobian: Matrix2::identity(),
                piece: Piece {
                    zone: Zone::Identity,
                    sub: 0,
                    upper: false,
                },
                on_seam: false,
            });
        }
        let upper = z > self.half;
        let zl = if upper { self.length - z } else { z };
        let mut e = self.forward_lower(r, zl)?;
        if upper {
            e.image.y = self.length - e.image.y;
            e.jacobian[(0, 1)] = -e.jacobian[(0, 1)];
            e.jacobian[(1, 0)] = -e.jacobian[(1, 0)];
            e.piece.upper = true;
        }
        Some(e)
    }

    fn forward_lower(&self, r: f64, z: f64) -> Option<MeridianEval> {
        let piece = |zone, sub| Piece {
            zone,
            sub,
            upper: false,
        };
        let box_seam = (r - 4.0).abs() <= SEAM_BAND || (z + 2.0).abs() <= SEAM_BAND;
        if z >= self.z_pi {
            let (image, jacobian) = self.wall(r, z);
            let on_seam = box_seam || (z - self.z_pi).abs() <= SEAM_BAND;
            return Some(MeridianEval {
                image,
                jacobian,
                piece: piece(Zone::Wall, 0),
                on_seam,
            });
        }
        let rim_seam = r > 2.0 && (self.rim_level(r, z) - 1.0).abs() <= SEAM_BAND;
        if self.in_corner(r, z) {
            return Some(MeridianEval {
                image: V2::new(r, z),
                jacobian: Matrix2::identity(),
                piece: piece(Zone::Identity, 1),
                on_seam: rim_seam,
            });
        }
        let level = self.ellipse_level(r, z);
        let p = V2::new(r, z);
        let (zone, src, dst) = if level <= 1.0 {
            (Zone::Inlet, &self.inlet_src, &self.inlet_dst)
        } else {
            (Zone::Cap, &self.cap_src, &self.cap_dst)
        };
        let (u, v) = src.invert(&p, 1e-9, self.tol)?;
        let (_, ds) = src.patch.eval(u, v);
        let (image, dt) = dst.patch.eval(u, v);
        let jacobian = dt * ds.try_inverse()?;
        let kink = src.patch.kink();
        let on_seam = box_seam
            || rim_seam
            || (z - self.z_pi).abs() <= SEAM_BAND
            || (level - 1.0).abs() <= SEAM_BAND
            || kink.is_some_and(|k| (u - k).abs() <= SEAM_BAND);
        let sub = u8::from(kink.is_some_and(|k| u > k));
        Some(MeridianEval {
            image,
            jacobian,
            piece: piece(zone, sub),
            on_seam,
        })
    }

    fn wall(&self, r: f64, z: f64) -> (V2, Matrix2<f64>) {
        let (h, zp) = (self.half, self.z_pi);
        let s = r / 4.0;
        let w = (z - zp) / (h - zp);
        let image = V2::new(3.0 + s, (1.0 - w) * s * zp + w * h);
        let jac = Matrix2::new(0.25, 0.0, 0.25 * (1.0 - w) * zp, (h - s * zp) / (h - zp));
        (image, jac)
    }

    /// Inverse map. `q` must lie in the closed image region outside the obstacle and channel.
    pub fn inverse(&self, big_r: f64, big_z: f64) -> Option<V2> {
        if self.outside_box(big_r, big_z) {
            return Some(V2::new(big_r, big_z));
        }
        let upper = big_z > self.half;
        let zl = if upper { self.length - big_z } else { big_z };
        let mut p = self.inverse_lower(big_r, zl)?;
        if upper {
            p.y = self.length - p.y;
        }
        Some(p)
    }

    fn inverse_lower(&self, big_r: f64, big_z: f64) -> Option<V2> {
        let (h, zp) = (self.half, self.z_pi);
        if self.in_corner(big_r, big_z) {
            return Some(V2::new(big_r, big_z));
        }
        if big_r >= 3.0 && big_z >= (big_r - 3.0) * zp {
            let s = big_r - 3.0;
            let w = (big_z - s * zp) / (h - s * zp);
            return Some(V2::new(4.0 * s, zp + w * (h - zp)));
        }
        let q = V2::new(big_r, big_z);
        let (src, dst) = if big_r <= 2.0 {
            (&self.inlet_src, &self.inlet_dst)
        } else {
            (&self.cap_src, &self.cap_dst)
        };
        let (u, v) = dst.invert(&q, 1e-9, self.tol)?;
        Some(src.patch.point(u, v))
    }

    /// Image of the slit point at height z ∈ [1, L−1].
    pub fn slit_image(&self, z: f64) -> V2 {
        let sigma = (z - 1.0) * (self.length + 2.0 * PI) / (self.length - 2.0);
        outer_arc(self.length, sigma)
    }
}

/// Outer arc of the stadium by arclength σ ∈ [0, L+2π] from B' = (1, 0) to C' = (1, L).
pub fn outer_arc(length: f64, sigma: f64) -> V2 {
    if sigma <= PI {
        arc(sigma).0
    } else if sigma <= PI + length {
        V2::new(3.0, sigma - PI)
    } else {
        let t = sigma - PI - length;
        V2::new(2.0 + t.cos(), length + t.sin())
    }
}
