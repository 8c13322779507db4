#![allow(dead_code)]

use nalgebra::Vector3;
use wormhole::deform::DeformationMap;
use wormhole::point::handle_from_angles;
use wormhole::tracer::{trace_ray_with, Scene, TraceResult};
use wormhole::{ManifoldPoint, Mouth, WormholeConfig};

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Point `i` of the Halton sequence in [0,1)^3 (bases 2, 3, 5), skipping the origin.
pub fn halton3(i: u64) -> [f64; 3] {
    [
        radical_inverse(i + 1, 2),
        radical_inverse(i + 1, 3),
        radical_inverse(i + 1, 5),
    ]
}

pub fn halton4(i: u64) -> [f64; 4] {
    let h = halton3(i);
    [h[0], h[1], h[2], radical_inverse(i + 1, 7)]
}

pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Exterior point of M from a unit-cube sample, covering the box [−5,5]²×[−3,L+3].
/// Returns `None` for points inside a ball or on the excluded axis segment.
pub fn exterior_sample(h: [f64; 3], length: f64) -> Option<ManifoldPoint> {
    let x = Vector3::new(
        lerp(-5.0, 5.0, h[0]),
        lerp(-5.0, 5.0, h[1]),
        lerp(-3.0, length + 3.0, h[2]),
    );
    if x.norm() <= 1.0 || (x - Vector3::new(0.0, 0.0, length)).norm() <= 1.0 {
        return None;
    }
    Some(ManifoldPoint::Exterior(x))
}

/// Handle point from a unit-cube sample, with ψ < π·0.999.
pub fn handle_sample(h: [f64; 3]) -> ManifoldPoint {
    let psi = (1.0 - 2.0 * h[0]).acos() * 0.999;
    handle_from_angles(psi, std::f64::consts::TAU * h[1], h[2]).unwrap()
}

pub fn map_for(length: f64) -> DeformationMap {
    DeformationMap::new(&WormholeConfig::new(length, 1.0)).unwrap()
}

/// Exterior point of M from a unit 4-cube sample, concentrated near the excluded curve: a quarter
/// each near the two spheres, near the slit and near the axis, at distances from 1e-11 to 0.1,
/// the rest uniform over the box r ≤ 4.5, −3 ≤ z ≤ L+3.
pub fn boundary_sample(h: [f64; 4], length: f64) -> ManifoldPoint {
    use std::f64::consts::{PI, TAU};
    let mode = (h[0] * 5.0) as usize;
    let near = 10f64.powf(-1.0 - 10.0 * h[2]);
    let (r, z) = match mode {
        0 | 1 => {
            let psi = PI * h[1];
            let rho = 1.0 + near;
            if mode == 0 {
                (rho * psi.sin(), -rho * psi.cos())
            } else {
                (rho * psi.sin(), length + rho * psi.cos())
            }
        }
        2 => (near, lerp(1.0, length - 1.0, h[1])),
        3 => {
            let z = lerp(1.0 + near, 3.0, h[1]);
            (
                near,
                if h[0] * 5.0 - 3.0 < 0.5 {
                    -z
                } else {
                    length + z
                },
            )
        }
        _ => (lerp(0.0, 4.5, h[1]), lerp(-3.0, length + 3.0, h[2])),
    };
    let (r, z) = if r.hypot(z) < 1.0 || r.hypot(z - length) < 1.0 {
        // Uniform box samples that land in a ball are pushed out radially.
        let c = if r.hypot(z) < 1.0 { 0.0 } else { length };
        let d = r.hypot(z - c).max(1e-3);
        (r / d * 1.01, c + (z - c) / d * 1.01)
    } else {
        (r, z)
    };
    let th = TAU * h[3];
    ManifoldPoint::Exterior(Vector3::new(r * th.cos(), r * th.sin(), z))
}

/// Unit vector from a unit-square sample, uniform on the sphere.
pub fn unit_from(a: f64, b: f64) -> Vector3<f64> {
    let z = 1.0 - 2.0 * a;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let tau = std::f64::consts::TAU;
    Vector3::new(r * (tau * b).cos(), r * (tau * b).sin(), z)
}

/// Ray that enters `mouth` at a quasi-random surface point with a quasi-random incoming direction.
/// Returns the origin half a unit before the hit and the unit direction.
pub fn entering_ray(
    h: [f64; 4],
    mouth: Mouth,
    cfg: &WormholeConfig,
) -> (Vector3<f64>, Vector3<f64>) {
    let n = unit_from(h[0], h[1]);
    let mut d = unit_from(h[2], h[3]);
    if d.dot(&n) > 0.0 {
        d = -d;
    }
    if d.dot(&n) > -1e-3 {
        d = (d - n * 1e-2).normalize();
    }
    let hit = mouth.center(cfg.length) + n;
    (hit - d * 0.5, d)
}

pub fn last_exterior(r: &TraceResult) -> Vector3<f64> {
    r.path
        .iter()
        .rev()
        .find_map(|s| match s.point() {
            ManifoldPoint::Exterior(x) => Some(x),
            _ => None,
        })
        .unwrap()
}

/// Traces backwards from a point on the final segment. After as many mouth traversals as the
/// forward ray made, the reversed ray should run back through `origin` along `-dir`. Returns the
/// distance of `origin` from that segment's line and the direction mismatch.
pub fn reciprocity_error(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    r: &TraceResult,
    cfg: &WormholeConfig,
) -> (f64, f64) {
    let scene = Scene::default();
    let start = last_exterior(r) + r.direction;
    let back = trace_ray_with(&start, &-r.direction, &scene, cfg, false).unwrap();
    let k = 2 * r.entries() as usize;
    let vertex = |i: usize| match back.path.get(i).map(|s| s.point()) {
        Some(ManifoldPoint::Exterior(x)) => Some(x),
        _ => None,
    };
    let Some(a) = vertex(k) else {
        return (f64::INFINITY, f64::INFINITY);
    };
    let seg = match vertex(k + 1) {
        Some(b) => (b - a).normalize(),
        None => back.direction,
    };
    let w = origin - a;
    ((w - seg * w.dot(&seg)).norm(), (seg + dir).norm())
}
