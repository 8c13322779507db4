//! The wormhole manifold: region tests, metrics, gluing and geodesics in the handle.
//!
//! The handle is S²×[0,1] with co-metric |p_tan|²/r(s)² + p_s²/δ². Sphere points are embedded
//! unit vectors and tangential covectors are 3-vectors orthogonal to them. With the Hamiltonian
//! H = g⁻¹(p,p) the flow parameter t advances metric length at rate √H.

use nalgebra::Vector3;

use crate::config::{WarpProfile, WormholeConfig};
use crate::error::{Error, Result};
use crate::point::{ManifoldPoint, Mouth, HANDLE_EPS};
use crate::tensor::SymTensor3;

/// Band around the gluing spheres for raw-point classification.
pub const SURFACE_BAND: f64 = 1e-12;
/// Distance tolerance accepted by the gluing maps.
pub const GLUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Exterior,
    OnSphere(Mouth),
    Handle,
}

/// Region of a raw Cartesian point; points strictly inside a ball are an error.
pub fn classify_raw(x: &Vector3<f64>, cfg: &WormholeConfig) -> Result<Region> {
    for mouth in [Mouth::O, Mouth::P] {
        let d = (x - mouth.center(cfg.length)).norm();
        if (d - 1.0).abs() <= SURFACE_BAND {
            return Ok(Region::OnSphere(mouth));
        }
        if d < 1.0 {
            return Err(Error::InsideBall([x.x, x.y, x.z]));
        }
    }
    Ok(Region::Exterior)
}

pub fn classify(p: &ManifoldPoint, cfg: &WormholeConfig) -> Result<Region> {
    match p {
        ManifoldPoint::Exterior(x) => classify_raw(x, cfg),
        ManifoldPoint::Handle { .. } => Ok(Region::Handle),
    }
}

/// Inverse metric in chart coordinates. On the handle the frame is two orthonormal tangent
/// directions of the unit sphere at u followed by ∂_s.
pub fn co_metric(p: &ManifoldPoint, cfg: &WormholeConfig) -> SymTensor3 {
    match p {
        ManifoldPoint::Exterior(_) => SymTensor3::IDENTITY,
        ManifoldPoint::Handle { s, .. } => {
            let r = cfg.warp.radius(*s);
            let t = 1.0 / (r * r);
            SymTensor3::diag(t, t, 1.0 / (cfg.delta * cfg.delta))
        }
    }
}

/// Handle-frame image of a vector based at a gluing sphere. At P the reflection z ↦ −z sends the
/// outward pole (0,0,L+1) to the south pole, so polar angles from the south pole and azimuths
/// agree on both sides. The map is its own inverse.
fn sphere_to_handle(mouth: Mouth, v: Vector3<f64>) -> Vector3<f64> {
    match mouth {
        Mouth::O => v,
        Mouth::P => Vector3::new(v.x, v.y, -v.z),
    }
}

/// Handle boundary point glued to the surface point `x` of the given sphere.
pub fn glue_map(mouth: Mouth, x: &Vector3<f64>, cfg: &WormholeConfig) -> Result<ManifoldPoint> {
    let rel = x - mouth.center(cfg.length);
    let d = rel.norm();
    if (d - 1.0).abs() > GLUE_TOL {
        return Err(Error::NotOnSphere(mouth, d));
    }
    Ok(ManifoldPoint::Handle {
        u: sphere_to_handle(mouth, rel / d),
        s: mouth.fiber_end(),
    })
}

/// Surface point of the sphere glued to handle direction `u` at that sphere's end.
pub fn glue_inverse(mouth: Mouth, u: &Vector3<f64>, cfg: &WormholeConfig) -> Vector3<f64> {
    mouth.center(cfg.length) + sphere_to_handle(mouth, u.normalize())
}

/// Position and covector in one chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Exterior {
        x: Vector3<f64>,
        p: Vector3<f64>,
    },
    Handle {
        u: Vector3<f64>,
        s: f64,
        p_tan: Vector3<f64>,
        p_s: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub phase: Phase,
    pub path_length: f64,
}

impl RayState {
    pub fn exterior(x: Vector3<f64>, p: Vector3<f64>) -> Self {
        RayState {
            phase: Phase::Exterior { x, p },
            path_length: 0.0,
        }
    }

    pub fn handle(u: Vector3<f64>, s: f64, p_tan: Vector3<f64>, p_s: f64) -> Self {
        RayState {
            phase: Phase::Handle { u, s, p_tan, p_s },
            path_length: 0.0,
        }
    }

    pub fn point(&self) -> ManifoldPoint {
        match self.phase {
            Phase::Exterior { x, .. } => ManifoldPoint::Exterior(x),
            Phase::Handle { u, s, .. } => ManifoldPoint::Handle { u, s },
        }
    }

    pub fn hamiltonian(&self, cfg: &WormholeConfig) -> f64 {
        match self.phase {
            Phase::Exterior { p, .. } => p.norm_squared(),
            Phase::Handle { s, p_tan, p_s, .. } => {
                let r = cfg.warp.radius(s);
                p_tan.norm_squared() / (r * r) + p_s * p_s / (cfg.delta * cfg.delta)
            }
        }
    }

    fn is_finite(&self) -> bool {
        let v = match self.phase {
            Phase::Exterior { x, p } => x.iter().chain(p.iter()).all(|c| c.is_finite()),
            Phase::Handle { u, s, p_tan, p_s } => {
                u.iter().chain(p_tan.iter()).all(|c| c.is_finite())
                    && s.is_finite()
                    && p_s.is_finite()
            }
        };
        v && self.path_length.is_finite()
    }

    /// Same point with the covector negated (time reversal).
    pub fn reversed(&self) -> RayState {
        let phase = match self.phase {
            Phase::Exterior { x, p } => Phase::Exterior { x, p: -p },
            Phase::Handle { u, s, p_tan, p_s } => Phase::Handle {
                u,
                s,
                p_tan: -p_tan,
                p_s: -p_s,
            },
        };
        RayState {
            phase,
            path_length: self.path_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingDirection {
    IntoHandle,
    OutOfHandle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceCrossing {
    pub mouth: Mouth,
    /// Unit vector from the sphere center to the crossing point.
    pub surface_point: Vector3<f64>,
    pub direction: CrossingDirection,
}

/// Normal momentum magnitude from H = |p_tan|² + p_n² (unit tangential metric at both ends).
fn normal_root(h: f64, tan_sq: f64) -> Result<f64> {
    let disc = h - tan_sq;
    if disc < -1e-12 * h.max(1.0) {
        return Err(Error::NoRealRoot(disc));
    }
    Ok(disc.max(0.0).sqrt())
}

/// Carries a ray across a gluing sphere, keeping the tangential covector and the Hamiltonian.
pub fn cross_interface(
    state: &RayState,
    cfg: &WormholeConfig,
) -> Result<(RayState, InterfaceCrossing)> {
    match state.phase {
        Phase::Exterior { x, p } => {
            let mouth = [Mouth::O, Mouth::P]
                .into_iter()
                .find(|m| ((x - m.center(cfg.length)).norm() - 1.0).abs() <= GLUE_TOL)
                .ok_or(Error::NotAtInterface)?;
            let n = (x - mouth.center(cfg.length)).normalize();
            let pn = p.dot(&n);
            if !(pn < 0.0) {
                return Err(Error::NotAtInterface);
            }
            let p_tan_ext = p - n * pn;
            let h = p.norm_squared();
            let mag = cfg.delta * normal_root(h, p_tan_ext.norm_squared())?;
            let p_s = match mouth {
                Mouth::O => mag,
                Mouth::P => -mag,
            };
            let next = RayState {
                phase: Phase::Handle {
                    u: sphere_to_handle(mouth, n),
                    s: mouth.fiber_end(),
                    p_tan: sphere_to_handle(mouth, p_tan_ext),
                    p_s,
                },
                path_length: state.path_length,
            };
            let crossing = InterfaceCrossing {
                mouth,
                surface_point: n,
                direction: CrossingDirection::IntoHandle,
            };
            Ok((next, crossing))
        }
        Phase::Handle { u, s, p_tan, p_s } => {
            let mouth = if s <= HANDLE_EPS && p_s < 0.0 {
                Mouth::O
            } else if s >= 1.0 - HANDLE_EPS && p_s > 0.0 {
                Mouth::P
            } else {
                return Err(Error::NotAtInterface);
            };
            let h = p_tan.norm_squared() + p_s * p_s / (cfg.delta * cfg.delta);
            let pn = normal_root(h, p_tan.norm_squared())?;
            let n = sphere_to_handle(mouth, u);
            let next = RayState {
                phase: Phase::Exterior {
                    x: mouth.center(cfg.length) + n,
                    p: sphere_to_handle(mouth, p_tan) + n * pn,
                },
                path_length: state.path_length,
            };
            let crossing = InterfaceCrossing {
                mouth,
                surface_point: n,
                direction: CrossingDirection::OutOfHandle,
            };
            Ok((next, crossing))
        }
    }
}

pub fn clairaut_invariant(state: &RayState) -> Result<f64> {
    match state.phase {
        Phase::Handle { p_tan, .. } => Ok(p_tan.norm()),
        Phase::Exterior { .. } => Err(Error::WrongChart("clairaut invariant needs a handle state")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HandleOutcome {
    Exited { state: RayState, mouth: Mouth },
    Trapped { state: RayState },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandlePath {
    pub outcome: HandleOutcome,
    /// Sampled states along the trajectory, entry and final state included. Empty unless requested.
    pub samples: Vec<RayState>,
}

/// Geodesic through the handle until it reaches an end or exhausts the path budget.
pub fn propagate_handle(state: &RayState, cfg: &WormholeConfig) -> Result<HandlePath> {
    propagate_handle_with(state, cfg, true)
}

pub fn propagate_handle_with(
    state: &RayState,
    cfg: &WormholeConfig,
    record: bool,
) -> Result<HandlePath> {
    match cfg.warp {
        WarpProfile::Constant => propagate_closed_form(state, cfg, record),
        WarpProfile::Knots(_) => propagate_rk4(state, cfg, record),
    }
}

/// Fixed-step RK4 propagation regardless of the profile (the constant profile has a closed form).
pub fn propagate_handle_rk4(state: &RayState, cfg: &WormholeConfig) -> Result<HandlePath> {
    propagate_rk4(state, cfg, true)
}

/// Great-circle frame of a handle state: u₀, unit direction w₀ and q = |p_tan|.
struct Orbit {
    u0: Vector3<f64>,
    w0: Vector3<f64>,
    q: f64,
}

impl Orbit {
    fn new(u: Vector3<f64>, p_tan: Vector3<f64>) -> Self {
        let q = p_tan.norm();
        let w0 = if q > 0.0 { p_tan / q } else { Vector3::zeros() };
        Orbit { u0: u, w0, q }
    }

    fn at(&self, phi: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.q == 0.0 {
            return (self.u0, Vector3::zeros());
        }
        let (sn, cs) = phi.sin_cos();
        (
            self.u0 * cs + self.w0 * sn,
            (self.w0 * cs - self.u0 * sn) * self.q,
        )
    }
}

fn handle_parts(state: &RayState) -> Result<(Vector3<f64>, f64, Vector3<f64>, f64)> {
    match state.phase {
        Phase::Handle { u, s, p_tan, p_s } => {
            if !state.is_finite() {
                return Err(Error::NonFinite(format!("{state:?}")));
            }
            if (u.norm() - 1.0).abs() > 1e-10 || u.dot(&p_tan).abs() > 1e-10 * p_tan.norm().max(1.0)
            {
                return Err(Error::WrongChart(
                    "handle state must have unit u and p_tan orthogonal to u",
                ));
            }
            if !(-HANDLE_EPS..=1.0 + HANDLE_EPS).contains(&s) {
                return Err(Error::FiberOutOfRange(s));
            }
            Ok((u, s.clamp(0.0, 1.0), p_tan, p_s))
        }
        Phase::Exterior { .. } => Err(Error::WrongChart("handle propagation needs a handle state")),
    }
}

fn propagate_closed_form(
    state: &RayState,
    cfg: &WormholeConfig,
    record: bool,
) -> Result<HandlePath> {
    let (u, s, p_tan, p_s) = handle_parts(state)?;
    let d2 = cfg.delta * cfg.delta;
    let orbit = Orbit::new(u, p_tan);
    let h = orbit.q * orbit.q + p_s * p_s / d2;
    if !(h > 0.0) {
        return Err(Error::NonFinite("Hamiltonian must be positive".into()));
    }
    let speed = h.sqrt();
    let budget = ((cfg.max_path_length - state.path_length) / speed).max(0.0);
    let exit_time = if p_s > 0.0 {
        Some((1.0 - s) * d2 / p_s)
    } else if p_s < 0.0 {
        Some(s * d2 / -p_s)
    } else {
        None
    };
    let (t_end, exit) = match exit_time {
        Some(t) if t <= budget => (t, true),
        _ => (budget, false),
    };
    let at = |t: f64, exact_end: bool| {
        let (u_t, p_t) = orbit.at(orbit.q * t);
        let s_t = if exact_end {
            if p_s > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (s + p_s / d2 * t).clamp(0.0, 1.0)
        };
        RayState {
            phase: Phase::Handle {
                u: u_t,
                s: s_t,
                p_tan: p_t,
                p_s,
            },
            path_length: state.path_length + speed * t,
        }
    };
    let end = at(t_end, exit);
    let mut samples = Vec::new();
    if record {
        const N: usize = 64;
        samples.push(*state);
        samples.extend((1..N).map(|i| at(t_end * i as f64 / N as f64, false)));
        samples.push(end);
    }
    let outcome = if exit {
        HandleOutcome::Exited {
            state: end,
            mouth: if p_s > 0.0 { Mouth::P } else { Mouth::O },
        }
    } else {
        HandleOutcome::Trapped { state: end }
    };
    Ok(HandlePath { outcome, samples })
}

/// RK4 state (φ, s, p_s); φ is the angle travelled along the great circle.
#[derive(Debug, Clone, Copy)]
struct Y {
    phi: f64,
    s: f64,
    ps: f64,
}

struct Flow<'a> {
    warp: &'a WarpProfile,
    q: f64,
    d2: f64,
}

impl Flow<'_> {
    fn rhs(&self, seg: usize, y: &Y) -> Y {
        let (r, dr) = self.warp.eval_on_segment(seg, y.s);
        Y {
            phi: self.q / (r * r),
            s: y.ps / self.d2,
            ps: self.q * self.q * dr / (r * r * r),
        }
    }

    /// One RK4 step using segment `seg`'s linear radius throughout, so the step sees a smooth field.
    fn step(&self, seg: usize, y: &Y, h: f64) -> Y {
        let add = |a: &Y, k: &Y, c: f64| Y {
            phi: a.phi + c * k.phi,
            s: a.s + c * k.s,
            ps: a.ps + c * k.ps,
        };
        let k1 = self.rhs(seg, y);
        let k2 = self.rhs(seg, &add(y, &k1, h / 2.0));
        let k3 = self.rhs(seg, &add(y, &k2, h / 2.0));
        let k4 = self.rhs(seg, &add(y, &k3, h));
        Y {
            phi: y.phi + h / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
            s: y.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            ps: y.ps + h / 6.0 * (k1.ps + 2.0 * k2.ps + 2.0 * k3.ps + k4.ps),
        }
    }

    /// Time within (0, h] at which the one-step map reaches `target`, starting from the inside.
    /// Returns `None` when the crossing cannot be separated from the start (turning on the knot).
    fn locate(&self, seg: usize, y: &Y, h: f64, target: f64) -> Option<f64> {
        let f = |dt: f64| self.step(seg, y, dt).s - target;
        let fb = f(h);
        let mut a = 0.0;
        let mut fa = y.s - target;
        if fa == 0.0 || fa.signum() == fb.signum() {
            // Already on the boundary: look for an interior point before the crossing.
            let mut t = h;
            loop {
                t *= 0.5;
                if t < 1e-14 * h {
                    return None;
                }
                let ft = f(t);
                if ft != 0.0 && ft.signum() != fb.signum() {
                    a = t;
                    fa = ft;
                    break;
                }
            }
        }
        let (mut b, mut fb) = (h, fb);
        let mut side = 0i8;
        for _ in 0..200 {
            let c = (a * fb - b * fa) / (fb - fa);
            let c = if c.is_finite() && c > a.min(b) && c < a.max(b) {
                c
            } else {
                0.5 * (a + b)
            };
            let fc = f(c);
            if fc == 0.0 || (b - a).abs() < 1e-17 {
                return Some(c);
            }
            if fc.signum() == fb.signum() {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
            if fc.abs() < 1e-16 {
                return Some(c);
            }
        }
        Some(0.5 * (a + b))
    }
}

fn propagate_rk4(state: &RayState, cfg: &WormholeConfig, record: bool) -> Result<HandlePath> {
    let (u, s, p_tan, p_s) = handle_parts(state)?;
    let orbit = Orbit::new(u, p_tan);
    let warp = &cfg.warp;
    let flow = Flow {
        warp,
        q: orbit.q,
        d2: cfg.delta * cfg.delta,
    };
    let h0 = state.hamiltonian(cfg);
    if !(h0 > 0.0) {
        return Err(Error::NonFinite("Hamiltonian must be positive".into()));
    }
    let speed = h0.sqrt();
    let nseg = warp.segment_count();

    let mut y = Y {
        phi: 0.0,
        s,
        ps: p_s,
    };
    let mut time = 0.0;
    let mut seg = warp.segment_of(s);
    // A ray sitting on a knot belongs to the segment it is heading into.
    let (lo, _) = warp.segment_bounds(seg);
    if y.s == lo && seg > 0 && heading_down(&flow, seg, &y) {
        seg -= 1;
    }

    let to_state = |y: &Y, time: f64| {
        let (u_t, p_t) = orbit.at(y.phi);
        RayState {
            phase: Phase::Handle {
                u: u_t,
                s: y.s.clamp(0.0, 1.0),
                p_tan: p_t,
                p_s: y.ps,
            },
            path_length: state.path_length + speed * time,
        }
    };
    let mut samples = Vec::new();
    if record {
        samples.push(*state);
    }
    let budget = ((cfg.max_path_length - state.path_length) / speed).max(0.0);
    // The step is measured in the fiber coordinate: a thin handle still takes about
    // 1/ode_step steps end to end, so knot tables in s stay resolved.
    let step = cfg.ode_step * cfg.delta.min(1.0) / speed;

    loop {
        let remaining = budget - time;
        if remaining <= 0.0 {
            let end = to_state(&y, time);
            if record {
                samples.push(end);
            }
            return Ok(HandlePath {
                outcome: HandleOutcome::Trapped { state: end },
                samples,
            });
        }
        let h = step.min(remaining);
        let y1 = flow.step(seg, &y, h);
        if !(y1.s.is_finite() && y1.ps.is_finite() && y1.phi.is_finite()) {
            return Err(Error::NonFinite(format!(
                "integrator state s={} p_s={}",
                y1.s, y1.ps
            )));
        }
        let (lo, hi) = warp.segment_bounds(seg);
        let crossing = if y1.s > hi {
            Some(hi)
        } else if y1.s < lo {
            Some(lo)
        } else {
            None
        };
        let Some(target) = crossing else {
            y = y1;
            time += h;
            if record {
                samples.push(to_state(&y, time));
            }
            continue;
        };
        let up = target == hi;
        let located = flow.locate(seg, &y, h, target);
        if let Some(dt) = located {
            y = flow.step(seg, &y, dt);
            time += dt;
        }
        y.s = target;
        if record {
            samples.push(to_state(&y, time));
        }
        let at_end = if up { seg + 1 == nseg } else { seg == 0 };
        if at_end {
            let leaving = if up { y.ps > 0.0 } else { y.ps < 0.0 };
            if leaving {
                let mouth = if up { Mouth::P } else { Mouth::O };
                return Ok(HandlePath {
                    outcome: HandleOutcome::Exited {
                        state: to_state(&y, time),
                        mouth,
                    },
                    samples,
                });
            }
            if located.is_none() {
                // Grazing an end with vanishing fiber momentum: a measure-zero family.
                let end = to_state(&y, time);
                return Ok(HandlePath {
                    outcome: HandleOutcome::Trapped { state: end },
                    samples,
                });
            }
        } else if located.is_none() {
            seg = if up { seg + 1 } else { seg - 1 };
        } else if up && !heading_down(&flow, seg + 1, &y) {
            seg += 1;
        } else if !up && heading_down(&flow, seg - 1, &y) {
            seg -= 1;
        }
    }
}

/// Whether a state on a knot moves to smaller s, using the force when p_s vanishes.
fn heading_down(flow: &Flow<'_>, seg: usize, y: &Y) -> bool {
    if y.ps != 0.0 {
        y.ps < 0.0
    } else {
        flow.rhs(seg, y).ps < 0.0
    }
}

/// Fiber coordinate s ≥ s_from where r(s) first drops to `q`, by bisection on the profile.
pub fn turning_point(warp: &WarpProfile, q: f64, s_from: f64, s_to: f64) -> Option<f64> {
    const N: usize = 4096;
    let g = |s: f64| warp.radius(s) - q;
    let mut prev = s_from;
    for i in 1..=N {
        let s = s_from + (s_to - s_from) * i as f64 / N as f64;
        if g(s) <= 0.0 {
            let (mut a, mut b) = (prev, s);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if g(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev = s;
    }
    None
}
