//! Ray propagation on the wormhole manifold: straight flight outside the balls, handle traversal
//! between the gluing spheres and a chessboard-under-sky scene.

use std::io::Write;

use nalgebra::Vector3;

use crate::config::WormholeConfig;
use crate::error::{Error, Result};
use crate::handle::{
    classify_raw, cross_interface, glue_map, propagate_handle_with, HandleOutcome, Phase, RayState,
    Region,
};
use crate::point::{ManifoldPoint, Mouth};

/// Minimum ray parameter accepted as a new event.
pub const SELF_HIT_GUARD: f64 = 1e-12;
/// Safety cap on the number of mouth entries along one ray.
pub const MAX_ENTRIES: u32 = 100_000;

pub type Rgb = [f64; 3];

pub const TRAPPED_COLOR: Rgb = [1.0, 0.0, 1.0];

/// Infinite chessboard z = board_z under a sky whose color depends on ray elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub board_z: f64,
    pub light: Rgb,
    pub dark: Rgb,
    pub horizon: Rgb,
    pub zenith: Rgb,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            board_z: -3.0,
            light: [1.0, 1.0, 1.0],
            dark: [0.0, 0.0, 0.0],
            horizon: [0.85, 0.9, 1.0],
            zenith: [0.15, 0.35, 0.85],
        }
    }
}

impl Scene {
    /// Scene with the board at `board_z`, which must lie below both mouths.
    pub fn with_board(board_z: f64) -> Result<Scene> {
        let scene = Scene {
            board_z,
            ..Scene::default()
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.board_z < -1.0) {
            return Err(Error::InvalidConfig(vec![format!(
                "board plane z = {} must lie below both mouths (z < -1)",
                self.board_z
            )]));
        }
        Ok(())
    }

    /// 0 for light squares, 1 for dark ones.
    pub fn parity(x: f64, y: f64) -> i64 {
        (x.floor() as i64 + y.floor() as i64).rem_euclid(2)
    }

    pub fn board_color(&self, x: f64, y: f64) -> Rgb {
        if Scene::parity(x, y) == 0 {
            self.light
        } else {
            self.dark
        }
    }

    pub fn sky_color(&self, dir: &Vector3<f64>) -> Rgb {
        let e = (dir.z / dir.norm()).clamp(0.0, 1.0);
        std::array::from_fn(|i| self.horizon[i] * (1.0 - e) + self.zenith[i] * e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Sphere {
        mouth: Mouth,
        t: f64,
        point: Vector3<f64>,
    },
    Board {
        t: f64,
        point: Vector3<f64>,
    },
    Sky,
}

impl Event {
    pub fn parameter(&self) -> f64 {
        match self {
            Event::Sphere { t, .. } | Event::Board { t, .. } => *t,
            Event::Sky => f64::INFINITY,
        }
    }
}

/// Entry parameter of the ray into the unit sphere centered at `c`, if it enters.
fn sphere_entry(origin: &Vector3<f64>, dir: &Vector3<f64>, c: &Vector3<f64>) -> Option<f64> {
    let oc = origin - c;
    let b = oc.dot(dir);
    let disc = b * b - (oc.norm_squared() - 1.0);
    if !(disc > 0.0) {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > SELF_HIT_GUARD).then_some(t)
}

/// Nearest event along a straight ray; `skip` excludes the sphere the ray is leaving.
pub fn first_event_skipping(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    scene: &Scene,
    cfg: &WormholeConfig,
    skip: Option<Mouth>,
) -> Event {
    let mut best = Event::Sky;
    for mouth in [Mouth::O, Mouth::P] {
        if skip == Some(mouth) {
            continue;
        }
        if let Some(t) = sphere_entry(origin, dir, &mouth.center(cfg.length)) {
            if t < best.parameter() {
                best = Event::Sphere {
                    mouth,
                    t,
                    point: origin + dir * t,
                };
            }
        }
    }
    if dir.z != 0.0 {
        let t = (scene.board_z - origin.z) / dir.z;
        if t > SELF_HIT_GUARD && t < best.parameter() {
            let mut point = origin + dir * t;
            point.z = scene.board_z;
            best = Event::Board { t, point };
        }
    }
    best
}

pub fn first_event(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    scene: &Scene,
    cfg: &WormholeConfig,
) -> Event {
    first_event_skipping(origin, dir, scene, cfg, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    HitBoard,
    HitSky,
    Trapped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub termination: Termination,
    /// Board hit point, last vertex before escaping to the sky, or where the budget ran out.
    pub end: ManifoldPoint,
    /// Unit direction at `end`. Inside the handle this is the normalized (p_tan, p_s) covector.
    pub direction: Vector3<f64>,
    /// Handle traversals that came out at the other mouth.
    pub transits: u32,
    /// Handle traversals that came back out of the entry mouth.
    pub returns: u32,
    /// Mouth of the first entry, if any.
    pub first_mouth: Option<Mouth>,
    /// States at the start, at every event and on both sides of each mouth crossing, plus the
    /// handle samples when recording was requested.
    pub path: Vec<RayState>,
    /// Metric length up to `end`. Only a final straight run to the board can take it past
    /// `max_path_length`.
    pub path_length: f64,
}

impl TraceResult {
    pub fn entries(&self) -> u32 {
        self.transits + self.returns
    }
}

struct Tally {
    path: Vec<RayState>,
    transits: u32,
    returns: u32,
    first_mouth: Option<Mouth>,
}

impl Tally {
    fn entries(&self) -> u32 {
        self.transits + self.returns
    }

    fn finish(
        self,
        termination: Termination,
        end: ManifoldPoint,
        direction: Vector3<f64>,
        length: f64,
    ) -> TraceResult {
        TraceResult {
            termination,
            end,
            direction,
            transits: self.transits,
            returns: self.returns,
            first_mouth: self.first_mouth,
            path: self.path,
            path_length: length,
        }
    }
}

fn check_finite(v: &Vector3<f64>, what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "{what} = ({}, {}, {})",
            v.x, v.y, v.z
        )))
    }
}

pub fn trace_ray(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    scene: &Scene,
    cfg: &WormholeConfig,
) -> Result<TraceResult> {
    trace_ray_with(origin, dir, scene, cfg, true)
}

/// Traces a ray from `origin` in M₁. With `record_handle` the handle portions contribute sampled
/// points to the path; otherwise only event vertices are kept.
pub fn trace_ray_with(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    scene: &Scene,
    cfg: &WormholeConfig,
    record_handle: bool,
) -> Result<TraceResult> {
    check_finite(origin, "origin")?;
    check_finite(dir, "direction")?;
    let n = dir.norm();
    if !(n > 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut skip = match classify_raw(origin, cfg)? {
        Region::OnSphere(m) => Some(m),
        _ => None,
    };
    let mut x = *origin;
    let mut d = dir / n;
    let mut length = 0.0;
    let ext = |x: Vector3<f64>, p: Vector3<f64>, path_length: f64| RayState {
        phase: Phase::Exterior { x, p },
        path_length,
    };
    let mut tally = Tally {
        path: vec![ext(x, d, 0.0)],
        transits: 0,
        returns: 0,
        first_mouth: None,
    };

    loop {
        let event = first_event_skipping(&x, &d, scene, cfg, skip);
        let remaining = cfg.max_path_length - length;
        // The budget only stops circulation through the mouths; a final board hit always counts.
        if matches!(event, Event::Sphere { .. }) && event.parameter() > remaining {
            let end = x + d * remaining.max(0.0);
            tally.path.push(ext(end, d, cfg.max_path_length));
            return Ok(tally.finish(
                Termination::Trapped,
                ManifoldPoint::Exterior(end),
                d,
                cfg.max_path_length,
            ));
        }
        let (mouth, t, point) = match event {
            Event::Sky => {
                return Ok(tally.finish(Termination::HitSky, ManifoldPoint::Exterior(x), d, length))
            }
            Event::Board { t, point } => {
                tally.path.push(ext(point, d, length + t));
                return Ok(tally.finish(
                    Termination::HitBoard,
                    ManifoldPoint::Exterior(point),
                    d,
                    length + t,
                ));
            }
            Event::Sphere { mouth, t, point } => (mouth, t, point),
        };
        let c = mouth.center(cfg.length);
        let on = c + (point - c).normalize();
        length += t;
        let state = ext(on, d, length);
        tally.path.push(state);
        if tally.entries() >= MAX_ENTRIES {
            return Err(Error::NonFinite(format!(
                "ray entered the wormhole {MAX_ENTRIES} times"
            )));
        }
        glue_map(mouth, &on, cfg)?;
        let inside = match cross_interface(&state, cfg) {
            Ok((inside, _)) => inside,
            // Grazing contact: the ray touches the sphere without entering it.
            Err(Error::NotAtInterface) => {
                x = on;
                skip = Some(mouth);
                continue;
            }
            Err(e) => return Err(e),
        };
        tally.first_mouth.get_or_insert(mouth);
        let run = propagate_handle_with(&inside, cfg, record_handle)?;
        tally.path.extend(run.samples);
        match run.outcome {
            HandleOutcome::Trapped { state } => {
                let Phase::Handle { p_tan, p_s, .. } = state.phase else {
                    unreachable!()
                };
                let cov = Vector3::new(p_tan.norm(), 0.0, p_s);
                if !record_handle {
                    tally.path.push(state);
                }
                return Ok(tally.finish(
                    Termination::Trapped,
                    state.point(),
                    cov / cov.norm().max(f64::MIN_POSITIVE),
                    state.path_length,
                ));
            }
            HandleOutcome::Exited { state, mouth: out } => {
                if out == mouth {
                    tally.returns += 1;
                } else {
                    tally.transits += 1;
                }
                let (outside, _) = cross_interface(&state, cfg)?;
                let Phase::Exterior { x: xo, p } = outside.phase else {
                    unreachable!()
                };
                check_finite(&xo, "exit point")?;
                check_finite(&p, "exit covector")?;
                tally.path.push(outside);
                length = outside.path_length;
                x = xo;
                d = p.normalize();
                skip = Some(out);
            }
        }
    }
}

pub const PATH_CSV_HEADER: &str = "chart,x_or_u1,y_or_u2,z_or_u3,s,p1,p2,p3,p_s,path_length";

/// One CSV row per path state. Exterior rows leave the s and p_s columns empty.
pub fn write_path_csv<W: Write>(path: &[RayState], mut out: W) -> Result<()> {
    writeln!(out, "{PATH_CSV_HEADER}")?;
    for st in path {
        match st.phase {
            Phase::Exterior { x, p } => writeln!(
                out,
                "exterior,{:.16e},{:.16e},{:.16e},,{:.16e},{:.16e},{:.16e},,{:.16e}",
                x.x, x.y, x.z, p.x, p.y, p.z, st.path_length
            )?,
            Phase::Handle { u, s, p_tan, p_s } => writeln!(
                out,
                "handle,{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                u.x, u.y, u.z, s, p_tan.x, p_tan.y, p_tan.z, p_s, st.path_length
            )?,
        }
    }
    Ok(())
}

/// Color seen along a traced ray.
pub fn shade(result: &TraceResult, scene: &Scene) -> Rgb {
    match (result.termination, result.end) {
        (Termination::HitBoard, ManifoldPoint::Exterior(p)) => scene.board_color(p.x, p.y),
        (Termination::HitSky, _) => scene.sky_color(&result.direction),
        _ => TRAPPED_COLOR,
    }
}
