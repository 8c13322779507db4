//! Transfinite (Coons) patches over [0,1]² and their numerical inverse.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Vector2};

pub type V2 = Vector2<f64>;

/// Boundary curve returning the point and its derivative.
pub type Curve = Box<dyn Fn(f64) -> (V2, V2) + Send + Sync>;

/// Blend across u. The cubic variant has zero slope at both ends, which keeps the u = 0 side's
/// normal derivative equal to the one given by the v-curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blend {
    Linear,
    Cubic,
}

impl Blend {
    fn eval(self, u: f64) -> (f64, f64) {
        match self {
            Blend::Linear => (u, 1.0),
            Blend::Cubic => (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u)),
        }
    }
}

/// P(u,v) interpolating c0 (v=0), c1 (v=1), d0 (u=0) and d1 (u=1).
///
/// The v=1 side may have a corner at u = `kink`; it is then given as two smooth branches, each
/// usable past the corner, and the patch is smooth on either side of the isoline u = `kink`.
///
/// With cross curves W (one per branch) the v-direction loft is the quadratic through c0, c1
/// with ∂P/∂v = W on v = 1. W must equal d0'(1) at u = 0, d1'(1) at u = 1, and the two
/// branches must agree at the kink.
pub struct Coons {
    c0: Curve,
    c1: Vec<Curve>,
    kink: f64,
    d0: Curve,
    d1: Curve,
    blend: Blend,
    cross: Option<Vec<Curve>>,
    p00: V2,
    p10: V2,
    p01: V2,
    p11: V2,
    e0: V2,
    e1: V2,
}

/// Weights of c0, c1 and W in the quadratic v-loft, and their v-derivatives.
fn quadratic(v: f64) -> ([f64; 3], [f64; 3]) {
    let s = 1.0 - v;
    (
        [s * s, 1.0 - s * s, s * s - s],
        [-2.0 * s, 2.0 * s, 1.0 - 2.0 * s],
    )
}

impl Coons {
    pub fn new(c0: Curve, c1: Curve, d0: Curve, d1: Curve, blend: Blend) -> Self {
        Coons::build(c0, vec![c1], f64::INFINITY, d0, d1, blend)
    }

    pub fn with_kink(
        c0: Curve,
        c1_below: Curve,
        c1_above: Curve,
        kink: f64,
        d0: Curve,
        d1: Curve,
        blend: Blend,
    ) -> Self {
        Coons::build(c0, vec![c1_below, c1_above], kink, d0, d1, blend)
    }

    /// Prescribes ∂P/∂v along v = 1, one curve per branch of that side.
    pub fn with_cross(mut self, cross: Vec<Curve>) -> Self {
        assert_eq!(cross.len(), self.c1.len(), "one cross curve per branch");
        self.cross = Some(cross);
        self
    }

    fn build(c0: Curve, c1: Vec<Curve>, kink: f64, d0: Curve, d1: Curve, blend: Blend) -> Self {
        let p00 = c0(0.0).0;
        let p10 = c0(1.0).0;
        let p01 = c1[0](0.0).0;
        let p11 = c1[c1.len() - 1](1.0).0;
        let e0 = d0(1.0).1;
        let e1 = d1(1.0).1;
        Coons {
            c0,
            c1,
            kink,
            d0,
            d1,
            blend,
            cross: None,
            p00,
            p10,
            p01,
            p11,
            e0,
            e1,
        }
    }

    pub fn kink(&self) -> Option<f64> {
        (self.c1.len() > 1).then_some(self.kink)
    }

    /// Smooth branch containing parameter u (0 below the kink, 1 above).
    pub fn side_of(&self, u: f64) -> usize {
        usize::from(self.c1.len() > 1 && u > self.kink)
    }

    /// Point and derivative matrix with columns ∂/∂u and ∂/∂v.
    pub fn eval(&self, u: f64, v: f64) -> (V2, Matrix2<f64>) {
        self.eval_on(u, v, self.side_of(u))
    }

    /// Evaluation using the given branch of the v=1 side regardless of u.
    pub fn eval_on(&self, u: f64, v: f64, side: usize) -> (V2, Matrix2<f64>) {
        let (c0, c0u) = (self.c0)(u);
        let (c1, c1u) = (self.c1[side])(u);
        let (d0, d0v) = (self.d0)(v);
        let (d1, d1v) = (self.d1)(v);
        let (f, fu) = self.blend.eval(u);
        if let Some(cross) = &self.cross {
            let (w, wu) = cross[side](u);
            let ([a, b, c], [av, bv, cv]) = quadratic(v);
            let left = self.p00 * a + self.p01 * b + self.e0 * c;
            let right = self.p10 * a + self.p11 * b + self.e1 * c;
            let left_v = self.p00 * av + self.p01 * bv + self.e0 * cv;
            let right_v = self.p10 * av + self.p11 * bv + self.e1 * cv;
            let p =
                c0 * a + c1 * b + w * c + d0 * (1.0 - f) + d1 * f - (left * (1.0 - f) + right * f);
            let pu = c0u * a + c1u * b + wu * c + (d1 - d0 - right + left) * fu;
            let pv = c0 * av + c1 * bv + w * cv + d0v * (1.0 - f) + d1v * f
                - (left_v * (1.0 - f) + right_v * f);
            return (p, Matrix2::from_columns(&[pu, pv]));
        }
        let corner = (self.p00 * (1.0 - v) + self.p01 * v) * (1.0 - f)
            + (self.p10 * (1.0 - v) + self.p11 * v) * f;
        let p = c0 * (1.0 - v) + c1 * v + d0 * (1.0 - f) + d1 * f - corner;
        let corner_u = ((self.p10 - self.p00) * (1.0 - v) + (self.p11 - self.p01) * v) * fu;
        let pu = c0u * (1.0 - v) + c1u * v + (d1 - d0) * fu - corner_u;
        let corner_v = (self.p01 - self.p00) * (1.0 - f) + (self.p11 - self.p10) * f;
        let pv = c1 - c0 + d0v * (1.0 - f) + d1v * f - corner_v;
        (p, Matrix2::from_columns(&[pu, pv]))
    }

    pub fn point(&self, u: f64, v: f64) -> V2 {
        self.eval(u, v).0
    }
}

/// A Coons patch with a bucket grid of parameter seeds over its image.
pub struct InvertiblePatch {
    pub patch: Coons,
    lo: V2,
    cell: V2,
    n: usize,
    seeds: Vec<(f64, f64)>,
}

/// Parameter slack allowed past [0,1] while iterating.
const PARAM_SLACK: f64 = 0.25;

impl InvertiblePatch {
    /// `n`×`n` bucket grid filled from a (4n+1)² parameter sampling; empty buckets take the
    /// seed of the nearest filled one.
    pub fn new(patch: Coons, n: usize) -> Self {
        let m = 4 * n + 1;
        let mut pts = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                let (u, v) = (i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64);
                pts.push((patch.point(u, v), u, v));
            }
        }
        let mut lo = V2::repeat(f64::INFINITY);
        let mut hi = V2::repeat(f64::NEG_INFINITY);
        for (p, _, _) in &pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let cell = (hi - lo) / n as f64;
        let mut filled: Vec<Option<(f64, f64)>> = vec![None; n * n];
        let mut this = InvertiblePatch {
            patch,
            lo,
            cell,
            n,
            seeds: Vec::new(),
        };
        for (p, u, v) in &pts {
            let k = this.bucket(p);
            if filled[k].is_none() {
                filled[k] = Some((*u, *v));
            }
        }
        let mut queue: VecDeque<usize> = (0..n * n).filter(|&k| filled[k].is_some()).collect();
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % n, k / n);
            let seed = filled[k];
            let mut visit = |ii: usize, jj: usize| {
                let kk = jj * n + ii;
                if filled[kk].is_none() {
                    filled[kk] = seed;
                    queue.push_back(kk);
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < n {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < n {
                visit(i, j + 1);
            }
        }
        this.seeds = filled
            .into_iter()
            .map(|s| s.expect("grid filled"))
            .collect();
        this
    }

    fn bucket(&self, p: &V2) -> usize {
        let idx =
            |x: f64, lo: f64, c: f64| (((x - lo) / c).floor().max(0.0) as usize).min(self.n - 1);
        idx(p.y, self.lo.y, self.cell.y) * self.n + idx(p.x, self.lo.x, self.cell.x)
    }

    pub fn seed(&self, p: &V2) -> (f64, f64) {
        self.seeds[self.bucket(p)]
    }

    /// Parameters (u, v) with P(u, v) = p, if they exist within [0,1]² up to `param_tol`.
    /// `res_tol` bounds the final residual |P(u,v) − p|.
    pub fn invert(&self, p: &V2, param_tol: f64, res_tol: f64) -> Option<(f64, f64)> {
        let seed = self.seed(p);
        let first = self.patch.side_of(seed.0);
        let inside = |t: f64| t >= -param_tol && t <= 1.0 + param_tol;
        let attempt = |side: usize, seed: (f64, f64)| {
            let (u, v) = newton(&self.patch, p, seed, res_tol, side)?;
            let on_branch = match self.patch.kink() {
                None => true,
                Some(k) if side == 0 => u <= k + param_tol,
                Some(k) => u >= k - param_tol,
            };
            (on_branch && inside(u) && inside(v)).then_some((u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)))
        };
        if let Some(r) = attempt(first, seed) {
            return Some(r);
        }
        let k = self.patch.kink()?;
        attempt(1 - first, (k, seed.1))
    }
}

/// Damped Newton iteration on one branch, at most 50 steps, run until the residual stops
/// improving.
fn newton(
    patch: &Coons,
    target: &V2,
    seed: (f64, f64),
    res_tol: f64,
    side: usize,
) -> Option<(f64, f64)> {
    let scale = target.norm().max(1.0);
    let (mut u, mut v) = seed;
    let (mut p, mut jac) = patch.eval_on(u, v, side);
    let mut res = (p - target).norm();
    for _ in 0..50 {
        if res <= 4.0 * f64::EPSILON * scale {
            return Some((u, v));
        }
        let step = jac.try_inverse()? * (p - target);
        let mut t = 1.0;
        let improved = loop {
            let uu = (u - t * step.x).clamp(-PARAM_SLACK, 1.0 + PARAM_SLACK);
            let vv = (v - t * step.y).clamp(-PARAM_SLACK, 1.0 + PARAM_SLACK);
            let (pp, jj) = patch.eval_on(uu, vv, side);
            let rr = (pp - target).norm();
            if rr < res {
                (u, v, p, jac, res) = (uu, vv, pp, jj, rr);
                break true;
            }
            if t < 1e-4 {
                break false;
            }
            t *= 0.5;
        };
        if !improved {
            break;
        }
    }
    (res <= res_tol).then_some((u, v))
}
