//! Device material tensors ε̃ = μ̃ = F_*(√det g · g⁻¹), grid sampling, validation and export.

use std::fmt::{self, Write as _};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;

use crate::config::WormholeConfig;
use crate::deform::{DeformationMap, JacobianRecord};
use crate::error::{Error, Result};
use crate::point::{sphere_angles, ManifoldPoint};
use crate::tensor::SymTensor3;

/// Default exclusion margin around Σ.
pub const DEFAULT_MARGIN: f64 = 1e-3;

/// Sample flags, combined as a bit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Flags(pub u8);

impl Flags {
    pub const IDENTITY_REGION: Flags = Flags(1);
    pub const NEAR_SIGMA: Flags = Flags(2);
    pub const CHANNEL: Flags = Flags(4);
    /// Inside the obstacle K.
    pub const EXCLUDED: Flags = Flags(8);
    /// Within the seam band of the piecewise map; the tensor is the one-sided value.
    pub const SEAM: Flags = Flags(16);
    /// Evaluation failed for another reason (inverse did not converge, ...).
    pub const FAILED: Flags = Flags(32);

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Flags) {
        self.0 |= other.0;
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;
    fn bitor(self, rhs: Flags) -> Flags {
        Flags(self.0 | rhs.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSample {
    pub position: Vector3<f64>,
    /// None for points inside K, within the margin, or that failed.
    pub epsilon: Option<SymTensor3>,
    pub mu: Option<SymTensor3>,
    pub dist_sigma: f64,
    pub flags: Flags,
    /// max |A − Aᵀ| of the unsymmetrized pushforward.
    pub symmetry_defect: f64,
    pub jacobian_det: f64,
}

/// √det g · g⁻¹ for a metric given in some frame.
pub fn material_from_metric(g: &SymTensor3) -> Result<SymTensor3> {
    let det = g.det();
    if !(det > 0.0) {
        return Err(Error::NonPositiveDeterminant(det));
    }
    let inv = g
        .to_matrix()
        .try_inverse()
        .ok_or(Error::NonPositiveDeterminant(det))?;
    Ok(SymTensor3::from_upper(&(inv * det.sqrt())))
}

/// Material on M in the chart frame used by the Jacobian: identity on the exterior; on the
/// handle, in the chart (ψcosθ, ψsinθ, s), diag(δ sinψ/ψ, δψ/sinψ, r² sinψ/(ψδ)) in the
/// (e_ρ, e_θ, e_s) frame rotated to azimuth θ.
pub fn material_on_m(x: &ManifoldPoint, cfg: &WormholeConfig) -> SymTensor3 {
    match x {
        ManifoldPoint::Exterior(_) => SymTensor3::IDENTITY,
        ManifoldPoint::Handle { u, s } => {
            let (psi, theta) = sphere_angles(u);
            let f = if psi < 1e-6 {
                1.0 - psi * psi / 6.0
            } else {
                psi.sin() / psi
            };
            let d = cfg.delta;
            let r = cfg.warp.radius(*s);
            let local = SymTensor3::diag(d * f, d / f, r * r * f / d);
            local.conjugate(Rotation3::from_axis_angle(&Vector3::z_axis(), theta).matrix())
        }
    }
}

/// DF·T·DFᵀ / det DF, with the asymmetry of the raw product.
pub fn pushforward_full(t: &SymTensor3, j: &JacobianRecord) -> Result<(SymTensor3, f64)> {
    if !(j.det > 0.0) {
        return Err(Error::NonPositiveDeterminant(j.det));
    }
    let a: Matrix3<f64> = j.matrix * t.to_matrix() * j.matrix.transpose() / j.det;
    let defect = (a - a.transpose()).abs().max();
    Ok((SymTensor3::from_upper(&a), defect))
}

pub fn pushforward(t: &SymTensor3, j: &JacobianRecord) -> Result<SymTensor3> {
    pushforward_full(t, j).map(|(p, _)| p)
}

/// Material at a device point y ∉ K, farther than `margin` from Σ.
pub fn material_at(y: &Vector3<f64>, map: &DeformationMap, margin: f64) -> Result<MaterialSample> {
    let dev = &map.device;
    let dist = dev.dist_sigma(y);
    let identity = dev.in_identity_region(y);
    if !identity {
        if dev.in_obstacle(y) {
            return Err(Error::InsideObstacle);
        }
        if dist <= margin {
            return Err(Error::NearSigma(dist));
        }
    }
    let x = map.f_inverse(y)?;
    let (jac, on_seam) = map.jacobian_one_sided(&x)?;
    let (eps, defect) = pushforward_full(&material_on_m(&x, map.config()), &jac)?;
    // Both tensors are the pushforward of the same Hodge tensor.
    let mu = eps;
    let mut flags = Flags::default();
    if identity {
        flags.insert(Flags::IDENTITY_REGION);
    }
    if dev.in_channel(y) {
        flags.insert(Flags::CHANNEL);
    }
    if on_seam {
        flags.insert(Flags::SEAM);
    }
    Ok(MaterialSample {
        position: *y,
        epsilon: Some(eps),
        mu: Some(mu),
        dist_sigma: dist,
        flags,
        symmetry_defect: defect,
        jacobian_det: jac.det,
    })
}

/// Axis-aligned sampling box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub res: [usize; 3],
    pub margin: f64,
}

impl GridSpec {
    pub fn new(lo: [f64; 3], hi: [f64; 3], res: [usize; 3]) -> Result<Self> {
        let g = GridSpec {
            lo,
            hi,
            res,
            margin: DEFAULT_MARGIN,
        };
        g.validate()?;
        Ok(g)
    }

    /// The default box [−4,8]×[−4,8]×[−3,L+3].
    pub fn default_box(length: f64, n: usize) -> Result<Self> {
        GridSpec::new([-4.0, -4.0, -3.0], [8.0, 8.0, length + 3.0], [n, n, n])
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        self.margin = margin;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for k in 0..3 {
            if self.res[k] < 2 {
                errs.push(format!("resolution along axis {k} must be at least 2"));
            }
            if !(self.lo[k].is_finite() && self.hi[k].is_finite() && self.lo[k] < self.hi[k]) {
                errs.push(format!("box is empty along axis {k}"));
            }
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            errs.push("margin must be finite and nonnegative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGrid(errs.join("; ")))
        }
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|k| (self.hi[k] - self.lo[k]) / (self.res[k] - 1) as f64)
    }

    /// Point with flat index `idx`; x varies fastest, then y, then z.
    pub fn point(&self, idx: usize) -> Vector3<f64> {
        let [n1, n2, _] = self.res;
        let (i, j, k) = (idx % n1, (idx / n1) % n2, idx / (n1 * n2));
        let at = |a: usize, n: usize, t: usize| {
            if t == n - 1 {
                self.hi[a]
            } else {
                self.lo[a] + (self.hi[a] - self.lo[a]) * t as f64 / (n - 1) as f64
            }
        };
        Vector3::new(at(0, n1, i), at(1, n2, j), at(2, self.res[2], k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDataset {
    /// The grid the samples were taken on, if any.
    pub grid: Option<GridSpec>,
    pub samples: Vec<MaterialSample>,
}

/// Sample without a tensor, flagged.
fn flagged(y: Vector3<f64>, dist: f64, flags: Flags) -> MaterialSample {
    MaterialSample {
        position: y,
        epsilon: None,
        mu: None,
        dist_sigma: dist,
        flags,
        symmetry_defect: 0.0,
        jacobian_det: f64::NAN,
    }
}

fn sample_point(y: Vector3<f64>, map: &DeformationMap, margin: f64) -> MaterialSample {
    match material_at(&y, map, margin) {
        Ok(s) => s,
        Err(e) => {
            let dist = map.device.dist_sigma(&y);
            let flags = match e {
                Error::InsideObstacle if map.device.in_obstacle(&y) => Flags::EXCLUDED,
                Error::InsideObstacle | Error::NearSigma(_) => Flags::NEAR_SIGMA,
                _ => Flags::FAILED,
            };
            flagged(y, dist, flags)
        }
    }
}

/// Samples the material on a grid in parallel; per-point failures become flags.
pub fn sample_grid(spec: &GridSpec, map: &DeformationMap) -> Result<MaterialDataset> {
    spec.validate()?;
    let samples = (0..spec.len())
        .into_par_iter()
        .map(|i| sample_point(spec.point(i), map, spec.margin))
        .collect();
    Ok(MaterialDataset {
        grid: Some(*spec),
        samples,
    })
}

/// Distance bands of the trend table, as (lower, upper) bounds on dist_sigma.
pub const TREND_BANDS: [(f64, f64); 4] = [(1e-4, 1e-3), (1e-3, 1e-2), (1e-2, 1e-1), (1e-1, 1.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialReport {
    pub samples: usize,
    pub with_tensor: usize,
    pub excluded: usize,
    pub near_sigma: usize,
    pub failed: usize,
    pub seam: usize,
    /// Largest of the raw pushforward asymmetry and max |ε̃ − μ̃|.
    pub max_symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub identity_max_deviation: f64,
    /// Smallest eigenvalue per distance band (None when the band is empty).
    pub trend: Vec<((f64, f64), Option<f64>)>,
}

impl MaterialReport {
    pub fn percent_excluded(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        100.0 * (self.samples - self.with_tensor) as f64 / self.samples as f64
    }
}

pub fn validate_material(data: &MaterialDataset) -> MaterialReport {
    let mut rep = MaterialReport {
        samples: data.samples.len(),
        with_tensor: 0,
        excluded: 0,
        near_sigma: 0,
        failed: 0,
        seam: 0,
        max_symmetry_defect: 0.0,
        min_eigenvalue: f64::INFINITY,
        identity_max_deviation: 0.0,
        trend: TREND_BANDS.iter().map(|&b| (b, None)).collect(),
    };
    for s in &data.samples {
        let f = s.flags;
        rep.excluded += usize::from(f.contains(Flags::EXCLUDED));
        rep.near_sigma += usize::from(f.contains(Flags::NEAR_SIGMA));
        rep.failed += usize::from(f.contains(Flags::FAILED));
        rep.seam += usize::from(f.contains(Flags::SEAM));
        let Some(eps) = s.epsilon else { continue };
        rep.with_tensor += 1;
        let mu_gap = s.mu.map_or(f64::INFINITY, |mu| mu.max_abs_diff(&eps));
        rep.max_symmetry_defect = rep.max_symmetry_defect.max(s.symmetry_defect).max(mu_gap);
        let lo = eps.eigenvalues()[0];
        rep.min_eigenvalue = rep.min_eigenvalue.min(lo);
        if f.contains(Flags::IDENTITY_REGION) {
            rep.identity_max_deviation = rep
                .identity_max_deviation
                .max(eps.max_abs_diff(&SymTensor3::IDENTITY));
        }
        for (band, min) in rep.trend.iter_mut() {
            if s.dist_sigma >= band.0 && s.dist_sigma < band.1 {
                *min = Some(min.map_or(lo, |m: f64| m.min(lo)));
            }
        }
    }
    rep
}

/// Smallest eigenvalue of ε̃ at the given distances outside the straight part of Σ, at height
/// L/2 and azimuth 0. Used for the near-Σ trend.
pub fn sigma_shell_trend(map: &DeformationMap, distances: &[f64]) -> Result<Vec<(f64, f64)>> {
    let half = 0.5 * map.config().length;
    distances
        .iter()
        .map(|&d| {
            let s = material_at(&Vector3::new(3.0 + d, 0.0, half), map, 0.0)?;
            Ok((
                d,
                s.epsilon
                    .expect("material_at returns a tensor")
                    .eigenvalues()[0],
            ))
        })
        .collect()
}

impl fmt::Display for MaterialReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples:                 {}", self.samples)?;
        writeln!(f, "with tensor:             {}", self.with_tensor)?;
        writeln!(f, "excluded (inside K):     {}", self.excluded)?;
        writeln!(f, "near Sigma:              {}", self.near_sigma)?;
        writeln!(f, "failed:                  {}", self.failed)?;
        writeln!(f, "on seams:                {}", self.seam)?;
        writeln!(
            f,
            "excluded total:          {:.2}%",
            self.percent_excluded()
        )?;
        writeln!(
            f,
            "max symmetry defect:     {:.3e}",
            self.max_symmetry_defect
        )?;
        writeln!(f, "min eigenvalue:          {:.6e}", self.min_eigenvalue)?;
        writeln!(
            f,
            "identity max deviation:  {:.3e}",
            self.identity_max_deviation
        )?;
        writeln!(f, "dist_sigma band          min eigenvalue")?;
        for ((lo, hi), m) in &self.trend {
            match m {
                Some(m) => writeln!(f, "[{lo:.0e}, {hi:.0e})        {m:.6e}")?,
                None => writeln!(f, "[{lo:.0e}, {hi:.0e})        -")?,
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "x,y,z,exx,exy,exz,eyy,eyz,ezz,flags";

/// Writes the CSV form: one header row, then one row per sample with 17 significant digits.
/// Samples without a tensor carry NaN components.
pub fn write_csv<W: Write>(data: &MaterialDataset, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{CSV_HEADER}")?;
    let mut line = String::new();
    for s in &data.samples {
        line.clear();
        let comps = s.epsilon.map_or([f64::NAN; 6], |e| e.to_array());
        for v in s.position.iter().chain(comps.iter()) {
            write!(line, "{v:.16e},").expect("writing to a String");
        }
        writeln!(w, "{line}{}", s.flags.0)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<MaterialDataset> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))??;
    if header.trim() != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header: {header}")));
    }
    let mut samples = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("line {}: {what}", n + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad("expected 10 fields"));
        }
        let mut v = [0.0; 9];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = fields[k].trim().parse().map_err(|_| bad("bad number"))?;
        }
        let flags = Flags(fields[9].trim().parse().map_err(|_| bad("bad flags"))?);
        let comps: [f64; 6] = v[3..].try_into().expect("six components");
        let eps = comps
            .iter()
            .all(|c| !c.is_nan())
            .then(|| SymTensor3::from_array(comps));
        samples.push(MaterialSample {
            position: Vector3::new(v[0], v[1], v[2]),
            epsilon: eps,
            mu: eps,
            dist_sigma: f64::NAN,
            flags,
            symmetry_defect: 0.0,
            jacobian_det: f64::NAN,
        });
    }
    Ok(MaterialDataset {
        grid: None,
        samples,
    })
}

/// Legacy VTK STRUCTURED_POINTS with the fields epsilon_sym6 (xx,xy,xz,yy,yz,zz), dist_sigma and
/// flags. Samples without a tensor are written as zeros.
pub fn write_vtk<W: Write>(data: &MaterialDataset, out: W) -> Result<()> {
    let grid = data
        .grid
        .ok_or_else(|| Error::Format("VTK export needs a grid dataset".into()))?;
    if grid.len() != data.samples.len() {
        return Err(Error::Format("sample count does not match the grid".into()));
    }
    let mut w = BufWriter::new(out);
    let [n1, n2, n3] = grid.res;
    let [dx, dy, dz] = grid.spacing();
    let n = grid.len();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(
        w,
        "wormhole device material; SH boundary condition required on Sigma"
    )?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {n1} {n2} {n3}")?;
    writeln!(
        w,
        "ORIGIN {:.16e} {:.16e} {:.16e}",
        grid.lo[0], grid.lo[1], grid.lo[2]
    )?;
    writeln!(w, "SPACING {dx:.16e} {dy:.16e} {dz:.16e}")?;
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS dist_sigma double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for s in &data.samples {
        writeln!(w, "{:.16e}", s.dist_sigma)?;
    }
    writeln!(w, "FIELD material 2")?;
    writeln!(w, "epsilon_sym6 6 {n} double")?;
    for s in &data.samples {
        let c = s.epsilon.map_or([0.0; 6], |e| e.to_array());
        writeln!(
            w,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            c[0], c[1], c[2], c[3], c[4], c[5]
        )?;
    }
    writeln!(w, "flags 1 {n} int")?;
    for s in &data.samples {
        writeln!(w, "{}", s.flags.0)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Vtk,
}

pub fn export(data: &MaterialDataset, format: ExportFormat, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    match format {
        ExportFormat::Csv => write_csv(data, file),
        ExportFormat::Vtk => write_vtk(data, file),
    }
}

/// Rotation by θ about the z axis.
pub fn azimuth_rotation(theta: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), theta).matrix()
}
