//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use crate::config::{validate_config, WormholeConfig};
use crate::deform::DeformationMap;
use crate::error::{Error, Result};
use crate::material::{
    export, sample_grid, sigma_shell_trend, validate_material, ExportFormat, GridSpec,
    DEFAULT_MARGIN,
};
use crate::point::{normalize_handle_point, ManifoldPoint};
use crate::render::{render_detailed, threads_from_env, write_image, Camera, ImageFormat};
use crate::tracer::{trace_ray, write_path_csv, Scene};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "wormhole",
    version,
    about = "Electromagnetic wormhole ray tracer and material compiler"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the chessboard scene through the wormhole.
    Render(RenderArgs),
    /// Sample the device material tensors on a grid and export them.
    ExportMaterial(ExportArgs),
    /// Trace a single ray and print its result.
    Trace(TraceArgs),
    /// Check a configuration and report on the material it produces.
    Validate(ValidateArgs),
    /// Evaluate the deformation map at points.
    Map(MapArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration JSON; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the handle length scale δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Override the mouth separation L.
    #[arg(long)]
    length: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<WormholeConfig> {
        let mut cfg = match &self.config {
            Some(p) => WormholeConfig::load(p)?,
            None => WormholeConfig::default(),
        };
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(l) = self.length {
            cfg.length = l;
            if self.config.is_none() {
                cfg.max_path_length = WormholeConfig::new(l, cfg.delta).max_path_length;
            }
        }
        validate_config(&cfg)
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Image format; inferred from the output extension when omitted.
    #[arg(long, value_enum)]
    format: Option<ImageKind>,
    #[arg(long, default_value_t = 400)]
    width: usize,
    #[arg(long, default_value_t = 400)]
    height: usize,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    eye: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    look_at: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    up: Option<[f64; 3]>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    fov: Option<f64>,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    board_z: f64,
    /// Worker count; overrides WORMHOLE_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ImageKind {
    Ppm,
    Png,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaterialKind {
    Csv,
    Vtk,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Sampling box as x0,y0,z0,x1,y1,z1; defaults to [-4,8]x[-4,8]x[-3,L+3].
    #[arg(long = "box", value_parser = parse_box, allow_hyphen_values = true)]
    bounds: Option<[f64; 6]>,
    /// Samples per axis as n1,n2,n3.
    #[arg(long, value_parser = parse_res, default_value = "32,32,32")]
    res: [usize; 3],
    /// Distance from Sigma inside which tensors are not evaluated.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, value_enum)]
    format: MaterialKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    origin: [f64; 3],
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    dir: [f64; 3],
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    board_z: f64,
    /// Write the path states as CSV.
    #[arg(long)]
    dump_path: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Samples per axis of the default box.
    #[arg(long, default_value_t = 32)]
    res: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Query {
    Forward,
    Inverse,
    Jacobian,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    query: Query,
    /// x,y,z for an exterior point, u1,u2,u3,s for a handle point. Repeatable.
    #[arg(long = "point", value_parser = parse_floats, allow_hyphen_values = true, required = true)]
    points: Vec<Vec<f64>>,
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number \"{t}\": {e}"))
        })
        .collect()
}

fn parse_fixed<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let v = parse_floats(s)?;
    v.as_slice()
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_fixed::<3>(s)
}

fn parse_box(s: &str) -> std::result::Result<[f64; 6], String> {
    parse_fixed::<6>(s)
}

fn parse_res(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad count \"{t}\": {e}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [n] => Ok([*n; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected n or n1,n2,n3".into()),
    }
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Render(a) => cmd_render(a, out),
        Command::ExportMaterial(a) => cmd_export(a, out),
        Command::Trace(a) => cmd_trace(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Map(a) => cmd_map(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn cmd_render(a: RenderArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = a.config.load()?;
    let format = match a.format {
        Some(ImageKind::Ppm) => ImageFormat::Ppm,
        Some(ImageKind::Png) => ImageFormat::Png,
        None => ImageFormat::from_path(&a.out).unwrap_or(ImageFormat::Png),
    };
    let mut camera = Camera::preset(a.width, a.height);
    if let Some(e) = a.eye {
        camera.eye = vec3(e);
    }
    if let Some(l) = a.look_at {
        camera.look_at = vec3(l);
    }
    if let Some(u) = a.up {
        camera.up = vec3(u);
    }
    if let Some(f) = a.fov {
        camera.fov_deg = f;
    }
    let scene = Scene::with_board(a.board_z)?;
    let threads = a.threads.or_else(threads_from_env);
    let r = render_detailed(&camera, &scene, &cfg, threads)?;
    write_image(&r.image, &a.out, format)?;
    let trapped = r
        .info
        .iter()
        .filter(|p| p.termination == crate::tracer::Termination::Trapped)
        .count();
    let through = r.info.iter().filter(|p| p.transits > 0).count();
    writeln!(
        out,
        "wrote {} ({}x{}); {through} pixels see through the wormhole, {trapped} trapped",
        a.out.display(),
        a.width,
        a.height
    )?;
    Ok(EXIT_OK)
}

fn cmd_export(a: ExportArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = a.config.load()?;
    let spec = match a.bounds {
        Some(b) => GridSpec::new([b[0], b[1], b[2]], [b[3], b[4], b[5]], a.res)?,
        None => {
            let d = GridSpec::default_box(cfg.length, 2)?;
            GridSpec::new(d.lo, d.hi, a.res)?
        }
    }
    .with_margin(a.margin)?;
    let map = DeformationMap::new(&cfg)?;
    let data = sample_grid(&spec, &map)?;
    let format = match a.format {
        MaterialKind::Csv => ExportFormat::Csv,
        MaterialKind::Vtk => ExportFormat::Vtk,
    };
    export(&data, format, &a.out)?;
    writeln!(out, "wrote {}", a.out.display())?;
    write!(out, "{}", validate_material(&data))?;
    Ok(EXIT_OK)
}

fn cmd_trace(a: TraceArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = a.config.load()?;
    let scene = Scene::with_board(a.board_z)?;
    let r = trace_ray(&vec3(a.origin), &vec3(a.dir), &scene, &cfg)?;
    writeln!(out, "termination: {:?}", r.termination)?;
    match r.end {
        ManifoldPoint::Exterior(x) => writeln!(out, "end: {} {} {}", x.x, x.y, x.z)?,
        ManifoldPoint::Handle { u, s } => {
            writeln!(out, "end (handle): u = {} {} {}, s = {s}", u.x, u.y, u.z)?
        }
    }
    writeln!(
        out,
        "direction: {} {} {}",
        r.direction.x, r.direction.y, r.direction.z
    )?;
    writeln!(out, "transits: {}", r.transits)?;
    writeln!(out, "returns: {}", r.returns)?;
    writeln!(out, "path length: {}", r.path_length)?;
    if let Some(p) = a.dump_path {
        write_path_csv(&r.path, std::fs::File::create(&p)?)?;
        writeln!(out, "path: {} ({} states)", p.display(), r.path.len())?;
    }
    Ok(EXIT_OK)
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = a.config.load()?;
    writeln!(out, "config ok")?;
    write!(out, "{}", cfg.to_json_string())?;
    writeln!(out)?;
    let map = DeformationMap::new(&cfg)?;
    let spec = GridSpec::default_box(cfg.length, a.res)?;
    let rep = validate_material(&sample_grid(&spec, &map)?);
    write!(out, "{rep}")?;
    writeln!(out, "Sigma shell trend (distance, min eigenvalue):")?;
    for (d, m) in sigma_shell_trend(&map, &[1e-1, 1e-2, 1e-3, 1e-4])? {
        writeln!(out, "  {d:.0e}  {m:.6e}")?;
    }
    let ok =
        rep.failed == 0 && rep.max_symmetry_defect <= 1e-12 && rep.identity_max_deviation <= 1e-12;
    writeln!(out, "status: {}", if ok { "ok" } else { "problems found" })?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn parse_point(v: &[f64]) -> Result<ManifoldPoint> {
    match *v {
        [x, y, z] => Ok(ManifoldPoint::exterior(x, y, z)),
        [a, b, c, s] => normalize_handle_point(Vector3::new(a, b, c), s),
        _ => Err(Error::Format(format!(
            "point needs 3 or 4 components, got {}",
            v.len()
        ))),
    }
}

fn point_fields(p: &ManifoldPoint) -> String {
    match p {
        ManifoldPoint::Exterior(x) => format!("exterior,{:.16e},{:.16e},{:.16e},", x.x, x.y, x.z),
        ManifoldPoint::Handle { u, s } => {
            format!("handle,{:.16e},{:.16e},{:.16e},{:.16e}", u.x, u.y, u.z, s)
        }
    }
}

fn cmd_map(a: MapArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = a.config.load()?;
    let map = DeformationMap::new(&cfg)?;
    match a.query {
        Query::Forward => writeln!(out, "chart,x_or_u1,y_or_u2,z_or_u3,s,y1,y2,y3")?,
        Query::Inverse => writeln!(out, "y1,y2,y3,chart,x_or_u1,y_or_u2,z_or_u3,s")?,
        Query::Jacobian => writeln!(
            out,
            "chart,x_or_u1,y_or_u2,z_or_u3,s,j11,j12,j13,j21,j22,j23,j31,j32,j33,det"
        )?,
    }
    let mut failures = 0;
    for (i, v) in a.points.iter().enumerate() {
        match map_row(&map, a.query, v) {
            Ok(row) => writeln!(out, "{row}")?,
            Err(e) => {
                failures += 1;
                writeln!(err, "point {}: {e}", i + 1)?;
            }
        }
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn map_row(map: &DeformationMap, query: Query, v: &[f64]) -> Result<String> {
    Ok(match query {
        Query::Forward => {
            let p = parse_point(v)?;
            let y = map.f_forward(&p)?;
            format!(
                "{},{:.16e},{:.16e},{:.16e}",
                point_fields(&p),
                y.x,
                y.y,
                y.z
            )
        }
        Query::Inverse => {
            let [y1, y2, y3] = v[..] else {
                return Err(Error::Format("inverse queries take x,y,z points".into()));
            };
            let p = map.f_inverse(&Vector3::new(y1, y2, y3))?;
            format!("{y1:.16e},{y2:.16e},{y3:.16e},{}", point_fields(&p))
        }
        Query::Jacobian => {
            let p = parse_point(v)?;
            let j = map.jacobian(&p)?;
            let entries: Vec<String> = j
                .matrix
                .transpose()
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect();
            format!("{},{},{:.16e}", point_fields(&p), entries.join(","), j.det)
        }
    })
}
