//! Pinhole-camera rendering of the scene as seen on the wormhole manifold.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::config::WormholeConfig;
use crate::error::{Error, Result};
use crate::handle::{classify_raw, Region};
use crate::point::Mouth;
use crate::tracer::{shade, trace_ray_with, Scene, Termination};

/// Environment variable that overrides the number of render workers.
pub const THREADS_ENV: &str = "WORMHOLE_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub eye: Vector3<f64>,
    pub look_at: Vector3<f64>,
    pub up: Vector3<f64>,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Documented preset: above the board and in front of mouth O, looking down at it.
    pub fn preset(width: usize, height: usize) -> Camera {
        Camera {
            eye: Vector3::new(0.0, -6.0, 4.0),
            look_at: Vector3::zeros(),
            up: Vector3::new(0.0, 0.0, 1.0),
            fov_deg: 30.0,
            width,
            height,
        }
    }

    pub fn validate(&self, cfg: &WormholeConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCamera(m));
        if !(self.fov_deg > 0.0 && self.fov_deg < 170.0) {
            return bad(format!(
                "field of view {} outside (0, 170) degrees",
                self.fov_deg
            ));
        }
        if self.width < 1 || self.height < 1 {
            return bad(format!(
                "image size {}x{} must be at least 1x1",
                self.width, self.height
            ));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !(finite(&self.eye) && finite(&self.look_at) && finite(&self.up)) {
            return bad("non-finite camera vector".into());
        }
        match classify_raw(&self.eye, cfg) {
            Ok(Region::Exterior) => {}
            _ => return bad("eye must lie outside both closed balls".into()),
        }
        let f = self.look_at - self.eye;
        if f.norm() == 0.0 || f.cross(&self.up).norm() <= 1e-12 * f.norm() * self.up.norm() {
            return bad("view direction must be nonzero and not parallel to up".into());
        }
        Ok(())
    }

    /// Unit direction through the center of pixel (x, y); row 0 is the top of the image.
    pub fn ray(&self, x: usize, y: usize) -> Vector3<f64> {
        let f = (self.look_at - self.eye).normalize();
        let r = f.cross(&self.up).normalize();
        let u = r.cross(&f);
        let half = (self.fov_deg.to_radians() / 2.0).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = (2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0) * half * aspect;
        let sy = (1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64) * half;
        (f + r * sx + u * sy).normalize()
    }
}

/// Row-major RGB8 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> ImageBuffer {
        ImageBuffer {
            width,
            height,
            pixels: vec![0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> ImageBuffer {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        ImageBuffer {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 || self.pixels.len() != 3 * self.width * self.height {
            return Err(Error::Format(format!(
                "buffer of {} bytes does not match {}x{} RGB",
                self.pixels.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    /// 2×2 box-filter downsample; odd trailing rows and columns are dropped.
    pub fn downsample2(&self) -> ImageBuffer {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut out = ImageBuffer::new(w, h);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let sum: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                        .iter()
                        .map(|&(dx, dy)| self.get(2 * x + dx, 2 * y + dy)[c] as u32)
                        .sum();
                    out.pixels[3 * (y * w + x) + c] = ((sum + 2) / 4) as u8;
                }
            }
        }
        out
    }

    /// Mean absolute per-channel difference in units of 1/255.
    pub fn mean_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Format("image sizes differ".into()));
        }
        let total: u64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
            .sum();
        Ok(total as f64 / self.pixels.len() as f64)
    }
}

/// Per-pixel tracing summary kept alongside the image for structural checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelInfo {
    pub termination: Termination,
    pub transits: u32,
    pub returns: u32,
    pub first_mouth: Option<Mouth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    pub image: ImageBuffer,
    /// Row-major, one entry per pixel.
    pub info: Vec<PixelInfo>,
}

fn to_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Worker count from the environment, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

pub fn render(camera: &Camera, scene: &Scene, cfg: &WormholeConfig) -> Result<ImageBuffer> {
    Ok(render_detailed(camera, scene, cfg, threads_from_env())?.image)
}

/// Renders with `threads` workers (rayon's default when `None`). Output does not depend on the
/// worker count.
pub fn render_detailed(
    camera: &Camera,
    scene: &Scene,
    cfg: &WormholeConfig,
    threads: Option<usize>,
) -> Result<Render> {
    camera.validate(cfg)?;
    scene.validate()?;
    let work = || {
        (0..camera.height)
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::with_capacity(camera.width);
                for x in 0..camera.width {
                    let r = trace_ray_with(&camera.eye, &camera.ray(x, y), scene, cfg, false)
                        .map_err(|e| Error::Pixel {
                            x,
                            y,
                            source: Box::new(e),
                        })?;
                    let info = PixelInfo {
                        termination: r.termination,
                        transits: r.transits,
                        returns: r.returns,
                        first_mouth: r.first_mouth,
                    };
                    row.push((shade(&r, scene), info));
                }
                Ok(row)
            })
            .collect::<Vec<Result<Vec<_>>>>()
    };
    let rows = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut image = ImageBuffer::new(camera.width, camera.height);
    let mut info = Vec::with_capacity(camera.width * camera.height);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (rgb, px)) in row?.into_iter().enumerate() {
            let i = 3 * (y * camera.width + x);
            for (dst, v) in image.pixels[i..i + 3].iter_mut().zip(rgb) {
                *dst = to_byte(v);
            }
            info.push(px);
        }
    }
    Ok(Render { image, info })
}

/// Number of 4-connected components of pixels showing imagery from beyond a mouth.
pub fn far_end_components(render: &Render) -> usize {
    let (w, h) = (render.image.width, render.image.height);
    let inside = |i: usize| render.info[i].transits > 0;
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || !inside(start) {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if !seen[j] && inside(j) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
    }
    count
}

/// Board/sky alternations down the middle column, counted over pixels whose ray entered a mouth.
pub fn centerline_transitions(render: &Render) -> usize {
    let (w, h) = (render.image.width, render.image.height);
    let x = w / 2;
    let mut last = None;
    let mut count = 0;
    for y in 0..h {
        let px = render.info[y * w + x];
        if px.first_mouth.is_none() || px.termination == Termination::Trapped {
            continue;
        }
        if last.is_some_and(|t| t != px.termination) {
            count += 1;
        }
        last = Some(px.termination);
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<ImageFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

pub fn ppm_bytes(buf: &ImageBuffer) -> Result<Vec<u8>> {
    buf.validate()?;
    let mut out = format!("P6\n{} {}\n255\n", buf.width, buf.height).into_bytes();
    out.extend_from_slice(&buf.pixels);
    Ok(out)
}

pub fn write_image(buf: &ImageBuffer, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Ppm => fs::write(path, ppm_bytes(buf)?)?,
        ImageFormat::Png => {
            buf.validate()?;
            let img =
                image::RgbImage::from_raw(buf.width as u32, buf.height as u32, buf.pixels.clone())
                    .ok_or_else(|| Error::Format("buffer size mismatch".into()))?;
            img.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| Error::Io(e.to_string()))?
        .to_rgb8();
    Ok(ImageBuffer {
        width: img.width() as usize,
        height: img.height() as usize,
        pixels: img.into_raw(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_layout() {
        let b = ppm_bytes(&ImageBuffer::filled(1, 1, [255; 3])).unwrap();
        assert_eq!(b, b"P6\n1 1\n255\n\xff\xff\xff");
        let b = ppm_bytes(&ImageBuffer::new(2, 2)).unwrap();
        assert_eq!(b.len() - b"P6\n2 2\n255\n".len(), 12);
    }

    #[test]
    fn camera_validation() {
        let cfg = WormholeConfig::new(10.0, 1.0);
        assert!(Camera::preset(4, 4).validate(&cfg).is_ok());
        let mut c = Camera::preset(4, 4);
        c.eye = Vector3::new(0.0, 0.0, 0.5);
        assert!(c.validate(&cfg).is_err());
        c.eye = Vector3::new(0.0, 0.0, 1.0);
        assert!(c.validate(&cfg).is_err());
        let mut c = Camera::preset(4, 4);
        c.fov_deg = 170.0;
        assert!(c.validate(&cfg).is_err());
        let mut c = Camera::preset(0, 4);
        assert!(c.validate(&cfg).is_err());
        c.width = 4;
        c.up = c.look_at - c.eye;
        assert!(c.validate(&cfg).is_err());
    }

    #[test]
    fn center_ray_points_at_target() {
        let c = Camera::preset(3, 3);
        let d = c.ray(1, 1);
        assert!((d - (c.look_at - c.eye).normalize()).norm() < 1e-15);
        assert!(c.ray(1, 0).z > d.z);
        assert!(c.ray(2, 1).x > d.x);
    }

    #[test]
    fn downsample_averages() {
        let mut b = ImageBuffer::new(2, 2);
        b.pixels[0] = 200;
        b.pixels[3] = 100;
        assert_eq!(b.downsample2().pixels, vec![75, 0, 0]);
    }
}
