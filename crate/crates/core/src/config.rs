//! Construction parameters and their validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WARP_SAMPLES: usize = 1024;
const WARP_END_TOL: f64 = 1e-12;

/// Radius profile r(s) of the handle's sphere factor.
#[derive(Debug, Clone, PartialEq)]
pub enum WarpProfile {
    Constant,
    /// Piecewise-linear interpolation of (s, r) knots.
    Knots(Vec<(f64, f64)>),
}

impl WarpProfile {
    pub fn is_constant(&self) -> bool {
        matches!(self, WarpProfile::Constant)
    }

    /// Number of linear segments (1 for the constant profile).
    pub fn segment_count(&self) -> usize {
        match self {
            WarpProfile::Constant => 1,
            WarpProfile::Knots(k) => k.len().saturating_sub(1).max(1),
        }
    }

    /// Segment containing s; knots belong to the segment on their right, except s = 1.
    /// Values outside [0, 1] fall into the end segments.
    pub fn segment_of(&self, s: f64) -> usize {
        match self {
            WarpProfile::Constant => 0,
            WarpProfile::Knots(k) => {
                let n = k.len() - 1;
                let idx = k[1..n].iter().take_while(|(ks, _)| *ks <= s).count();
                idx.min(n - 1)
            }
        }
    }

    /// Start knot s, radius there and slope of segment `i`.
    pub fn segment_line(&self, i: usize) -> (f64, f64, f64) {
        match self {
            WarpProfile::Constant => (0.0, 1.0, 0.0),
            WarpProfile::Knots(k) => {
                let (s0, r0) = k[i];
                let (s1, r1) = k[i + 1];
                (s0, r0, (r1 - r0) / (s1 - s0))
            }
        }
    }

    /// Fiber interval [s_start, s_end] of segment `i`.
    pub fn segment_bounds(&self, i: usize) -> (f64, f64) {
        match self {
            WarpProfile::Constant => (0.0, 1.0),
            WarpProfile::Knots(k) => (k[i].0, k[i + 1].0),
        }
    }

    /// r(s) and r'(s) using the linear formula of segment `i`, extended past its ends.
    pub fn eval_on_segment(&self, i: usize, s: f64) -> (f64, f64) {
        let (s0, r0, m) = self.segment_line(i);
        (r0 + m * (s - s0), m)
    }

    pub fn radius(&self, s: f64) -> f64 {
        self.eval_on_segment(self.segment_of(s), s).0
    }

    /// Smallest radius over the profile (attained at a knot).
    pub fn min_radius(&self) -> f64 {
        match self {
            WarpProfile::Constant => 1.0,
            WarpProfile::Knots(k) => k.iter().map(|k| k.1).fold(f64::INFINITY, f64::min),
        }
    }
}

/// All parameters of the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WormholeConfig {
    /// Separation of the two ball centers along z.
    pub length: f64,
    /// Handle length scale δ.
    pub delta: f64,
    pub warp: WarpProfile,
    /// Inlet-patch parameter t0 of the meridian map, in (0, 1).
    pub collar_width: f64,
    pub newton_tol: f64,
    /// RK4 step for warped handles, in units of the fiber coordinate s.
    pub ode_step: f64,
    pub max_path_length: f64,
}

impl Default for WormholeConfig {
    fn default() -> Self {
        WormholeConfig::new(10.0, 1.0)
    }
}

impl WormholeConfig {
    pub fn new(length: f64, delta: f64) -> Self {
        WormholeConfig {
            length,
            delta,
            warp: WarpProfile::Constant,
            collar_width: 0.5,
            newton_tol: 1e-10,
            ode_step: 1e-3,
            max_path_length: 100.0 * length,
        }
    }

    pub fn with_warp(mut self, warp: WarpProfile) -> Self {
        self.warp = warp;
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let length = file.length.unwrap_or(10.0);
        let mut cfg = WormholeConfig::new(length, file.delta.unwrap_or(1.0));
        if let Some(w) = file.warp {
            cfg.warp = match w {
                WarpSpec::Name(name) if name == "constant" => WarpProfile::Constant,
                WarpSpec::Name(name) => {
                    return Err(Error::ConfigParse(format!(
                        "unknown warp profile \"{name}\""
                    )))
                }
                WarpSpec::Table(rows) => {
                    WarpProfile::Knots(rows.into_iter().map(|[s, r]| (s, r)).collect())
                }
            };
        }
        if let Some(v) = file.collar_width {
            cfg.collar_width = v;
        }
        if let Some(v) = file.newton_tol {
            cfg.newton_tol = v;
        }
        if let Some(v) = file.ode_step {
            cfg.ode_step = v;
        }
        if let Some(v) = file.max_path_length {
            cfg.max_path_length = v;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        WormholeConfig::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let warp = match &self.warp {
            WarpProfile::Constant => WarpSpec::Name("constant".into()),
            WarpProfile::Knots(k) => WarpSpec::Table(k.iter().map(|&(s, r)| [s, r]).collect()),
        };
        let file = ConfigFile {
            length: Some(self.length),
            delta: Some(self.delta),
            warp: Some(warp),
            collar_width: Some(self.collar_width),
            newton_tol: Some(self.newton_tol),
            ode_step: Some(self.ode_step),
            max_path_length: Some(self.max_path_length),
        };
        serde_json::to_string_pretty(&file).expect("config serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "L")]
    length: Option<f64>,
    delta: Option<f64>,
    warp: Option<WarpSpec>,
    collar_width: Option<f64>,
    newton_tol: Option<f64>,
    ode_step: Option<f64>,
    max_path_length: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum WarpSpec {
    Name(String),
    Table(Vec<[f64; 2]>),
}

/// Returns the config unchanged when every invariant holds, otherwise every violation.
pub fn validate_config(cfg: &WormholeConfig) -> Result<WormholeConfig> {
    let mut errs = Vec::new();
    if !(cfg.length > 3.0) || !cfg.length.is_finite() {
        errs.push("L must exceed 3".to_string());
    }
    if !(cfg.delta > 0.0) || !cfg.delta.is_finite() {
        errs.push("delta must be positive".to_string());
    }
    if let Some(msg) = check_warp(&cfg.warp) {
        errs.push(msg);
    }
    if !(cfg.collar_width > 0.0 && cfg.collar_width < 1.0) {
        errs.push("collar_width must lie in (0, 1)".to_string());
    }
    for (name, v) in [
        ("newton_tol", cfg.newton_tol),
        ("ode_step", cfg.ode_step),
        ("max_path_length", cfg.max_path_length),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            errs.push(format!("{name} must be positive"));
        }
    }
    if errs.is_empty() {
        Ok(cfg.clone())
    } else {
        Err(Error::InvalidConfig(errs))
    }
}

fn check_warp(warp: &WarpProfile) -> Option<String> {
    let WarpProfile::Knots(k) = warp else {
        return None;
    };
    if k.len() < 2
        || k.iter().any(|(s, r)| !s.is_finite() || !r.is_finite())
        || k.windows(2).any(|w| !(w[1].0 > w[0].0))
        || k[0].0 != 0.0
        || k[k.len() - 1].0 != 1.0
    {
        return Some("warp knots must be strictly increasing in s and span [0, 1]".to_string());
    }
    let positive = (0..WARP_SAMPLES)
        .all(|i| warp.radius(i as f64 / (WARP_SAMPLES - 1) as f64) > 0.0)
        && warp.min_radius() > 0.0;
    let ends = (warp.radius(0.0) - 1.0).abs() <= WARP_END_TOL
        && (warp.radius(1.0) - 1.0).abs() <= WARP_END_TOL;
    if !positive || !ends {
        return Some("warp profile must be positive and match unit spheres".to_string());
    }
    None
}
