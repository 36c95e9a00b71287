//! Parametric light extraction and the angular error between light sets.
//!
//! Lights are found by repeatedly seeding at the brightest unassigned pixel
//! and flood-filling (4-connected, wrapping in azimuth) every unassigned
//! pixel at or above a fraction of the seed intensity. Each region is
//! summarized by the minimum-area ellipse around its convex hull; the
//! ellipse center gives the light direction.

pub mod ellipse;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_to_direction, solid_angle_weights, Direction};
use crate::image::{Domain, EnvironmentMap};

pub use ellipse::{convex_hull, fit_enclosing_ellipse, Ellipse};

/// Extraction thresholds. The defaults are the canonical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub max_lights: usize,
    /// Region growth stops below this fraction of the seed intensity.
    pub region_fraction: f64,
    /// Extraction stops once the next seed is below this fraction of the
    /// first (largest) seed.
    pub stop_fraction: f64,
    /// Regions covering more than this fraction of the sphere are ambient
    /// and carry no usable direction.
    pub degenerate_coverage: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            max_lights: 5,
            region_fraction: 0.30,
            stop_fraction: 0.90,
            degenerate_coverage: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricLight {
    pub direction: Direction,
    /// Ellipse in pixel-index coordinates, center wrapped into `[0, width)`.
    pub ellipse: Ellipse,
    pub peak_intensity: f64,
    pub region_pixel_count: usize,
    /// Steradians covered by the region.
    pub solid_angle: f64,
    pub degenerate: bool,
    /// Region pixels as `(u, v)` indices.
    pub region: Vec<(usize, usize)>,
}

impl ParametricLight {
    /// Ellipse level of pixel `(u, v)`, unwrapping `u` to the copy nearest
    /// the ellipse center.
    pub fn level_wrapped(&self, u: f64, v: f64, width: usize) -> f64 {
        let w = width as f64;
        let du = (u - self.ellipse.u + w / 2.0).rem_euclid(w) - w / 2.0;
        self.ellipse.level(self.ellipse.u + du, v)
    }

    /// Region pixels unwrapped to a contiguous azimuth span around the
    /// ellipse center.
    pub fn unwrapped_region(&self, width: usize) -> Vec<(f64, f64)> {
        let w = width as f64;
        self.region
            .iter()
            .map(|&(u, v)| {
                let du = (u as f64 - self.ellipse.u + w / 2.0).rem_euclid(w) - w / 2.0;
                (self.ellipse.u + du, v as f64)
            })
            .collect()
    }
}

/// Extracted lights sorted by descending peak intensity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LightSet {
    pub lights: Vec<ParametricLight>,
}

impl LightSet {
    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    /// Directions of the non-degenerate lights.
    pub fn directions(&self) -> Vec<Direction> {
        self.lights
            .iter()
            .filter(|l| !l.degenerate)
            .map(|l| l.direction)
            .collect()
    }

    pub fn to_records(&self) -> Vec<LightRecord> {
        self.lights.iter().map(LightRecord::from).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "lights": self.to_records() })
    }
}

/// Serialized form of one light.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRecord {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub ellipse: Ellipse,
    pub peak: f64,
    pub pixels: usize,
    pub degenerate: bool,
}

impl From<&ParametricLight> for LightRecord {
    fn from(l: &ParametricLight) -> Self {
        Self {
            azimuth_deg: l.direction.azimuth().to_degrees(),
            elevation_deg: l.direction.elevation().to_degrees(),
            ellipse: l.ellipse,
            peak: l.peak_intensity,
            pixels: l.region_pixel_count,
            degenerate: l.degenerate,
        }
    }
}

/// Extracts up to `config.max_lights` parametric lights from a linear map.
pub fn extract_lights(map: &EnvironmentMap, config: &ExtractConfig) -> Result<LightSet> {
    if map.domain != Domain::LinearHdr {
        return Err(Error::Precondition(format!(
            "light extraction needs a LinearHdr map, got {:?}",
            map.domain
        )));
    }
    map.validate()?;
    let (w, h) = map.dims();
    if w == 0 || h == 0 {
        return Err(Error::NoLightContent);
    }
    let intensity: Vec<f64> = map
        .data()
        .chunks_exact(3)
        .map(|p| (p[0] + p[1] + p[2]) / 3.0)
        .collect();
    let weights = solid_angle_weights(w, h)?;
    let mut assigned = vec![false; w * h];
    let mut lights = Vec::new();
    let mut largest = None;

    while lights.len() < config.max_lights {
        let Some(seed) = brightest_unassigned(&intensity, &assigned) else {
            break;
        };
        let peak = intensity[seed];
        if peak <= 0.0 {
            break;
        }
        match largest {
            None => largest = Some(peak),
            Some(first) if peak < config.stop_fraction * first => break,
            Some(_) => {}
        }
        let region = grow_region(seed, &intensity, &mut assigned, w, h, config.region_fraction * peak);
        let solid_angle: f64 = region.iter().map(|&i| weights.values()[i]).sum();
        let pixels: Vec<(usize, usize)> = region.iter().map(|&i| (i % w, i / w)).collect();
        let ellipse = fit_region(&pixels, w);
        let direction = pixel_to_direction(ellipse.u, ellipse.v.clamp(0.0, (h - 1) as f64), w, h)?;
        lights.push(ParametricLight {
            direction,
            ellipse,
            peak_intensity: peak,
            region_pixel_count: pixels.len(),
            solid_angle,
            degenerate: solid_angle > config.degenerate_coverage * 4.0 * PI,
            region: pixels,
        });
    }
    if largest.is_none() {
        return Err(Error::NoLightContent);
    }
    lights.sort_by(|a, b| b.peak_intensity.total_cmp(&a.peak_intensity));
    Ok(LightSet { lights })
}

fn brightest_unassigned(intensity: &[f64], assigned: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&x, &taken)) in intensity.iter().zip(assigned).enumerate() {
        if !taken && best.is_none_or(|b| x > intensity[b]) {
            best = Some(i);
        }
    }
    best
}

fn grow_region(
    seed: usize,
    intensity: &[f64],
    assigned: &mut [bool],
    w: usize,
    h: usize,
    threshold: f64,
) -> Vec<usize> {
    let mut region = vec![seed];
    let mut stack = vec![seed];
    assigned[seed] = true;
    while let Some(i) = stack.pop() {
        let (u, v) = (i % w, i / w);
        let mut neighbours = [None; 4];
        neighbours[0] = Some(v * w + (u + 1) % w);
        neighbours[1] = Some(v * w + (u + w - 1) % w);
        if v > 0 {
            neighbours[2] = Some((v - 1) * w + u);
        }
        if v + 1 < h {
            neighbours[3] = Some((v + 1) * w + u);
        }
        for j in neighbours.into_iter().flatten() {
            if !assigned[j] && intensity[j] >= threshold {
                assigned[j] = true;
                region.push(j);
                stack.push(j);
            }
        }
    }
    region.sort_unstable();
    region
}

/// Shifts columns so the widest empty azimuth gap sits at the seam, fits the
/// ellipse there and wraps the center back into `[0, width)`.
fn fit_region(pixels: &[(usize, usize)], w: usize) -> Ellipse {
    let mut occupied = vec![false; w];
    for &(u, _) in pixels {
        occupied[u] = true;
    }
    let offset = widest_gap_end(&occupied).unwrap_or(0);
    let points: Vec<(f64, f64)> = pixels
        .iter()
        .map(|&(u, v)| (((u + w - offset) % w + offset) as f64, v as f64))
        .collect();
    let mut e = fit_enclosing_ellipse(&points);
    e.u = e.u.rem_euclid(w as f64);
    if e.u >= w as f64 {
        e.u = 0.0;
    }
    e
}

/// First occupied column after the longest circular run of empty columns,
/// or `None` when every column is occupied.
fn widest_gap_end(occupied: &[bool]) -> Option<usize> {
    let w = occupied.len();
    let start = occupied.iter().position(|&o| o)?;
    let mut best = (0, start);
    let mut run = 0;
    for k in 1..=w {
        let c = (start + k) % w;
        if occupied[c] {
            if run > best.0 {
                best = (run, c);
            }
            run = 0;
        } else {
            run += 1;
        }
    }
    if best.0 == 0 {
        None
    } else {
        Some(best.1)
    }
}

/// Great-circle angle in degrees.
pub fn angular_between(a: &Direction, b: &Direction) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Symmetric mean of nearest-light angular distances (degrees). Degenerate
/// lights are ignored.
pub fn angular_error(gt: &LightSet, pred: &LightSet) -> Result<f64> {
    angular_error_directions(&gt.directions(), &pred.directions())
}

pub fn angular_error_directions(gt: &[Direction], pred: &[Direction]) -> Result<f64> {
    if gt.is_empty() || pred.is_empty() {
        return Err(Error::NoLightsExtracted);
    }
    let nearest = |d: &Direction, set: &[Direction]| {
        set.iter()
            .map(|o| angular_between(d, o))
            .fold(f64::INFINITY, f64::min)
    };
    let total: f64 = gt.iter().map(|d| nearest(d, pred)).sum::<f64>()
        + pred.iter().map(|d| nearest(d, gt)).sum::<f64>();
    Ok(total / (gt.len() + pred.len()) as f64)
}
