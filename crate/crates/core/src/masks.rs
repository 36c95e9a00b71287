//! Random polygon masks: the projection mask set and training occlusion masks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// Default number of projection masks.
pub const DEFAULT_PROJECTION_MASKS: usize = 50;

/// Polygon in continuous pixel coordinates (pixel `(u, v)` covers
/// `[u, u+1) x [v, v+1)`, center at `(u + 0.5, v + 0.5)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 || vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::DegeneratePolygon);
        }
        let poly = Self { vertices };
        if poly.area() <= 1e-12 {
            return Err(Error::DegeneratePolygon);
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice.abs() / 2.0
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    /// Even-odd crossing test; shares its edge arithmetic with the scanline
    /// fill so both agree on boundary points.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        for i in 0..n {
            let (xi, yi) = self.vertices[i];
            let (xj, yj) = self.vertices[(i + n - 1) % n];
            if (yi > y) != (yj > y) && x < edge_x(xi, yi, xj, yj, y) {
                inside = !inside;
            }
        }
        inside
    }
}

#[inline]
fn edge_x(xi: f64, yi: f64, xj: f64, yj: f64, y: f64) -> f64 {
    (xj - xi) * (y - yi) / (yj - yi) + xi
}

/// Scanline even-odd fill: a pixel is set iff its center is inside.
/// An all-zero result is reported as [`Error::EmptyMask`].
pub fn rasterize_polygon(poly: &Polygon, width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height);
    fill_polygon(&mut mask, poly);
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

fn fill_polygon(mask: &mut BinaryMask, poly: &Polygon) {
    let (width, height) = mask.dims();
    let verts = poly.vertices();
    let n = verts.len();
    let mut xs = Vec::with_capacity(n);
    for v in 0..height {
        let y = v as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (xi, yi) = verts[i];
            let (xj, yj) = verts[(i + n - 1) % n];
            if (yi > y) != (yj > y) {
                xs.push(edge_x(xi, yi, xj, yj, y));
            }
        }
        xs.sort_by(f64::total_cmp);
        // Centers x with xs[2k] <= x < xs[2k+1] have an odd number of
        // crossings strictly to their right.
        for span in xs.chunks_exact(2) {
            let first = (span[0] - 0.5).ceil().max(0.0);
            let last = (span[1] - 0.5).ceil().min(width as f64);
            let (mut u, end) = (first as usize, last as usize);
            while u < end {
                mask.set(u, v, true);
                u += 1;
            }
        }
    }
}

/// Fixed, seeded set of projection masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMaskSet {
    pub masks: Vec<BinaryMask>,
    pub polygons: Vec<Polygon>,
    pub seed: u64,
}

impl ProjectionMaskSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.masks.first().map(|m| m.dims())
    }

    /// Wraps externally supplied masks; every mask must be non-empty and all
    /// must share dimensions.
    pub fn from_masks(masks: Vec<BinaryMask>, seed: u64) -> Result<Self> {
        if let Some(first) = masks.first() {
            for m in &masks {
                if m.dims() != first.dims() {
                    return Err(crate::error::dims_mismatch(first.dims(), m.dims()));
                }
                if m.is_empty() {
                    return Err(Error::EmptyMask);
                }
            }
        }
        Ok(Self {
            masks,
            polygons: Vec::new(),
            seed,
        })
    }

    pub fn union(&self) -> Option<BinaryMask> {
        let mut it = self.masks.iter();
        let mut acc = it.next()?.clone();
        for m in it {
            acc.union_with(m);
        }
        Some(acc)
    }
}

/// Convex polygon with 5 to 8 vertices on a jittered ellipse, affinely
/// stretched so its bounding box is exactly `box_w x box_h` at `(x0, y0)`.
fn random_convex_polygon(rng: &mut impl Rng, x0: f64, y0: f64, box_w: f64, box_h: f64) -> Polygon {
    let n = rng.random_range(5..=8);
    let phase = rng.random_range(0.0..2.0 * PI);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let jitter = rng.random_range(-0.3..0.3);
            let t = phase + 2.0 * PI * (k as f64 + jitter) / n as f64;
            (t.cos(), t.sin())
        })
        .collect();
    let (min_x, min_y, max_x, max_y) = raw.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
    );
    let vertices = raw
        .into_iter()
        .map(|(x, y)| {
            (
                x0 + (x - min_x) / (max_x - min_x) * box_w,
                y0 + (y - min_y) / (max_y - min_y) * box_h,
            )
        })
        .collect();
    Polygon { vertices }
}

fn random_placed_polygon(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    min_frac: f64,
    max_frac: f64,
) -> Polygon {
    let (w, h) = (width as f64, height as f64);
    let box_w = rng.random_range(min_frac..=max_frac) * w;
    let box_h = rng.random_range(min_frac..=max_frac) * h;
    let x0 = rng.random_range(0.0..=(w - box_w));
    let y0 = rng.random_range(0.0..=(h - box_h));
    random_convex_polygon(rng, x0, y0, box_w, box_h)
}

const PROJECTION_MIN_FRAC: f64 = 0.10;
const PROJECTION_MAX_FRAC: f64 = 0.40;
const OCCLUSION_MAX_FRAC: f64 = 0.80;
const MIN_KNOWN_FRACTION: f64 = 0.05;

/// Generates `count` projection masks, each one random convex polygon whose
/// bounding box spans 10% to 40% of each image dimension, placed fully
/// inside the image. Deterministic in `(width, height, count, seed)`.
pub fn gen_projection_masks(
    width: usize,
    height: usize,
    count: usize,
    seed: u64,
) -> Result<ProjectionMaskSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("mask count must be at least 1".into()));
    }
    if (width as f64) * PROJECTION_MIN_FRAC < 1.0 || (height as f64) * PROJECTION_MIN_FRAC < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} is too small for masks spanning 10%-40% of each dimension"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::with_capacity(count);
    let mut polygons = Vec::with_capacity(count);
    while masks.len() < count {
        let poly = random_placed_polygon(&mut rng, width, height, PROJECTION_MIN_FRAC, PROJECTION_MAX_FRAC);
        // A thin polygon may miss every pixel center; draw again.
        if let Ok(mask) = rasterize_polygon(&poly, width, height) {
            masks.push(mask);
            polygons.push(poly);
        }
    }
    Ok(ProjectionMaskSet {
        masks,
        polygons,
        seed,
    })
}

/// Polygons making up an occlusion mask (see [`gen_occlusion_mask`]).
pub fn gen_occlusion_polygons(
    width: usize,
    height: usize,
    seed: u64,
    n_regions: usize,
) -> Result<Vec<Polygon>> {
    if !(1..=4).contains(&n_regions) {
        return Err(Error::InvalidArgument(format!(
            "n_regions {n_regions} not in [1, 4]"
        )));
    }
    if width < 10 || height < 10 {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} is too small for occlusion masks"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let polys: Vec<Polygon> = (0..n_regions)
            .map(|_| random_placed_polygon(&mut rng, width, height, PROJECTION_MIN_FRAC, OCCLUSION_MAX_FRAC))
            .collect();
        let mask = rasterize_all(&polys, width, height);
        if 1.0 - mask.fraction() >= MIN_KNOWN_FRACTION {
            return Ok(polys);
        }
    }
}

/// Training occlusion mask: union of `n_regions` random polygons up to 80%
/// of each dimension. Set bits mark UNKNOWN pixels; at least 5% of the
/// pixels are always left known.
pub fn gen_occlusion_mask(width: usize, height: usize, seed: u64, n_regions: usize) -> Result<BinaryMask> {
    let polys = gen_occlusion_polygons(width, height, seed, n_regions)?;
    Ok(rasterize_all(&polys, width, height))
}

fn rasterize_all(polys: &[Polygon], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    for p in polys {
        fill_polygon(&mut mask, p);
    }
    mask
}
