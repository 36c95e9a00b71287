#![allow(dead_code)]

use envlight::geometry::pixel_to_direction;
use envlight::image::{BinaryMask, EnvironmentMap, Image};
use envlight::Direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(r: &mut impl Rng, w: usize, h: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(w, h, |_, _| {
        [r.random_range(lo..hi), r.random_range(lo..hi), r.random_range(lo..hi)]
    })
}

pub fn random_mask(r: &mut impl Rng, w: usize, h: usize, p: f64) -> BinaryMask {
    loop {
        let m = BinaryMask::from_fn(w, h, |_, _| r.random_bool(p));
        if !m.is_empty() {
            return m;
        }
    }
}

/// A light planted as a Gaussian in angle around `dir`; `sigma_px` is in
/// pixels of elevation (pi / height radians per pixel).
#[derive(Debug, Clone, Copy)]
pub struct Planted {
    pub dir: Direction,
    pub sigma_px: f64,
    pub peak: f64,
}

pub fn planted_map(w: usize, h: usize, lights: &[Planted]) -> EnvironmentMap {
    let rad_per_px = std::f64::consts::PI / h as f64;
    EnvironmentMap::linear(Image::from_fn(w, h, |u, v| {
        let d = pixel_to_direction(u as f64, v as f64, w, h).unwrap();
        let mut x = 0.0;
        for l in lights {
            let ang = d.dot(&l.dir).clamp(-1.0, 1.0).acos();
            let s = l.sigma_px * rad_per_px;
            x += l.peak * (-0.5 * (ang / s).powi(2)).exp();
        }
        [x; 3]
    }))
}

/// 1-3 lights at |elevation| <= 45 deg, pairwise >= 40 deg apart, sigma in
/// [2, 6] px, peaks in [0.92, 1].
pub fn random_planted(r: &mut impl Rng) -> Vec<Planted> {
    let n = r.random_range(1..=3);
    let mut out: Vec<Planted> = Vec::new();
    while out.len() < n {
        let dir = Direction::from_degrees(r.random_range(-180.0..180.0), r.random_range(-45.0..45.0));
        if out
            .iter()
            .all(|p| p.dir.dot(&dir).clamp(-1.0, 1.0).acos().to_degrees() >= 40.0)
        {
            out.push(Planted {
                dir,
                sigma_px: r.random_range(2.0..6.0),
                peak: r.random_range(0.92..1.0),
            });
        }
    }
    out
}

/// Smooth positive panorama: low-order polynomial in the direction vector.
pub fn band_limited(w: usize, h: usize, phase: f64) -> EnvironmentMap {
    EnvironmentMap::linear(Image::from_fn(w, h, |u, v| {
        let d = pixel_to_direction(u as f64, v as f64, w, h).unwrap();
        let (x, y, z) = (d.x, d.y, d.z);
        [
            1.0 + 0.4 * x + 0.2 * z + 0.1 * (x * y + phase).sin(),
            1.0 + 0.3 * y - 0.2 * x * z + 0.05 * phase,
            1.0 + 0.25 * z + 0.15 * x * x - 0.1 * y,
        ]
    }))
}

pub fn psnr(reference: &[f64], test: &[f64]) -> f64 {
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    let mse = reference
        .iter()
        .zip(test)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    10.0 * (peak * peak / mse).log10()
}
