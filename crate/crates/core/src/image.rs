//! Raster containers shared by every module.
//!
//! Pixels are stored row-major, RGB interleaved, as `f64`. Row 0 is the top
//! of the image (the zenith for equirectangular maps).

use std::ops::{Deref, DerefMut};

use crate::error::{dims_mismatch, Error, Result};

/// Row-major interleaved RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", width * height * 3),
                actual: format!("{} samples", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(u, v)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                img.set(u, v, f(u, v));
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [f64; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, rgb: [f64; 3]) {
        let i = (v * self.width + u) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Unweighted mean of the three channels at a pixel.
    #[inline]
    pub fn intensity(&self, u: usize, v: usize) -> f64 {
        let [r, g, b] = self.get(u, v);
        (r + g + b) / 3.0
    }

    /// Mean over every channel of every pixel.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    /// Circular horizontal shift: column `u` moves to `(u + k) mod width`.
    pub fn shift_columns(&self, k: usize) -> Self {
        let mut out = Self::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                out.set((u + k) % self.width, v, self.get(u, v));
            }
        }
        out
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(dims_mismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    /// Bilinear sample at continuous pixel-index coordinates (pixel centers at
    /// integer positions). Columns wrap around, rows clamp.
    pub fn sample_wrapped(&self, u: f64, v: f64) -> [f64; 3] {
        let w = self.width as isize;
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let u0 = u.floor();
        let v0 = v.floor();
        let fu = u - u0;
        let fv = v - v0;
        let u0 = (u0 as isize).rem_euclid(w) as usize;
        let u1 = (u0 + 1) % self.width;
        let v0 = v0 as usize;
        let v1 = (v0 + 1).min(self.height - 1);
        self.blend(u0, u1, v0, v1, fu, fv)
    }

    /// Bilinear sample with both axes clamped to the image.
    pub fn sample_clamped(&self, u: f64, v: f64) -> [f64; 3] {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let u0 = u.floor();
        let v0 = v.floor();
        let fu = u - u0;
        let fv = v - v0;
        let u0 = u0 as usize;
        let v0 = v0 as usize;
        let u1 = (u0 + 1).min(self.width - 1);
        let v1 = (v0 + 1).min(self.height - 1);
        self.blend(u0, u1, v0, v1, fu, fv)
    }

    fn blend(&self, u0: usize, u1: usize, v0: usize, v1: usize, fu: f64, fv: f64) -> [f64; 3] {
        let a = self.get(u0, v0);
        let b = self.get(u1, v0);
        let c = self.get(u0, v1);
        let d = self.get(u1, v1);
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] + (b[ch] - a[ch]) * fu;
            let bottom = c[ch] + (d[ch] - c[ch]) * fu;
            out[ch] = top + (bottom - top) * fv;
        }
        out
    }
}

/// What the samples of an [`EnvironmentMap`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Domain {
    /// Linear radiance, non-negative and unbounded.
    LinearHdr,
    /// Clipped log encoding in [-1, 1].
    Log,
    /// Display-referred values rescaled to [-1, 1].
    NormalizedLdr,
}

/// Equirectangular environment map: a tagged [`Image`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    pub image: Image,
    pub domain: Domain,
}

impl EnvironmentMap {
    pub fn new(image: Image, domain: Domain) -> Self {
        Self { image, domain }
    }

    pub fn linear(image: Image) -> Self {
        Self::new(image, Domain::LinearHdr)
    }

    pub fn log(image: Image) -> Self {
        Self::new(image, Domain::Log)
    }

    /// Checks the value-range invariant of the domain tag.
    pub fn validate(&self) -> Result<()> {
        if !self.image.is_finite() {
            return Err(Error::Precondition("non-finite pixel value".into()));
        }
        let ok = match self.domain {
            Domain::LinearHdr => self.image.data().iter().all(|&x| x >= 0.0),
            Domain::Log | Domain::NormalizedLdr => {
                self.image.data().iter().all(|&x| (-1.0..=1.0).contains(&x))
            }
        };
        if !ok {
            return Err(Error::Precondition(format!(
                "pixel values outside the range of domain {:?}",
                self.domain
            )));
        }
        Ok(())
    }

    /// Canonical maps are twice as wide as they are tall.
    pub fn is_canonical(&self) -> bool {
        self.image.width() == 2 * self.image.height() && self.image.height() > 0
    }
}

impl Deref for EnvironmentMap {
    type Target = Image;
    fn deref(&self) -> &Image {
        &self.image
    }
}

impl DerefMut for EnvironmentMap {
    fn deref_mut(&mut self) -> &mut Image {
        &mut self.image
    }
}

/// Single-channel binary raster. What a set bit means (known, unknown,
/// inside a projection polygon) is decided by the producer and documented
/// at each call site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width * height),
                actual: format!("{} pixels", bits.len()),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len().max(1) as f64
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn shift_columns(&self, k: usize) -> Self {
        let mut out = Self::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                out.set((u + k) % self.width, v, self.get(u, v));
            }
        }
        out
    }

    /// Number of 4-connected components of set pixels, with columns
    /// wrapping around (azimuth seam).
    pub fn connected_components_wrapped(&self) -> usize {
        let (w, h) = self.dims();
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..w * h {
            if !self.bits[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (u, v) = (i % w, i / w);
                let mut push = |j: usize| {
                    if self.bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                push(v * w + (u + 1) % w);
                push(v * w + (u + w - 1) % w);
                if v > 0 {
                    push((v - 1) * w + u);
                }
                if v + 1 < h {
                    push((v + 1) * w + u);
                }
            }
        }
        count
    }
}

/// Per-pixel non-negative weights (solid angles for equirectangular maps).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl WeightMap {
    pub fn from_vec(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width * height),
                actual: format!("{} pixels", weights.len()),
            });
        }
        Ok(Self {
            width,
            height,
            weights,
        })
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            weights: vec![1.0; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[v * self.width + u]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}
