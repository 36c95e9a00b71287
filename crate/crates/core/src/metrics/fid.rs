//! Fréchet distance between Gaussian fits of image features, with a
//! pluggable feature extractor.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Diagonal shrinkage added to every fitted covariance.
pub const COVARIANCE_SHRINKAGE: f64 = 1e-6;
const PSD_TOLERANCE: f64 = 1e-8;

/// Maps an image to a fixed-length feature vector.
pub trait FeatureExtractor: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, image: &Image) -> Result<Vec<f64>>;
}

/// Per-cell mean and standard deviation of each RGB channel on a 4x8 grid
/// (`d = 4 * 8 * 2 * 3 = 192`). Cell boundaries use integer division so any
/// image of at least 8x4 pixels is accepted.
#[derive(Debug, Clone, Copy, Default)]
pub struct PatchStats;

impl PatchStats {
    pub const ROWS: usize = 4;
    pub const COLS: usize = 8;
}

impl FeatureExtractor for PatchStats {
    fn name(&self) -> &str {
        "patchstats-v1"
    }

    fn dim(&self) -> usize {
        Self::ROWS * Self::COLS * 6
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>> {
        let (w, h) = image.dims();
        if w < Self::COLS || h < Self::ROWS {
            return Err(Error::Precondition(format!(
                "patchstats-v1 needs at least {}x{} pixels, got {w}x{h}",
                Self::COLS,
                Self::ROWS
            )));
        }
        let mut out = Vec::with_capacity(self.dim());
        for r in 0..Self::ROWS {
            let (v0, v1) = (r * h / Self::ROWS, (r + 1) * h / Self::ROWS);
            for c in 0..Self::COLS {
                let (u0, u1) = (c * w / Self::COLS, (c + 1) * w / Self::COLS);
                let n = ((v1 - v0) * (u1 - u0)) as f64;
                let mut mean = [0.0; 3];
                for v in v0..v1 {
                    for u in u0..u1 {
                        let p = image.get(u, v);
                        for ch in 0..3 {
                            mean[ch] += p[ch];
                        }
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = [0.0; 3];
                for v in v0..v1 {
                    for u in u0..u1 {
                        let p = image.get(u, v);
                        for ch in 0..3 {
                            var[ch] += (p[ch] - mean[ch]).powi(2);
                        }
                    }
                }
                out.extend_from_slice(&mean);
                out.extend(var.iter().map(|s| (s / n).sqrt()));
            }
        }
        Ok(out)
    }
}

/// `n x d` feature matrix, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n: usize,
    pub d: usize,
    pub features: Vec<f64>,
}

impl FeatureSet {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("feature rows differ in length".into()));
        }
        Ok(Self {
            n,
            d,
            features: rows.into_iter().flatten().collect(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }
}

/// Extracts features for every image (in parallel, order preserved).
pub fn extract_features(images: &[Image], extractor: &dyn FeatureExtractor) -> Result<FeatureSet> {
    if let Some(first) = images.first() {
        for img in images {
            img.ensure_same_dims(first)?;
        }
    }
    let rows = images
        .par_iter()
        .map(|img| extractor.extract(img))
        .collect::<Result<Vec<_>>>()?;
    let set = FeatureSet::from_rows(rows)?;
    if set.n > 0 && set.d != extractor.dim() {
        return Err(Error::InvalidArgument(format!(
            "extractor {} produced {} features, declared {}",
            extractor.name(),
            set.d,
            extractor.dim()
        )));
    }
    Ok(set)
}

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{}, mean has length {d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let scale = sigma.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if (&sigma - sigma.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        Ok(Self { mu, sigma })
    }

    /// Sample mean and unbiased covariance plus `shrinkage * I`.
    pub fn fit(features: &FeatureSet, shrinkage: f64) -> Result<Self> {
        if features.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples, got {}",
                features.n
            )));
        }
        let (n, d) = (features.n, features.d);
        let x = DMatrix::from_row_slice(n, d, &features.features);
        let mu = DVector::from_iterator(d, (0..d).map(|j| x.column(j).sum() / n as f64));
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mu.transpose();
        }
        let mut sigma = centered.transpose() * &centered / (n as f64 - 1.0);
        sigma = (&sigma + sigma.transpose()) * 0.5;
        for i in 0..d {
            sigma[(i, i)] += shrinkage;
        }
        Ok(Self { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Symmetric PSD square root via eigendecomposition; tiny negative
/// eigenvalues are clamped, larger ones rejected.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPositiveSemiDefinite(min));
    }
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`. The cross trace
/// equals the sum of singular values of `S_b^(1/2) S_a^(1/2)`, which avoids
/// square roots of round-off sized eigenvalues when a covariance is singular.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term = (&a.mu - &b.mu).norm_squared();
    let sqrt_a = psd_sqrt(&a.sigma)?;
    let sqrt_b = psd_sqrt(&b.sigma)?;
    let cross: f64 = (&sqrt_b * &sqrt_a).singular_values().iter().sum();
    let d = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// FID between two image sets with the given extractor.
pub fn fid(images_a: &[Image], images_b: &[Image], extractor: &dyn FeatureExtractor) -> Result<f64> {
    if images_a.len() < 2 || images_b.len() < 2 {
        return Err(Error::InvalidArgument(
            "each image set needs at least 2 images".into(),
        ));
    }
    let fa = extract_features(images_a, extractor)?;
    let fb = extract_features(images_b, extractor)?;
    frechet_distance(
        &GaussianSummary::fit(&fa, COVARIANCE_SHRINKAGE)?,
        &GaussianSummary::fit(&fb, COVARIANCE_SHRINKAGE)?,
    )
}
