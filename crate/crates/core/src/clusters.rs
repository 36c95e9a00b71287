//! Appearance clustering: grid patches, a fixed-location binary descriptor
//! plus mean color per patch, k-means, and nearest-centroid assignment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{format_error, Error, Result};
use crate::image::Image;

pub const DESCRIPTOR_BITS: usize = 256;
/// Weight applied to each descriptor bit in the k-means feature space.
pub const DESCRIPTOR_BIT_SCALE: f64 = 1.0 / 16.0;
pub const DEFAULT_CLUSTERS: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 100;
const MIN_PATCH: usize = 8;

/// Grid and sampling-pattern settings shared by fitting and assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub rows: usize,
    pub cols: usize,
    pub pattern_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 8,
            pattern_seed: 0,
        }
    }
}

impl FeatureConfig {
    pub fn feature_dim(&self) -> usize {
        self.rows * self.cols * (DESCRIPTOR_BITS + 3)
    }
}

/// Splits an image into `rows x cols` equal tiles, row-major.
pub fn patch_grid(image: &Image, rows: usize, cols: usize) -> Result<Vec<Image>> {
    let (w, h) = image.dims();
    if rows == 0 || cols == 0 || w % cols != 0 || h % rows != 0 {
        return Err(Error::Precondition(format!(
            "{w}x{h} image does not divide into a {rows}x{cols} grid"
        )));
    }
    let (pw, ph) = (w / cols, h / rows);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(Image::from_fn(pw, ph, |u, v| image.get(c * pw + u, r * ph + v)));
        }
    }
    Ok(out)
}

/// 256 point pairs `(p, q)` inside a `width x height` patch.
#[derive(Debug, Clone, PartialEq)]
pub struct BriefPattern {
    pub width: usize,
    pub height: usize,
    pub pairs: Vec<((usize, usize), (usize, usize))>,
}

impl BriefPattern {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = |rng: &mut ChaCha8Rng| (rng.random_range(0..width), rng.random_range(0..height));
        let pairs = (0..DESCRIPTOR_BITS)
            .map(|_| {
                let p = pick(&mut rng);
                let mut q = pick(&mut rng);
                while q == p && width * height > 1 {
                    q = pick(&mut rng);
                }
                (p, q)
            })
            .collect();
        Self { width, height, pairs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeature {
    /// Bit `k` is stored at `descriptor[k / 64] >> (k % 64)`.
    pub descriptor: [u64; 4],
    pub mean_color: [f64; 3],
}

impl PatchFeature {
    pub fn bit(&self, k: usize) -> bool {
        self.descriptor[k / 64] >> (k % 64) & 1 == 1
    }
}

fn blurred_gray(patch: &Image) -> Vec<f64> {
    let (w, h) = patch.dims();
    let gray: Vec<f64> = (0..w * h).map(|i| patch.intensity(i % w, i / w)).collect();
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut s = 0.0;
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let uu = (u as i64 + du).clamp(0, w as i64 - 1) as usize;
                    let vv = (v as i64 + dv).clamp(0, h as i64 - 1) as usize;
                    s += gray[vv * w + uu];
                }
            }
            out[v * w + u] = s / 9.0;
        }
    }
    out
}

/// Descriptor and mean color of one patch under a prebuilt pattern.
pub fn patch_feature_with(patch: &Image, pattern: &BriefPattern) -> Result<PatchFeature> {
    let (w, h) = patch.dims();
    if w < MIN_PATCH || h < MIN_PATCH {
        return Err(Error::Precondition(format!("patch {w}x{h} is smaller than 8x8")));
    }
    if (pattern.width, pattern.height) != (w, h) {
        return Err(Error::ConfigMismatch(format!(
            "pattern built for {}x{}, patch is {w}x{h}",
            pattern.width, pattern.height
        )));
    }
    let gray = blurred_gray(patch);
    let mut descriptor = [0u64; 4];
    for (k, &((pu, pv), (qu, qv))) in pattern.pairs.iter().enumerate() {
        if gray[pv * w + pu] < gray[qv * w + qu] {
            descriptor[k / 64] |= 1 << (k % 64);
        }
    }
    let mut mean_color = [0.0; 3];
    for px in patch.data().chunks_exact(3) {
        for c in 0..3 {
            mean_color[c] += px[c];
        }
    }
    let n = (w * h) as f64;
    mean_color.iter_mut().for_each(|m| *m /= n);
    Ok(PatchFeature {
        descriptor,
        mean_color,
    })
}

pub fn patch_feature(patch: &Image, pattern_seed: u64) -> Result<PatchFeature> {
    patch_feature_with(patch, &BriefPattern::new(patch.width(), patch.height(), pattern_seed))
}

/// Per patch: 256 descriptor bits scaled by 1/16, then mean RGB.
pub fn image_feature(image: &Image, config: &FeatureConfig) -> Result<Vec<f64>> {
    let patches = patch_grid(image, config.rows, config.cols)?;
    let pattern = BriefPattern::new(patches[0].width(), patches[0].height(), config.pattern_seed);
    let mut out = Vec::with_capacity(config.feature_dim());
    for p in &patches {
        let f = patch_feature_with(p, &pattern)?;
        out.extend((0..DESCRIPTOR_BITS).map(|k| if f.bit(k) { DESCRIPTOR_BIT_SCALE } else { 0.0 }));
        out.extend_from_slice(&f.mean_color);
    }
    Ok(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Inertia after every assignment step, starting with the initial one.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let labels: Vec<usize> = points.iter().map(|p| nearest_centroid(p, centroids)).collect();
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    (labels, inertia)
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fewer than {k} distinct feature vectors"
            )));
        }
        let mut target = rng.random_range(0.0..total);
        let mut pick = points.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        // Guard against landing on a zero-weight point through rounding.
        if d2[pick] == 0.0 {
            pick = d2.iter().position(|&d| d > 0.0).expect("total > 0");
        }
        let c = points[pick].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or `max_iter` updates have run.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidArgument("feature vectors differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, k, &mut rng)?;
    let (mut labels, inertia) = assign_all(points, &centroids);
    let mut history = vec![inertia];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[labels[a]]);
                        let db = sq_dist(&points[b], &centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centroids[j] = points[far].clone();
                labels[far] = j;
            }
        }
        let (new_labels, inertia) = assign_all(points, &centroids);
        history.push(inertia);
        if new_labels == labels {
            converged = true;
            break;
        }
        labels = new_labels;
    }
    Ok(KMeans {
        centroids,
        labels,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Fitted centroids over image features together with the feature settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub config: FeatureConfig,
    pub centroids: Vec<Vec<f64>>,
}

const MAGIC: &[u8; 4] = b"EMCL";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 5 + 8;

impl ClusterModel {
    pub fn new(config: FeatureConfig, centroids: Vec<Vec<f64>>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::InvalidArgument("a cluster model needs K >= 2".into()));
        }
        let d = config.feature_dim();
        if centroids.iter().any(|c| c.len() != d) {
            return Err(Error::ConfigMismatch(format!("centroids must have length {d}")));
        }
        Ok(Self { config, centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.k() * self.dim() * 8);
        out.extend_from_slice(MAGIC);
        for x in [
            FORMAT_VERSION,
            self.k() as u32,
            self.dim() as u32,
            self.config.rows as u32,
            self.config.cols as u32,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.config.pattern_seed.to_le_bytes());
        for c in &self.centroids {
            for x in c {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |off, msg: &str| format_error("cluster model", off, msg);
        if bytes.len() < HEADER_LEN {
            return Err(err(bytes.len(), "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(err(0, "bad magic"));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        if u32_at(4) != FORMAT_VERSION as usize {
            return Err(err(4, "unsupported version"));
        }
        let (k, d, rows, cols) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        let pattern_seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let config = FeatureConfig {
            rows,
            cols,
            pattern_seed,
        };
        if rows.checked_mul(cols).and_then(|x| x.checked_mul(DESCRIPTOR_BITS + 3)) != Some(d) {
            return Err(err(12, "feature dimension disagrees with grid"));
        }
        let expected = k
            .checked_mul(d)
            .and_then(|x| x.checked_mul(8))
            .and_then(|x| x.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(err(HEADER_LEN, "centroid payload length mismatch"));
        }
        let centroids = bytes[HEADER_LEN..]
            .chunks_exact(8 * d.max(1))
            .map(|row| {
                row.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect();
        Self::new(config, centroids).map_err(|e| err(8, &e.to_string()))
    }
}

/// Extracts features for every image and fits `k` clusters.
pub fn fit_cluster_model(
    images: &[Image],
    config: &FeatureConfig,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(ClusterModel, KMeans)> {
    use rayon::prelude::*;
    let feats = images
        .par_iter()
        .map(|img| image_feature(img, config))
        .collect::<Result<Vec<_>>>()?;
    let km = kmeans_fit(&feats, k, seed, max_iter)?;
    Ok((ClusterModel::new(*config, km.centroids.clone())?, km))
}

/// Cluster id of an image; `config` must match the one the model was fit with.
pub fn assign_cluster(image: &Image, model: &ClusterModel, config: &FeatureConfig) -> Result<usize> {
    if *config != model.config {
        return Err(Error::ConfigMismatch(format!(
            "model uses {:?}, query uses {:?}",
            model.config, config
        )));
    }
    Ok(nearest_centroid(&image_feature(image, config)?, &model.centroids))
}
