//! Image, projection, cluster and adversarial losses.
//!
//! All image losses are solid-angle weighted through a [`WeightMap`] and
//! expect log-domain inputs of identical dimensions. The gradient helpers
//! return the (sub)gradient with respect to the prediction, laid out like
//! [`Image::data`].

use crate::error::{dims_mismatch, Error, Result};
use crate::image::{BinaryMask, Image, WeightMap};
use crate::masks::ProjectionMaskSet;

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    /// Weight of the masked L1 term.
    pub w1: f64,
    /// Weight of the multi-scale L2 term.
    pub w2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w1: 0.5, w2: 0.01 }
    }
}

fn check_pair(i: &Image, g: &Image, w: &WeightMap) -> Result<()> {
    i.ensure_same_dims(g)?;
    if i.dims() != w.dims() {
        return Err(dims_mismatch(i.dims(), w.dims()));
    }
    Ok(())
}

/// Weighted mean absolute error over the known region.
///
/// `known` has set bits on the observed (input) pixels. Normalized by
/// `3 * sum(w * known)` so a constant offset `c` yields `c`.
pub fn masked_l1(i: &Image, g: &Image, known: &BinaryMask, w: &WeightMap) -> Result<f64> {
    check_pair(i, g, w)?;
    if known.dims() != i.dims() {
        return Err(dims_mismatch(i.dims(), known.dims()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, (&m, &wt)) in known.bits().iter().zip(w.values()).enumerate() {
        if !m {
            continue;
        }
        let k = p * 3;
        num += wt * (0..3).map(|c| (i.data()[k + c] - g.data()[k + c]).abs()).sum::<f64>();
        den += 3.0 * wt;
    }
    if den <= 0.0 {
        return Err(Error::NoKnownPixels);
    }
    Ok(num / den)
}

pub fn masked_l1_grad(i: &Image, g: &Image, known: &BinaryMask, w: &WeightMap) -> Result<Vec<f64>> {
    check_pair(i, g, w)?;
    if known.dims() != i.dims() {
        return Err(dims_mismatch(i.dims(), known.dims()));
    }
    let den: f64 = known
        .bits()
        .iter()
        .zip(w.values())
        .filter(|(&m, _)| m)
        .map(|(_, &wt)| 3.0 * wt)
        .sum();
    if den <= 0.0 {
        return Err(Error::NoKnownPixels);
    }
    let mut grad = vec![0.0; i.data().len()];
    for (p, (&m, &wt)) in known.bits().iter().zip(w.values()).enumerate() {
        if !m {
            continue;
        }
        for c in 0..3 {
            let d = i.data()[p * 3 + c] - g.data()[p * 3 + c];
            grad[p * 3 + c] = wt * sign(d) / den;
        }
    }
    Ok(grad)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// 2x2 average pooling of an image and its weights.
fn pool2(img: &Image, w: &WeightMap) -> (Image, WeightMap) {
    let (nw, nh) = (img.width() / 2, img.height() / 2);
    let mut out = Image::new(nw, nh);
    let mut weights = Vec::with_capacity(nw * nh);
    for v in 0..nh {
        for u in 0..nw {
            let mut acc = [0.0; 3];
            let mut wacc = 0.0;
            for (du, dv) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let p = img.get(2 * u + du, 2 * v + dv);
                for c in 0..3 {
                    acc[c] += p[c];
                }
                wacc += w.get(2 * u + du, 2 * v + dv);
            }
            out.set(u, v, acc.map(|x| x / 4.0));
            weights.push(wacc / 4.0);
        }
    }
    (out, WeightMap::from_vec(nw, nh, weights).expect("pooled dims"))
}

/// Number of scales of [`multiscale_l2`]: full, half and quarter resolution.
pub const L2_SCALES: usize = 3;

fn check_divisible(i: &Image) -> Result<()> {
    let f = 1 << (L2_SCALES - 1);
    if i.width() % f != 0 || i.height() % f != 0 || i.pixel_count() == 0 {
        return Err(Error::Precondition(format!(
            "multi-scale L2 needs dimensions divisible by {f}, got {}x{}",
            i.width(),
            i.height()
        )));
    }
    Ok(())
}

fn weighted_mse(i: &Image, g: &Image, w: &WeightMap) -> f64 {
    let den = 3.0 * w.sum();
    let num: f64 = w
        .values()
        .iter()
        .enumerate()
        .map(|(p, &wt)| {
            wt * (0..3)
                .map(|c| {
                    let d = i.data()[p * 3 + c] - g.data()[p * 3 + c];
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Mean over scales {1, 1/2, 1/4} of the weighted mean squared error; the
/// coarser levels average-pool images and weights by 2x2.
pub fn multiscale_l2(i: &Image, g: &Image, w: &WeightMap) -> Result<f64> {
    check_pair(i, g, w)?;
    check_divisible(i)?;
    let (mut ci, mut cg, mut cw) = (i.clone(), g.clone(), w.clone());
    let mut total = weighted_mse(&ci, &cg, &cw);
    for _ in 1..L2_SCALES {
        let (pi, pw) = pool2(&ci, &cw);
        let (pg, _) = pool2(&cg, &cw);
        ci = pi;
        cg = pg;
        cw = pw;
        total += weighted_mse(&ci, &cg, &cw);
    }
    Ok(total / L2_SCALES as f64)
}

pub fn multiscale_l2_grad(i: &Image, g: &Image, w: &WeightMap) -> Result<Vec<f64>> {
    check_pair(i, g, w)?;
    check_divisible(i)?;
    let mut grad = vec![0.0; i.data().len()];
    let (mut ci, mut cg, mut cw) = (i.clone(), g.clone(), w.clone());
    for level in 0..L2_SCALES {
        if level > 0 {
            let (pi, pw) = pool2(&ci, &cw);
            let (pg, _) = pool2(&cg, &cw);
            ci = pi;
            cg = pg;
            cw = pw;
        }
        let den = 3.0 * cw.sum();
        if den <= 0.0 {
            continue;
        }
        let block = 1usize << level;
        let spread = 1.0 / (block * block) as f64;
        for v in 0..i.height() {
            for u in 0..i.width() {
                let (cu, cv) = (u / block, v / block);
                let a = ci.get(cu, cv);
                let b = cg.get(cu, cv);
                let wt = cw.get(cu, cv);
                for c in 0..3 {
                    grad[(v * i.width() + u) * 3 + c] +=
                        2.0 * wt * (a[c] - b[c]) / den * spread / L2_SCALES as f64;
                }
            }
        }
    }
    Ok(grad)
}

fn check_masks(i: &Image, p: &ProjectionMaskSet) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty projection mask set".into()));
    }
    for m in &p.masks {
        if m.dims() != i.dims() {
            return Err(dims_mismatch(i.dims(), m.dims()));
        }
    }
    Ok(())
}

/// Weighted integral of all three channels of `x` over each mask.
pub fn mask_projections(x: &Image, p: &ProjectionMaskSet, w: &WeightMap) -> Result<Vec<f64>> {
    check_masks(x, p)?;
    if x.dims() != w.dims() {
        return Err(dims_mismatch(x.dims(), w.dims()));
    }
    // Per-pixel channel sums, weighted once.
    let weighted: Vec<f64> = x
        .data()
        .chunks_exact(3)
        .zip(w.values())
        .map(|(px, &wt)| wt * (px[0] + px[1] + px[2]))
        .collect();
    Ok(p
        .masks
        .iter()
        .map(|m| {
            m.bits()
                .iter()
                .zip(&weighted)
                .filter(|(&b, _)| b)
                .map(|(_, &s)| s)
                .sum()
        })
        .collect())
}

/// Mean absolute difference between the mask-integrated intensities of the
/// prediction and the ground truth.
pub fn projection_loss(i: &Image, g: &Image, p: &ProjectionMaskSet, w: &WeightMap) -> Result<f64> {
    check_pair(i, g, w)?;
    let si = mask_projections(i, p, w)?;
    let sg = mask_projections(g, p, w)?;
    Ok(si.iter().zip(&sg).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

pub fn projection_loss_grad(i: &Image, g: &Image, p: &ProjectionMaskSet, w: &WeightMap) -> Result<Vec<f64>> {
    check_pair(i, g, w)?;
    let si = mask_projections(i, p, w)?;
    let sg = mask_projections(g, p, w)?;
    let n = p.len() as f64;
    let mut grad = vec![0.0; i.data().len()];
    for (m, (a, b)) in p.masks.iter().zip(si.iter().zip(&sg)) {
        let s = sign(a - b) / n;
        if s == 0.0 {
            continue;
        }
        for (px, (&bit, &wt)) in m.bits().iter().zip(w.values()).enumerate() {
            if bit {
                for c in 0..3 {
                    grad[px * 3 + c] += s * wt;
                }
            }
        }
    }
    Ok(grad)
}

/// Individual terms of the image loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ImageLossTerms {
    pub l1: f64,
    pub l2: f64,
    pub projection: f64,
    pub total: f64,
}

/// `w1 * masked_l1 + w2 * multiscale_l2 + projection_loss`.
///
/// `known` marks the observed pixels (set = known) for the L1 term.
pub fn image_loss(
    i: &Image,
    g: &Image,
    known: &BinaryMask,
    p: &ProjectionMaskSet,
    w: &WeightMap,
    weights: &LossWeights,
) -> Result<ImageLossTerms> {
    let l1 = masked_l1(i, g, known, w)?;
    let l2 = multiscale_l2(i, g, w)?;
    let projection = projection_loss(i, g, p, w)?;
    Ok(ImageLossTerms {
        l1,
        l2,
        projection,
        total: weights.w1 * l1 + weights.w2 * l2 + projection,
    })
}

/// Discrete distribution over cluster ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDistribution {
    probs: Vec<f64>,
}

impl ClusterDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(k: usize, class: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::InvalidArgument(format!("class {class} >= K = {k}")));
        }
        let mut probs = vec![0.0; k];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    /// Softmax of raw logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
        let s: f64 = exps.iter().sum();
        Self::new(exps.into_iter().map(|e| e / s).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn hot_index(&self) -> Option<usize> {
        let ones: Vec<usize> = (0..self.probs.len()).filter(|&k| self.probs[k] == 1.0).collect();
        let zeros = self.probs.iter().filter(|&&p| p == 0.0).count();
        (ones.len() == 1 && zeros == self.probs.len() - 1).then(|| ones[0])
    }
}

/// `-sum_k y_k log p_k` with `p` clamped to `[eps, 1 - eps]`.
pub fn cluster_cross_entropy(y: &ClusterDistribution, p: &ClusterDistribution) -> Result<f64> {
    let k = y
        .hot_index()
        .ok_or_else(|| Error::InvalidArgument("target is not one-hot".into()))?;
    if y.len() != p.len() {
        return Err(Error::InvalidArgument(format!(
            "target has {} classes, prediction {}",
            y.len(),
            p.len()
        )));
    }
    Ok(-clamp_prob(p.probs[k]).ln())
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Discriminator probabilities of "real" for a real and a generated sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorOutputs {
    pub d_real: f64,
    pub d_fake: f64,
}

impl DiscriminatorOutputs {
    pub fn new(d_real: f64, d_fake: f64) -> Self {
        Self {
            d_real: clamp_prob(d_real),
            d_fake: clamp_prob(d_fake),
        }
    }
}

/// Returns `(loss_fakereal, loss_adversarial)`:
/// `-(log D(real) + log(1 - D(fake)))` and `-log D(fake)`.
pub fn gan_losses(d: &DiscriminatorOutputs) -> (f64, f64) {
    let real = clamp_prob(d.d_real);
    let fake = clamp_prob(d.d_fake);
    (-(real.ln() + (1.0 - fake).ln()), -fake.ln())
}

/// Returns `(loss_envmapnet, loss_discriminator)`.
pub fn total_losses(image: f64, adversarial: f64, cluster: f64, fakereal: f64) -> (f64, f64) {
    (image + adversarial + cluster, fakereal + cluster)
}
