//! Image metrics: FID, SSIM, MSE, top-k retrieval agreement, and the
//! preprocessing applied before benchmark comparison.

mod fid;
mod report;
mod retrieval;
mod ssim;

pub use fid::{
    extract_features, fid, frechet_distance, FeatureExtractor, FeatureSet, GaussianSummary,
    PatchStats, COVARIANCE_SHRINKAGE,
};
pub use report::{AggregateMetrics, MetricReport, PairMetrics, REPORT_VERSION};
pub use retrieval::{
    retrieval_agreement, top_k, topk_intersection, RetrievalAgreement, ScoreOrder, Scorer,
};
pub use ssim::{mse, ssim, SSIM_WINDOW};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Domain, EnvironmentMap, Image};

fn region_mean(img: &Image, known: &BinaryMask) -> f64 {
    let mut sum = 0.0;
    for v in 0..img.height() {
        for u in 0..img.width() {
            if known.get(u, v) {
                sum += img.get(u, v).iter().sum::<f64>();
            }
        }
    }
    sum / (3 * known.count()) as f64
}

fn check_mask(img: &Image, known: &BinaryMask) -> Result<()> {
    if known.dims() != img.dims() {
        return Err(crate::error::dims_mismatch(img.dims(), known.dims()));
    }
    Ok(())
}

/// Rescales `pred` so its mean over the known region equals that of `gt`.
pub fn exposure_match(
    pred: &EnvironmentMap,
    gt: &EnvironmentMap,
    known: &BinaryMask,
) -> Result<EnvironmentMap> {
    pred.ensure_same_dims(gt)?;
    check_mask(pred, known)?;
    if pred.domain != Domain::LinearHdr || gt.domain != Domain::LinearHdr {
        return Err(Error::Precondition("exposure matching needs linear HDR maps".into()));
    }
    if known.count() == 0 {
        return Err(Error::NoKnownPixels);
    }
    let mp = region_mean(pred, known);
    if !(mp > 0.0) {
        return Err(Error::Precondition(format!(
            "prediction mean over the known region is {mp}"
        )));
    }
    let factor = region_mean(gt, known) / mp;
    Ok(EnvironmentMap::new(pred.scaled(factor), Domain::LinearHdr))
}

/// Known pixels from `gt`, the rest from `pred`.
pub fn overlay_known(pred: &Image, gt: &Image, known: &BinaryMask) -> Result<Image> {
    pred.ensure_same_dims(gt)?;
    check_mask(pred, known)?;
    Ok(Image::from_fn(pred.width(), pred.height(), |u, v| {
        if known.get(u, v) {
            gt.get(u, v)
        } else {
            pred.get(u, v)
        }
    }))
}
