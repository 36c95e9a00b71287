//! Batch comparison of predicted and ground-truth environment maps.
//!
//! Per pair: known-region mask, exposure matching on the known region,
//! overlay of the known ground truth, light extraction on both maps and the
//! angular error between them, solid-angle weighted projection loss on the
//! linear maps, and SSIM/MSE on the log-encoded maps. The aggregate adds FID
//! over the two sets.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{frustum_mask, solid_angle_weights, CameraPose};
use crate::image::{BinaryMask, EnvironmentMap, Image};
use crate::io;
use crate::lights::{angular_error, extract_lights, ExtractConfig};
use crate::losses::projection_loss;
use crate::masks::{gen_occlusion_mask, gen_projection_masks, ProjectionMaskSet, DEFAULT_PROJECTION_MASKS};
use crate::metrics::{
    exposure_match, fid, mse, overlay_known, ssim, FeatureExtractor, MetricReport, PairMetrics, PatchStats,
};
use crate::tonemap::{log_encode, log_encode_with_alpha, ToneMapParams};

/// Horizontal field of view of the default center crop.
pub const CENTER_CROP_FOV_DEG: f64 = 90.0;
/// Log-encoded maps span [-1, 1].
const LOG_RANGE: f64 = 2.0;

/// Which pixels count as observed by the estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MaskPolicy {
    /// Frustum of a square crop looking at azimuth 0, elevation 0.
    CenterCrop { fov_deg: f64 },
    /// `<dir>/<id>.png`, white = known.
    Provided(PathBuf),
    /// Random occlusion regions seeded per pair; everything else is known.
    Generated { regions: usize },
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self::CenterCrop {
            fov_deg: CENTER_CROP_FOV_DEG,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkJob {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    /// Lines of `<pred> <gt>` paths relative to the two directories.
    pub manifest: Option<PathBuf>,
    pub mask_policy: MaskPolicy,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub projection_masks: usize,
    pub extract: ExtractConfig,
    pub compute_fid: bool,
    pub compute_lights: bool,
}

impl BenchmarkJob {
    pub fn new(pred_dir: impl Into<PathBuf>, gt_dir: impl Into<PathBuf>) -> Self {
        Self {
            pred_dir: pred_dir.into(),
            gt_dir: gt_dir.into(),
            manifest: None,
            mask_policy: MaskPolicy::default(),
            seed: 0,
            threads: 0,
            projection_masks: DEFAULT_PROJECTION_MASKS,
            extract: ExtractConfig::default(),
            compute_fid: true,
            compute_lights: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairFiles {
    pub id: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for one pair, independent of processing order.
pub fn pair_seed(global: u64, id: &str) -> u64 {
    fnv1a(id.as_bytes()) ^ global.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut paths: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && io::ImageFormat::from_path(p).is_ok())
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
            // First in sorted order wins when stems collide.
            out.entry(stem.to_string()).or_insert(p);
        }
    }
    Ok(out)
}

/// Pairs files by stem (or by manifest). Returns the pairs sorted by id and
/// the sorted list of unpaired names.
pub fn pair_files(job: &BenchmarkJob) -> Result<(Vec<PairFiles>, Vec<String>)> {
    if let Some(manifest) = &job.manifest {
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::Io {
            path: manifest.display().to_string(),
            message: e.to_string(),
        })?;
        let mut pairs = Vec::new();
        let mut skipped = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [pred, gt] = parts.as_slice() else {
                return Err(Error::InvalidArgument(format!(
                    "{}:{}: expected `<pred> <gt>`",
                    manifest.display(),
                    n + 1
                )));
            };
            let (pred, gt) = (job.pred_dir.join(pred), job.gt_dir.join(gt));
            let id = pred
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            if pred.is_file() && gt.is_file() {
                pairs.push(PairFiles { id, pred, gt });
            } else {
                skipped.push(format!("{id}: missing file"));
            }
        }
        pairs.sort_by(|a, b| a.id.cmp(&b.id));
        skipped.sort();
        return Ok((pairs, skipped));
    }
    let preds = list_images(&job.pred_dir)?;
    let gts = list_images(&job.gt_dir)?;
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (id, p) in &preds {
        match gts.get(id) {
            Some(g) => pairs.push(PairFiles {
                id: id.clone(),
                pred: p.clone(),
                gt: g.clone(),
            }),
            None => skipped.push(format!("{id}: no ground truth")),
        }
    }
    for id in gts.keys().filter(|id| !preds.contains_key(*id)) {
        skipped.push(format!("{id}: no prediction"));
    }
    skipped.sort();
    Ok((pairs, skipped))
}

/// Known-region mask for one pair under `policy`.
pub fn known_mask(policy: &MaskPolicy, id: &str, width: usize, height: usize, seed: u64) -> Result<BinaryMask> {
    match policy {
        MaskPolicy::CenterCrop { fov_deg } => {
            let side = height.max(1);
            frustum_mask(&CameraPose::new(0.0, 0.0, *fov_deg)?, side, side, width, height)
        }
        MaskPolicy::Provided(dir) => {
            let m = io::read_mask(&dir.join(format!("{id}.png")))?;
            if m.dims() != (width, height) {
                return Err(crate::error::dims_mismatch((width, height), m.dims()));
            }
            Ok(m)
        }
        MaskPolicy::Generated { regions } => Ok(gen_occlusion_mask(width, height, seed, *regions)?.inverted()),
    }
}

/// Inputs and settings shared by every pair of one run.
pub struct PairContext<'a> {
    pub policy: &'a MaskPolicy,
    pub extract: &'a ExtractConfig,
    pub projection: &'a ProjectionMaskSet,
    pub compute_lights: bool,
    pub seed: u64,
}

/// Output of [`evaluate_pair`]: metrics plus the maps used for FID.
pub struct PairOutcome {
    pub metrics: PairMetrics,
    pub gt_log: Image,
    pub composite_log: Image,
}

/// Runs the per-pair pipeline on linear maps.
pub fn evaluate_pair(id: &str, pred: &EnvironmentMap, gt: &EnvironmentMap, ctx: &PairContext) -> Result<PairOutcome> {
    pred.ensure_same_dims(gt)?;
    gt.validate()?;
    pred.validate()?;
    let (w, h) = gt.dims();
    let known = known_mask(ctx.policy, id, w, h, pair_seed(ctx.seed, id))?;
    let matched = exposure_match(pred, gt, &known)?;
    let composite = EnvironmentMap::linear(overlay_known(&matched, gt, &known)?);

    let (mut ang, mut gt_n, mut pred_n) = (None, 0, 0);
    if ctx.compute_lights {
        let gl = extract_lights(gt, ctx.extract);
        let pl = extract_lights(&composite, ctx.extract);
        gt_n = gl.as_ref().map_or(0, |s| s.len());
        pred_n = pl.as_ref().map_or(0, |s| s.len());
        if let (Ok(g), Ok(p)) = (gl, pl) {
            ang = angular_error(&g, &p).ok();
        }
    }

    let weights = solid_angle_weights(w, h)?;
    let proj = projection_loss(&composite, gt, ctx.projection, &weights)?;

    let enc = log_encode(gt, &ToneMapParams::default())?;
    let gt_log = enc.map.image.clone();
    let composite_log = log_encode_with_alpha(&composite, enc.alpha)?.image;
    let metrics = PairMetrics {
        id: id.to_string(),
        angular_error_deg: ang,
        projection_loss: proj,
        ssim: ssim(&composite_log, &gt_log, LOG_RANGE)?,
        mse: mse(&composite_log, &gt_log)?,
        gt_lights: gt_n,
        pred_lights: pred_n,
    };
    Ok(PairOutcome {
        metrics,
        gt_log,
        composite_log,
    })
}

fn load_pair(p: &PairFiles) -> Result<(EnvironmentMap, EnvironmentMap)> {
    let pred = EnvironmentMap::linear(io::read_image(&p.pred)?);
    let gt = EnvironmentMap::linear(io::read_image(&p.gt)?);
    pred.ensure_same_dims(&gt)?;
    if !gt.is_canonical() {
        return Err(Error::Precondition(format!(
            "{}x{} is not an equirectangular map",
            gt.width(),
            gt.height()
        )));
    }
    Ok((pred, gt))
}

/// Runs the job on a dedicated thread pool. The report does not depend on
/// the thread count: each pair is processed independently with a seed
/// derived from its id and results are ordered by id.
pub fn run_benchmark(job: &BenchmarkJob) -> Result<MetricReport> {
    let (pairs, mut skipped) = pair_files(job)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        let loaded: Vec<(String, Result<(EnvironmentMap, EnvironmentMap)>)> =
            pairs.par_iter().map(|p| (p.id.clone(), load_pair(p))).collect();
        let mut mask_sets: HashMap<(usize, usize), ProjectionMaskSet> = HashMap::new();
        for (_, r) in &loaded {
            if let Ok((_, gt)) = r {
                if !mask_sets.contains_key(&gt.dims()) {
                    let (w, h) = gt.dims();
                    mask_sets.insert((w, h), gen_projection_masks(w, h, job.projection_masks, job.seed)?);
                }
            }
        }
        let outcomes: Vec<(String, Result<PairOutcome>)> = loaded
            .into_par_iter()
            .map(|(id, r)| {
                let out = r.and_then(|(pred, gt)| {
                    let ctx = PairContext {
                        policy: &job.mask_policy,
                        extract: &job.extract,
                        projection: &mask_sets[&gt.dims()],
                        compute_lights: job.compute_lights,
                        seed: job.seed,
                    };
                    evaluate_pair(&id, &pred, &gt, &ctx)
                });
                (id, out)
            })
            .collect();
        let mut metrics = Vec::new();
        let mut gt_set = Vec::new();
        let mut pred_set = Vec::new();
        for (id, r) in outcomes {
            match r {
                Ok(o) => {
                    metrics.push(o.metrics);
                    gt_set.push(o.gt_log);
                    pred_set.push(o.composite_log);
                }
                Err(e) => {
                    log::warn!("skipping {id}: {e}");
                    skipped.push(format!("{id}: {e}"));
                }
            }
        }
        if metrics.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no comparable pairs ({} skipped)",
                skipped.len()
            )));
        }
        let same_dims = gt_set.windows(2).all(|p| p[0].dims() == p[1].dims());
        let fid_value = if job.compute_fid && gt_set.len() >= 2 && same_dims {
            Some(fid(&pred_set, &gt_set, &PatchStats)?)
        } else {
            None
        };
        Ok(MetricReport::assemble(job.seed, metrics, fid_value, PatchStats.name(), skipped))
    })
}
