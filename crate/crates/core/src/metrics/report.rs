//! Serialized benchmark results.

use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub id: String,
    /// `None` when either map yields no lights.
    pub angular_error_deg: Option<f64>,
    pub projection_loss: f64,
    pub ssim: f64,
    pub mse: f64,
    pub gt_lights: usize,
    pub pred_lights: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub pairs: usize,
    pub fid: Option<f64>,
    pub fid_extractor: String,
    /// Mean and population std over pairs with a defined angular error.
    pub angular_error_mean: Option<f64>,
    pub angular_error_std: Option<f64>,
    pub angular_error_count: usize,
    pub projection_loss_mean: f64,
    pub ssim_mean: f64,
    pub mse_mean: f64,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub report_version: u32,
    pub seed: u64,
    pub pairs: Vec<PairMetrics>,
    pub aggregate: AggregateMetrics,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

impl MetricReport {
    /// Sorts pairs by id and fills in the per-pair aggregates.
    pub fn assemble(
        seed: u64,
        mut pairs: Vec<PairMetrics>,
        fid: Option<f64>,
        fid_extractor: &str,
        mut skipped: Vec<String>,
    ) -> Self {
        pairs.sort_by(|a, b| a.id.cmp(&b.id));
        skipped.sort();
        let ang: Vec<f64> = pairs.iter().filter_map(|p| p.angular_error_deg).collect();
        let (am, asd) = mean_std(&ang);
        let col = |f: fn(&PairMetrics) -> f64| mean_std(&pairs.iter().map(f).collect::<Vec<_>>()).0;
        let aggregate = AggregateMetrics {
            pairs: pairs.len(),
            fid,
            fid_extractor: fid_extractor.to_string(),
            angular_error_mean: (!ang.is_empty()).then_some(am),
            angular_error_std: (!ang.is_empty()).then_some(asd),
            angular_error_count: ang.len(),
            projection_loss_mean: col(|p| p.projection_loss),
            ssim_mean: col(|p| p.ssim),
            mse_mean: col(|p| p.mse),
            skipped,
        };
        Self {
            report_version: REPORT_VERSION,
            seed,
            pairs,
            aggregate,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One header line and one row per pair.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("id,angular_error_deg,projection_loss,ssim,mse,gt_lights,pred_lights\n");
        for p in &self.pairs {
            let ang = p.angular_error_deg.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.id, ang, p.projection_loss, p.ssim, p.mse, p.gt_lights, p.pred_lights
            ));
        }
        out
    }
}
