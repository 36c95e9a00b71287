//! Clipped log encoding of linear HDR maps and network-input preparation.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dims_mismatch, Error, Result};
use crate::image::{BinaryMask, Domain, EnvironmentMap, Image};

/// Parameters of the log transform and of input tone mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneMapParams {
    /// Exposure factor relative to the image mean: `alpha = alpha_scale * mean`.
    pub alpha_scale: f64,
    pub gamma: f64,
    pub clip_low: f64,
    pub clip_high: f64,
}

impl Default for ToneMapParams {
    fn default() -> Self {
        Self {
            alpha_scale: 0.2,
            gamma: 2.2,
            clip_low: -1.0,
            clip_high: 1.0,
        }
    }
}

impl ToneMapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_scale > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument(
                "alpha_scale and gamma must be positive".into(),
            ));
        }
        if !(self.clip_low < self.clip_high) {
            return Err(Error::InvalidArgument("clip_low must be below clip_high".into()));
        }
        Ok(())
    }
}

/// Result of [`log_encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogEncoded {
    pub map: EnvironmentMap,
    /// The exposure factor used; zero for an all-black input.
    pub alpha: f64,
    /// Set when the input had zero mean and the output is all -1.
    pub degenerate: bool,
}

/// `G = min(max(0, log10(x * alpha + 1)), 2) - 1` with `alpha` derived from
/// the joint mean over all channels and pixels.
pub fn log_encode(g_lin: &EnvironmentMap, params: &ToneMapParams) -> Result<LogEncoded> {
    params.validate()?;
    check_linear(g_lin)?;
    let alpha = params.alpha_scale * g_lin.mean();
    let degenerate = alpha <= 0.0;
    if degenerate {
        warn!("log_encode: input has zero mean, emitting an all -1 map");
    }
    let image = g_lin.map(|x| log_encode_value(x, alpha));
    Ok(LogEncoded {
        map: EnvironmentMap::new(image, Domain::Log),
        alpha,
        degenerate,
    })
}

/// Log-encodes with an externally supplied exposure factor.
pub fn log_encode_with_alpha(g_lin: &EnvironmentMap, alpha: f64) -> Result<EnvironmentMap> {
    check_linear(g_lin)?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} must be finite and >= 0"
        )));
    }
    Ok(EnvironmentMap::new(
        g_lin.map(|x| log_encode_value(x, alpha)),
        Domain::Log,
    ))
}

#[inline]
pub fn log_encode_value(x: f64, alpha: f64) -> f64 {
    (x * alpha + 1.0).log10().clamp(0.0, 2.0) - 1.0
}

/// Inverse of [`log_encode`] on the unclipped range: `(10^(g+1) - 1) / alpha`.
pub fn log_decode(g: &EnvironmentMap, alpha: f64) -> Result<EnvironmentMap> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be positive")));
    }
    if g.domain != Domain::Log {
        return Err(Error::Precondition(format!(
            "expected a Log map, got {:?}",
            g.domain
        )));
    }
    g.validate()?;
    Ok(EnvironmentMap::linear(
        g.map(|x| (10f64.powf(x + 1.0) - 1.0) / alpha),
    ))
}

fn check_linear(map: &EnvironmentMap) -> Result<()> {
    if map.domain != Domain::LinearHdr {
        return Err(Error::Precondition(format!(
            "expected a LinearHdr map, got {:?}",
            map.domain
        )));
    }
    map.validate()
}

/// Four-channel network input: RGB in [-1, 1] followed by the mask channel
/// (0 on known pixels, 1 on unknown ones).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl NetworkInput {
    pub const CHANNELS: usize = 4;

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major `H x W x 4` tensor.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> [f32; 4] {
        let i = (v * self.width + u) * 4;
        [self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3]]
    }

    /// RGB channels as an image.
    pub fn rgb(&self) -> Image {
        Image::from_fn(self.width, self.height, |u, v| {
            let p = self.get(u, v);
            [p[0] as f64, p[1] as f64, p[2] as f64]
        })
    }

    /// Mask channel as a binary mask (set = unknown).
    pub fn unknown_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |u, v| self.get(u, v)[3] != 0.0)
    }
}

/// Tone maps the known pixels of a partial linear map (exposure
/// compensation, gamma, `2x - 1`, clip) and fills unknown pixels with
/// `U(-1, 1)` noise from a generator seeded with `rng_seed`.
///
/// `known` has a set bit for every observed pixel.
pub fn prepare_network_input(
    partial: &EnvironmentMap,
    known: &BinaryMask,
    rng_seed: u64,
    params: &ToneMapParams,
) -> Result<NetworkInput> {
    params.validate()?;
    check_linear(partial)?;
    if partial.dims() != known.dims() {
        return Err(dims_mismatch(partial.dims(), known.dims()));
    }
    let n_known = known.count();
    if n_known == 0 {
        return Err(Error::NoKnownPixels);
    }
    let (w, h) = partial.dims();
    let mut sum = 0.0;
    for v in 0..h {
        for u in 0..w {
            if known.get(u, v) {
                sum += partial.get(u, v).iter().sum::<f64>();
            }
        }
    }
    let mean = sum / (3 * n_known) as f64;
    let inv_gamma = 1.0 / params.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut data = Vec::with_capacity(w * h * 4);
    for v in 0..h {
        for u in 0..w {
            if known.get(u, v) {
                for x in partial.get(u, v) {
                    let x = if mean > 0.0 { x / mean } else { 0.0 };
                    let y = 2.0 * x.powf(inv_gamma) - 1.0;
                    data.push(y.clamp(params.clip_low, params.clip_high) as f32);
                }
                data.push(0.0);
            } else {
                for _ in 0..3 {
                    data.push(rng.random_range(-1.0f32..1.0));
                }
                data.push(1.0);
            }
        }
    }
    Ok(NetworkInput {
        width: w,
        height: h,
        data,
    })
}
