//! Single-scale SSIM with a uniform 8x8 window, plus MSE.

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Mean SSIM over every valid 8x8 window (stride 1) and every channel.
/// `dynamic_range` is `L`, the span of the value range (2 for [-1, 1]).
pub fn ssim(a: &Image, b: &Image, dynamic_range: f64) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Precondition(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    if !(dynamic_range > 0.0) {
        return Err(Error::InvalidArgument("dynamic range must be positive".into()));
    }
    let c1 = (K1 * dynamic_range).powi(2);
    let c2 = (K2 * dynamic_range).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let sx = SummedArea::new(w, h, |u, v| a.get(u, v)[ch]);
        let sy = SummedArea::new(w, h, |u, v| b.get(u, v)[ch]);
        let sxx = SummedArea::new(w, h, |u, v| a.get(u, v)[ch].powi(2));
        let syy = SummedArea::new(w, h, |u, v| b.get(u, v)[ch].powi(2));
        let sxy = SummedArea::new(w, h, |u, v| a.get(u, v)[ch] * b.get(u, v)[ch]);
        for v in 0..=h - SSIM_WINDOW {
            for u in 0..=w - SSIM_WINDOW {
                let mx = sx.window(u, v) / n;
                let my = sy.window(u, v) / n;
                let vx = (sxx.window(u, v) / n - mx * mx).max(0.0);
                let vy = (syy.window(u, v) / n - my * my).max(0.0);
                let cov = sxy.window(u, v) / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

struct SummedArea {
    w: usize,
    table: Vec<f64>,
}

impl SummedArea {
    fn new(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let stride = w + 1;
        let mut table = vec![0.0; stride * (h + 1)];
        for v in 0..h {
            let mut row = 0.0;
            for u in 0..w {
                row += f(u, v);
                table[(v + 1) * stride + u + 1] = table[v * stride + u + 1] + row;
            }
        }
        Self { w, table }
    }

    #[inline]
    fn window(&self, u: usize, v: usize) -> f64 {
        let s = self.w + 1;
        let (u1, v1) = (u + SSIM_WINDOW, v + SSIM_WINDOW);
        self.table[v1 * s + u1] - self.table[v * s + u1] - self.table[v1 * s + u] + self.table[v * s + u]
    }
}

/// Mean squared difference over all channels and pixels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.data().is_empty() {
        return Ok(0.0);
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.data().len() as f64)
}
