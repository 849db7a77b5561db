//! Evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::loss;
use crate::raster::Raster;

/// PSNR is capped here for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Peak signal-to-noise ratio for images in `[0, 1]`.
pub fn psnr(a: &Raster<f64>, b: &Raster<f64>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.data.len().max(1) as f64;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

pub fn ssim(a: &Raster<f64>, b: &Raster<f64>) -> Result<f64> {
    loss::ssim(a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub median_psnr: f64,
    pub mean_ssim: f64,
    pub median_ssim: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

impl EvalReport {
    pub fn from_views(views: Vec<ViewMetrics>) -> Self {
        let p: Vec<f64> = views.iter().map(|v| v.psnr).collect();
        let s: Vec<f64> = views.iter().map(|v| v.ssim).collect();
        EvalReport {
            mean_psnr: mean(&p),
            median_psnr: median(&p),
            mean_ssim: mean(&s),
            median_ssim: median(&s),
            views,
        }
    }
}

/// Scores each `(name, rendered, reference)` triple.
pub fn evaluate<'a, I>(pairs: I) -> Result<EvalReport>
where
    I: IntoIterator<Item = (String, &'a Raster<f64>, &'a Raster<f64>)>,
{
    let mut views = Vec::new();
    for (view, r, g) in pairs {
        views.push(ViewMetrics {
            view,
            psnr: psnr(r, g)?,
            ssim: ssim(r, g)?,
        });
    }
    Ok(EvalReport::from_views(views))
}
