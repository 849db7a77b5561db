//! Image and depth losses with their gradients.

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean absolute difference.
pub fn l1_loss(a: &Raster<f64>, b: &Raster<f64>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.data.is_empty() {
        return Ok(0.0);
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64)
}

/// L1 value and its (sub)gradient with respect to `a`.
pub fn l1_loss_grad(a: &Raster<f64>, b: &Raster<f64>) -> Result<(f64, Raster<f64>)> {
    let value = l1_loss(a, b)?;
    let n = a.data.len().max(1) as f64;
    let grad = Raster {
        width: a.width,
        height: a.height,
        channels: a.channels,
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| {
                let d = x - y;
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect(),
    };
    Ok((value, grad))
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - half;
        *t = (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Normalized 11x11 Gaussian window, row-major. Exposed for reference
/// implementations.
pub fn ssim_window() -> Vec<f64> {
    let g = gaussian_taps();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in g {
        for b in g {
            w.push(a * b);
        }
    }
    w
}

/// Separable Gaussian blur of one plane with zero padding ("same" output).
fn blur(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = SSIM_WINDOW / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let k0 = r.saturating_sub(x);
            let k1 = SSIM_WINDOW.min(w + r - x);
            let mut acc = 0.0;
            for k in k0..k1 {
                acc += taps[k] * row[x + k - r];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let k0 = r.saturating_sub(y);
        let k1 = SSIM_WINDOW.min(h + r - y);
        let dst = &mut out[y * w..(y + 1) * w];
        for k in k0..k1 {
            let t = taps[k];
            let src = &tmp[(y + k - r) * w..(y + k - r + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    out
}

fn plane(r: &Raster<f64>, c: usize) -> Vec<f64> {
    r.data.iter().skip(c).step_by(r.channels).copied().collect()
}

/// Mean SSIM over all pixels and channels, and optionally its gradient with
/// respect to `a`.
fn ssim_impl(a: &Raster<f64>, b: &Raster<f64>, want_grad: bool) -> Result<(f64, Option<Raster<f64>>)> {
    a.ensure_same_shape(b)?;
    let (w, h, ch) = (a.width, a.height, a.channels);
    let n = w * h;
    if n == 0 || ch == 0 {
        return Err(Error::shape("SSIM of an empty raster"));
    }
    let taps = gaussian_taps();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Raster::<f64>::new(w, h, ch));
    let count = (n * ch) as f64;
    for c in 0..ch {
        let x = plane(a, c);
        let y = plane(b, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_x = blur(&x, w, h, &taps);
        let mu_y = blur(&y, w, h, &taps);
        let e_xx = blur(&xx, w, h, &taps);
        let e_yy = blur(&yy, w, h, &taps);
        let e_xy = blur(&xy, w, h, &taps);

        let mut d_mu = vec![0.0; n];
        let mut d_exx = vec![0.0; n];
        let mut d_exy = vec![0.0; n];
        for p in 0..n {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let vx = e_xx[p] - mx * mx;
            let vy = e_yy[p] - my * my;
            let cxy = e_xy[p] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let ds_dmx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
                let ds_dvx = -s / b2;
                let ds_dcxy = 2.0 * a1 / (b1 * b2);
                d_mu[p] = (ds_dmx + ds_dvx * (-2.0 * mx) + ds_dcxy * (-my)) / count;
                d_exx[p] = ds_dvx / count;
                d_exy[p] = ds_dcxy / count;
            }
        }
        if let Some(g) = grad.as_mut() {
            // the zero-padded symmetric blur is self-adjoint
            let bm = blur(&d_mu, w, h, &taps);
            let bxx = blur(&d_exx, w, h, &taps);
            let bxy = blur(&d_exy, w, h, &taps);
            for p in 0..n {
                g.data[p * ch + c] = bm[p] + 2.0 * x[p] * bxx[p] + y[p] * bxy[p];
            }
        }
    }
    Ok((total / count, grad))
}

/// Structural similarity with an 11x11 Gaussian window (σ = 1.5), zero
/// padding and the usual stability constants on a `[0, 1]` range.
pub fn ssim(a: &Raster<f64>, b: &Raster<f64>) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// `(1 - SSIM) / 2`.
pub fn dssim_loss(a: &Raster<f64>, b: &Raster<f64>) -> Result<f64> {
    Ok((1.0 - ssim(a, b)?) / 2.0)
}

pub fn dssim_loss_grad(a: &Raster<f64>, b: &Raster<f64>) -> Result<(f64, Raster<f64>)> {
    let (s, g) = ssim_impl(a, b, true)?;
    let mut g = g.expect("gradient requested");
    g.data.iter_mut().for_each(|v| *v *= -0.5);
    Ok(((1.0 - s) / 2.0, g))
}

/// Result of the correlation depth loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLoss {
    /// `1 - PCC`, in `[0, 2]`.
    pub value: f64,
    /// Gradient with respect to the rendered depth.
    pub grad: Raster<f64>,
    /// Fewer than two valid pixels or a constant input; the loss falls back
    /// to 1 with zero gradient.
    pub degenerate: bool,
}

/// `1 - Pearson(d_ras, d_est)` over valid pixels, after min-max normalizing
/// both maps to `[0, 1]`. Pixels with `valid = 0` (or non-finite values) are
/// ignored. Without a mask every pixel is valid.
pub fn pcc_depth_loss(d_ras: &Raster<f64>, d_est: &Raster<f64>, valid: Option<&Raster<f32>>) -> Result<DepthLoss> {
    d_ras.ensure_same_shape(d_est)?;
    if d_ras.channels != 1 {
        return Err(Error::shape("depth maps must have one channel"));
    }
    if let Some(m) = valid {
        d_ras.ensure_same_shape(m)?;
    }
    let mut grad = Raster::<f64>::new(d_ras.width, d_ras.height, 1);
    let idx: Vec<usize> = (0..d_ras.data.len())
        .filter(|&i| {
            valid.is_none_or(|m| m.data[i] > 0.5) && d_ras.data[i].is_finite() && d_est.data[i].is_finite()
        })
        .collect();
    let degenerate = |grad| DepthLoss {
        value: 1.0,
        grad,
        degenerate: true,
    };
    if idx.len() < 2 {
        return Ok(degenerate(grad));
    }
    let normalize = |r: &Raster<f64>| -> Option<Vec<f64>> {
        let (lo, hi) = idx
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(r.data[i]), hi.max(r.data[i])));
        let span = hi - lo;
        (span > 0.0).then(|| idx.iter().map(|&i| (r.data[i] - lo) / span).collect())
    };
    let (Some(x), Some(y)) = (normalize(d_ras), normalize(d_est)) else {
        return Ok(degenerate(grad));
    };
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov /= n;
    vx /= n;
    vy /= n;
    if !(vx > 0.0 && vy > 0.0) {
        return Ok(degenerate(grad));
    }
    let denom = (vx * vy).sqrt();
    let rho = (cov / denom).clamp(-1.0, 1.0);
    // PCC is invariant to the positive affine normalization, so the gradient
    // is that of the raw correlation, rescaled by the normalization span.
    let (lo, hi) = idx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(d_ras.data[i]), hi.max(d_ras.data[i])));
    let span = hi - lo;
    for (k, &i) in idx.iter().enumerate() {
        let d_rho = ((y[k] - my) / denom - rho * (x[k] - mx) / vx) / n;
        grad.data[i] = -d_rho / span;
    }
    Ok(DepthLoss {
        value: 1.0 - rho,
        grad,
        degenerate: false,
    })
}
