//! Forward splatting renderer and its analytic backward pass.
//!
//! Gaussians are projected with the local affine (EWA) approximation of the
//! pinhole camera, sorted front to back by view depth and alpha-composited
//! per pixel. Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`.
//!
//! Culling uses 16x16 screen tiles: a Gaussian is only evaluated on tiles its
//! cutoff ellipse touches. Inside a tile the composite is the same as a full
//! per-pixel traversal of the depth-sorted list.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::gaussian::{quat_to_matrix, quat_to_matrix_backward, sigmoid, GaussianCloud};
use crate::raster::Raster;
use crate::scene::CameraPose;

/// Screen-space dilation added to the projected covariance diagonal, in px².
pub const LOW_PASS: f64 = 0.3;
/// Per-splat alpha clamp.
pub const MAX_ALPHA: f64 = 0.99;
/// Compositing stops once transmittance would fall below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Guard on accumulated alpha when normalizing expected depth.
pub const DEPTH_EPS: f64 = 1e-8;
/// Gaussians closer than this (view space) are culled.
pub const NEAR_PLANE: f64 = 0.01;

const TILE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Splat contributions with alpha below this are skipped. The standard
    /// value is 1/255; gradient checks use a tiny cutoff so that the skipped
    /// mass is negligible.
    pub alpha_cutoff: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            alpha_cutoff: 1.0 / 255.0,
        }
    }
}

impl RenderSettings {
    pub fn exact() -> Self {
        RenderSettings { alpha_cutoff: 1e-14 }
    }
}

/// Color, expected depth and accumulated alpha of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Raster<f64>,
    pub depth: Raster<f64>,
    pub alpha: Raster<f64>,
}

impl RenderOutput {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// View-space depth of the mean.
    pub depth: f64,
}

#[derive(Debug, Clone)]
struct Projected {
    index: usize,
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
    depth: f64,
    opacity: f64,
    color: Vector3<f64>,
    radius: f64,
    /// Exponent below which the splat's alpha falls under the cutoff.
    min_power: f64,
    // intermediates for the backward pass
    p_cam: Vector3<f64>,
    jac: Matrix2x3<f64>,
    cov3d: Matrix3<f64>,
    rot: Matrix3<f64>,
    scale: Vector3<f64>,
}

fn camera_jacobian(cam: &CameraPose, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let k = &cam.intrinsics;
    let (x, y, z) = (p.x, p.y, p.z);
    Matrix2x3::new(
        k.fx / z,
        0.0,
        -k.fx * x / (z * z),
        0.0,
        k.fy / z,
        -k.fy * y / (z * z),
    )
}

/// Projects one Gaussian. Returns `None` when the mean is behind the near
/// plane (culled).
pub fn project_gaussian(
    mean: &Vector3<f64>,
    scale: &Vector3<f64>,
    rotation: &Vector4<f64>,
    camera: &CameraPose,
) -> Option<Projection> {
    let p = camera.rotation * mean + camera.translation;
    if p.z <= NEAR_PLANE {
        return None;
    }
    let k = &camera.intrinsics;
    let r = quat_to_matrix(rotation);
    let m = r * Matrix3::from_diagonal(scale);
    let cov3d = m * m.transpose();
    let t = camera_jacobian(camera, &p) * camera.rotation;
    let cov2d = t * cov3d * t.transpose() + Matrix2::identity() * LOW_PASS;
    Some(Projection {
        mean2d: Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy),
        cov2d,
        depth: p.z,
    })
}

fn project_all(cloud: &GaussianCloud, camera: &CameraPose, settings: &RenderSettings) -> Vec<Projected> {
    let mut out = Vec::with_capacity(cloud.len());
    let k = &camera.intrinsics;
    for i in 0..cloud.len() {
        let p_cam = camera.rotation * cloud.means[i] + camera.translation;
        if p_cam.z <= NEAR_PLANE {
            continue;
        }
        let opacity = sigmoid(cloud.opacity_logits[i]);
        if !(opacity > settings.alpha_cutoff) {
            continue;
        }
        let rot = quat_to_matrix(&cloud.rotations[i]);
        let scale = cloud.scale(i);
        let m = rot * Matrix3::from_diagonal(&scale);
        let cov3d = m * m.transpose();
        let jac = camera_jacobian(camera, &p_cam);
        let t = jac * camera.rotation;
        let cov2d = t * cov3d * t.transpose() + Matrix2::identity() * LOW_PASS;
        let det = cov2d.determinant();
        if !(det > 0.0) || !det.is_finite() {
            continue;
        }
        let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;
        let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
        let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
        let radius = (2.0 * lambda_max * (opacity / settings.alpha_cutoff).ln()).sqrt();
        out.push(Projected {
            index: i,
            mean2d: Vector2::new(k.fx * p_cam.x / p_cam.z + k.cx, k.fy * p_cam.y / p_cam.z + k.cy),
            conic,
            depth: p_cam.z,
            opacity,
            color: cloud.colors[i],
            radius,
            min_power: (settings.alpha_cutoff / opacity).ln(),
            p_cam,
            jac,
            cov3d,
            rot,
            scale,
        });
    }
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    out
}

/// Per-tile lists of indices into the sorted projection list.
fn bin_tiles(projected: &[Projected], width: usize, height: usize) -> (usize, Vec<Vec<u32>>) {
    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    for (k, g) in projected.iter().enumerate() {
        let x0 = g.mean2d.x - g.radius;
        let x1 = g.mean2d.x + g.radius;
        let y0 = g.mean2d.y - g.radius;
        let y1 = g.mean2d.y + g.radius;
        if x1 < 0.0 || y1 < 0.0 || x0 > width as f64 || y0 > height as f64 || !x0.is_finite() || !y0.is_finite() {
            continue;
        }
        let tx0 = (x0.max(0.0) as usize / TILE).min(tiles_x - 1);
        let tx1 = ((x1.min(width as f64 - 1e-9)) as usize / TILE).min(tiles_x - 1);
        let ty0 = (y0.max(0.0) as usize / TILE).min(tiles_y - 1);
        let ty1 = ((y1.min(height as f64 - 1e-9)) as usize / TILE).min(tiles_y - 1);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    (tiles_x, bins)
}

#[derive(Debug, Clone, Copy)]
struct Contribution {
    slot: u32,
    alpha: f64,
    transmittance: f64,
    gauss: f64,
    clamped: bool,
    d: Vector2<f64>,
}

/// Walks the splats covering one pixel front to back. Returns the final
/// transmittance.
#[inline]
fn composite_pixel(
    projected: &[Projected],
    list: &[u32],
    px: Vector2<f64>,
    settings: &RenderSettings,
    mut visit: impl FnMut(Contribution),
) -> f64 {
    let mut t = 1.0;
    for &slot in list {
        let g = &projected[slot as usize];
        let d = px - g.mean2d;
        let q = &g.conic;
        let power = -0.5 * (q[(0, 0)] * d.x * d.x + 2.0 * q[(0, 1)] * d.x * d.y + q[(1, 1)] * d.y * d.y);
        if power > 0.0 || power < g.min_power {
            continue;
        }
        let gauss = power.exp();
        let raw = g.opacity * gauss;
        if raw < settings.alpha_cutoff {
            continue;
        }
        let clamped = raw > MAX_ALPHA;
        let alpha = raw.min(MAX_ALPHA);
        let next_t = t * (1.0 - alpha);
        if next_t < MIN_TRANSMITTANCE {
            break;
        }
        visit(Contribution {
            slot,
            alpha,
            transmittance: t,
            gauss,
            clamped,
            d,
        });
        t = next_t;
    }
    t
}

pub fn render(cloud: &GaussianCloud, camera: &CameraPose, background: Vector3<f64>) -> RenderOutput {
    render_with(cloud, camera, background, &RenderSettings::default())
}

pub fn render_with(
    cloud: &GaussianCloud,
    camera: &CameraPose,
    background: Vector3<f64>,
    settings: &RenderSettings,
) -> RenderOutput {
    let (w, h) = (camera.intrinsics.width, camera.intrinsics.height);
    let projected = project_all(cloud, camera, settings);
    let (tiles_x, bins) = bin_tiles(&projected, w, h);
    let mut color = Raster::<f64>::new(w, h, 3);
    let mut depth = Raster::<f64>::new(w, h, 1);
    let mut alpha = Raster::<f64>::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let list = &bins[(y / TILE) * tiles_x + x / TILE];
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut c = Vector3::zeros();
            let mut z = 0.0;
            // Σ a_i T_i equals 1 - T_final but keeps precision when coverage is faint
            let mut a = 0.0;
            let t_final = composite_pixel(&projected, list, px, settings, |k| {
                let g = &projected[k.slot as usize];
                let wgt = k.alpha * k.transmittance;
                c += g.color * wgt;
                z += g.depth * wgt;
                a += wgt;
            });
            c += background * t_final;
            for ch in 0..3 {
                color.set(x, y, ch, c[ch]);
            }
            depth.set(x, y, 0, z / a.max(DEPTH_EPS));
            alpha.set(x, y, 0, a);
        }
    }
    RenderOutput { color, depth, alpha }
}

/// Gradients with respect to every optimizable parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudGradients {
    pub means: Vec<Vector3<f64>>,
    pub log_scales: Vec<Vector3<f64>>,
    pub rotations: Vec<Vector4<f64>>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<Vector3<f64>>,
    /// Norm of the screen-space mean gradient in NDC units (pixel gradient
    /// times half the image size), the densification statistic.
    pub screen_grad_norms: Vec<f64>,
    /// Whether the Gaussian touched any pixel in this view.
    pub visible: Vec<bool>,
}

impl CloudGradients {
    pub fn zeros(n: usize) -> Self {
        CloudGradients {
            means: vec![Vector3::zeros(); n],
            log_scales: vec![Vector3::zeros(); n],
            rotations: vec![Vector4::zeros(); n],
            opacity_logits: vec![0.0; n],
            colors: vec![Vector3::zeros(); n],
            screen_grad_norms: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    /// Accumulates `other * weight` into `self`; visibility is or-ed and
    /// screen gradient norms added.
    pub fn add_scaled(&mut self, other: &CloudGradients, weight: f64) {
        for i in 0..self.means.len() {
            self.means[i] += other.means[i] * weight;
            self.log_scales[i] += other.log_scales[i] * weight;
            self.rotations[i] += other.rotations[i] * weight;
            self.opacity_logits[i] += other.opacity_logits[i] * weight;
            self.colors[i] += other.colors[i] * weight;
            self.screen_grad_norms[i] += other.screen_grad_norms[i] * weight;
            self.visible[i] |= other.visible[i];
        }
    }
}

#[derive(Clone, Copy, Default)]
struct ScreenGrad {
    mean2d: Vector2<f64>,
    conic: Vector3<f64>,
    opacity: f64,
    color: Vector3<f64>,
    depth: f64,
    touched: bool,
}

pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &CameraPose,
    background: Vector3<f64>,
    grad_color: &Raster<f64>,
    grad_depth: &Raster<f64>,
) -> Result<CloudGradients> {
    render_backward_with(cloud, camera, background, grad_color, grad_depth, &RenderSettings::default())
}

/// Backward pass of [`render_with`] for the scalar
/// `L = <grad_color, color> + <grad_depth, depth>`.
pub fn render_backward_with(
    cloud: &GaussianCloud,
    camera: &CameraPose,
    background: Vector3<f64>,
    grad_color: &Raster<f64>,
    grad_depth: &Raster<f64>,
    settings: &RenderSettings,
) -> Result<CloudGradients> {
    let (w, h) = (camera.intrinsics.width, camera.intrinsics.height);
    if grad_color.width != w || grad_color.height != h || grad_color.channels != 3 {
        return Err(Error::shape(format!(
            "color gradient is {}x{}x{}, camera is {w}x{h}x3",
            grad_color.width, grad_color.height, grad_color.channels
        )));
    }
    if grad_depth.width != w || grad_depth.height != h || grad_depth.channels != 1 {
        return Err(Error::shape(format!(
            "depth gradient is {}x{}x{}, camera is {w}x{h}x1",
            grad_depth.width, grad_depth.height, grad_depth.channels
        )));
    }
    let projected = project_all(cloud, camera, settings);
    let (tiles_x, bins) = bin_tiles(&projected, w, h);
    let mut sg = vec![ScreenGrad::default(); projected.len()];
    let mut contribs: Vec<Contribution> = Vec::with_capacity(64);

    for y in 0..h {
        for x in 0..w {
            let gc = Vector3::new(grad_color.get(x, y, 0), grad_color.get(x, y, 1), grad_color.get(x, y, 2));
            let gd = grad_depth.get(x, y, 0);
            if gc == Vector3::zeros() && gd == 0.0 {
                continue;
            }
            let list = &bins[(y / TILE) * tiles_x + x / TILE];
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            contribs.clear();
            let mut depth_num = 0.0;
            let mut acc = 0.0;
            let t_final = composite_pixel(&projected, list, px, settings, |k| {
                let wgt = k.alpha * k.transmittance;
                depth_num += projected[k.slot as usize].depth * wgt;
                acc += wgt;
                contribs.push(k);
            });
            let acc_guarded = acc.max(DEPTH_EPS);
            let g_num = gd / acc_guarded;
            let g_acc = if acc > DEPTH_EPS {
                -gd * depth_num / (acc * acc)
            } else {
                0.0
            };
            // L_pixel = Σ v_i a_i T_i + tail·T_final
            let tail = gc.dot(&background) - g_acc;
            let mut suffix = tail * t_final;
            for k in contribs.iter().rev() {
                let g = &projected[k.slot as usize];
                let s = &mut sg[k.slot as usize];
                let wgt = k.alpha * k.transmittance;
                let value = gc.dot(&g.color) + g_num * g.depth;
                let d_alpha = k.transmittance * value - suffix / (1.0 - k.alpha);
                suffix += value * wgt;
                s.color += gc * wgt;
                s.depth += g_num * wgt;
                s.touched = true;
                if k.clamped {
                    continue;
                }
                s.opacity += d_alpha * k.gauss;
                let d_power = d_alpha * k.alpha;
                let q = &g.conic;
                let qd = Vector2::new(
                    q[(0, 0)] * k.d.x + q[(0, 1)] * k.d.y,
                    q[(1, 0)] * k.d.x + q[(1, 1)] * k.d.y,
                );
                s.mean2d += qd * d_power;
                s.conic += Vector3::new(
                    -0.5 * k.d.x * k.d.x,
                    -k.d.x * k.d.y,
                    -0.5 * k.d.y * k.d.y,
                ) * d_power;
            }
        }
    }

    let mut grads = CloudGradients::zeros(cloud.len());
    let kin = &camera.intrinsics;
    let w_rot = camera.rotation;
    for (g, s) in projected.iter().zip(&sg) {
        if !s.touched {
            continue;
        }
        let i = g.index;
        grads.visible[i] = true;
        grads.colors[i] = s.color;
        let o = g.opacity;
        grads.opacity_logits[i] = s.opacity * o * (1.0 - o);
        grads.screen_grad_norms[i] = Vector2::new(s.mean2d.x * w as f64 * 0.5, s.mean2d.y * h as f64 * 0.5).norm();

        // conic -> 2D covariance
        let g_conic = Matrix2::new(s.conic.x, 0.5 * s.conic.y, 0.5 * s.conic.y, s.conic.z);
        let g_cov2d = -g.conic * g_conic * g.conic;
        let t = g.jac * w_rot;
        let g_cov3d = t.transpose() * g_cov2d * t;
        let g_t = 2.0 * g_cov2d * t * g.cov3d;
        let g_jac = g_t * w_rot.transpose();

        let (px, py, pz) = (g.p_cam.x, g.p_cam.y, g.p_cam.z);
        let (fx, fy) = (kin.fx, kin.fy);
        let z2 = pz * pz;
        let z3 = z2 * pz;
        let mut g_p = Vector3::zeros();
        g_p.x += g_jac[(0, 2)] * (-fx / z2);
        g_p.y += g_jac[(1, 2)] * (-fy / z2);
        g_p.z += g_jac[(0, 0)] * (-fx / z2)
            + g_jac[(0, 2)] * (2.0 * fx * px / z3)
            + g_jac[(1, 1)] * (-fy / z2)
            + g_jac[(1, 2)] * (2.0 * fy * py / z3);
        // projected mean
        g_p.x += s.mean2d.x * fx / pz;
        g_p.y += s.mean2d.y * fy / pz;
        g_p.z += -s.mean2d.x * fx * px / z2 - s.mean2d.y * fy * py / z2;
        // view depth
        g_p.z += s.depth;
        grads.means[i] = w_rot.transpose() * g_p;

        // Σ3D = M Mᵀ with M = R·diag(s)
        let m = g.rot * Matrix3::from_diagonal(&g.scale);
        let g_m = 2.0 * g_cov3d * m;
        let g_r = g_m * Matrix3::from_diagonal(&g.scale);
        let g_s = Vector3::from_fn(|j, _| (0..3).map(|r| g_m[(r, j)] * g.rot[(r, j)]).sum::<f64>());
        grads.log_scales[i] = g_s.component_mul(&g.scale);
        grads.rotations[i] = quat_to_matrix_backward(&cloud.rotations[i], &g_r);
    }
    Ok(grads)
}

/// Pixels to in-paint: 1 where accumulated alpha is at most `tau`.
pub fn opacity_mask(alpha: &Raster<f64>, tau: f64) -> Result<Raster<f32>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    Ok(alpha.map(|a| if a <= tau { 1.0 } else { 0.0 }))
}

/// Fraction of pixels flagged by [`opacity_mask`].
pub fn masked_fraction(mask: &Raster<f32>) -> f64 {
    if mask.data.is_empty() {
        return 0.0;
    }
    mask.data.iter().filter(|&&v| v > 0.5).count() as f64 / mask.data.len() as f64
}
