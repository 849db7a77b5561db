//! Central finite-difference oracle for the renderer's backward pass.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse360::gaussian::{GaussianCloud, Splat};
use sparse360::raster::Raster;
use sparse360::render::{render_backward_with, render_with, RenderSettings};
use sparse360::scene::{CameraPose, Intrinsics};

pub struct GradProblem {
    pub cloud: GaussianCloud,
    pub camera: CameraPose,
    pub background: Vector3<f64>,
    pub grad_color: Raster<f64>,
    pub grad_depth: Raster<f64>,
}

/// Random scene of at most 5 Gaussians in front of a 16x16 camera.
pub fn random_problem(seed: u64) -> GradProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 16;
    let k = Intrinsics::centered(16.0, size, size);
    let eye = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), -3.0);
    let camera = CameraPose::look_at(0, k, eye, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0));
    let n = rng.random_range(1..=5);
    let splats = (0..n).map(|_| Splat {
        mean: Vector3::new(
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-1.0..1.0),
        ),
        scale: Vector3::new(
            rng.random_range(0.1..0.5),
            rng.random_range(0.1..0.5),
            rng.random_range(0.1..0.5),
        ),
        rotation: UnitQuaternion::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.0..3.0),
        ),
        opacity: rng.random_range(0.1..0.8),
        color: Vector3::new(rng.random(), rng.random(), rng.random()),
    });
    let cloud = GaussianCloud::from_splats(splats);
    let gc = (0..size * size * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gd = (0..size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
    GradProblem {
        cloud,
        camera,
        background: Vector3::new(rng.random(), rng.random(), rng.random()),
        grad_color: Raster::from_vec(size, size, 3, gc).unwrap(),
        grad_depth: Raster::from_vec(size, size, 1, gd).unwrap(),
    }
}

fn objective(p: &GradProblem, cloud: &GaussianCloud) -> f64 {
    let out = render_with(cloud, &p.camera, p.background, &RenderSettings::exact());
    let c: f64 = out.color.data.iter().zip(&p.grad_color.data).map(|(a, b)| a * b).sum();
    let d: f64 = out.depth.data.iter().zip(&p.grad_depth.data).map(|(a, b)| a * b).sum();
    c + d
}

/// Parameter groups in the order they are checked.
pub const GROUPS: [&str; 5] = ["means", "log_scales", "rotations", "opacity_logits", "colors"];

fn param_mut(cloud: &mut GaussianCloud, group: usize, i: usize, k: usize) -> &mut f64 {
    match group {
        0 => &mut cloud.means[i][k],
        1 => &mut cloud.log_scales[i][k],
        2 => &mut cloud.rotations[i][k],
        3 => &mut cloud.opacity_logits[i],
        _ => &mut cloud.colors[i][k],
    }
}

fn group_dim(group: usize) -> usize {
    match group {
        2 => 4,
        3 => 1,
        _ => 3,
    }
}

pub struct CheckResult {
    /// Worst relative error per parameter group.
    pub max_rel: [f64; 5],
    pub entries: usize,
}

/// Relative error with a floor on the denominator so that entries whose
/// true gradient is (numerically) zero are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn check(p: &GradProblem, h: f64, floor: f64) -> CheckResult {
    let grads = render_backward_with(
        &p.cloud,
        &p.camera,
        p.background,
        &p.grad_color,
        &p.grad_depth,
        &RenderSettings::exact(),
    )
    .unwrap();
    let mut max_rel = [0.0f64; 5];
    let mut entries = 0;
    for group in 0..5 {
        for i in 0..p.cloud.len() {
            for k in 0..group_dim(group) {
                let analytic = match group {
                    0 => grads.means[i][k],
                    1 => grads.log_scales[i][k],
                    2 => grads.rotations[i][k],
                    3 => grads.opacity_logits[i],
                    _ => grads.colors[i][k],
                };
                let mut plus = p.cloud.clone();
                *param_mut(&mut plus, group, i, k) += h;
                let mut minus = p.cloud.clone();
                *param_mut(&mut minus, group, i, k) -= h;
                let numeric = (objective(p, &plus) - objective(p, &minus)) / (2.0 * h);
                let rel = relative_error(analytic, numeric, floor);
                max_rel[group] = max_rel[group].max(rel);
                entries += 1;
            }
        }
    }
    CheckResult { max_rel, entries }
}
