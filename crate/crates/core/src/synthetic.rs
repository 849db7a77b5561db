//! Procedural toy scenes with known ground truth.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::gaussian::{GaussianCloud, Splat};
use crate::raster::Raster;
use crate::render::render;
use crate::scene::{CameraPose, Intrinsics, Scene, SparsePointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct ToySceneConfig {
    pub gaussians: usize,
    pub views: usize,
    pub size: usize,
    pub focal: f64,
    /// Ring radius of the cameras around the origin.
    pub radius: f64,
    /// Peak camera height above and below the ring plane.
    pub height_wobble: f64,
    /// SfM-like points sampled per Gaussian.
    pub points_per_gaussian: usize,
    /// Standard deviation of the position noise on those points.
    pub point_noise: f64,
    /// Extra uniformly scattered points with random colors, standing in for
    /// SfM outliers.
    pub outlier_points: usize,
    pub seed: u64,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        ToySceneConfig {
            gaussians: 20,
            views: 30,
            size: 64,
            focal: 80.0,
            radius: 4.0,
            height_wobble: 0.6,
            points_per_gaussian: 1,
            point_noise: 0.15,
            outlier_points: 20,
            seed: 0,
        }
    }
}

/// A scene rendered from a known cloud. Depths hold the rendered depth
/// where the ground-truth alpha is at least 0.5 and zero elsewhere.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub truth: GaussianCloud,
    pub scene: Scene,
}

/// Cameras on a horizontal ring looking at the origin, with a gentle
/// sinusoidal height variation.
pub fn ring_cameras(n: usize, radius: f64, wobble: f64, k: Intrinsics) -> Vec<CameraPose> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            let eye = Vector3::new(radius * a.cos(), wobble * (3.0 * a).sin(), radius * a.sin());
            CameraPose::look_at(i, k, eye, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0))
        })
        .collect()
}

pub fn toy_scene(cfg: &ToySceneConfig) -> Result<ToyScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut splats = Vec::with_capacity(cfg.gaussians);
    for _ in 0..cfg.gaussians {
        // rejection-sample a point in the unit ball
        let mean = loop {
            let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm() <= 1.0 {
                break p;
            }
        };
        splats.push(Splat {
            mean,
            scale: Vector3::new(rng.random_range(0.08..0.3), rng.random_range(0.08..0.3), rng.random_range(0.08..0.3)),
            rotation: UnitQuaternion::from_euler_angles(
                rng.random_range(-3.1..3.1),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.1..3.1),
            ),
            opacity: rng.random_range(0.6..0.95),
            color: Vector3::new(rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)),
        });
    }
    let truth = GaussianCloud::from_splats(splats);

    let noise = Normal::new(0.0, cfg.point_noise.max(0.0)).expect("finite noise");
    let mut cloud = SparsePointCloud::default();
    for i in 0..truth.len() {
        let r = truth.rotation_matrix(i);
        let s = truth.scale(i);
        for _ in 0..cfg.points_per_gaussian {
            let z = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let jitter = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            cloud.points.push(truth.means[i] + r * s.component_mul(&z) + jitter);
            let c = truth.colors[i] + Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            cloud.colors.push(c.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    for _ in 0..cfg.outlier_points {
        let p = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        cloud.points.push(p);
        cloud.colors.push(Vector3::new(rng.random(), rng.random(), rng.random()));
    }

    let k = Intrinsics::centered(cfg.focal, cfg.size, cfg.size);
    let poses = ring_cameras(cfg.views, cfg.radius, cfg.height_wobble, k);
    let mut images = Vec::with_capacity(poses.len());
    let mut depths = Vec::with_capacity(poses.len());
    for p in &poses {
        let out = render(&truth, p, Vector3::zeros());
        images.push(out.color.to_f32());
        let mut d = Raster::<f32>::new(cfg.size, cfg.size, 1);
        for (i, v) in d.data.iter_mut().enumerate() {
            if out.alpha.data[i] >= 0.5 {
                *v = out.depth.data[i] as f32;
            }
        }
        depths.push(Some(d));
    }
    Ok(ToyScene {
        truth,
        scene: Scene::new(poses, images, depths, cloud)?,
    })
}
