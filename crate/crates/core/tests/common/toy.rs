//! Shared toy-scene helpers for the training-level tests.

use nalgebra::Vector3;
use sparse360::gaussian::GaussianCloud;
use sparse360::metrics::psnr;
use sparse360::render::render;
use sparse360::scene::Scene;

/// `m` evenly spaced training views out of `n`, and the rest.
pub fn ring_split(n: usize, m: usize) -> (Vec<usize>, Vec<usize>) {
    let train: Vec<usize> = (0..m).map(|k| k * n / m).collect();
    let test = (0..n).filter(|i| !train.contains(i)).collect();
    (train, test)
}

/// Mean PSNR over the listed views, black background.
pub fn heldout_psnr(cloud: &GaussianCloud, scene: &Scene, ids: &[usize]) -> f64 {
    let total: f64 = ids
        .iter()
        .map(|&i| {
            let out = render(cloud, &scene.poses[i], Vector3::zeros());
            psnr(&out.color, &scene.images[i].to_f64()).unwrap()
        })
        .sum();
    total / ids.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
