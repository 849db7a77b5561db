//! Fits Gaussians to three views of a toy scene with the sparse-view preset
//! and scores the held-out views.

use sparse360::metrics::psnr;
use sparse360::optim::{fit_sparse_3dgs, SparseConfig};
use sparse360::render::render;
use sparse360::synthetic::{toy_scene, ToySceneConfig};

pub fn run_example(iters: usize) -> sparse360::Result<f64> {
    let toy = toy_scene(&ToySceneConfig::default())?;
    let train = [0, 10, 20];
    let cfg = SparseConfig::sparse().scaled_to(iters);
    let (cloud, report) = fit_sparse_3dgs(&toy.scene.subset(&train), &cfg, 0)?;
    for c in &report.checkpoints {
        println!("iter {:5}  train {:.2} dB  {} gaussians", c.iter, c.train_psnr, c.gaussians);
    }
    let bg = cfg.background();
    let mut scores = Vec::new();
    for (pose, img) in toy.scene.poses.iter().zip(&toy.scene.images) {
        if !train.contains(&pose.id) {
            scores.push(psnr(&render(&cloud, pose, bg).color, &img.to_f64())?);
        }
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("held-out PSNR {mean:.2} dB over {} views", scores.len());
    Ok(mean)
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    let iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    run_example(iters).map(|_| ())
}
