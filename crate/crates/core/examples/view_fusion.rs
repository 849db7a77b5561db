//! The full loop: a sparse fit, then novel views along the camera orbit are
//! rendered, repaired by an enhancer and fused back in a few at a time.
//! `MaskFillStub` stands in for the diffusion service.

use sparse360::enhance::MaskFillStub;
use sparse360::fusion::{orbit_pool, run_sp2360, LoopConfig};
use sparse360::optim::{fit_sparse_3dgs, SparseConfig};
use sparse360::synthetic::{toy_scene, ToySceneConfig};

pub fn run_example(sparse_iters: usize, fuse_iters: usize) -> sparse360::Result<Vec<usize>> {
    let toy = toy_scene(&ToySceneConfig { views: 12, size: 48, focal: 60.0, ..Default::default() })?;
    let scene = toy.scene.subset(&[0, 4, 8]);
    let (cloud, _) = fit_sparse_3dgs(&scene, &SparseConfig::sparse().scaled_to(sparse_iters), 0)?;
    let pool = orbit_pool(&scene.poses, 2)?;
    let cfg = LoopConfig::default().scaled_to(fuse_iters);
    let (cloud, report) = run_sp2360(&scene, cloud, &pool, &cfg, &MaskFillStub, 0)?;
    for s in &report.steps {
        println!("step {:2}: +{:?} for {:4} iters, stack {:2}, pool mask {:.3}", s.step, s.added, s.iterations, s.stack_size, s.pool_mask_area);
    }
    println!("{} gaussians after fusion", cloud.len());
    Ok(report.steps.iter().map(|s| s.stack_size).collect())
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse().ok());
    let sparse = args.next().flatten().unwrap_or(500);
    let fuse = args.next().flatten().unwrap_or(1000);
    run_example(sparse, fuse).map(|_| ())
}
