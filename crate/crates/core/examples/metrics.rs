//! PSNR and SSIM of a render against a slightly perturbed copy.

use sparse360::enhance::box_blur;
use sparse360::metrics::evaluate;
use sparse360::synthetic::{toy_scene, ToySceneConfig};

pub fn run_example() -> sparse360::Result<(f64, f64)> {
    let toy = toy_scene(&ToySceneConfig { views: 3, ..Default::default() })?;
    let refs: Vec<_> = toy.scene.images.iter().map(|i| i.to_f64()).collect();
    let blurred: Vec<_> = refs.iter().map(|i| box_blur(i, 1)).collect();
    let report = evaluate(
        toy.scene.poses.iter().zip(blurred.iter().zip(&refs)).map(|(p, (b, r))| (p.name.clone(), b, r)),
    )?;
    for v in &report.views {
        println!("{}: {:.2} dB, SSIM {:.4}", v.view, v.psnr, v.ssim);
    }
    println!("mean {:.2} dB / {:.4}", report.mean_psnr, report.mean_ssim);
    Ok((report.mean_psnr, report.mean_ssim))
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    run_example().map(|_| ())
}
