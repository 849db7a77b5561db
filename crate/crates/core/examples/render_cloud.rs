//! Renders a toy cloud, then derives the opacity mask used to decide which
//! pixels need in-painting.

use nalgebra::Vector3;
use sparse360::raster::save_raster;
use sparse360::render::{masked_fraction, opacity_mask, render};
use sparse360::synthetic::{toy_scene, ToySceneConfig};

pub fn run_example() -> sparse360::Result<f64> {
    let toy = toy_scene(&ToySceneConfig { views: 4, ..Default::default() })?;
    let out = render(&toy.truth, &toy.scene.poses[0], Vector3::zeros());
    let mask = opacity_mask(&out.alpha, 0.8)?;
    let frac = masked_fraction(&mask);
    println!("{}x{} render, {:.1}% of pixels below alpha 0.8", out.width(), out.height(), 100.0 * frac);

    if let Some(path) = std::env::args().nth(1) {
        save_raster(&path, &out.color.to_f32())?;
        println!("wrote {path}");
    }
    Ok(frac)
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    run_example().map(|_| ())
}
