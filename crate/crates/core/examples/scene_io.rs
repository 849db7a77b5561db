//! Writes a synthetic scene as a COLMAP text model plus PNG images, reads it
//! back and checks that the poses survive the round trip.

use sparse360::colmap::{load_scene_dir, save_scene_dir};
use sparse360::synthetic::{toy_scene, ToySceneConfig};

pub fn run_example() -> sparse360::Result<f64> {
    let toy = toy_scene(&ToySceneConfig { views: 6, size: 32, ..Default::default() })?;
    let dir = std::env::temp_dir().join(format!("sparse360-scene-io-{}", std::process::id()));
    save_scene_dir(&dir, &toy.scene)?;
    let back = load_scene_dir(&dir)?;
    let _ = std::fs::remove_dir_all(&dir);

    let mut worst: f64 = 0.0;
    for (a, b) in toy.scene.poses.iter().zip(&back.poses) {
        worst = worst.max((a.rotation - b.rotation).abs().max()).max((a.translation - b.translation).abs().max());
    }
    println!("{} views, {} SfM points, worst pose deviation {worst:.2e}", back.len(), back.point_cloud.len());
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    run_example().map(|_| ())
}
