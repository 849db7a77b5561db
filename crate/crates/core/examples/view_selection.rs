//! Picks a maximally spread subset of a camera ring by geodesic distance.

use sparse360::scene::Intrinsics;
use sparse360::se3::{always_registers, select_view_subset, GeodesicConfig};
use sparse360::synthetic::ring_cameras;

pub fn run_example() -> sparse360::Result<Vec<usize>> {
    let poses = ring_cameras(24, 4.0, 0.6, Intrinsics::centered(80.0, 64, 64));
    let picked = select_view_subset(&poses, 4, None, &GeodesicConfig::default(), always_registers)?;
    for e in &picked.sweep_log {
        println!("rank {:2}: {:?} spread {:.3}", e.n, e.indices, e.max_pairwise);
    }
    println!("chose rank {} -> {:?}", picked.n_star, picked.indices);
    Ok(picked.indices)
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    run_example().map(|_| ())
}
