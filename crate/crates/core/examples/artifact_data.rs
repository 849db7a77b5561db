//! Builds the (clean, artifact, instruction) manifest used to fine-tune the
//! enhancer, plus random rectangle masks for in-painting training.

use sparse360::artifacts::{generate_artifact_pairs, parse_instruction_pool, random_rect_masks, ArtifactConfig, MaskMode};
use sparse360::optim::{fit_sparse_3dgs, SparseConfig};
use sparse360::render::masked_fraction;
use sparse360::synthetic::{toy_scene, ToySceneConfig};

const INSTRUCTIONS: &str = "remove the floaters\nclean up the artifacts\n\nmake the photo sharp\n";

pub fn run_example(iters: usize) -> sparse360::Result<usize> {
    let toy = toy_scene(&ToySceneConfig { views: 8, size: 32, focal: 40.0, ..Default::default() })?;
    let sparse = fit_sparse_3dgs(&toy.scene.subset(&[0, 4]), &SparseConfig::sparse().scaled_to(iters), 0)?.0;
    let pool = parse_instruction_pool(INSTRUCTIONS)?;
    let manifest =
        generate_artifact_pairs(&toy.truth, &[(2, sparse)], &toy.scene.poses, &ArtifactConfig::default(), &pool, 0, None)?;
    for t in manifest.iter().take(4) {
        println!("{} <- {} : {:?}", t.clean, t.artifact, t.instruction);
    }
    println!("{} triplets", manifest.len());

    for mode in [MaskMode::Union, MaskMode::Complement] {
        let mask = random_rect_masks(64, 64, 3, mode, 7)?;
        println!("{mode:?}: {:.1}% masked", 100.0 * masked_fraction(&mask));
    }
    Ok(manifest.len())
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    run_example(300).map(|_| ())
}
