//! Adaptive density control: clone, split, prune and opacity reset.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{logit, sigmoid, GaussianCloud};

/// Thresholds for one densify/prune pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyParams {
    /// Mean screen-space gradient norm above which a Gaussian is densified.
    pub tau_pos: f64,
    /// Gaussians more transparent than this are removed.
    pub prune_opacity: f64,
    /// Clone below this fraction of the scene extent, split above.
    pub percent_dense: f64,
    /// Gaussians wider than this fraction of the extent are removed.
    pub max_world_fraction: f64,
    pub split_factor: f64,
}

impl Default for DensifyParams {
    fn default() -> Self {
        DensifyParams {
            tau_pos: 0.0002,
            prune_opacity: 0.005,
            percent_dense: 0.01,
            max_world_fraction: 0.1,
            split_factor: 1.6,
        }
    }
}

/// Result of [`densify_and_prune`]. `source[j]` is the index in the input
/// cloud that output Gaussian `j` continues, or `None` for a new Gaussian.
#[derive(Debug, Clone)]
pub struct Densified {
    pub cloud: GaussianCloud,
    pub source: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// One pass of adaptive density control. `grad_norms` holds the mean
/// screen-space gradient per Gaussian since the previous pass.
pub fn densify_and_prune<R: Rng>(
    cloud: &GaussianCloud,
    grad_norms: &[f64],
    params: &DensifyParams,
    extent: f64,
    rng: &mut R,
) -> Result<Densified> {
    if grad_norms.len() != cloud.len() {
        return Err(Error::shape(format!(
            "{} gradient norms for {} Gaussians",
            grad_norms.len(),
            cloud.len()
        )));
    }
    let mut out = GaussianCloud::default();
    let mut source = Vec::with_capacity(cloud.len());
    let mut extra = GaussianCloud::default();
    let (mut cloned, mut split) = (0, 0);
    for i in 0..cloud.len() {
        let hot = grad_norms[i] > params.tau_pos;
        let size = cloud.scale(i).max();
        if hot && size > params.percent_dense * extent {
            // replace by two samples drawn from the Gaussian itself
            split += 1;
            let r = cloud.rotation_matrix(i);
            let s = cloud.scale(i);
            for _ in 0..2 {
                let z = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                extra.push_from(cloud, i);
                let j = extra.len() - 1;
                extra.means[j] = cloud.means[i] + r * s.component_mul(&z);
                extra.log_scales[j] = cloud.log_scales[i].map(|l| l - params.split_factor.ln());
            }
            continue;
        }
        out.push_from(cloud, i);
        source.push(Some(i));
        if hot {
            cloned += 1;
            extra.push_from(cloud, i);
        }
    }
    for j in 0..extra.len() {
        out.push_from(&extra, j);
        source.push(None);
    }
    let keep: Vec<bool> = (0..out.len())
        .map(|j| out.opacity(j) >= params.prune_opacity && out.scale(j).max() <= params.max_world_fraction * extent)
        .collect();
    let pruned = keep.iter().filter(|k| !**k).count();
    out.retain_mask(&keep);
    let mut it = keep.iter();
    source.retain(|_| *it.next().unwrap());
    if out.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(Densified {
        cloud: out,
        source,
        cloned,
        split,
        pruned,
    })
}

/// Caps every opacity at `cap`.
pub fn reset_opacity(cloud: &mut GaussianCloud, cap: f64) {
    let cap_logit = logit(cap);
    for l in cloud.opacity_logits.iter_mut() {
        if sigmoid(*l) > cap {
            *l = cap_logit;
        }
    }
}
