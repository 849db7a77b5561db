//! Camera-pose geometry: the SE(3) geodesic metric, view-subset selection,
//! and interpolation/perturbation of poses.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{matrix_to_quaternion, rotation_error, CameraPose};

/// Tolerance on `RᵀR = I` accepted by the distance functions.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    /// Weight of the translation distance relative to the rotation angle.
    pub translation_weight: f64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        GeodesicConfig {
            translation_weight: 0.1,
        }
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = rotation_error(r);
    if err.is_finite() && err <= ROTATION_TOLERANCE {
        Ok(())
    } else {
        Err(Error::InvalidRotation(err))
    }
}

/// Angle of the relative rotation `R1·R2ᵀ`, in `[0, π]`.
pub fn rodrigues_angle(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> Result<f64> {
    check_rotation(r1)?;
    check_rotation(r2)?;
    // atan2 of the skew and symmetric parts: equal to arccos((tr - 1) / 2)
    // but without its loss of precision near 0 and pi
    let r = r1 * r2.transpose();
    let cos = (r.trace() - 1.0) / 2.0;
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    Ok((skew.norm() / 2.0).atan2(cos))
}

/// Rotation angle plus weighted translation distance.
pub fn geodesic_distance(p1: &CameraPose, p2: &CameraPose, cfg: &GeodesicConfig) -> Result<f64> {
    let angle = rodrigues_angle(&p1.rotation, &p2.rotation)?;
    Ok(angle + cfg.translation_weight * (p1.translation - p2.translation).norm())
}

/// Dense `stack.len() x pool.len()` matrix of geodesic distances, row-major.
pub fn distance_matrix(
    stack: &[CameraPose],
    pool: &[CameraPose],
    cfg: &GeodesicConfig,
) -> Result<Vec<Vec<f64>>> {
    for s in stack {
        if pool.iter().any(|p| p.id == s.id) {
            return Err(Error::DuplicateView(s.id));
        }
    }
    stack
        .iter()
        .map(|s| pool.iter().map(|p| geodesic_distance(s, p, cfg)).collect())
        .collect()
}

fn pairwise(poses: &[CameraPose], cfg: &GeodesicConfig) -> Result<Vec<Vec<f64>>> {
    let n = poses.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = geodesic_distance(&poses[i], &poses[j], cfg)?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Index of the view whose camera center is closest to the centroid of all
/// centers (lowest index on ties).
pub fn default_seed_index(poses: &[CameraPose]) -> usize {
    if poses.is_empty() {
        return 0;
    }
    let centers: Vec<_> = poses.iter().map(|p| p.center()).collect();
    let centroid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (c - centroid).norm();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Sort key for candidates: distance, then view id.
fn rank_order(a: (f64, usize), b: (f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn greedy_from_matrix(
    dist: &[Vec<f64>],
    ids: &[usize],
    m: usize,
    rank: usize,
    seed_index: usize,
) -> Result<Vec<usize>> {
    let n = dist.len();
    if m > n || m == 0 || seed_index >= n {
        return Err(Error::RankOutOfRange { rank, pool: n });
    }
    let mut stack = vec![seed_index];
    let mut in_stack = vec![false; n];
    in_stack[seed_index] = true;
    // running minimum distance from each pool view to the stack
    let mut min_d: Vec<f64> = dist[seed_index].clone();
    while stack.len() < m {
        let mut candidates: Vec<(f64, usize, usize)> = (0..n)
            .filter(|&j| !in_stack[j])
            .map(|j| (min_d[j], ids[j], j))
            .collect();
        if rank == 0 || rank > candidates.len() {
            return Err(Error::RankOutOfRange {
                rank,
                pool: candidates.len(),
            });
        }
        candidates.sort_by(|a, b| rank_order((a.0, a.1), (b.0, b.1)));
        let pick = candidates[rank - 1].2;
        stack.push(pick);
        in_stack[pick] = true;
        for j in 0..n {
            min_d[j] = min_d[j].min(dist[pick][j]);
        }
    }
    Ok(stack)
}

/// Greedy stack construction: starting from `seed_index`, repeatedly append the
/// pool view whose distance to the current stack is the `rank`-th smallest.
/// Returns indices into `poses` in insertion order.
pub fn greedy_subset(
    poses: &[CameraPose],
    m: usize,
    rank: usize,
    seed_index: usize,
    cfg: &GeodesicConfig,
) -> Result<Vec<usize>> {
    let dist = pairwise(poses, cfg)?;
    let ids: Vec<usize> = poses.iter().map(|p| p.id).collect();
    greedy_from_matrix(&dist, &ids, m, rank, seed_index)
}

/// Maximum geodesic distance over all pairs in `indices`.
pub fn max_pairwise_distance(
    poses: &[CameraPose],
    indices: &[usize],
    cfg: &GeodesicConfig,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            best = best.max(geodesic_distance(&poses[i], &poses[j], cfg)?);
        }
    }
    Ok(best)
}

/// Outcome of the registration probe for one candidate subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Registration {
    /// Registered, with the size of the reconstructed point cloud.
    Registered(usize),
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n: usize,
    pub indices: Vec<usize>,
    pub max_pairwise: f64,
    pub registration: Registration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub indices: Vec<usize>,
    pub n_star: usize,
    pub max_pairwise: f64,
    pub sweep_log: Vec<SweepEntry>,
}

/// Probe that accepts every subset; stands in for an SfM registration run.
pub fn always_registers(indices: &[usize]) -> Registration {
    Registration::Registered(indices.len())
}

/// Sweeps `n = 1, 2, …` over [`greedy_subset`], stopping at the first subset
/// the probe cannot register (or when `n` runs out of range), and returns
/// the registered subset with the largest maximum pairwise distance. Ties
/// keep the smallest `n`.
pub fn select_view_subset<F>(
    poses: &[CameraPose],
    m: usize,
    seed_index: Option<usize>,
    cfg: &GeodesicConfig,
    mut registration_probe: F,
) -> Result<SubsetResult>
where
    F: FnMut(&[usize]) -> Registration,
{
    let n_views = poses.len();
    if m == 0 || m > n_views {
        return Err(Error::Config(format!("cannot pick {m} of {n_views} views")));
    }
    let seed = seed_index.unwrap_or_else(|| default_seed_index(poses));
    let dist = pairwise(poses, cfg)?;
    let ids: Vec<usize> = poses.iter().map(|p| p.id).collect();
    let max_rank = n_views - m + 1;

    let mut log = Vec::new();
    let mut best: Option<usize> = None;
    for n in 1..=max_rank {
        let indices = greedy_from_matrix(&dist, &ids, m, n, seed)?;
        let mut max_pairwise: f64 = 0.0;
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                max_pairwise = max_pairwise.max(dist[i][j]);
            }
        }
        let registration = registration_probe(&indices);
        log.push(SweepEntry {
            n,
            indices,
            max_pairwise,
            registration,
        });
        if registration == Registration::Failed {
            break;
        }
        let cur = log.len() - 1;
        if best.is_none_or(|b| max_pairwise > log[b].max_pairwise) {
            best = Some(cur);
        }
    }
    let best = best.ok_or(Error::NoRegistrableSubset)?;
    Ok(SubsetResult {
        indices: log[best].indices.clone(),
        n_star: log[best].n,
        max_pairwise: log[best].max_pairwise,
        sweep_log: log,
    })
}

/// Constant-speed spherical interpolation along the shorter arc.
pub fn slerp(
    q1: &UnitQuaternion<f64>,
    q2: &UnitQuaternion<f64>,
    u: f64,
) -> Result<UnitQuaternion<f64>> {
    let a = q1.into_inner();
    let mut b = q2.into_inner();
    if a.norm() == 0.0 || b.norm() == 0.0 || !a.norm().is_finite() || !b.norm().is_finite() {
        return Err(Error::InvalidQuaternion);
    }
    let a = a.normalize();
    b = b.normalize();
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let dot = dot.min(1.0);
    let theta = dot.acos();
    let out = if theta < 1e-12 {
        a.lerp(&b, u)
    } else {
        let s = theta.sin();
        a * (((1.0 - u) * theta).sin() / s) + b * ((u * theta).sin() / s)
    };
    Ok(UnitQuaternion::new_normalize(out))
}

/// Interpolates translations: linear for two control points, uniform
/// Catmull-Rom through all points otherwise. Endpoints are reproduced.
pub fn spline_translation(control: &[Vector3<f64>], u: f64) -> Result<Vector3<f64>> {
    let n = control.len();
    if n < 2 {
        return Err(Error::InsufficientControlPoints(n));
    }
    let u = u.clamp(0.0, 1.0);
    if n == 2 {
        return Ok(control[0] * (1.0 - u) + control[1] * u);
    }
    let segments = (n - 1) as f64;
    let s = u * segments;
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    let p1 = control[i];
    let p2 = control[i + 1];
    // mirrored phantom points at the ends
    let p0 = if i == 0 { p1 * 2.0 - p2 } else { control[i - 1] };
    let p3 = if i + 2 < n { control[i + 2] } else { p2 * 2.0 - p1 };
    let t2 = t * t;
    let t3 = t2 * t;
    Ok((p1 * 2.0
        + (p2 - p0) * t
        + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
        + (-p0 + p1 * 3.0 - p2 * 3.0 + p3) * t3)
        * 0.5)
}

/// Pose between `p1` and `p2`: slerped rotation, spline-interpolated
/// translation, shared intrinsics.
pub fn interpolate_pseudo_view(
    p1: &CameraPose,
    p2: &CameraPose,
    u: f64,
    new_id: usize,
) -> Result<CameraPose> {
    if p1.intrinsics != p2.intrinsics {
        return Err(Error::IntrinsicsMismatch);
    }
    let q = slerp(&p1.quaternion(), &p2.quaternion(), u)?;
    let t = spline_translation(&[p1.translation, p2.translation], u)?;
    let mut pose = CameraPose::new(new_id, p1.intrinsics, q.to_rotation_matrix().into_inner(), t);
    pose.name = format!("pseudo_{new_id:05}.png");
    Ok(pose)
}

/// Random rigid perturbation: an axis-angle rotation whose angle is drawn
/// from `N(0, rot_sigma²)` truncated at 3σ (uniform axis), composed on the
/// camera side, plus isotropic Gaussian translation noise.
pub fn perturb_camera(p: &CameraPose, rot_sigma: f64, trans_sigma: f64, seed: u64) -> CameraPose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_camera_with(p, rot_sigma, trans_sigma, &mut rng)
}

pub fn perturb_camera_with<R: Rng>(
    p: &CameraPose,
    rot_sigma: f64,
    trans_sigma: f64,
    rng: &mut R,
) -> CameraPose {
    let mut out = p.clone();
    if rot_sigma > 0.0 {
        let angle = loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 3.0 {
                break z * rot_sigma;
            }
        };
        let axis = loop {
            let v = Vector3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            let n: f64 = v.norm();
            if n > 1e-9 {
                break v / n;
            }
        };
        let delta = UnitQuaternion::from_scaled_axis(axis * angle);
        let r = delta.to_rotation_matrix().into_inner() * p.rotation;
        // re-orthonormalize through the quaternion to drop round-off
        out.rotation = matrix_to_quaternion(&r).to_rotation_matrix().into_inner();
    }
    if trans_sigma > 0.0 {
        let noise = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
        out.translation += noise * trans_sigma;
    }
    out
}
