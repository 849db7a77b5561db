//! Artifact-pair dataset engine and random rectangle masks.
//!
//! A dense fit renders the clean target, each sparse fit renders the
//! artifact-laden input, and both see the same source, interpolated and
//! perturbed cameras.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::raster::{save_raster, Raster};
use crate::render::render;
use crate::scene::CameraPose;
use crate::se3::{interpolate_pseudo_view, perturb_camera_with};

/// Reads an instruction pool: one instruction per line, first line is the
/// base instruction. Blank lines are skipped.
pub fn parse_instruction_pool(text: &str) -> Result<Vec<String>> {
    let pool: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyInstructionPool);
    }
    Ok(pool)
}

pub fn load_instruction_pool(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instruction_pool(&text)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ArtifactConfig {
    /// Extra cameras generated per source camera.
    pub interp_count: usize,
    /// Rotation perturbation sigma in radians.
    pub rot_sigma: f64,
    /// Translation perturbation sigma in world units.
    pub trans_sigma: f64,
    pub background: [f64; 3],
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig { interp_count: 2, rot_sigma: 0.02, trans_sigma: 0.05, background: [0.0; 3] }
    }
}

/// One manifest line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Triplet {
    pub clean: String,
    pub artifact: String,
    pub instruction: String,
    #[serde(rename = "M")]
    pub m: usize,
    /// Id of the source camera this sample derives from.
    pub camera: usize,
    /// 0 for the source camera itself, 1..=interp_count for derived ones.
    pub sample: usize,
}

/// Cameras for one source: the source itself, then `interp_count` poses
/// slerped toward the next source camera (cyclically) and perturbed.
fn derived_cameras<R: Rng>(
    cameras: &[CameraPose],
    c: usize,
    cfg: &ArtifactConfig,
    rng: &mut R,
) -> Result<Vec<CameraPose>> {
    let src = &cameras[c];
    let next = &cameras[(c + 1) % cameras.len()];
    let mut out = vec![src.clone()];
    for j in 1..=cfg.interp_count {
        let u = j as f64 / (cfg.interp_count + 1) as f64;
        let base = if next.id == src.id || next.intrinsics != src.intrinsics {
            src.clone()
        } else {
            interpolate_pseudo_view(src, next, u, src.id)?
        };
        out.push(perturb_camera_with(&base, cfg.rot_sigma, cfg.trans_sigma, rng));
    }
    Ok(out)
}

/// Builds the (clean, artifact, instruction) manifest. With `out_dir` set,
/// images are rendered and written under `clean/` and `artifact_M<m>/`;
/// otherwise only the manifest is produced.
pub fn generate_artifact_pairs(
    dense: &GaussianCloud,
    sparse: &[(usize, GaussianCloud)],
    cameras: &[CameraPose],
    cfg: &ArtifactConfig,
    instructions: &[String],
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<Vec<Triplet>> {
    if instructions.is_empty() {
        return Err(Error::EmptyInstructionPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = Vector3::from(cfg.background);
    if let Some(dir) = out_dir {
        create_dir(&dir.join("clean"))?;
        for (m, _) in sparse {
            create_dir(&dir.join(format!("artifact_M{m}")))?;
        }
    }
    let mut manifest = Vec::with_capacity(cameras.len() * (1 + cfg.interp_count) * sparse.len());
    for c in 0..cameras.len() {
        for (sample, cam) in derived_cameras(cameras, c, cfg, &mut rng)?.iter().enumerate() {
            let stem = format!("{:05}_{sample:02}.png", cameras[c].id);
            let clean = PathBuf::from("clean").join(&stem);
            if let Some(dir) = out_dir {
                save_raster(dir.join(&clean), &render(dense, cam, bg).color.to_f32())?;
            }
            for (m, cloud) in sparse {
                let artifact = PathBuf::from(format!("artifact_M{m}")).join(&stem);
                if let Some(dir) = out_dir {
                    save_raster(dir.join(&artifact), &render(cloud, cam, bg).color.to_f32())?;
                }
                let k = rng.random_range(0..instructions.len());
                manifest.push(Triplet {
                    clean: clean.to_string_lossy().into_owned(),
                    artifact: artifact.to_string_lossy().into_owned(),
                    instruction: instructions[k].clone(),
                    m: *m,
                    camera: cameras[c].id,
                    sample,
                });
            }
        }
    }
    Ok(manifest)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &[Triplet]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for t in manifest {
        let line = serde_json::to_string(t).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::ParseError {
                file: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Union,
    Complement,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(MaskMode::Union),
            "complement" => Ok(MaskMode::Complement),
            _ => Err(Error::Config(format!("unknown mask mode {s:?}"))),
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

pub const MIN_RECT_FRACTION: f64 = 0.05;
pub const MAX_RECT_FRACTION: f64 = 0.40;

/// Rectangle with uniformly random corners, resampled until it covers
/// 5-40% of the image. Images too small to admit such a rectangle get the
/// closest-fitting candidate seen.
pub fn sample_rect<R: Rng>(width: usize, height: usize, rng: &mut R) -> Rect {
    let total = (width * height) as f64;
    let mut best: Option<(f64, Rect)> = None;
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(0..=width), rng.random_range(0..=width));
        let (c, d) = (rng.random_range(0..=height), rng.random_range(0..=height));
        let r = Rect { x0: a.min(b), x1: a.max(b), y0: c.min(d), y1: c.max(d) };
        let f = r.area() as f64 / total;
        if (MIN_RECT_FRACTION..=MAX_RECT_FRACTION).contains(&f) {
            return r;
        }
        let miss = if f < MIN_RECT_FRACTION { MIN_RECT_FRACTION - f } else { f - MAX_RECT_FRACTION };
        if best.is_none_or(|(m, _)| miss < m) {
            best = Some((miss, r));
        }
    }
    best.map(|(_, r)| r).unwrap_or(Rect { x0: 0, y0: 0, x1: width, y1: height })
}

/// Rasterizes rectangles: 1 inside any of them for `Union`, the inverse
/// for `Complement`.
pub fn rects_to_mask(width: usize, height: usize, rects: &[Rect], mode: MaskMode) -> Raster<f32> {
    let (inside, outside) = match mode {
        MaskMode::Union => (1.0, 0.0),
        MaskMode::Complement => (0.0, 1.0),
    };
    let mut mask = Raster::filled(width, height, 1, outside);
    for r in rects {
        for y in r.y0..r.y1.min(height) {
            for x in r.x0..r.x1.min(width) {
                mask.set(x, y, 0, inside);
            }
        }
    }
    mask
}

/// `count` random rectangles drawn from one seeded stream, so a larger
/// count with the same seed extends the same rectangle sequence.
pub fn random_rect_masks(
    width: usize,
    height: usize,
    count: usize,
    mode: MaskMode,
    seed: u64,
) -> Result<Raster<f32>> {
    if count == 0 {
        return Err(Error::Config("rectangle count must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::ShapeError(format!("empty mask {width}x{height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rects: Vec<Rect> = (0..count).map(|_| sample_rect(width, height, &mut rng)).collect();
    Ok(rects_to_mask(width, height, &rects, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Splat;
    use nalgebra::UnitQuaternion;
    use crate::scene::Intrinsics;
    use crate::synthetic::ring_cameras;

    fn cloud(color: [f64; 3]) -> GaussianCloud {
        GaussianCloud::from_splats([Splat {
            mean: Vector3::zeros(),
            scale: Vector3::repeat(0.4),
            opacity: 0.9,
            rotation: UnitQuaternion::identity(),
            color: Vector3::from(color),
        }])
    }

    fn pool() -> Vec<String> {
        vec!["base".into(), "remove floaters".into(), "sharpen".into()]
    }

    #[test]
    fn pool_parsing() {
        assert_eq!(parse_instruction_pool("a\n\n b \n").unwrap(), vec!["a", "b"]);
        assert!(matches!(parse_instruction_pool(" \n"), Err(Error::EmptyInstructionPool)));
    }

    #[test]
    fn single_camera_single_m_gives_one_triplet() {
        let cams = ring_cameras(1, 4.0, 0.0, Intrinsics::centered(20.0, 16, 16));
        let cfg = ArtifactConfig { interp_count: 0, ..Default::default() };
        let m = generate_artifact_pairs(&cloud([1.0; 3]), &[(3, cloud([0.5; 3]))], &cams, &cfg, &pool(), 0, None)
            .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].m, m[0].camera, m[0].sample), (3, 0, 0));
    }

    #[test]
    fn cardinality_and_determinism() {
        let cams = ring_cameras(5, 4.0, 0.2, Intrinsics::centered(20.0, 16, 16));
        let sparse: Vec<_> = [3, 6, 9, 18].iter().map(|&m| (m, cloud([0.2; 3]))).collect();
        let cfg = ArtifactConfig { interp_count: 3, ..Default::default() };
        let a = generate_artifact_pairs(&cloud([1.0; 3]), &sparse, &cams, &cfg, &pool(), 7, None).unwrap();
        let b = generate_artifact_pairs(&cloud([1.0; 3]), &sparse, &cams, &cfg, &pool(), 7, None).unwrap();
        assert_eq!(a.len(), 5 * 4 * 4);
        assert_eq!(a, b);
        let c = generate_artifact_pairs(&cloud([1.0; 3]), &sparse, &cams, &cfg, &pool(), 8, None).unwrap();
        assert_ne!(
            a.iter().map(|t| &t.instruction).collect::<Vec<_>>(),
            c.iter().map(|t| &t.instruction).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_pool_is_rejected() {
        let cams = ring_cameras(2, 4.0, 0.0, Intrinsics::centered(20.0, 16, 16));
        let r = generate_artifact_pairs(&cloud([1.0; 3]), &[], &cams, &Default::default(), &[], 0, None);
        assert!(matches!(r, Err(Error::EmptyInstructionPool)));
    }

    #[test]
    fn writes_images_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ring_cameras(2, 4.0, 0.0, Intrinsics::centered(20.0, 16, 16));
        let cfg = ArtifactConfig { interp_count: 1, ..Default::default() };
        let m = generate_artifact_pairs(&cloud([1.0; 3]), &[(3, cloud([0.3; 3]))], &cams, &cfg, &pool(), 1, Some(dir.path()))
            .unwrap();
        for t in &m {
            assert!(dir.path().join(&t.clean).exists());
            assert!(dir.path().join(&t.artifact).exists());
        }
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&path, &m).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn rectangles_respect_coverage_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = sample_rect(40, 30, &mut rng);
            let f = r.area() as f64 / 1200.0;
            assert!((MIN_RECT_FRACTION..=MAX_RECT_FRACTION).contains(&f), "{f}");
        }
    }

    #[test]
    fn complement_is_pixelwise_inverse() {
        for seed in 0..10 {
            let u = random_rect_masks(32, 24, 3, MaskMode::Union, seed).unwrap();
            let c = random_rect_masks(32, 24, 3, MaskMode::Complement, seed).unwrap();
            assert!(u.data.iter().zip(&c.data).all(|(a, b)| a + b == 1.0));
        }
    }

    #[test]
    fn full_rectangle_union_is_all_ones() {
        let m = rects_to_mask(8, 6, &[Rect { x0: 0, y0: 0, x1: 8, y1: 6 }], MaskMode::Union);
        assert!(m.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn union_grows_with_count() {
        for seed in 0..10 {
            let mut prev = random_rect_masks(32, 32, 1, MaskMode::Union, seed).unwrap();
            for count in 2..6 {
                let next = random_rect_masks(32, 32, count, MaskMode::Union, seed).unwrap();
                assert!(prev.data.iter().zip(&next.data).all(|(a, b)| a <= b));
                prev = next;
            }
        }
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(random_rect_masks(8, 8, 0, MaskMode::Union, 0).is_err());
    }
}
