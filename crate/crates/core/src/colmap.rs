//! Reader and writer for COLMAP's text model format.
//!
//! A model directory holds three files:
//!
//! * `cameras.txt`: `CAMERA_ID MODEL WIDTH HEIGHT PARAMS...`
//! * `images.txt`: two lines per image, `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME`
//!   followed by the (possibly empty) `X Y POINT3D_ID` observation list
//! * `points3D.txt`: `POINT3D_ID X Y Z R G B ERROR TRACK...` where the track is
//!   a list of `IMAGE_ID POINT2D_IDX` pairs
//!
//! Only `PINHOLE` and `SIMPLE_PINHOLE` cameras are accepted.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::raster::load_raster;
use crate::scene::{quaternion_to_matrix, CameraPose, Intrinsics, Scene, SparsePointCloud};

pub const CAMERAS_FILE: &str = "cameras.txt";
pub const IMAGES_FILE: &str = "images.txt";
pub const POINTS_FILE: &str = "points3D.txt";

/// The parsed content of a COLMAP text model, without image rasters.
#[derive(Debug, Clone)]
pub struct ColmapModel {
    pub poses: Vec<CameraPose>,
    pub point_cloud: SparsePointCloud,
}

fn read_model_file(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingModelFile(path));
    }
    fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::ParseError {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_fields<T: std::str::FromStr>(
    fields: &[&str],
    file: &str,
    line: usize,
) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<T>()
                .map_err(|_| parse_err(file, line, format!("cannot parse `{f}`")))
        })
        .collect()
}

fn parse_cameras(text: &str) -> Result<BTreeMap<u64, Intrinsics>> {
    let mut cameras = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(parse_err(CAMERAS_FILE, line_no, "expected at least 4 fields"));
        }
        let id: u64 = parse_fields(&fields[..1], CAMERAS_FILE, line_no)?[0];
        let dims: Vec<usize> = parse_fields(&fields[2..4], CAMERAS_FILE, line_no)?;
        let params: Vec<f64> = parse_fields(&fields[4..], CAMERAS_FILE, line_no)?;
        let (fx, fy, cx, cy) = match (fields[1], params.as_slice()) {
            ("PINHOLE", [fx, fy, cx, cy]) => (*fx, *fy, *cx, *cy),
            ("SIMPLE_PINHOLE", [f, cx, cy]) => (*f, *f, *cx, *cy),
            ("PINHOLE" | "SIMPLE_PINHOLE", _) => {
                return Err(parse_err(CAMERAS_FILE, line_no, "wrong parameter count"))
            }
            (model, _) => return Err(Error::UnsupportedCameraModel(model.to_string())),
        };
        let k = Intrinsics::new(fx, fy, cx, cy, dims[0], dims[1])
            .map_err(|e| parse_err(CAMERAS_FILE, line_no, e.to_string()))?;
        cameras.insert(id, k);
    }
    Ok(cameras)
}

fn parse_images(text: &str, cameras: &BTreeMap<u64, Intrinsics>) -> Result<(Vec<CameraPose>, Vec<u64>)> {
    let mut poses = Vec::new();
    let mut ids = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((i, raw)) = lines.next() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 10 {
            return Err(parse_err(IMAGES_FILE, line_no, "expected 10 fields"));
        }
        let image_id: u64 = parse_fields(&fields[..1], IMAGES_FILE, line_no)?[0];
        let v: Vec<f64> = parse_fields(&fields[1..8], IMAGES_FILE, line_no)?;
        let camera_id: u64 = parse_fields(&fields[8..9], IMAGES_FILE, line_no)?[0];
        let name = fields[9..].join(" ");
        let intrinsics = *cameras.get(&camera_id).ok_or_else(|| {
            Error::InconsistentModel(format!("image {image_id} references unknown camera {camera_id}"))
        })?;
        let qnorm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
        if !(qnorm > 0.0 && qnorm.is_finite()) {
            return Err(parse_err(IMAGES_FILE, line_no, "degenerate quaternion"));
        }
        // observation line; may be blank or absent at end of file
        if let Some((j, obs)) = lines.next() {
            let obs_fields: Vec<&str> = obs.split_whitespace().collect();
            if obs_fields.len() % 3 != 0 {
                return Err(parse_err(IMAGES_FILE, j + 1, "observations must be X Y POINT3D_ID triples"));
            }
            parse_fields::<f64>(&obs_fields, IMAGES_FILE, j + 1)?;
        }
        poses.push(CameraPose {
            id: poses.len(),
            name,
            intrinsics,
            rotation: quaternion_to_matrix(v[0], v[1], v[2], v[3]),
            translation: Vector3::new(v[4], v[5], v[6]),
        });
        ids.push(image_id);
    }
    Ok((poses, ids))
}

fn parse_points(text: &str, image_ids: &HashSet<u64>) -> Result<SparsePointCloud> {
    let mut cloud = SparsePointCloud::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 || (fields.len() - 8) % 2 != 0 {
            return Err(parse_err(POINTS_FILE, line_no, "expected 8 fields plus track pairs"));
        }
        let xyz: Vec<f64> = parse_fields(&fields[1..4], POINTS_FILE, line_no)?;
        let rgb: Vec<u8> = parse_fields(&fields[4..7], POINTS_FILE, line_no)?;
        parse_fields::<f64>(&fields[7..8], POINTS_FILE, line_no)?;
        let track: Vec<i64> = parse_fields(&fields[8..], POINTS_FILE, line_no)?;
        for pair in track.chunks_exact(2) {
            if pair[0] < 0 || !image_ids.contains(&(pair[0] as u64)) {
                return Err(Error::InconsistentModel(format!(
                    "point on line {line_no} is observed by unregistered image {}",
                    pair[0]
                )));
            }
        }
        if xyz.iter().any(|c| !c.is_finite()) {
            return Err(parse_err(POINTS_FILE, line_no, "non-finite coordinate"));
        }
        cloud.points.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
        cloud.colors.push(Vector3::new(
            rgb[0] as f64 / 255.0,
            rgb[1] as f64 / 255.0,
            rgb[2] as f64 / 255.0,
        ));
    }
    Ok(cloud)
}

/// Parses the three text files of a COLMAP model directory.
pub fn read_colmap_model(model_dir: impl AsRef<Path>) -> Result<ColmapModel> {
    let dir = model_dir.as_ref();
    let cameras_txt = read_model_file(dir, CAMERAS_FILE)?;
    let images_txt = read_model_file(dir, IMAGES_FILE)?;
    let points_txt = read_model_file(dir, POINTS_FILE)?;

    let cameras = parse_cameras(&cameras_txt)?;
    let (poses, image_ids) = parse_images(&images_txt, &cameras)?;
    let id_set: HashSet<u64> = image_ids.iter().copied().collect();
    if id_set.len() != image_ids.len() {
        return Err(Error::InconsistentModel("duplicate IMAGE_ID".into()));
    }
    let point_cloud = parse_points(&points_txt, &id_set)?;
    Ok(ColmapModel { poses, point_cloud })
}

/// Loads a COLMAP model and the images it names. Depth priors are picked up
/// from `<images_dir>/<stem>.depth.fras` when present.
pub fn load_colmap_scene(model_dir: impl AsRef<Path>, images_dir: impl AsRef<Path>) -> Result<Scene> {
    let model = read_colmap_model(model_dir)?;
    let images_dir = images_dir.as_ref();
    let mut images = Vec::with_capacity(model.poses.len());
    let mut depths = Vec::with_capacity(model.poses.len());
    for pose in &model.poses {
        let path = images_dir.join(&pose.name);
        let img = load_raster(&path)?;
        if img.channels != 3 {
            return Err(Error::FormatError(format!("{} is not RGB", path.display())));
        }
        images.push(img);
        let depth_path = images_dir.join(depth_file_name(&pose.name));
        depths.push(if depth_path.is_file() {
            Some(load_raster(&depth_path)?)
        } else {
            None
        });
    }
    Scene::new(model.poses, images, depths, model.point_cloud)
}

pub fn depth_file_name(image_name: &str) -> String {
    let stem = Path::new(image_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(image_name);
    format!("{stem}.depth.fras")
}

/// Writes poses and points as a COLMAP text model. Every pose gets its own
/// `PINHOLE` camera; image ids are `pose index + 1`.
pub fn write_colmap_model(
    model_dir: impl AsRef<Path>,
    poses: &[CameraPose],
    cloud: &SparsePointCloud,
) -> Result<()> {
    let dir = model_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut cams = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let mut imgs = String::from("# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    for (i, p) in poses.iter().enumerate() {
        let k = &p.intrinsics;
        writeln!(
            cams,
            "{} PINHOLE {} {} {:?} {:?} {:?} {:?}",
            i + 1,
            k.width,
            k.height,
            k.fx,
            k.fy,
            k.cx,
            k.cy
        )
        .unwrap();
        let q = p.quaternion();
        let t = p.translation;
        writeln!(
            imgs,
            "{} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {} {}\n",
            i + 1,
            q.w,
            q.i,
            q.j,
            q.k,
            t.x,
            t.y,
            t.z,
            i + 1,
            p.name
        )
        .unwrap();
    }
    let mut pts = String::from("# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    for (i, (x, c)) in cloud.points.iter().zip(&cloud.colors).enumerate() {
        let rgb = c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        writeln!(
            pts,
            "{} {:?} {:?} {:?} {} {} {} 0",
            i + 1,
            x.x,
            x.y,
            x.z,
            rgb.x,
            rgb.y,
            rgb.z
        )
        .unwrap();
    }
    for (name, body) in [(CAMERAS_FILE, cams), (IMAGES_FILE, imgs), (POINTS_FILE, pts)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes a scene's images (PNG) and depth priors (FRAS) next to each other.
pub fn write_scene_images(images_dir: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    let dir = images_dir.as_ref();
    for ((pose, img), depth) in scene.poses.iter().zip(&scene.images).zip(&scene.depths) {
        crate::raster::save_raster(dir.join(&pose.name), img)?;
        if let Some(d) = depth {
            crate::raster::save_raster(dir.join(depth_file_name(&pose.name)), d)?;
        }
    }
    Ok(())
}

/// Scene directory layout used by the command line: `<dir>/sparse/` holds
/// the text model, `<dir>/images/` the images and depth priors.
pub fn load_scene_dir(dir: impl AsRef<Path>) -> Result<Scene> {
    let dir = dir.as_ref();
    load_colmap_scene(dir.join("sparse"), dir.join("images"))
}

pub fn save_scene_dir(dir: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    let dir = dir.as_ref();
    write_colmap_model(dir.join("sparse"), &scene.poses, &scene.point_cloud)?;
    write_scene_images(dir.join("images"), scene)
}
