//! Cameras, sparse point clouds and posed image collections.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use image::imageops::FilterType;

use crate::raster::{resize, resize_nearest, Raster};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Centered principal point with the same focal length on both axes.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Intrinsics {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Rescales to a new image size, keeping the field of view.
    pub fn scaled_to(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

/// World-to-camera pose of one view plus its intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub id: usize,
    pub name: String,
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(
        id: usize,
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Self {
        CameraPose {
            id,
            name: format!("view_{id:04}.png"),
            intrinsics,
            rotation,
            translation,
        }
    }

    /// Camera looking from `eye` at `target`, OpenCV convention (x right,
    /// y down, z forward).
    pub fn look_at(
        id: usize,
        intrinsics: Intrinsics,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -rotation * eye;
        CameraPose::new(id, intrinsics, rotation, translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        matrix_to_quaternion(&self.rotation)
    }

    /// Largest deviation from `RᵀR = I` and `det R = 1`.
    pub fn orthonormality_error(&self) -> f64 {
        rotation_error(&self.rotation)
    }
}

pub fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
    gram.max((r.determinant() - 1.0).abs())
}

/// Converts a (not necessarily normalized) `w, x, y, z` quaternion.
pub fn quaternion_to_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
        .to_rotation_matrix()
        .into_inner()
}

pub fn matrix_to_quaternion(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparsePointCloud {
    pub points: Vec<Vector3<f64>>,
    /// RGB in `[0, 1]`.
    pub colors: Vec<Vector3<f64>>,
}

impl SparsePointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Posed views with their images, optional depth priors and the SfM cloud.
#[derive(Debug, Clone)]
pub struct Scene {
    pub poses: Vec<CameraPose>,
    pub images: Vec<Raster<f32>>,
    pub depths: Vec<Option<Raster<f32>>>,
    pub point_cloud: SparsePointCloud,
}

impl Scene {
    pub fn new(
        poses: Vec<CameraPose>,
        images: Vec<Raster<f32>>,
        depths: Vec<Option<Raster<f32>>>,
        point_cloud: SparsePointCloud,
    ) -> Result<Self> {
        if poses.len() != images.len() || poses.len() != depths.len() {
            return Err(Error::InconsistentModel(format!(
                "{} poses, {} images, {} depth slots",
                poses.len(),
                images.len(),
                depths.len()
            )));
        }
        for ((pose, img), depth) in poses.iter().zip(&images).zip(&depths) {
            if img.width != pose.intrinsics.width || img.height != pose.intrinsics.height {
                return Err(Error::InconsistentModel(format!(
                    "image {} is {}x{} but its camera is {}x{}",
                    pose.name, img.width, img.height, pose.intrinsics.width, pose.intrinsics.height
                )));
            }
            if let Some(d) = depth {
                if d.width != img.width || d.height != img.height || d.channels != 1 {
                    return Err(Error::InconsistentModel(format!(
                        "depth of {} does not match its image",
                        pose.name
                    )));
                }
            }
        }
        Ok(Scene {
            poses,
            images,
            depths,
            point_cloud,
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Sub-scene with the given view indices, sharing the point cloud.
    pub fn subset(&self, indices: &[usize]) -> Scene {
        Scene {
            poses: indices.iter().map(|&i| self.poses[i].clone()).collect(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            depths: indices.iter().map(|&i| self.depths[i].clone()).collect(),
            point_cloud: self.point_cloud.clone(),
        }
    }

    /// Downscales every view so that `max(width, height) <= cap`, keeping
    /// the aspect ratio. Images use a triangle filter, depths nearest
    /// neighbour so invalid zeros are not smeared.
    pub fn downscaled(&self, cap: usize) -> Result<Scene> {
        let mut out = self.clone();
        for (i, pose) in out.poses.iter_mut().enumerate() {
            let k = pose.intrinsics;
            let longest = k.width.max(k.height);
            if cap == 0 || longest <= cap {
                continue;
            }
            let f = cap as f64 / longest as f64;
            let w = ((k.width as f64 * f).round() as usize).max(1);
            let h = ((k.height as f64 * f).round() as usize).max(1);
            pose.intrinsics = k.scaled_to(w, h);
            out.images[i] = resize(&self.images[i], w, h, FilterType::Triangle)?;
            if let Some(d) = &self.depths[i] {
                out.depths[i] = Some(resize_nearest(d, w, h));
            }
        }
        Ok(out)
    }

    /// Radius of the camera-center cloud, enlarged by 10%.
    pub fn extent(&self) -> f64 {
        camera_extent(&self.poses)
    }
}

pub fn camera_extent(poses: &[CameraPose]) -> f64 {
    if poses.is_empty() {
        return 1.0;
    }
    let centers: Vec<_> = poses.iter().map(|p| p.center()).collect();
    let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let radius = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    if radius > 0.0 {
        radius * 1.1
    } else {
        1.0
    }
}

/// Holds out every `stride`-th view for testing, starting at index 0.
pub fn train_test_split(n_views: usize, stride: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if stride < 2 {
        return Err(Error::InvalidStride(stride));
    }
    let (test, train) = (0..n_views).partition(|i| i % stride == 0);
    Ok((train, test))
}
