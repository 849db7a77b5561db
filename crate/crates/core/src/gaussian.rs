//! Explicit scene representation: a set of anisotropic 3D Gaussians.
//!
//! Parameters are kept in their unconstrained optimization form: log-scales,
//! opacity logits and unnormalized quaternions (`w, x, y, z`). Colors are
//! plain RGB (degree-0 appearance).
//!
//! On disk a cloud is the ASCII magic `GCLD`, a `u32` little-endian count,
//! then 14 little-endian `f32` per Gaussian: mean (3), log-scale (3),
//! quaternion (4), opacity logit (1), rgb (3).

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector4};

use crate::error::{Error, Result};

const GCLD_MAGIC: &[u8; 4] = b"GCLD";
pub const FLOATS_PER_GAUSSIAN: usize = 14;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    pub means: Vec<Vector3<f64>>,
    pub log_scales: Vec<Vector3<f64>>,
    /// Unnormalized `w, x, y, z` quaternions.
    pub rotations: Vec<Vector4<f64>>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<Vector3<f64>>,
}

/// One Gaussian in constrained form, handy for building scenes by hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    pub mean: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn push(&mut self, s: Splat) {
        let q = s.rotation.into_inner();
        self.means.push(s.mean);
        self.log_scales.push(s.scale.map(f64::ln));
        self.rotations.push(Vector4::new(q.w, q.i, q.j, q.k));
        self.opacity_logits.push(logit(s.opacity));
        self.colors.push(s.color);
    }

    pub fn from_splats(splats: impl IntoIterator<Item = Splat>) -> Self {
        let mut c = GaussianCloud::default();
        for s in splats {
            c.push(s);
        }
        c
    }

    pub fn scale(&self, i: usize) -> Vector3<f64> {
        self.log_scales[i].map(f64::exp)
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    /// Normalized rotation of Gaussian `i` as a matrix.
    pub fn rotation_matrix(&self, i: usize) -> Matrix3<f64> {
        quat_to_matrix(&self.rotations[i])
    }

    /// Copies Gaussian `src` of `other` onto the end of `self`.
    pub fn push_from(&mut self, other: &GaussianCloud, src: usize) {
        self.means.push(other.means[src]);
        self.log_scales.push(other.log_scales[src]);
        self.rotations.push(other.rotations[src]);
        self.opacity_logits.push(other.opacity_logits[src]);
        self.colors.push(other.colors[src]);
    }

    /// Keeps the Gaussians for which `keep[i]` is true.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                let k = keep[i];
                i += 1;
                k
            });
        }
        filter(&mut self.means, keep);
        filter(&mut self.log_scales, keep);
        filter(&mut self.rotations, keep);
        filter(&mut self.opacity_logits, keep);
        filter(&mut self.colors, keep);
    }

    /// Checks the representation invariants after applying the constraining
    /// maps: positive finite scales, normalizable rotations, opacities in
    /// (0, 1) and finite parameters.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n
            || self.rotations.len() != n
            || self.opacity_logits.len() != n
            || self.colors.len() != n
        {
            return Err(Error::shape("parameter arrays differ in length"));
        }
        for i in 0..n {
            let s = self.scale(i);
            let q = self.rotations[i];
            let o = self.opacity(i);
            let finite = self.means[i].iter().all(|v| v.is_finite())
                && s.iter().all(|v| v.is_finite() && *v > 0.0)
                && q.iter().all(|v| v.is_finite())
                && q.norm() > 0.0
                && o > 0.0
                && o < 1.0
                && self.colors[i].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Config(format!("Gaussian {i} violates invariants")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.len() * FLOATS_PER_GAUSSIAN * 4);
        out.extend_from_slice(GCLD_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for i in 0..self.len() {
            let vals = self.means[i]
                .iter()
                .chain(self.log_scales[i].iter())
                .chain(self.rotations[i].iter())
                .chain(std::iter::once(&self.opacity_logits[i]))
                .chain(self.colors[i].iter());
            for v in vals {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != GCLD_MAGIC {
            return Err(Error::FormatError("missing GCLD magic".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != count * FLOATS_PER_GAUSSIAN * 4 {
            return Err(Error::FormatError(format!(
                "header declares {count} Gaussians but body holds {} bytes",
                body.len()
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let mut cloud = GaussianCloud::default();
        for g in vals.chunks_exact(FLOATS_PER_GAUSSIAN) {
            cloud.means.push(Vector3::new(g[0], g[1], g[2]));
            cloud.log_scales.push(Vector3::new(g[3], g[4], g[5]));
            cloud.rotations.push(Vector4::new(g[6], g[7], g[8], g[9]));
            cloud.opacity_logits.push(g[10]);
            cloud.colors.push(Vector3::new(g[11], g[12], g[13]));
        }
        Ok(cloud)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Rotation matrix of an unnormalized `w, x, y, z` quaternion.
pub fn quat_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let n = q.norm();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Backpropagates a gradient on the rotation matrix to the unnormalized
/// quaternion it was built from.
pub fn quat_to_matrix_backward(q: &Vector4<f64>, grad_r: &Matrix3<f64>) -> Vector4<f64> {
    let n = q.norm();
    let qn = q / n;
    let (w, x, y, z) = (qn[0], qn[1], qn[2], qn[3]);
    let g = grad_r;
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    let gn = Vector4::new(
        g.component_mul(&dw).sum(),
        g.component_mul(&dx).sum(),
        g.component_mul(&dy).sum(),
        g.component_mul(&dz).sum(),
    );
    (gn - qn * qn.dot(&gn)) / n
}

pub fn unit_quaternion(q: &Vector4<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
}
