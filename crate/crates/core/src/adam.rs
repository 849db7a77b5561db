//! First-order adaptive moment optimizer over a [`GaussianCloud`].

use nalgebra::{Vector3, Vector4};

use crate::gaussian::GaussianCloud;
use crate::render::CloudGradients;

/// Step sizes per parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub means: f64,
    pub log_scales: f64,
    pub rotations: f64,
    pub opacity_logits: f64,
    pub colors: f64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: GaussianCloud,
    v: GaussianCloud,
    t: u64,
}

fn zeros(n: usize) -> GaussianCloud {
    GaussianCloud {
        means: vec![Vector3::zeros(); n],
        log_scales: vec![Vector3::zeros(); n],
        rotations: vec![Vector4::zeros(); n],
        opacity_logits: vec![0.0; n],
        colors: vec![Vector3::zeros(); n],
    }
}

fn update<const D: usize>(
    p: &mut nalgebra::SVector<f64, D>,
    m: &mut nalgebra::SVector<f64, D>,
    v: &mut nalgebra::SVector<f64, D>,
    g: &nalgebra::SVector<f64, D>,
    lr: f64,
    c: &Coeffs,
) {
    for k in 0..D {
        let (pk, mk, vk) = (&mut p[k], &mut m[k], &mut v[k]);
        adam_scalar(pk, mk, vk, g[k], lr, c);
    }
}

struct Coeffs {
    b1: f64,
    b2: f64,
    bc1: f64,
    bc2: f64,
    eps: f64,
}

fn adam_scalar(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c: &Coeffs) {
    *m = c.b1 * *m + (1.0 - c.b1) * g;
    *v = c.b2 * *v + (1.0 - c.b2) * g * g;
    let mhat = *m / c.bc1;
    let vhat = *v / c.bc2;
    *p -= lr * mhat / (vhat.sqrt() + c.eps);
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            m: zeros(n),
            v: zeros(n),
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, cloud: &mut GaussianCloud, g: &CloudGradients, lr: &GroupRates) {
        self.t += 1;
        let c = Coeffs {
            b1: self.beta1,
            b2: self.beta2,
            bc1: 1.0 - self.beta1.powi(self.t as i32),
            bc2: 1.0 - self.beta2.powi(self.t as i32),
            eps: self.eps,
        };
        let (m, v) = (&mut self.m, &mut self.v);
        for i in 0..cloud.len() {
            update(&mut cloud.means[i], &mut m.means[i], &mut v.means[i], &g.means[i], lr.means, &c);
            update(&mut cloud.log_scales[i], &mut m.log_scales[i], &mut v.log_scales[i], &g.log_scales[i], lr.log_scales, &c);
            update(&mut cloud.rotations[i], &mut m.rotations[i], &mut v.rotations[i], &g.rotations[i], lr.rotations, &c);
            adam_scalar(
                &mut cloud.opacity_logits[i],
                &mut m.opacity_logits[i],
                &mut v.opacity_logits[i],
                g.opacity_logits[i],
                lr.opacity_logits,
                &c,
            );
            update(&mut cloud.colors[i], &mut m.colors[i], &mut v.colors[i], &g.colors[i], lr.colors, &c);
            cloud.colors[i] = cloud.colors[i].map(|x| x.clamp(0.0, 1.0));
        }
    }

    /// Rebuilds the moment buffers after densification: entry `j` copies the
    /// state of `source[j]`, or starts from zero for a new Gaussian.
    pub fn remap(&mut self, source: &[Option<usize>]) {
        let mut m = zeros(0);
        let mut v = zeros(0);
        let blank = zeros(1);
        for s in source {
            match s {
                Some(i) => {
                    m.push_from(&self.m, *i);
                    v.push_from(&self.v, *i);
                }
                None => {
                    m.push_from(&blank, 0);
                    v.push_from(&blank, 0);
                }
            }
        }
        self.m = m;
        self.v = v;
    }

    /// Forgets the opacity moments, used after an opacity reset.
    pub fn reset_opacity_state(&mut self) {
        self.m.opacity_logits.iter_mut().for_each(|x| *x = 0.0);
        self.v.opacity_logits.iter_mut().for_each(|x| *x = 0.0);
    }
}
