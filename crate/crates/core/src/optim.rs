//! Regularized Gaussian fitting from few posed views.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adam::{Adam, GroupRates};
use crate::densify::{densify_and_prune, reset_opacity, DensifyParams};
use crate::error::{Error, Result};
use crate::gaussian::{logit, GaussianCloud};
use crate::loss::{dssim_loss_grad, l1_loss_grad, pcc_depth_loss};
use crate::metrics::psnr;
use crate::raster::Raster;
use crate::render::{render, render_backward, RenderOutput};
use crate::scene::{CameraPose, Scene, SparsePointCloud};
use crate::se3::{geodesic_distance, interpolate_pseudo_view, GeodesicConfig};

/// Per-group learning rates. The means rate is multiplied by the scene
/// extent and decays exponentially from `means_init` to `means_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub means_init: f64,
    pub means_final: f64,
    pub colors: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            means_init: 1.6e-4,
            means_final: 1.6e-6,
            colors: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    pub fn zero() -> Self {
        LearningRates {
            means_init: 0.0,
            means_final: 0.0,
            colors: 0.0,
            opacity: 0.0,
            scale: 0.0,
            rotation: 0.0,
        }
    }

    /// Rates at iteration `iter` of `total`.
    pub fn at(&self, iter: usize, total: usize, extent: f64) -> GroupRates {
        let t = if total == 0 { 1.0 } else { (iter as f64 / total as f64).clamp(0.0, 1.0) };
        let means = if self.means_init > 0.0 && self.means_final > 0.0 {
            (self.means_init.ln() * (1.0 - t) + self.means_final.ln() * t).exp()
        } else {
            0.0
        };
        GroupRates {
            means: means * extent,
            log_scales: self.scale,
            rotations: self.rotation,
            opacity_logits: self.opacity,
            colors: self.colors,
        }
    }
}

/// Opacity reset period; `"never"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpacityReset {
    Never,
    Every(usize),
}

impl Serialize for OpacityReset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OpacityReset::Never => s.serialize_str("never"),
            OpacityReset::Every(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for OpacityReset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Ok(OpacityReset::Never),
            Raw::Count(n) => Ok(OpacityReset::Every(n as usize)),
            Raw::Word(w) if w == "never" => Ok(OpacityReset::Never),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected \"never\" or an iteration count, got {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparseConfig {
    /// D-SSIM weight in the photometric term.
    pub lambda1: f64,
    pub lambda_depth: f64,
    pub lambda_pseudo: f64,
    pub tau_pos: f64,
    pub opacity_reset_interval: OpacityReset,
    pub opacity_reset_cap: f64,
    pub pseudo_start_iter: usize,
    pub total_iters: usize,
    pub densify_interval: usize,
    pub densify_from_iter: usize,
    pub densify_until_iter: usize,
    pub prune_opacity: f64,
    pub percent_dense: f64,
    pub lr: LearningRates,
    /// Iterations between report checkpoints; the final iteration is always
    /// recorded.
    pub checkpoint_interval: usize,
    pub background: [f64; 3],
}

impl Default for SparseConfig {
    fn default() -> Self {
        SparseConfig::sparse()
    }
}

impl SparseConfig {
    /// Standard dense-view settings: periodic opacity resets, default
    /// densification threshold, no depth terms.
    pub fn dense() -> Self {
        SparseConfig {
            lambda1: 0.2,
            lambda_depth: 0.0,
            lambda_pseudo: 0.0,
            tau_pos: 0.0002,
            opacity_reset_interval: OpacityReset::Every(3000),
            opacity_reset_cap: 0.01,
            pseudo_start_iter: 2000,
            total_iters: 30000,
            densify_interval: 100,
            densify_from_iter: 500,
            densify_until_iter: 15000,
            prune_opacity: 0.005,
            percent_dense: 0.01,
            lr: LearningRates::default(),
            checkpoint_interval: 1000,
            background: [0.0; 3],
        }
    }

    /// Few-view settings: no opacity reset, 5x densification threshold and
    /// correlation depth terms on observed and pseudo views.
    pub fn sparse() -> Self {
        SparseConfig {
            lambda_depth: 0.05,
            lambda_pseudo: 0.05,
            tau_pos: 0.001,
            opacity_reset_interval: OpacityReset::Never,
            ..SparseConfig::dense()
        }
    }

    /// Rescales every iteration-valued setting from the 30k schedule to
    /// `total` iterations, keeping the densification interval.
    pub fn scaled_to(&self, total: usize) -> Self {
        let f = total as f64 / self.total_iters.max(1) as f64;
        let sc = |n: usize| (n as f64 * f).round() as usize;
        SparseConfig {
            total_iters: total,
            pseudo_start_iter: sc(self.pseudo_start_iter),
            densify_from_iter: sc(self.densify_from_iter),
            densify_until_iter: sc(self.densify_until_iter),
            opacity_reset_interval: match self.opacity_reset_interval {
                OpacityReset::Every(n) => OpacityReset::Every(sc(n).max(1)),
                OpacityReset::Never => OpacityReset::Never,
            },
            checkpoint_interval: sc(self.checkpoint_interval).max(1),
            ..self.clone()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SparseConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda1, self.lambda_depth, self.lambda_pseudo];
        if weights.iter().any(|w| !(*w >= 0.0)) || self.lambda1 > 1.0 {
            return Err(Error::Config("loss weights must be non-negative and lambda1 at most 1".into()));
        }
        if !(self.tau_pos > 0.0) {
            return Err(Error::Config("tau_pos must be positive".into()));
        }
        if self.pseudo_start_iter > self.total_iters {
            return Err(Error::Config("pseudo_start_iter exceeds total_iters".into()));
        }
        if !(self.opacity_reset_cap > 0.0 && self.opacity_reset_cap < 1.0) {
            return Err(Error::Config("opacity_reset_cap must lie in (0, 1)".into()));
        }
        if self.densify_interval == 0 {
            return Err(Error::Config("densify_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn densify_params(&self) -> DensifyParams {
        DensifyParams {
            tau_pos: self.tau_pos,
            prune_opacity: self.prune_opacity,
            percent_dense: self.percent_dense,
            ..DensifyParams::default()
        }
    }

    pub fn background(&self) -> Vector3<f64> {
        Vector3::from(self.background)
    }
}

/// Depth supervision: a depth raster and the pixels where it is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthTarget {
    pub depth: Raster<f64>,
    pub valid: Raster<f32>,
}

impl DepthTarget {
    /// Pixels with a finite positive value are valid.
    pub fn from_raster(depth: &Raster<f32>) -> Self {
        let valid = depth.map(|d| if d.is_finite() && d > 0.0 { 1.0 } else { 0.0 });
        DepthTarget {
            depth: depth.map(|d| if d.is_finite() { d } else { 0.0 }).to_f64(),
            valid,
        }
    }
}

/// A pseudo view's render paired with the depth it is compared to.
pub struct PseudoTerm<'a> {
    pub render: &'a RenderOutput,
    pub target: &'a DepthTarget,
}

/// Loss value, its components and the seeds for the backward pass.
#[derive(Debug, Clone)]
pub struct SparseLoss {
    pub total: f64,
    pub l1: f64,
    pub dssim: f64,
    pub depth: f64,
    pub pseudo: f64,
    pub grad_color: Raster<f64>,
    pub grad_depth: Raster<f64>,
    pub pseudo_grad_depth: Vec<Raster<f64>>,
}

/// `(1-λ1)·L1 + λ1·D-SSIM + λ_depth·L_depth + [iter ≥ start]·λ_pseudo·mean(L_pseudo)`.
pub fn sparse_loss(
    render: &RenderOutput,
    gt_image: &Raster<f64>,
    gt_depth: Option<&DepthTarget>,
    pseudo: &[PseudoTerm<'_>],
    cfg: &SparseConfig,
    iter: usize,
) -> Result<SparseLoss> {
    let (l1, g_l1) = l1_loss_grad(&render.color, gt_image)?;
    let (dssim, g_ssim) = dssim_loss_grad(&render.color, gt_image)?;
    let mut grad_color = g_l1;
    for (g, s) in grad_color.data.iter_mut().zip(&g_ssim.data) {
        *g = (1.0 - cfg.lambda1) * *g + cfg.lambda1 * s;
    }
    let mut grad_depth = Raster::new(render.width(), render.height(), 1);
    let mut depth = 0.0;
    if cfg.lambda_depth > 0.0 {
        match gt_depth {
            Some(t) => {
                let d = pcc_depth_loss(&render.depth, &t.depth, Some(&t.valid))?;
                depth = d.value;
                grad_depth = d.grad.map(|g| g * cfg.lambda_depth);
            }
            None => log::warn!("depth weight is set but the view has no depth; skipping the depth term"),
        }
    }
    let mut pseudo_value = 0.0;
    let mut pseudo_grad_depth = Vec::with_capacity(pseudo.len());
    let pseudo_on = cfg.lambda_pseudo > 0.0 && iter >= cfg.pseudo_start_iter && !pseudo.is_empty();
    for p in pseudo {
        if pseudo_on {
            let d = pcc_depth_loss(&p.render.depth, &p.target.depth, Some(&p.target.valid))?;
            pseudo_value += d.value / pseudo.len() as f64;
            let w = cfg.lambda_pseudo / pseudo.len() as f64;
            pseudo_grad_depth.push(d.grad.map(|g| g * w));
        } else {
            pseudo_grad_depth.push(Raster::new(p.render.width(), p.render.height(), 1));
        }
    }
    let gate = if pseudo_on { 1.0 } else { 0.0 };
    let total = (1.0 - cfg.lambda1) * l1 + cfg.lambda1 * dssim + cfg.lambda_depth * depth + gate * cfg.lambda_pseudo * pseudo_value;
    Ok(SparseLoss {
        total,
        l1,
        dssim,
        depth,
        pseudo: pseudo_value,
        grad_color,
        grad_depth,
        pseudo_grad_depth,
    })
}

/// `weight · (L1 + D-SSIM)` for views supervised by generated images.
pub fn sample_loss(render: &RenderOutput, pseudo_gt: &Raster<f64>, weight: f64) -> Result<(f64, Raster<f64>)> {
    let (l1, g_l1) = l1_loss_grad(&render.color, pseudo_gt)?;
    let (ds, g_ds) = dssim_loss_grad(&render.color, pseudo_gt)?;
    let grad = Raster {
        data: g_l1.data.iter().zip(&g_ds.data).map(|(a, b)| weight * (a + b)).collect(),
        ..g_l1
    };
    Ok((weight * (l1 + ds), grad))
}

/// Initial cloud from SfM points: isotropic scale equal to the mean distance
/// to the three nearest neighbours, opacity 0.1, identity rotation.
pub fn init_from_points(points: &SparsePointCloud) -> Result<GaussianCloud> {
    if points.is_empty() {
        return Err(Error::InitializationError("the point cloud is empty".into()));
    }
    let n = points.len();
    let mut cloud = GaussianCloud::default();
    for i in 0..n {
        let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| (points.points[i] - points.points[j]).norm()).collect();
        d.sort_by(f64::total_cmp);
        let k = d.len().min(3);
        let mut s = if k == 0 { 0.01 } else { d[..k].iter().sum::<f64>() / k as f64 };
        if !(s > 1e-7) {
            s = 1e-7;
        }
        cloud.means.push(points.points[i]);
        cloud.log_scales.push(Vector3::repeat(s.ln()));
        cloud.rotations.push(nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0));
        cloud.opacity_logits.push(logit(0.1));
        cloud.colors.push(points.colors[i].map(|c| c.clamp(0.0, 1.0)));
    }
    Ok(cloud)
}

/// Whether a training view is a real photograph or a generated target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Observed,
    Generated,
}

#[derive(Debug, Clone)]
pub struct TrainView {
    pub camera: CameraPose,
    pub image: Raster<f64>,
    pub depth: Option<DepthTarget>,
    pub kind: ViewKind,
}

impl TrainView {
    pub fn observed(camera: CameraPose, image: &Raster<f32>, depth: Option<&Raster<f32>>) -> Self {
        TrainView {
            camera,
            image: image.to_f64(),
            depth: depth.map(DepthTarget::from_raster),
            kind: ViewKind::Observed,
        }
    }

    pub fn generated(camera: CameraPose, image: Raster<f64>) -> Self {
        TrainView {
            camera,
            image,
            depth: None,
            kind: ViewKind::Generated,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l1: f64,
    pub dssim: f64,
    pub depth: f64,
    pub pseudo: f64,
    pub sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iter: usize,
    pub train_psnr: f64,
    pub gaussians: usize,
    /// Mean loss components since the previous checkpoint.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub checkpoints: Vec<Checkpoint>,
}

impl FitReport {
    /// One JSON object per checkpoint.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for c in &self.checkpoints {
            s.push_str(&serde_json::to_string(c).expect("checkpoint serializes"));
            s.push('\n');
        }
        s
    }

    pub fn write_json_lines(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_json_lines().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Weight schedule for generated views: linear from `start` at the first
/// iteration to `end` at the last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleWeight {
    pub start: f64,
    pub end: f64,
}

impl SampleWeight {
    pub fn at(&self, iter: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.end;
        }
        let t = (iter.saturating_sub(1) as f64 / (total - 1) as f64).clamp(0.0, 1.0);
        self.start + (self.end - self.start) * t
    }
}

/// Optimization state: the cloud, its optimizer, the training views and the
/// densification statistics.
pub struct Trainer {
    pub cloud: GaussianCloud,
    pub cfg: SparseConfig,
    pub views: Vec<TrainView>,
    pub extent: f64,
    pub iter: usize,
    pub report: FitReport,
    pub sample_weight: SampleWeight,
    adam: Adam,
    grad_accum: Vec<f64>,
    grad_count: Vec<u32>,
    pseudo_pool: Vec<(CameraPose, usize)>,
    rng: ChaCha8Rng,
    running: LossBreakdown,
    running_n: usize,
}

impl Trainer {
    pub fn new(cloud: GaussianCloud, cfg: SparseConfig, views: Vec<TrainView>, extent: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let n = cloud.len();
        let mut t = Trainer {
            cloud,
            cfg,
            views,
            extent,
            iter: 0,
            report: FitReport::default(),
            sample_weight: SampleWeight { start: 1.0, end: 0.1 },
            adam: Adam::new(n),
            grad_accum: vec![0.0; n],
            grad_count: vec![0; n],
            pseudo_pool: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            running: LossBreakdown::default(),
            running_n: 0,
        };
        t.regenerate_pseudo_views()?;
        Ok(t)
    }

    /// Pairs each observed view with its closest observed neighbour and
    /// places a pseudo camera between them. The depth target is that of the
    /// endpoint nearer to the pseudo camera.
    fn regenerate_pseudo_views(&mut self) -> Result<()> {
        self.pseudo_pool.clear();
        if self.cfg.lambda_pseudo <= 0.0 {
            return Ok(());
        }
        let geo = GeodesicConfig::default();
        let observed: Vec<usize> = (0..self.views.len())
            .filter(|&i| self.views[i].kind == ViewKind::Observed && self.views[i].depth.is_some())
            .collect();
        if observed.len() < 2 {
            return Ok(());
        }
        for &i in &observed {
            let mut best = None;
            for &j in &observed {
                if i == j {
                    continue;
                }
                let d = geodesic_distance(&self.views[i].camera, &self.views[j].camera, &geo)?;
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            let (_, j) = best.expect("at least two observed views");
            let u: f64 = self.rng.random_range(0.3..0.7);
            let cam = interpolate_pseudo_view(&self.views[i].camera, &self.views[j].camera, u, usize::MAX - i)?;
            let nearest = if u <= 0.5 { i } else { j };
            self.pseudo_pool.push((cam, nearest));
        }
        Ok(())
    }

    pub fn push_view(&mut self, view: TrainView) {
        self.views.push(view);
    }

    /// Runs `n` iterations.
    pub fn run(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// One optimization iteration on a uniformly drawn training view.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        if self.views.is_empty() {
            return Err(Error::Config("no training views".into()));
        }
        self.iter += 1;
        let iter = self.iter;
        let bg = self.cfg.background();
        let vi = self.rng.random_range(0..self.views.len());
        let view = &self.views[vi];
        let out = render(&self.cloud, &view.camera, bg);
        let mut parts = LossBreakdown::default();
        let mut grads;
        match view.kind {
            ViewKind::Observed => {
                let pseudo_on = self.cfg.lambda_pseudo > 0.0 && iter >= self.cfg.pseudo_start_iter && !self.pseudo_pool.is_empty();
                let mut pseudo_render = None;
                if pseudo_on {
                    let k = self.rng.random_range(0..self.pseudo_pool.len());
                    let (cam, src) = &self.pseudo_pool[k];
                    pseudo_render = Some((render(&self.cloud, cam, bg), cam.clone(), *src));
                }
                let terms: Vec<PseudoTerm<'_>> = pseudo_render
                    .iter()
                    .map(|(r, _, src)| PseudoTerm {
                        render: r,
                        target: self.views[*src].depth.as_ref().expect("pseudo sources carry depth"),
                    })
                    .collect();
                let loss = sparse_loss(&out, &view.image, view.depth.as_ref(), &terms, &self.cfg, iter)?;
                grads = render_backward(&self.cloud, &view.camera, bg, &loss.grad_color, &loss.grad_depth)?;
                if let Some((r, cam, _)) = &pseudo_render {
                    let zero = Raster::new(r.width(), r.height(), 3);
                    let g = render_backward(&self.cloud, cam, bg, &zero, &loss.pseudo_grad_depth[0])?;
                    // the pseudo view must not feed the densification statistic
                    let screen = grads.screen_grad_norms.clone();
                    let visible = grads.visible.clone();
                    grads.add_scaled(&g, 1.0);
                    grads.screen_grad_norms = screen;
                    grads.visible = visible;
                }
                parts.total = loss.total;
                parts.l1 = loss.l1;
                parts.dssim = loss.dssim;
                parts.depth = loss.depth;
                parts.pseudo = loss.pseudo;
            }
            ViewKind::Generated => {
                let w = self.sample_weight.at(iter, self.cfg.total_iters);
                let (value, gc) = sample_loss(&out, &view.image, w)?;
                let zero = Raster::new(out.width(), out.height(), 1);
                grads = render_backward(&self.cloud, &view.camera, bg, &gc, &zero)?;
                parts.total = value;
                parts.sample = value;
            }
        }
        for i in 0..self.cloud.len() {
            if grads.visible[i] {
                self.grad_accum[i] += grads.screen_grad_norms[i];
                self.grad_count[i] += 1;
            }
        }
        let rates = self.cfg.lr.at(iter, self.cfg.total_iters, self.extent);
        self.adam.step(&mut self.cloud, &grads, &rates);
        self.adaptive_control()?;
        self.accumulate(&parts);
        if iter % self.cfg.checkpoint_interval.max(1) == 0 || iter == self.cfg.total_iters {
            self.checkpoint();
        }
        Ok(parts)
    }

    fn adaptive_control(&mut self) -> Result<()> {
        let iter = self.iter;
        if iter >= self.cfg.densify_until_iter {
            return Ok(());
        }
        if iter > self.cfg.densify_from_iter && iter % self.cfg.densify_interval == 0 {
            let norms: Vec<f64> = self
                .grad_accum
                .iter()
                .zip(&self.grad_count)
                .map(|(a, &c)| if c > 0 { a / c as f64 } else { 0.0 })
                .collect();
            let d = densify_and_prune(&self.cloud, &norms, &self.cfg.densify_params(), self.extent, &mut self.rng)?;
            self.adam.remap(&d.source);
            self.cloud = d.cloud;
            self.grad_accum = vec![0.0; self.cloud.len()];
            self.grad_count = vec![0; self.cloud.len()];
            self.regenerate_pseudo_views()?;
        }
        if let OpacityReset::Every(n) = self.cfg.opacity_reset_interval {
            if n > 0 && iter % n == 0 {
                reset_opacity(&mut self.cloud, self.cfg.opacity_reset_cap);
                self.adam.reset_opacity_state();
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, p: &LossBreakdown) {
        let r = &mut self.running;
        r.total += p.total;
        r.l1 += p.l1;
        r.dssim += p.dssim;
        r.depth += p.depth;
        r.pseudo += p.pseudo;
        r.sample += p.sample;
        self.running_n += 1;
    }

    /// Mean PSNR over the observed training views.
    pub fn train_psnr(&self) -> f64 {
        let bg = self.cfg.background();
        let scores: Vec<f64> = self
            .views
            .iter()
            .filter(|v| v.kind == ViewKind::Observed)
            .map(|v| psnr(&render(&self.cloud, &v.camera, bg).color, &v.image).expect("shapes match"))
            .collect();
        if scores.is_empty() {
            return f64::NAN;
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    fn checkpoint(&mut self) {
        let n = self.running_n.max(1) as f64;
        let r = std::mem::take(&mut self.running);
        self.running_n = 0;
        let loss = LossBreakdown {
            total: r.total / n,
            l1: r.l1 / n,
            dssim: r.dssim / n,
            depth: r.depth / n,
            pseudo: r.pseudo / n,
            sample: r.sample / n,
        };
        self.report.checkpoints.push(Checkpoint {
            iter: self.iter,
            train_psnr: self.train_psnr(),
            gaussians: self.cloud.len(),
            loss,
        });
    }
}

/// Fits a Gaussian cloud to the scene's views, starting from its point cloud.
pub fn fit_sparse_3dgs(scene: &Scene, cfg: &SparseConfig, seed: u64) -> Result<(GaussianCloud, FitReport)> {
    let cloud = init_from_points(&scene.point_cloud)?;
    let views = scene
        .poses
        .iter()
        .zip(&scene.images)
        .zip(&scene.depths)
        .map(|((p, img), d)| TrainView::observed(p.clone(), img, d.as_ref()))
        .collect();
    let mut t = Trainer::new(cloud, cfg.clone(), views, scene.extent(), seed)?;
    t.run(cfg.total_iters)?;
    Ok((t.cloud, t.report))
}
