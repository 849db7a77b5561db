//! Autoregressive novel-view fusion: render an unseen pose, turn the render
//! into a training target, add it to the stack and keep optimizing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::enhance::{enhance_view, EnhanceSettings, Enhancer};
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::optim::{FitReport, SparseConfig, TrainView, Trainer};
use crate::raster::Raster;
use crate::render::{masked_fraction, opacity_mask, render, RenderOutput};
use crate::scene::{CameraPose, Scene};
use crate::schedule::{solve_schedule_with, Growth, Schedule, ScheduleKind};
use crate::se3::{geodesic_distance, interpolate_pseudo_view, GeodesicConfig};

/// Multiplies every scale by `eta` (shifts log-scales by `ln eta`).
pub fn shrink_scales(cloud: &mut GaussianCloud, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidEta(eta));
    }
    if eta == 1.0 {
        return Ok(());
    }
    let shift = eta.ln();
    for s in cloud.log_scales.iter_mut() {
        s.add_scalar_mut(shift);
    }
    Ok(())
}

/// Removes and returns the `m` pool poses closest to the stack, where a
/// pose's distance is its minimum geodesic distance to any stack pose. Ties
/// go to the smaller view id. Returns fewer than `m` only when the pool runs
/// out.
pub fn next_novel_camera(
    pool: &mut Vec<CameraPose>,
    stack: &[CameraPose],
    m: usize,
    cfg: &GeodesicConfig,
) -> Result<Vec<CameraPose>> {
    if pool.is_empty() {
        return Err(Error::PoolExhausted);
    }
    let mut scored = Vec::with_capacity(pool.len());
    for (i, p) in pool.iter().enumerate() {
        let mut best = f64::INFINITY;
        for s in stack {
            best = best.min(geodesic_distance(p, s, cfg)?);
        }
        scored.push((best, p.id, i));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut take: Vec<usize> = scored.iter().take(m.max(1)).map(|s| s.2).collect();
    let picked: Vec<CameraPose> = take.iter().map(|&i| pool[i].clone()).collect();
    take.sort_unstable_by(|a, b| b.cmp(a));
    for i in take {
        pool.remove(i);
    }
    Ok(picked)
}

/// Supplies the training target for a novel pose given the current render.
pub trait NovelViewSource {
    fn target(&mut self, pose: &CameraPose, render: &RenderOutput, step: usize, steps: usize) -> Result<Raster<f64>>;
}

/// Targets from an enhancement backend: in-paint, then clean.
pub struct EnhancerSource<'a> {
    pub enhancer: &'a dyn Enhancer,
    pub settings: EnhanceSettings,
}

impl NovelViewSource for EnhancerSource<'_> {
    fn target(&mut self, _pose: &CameraPose, render: &RenderOutput, step: usize, steps: usize) -> Result<Raster<f64>> {
        Ok(enhance_view(self.enhancer, render, &self.settings, step, steps)?.image)
    }
}

/// Targets are held-out ground-truth images looked up by view id; this
/// isolates the effect of the schedule from the quality of the enhancer.
pub struct HeldoutOracle {
    pub images: HashMap<usize, Raster<f64>>,
}

impl HeldoutOracle {
    pub fn from_scene(scene: &Scene, ids: &[usize]) -> Self {
        let images = scene
            .poses
            .iter()
            .zip(&scene.images)
            .filter(|(p, _)| ids.contains(&p.id))
            .map(|(p, img)| (p.id, img.to_f64()))
            .collect();
        HeldoutOracle { images }
    }
}

impl NovelViewSource for HeldoutOracle {
    fn target(&mut self, pose: &CameraPose, _render: &RenderOutput, _step: usize, _steps: usize) -> Result<Raster<f64>> {
        self.images
            .get(&pose.id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no held-out image for view {}", pose.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub total_iters: usize,
    pub m: usize,
    pub kind: ScheduleKind,
    pub growth: Growth,
    pub n1_hint: Option<u64>,
    pub eta: f64,
    pub sample_weight_start: f64,
    pub sample_weight_end: f64,
    pub tau: f64,
    pub enhancer_url: Option<String>,
    pub enhance: EnhanceSettings,
    /// Optimizer settings during fusion; `total_iters` is overridden.
    pub optim: SparseConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            total_iters: 30000,
            m: 2,
            kind: ScheduleKind::Quadratic,
            growth: Growth::Recurrence,
            n1_hint: None,
            eta: 0.97,
            sample_weight_start: 1.0,
            sample_weight_end: 0.1,
            tau: 0.8,
            enhancer_url: None,
            enhance: EnhanceSettings::default(),
            optim: LoopConfig::iterative_preset(),
        }
    }
}

impl LoopConfig {
    /// Plain photometric optimization: densification threshold 0.0002,
    /// opacity reset every 3000 iterations, no depth or pseudo-view terms.
    pub fn iterative_preset() -> SparseConfig {
        SparseConfig {
            lambda_depth: 0.0,
            lambda_pseudo: 0.0,
            ..SparseConfig::dense()
        }
    }

    /// Same settings on a budget of `total` iterations, with every
    /// iteration-valued optimizer setting rescaled.
    pub fn scaled_to(&self, total: usize) -> Self {
        LoopConfig {
            total_iters: total,
            optim: self.optim.scaled_to(total),
            ..self.clone()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: LoopConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(cfg.eta > 0.0 && cfg.eta <= 1.0) {
            return Err(Error::InvalidEta(cfg.eta));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionStep {
    pub step: usize,
    pub added: Vec<usize>,
    pub iterations: u64,
    pub stack_size: usize,
    /// Mean masked fraction at `tau` over every pose of the novel pool,
    /// measured after the step's optimization.
    pub pool_mask_area: f64,
    /// Masked fraction of each added view's render.
    pub added_mask_area: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub schedule: Option<Schedule>,
    /// Pool mask area of the initial cloud.
    pub initial_mask_area: f64,
    pub steps: Vec<FusionStep>,
    pub fit: FitReport,
}

impl FusionReport {
    /// Pool mask area before fusion followed by its value after each step.
    pub fn mask_areas(&self) -> Vec<f64> {
        std::iter::once(self.initial_mask_area)
            .chain(self.steps.iter().map(|s| s.pool_mask_area))
            .collect()
    }

    /// Least-squares slope of [`mask_areas`](Self::mask_areas) against the
    /// step index.
    pub fn mask_area_slope(&self) -> f64 {
        let areas = self.mask_areas();
        let n = areas.len() as f64;
        if areas.len() < 2 {
            return 0.0;
        }
        let mx = (n - 1.0) / 2.0;
        let my = areas.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, a) in areas.iter().enumerate() {
            sxy += (i as f64 - mx) * (a - my);
            sxx += (i as f64 - mx) * (i as f64 - mx);
        }
        sxy / sxx
    }
}

/// Grows the training set from the observed views of `scene` by fusing the
/// poses of `pool` a few at a time, optimizing for the scheduled number of
/// iterations after every addition.
pub fn run_view_fusion(
    scene: &Scene,
    initial: GaussianCloud,
    pool: &[CameraPose],
    cfg: &LoopConfig,
    source: &mut dyn NovelViewSource,
    seed: u64,
) -> Result<(GaussianCloud, FusionReport)> {
    if pool.is_empty() {
        return Ok((
            initial,
            FusionReport {
                schedule: None,
                initial_mask_area: 0.0,
                steps: Vec::new(),
                fit: FitReport::default(),
            },
        ));
    }
    let schedule = solve_schedule_with(cfg.total_iters as u64, pool.len(), cfg.m, cfg.kind, cfg.n1_hint, cfg.growth)?;
    let optim = SparseConfig {
        total_iters: cfg.total_iters,
        ..cfg.optim.clone()
    };
    let views = scene
        .poses
        .iter()
        .zip(&scene.images)
        .map(|(p, img)| TrainView::observed(p.clone(), img, None))
        .collect();
    let mut trainer = Trainer::new(initial, optim, views, scene.extent(), seed)?;
    trainer.sample_weight.start = cfg.sample_weight_start;
    trainer.sample_weight.end = cfg.sample_weight_end;
    let bg = trainer.cfg.background();
    let geo = GeodesicConfig::default();
    let mut remaining = pool.to_vec();
    let mut stack: Vec<CameraPose> = scene.poses.clone();
    let mut steps = Vec::with_capacity(schedule.steps());
    let k_total = schedule.steps();
    let pool_area = |cloud: &GaussianCloud| -> Result<f64> {
        let mut sum = 0.0;
        for p in pool {
            sum += masked_fraction(&opacity_mask(&render(cloud, p, bg).alpha, cfg.tau)?);
        }
        Ok(sum / pool.len() as f64)
    };
    let initial_mask_area = pool_area(&trainer.cloud)?;
    for (k, &n_k) in schedule.counts.iter().enumerate() {
        let picks = next_novel_camera(&mut remaining, &stack, cfg.m, &geo)?;
        let mut added_area = Vec::with_capacity(picks.len());
        for pose in &picks {
            let out = render(&trainer.cloud, pose, bg);
            added_area.push(masked_fraction(&opacity_mask(&out.alpha, cfg.tau)?));
            let image = source.target(pose, &out, k, k_total)?;
            out.color.ensure_same_shape(&image)?;
            trainer.push_view(TrainView::generated(pose.clone(), image));
            stack.push(pose.clone());
        }
        shrink_scales(&mut trainer.cloud, cfg.eta)?;
        trainer.run(n_k as usize)?;
        steps.push(FusionStep {
            step: k + 1,
            added: picks.iter().map(|p| p.id).collect(),
            iterations: n_k,
            stack_size: trainer.views.len(),
            pool_mask_area: pool_area(&trainer.cloud)?,
            added_mask_area: added_area,
        });
    }
    let fit = trainer.report.clone();
    Ok((
        trainer.cloud,
        FusionReport {
            schedule: Some(schedule),
            initial_mask_area,
            steps,
            fit,
        },
    ))
}

/// Novel poses along the closed path through `poses` (in the given order):
/// `per_gap` interpolated cameras between each consecutive pair. Ids start
/// above the largest id in `poses`.
pub fn orbit_pool(poses: &[CameraPose], per_gap: usize) -> Result<Vec<CameraPose>> {
    if poses.len() < 2 {
        return Err(Error::InsufficientControlPoints(poses.len()));
    }
    let mut next_id = poses.iter().map(|p| p.id).max().unwrap_or(0) + 1;
    let mut out = Vec::with_capacity(poses.len() * per_gap);
    for (i, a) in poses.iter().enumerate() {
        let b = &poses[(i + 1) % poses.len()];
        for j in 1..=per_gap {
            let u = j as f64 / (per_gap + 1) as f64;
            let mut p = interpolate_pseudo_view(a, b, u, next_id)?;
            p.name = format!("novel_{next_id:05}.png");
            out.push(p);
            next_id += 1;
        }
    }
    Ok(out)
}

/// The full loop with an enhancer producing the pseudo ground truth.
pub fn run_sp2360(
    scene: &Scene,
    initial: GaussianCloud,
    pool: &[CameraPose],
    cfg: &LoopConfig,
    enhancer: &dyn Enhancer,
    seed: u64,
) -> Result<(GaussianCloud, FusionReport)> {
    let mut source = EnhancerSource { enhancer, settings: EnhanceSettings { tau: cfg.tau, ..cfg.enhance.clone() } };
    run_view_fusion(scene, initial, pool, cfg, &mut source, seed)
}
