//! Command-line front end. Every subcommand prints a JSON run summary on
//! stdout (and to `--summary` when given); exit codes are 0 on success,
//! 1 on runtime errors and 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde_json::{json, Value};

use crate::artifacts::{
    generate_artifact_pairs, load_instruction_pool, random_rect_masks, write_manifest, ArtifactConfig, MaskMode,
};
use crate::colmap::{depth_file_name, load_scene_dir, save_scene_dir};
use crate::enhance::{BlurStub, Enhancer, HttpEnhancer, IdentityStub, MaskFillStub};
use crate::error::{Error, Result};
use crate::fusion::{orbit_pool, run_sp2360, run_view_fusion, HeldoutOracle, LoopConfig};
use crate::gaussian::GaussianCloud;
use crate::metrics::evaluate;
use crate::optim::{fit_sparse_3dgs, SparseConfig};
use crate::raster::{load_raster, save_raster};
use crate::render::{opacity_mask, render};
use crate::scene::Scene;
use crate::schedule::{solve_schedule_with, Growth, ScheduleKind};
use crate::se3::{always_registers, select_view_subset, GeodesicConfig};
use crate::synthetic::{toy_scene, ToySceneConfig};

#[derive(Debug, Parser)]
#[command(name = "sparse360", version, about = "Sparse-view 360 degree Gaussian-splatting reconstruction")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON run summary to this file.
    #[arg(long, global = true)]
    pub summary: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pick M well-spread training views by geodesic distance.
    SelectViews(SelectViews),
    /// Fit a regularized Gaussian cloud to a few posed views.
    FitSparse(FitSparse),
    /// Print the per-step iteration schedule.
    SolveSchedule(SolveSchedule),
    /// Grow a sparse fit by fusing novel views one schedule step at a time.
    Iterate(Iterate),
    /// Render clean/artifact training pairs from dense and sparse fits.
    GenArtifactData(GenArtifactData),
    /// Render color, depth and alpha for scene cameras.
    Render(RenderCmd),
    /// PSNR/SSIM of predicted images against ground truth.
    Eval(Eval),
    /// Write opacity masks of a fit, or random rectangle masks.
    ExportMasks(ExportMasks),
    /// Write a procedural toy scene directory.
    MakeToy(MakeToy),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Scene directory with `sparse/` (COLMAP text model) and `images/`.
    #[arg(long)]
    pub scene: PathBuf,
    /// Downscale views so the longer side is at most this many pixels (0 keeps them).
    #[arg(long, default_value_t = 128)]
    pub max_size: usize,
}

impl SceneArgs {
    fn load(&self) -> Result<Scene> {
        load_scene_dir(&self.scene)?.downscaled(self.max_size)
    }
}

#[derive(Debug, Args)]
pub struct SelectViews {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Number of views to select.
    #[arg(long = "M")]
    pub m: usize,
    /// Index of the first view; defaults to the view nearest the mean pose.
    #[arg(long)]
    pub seed_view: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub translation_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Sparse,
    Dense,
}

#[derive(Debug, Args)]
pub struct FitSparse {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Output directory for `cloud.gcld` and `fit.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML optimizer config; overrides `--preset`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Sparse)]
    pub preset: Preset,
    /// Rescale the config to this many iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Training view indices (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "m")]
    pub views: Option<Vec<usize>>,
    /// Select this many views geodesically instead of listing them.
    #[arg(long = "M")]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveSchedule {
    #[arg(long)]
    pub total: u64,
    /// Number of novel views to fuse.
    #[arg(long)]
    pub views: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// constant, linear, quadratic or cosine.
    #[arg(long, default_value = "quadratic")]
    pub kind: String,
    #[arg(long, value_enum, default_value_t = GrowthArg::Recurrence)]
    pub growth: GrowthArg,
    /// First-step iteration count for linear/quadratic schedules.
    #[arg(long)]
    pub n1: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GrowthArg {
    Recurrence,
    Arithmetic,
}

impl From<GrowthArg> for Growth {
    fn from(g: GrowthArg) -> Growth {
        match g {
            GrowthArg::Recurrence => Growth::Recurrence,
            GrowthArg::Arithmetic => Growth::Arithmetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    /// Scene views not listed in `--train`.
    Heldout,
    /// Poses interpolated between consecutive training views.
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StubArg {
    Identity,
    Maskfill,
    Blur,
}

#[derive(Debug, Args)]
pub struct Iterate {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Initial cloud, usually from fit-sparse.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML loop config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rescale the loop to this many iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Observed view indices; defaults to all views.
    #[arg(long, value_delimiter = ',')]
    pub train: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = PoolArg::Heldout)]
    pub pool: PoolArg,
    /// Interpolated poses per gap for `--pool orbit`.
    #[arg(long, default_value_t = 2)]
    pub per_gap: usize,
    /// Enhancer service base URL; overrides the config.
    #[arg(long)]
    pub enhancer: Option<String>,
    /// In-process enhancer used when no URL is configured.
    #[arg(long, value_enum, default_value_t = StubArg::Maskfill)]
    pub stub: StubArg,
    /// Fuse the held-out ground-truth images instead of enhanced renders.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct GenArtifactData {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Cloud fitted to all views.
    #[arg(long)]
    pub dense: PathBuf,
    /// Sparse fits as `M=path`, repeatable.
    #[arg(long, required = true)]
    pub sparse: Vec<String>,
    /// Instruction pool, one per line.
    #[arg(long)]
    pub instructions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML artifact config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub interp: Option<usize>,
    /// Source camera indices; defaults to all views.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct RenderCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<usize>>,
    /// Background color as r,g,b in [0, 1].
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    pub background: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct Eval {
    /// Directory of predicted PNGs.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth PNGs; every one must have a prediction.
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportMasks {
    #[arg(long)]
    pub out: PathBuf,
    /// Scene directory (opacity masks).
    #[arg(long, requires = "cloud")]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub max_size: usize,
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub tau: f64,
    /// Random rectangle masks with this many rectangles each.
    #[arg(long, conflicts_with = "scene")]
    pub rects: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value = "union")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct MakeToy {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub views: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 20)]
    pub gaussians: usize,
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).unwrap_or_default();
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{text}");
            if let Some(path) = &cli.summary {
                if let Err(e) = std::fs::write(path, text + "\n") {
                    eprintln!("error: writing {}: {e}", path.display());
                    return 1;
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Value> {
    let seed = cli.seed;
    let body = match &cli.command {
        Command::SelectViews(a) => select_views(a)?,
        Command::FitSparse(a) => fit_sparse(a, seed)?,
        Command::SolveSchedule(a) => solve(a)?,
        Command::Iterate(a) => iterate(a, seed)?,
        Command::GenArtifactData(a) => gen_artifacts(a, seed)?,
        Command::Render(a) => render_views(a)?,
        Command::Eval(a) => eval(a)?,
        Command::ExportMasks(a) => export_masks(a, seed)?,
        Command::MakeToy(a) => make_toy(a, seed)?,
    };
    Ok(json!({ "seed": seed, "result": body }))
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn check_indices(ids: &[usize], n: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::Config(format!("view index {i} out of range for {n} views"))),
        None => Ok(()),
    }
}

fn select_views(a: &SelectViews) -> Result<Value> {
    let scene = load_scene_dir(&a.scene.scene)?;
    let cfg = GeodesicConfig { translation_weight: a.translation_weight };
    let res = select_view_subset(&scene.poses, a.m, a.seed_view, &cfg, always_registers)?;
    to_value(&res)
}

fn fit_sparse(a: &FitSparse, seed: u64) -> Result<Value> {
    let scene = a.scene.load()?;
    let mut cfg = match (&a.config, a.preset) {
        (Some(p), _) => SparseConfig::load(p)?,
        (None, Preset::Sparse) => SparseConfig::sparse(),
        (None, Preset::Dense) => SparseConfig::dense(),
    };
    if let Some(n) = a.iters {
        cfg = cfg.scaled_to(n);
    }
    let views: Vec<usize> = match (&a.views, a.m) {
        (Some(v), _) => v.clone(),
        (None, Some(m)) => {
            select_view_subset(&scene.poses, m, None, &GeodesicConfig::default(), always_registers)?.indices
        }
        (None, None) => (0..scene.len()).collect(),
    };
    check_indices(&views, scene.len())?;
    let (cloud, report) = fit_sparse_3dgs(&scene.subset(&views), &cfg, seed)?;
    let cloud_path = a.out.join("cloud.gcld");
    cloud.save(&cloud_path)?;
    report.write_json_lines(a.out.join("fit.jsonl"))?;
    let last = report.checkpoints.last();
    Ok(json!({
        "views": views,
        "iterations": cfg.total_iters,
        "gaussians": cloud.len(),
        "train_psnr": last.map(|c| c.train_psnr),
        "cloud": cloud_path,
    }))
}

fn solve(a: &SolveSchedule) -> Result<Value> {
    let kind: ScheduleKind = a.kind.parse()?;
    let s = solve_schedule_with(a.total, a.views, a.m, kind, a.n1, a.growth.into())?;
    let mut v = to_value(&s)?;
    v["total"] = json!(s.total());
    v["steps"] = json!(s.steps());
    Ok(v)
}

fn iterate(a: &Iterate, seed: u64) -> Result<Value> {
    let full = a.scene.load()?;
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            LoopConfig::from_toml_str(&text)?
        }
        None => LoopConfig::default(),
    };
    if let Some(n) = a.iters {
        cfg = cfg.scaled_to(n);
    }
    if a.enhancer.is_some() {
        cfg.enhancer_url = a.enhancer.clone();
    }
    let train = a.train.clone().unwrap_or_else(|| (0..full.len()).collect());
    check_indices(&train, full.len())?;
    let heldout: Vec<usize> = (0..full.len()).filter(|i| !train.contains(i)).collect();
    let observed = full.subset(&train);
    let pool = match a.pool {
        PoolArg::Heldout => heldout.iter().map(|&i| full.poses[i].clone()).collect(),
        PoolArg::Orbit => orbit_pool(&observed.poses, a.per_gap)?,
    };
    let initial = GaussianCloud::load(&a.cloud)?;
    let (cloud, report) = if a.oracle {
        if a.pool != PoolArg::Heldout {
            return Err(Error::Config("--oracle needs --pool heldout".into()));
        }
        let ids: Vec<usize> = heldout.iter().map(|&i| full.poses[i].id).collect();
        let mut oracle = HeldoutOracle::from_scene(&full, &ids);
        run_view_fusion(&observed, initial, &pool, &cfg, &mut oracle, seed)?
    } else {
        let enhancer: Box<dyn Enhancer> = match &cfg.enhancer_url {
            Some(url) => Box::new(HttpEnhancer::new(url.clone())),
            None => match a.stub {
                StubArg::Identity => Box::new(IdentityStub),
                StubArg::Maskfill => Box::new(MaskFillStub),
                StubArg::Blur => Box::new(BlurStub),
            },
        };
        run_sp2360(&observed, initial, &pool, &cfg, enhancer.as_ref(), seed)?
    };
    let cloud_path = a.out.join("cloud.gcld");
    cloud.save(&cloud_path)?;
    let report_path = a.out.join("fusion.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    Ok(json!({
        "train": train,
        "pool": pool.len(),
        "steps": report.steps.len(),
        "schedule": report.schedule.as_ref().map(|s| s.counts.clone()),
        "mask_areas": report.mask_areas(),
        "mask_area_slope": report.mask_area_slope(),
        "gaussians": cloud.len(),
        "cloud": cloud_path,
        "report": report_path,
    }))
}

fn gen_artifacts(a: &GenArtifactData, seed: u64) -> Result<Value> {
    let scene = a.scene.load()?;
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => ArtifactConfig::default(),
    };
    if let Some(i) = a.interp {
        cfg.interp_count = i;
    }
    let dense = GaussianCloud::load(&a.dense)?;
    let mut sparse = Vec::with_capacity(a.sparse.len());
    for spec in &a.sparse {
        let (m, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--sparse expects M=path, got {spec:?}")))?;
        let m: usize = m.parse().map_err(|_| Error::Config(format!("bad M in {spec:?}")))?;
        sparse.push((m, GaussianCloud::load(path)?));
    }
    let pool = load_instruction_pool(&a.instructions)?;
    let views = a.views.clone().unwrap_or_else(|| (0..scene.len()).collect());
    check_indices(&views, scene.len())?;
    let cams: Vec<_> = views.iter().map(|&i| scene.poses[i].clone()).collect();
    let manifest = generate_artifact_pairs(&dense, &sparse, &cams, &cfg, &pool, seed, Some(&a.out))?;
    let path = a.out.join("manifest.jsonl");
    write_manifest(&path, &manifest)?;
    Ok(json!({
        "cameras": cams.len(),
        "interp_count": cfg.interp_count,
        "m_values": sparse.iter().map(|(m, _)| *m).collect::<Vec<_>>(),
        "triplets": manifest.len(),
        "manifest": path,
    }))
}

fn render_views(a: &RenderCmd) -> Result<Value> {
    let scene = a.scene.load()?;
    let cloud = GaussianCloud::load(&a.cloud)?;
    let bg = Vector3::new(a.background[0], a.background[1], a.background[2]);
    let views = a.views.clone().unwrap_or_else(|| (0..scene.len()).collect());
    check_indices(&views, scene.len())?;
    let mut written = Vec::with_capacity(views.len());
    for &i in &views {
        let pose = &scene.poses[i];
        let out = render(&cloud, pose, bg);
        let name = png_name(&pose.name);
        save_raster(a.out.join(&name), &out.color.to_f32())?;
        save_raster(a.out.join(depth_file_name(&pose.name)), &out.depth.to_f32())?;
        save_raster(a.out.join(format!("{}.alpha.fras", stem(&pose.name))), &out.alpha.to_f32())?;
        written.push(name);
    }
    Ok(json!({ "rendered": written, "out": a.out }))
}

fn stem(name: &str) -> String {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name).to_string()
}

fn png_name(name: &str) -> String {
    format!("{}.png", stem(name))
}

fn list_pngs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn eval(a: &Eval) -> Result<Value> {
    let names = list_pngs(&a.gt)?;
    if names.is_empty() {
        return Err(Error::Config(format!("no PNG images in {}", a.gt.display())));
    }
    let mut pairs = Vec::with_capacity(names.len());
    for n in &names {
        let gt = load_raster(a.gt.join(n))?.to_f64();
        let pred = load_raster(a.pred.join(n))?.to_f64();
        pairs.push((n.clone(), pred, gt));
    }
    let report = evaluate(pairs.iter().map(|(n, p, g)| (n.clone(), p, g)))?;
    to_value(&report)
}

fn export_masks(a: &ExportMasks, seed: u64) -> Result<Value> {
    if let Some(rects) = a.rects {
        let mode: MaskMode = a.mode.parse()?;
        let mut written = Vec::with_capacity(a.count);
        let mut area = 0.0;
        for i in 0..a.count {
            let mask = random_rect_masks(a.width, a.height, rects, mode, seed.wrapping_add(i as u64))?;
            area += crate::render::masked_fraction(&mask);
            let name = format!("rect_{i:05}.png");
            save_raster(a.out.join(&name), &mask)?;
            written.push(name);
        }
        return Ok(json!({ "masks": written, "mean_masked_fraction": area / a.count.max(1) as f64 }));
    }
    let (Some(scene_dir), Some(cloud_path)) = (&a.scene, &a.cloud) else {
        return Err(Error::Config("export-masks needs --scene and --cloud, or --rects".into()));
    };
    let scene = load_scene_dir(scene_dir)?.downscaled(a.max_size)?;
    let cloud = GaussianCloud::load(cloud_path)?;
    let mut written = Vec::with_capacity(scene.len());
    let mut fractions = Vec::with_capacity(scene.len());
    for pose in &scene.poses {
        let mask = opacity_mask(&render(&cloud, pose, Vector3::zeros()).alpha, a.tau)?;
        fractions.push(crate::render::masked_fraction(&mask));
        let name = format!("{}.mask.png", stem(&pose.name));
        save_raster(a.out.join(&name), &mask)?;
        written.push(name);
    }
    Ok(json!({ "masks": written, "masked_fraction": fractions, "tau": a.tau }))
}

fn make_toy(a: &MakeToy, seed: u64) -> Result<Value> {
    let cfg = ToySceneConfig { views: a.views, size: a.size, gaussians: a.gaussians, seed, ..Default::default() };
    let toy = toy_scene(&cfg)?;
    save_scene_dir(&a.out, &toy.scene)?;
    toy.truth.save(a.out.join("truth.gcld"))?;
    Ok(json!({ "views": toy.scene.len(), "points": toy.scene.point_cloud.len(), "out": a.out }))
}
