//! Implementations behind the `crossfuse` binary, kept callable as a library
//! so integration tests can drive them directly.

// Same convention as the core crate: !(x > 0.0) also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crossfuse::io::{
    format_sig6, load_grid, read_float_map, read_mask, save_grid, save_mesh, write_csv,
    SceneDescription,
};
use crossfuse::{
    convergence_curves, external_provider, extract_blocky_surface, fit_mean_baseline,
    integrate_frame, metrics_2d, metrics_3d, occupancy_from_grid, predict_mean,
    solid_voxelize, ConvergenceRow, FrameBundle, FusionConfig, FusionMode,
    GridFrame, Metrics2D, Metrics3D, Scene, TsdfGrid,
};

/// Flag-and-file configuration shared by every fusing subcommand. This is
/// the JSON schema `--config` files use and reports echo back.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub tau: f64,
    pub voxel_size: f32,
    pub mode: Mode,
    pub threshold: f32,
    pub max_weight: u32,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            tau: 0.03,
            voxel_size: 0.01,
            mode: Mode::Enhanced,
            threshold: 0.0,
            max_weight: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Enhanced,
    DepthOnly,
}

impl From<Mode> for FusionMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Enhanced => FusionMode::Enhanced,
            Mode::DepthOnly => FusionMode::DepthOnly,
        }
    }
}

impl ToolConfig {
    /// Validates the merged values by building the fusion config they imply.
    pub fn validate(&self) -> Result<()> {
        self.fusion(self.mode.into())?;
        if !(self.voxel_size > 0.0) {
            bail!("voxel size must be positive, got {}", self.voxel_size);
        }
        Ok(())
    }

    fn fusion(&self, mode: FusionMode) -> Result<FusionConfig> {
        Ok(FusionConfig::new(
            self.tau,
            mode,
            self.max_weight,
            self.threshold,
        )?)
    }
}

#[derive(Debug, Clone)]
pub enum ProviderChoice {
    Oracle,
    /// Fit the mean baseline on this half-open frame range.
    Mean {
        train: (usize, usize),
    },
    External {
        manifest: PathBuf,
    },
}

impl ProviderChoice {
    fn name(&self) -> &'static str {
        match self {
            ProviderChoice::Oracle => "oracle",
            ProviderChoice::Mean { .. } => "mean",
            ProviderChoice::External { .. } => "external",
        }
    }
}

fn load_scene(path: &Path) -> Result<(SceneDescription, Scene)> {
    let desc = SceneDescription::load(path)?;
    let scene = Scene::from_description(&desc)?;
    Ok((desc, scene))
}

/// Default grid placement: the union object bounding box inflated by 4 tau.
fn grid_for_scene(scene: &Scene, cfg: &ToolConfig) -> Result<GridFrame> {
    let (lo, hi) = scene
        .object_bounds()
        .context("scene has no object geometry to bound the grid")?;
    let margin = 4.0 * cfg.tau;
    let pad = nalgebra::Vector3::repeat(margin);
    Ok(GridFrame::covering(lo - pad, hi + pad, cfg.voxel_size)?)
}

/// Renders depth/thickness/mask triples for the trajectory (or a sub-range)
/// into `out`. Returns the number of frames written.
pub fn cmd_render(
    scene_path: &Path,
    out: &Path,
    frames: Option<(usize, usize)>,
) -> Result<usize> {
    let (desc, scene) = load_scene(scene_path)?;
    let (start, end) = frames.unwrap_or((0, desc.trajectory.len()));
    if start >= end || end > desc.trajectory.len() {
        bail!(
            "frame range {start}..{end} outside trajectory of {} poses",
            desc.trajectory.len()
        );
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut warnings = 0u64;
    for view in start..end {
        let rendered = crossfuse::render_view(&scene, view)?;
        warnings += rendered.warnings;
        FrameBundle::new(
            rendered.depth,
            rendered.thickness,
            rendered.masks,
            desc.trajectory[view],
            view,
        )?
        .save(out)?;
    }
    if warnings > 0 {
        eprintln!("warning: {warnings} pixels had no matching back surface");
    }
    Ok(end - start)
}

/// Integrates saved frames along the scene trajectory into a grid dump.
pub fn cmd_fuse(
    scene_path: &Path,
    frames_dir: &Path,
    out: &Path,
    cfg: &ToolConfig,
) -> Result<TsdfGrid> {
    let (desc, scene) = load_scene(scene_path)?;
    let fusion = cfg.fusion(cfg.mode.into())?;
    let mut grid = TsdfGrid::new(grid_for_scene(&scene, cfg)?);
    for (index, pose) in desc.trajectory.iter().enumerate() {
        let frame = FrameBundle::load(frames_dir, index, *pose)?;
        frame.check_intrinsics(&desc.camera)?;
        let stats = integrate_frame(&mut grid, &frame, &desc.camera, &fusion)?;
        println!("frame {index}: {} voxels updated", stats.voxels_updated);
    }
    save_grid(out, &grid)?;
    Ok(grid)
}

/// Binarizes a grid dump and writes its blocky surface as OBJ. Returns the
/// triangle count.
pub fn cmd_extract(grid_path: &Path, out: &Path, cfg: &ToolConfig) -> Result<usize> {
    let grid = load_grid(grid_path)?;
    let fusion = cfg.fusion(cfg.mode.into())?;
    let mesh = extract_blocky_surface(&occupancy_from_grid(&grid, &fusion));
    save_mesh(out, &mesh)?;
    Ok(mesh.triangles.len())
}

/// Scores a predicted thickness image against rendered ground truth.
pub fn cmd_eval2d(
    pred: &Path,
    gt: &Path,
    mask: &Path,
    out_csv: Option<&Path>,
) -> Result<Metrics2D> {
    let m = metrics_2d(&read_float_map(pred)?, &read_float_map(gt)?, &read_mask(mask)?)?;
    println!(
        "abs_rel={} sqr_rel={} rmse_linear={} rmse_log={} n_pixels={}",
        format_sig6(m.abs_rel),
        format_sig6(m.sqr_rel),
        format_sig6(m.rmse_linear),
        format_sig6(m.rmse_log),
        m.n_pixels
    );
    if let Some(path) = out_csv {
        write_csv(
            path,
            &["abs_rel", "sqr_rel", "rmse_linear", "rmse_log", "n_pixels"],
            &[vec![
                format_sig6(m.abs_rel),
                format_sig6(m.sqr_rel),
                format_sig6(m.rmse_linear),
                format_sig6(m.rmse_log),
                m.n_pixels.to_string(),
            ]],
        )?;
    }
    Ok(m)
}

/// Scores a fused grid dump against the scene's solid voxelization, computed
/// on the grid's own frame so the comparison is voxel-aligned.
pub fn cmd_eval3d(
    grid_path: &Path,
    scene_path: &Path,
    cfg: &ToolConfig,
    out_csv: Option<&Path>,
) -> Result<Metrics3D> {
    let grid = load_grid(grid_path)?;
    let (_, scene) = load_scene(scene_path)?;
    let objects: Vec<_> = scene
        .instances
        .iter()
        .map(|inst| (inst.id, &inst.mesh))
        .collect();
    let gt = solid_voxelize(&objects, grid.frame)?;
    let fusion = cfg.fusion(cfg.mode.into())?;
    let m = metrics_3d(&occupancy_from_grid(&grid, &fusion), &gt)?;
    println!(
        "iou={} precision={} recall={} tp={} fp={} fn={} tn={}",
        format_sig6(m.iou),
        format_sig6(m.precision),
        format_sig6(m.recall),
        m.true_positives,
        m.false_positives,
        m.false_negatives,
        m.true_negatives
    );
    if let Some(path) = out_csv {
        write_csv(
            path,
            &["iou", "precision", "recall", "tp", "fp", "fn", "tn"],
            &[vec![
                format_sig6(m.iou),
                format_sig6(m.precision),
                format_sig6(m.recall),
                m.true_positives.to_string(),
                m.false_positives.to_string(),
                m.false_negatives.to_string(),
                m.true_negatives.to_string(),
            ]],
        )?;
    }
    Ok(m)
}

/// Writes the bundled demo scenes. Returns the scene file paths.
pub fn cmd_demo(out: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![
        crossfuse::demo::write_tabletop_scene(out)?,
        crossfuse::demo::write_lshape_scene(out)?,
    ])
}

pub struct PipelineSummary {
    pub enhanced: Vec<ConvergenceRow>,
    pub depth_only: Vec<ConvergenceRow>,
    pub report: PathBuf,
}

fn report_row(mode: &str, frame: String, row: &ConvergenceRow) -> Vec<String> {
    let m = &row.metrics;
    vec![
        mode.to_owned(),
        frame,
        format_sig6(m.iou),
        format_sig6(m.precision),
        format_sig6(m.recall),
        m.true_positives.to_string(),
        m.false_positives.to_string(),
        m.false_negatives.to_string(),
        m.true_negatives.to_string(),
        format_sig6(row.mean_iou),
        format_sig6(row.mean_precision),
        format_sig6(row.mean_recall),
    ]
}

/// Full comparison run: render, predict thickness, fuse with and without it,
/// score both against the solid voxelization, and write grids, meshes, and a
/// deterministic report. Timings go to a separate file so repeated runs stay
/// byte-identical elsewhere.
pub fn cmd_pipeline(
    scene_path: &Path,
    out: &Path,
    provider: &ProviderChoice,
    cfg: &ToolConfig,
) -> Result<PipelineSummary> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut timings: Vec<(String, u128)> = Vec::new();
    let mut timed = |name: &str, start: Instant| {
        timings.push((name.to_owned(), start.elapsed().as_millis()));
    };

    let t = Instant::now();
    let (desc, scene) = load_scene(scene_path).context("pipeline stage: load scene")?;
    let mut frames = Vec::with_capacity(desc.trajectory.len());
    let mut warnings = 0u64;
    for view in 0..desc.trajectory.len() {
        let rendered = crossfuse::render_view(&scene, view)
            .with_context(|| format!("pipeline stage: render view {view}"))?;
        warnings += rendered.warnings;
        frames.push(FrameBundle::new(
            rendered.depth,
            rendered.thickness,
            rendered.masks,
            desc.trajectory[view],
            view,
        )?);
    }
    if warnings > 0 {
        eprintln!("warning: {warnings} pixels had no matching back surface");
    }
    timed("render", t);

    let t = Instant::now();
    let frames = match provider {
        ProviderChoice::Oracle => frames,
        ProviderChoice::Mean { train: (a, b) } => {
            if *a >= *b || *b > frames.len() {
                bail!(
                    "training range {a}..{b} outside the {}-frame sequence",
                    frames.len()
                );
            }
            let model = fit_mean_baseline(&frames[*a..*b])
                .context("pipeline stage: fit mean baseline")?;
            println!("mean baseline: {} m", format_sig6(model.mean_t));
            frames
                .into_iter()
                .map(|f| {
                    let thickness = predict_mean(&model, &f.masks);
                    Ok(FrameBundle::new(f.depth, thickness, f.masks, f.pose, f.frame_index)?)
                })
                .collect::<Result<Vec<_>>>()?
        }
        ProviderChoice::External { manifest } => frames
            .into_iter()
            .map(|f| {
                let thickness = external_provider(manifest, f.frame_index, &f.depth, &f.masks)
                    .with_context(|| {
                        format!("pipeline stage: external thickness for frame {}", f.frame_index)
                    })?;
                Ok(FrameBundle::new(f.depth, thickness, f.masks, f.pose, f.frame_index)?)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    timed("provider", t);

    let t = Instant::now();
    let grid_frame = grid_for_scene(&scene, cfg)?;
    let objects: Vec<_> = scene
        .instances
        .iter()
        .map(|inst| (inst.id, &inst.mesh))
        .collect();
    let gt = solid_voxelize(&objects, grid_frame).context("pipeline stage: voxelize")?;
    save_mesh(&out.join("gt.obj"), &extract_blocky_surface(&gt))?;
    timed("voxelize", t);

    let mut summary: Vec<(&str, Vec<ConvergenceRow>)> = Vec::new();
    for mode in [FusionMode::Enhanced, FusionMode::DepthOnly] {
        let t = Instant::now();
        let name = match mode {
            FusionMode::Enhanced => "enhanced",
            FusionMode::DepthOnly => "depth_only",
        };
        let fusion = cfg.fusion(mode)?;
        let mut grid = TsdfGrid::new(grid_frame);
        let rows = convergence_curves(&frames, &desc.camera, &mut grid, &gt, &fusion)
            .with_context(|| format!("pipeline stage: fuse {name}"))?;
        save_grid(&out.join(format!("{name}.grid")), &grid)?;
        let mesh = extract_blocky_surface(&occupancy_from_grid(&grid, &fusion));
        save_mesh(&out.join(format!("{name}.obj")), &mesh)?;
        if let Some(last) = rows.last() {
            println!(
                "{name}: iou={} precision={} recall={}",
                format_sig6(last.metrics.iou),
                format_sig6(last.metrics.precision),
                format_sig6(last.metrics.recall)
            );
        }
        summary.push((name, rows));
        timed(name, t);
    }

    let t = Instant::now();
    let mut rows = Vec::new();
    for (name, mode_rows) in &summary {
        for row in mode_rows {
            rows.push(report_row(name, row.frame_index.to_string(), row));
        }
        if let Some(last) = mode_rows.last() {
            rows.push(report_row(name, "final".to_owned(), last));
        }
    }
    let report = out.join("report.csv");
    write_csv(
        &report,
        &[
            "mode",
            "frame",
            "iou",
            "precision",
            "recall",
            "true_positives",
            "false_positives",
            "false_negatives",
            "true_negatives",
            "mean_iou",
            "mean_precision",
            "mean_recall",
        ],
        &rows,
    )?;
    // Serialized as a typed struct so the f32 voxel size keeps its shortest
    // decimal form instead of the padded f64 conversion a Value would store.
    #[derive(Serialize)]
    struct ConfigEcho<'a> {
        config: &'a ToolConfig,
        provider: &'a str,
        scene: String,
        frames: usize,
    }
    let echo = ConfigEcho {
        config: cfg,
        provider: provider.name(),
        scene: scene_path.display().to_string(),
        frames: frames.len(),
    };
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&echo)? + "\n",
    )?;
    timed("report", t);
    write_csv(
        &out.join("timings.csv"),
        &["stage", "milliseconds"],
        &timings
            .iter()
            .map(|(s, ms)| vec![s.clone(), ms.to_string()])
            .collect::<Vec<_>>(),
    )?;

    let mut it = summary.into_iter();
    let enhanced = it.next().map(|(_, r)| r).unwrap_or_default();
    let depth_only = it.next().map(|(_, r)| r).unwrap_or_default();
    Ok(PipelineSummary {
        enhanced,
        depth_only,
        report,
    })
}
