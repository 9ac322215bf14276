use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crossfuse_cli::{
    cmd_demo, cmd_eval2d, cmd_eval3d, cmd_extract, cmd_fuse, cmd_pipeline, cmd_render, Mode,
    ProviderChoice, ToolConfig,
};

#[derive(Parser)]
#[command(
    name = "crossfuse",
    version,
    about = "Render depth and object thickness, fuse them into a TSDF, and score the result"
)]
struct Cli {
    /// Worker threads for all parallel stages. Default: one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigFlags {
    /// Truncation distance in meters.
    #[arg(long)]
    tau: Option<f64>,
    /// Voxel edge length in meters.
    #[arg(long)]
    voxel_size: Option<f32>,
    /// Fusion mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Occupancy threshold on phi, in (-1, 1).
    #[arg(long)]
    threshold: Option<f32>,
    /// Per-voxel weight cap.
    #[arg(long)]
    max_weight: Option<u32>,
    /// JSON file with the same fields; explicit flags still win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Enhanced,
    DepthOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Oracle,
    Mean,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled demo scenes into a directory.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render depth/thickness/mask frames for the scene trajectory.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Half-open view range `a..b`. Default: the whole trajectory.
        #[arg(long)]
        frames: Option<String>,
    },
    /// Fuse rendered frames into a TSDF grid dump.
    Fuse {
        #[arg(long)]
        scene: PathBuf,
        /// Directory holding the rendered frame files.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Extract the blocky occupancy surface of a grid dump as OBJ.
    Extract {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Score a predicted thickness image against ground truth.
    Eval2d {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a fused grid against the scene's solid voxelization.
    Eval3d {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Render, predict thickness, fuse both modes, and write a report.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        provider: ProviderArg,
        /// Patch manifest CSV (required for --provider external).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Half-open training range `a..b` (required for --provider mean).
        #[arg(long)]
        train_frames: Option<String>,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn parse_range(text: &str) -> Result<(usize, usize), String> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 0..10, got {text}"))?;
    let a = a.parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b = b.parse().map_err(|_| format!("bad range end {b:?}"))?;
    Ok((a, b))
}

/// Defaults, then the config file, then explicit flags.
fn merge_config(flags: &ConfigFlags) -> Result<ToolConfig, ExitCode> {
    let mut cfg = ToolConfig::default();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_DATA)
        })?;
        cfg = serde_json::from_str(&text).map_err(|e| {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_DATA)
        })?;
    }
    if let Some(tau) = flags.tau {
        cfg.tau = tau;
    }
    if let Some(vs) = flags.voxel_size {
        cfg.voxel_size = vs;
    }
    if let Some(mode) = flags.mode {
        cfg.mode = match mode {
            ModeArg::Enhanced => Mode::Enhanced,
            ModeArg::DepthOnly => Mode::DepthOnly,
        };
    }
    if let Some(threshold) = flags.threshold {
        cfg.threshold = threshold;
    }
    if let Some(max_weight) = flags.max_weight {
        cfg.max_weight = max_weight;
    }
    if let Err(e) = cfg.validate() {
        return Err(usage_error(&e.to_string()));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    let data_error = |e: anyhow::Error| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_DATA)
    };
    match cli.command {
        Command::Demo { out } => {
            let paths = cmd_demo(&out).map_err(data_error)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Render { scene, out, frames } => {
            let range = frames
                .as_deref()
                .map(parse_range)
                .transpose()
                .map_err(|m| usage_error(&m))?;
            let n = cmd_render(&scene, &out, range).map_err(data_error)?;
            println!("rendered {n} frames into {}", out.display());
        }
        Command::Fuse {
            scene,
            frames,
            out,
            cfg,
        } => {
            let cfg = merge_config(&cfg)?;
            cmd_fuse(&scene, &frames, &out, &cfg).map_err(data_error)?;
            println!("wrote {}", out.display());
        }
        Command::Extract { grid, out, cfg } => {
            let cfg = merge_config(&cfg)?;
            let triangles = cmd_extract(&grid, &out, &cfg).map_err(data_error)?;
            println!("wrote {} ({triangles} triangles)", out.display());
        }
        Command::Eval2d {
            pred,
            gt,
            mask,
            out,
        } => {
            cmd_eval2d(&pred, &gt, &mask, out.as_deref()).map_err(data_error)?;
        }
        Command::Eval3d {
            grid,
            scene,
            out,
            cfg,
        } => {
            let cfg = merge_config(&cfg)?;
            cmd_eval3d(&grid, &scene, &cfg, out.as_deref()).map_err(data_error)?;
        }
        Command::Pipeline {
            scene,
            out,
            provider,
            manifest,
            train_frames,
            cfg,
        } => {
            let cfg = merge_config(&cfg)?;
            let provider = match provider {
                ProviderArg::Oracle => ProviderChoice::Oracle,
                ProviderArg::Mean => {
                    let text = train_frames
                        .as_deref()
                        .ok_or_else(|| usage_error("--provider mean needs --train-frames a..b"))?;
                    let train = parse_range(text).map_err(|m| usage_error(&m))?;
                    ProviderChoice::Mean { train }
                }
                ProviderArg::External => {
                    let manifest = manifest
                        .ok_or_else(|| usage_error("--provider external needs --manifest"))?;
                    ProviderChoice::External { manifest }
                }
            };
            cmd_pipeline(&scene, &out, &provider, &cfg).map_err(data_error)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            // Help and version belong on stdout, real usage errors on stderr.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return usage_error("--workers must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
