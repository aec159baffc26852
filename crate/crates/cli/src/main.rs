mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use config::{InpaintFlags, TextureFlags, ViewFlags};
use serde::Serialize;
use texrecon::inpaint::InpaintConfig;
use texrecon::mesh::{ColoredPointCloud, TriangleMesh};
use texrecon::pcio::{read_mesh, read_point_cloud, read_textured_mesh, PointFormat};
use texrecon::pipeline::{
    ablate, evaluate, reconstruct, stage_inpaint, stage_project, stage_unproject, with_jobs, AblationSweep, EvalParams, ReconstructConfig,
};
use texrecon::raster::TextureAtlas;
use texrecon::synthbench::{run_slab_benchmark, SlabBenchParams};
use texrecon::unproject::Strategy;
use texrecon::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "texrecon", version, about = "Textured mesh reconstruction from colored point clouds")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0, global = true)]
    jobs: usize,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GeometrySource {
    DepthFusion,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblateGeometry {
    /// Texture the ground-truth mesh.
    Gt,
    DepthFusion,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Benchmark {
    StackedSlabs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: cloud in, textured OBJ + atlas PNG + manifest out.
    #[command(group(ArgGroup::new("geometry_source").required(true).args(["mesh", "geometry"])))]
    Reconstruct {
        /// Colored point cloud (.ply, .obj or .xyz).
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Untextured (or UV-mapped) mesh in the cloud's frame.
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Extract geometry from the cloud instead of reading a mesh.
        #[arg(long, value_enum)]
        geometry: Option<GeometrySource>,
        #[command(flatten)]
        view: ViewFlags,
        #[command(flatten)]
        inpaint: InpaintFlags,
        #[command(flatten)]
        texture: TextureFlags,
        /// Write intermediate images, masks, depth maps and the TSDF volume.
        #[arg(long)]
        debug: bool,
    },
    /// Visibility and splatting; writes a view set directory.
    Project {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Cull points hidden behind this mesh and mask by its silhouette.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[command(flatten)]
        view: ViewFlags,
    },
    /// Fills the sparse images of a view set.
    Inpaint {
        views_dir: PathBuf,
        /// Defaults to writing next to the input.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        inpaint: InpaintFlags,
    },
    /// Textures a mesh from the dense images of a view set.
    Unproject {
        views_dir: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        depth_epsilon: Option<f64>,
        #[command(flatten)]
        texture: TextureFlags,
        #[arg(long)]
        debug: bool,
    },
    /// Scores a textured mesh against a textured ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// JSON report path; printed to stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Directory for the per-view prediction and ground-truth renders.
        #[arg(long)]
        renders: Option<PathBuf>,
        #[arg(long, default_value_t = EvalParams::default().resolution)]
        eval_resolution: usize,
        #[arg(long, default_value_t = EvalParams::default().samples)]
        samples: usize,
    },
    /// Robustness sweep over noise, point count and strategy; writes CSV.
    #[command(group(ArgGroup::new("scene").required(true).args(["gt", "benchmark"])))]
    Ablate {
        /// Textured ground-truth OBJ to sample clouds from.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Built-in synthetic benchmark instead of a sweep.
        #[arg(long, value_enum)]
        benchmark: Option<Benchmark>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_delimiter = ',')]
        noise: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        #[arg(long, value_enum, default_value = "gt")]
        geometry: AblateGeometry,
        /// Image-space dilation of the occluder for the slab benchmark.
        #[arg(long, default_value_t = SlabBenchParams::default().dilate_img_px)]
        dilate_img_px: usize,
        #[command(flatten)]
        view: ViewFlags,
        #[command(flatten)]
        inpaint: InpaintFlags,
        #[command(flatten)]
        texture: TextureFlags,
    },
}

/// Process exit status for an error.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Io(_) | Error::IoPath { .. } | Error::Format { .. } | Error::Input(_) | Error::Image(_) | Error::Json(_) => 3,
        Error::Remote { .. } => 4,
        _ => 5,
    }
}

fn read_cloud(path: &Path) -> Result<ColoredPointCloud> {
    let format = PointFormat::from_path(path).ok_or_else(|| Error::input(format!("{}: unknown point cloud extension", path.display())))?;
    read_point_cloud(path, format)
}

fn read_textured(path: &Path) -> Result<(TriangleMesh, TextureAtlas)> {
    let (mesh, atlas) = read_textured_mesh(path)?;
    let atlas = atlas.ok_or_else(|| Error::input(format!("{}: no texture referenced", path.display())))?;
    if mesh.uv_corners.is_none() {
        return Err(Error::input(format!("{}: mesh has no UVs", path.display())));
    }
    Ok((mesh, atlas))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io_path(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io_path(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg: ReconstructConfig = config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let jobs = cli.jobs;
    match cli.command {
        Command::Reconstruct {
            input,
            output,
            mesh,
            geometry,
            view,
            inpaint,
            texture,
            debug,
        } => {
            view.apply(&mut cfg);
            inpaint.apply(&mut cfg);
            texture.apply(&mut cfg);
            cfg.debug |= debug;
            let cloud = read_cloud(&input)?;
            let mut inputs = vec![display(&input)];
            let mesh = match (mesh, geometry) {
                (Some(path), _) => {
                    inputs.push(display(&path));
                    Some(read_mesh(&path)?)
                }
                (None, Some(GeometrySource::DepthFusion)) => None,
                (None, None) => unreachable!("clap enforces a geometry source"),
            };
            let r = reconstruct(&cloud, mesh.as_ref(), &cfg, jobs, Some(&output), inputs)?;
            log::info!(
                "wrote {} ({} faces, {} never-visible texels)",
                output.display(),
                r.manifest.faces,
                r.manifest.never_visible_texels
            );
        }
        Command::Project { input, output, mesh, view } => {
            view.apply(&mut cfg);
            let cloud = read_cloud(&input)?;
            let mesh = mesh.as_deref().map(read_mesh).transpose()?;
            with_jobs(jobs, || stage_project(&cloud, mesh.as_ref(), &cfg, &output))?.map_err(|e| e.in_stage("project"))?;
        }
        Command::Inpaint { views_dir, output, inpaint } => {
            inpaint.apply(&mut cfg);
            let out = output.unwrap_or_else(|| views_dir.clone());
            let icfg: InpaintConfig = cfg.inpaint.clone();
            let warnings = with_jobs(jobs, || stage_inpaint(&views_dir, &out, &icfg))?.map_err(|e| e.in_stage("inpaint"))?;
            for w in warnings {
                log::warn!("{w}");
            }
        }
        Command::Unproject {
            views_dir,
            mesh,
            output,
            depth_epsilon,
            texture,
            debug,
        } => {
            texture.apply(&mut cfg);
            if let Some(e) = depth_epsilon {
                cfg.depth_epsilon = e;
            }
            cfg.debug |= debug;
            let mesh = read_mesh(&mesh)?;
            with_jobs(jobs, || stage_unproject(&mesh, &views_dir, &cfg, &output))?.map_err(|e| e.in_stage("unproject"))?;
        }
        Command::Eval {
            pred,
            gt,
            output,
            renders,
            eval_resolution,
            samples,
        } => {
            let (pm, pa) = read_textured(&pred)?;
            let (gm, ga) = read_textured(&gt)?;
            let params = EvalParams {
                resolution: eval_resolution,
                samples,
                seed: cli.seed.unwrap_or(EvalParams::default().seed),
                ..Default::default()
            };
            let (report, pairs) = with_jobs(jobs, || evaluate((&pm, &pa), (&gm, &ga), &params))?.map_err(|e| e.in_stage("eval"))?;
            if let Some(dir) = renders {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io_path(&dir, e))?;
                for (k, (p, g)) in pairs.iter().enumerate() {
                    p.write_png(dir.join(format!("view_{k:02}_pred.png")))?;
                    g.write_png(dir.join(format!("view_{k:02}_gt.png")))?;
                }
            }
            write_json(&report, output.as_deref())?;
        }
        Command::Ablate {
            gt,
            benchmark,
            output,
            noise,
            points,
            strategies,
            geometry,
            dilate_img_px,
            view,
            inpaint,
            texture,
        } => {
            view.apply(&mut cfg);
            inpaint.apply(&mut cfg);
            texture.apply(&mut cfg);
            let defaults = AblationSweep::default();
            let strategies = strategies.unwrap_or(defaults.strategies.clone());
            if let Some(Benchmark::StackedSlabs) = benchmark {
                let mut params = SlabBenchParams {
                    dilate_img_px,
                    epsilon: cfg.depth_epsilon,
                    ..Default::default()
                };
                params.scene.seed = cfg.seed;
                if let Some(d) = texture.dilate_px {
                    params.dilate_px = d;
                }
                let rows = with_jobs(jobs, || run_slab_benchmark(&params, &strategies))?.map_err(|e| e.in_stage("ablate"))?;
                return write_csv(&rows, &output);
            }
            let gt = gt.expect("clap enforces a scene");
            let (gm, ga) = read_textured(&gt)?;
            let sweep = AblationSweep {
                noise: noise.unwrap_or(defaults.noise),
                points: points.unwrap_or(defaults.points),
                strategies,
                gt_mesh: matches!(geometry, AblateGeometry::Gt),
            };
            let params = EvalParams {
                seed: cfg.seed,
                ..Default::default()
            };
            let rows = with_jobs(jobs, || ablate(&gm, &ga, &cfg, &sweep, &params))?.map_err(|e| e.in_stage("ablate"))?;
            write_csv(&rows, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
