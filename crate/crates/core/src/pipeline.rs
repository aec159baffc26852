//! The project–inpaint–unproject pipeline, its per-stage building blocks,
//! evaluation against a textured ground truth, and the robustness sweep.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{make_rig, CameraRig, RigKind, View, DEFAULT_RADIUS, DEFAULT_RESOLUTION};
use crate::error::{Error, Result};
use crate::geomex::{marching_cubes, simplify_qem, taubin_smooth, tsdf_fuse, DepthObservation, GeometryParams};
use crate::inpaint::{inpaint, inpaint_depth, InpaintConfig};
use crate::mesh::{ColoredPointCloud, Normalization, TriangleMesh};
use crate::metrics::{compare_renders, eval_views, geometry_metrics, GeometryReport, RenderReport, DEFAULT_FSCORE_TAU, METRIC_SAMPLES, METRIC_SEED};
use crate::pcio::{add_gaussian_noise, sample_points, subsample, write_textured_mesh};
use crate::projection::{foreground_mask, render_mesh_depth, splat_points, DEFAULT_CLOSE_ITER, DEFAULT_ERODE_ITER, DEFAULT_MASK_SPLAT_PX, DEFAULT_SPLAT_PX};
use crate::raster::{DepthMap, Mask, RgbImage, TextureAtlas};
use crate::unproject::{chosen_view_image, compute_view_layers, default_dilate_px, detect_all_borders, layer_masks, paint, PaintParams, Strategy, DEFAULT_REFINE_STEP};
use crate::uvatlas::{rasterize_texels, unwrap, Chart, TexelTable, UnwrapParams};
use crate::visibility::{depth_cull, hidden_point_removal, DEFAULT_DEPTH_EPSILON, DEFAULT_RADIUS_FACTOR};

/// Every tunable of a reconstruction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub views: RigKind,
    pub resolution: usize,
    pub camera_radius: f64,
    pub hpr_radius_factor: f64,
    pub depth_epsilon: f64,
    pub splat_px: usize,
    pub mask_splat_px: usize,
    pub close_iter: usize,
    pub erode_iter: usize,
    pub inpaint: InpaintConfig,
    pub geometry: GeometryParams,
    pub atlas_res: usize,
    pub gutter_px: usize,
    pub chart_angle_deg: f64,
    /// Border dilation in texels; scaled from the atlas size when unset.
    pub dilate_px: Option<usize>,
    pub unproject: Strategy,
    pub refine_iters: usize,
    pub refine_step: f64,
    pub seed: u64,
    pub debug: bool,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        let unwrap = UnwrapParams::default();
        ReconstructConfig {
            views: RigKind::Fib8,
            resolution: DEFAULT_RESOLUTION,
            camera_radius: DEFAULT_RADIUS,
            hpr_radius_factor: DEFAULT_RADIUS_FACTOR,
            depth_epsilon: DEFAULT_DEPTH_EPSILON,
            splat_px: DEFAULT_SPLAT_PX,
            mask_splat_px: DEFAULT_MASK_SPLAT_PX,
            close_iter: DEFAULT_CLOSE_ITER,
            erode_iter: DEFAULT_ERODE_ITER,
            inpaint: InpaintConfig::default(),
            geometry: GeometryParams::default(),
            atlas_res: unwrap.atlas_res,
            gutter_px: unwrap.gutter_px,
            chart_angle_deg: unwrap.max_angle_deg,
            dilate_px: None,
            unproject: Strategy::Nbf,
            refine_iters: 0,
            refine_step: DEFAULT_REFINE_STEP,
            seed: 0,
            debug: false,
        }
    }
}

impl ReconstructConfig {
    pub fn dilate_px(&self) -> usize {
        self.dilate_px.unwrap_or_else(|| default_dilate_px(self.atlas_res))
    }

    pub fn rig(&self) -> Result<CameraRig> {
        make_rig(self.views, self.resolution, self.camera_radius)
    }

    fn unwrap_params(&self) -> UnwrapParams {
        UnwrapParams {
            atlas_res: self.atlas_res,
            gutter_px: self.gutter_px,
            max_angle_deg: self.chart_angle_deg,
        }
    }

    fn paint_params(&self, strategy: Strategy) -> PaintParams {
        PaintParams {
            strategy,
            seed: Some(self.seed),
            refine_iters: self.refine_iters,
            refine_step: self.refine_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Times named stages and tags their errors.
#[derive(Default)]
pub struct StageLog {
    pub records: Vec<StageRecord>,
}

impl StageLog {
    pub fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        let start = Instant::now();
        let out = f();
        self.records.push(StageRecord {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            ok: out.is_ok(),
            error: out.as_ref().err().map(|e| e.to_string()),
        });
        out.map_err(|e| e.in_stage(name))
    }
}

/// Record of a run, enough to repeat it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: ReconstructConfig,
    pub jobs: usize,
    pub inputs: Vec<String>,
    pub normalization: Option<Normalization>,
    pub stages: Vec<StageRecord>,
    pub views: usize,
    pub inpainted_views: usize,
    pub inpaint_warnings: Vec<String>,
    pub geometry_source: String,
    pub faces: usize,
    pub charts: usize,
    pub texels: usize,
    pub never_visible_texels: usize,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(config: &ReconstructConfig, jobs: usize) -> Manifest {
        Manifest {
            tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            config: config.clone(),
            jobs,
            ..Default::default()
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io_path(path, e))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs `f` on a dedicated pool of `jobs` threads (0 = all cores).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::precondition(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Sparse projection of one view.
#[derive(Clone, Debug)]
pub struct ViewProjection {
    pub visible: Vec<usize>,
    pub sparse: RgbImage,
    pub sparse_depth: DepthMap,
    pub mask: Mask,
}

/// Hidden point removal and splatting per view. Without `mesh_depths` the
/// mask is the morphological foreground of the whole cloud; with them the
/// visible set is depth-culled against the mesh and the mask is the mesh
/// silhouette.
pub fn project_views(
    cloud: &ColoredPointCloud,
    views: &[View],
    mesh_depths: Option<&[DepthMap]>,
    cfg: &ReconstructConfig,
) -> Result<Vec<ViewProjection>> {
    views
        .par_iter()
        .enumerate()
        .map(|(k, view)| {
            let hpr = hidden_point_removal(&cloud.positions, view, cfg.hpr_radius_factor);
            if hpr.degenerate {
                log::warn!("view {k}: degenerate hull, all points kept");
            }
            let (visible, mask) = match mesh_depths {
                Some(depths) => {
                    let d = &depths[k];
                    let kept = depth_cull(&cloud.positions, &hpr.indices, view, d, cfg.depth_epsilon)?;
                    let (w, h) = d.dims();
                    let silhouette = Mask::from_vec(w, h, d.data().iter().map(|v| v.is_finite()).collect())?;
                    (kept, silhouette)
                }
                None => {
                    let mask = foreground_mask(&cloud.positions, view, cfg.mask_splat_px, cfg.close_iter, cfg.erode_iter)?;
                    (hpr.indices, mask)
                }
            };
            let pts: Vec<_> = visible.iter().map(|&i| cloud.positions[i]).collect();
            let cols: Vec<_> = visible.iter().map(|&i| cloud.colors[i]).collect();
            let (sparse, sparse_depth) = splat_points(&pts, &cols, view, cfg.splat_px)?;
            Ok(ViewProjection {
                visible,
                sparse: sparse.quantized(),
                sparse_depth,
                mask,
            })
        })
        .collect()
}

/// Dense images for every view, quantized to 8 bits like their PNG form.
pub fn inpaint_views(sparse: &[RgbImage], masks: &[Mask], cfg: &InpaintConfig) -> Result<(Vec<RgbImage>, Vec<String>)> {
    let filled = sparse
        .par_iter()
        .zip(masks)
        .enumerate()
        .map(|(k, (s, m))| inpaint(s, m, cfg).map_err(|e| e.in_stage(&format!("inpaint view {k}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let mut images = Vec::with_capacity(filled.len());
    for (k, f) in filled.into_iter().enumerate() {
        warnings.extend(f.warnings.into_iter().map(|w| format!("view {k}: {w}")));
        images.push(f.image.quantized());
    }
    Ok((images, warnings))
}

/// Depth-inpainting geometry: dense depth per view, TSDF fusion, marching
/// cubes, simplification and smoothing.
pub fn fuse_geometry(views: &[View], projections: &[ViewProjection], params: &GeometryParams, dump: Option<&Path>) -> Result<TriangleMesh> {
    let dense: Vec<DepthMap> = projections
        .par_iter()
        .map(|p| inpaint_depth(&p.sparse_depth, &p.mask))
        .collect::<Result<_>>()?;
    let obs: Vec<DepthObservation> = views
        .iter()
        .zip(&dense)
        .zip(projections)
        .map(|((view, depth), p)| DepthObservation { view, depth, mask: &p.mask })
        .collect();
    let vs = params.voxel_size();
    let vol = tsdf_fuse(&obs, params.resolution, -params.half_extent, params.half_extent, params.trunc_voxels * vs)?;
    if let Some(dir) = dump {
        vol.write_raw(&dir.join("tsdf.raw"))?;
        for (k, d) in dense.iter().enumerate() {
            d.write_binary(dir.join(format!("view_{k:02}_dense_depth.mdpt")))?;
        }
    }
    let mesh = marching_cubes(&vol, 0.0)?;
    let mesh = simplify_qem(&mesh, params.target_faces);
    Ok(taubin_smooth(&mesh, params.lambda, params.mu, params.smooth_iterations))
}

/// Texel table of a mesh with view layers and borders filled.
pub struct TextureSetup {
    pub mesh: TriangleMesh,
    pub charts: Vec<Chart>,
    pub table: TexelTable,
}

impl TextureSetup {
    pub fn never_visible(&self) -> usize {
        (0..self.table.len())
            .filter(|&i| self.table.views.iter().all(|l| !l.visible[i]))
            .count()
    }
}

/// Unwraps (or keeps existing UVs), rasterizes texels and computes
/// visibility, priority and borders for every view.
pub fn prepare_texture(mesh: &TriangleMesh, views: &[View], mesh_depths: &[DepthMap], cfg: &ReconstructConfig) -> Result<TextureSetup> {
    let (mesh, charts) = unwrap(mesh, &cfg.unwrap_params())?;
    let mut table = rasterize_texels(&mesh, &charts, cfg.atlas_res)?;
    compute_view_layers(&mut table, views, mesh_depths, cfg.depth_epsilon)?;
    detect_all_borders(&mut table, cfg.dilate_px())?;
    Ok(TextureSetup { mesh, charts, table })
}

/// Everything up to (not including) painting, in the normalized frame.
pub struct Prepared {
    pub normalization: Normalization,
    pub rig: CameraRig,
    pub projections: Vec<ViewProjection>,
    pub mesh_depths: Vec<DepthMap>,
    pub images: Vec<RgbImage>,
    pub setup: TextureSetup,
}

/// Runs every stage before painting. `mesh` is in the cloud's frame; when
/// absent, geometry comes from depth fusion.
pub fn prepare(
    cloud: &ColoredPointCloud,
    mesh: Option<&TriangleMesh>,
    cfg: &ReconstructConfig,
    log: &mut StageLog,
    manifest: &mut Manifest,
    debug_dir: Option<&Path>,
) -> Result<Prepared> {
    let (normalization, cloud) = log.run("normalize", || {
        cloud.validate()?;
        let n = Normalization::fit(&cloud.positions)?;
        Ok((n, n.apply_cloud(cloud)))
    })?;
    manifest.normalization = Some(normalization);
    let rig = log.run("cameras", || cfg.rig())?;
    let views = &rig.views;
    manifest.views = views.len();

    let mesh = match mesh {
        Some(m) => {
            manifest.geometry_source = "mesh".into();
            log.run("load-mesh", || {
                m.validate()?;
                if m.faces.is_empty() {
                    return Err(Error::EmptyMesh);
                }
                Ok(normalization.apply_mesh(m))
            })?
        }
        None => {
            manifest.geometry_source = "depth-fusion".into();
            let first = log.run("project", || project_views(&cloud, views, None, cfg))?;
            if let Some(dir) = debug_dir {
                write_projections(dir, &first, "pass1")?;
            }
            log.run("geometry", || fuse_geometry(views, &first, &cfg.geometry, debug_dir))?
        }
    };
    manifest.faces = mesh.faces.len();

    let mesh_depths: Vec<DepthMap> = log.run("mesh-depth", || Ok(views.par_iter().map(|v| render_mesh_depth(&mesh, v)).collect()))?;
    let projections = log.run("depth-cull", || project_views(&cloud, views, Some(&mesh_depths), cfg))?;
    let sparse: Vec<RgbImage> = projections.iter().map(|p| p.sparse.clone()).collect();
    let masks: Vec<Mask> = projections.iter().map(|p| p.mask.clone()).collect();
    let (images, warnings) = log.run("inpaint", || inpaint_views(&sparse, &masks, &cfg.inpaint))?;
    manifest.inpainted_views = images.len();
    manifest.inpaint_warnings = warnings;
    let setup = log.run("texture-setup", || prepare_texture(&mesh, views, &mesh_depths, cfg))?;
    manifest.charts = setup.charts.len();
    manifest.texels = setup.table.len();
    manifest.never_visible_texels = setup.never_visible();
    if let Some(dir) = debug_dir {
        write_projections(dir, &projections, "pass2")?;
        for (k, img) in images.iter().enumerate() {
            img.write_png(dir.join(format!("pass2_view_{k:02}_dense.png")))?;
        }
        write_layer_debug(dir, &setup.table)?;
    }
    Ok(Prepared {
        normalization,
        rig,
        projections,
        mesh_depths,
        images,
        setup,
    })
}

/// Result of a full run, mesh in the input frame.
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub atlas: TextureAtlas,
    pub manifest: Manifest,
}

/// Full pipeline. With `out_dir`, writes `mesh.obj`, `mesh.mtl`, `mesh.png`
/// and `manifest.json` there (the manifest also on failure).
pub fn reconstruct(
    cloud: &ColoredPointCloud,
    mesh: Option<&TriangleMesh>,
    cfg: &ReconstructConfig,
    jobs: usize,
    out_dir: Option<&Path>,
    inputs: Vec<String>,
) -> Result<Reconstruction> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io_path(dir, e))?;
    }
    let mut manifest = Manifest::new(cfg, jobs);
    manifest.inputs = inputs;
    let mut log = StageLog::default();
    let result = with_jobs(jobs, || run_reconstruct(cloud, mesh, cfg, out_dir, &mut log, &mut manifest)).and_then(|r| r);
    manifest.stages = log.records;
    match result {
        Ok((mesh, atlas)) => {
            if let Some(dir) = out_dir {
                manifest.outputs = ["mesh.obj", "mesh.mtl", "mesh.png"].map(String::from).to_vec();
                manifest.write(&dir.join("manifest.json"))?;
            }
            Ok(Reconstruction { mesh, atlas, manifest })
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            if let Some(dir) = out_dir {
                if dir.is_dir() {
                    manifest.write(&dir.join("manifest.json"))?;
                }
            }
            Err(e)
        }
    }
}

fn run_reconstruct(
    cloud: &ColoredPointCloud,
    mesh: Option<&TriangleMesh>,
    cfg: &ReconstructConfig,
    out_dir: Option<&Path>,
    log: &mut StageLog,
    manifest: &mut Manifest,
) -> Result<(TriangleMesh, TextureAtlas)> {
    let debug_dir = match (cfg.debug, out_dir) {
        (true, Some(dir)) => {
            let d = dir.join("debug");
            std::fs::create_dir_all(&d).map_err(|e| Error::io_path(&d, e))?;
            Some(d)
        }
        _ => None,
    };
    let prep = prepare(cloud, mesh, cfg, log, manifest, debug_dir.as_deref())?;
    let painted = log.run("unproject", || {
        paint(
            &prep.setup.table,
            &prep.images,
            &prep.setup.mesh,
            &prep.rig.views,
            &cfg.paint_params(cfg.unproject),
        )
    })?;
    if let (Some(dir), Some(chosen)) = (&debug_dir, &painted.chosen) {
        chosen_view_image(&prep.setup.table, chosen).write_png(dir.join("chosen_view.png"))?;
    }
    let out_mesh = prep.normalization.invert_mesh(&prep.setup.mesh);
    if let Some(dir) = out_dir {
        log.run("write", || write_textured_mesh(&out_mesh, &painted.atlas, dir).map(|_| ()))?;
    }
    Ok((out_mesh, painted.atlas))
}

fn write_projections(dir: &Path, projections: &[ViewProjection], prefix: &str) -> Result<()> {
    for (k, p) in projections.iter().enumerate() {
        p.sparse.write_png(dir.join(format!("{prefix}_view_{k:02}_sparse.png")))?;
        p.mask.write_png(dir.join(format!("{prefix}_view_{k:02}_mask.png")))?;
        p.sparse_depth.write_binary(dir.join(format!("{prefix}_view_{k:02}_depth.mdpt")))?;
    }
    Ok(())
}

/// Chart map plus per-view visibility and border masks.
pub fn write_layer_debug(dir: &Path, table: &TexelTable) -> Result<()> {
    table.chart_image().write_png(dir.join("charts.png"))?;
    for k in 0..table.views.len() {
        let (vis, bor) = layer_masks(table, k);
        vis.write_png(dir.join(format!("view_{k:02}_visible.png")))?;
        bor.write_png(dir.join(format!("view_{k:02}_border.png")))?;
    }
    Ok(())
}

/// On-disk exchange between the stage subcommands: `rig.json`, optional
/// `normalization.json`, and per view `view_KK_sparse.png`,
/// `view_KK_mask.png`, `view_KK_depth.mdpt` and `view_KK_dense.png`.
pub mod viewset {
    use super::*;

    pub const RIG: &str = "rig.json";
    pub const NORMALIZATION: &str = "normalization.json";

    pub fn path(dir: &Path, k: usize, kind: &str) -> PathBuf {
        let ext = if kind == "depth" { "mdpt" } else { "png" };
        dir.join(format!("view_{k:02}_{kind}.{ext}"))
    }

    fn ensure_dir(dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io_path(dir, e))
    }

    pub fn write_rig(dir: &Path, rig: &CameraRig, normalization: Option<&Normalization>) -> Result<()> {
        ensure_dir(dir)?;
        let p = dir.join(RIG);
        std::fs::write(&p, rig.to_json()?).map_err(|e| Error::io_path(&p, e))?;
        if let Some(n) = normalization {
            let p = dir.join(NORMALIZATION);
            std::fs::write(&p, serde_json::to_string_pretty(n)?).map_err(|e| Error::io_path(&p, e))?;
        }
        Ok(())
    }

    pub fn read_rig(dir: &Path) -> Result<(CameraRig, Option<Normalization>)> {
        let p = dir.join(RIG);
        let rig = CameraRig::from_json(&std::fs::read_to_string(&p).map_err(|e| Error::io_path(&p, e))?)?;
        let np = dir.join(NORMALIZATION);
        let norm = if np.exists() {
            Some(serde_json::from_str(&std::fs::read_to_string(&np).map_err(|e| Error::io_path(&np, e))?)?)
        } else {
            None
        };
        Ok((rig, norm))
    }

    pub fn write_projections(dir: &Path, projections: &[ViewProjection]) -> Result<()> {
        ensure_dir(dir)?;
        for (k, p) in projections.iter().enumerate() {
            p.sparse.write_png(path(dir, k, "sparse"))?;
            p.mask.write_png(path(dir, k, "mask"))?;
            p.sparse_depth.write_binary(path(dir, k, "depth"))?;
        }
        Ok(())
    }

    /// Sparse images and masks of `n` views. A pixel counts as known where
    /// the depth map holds a finite value.
    pub fn read_sparse(dir: &Path, n: usize) -> Result<(Vec<RgbImage>, Vec<Mask>)> {
        let mut images = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        for k in 0..n {
            let img = RgbImage::read_png(path(dir, k, "sparse"))?;
            let mask = Mask::read_png(path(dir, k, "mask"))?;
            let depth = DepthMap::read_binary(path(dir, k, "depth"))?;
            if img.dims() != mask.dims() || img.dims() != depth.dims() {
                return Err(Error::input(format!("view {k}: sparse image, mask and depth sizes differ")));
            }
            let (w, h) = img.dims();
            let mut sparse = RgbImage::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    if depth.is_known(x, y) {
                        sparse.set(x, y, img.get(x, y));
                    }
                }
            }
            images.push(sparse);
            masks.push(mask);
        }
        Ok((images, masks))
    }

    pub fn write_dense(dir: &Path, images: &[RgbImage]) -> Result<()> {
        ensure_dir(dir)?;
        for (k, img) in images.iter().enumerate() {
            img.write_png(path(dir, k, "dense"))?;
        }
        Ok(())
    }

    pub fn read_dense(dir: &Path, rig: &CameraRig) -> Result<Vec<RgbImage>> {
        rig.views
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let img = RgbImage::read_png(path(dir, k, "dense"))?;
                if img.dims() != v.dims() {
                    return Err(Error::input(format!("view {k}: image is {:?}, camera expects {:?}", img.dims(), v.dims())));
                }
                Ok(img)
            })
            .collect()
    }
}

/// `project` stage: normalization, visibility, optional depth culling
/// against `mesh`, splatting. Writes a view set to `dir`.
pub fn stage_project(cloud: &ColoredPointCloud, mesh: Option<&TriangleMesh>, cfg: &ReconstructConfig, dir: &Path) -> Result<Vec<ViewProjection>> {
    cloud.validate()?;
    let normalization = Normalization::fit(&cloud.positions)?;
    let cloud = normalization.apply_cloud(cloud);
    let rig = cfg.rig()?;
    let projections = match mesh {
        Some(m) => {
            let m = normalization.apply_mesh(m);
            let depths: Vec<DepthMap> = rig.views.par_iter().map(|v| render_mesh_depth(&m, v)).collect();
            project_views(&cloud, &rig.views, Some(&depths), cfg)?
        }
        None => project_views(&cloud, &rig.views, None, cfg)?,
    };
    viewset::write_rig(dir, &rig, Some(&normalization))?;
    viewset::write_projections(dir, &projections)?;
    Ok(projections)
}

/// `inpaint` stage over a view set; dense images are written next to the
/// sparse ones in `out_dir`.
pub fn stage_inpaint(in_dir: &Path, out_dir: &Path, cfg: &InpaintConfig) -> Result<Vec<String>> {
    let (rig, norm) = viewset::read_rig(in_dir)?;
    let (sparse, masks) = viewset::read_sparse(in_dir, rig.len())?;
    let (images, warnings) = inpaint_views(&sparse, &masks, cfg)?;
    if in_dir != out_dir {
        viewset::write_rig(out_dir, &rig, norm.as_ref())?;
    }
    viewset::write_dense(out_dir, &images)?;
    Ok(warnings)
}

/// `unproject` stage: paints `mesh` (input frame) from the dense images of a
/// view set and writes the textured mesh to `out_dir`.
pub fn stage_unproject(mesh: &TriangleMesh, views_dir: &Path, cfg: &ReconstructConfig, out_dir: &Path) -> Result<(TriangleMesh, TextureAtlas, TextureSetup)> {
    let (rig, norm) = viewset::read_rig(views_dir)?;
    let images = viewset::read_dense(views_dir, &rig)?;
    let norm = norm.unwrap_or_else(Normalization::identity);
    let m = norm.apply_mesh(mesh);
    let depths: Vec<DepthMap> = rig.views.par_iter().map(|v| render_mesh_depth(&m, v)).collect();
    let setup = prepare_texture(&m, &rig.views, &depths, cfg)?;
    let painted = paint(&setup.table, &images, &setup.mesh, &rig.views, &cfg.paint_params(cfg.unproject))?;
    if cfg.debug {
        let d = out_dir.join("debug");
        std::fs::create_dir_all(&d).map_err(|e| Error::io_path(&d, e))?;
        write_layer_debug(&d, &setup.table)?;
        if let Some(c) = &painted.chosen {
            chosen_view_image(&setup.table, c).write_png(d.join("chosen_view.png"))?;
        }
    }
    let out = norm.invert_mesh(&setup.mesh);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io_path(out_dir, e))?;
    write_textured_mesh(&out, &painted.atlas, out_dir)?;
    Ok((out, painted.atlas, setup))
}

/// Texture and geometry scores of a prediction against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(with = "crate::metrics::decibels")]
    pub psnr: f64,
    pub ssim: f64,
    pub cd: f64,
    pub nc: f64,
    pub fs: f64,
    pub per_view: Vec<crate::metrics::ViewScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub resolution: usize,
    pub samples: usize,
    pub seed: u64,
    pub tau: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            resolution: DEFAULT_RESOLUTION,
            samples: METRIC_SAMPLES,
            seed: METRIC_SEED,
            tau: DEFAULT_FSCORE_TAU,
        }
    }
}

/// Scores both textured meshes after normalizing them with the ground
/// truth's bounding box. Returns the report and the (pred, gt) renders.
pub fn evaluate(
    pred: (&TriangleMesh, &TextureAtlas),
    gt: (&TriangleMesh, &TextureAtlas),
    params: &EvalParams,
) -> Result<(EvalReport, Vec<(RgbImage, RgbImage)>)> {
    let norm = Normalization::fit(&gt.0.vertices)?;
    let (pm, gm) = (norm.apply_mesh(pred.0), norm.apply_mesh(gt.0));
    let rig = eval_views(params.resolution)?;
    let (render, pairs): (RenderReport, _) = compare_renders((&pm, pred.1), (&gm, gt.1), &rig.views)?;
    let geo: GeometryReport = geometry_metrics(&pm, &gm, params.samples, params.seed, params.tau)?;
    Ok((
        EvalReport {
            psnr: render.psnr,
            ssim: render.ssim,
            cd: geo.cd,
            nc: geo.nc,
            fs: geo.fs,
            per_view: render.per_view,
        },
        pairs,
    ))
}

/// Grid of the robustness sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSweep {
    pub noise: Vec<f64>,
    pub points: Vec<usize>,
    pub strategies: Vec<Strategy>,
    /// Reconstruct with the ground-truth geometry instead of depth fusion.
    pub gt_mesh: bool,
}

impl Default for AblationSweep {
    fn default() -> Self {
        AblationSweep {
            noise: vec![0.0, 0.005],
            points: vec![30_000, 25_000, 20_000, 10_000],
            strategies: Strategy::ALL.to_vec(),
            gt_mesh: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub noise: f64,
    pub points: usize,
    pub strategy: Strategy,
    #[serde(with = "crate::metrics::decibels")]
    pub psnr: f64,
    pub ssim: f64,
    pub cd: f64,
    pub nc: f64,
    pub fs: f64,
    pub seconds: f64,
}

/// Samples the textured ground truth, degrades the cloud per cell and
/// evaluates every strategy. Stages before painting are shared by the
/// strategies of one cell.
pub fn ablate(gt_mesh: &TriangleMesh, gt_atlas: &TextureAtlas, cfg: &ReconstructConfig, sweep: &AblationSweep, eval: &EvalParams) -> Result<Vec<AblationRow>> {
    let max_points = sweep.points.iter().copied().max().ok_or_else(|| Error::precondition("empty point sweep"))?;
    let full = sample_points(gt_mesh, gt_atlas, max_points, cfg.seed)?;
    let gt_norm = Normalization::fit(&gt_mesh.vertices)?;
    let gt_eval = gt_norm.apply_mesh(gt_mesh);
    let rig = eval_views(eval.resolution)?;
    let mut rows = Vec::new();
    for &sigma in &sweep.noise {
        for &n in &sweep.points {
            let start = Instant::now();
            let cloud = if n == max_points { full.clone() } else { subsample(&full, n, cfg.seed)? };
            let cloud = add_gaussian_noise(&cloud, sigma, cfg.seed)?;
            let mut log = StageLog::default();
            let mut manifest = Manifest::new(cfg, 0);
            let geometry = sweep.gt_mesh.then_some(gt_mesh);
            let prep = prepare(&cloud, geometry, cfg, &mut log, &mut manifest, None)?;
            let pred_eval = gt_norm.apply_mesh(&prep.normalization.invert_mesh(&prep.setup.mesh));
            let geo = geometry_metrics(&pred_eval, &gt_eval, eval.samples, eval.seed, eval.tau)?;
            let shared = start.elapsed().as_secs_f64();
            for &strategy in &sweep.strategies {
                let t = Instant::now();
                let painted = paint(&prep.setup.table, &prep.images, &prep.setup.mesh, &prep.rig.views, &cfg.paint_params(strategy))?;
                let atlas = painted.atlas.quantized();
                let (render, _) = compare_renders((&pred_eval, &atlas), (&gt_eval, gt_atlas), &rig.views)?;
                log::info!("ablate σ={sigma} n={n} {strategy}: psnr {:.2}", render.psnr);
                rows.push(AblationRow {
                    noise: sigma,
                    points: n,
                    strategy,
                    psnr: render.psnr,
                    ssim: render.ssim,
                    cd: geo.cd,
                    nc: geo.nc,
                    fs: geo.fs,
                    seconds: shared + t.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::{textured_cube, CUBE_COLORS};

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ReconstructConfig {
            dilate_px: Some(4),
            unproject: Strategy::OptNbf,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ReconstructConfig>(&text).unwrap(), cfg);
        assert_eq!(ReconstructConfig::default().dilate_px(), 3);
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut log = StageLog::default();
        let err = log.run::<()>("inpaint", || Err(Error::precondition("nothing known"))).unwrap_err();
        assert!(err.to_string().contains("inpaint"));
        assert!(!log.records[0].ok);
        assert!(matches!(err.root(), Error::Precondition(_)));
    }

    #[test]
    fn small_cube_reconstruction_runs() {
        let gt = textured_cube(CUBE_COLORS, 128).unwrap();
        let cloud = gt.sample_cloud(5000, 0).unwrap();
        let cfg = ReconstructConfig {
            resolution: 96,
            atlas_res: 128,
            ..Default::default()
        };
        let plain = TriangleMesh::new(gt.mesh.vertices.clone(), gt.mesh.faces.clone());
        let r = reconstruct(&cloud, Some(&plain), &cfg, 2, None, vec![]).unwrap();
        assert_eq!(r.manifest.inpainted_views, 8);
        assert_eq!(r.manifest.faces, 12);
        assert!(r.manifest.stages.iter().all(|s| s.ok));
        assert!(r.mesh.uv_corners.is_some());
        // output stays in the input frame
        for (a, b) in r.mesh.vertices.iter().zip(&plain.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn ico20_sees_more_of_the_chair_than_cube6() {
        let chair = crate::synthbench::chair_scene(256).unwrap();
        let cloud = chair.sample_cloud(20_000, 0).unwrap();
        let plain = TriangleMesh::new(chair.mesh.vertices.clone(), chair.mesh.faces.clone());
        let never = |views| {
            let cfg = ReconstructConfig {
                views,
                resolution: 128,
                atlas_res: 256,
                inpaint: InpaintConfig::default(),
                ..Default::default()
            };
            let r = reconstruct(&cloud, Some(&plain), &cfg, 0, None, vec![]).unwrap();
            r.manifest.never_visible_texels
        };
        let (cube, ico) = (never(RigKind::Cube6), never(RigKind::Ico20));
        assert!(ico < cube, "ico20 {ico} vs cube6 {cube}");
    }
}
