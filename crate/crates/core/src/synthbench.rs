//! Synthetic scenes with known answers: flat-colored textured meshes, the
//! stacked-slabs occlusion benchmark, injected border inconsistencies, and
//! exact ray-cast references.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{make_rig, RigKind, View, DEFAULT_FOV_Y_DEG, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::inpaint::fill_nearest;
use crate::mesh::{shapes, ColoredPointCloud, TriangleMesh, Vec3};
use crate::metrics::render_textured;
use crate::pcio::sample_points;
use crate::raster::{DepthMap, Mask, Rgb, RgbImage, TextureAtlas, WHITE};
use crate::rasterizer::render_zbuffer;
use crate::projection::render_mesh_depth;
use crate::unproject::{compute_view_layers, detect_all_borders, paint, seam_bleed, PaintParams, Strategy, SEAM_BLEED_PASSES};
use crate::uvatlas::{rasterize_texels, unwrap, Chart, TexelTable, UnwrapParams};

pub const DEFAULT_COLOR_TOL: f32 = 0.2;
pub const DEFAULT_CLOUD_POINTS: usize = 30_000;

/// Exact depth map of a sphere: per pixel center, the forward-axis depth of
/// the first ray–sphere hit.
pub fn sphere_depth_map(view: &View, center: Vec3, radius: f64) -> (DepthMap, Mask) {
    let (w, h) = view.dims();
    let mut depth = DepthMap::new(w, h);
    let mut mask = Mask::new(w, h);
    let o = view.position();
    for y in 0..h {
        for x in 0..w {
            let d = view.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
            let oc = o - center;
            let b = oc.dot(&d);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                continue;
            }
            let t = -b - disc.sqrt();
            if t > 0.0 {
                depth.set(x, y, (t * d.dot(&view.forward())) as f32);
                mask.set(x, y, true);
            }
        }
    }
    (depth, mask)
}

/// A mesh with UVs, its charts and a ground-truth atlas.
#[derive(Clone, Debug)]
pub struct TexturedScene {
    pub mesh: TriangleMesh,
    pub charts: Vec<Chart>,
    pub atlas: TextureAtlas,
}

impl TexturedScene {
    /// Unwraps `mesh` and paints every face with `color_of(face)`.
    pub fn flat_colored(mesh: &TriangleMesh, atlas_res: usize, color_of: impl Fn(usize) -> Rgb) -> Result<TexturedScene> {
        let params = UnwrapParams {
            atlas_res,
            ..Default::default()
        };
        let (mesh, charts) = unwrap(mesh, &params)?;
        let table = rasterize_texels(&mesh, &charts, atlas_res)?;
        let mut atlas = TextureAtlas::new(atlas_res, atlas_res);
        for t in &table.texels {
            atlas.set(t.x as usize, t.y as usize, color_of(t.face as usize));
        }
        Ok(TexturedScene {
            mesh,
            charts,
            atlas: seam_bleed(&atlas, SEAM_BLEED_PASSES),
        })
    }

    pub fn texel_table(&self) -> Result<TexelTable> {
        rasterize_texels(&self.mesh, &self.charts, self.atlas.width())
    }

    /// Colored point sampling of the textured surface.
    pub fn sample_cloud(&self, n: usize, seed: u64) -> Result<ColoredPointCloud> {
        sample_points(&self.mesh, &self.atlas, n, seed)
    }

    pub fn render(&self, views: &[View]) -> Result<Vec<RgbImage>> {
        views.par_iter().map(|v| render_textured(&self.mesh, &self.atlas, v)).collect()
    }
}

pub const CUBE_COLORS: [Rgb; 6] = [
    [0.9, 0.2, 0.2],
    [0.2, 0.8, 0.3],
    [0.2, 0.3, 0.9],
    [0.95, 0.85, 0.2],
    [0.8, 0.3, 0.85],
    [0.2, 0.85, 0.85],
];

/// Unit cube at the origin whose six sides carry `colors` in the order
/// −z, +z, −y, +y, −x, +x.
pub fn textured_cube(colors: [Rgb; 6], atlas_res: usize) -> Result<TexturedScene> {
    let cube = shapes::cuboid(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
    TexturedScene::flat_colored(&cube, atlas_res, |f| colors[f / 2])
}

/// A chair built from boxes: seat, backrest and four legs, each part one
/// flat color. Legs and the underside of the seat hide each other from most
/// directions, which makes the scene sensitive to the camera rig.
pub fn chair_scene(atlas_res: usize) -> Result<TexturedScene> {
    let parts = [
        (Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.8, 0.8, 0.1), [0.6, 0.35, 0.2]),
        (Vec3::new(0.0, 0.35, 0.45), Vec3::new(0.8, 0.1, 0.8), [0.7, 0.45, 0.25]),
        (Vec3::new(-0.33, -0.33, -0.4), Vec3::new(0.08, 0.08, 0.7), [0.3, 0.3, 0.3]),
        (Vec3::new(0.33, -0.33, -0.4), Vec3::new(0.08, 0.08, 0.7), [0.3, 0.3, 0.3]),
        (Vec3::new(-0.33, 0.33, -0.4), Vec3::new(0.08, 0.08, 0.7), [0.3, 0.3, 0.3]),
        (Vec3::new(0.33, 0.33, -0.4), Vec3::new(0.08, 0.08, 0.7), [0.3, 0.3, 0.3]),
    ];
    let mut mesh = TriangleMesh::new(Vec::new(), Vec::new());
    for (c, s, _) in &parts {
        mesh = mesh.merged(&shapes::cuboid(*c, *s));
    }
    TexturedScene::flat_colored(&mesh, atlas_res, |f| parts[f / 12].2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabParams {
    /// Large slab color, then occluder color.
    pub colors: [Rgb; 2],
    pub slab_size: [f64; 3],
    pub occluder_size: [f64; 3],
    /// Distance between the slab's front face and the occluder's back; an
    /// infinite gap drops the occluder.
    pub gap: f64,
    pub atlas_res: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for SlabParams {
    fn default() -> Self {
        SlabParams {
            colors: [[0.85, 0.55, 0.25], [0.25, 0.3, 0.85]],
            slab_size: [1.0, 1.0, 0.1],
            occluder_size: [0.25, 0.25, 0.1],
            gap: 0.3,
            atlas_res: 256,
            points: DEFAULT_CLOUD_POINTS,
            seed: 0,
        }
    }
}

/// Large slab facing +z with a smaller open box floating in front of it.
pub struct SlabScene {
    pub scene: TexturedScene,
    pub cloud: ColoredPointCloud,
    /// Faces of the occluder (empty without one).
    pub occluder_faces: Range<usize>,
    pub params: SlabParams,
}

/// Builds the stacked-slabs scene. The occluder has no back face, so every
/// surface point is seen from some camera of [`slab_views`].
pub fn make_stacked_slabs(params: &SlabParams) -> Result<SlabScene> {
    let [a, b] = params.colors;
    if (0..3).all(|c| a[c] == b[c]) {
        return Err(Error::precondition("slab colors must differ"));
    }
    if !(params.gap > 0.0) {
        return Err(Error::precondition("slab gap must be positive"));
    }
    let s = Vec3::from(params.slab_size);
    let o = Vec3::from(params.occluder_size);
    let with_occluder = params.gap.is_finite();
    let depth = if with_occluder { s.z + params.gap + o.z } else { s.z };
    let back = -depth / 2.0;
    let slab = shapes::cuboid(Vec3::new(0.0, 0.0, back + s.z / 2.0), s);
    let mut mesh = slab.clone();
    let mut occluder_faces = mesh.faces.len()..mesh.faces.len();
    if with_occluder {
        let mut occ = shapes::cuboid(Vec3::new(0.0, 0.0, back + s.z + params.gap + o.z / 2.0), o);
        // drop the −z side
        occ.faces.drain(0..2);
        mesh = mesh.merged(&occ.compact());
        occluder_faces = slab.faces.len()..mesh.faces.len();
    }
    let occ = occluder_faces.clone();
    let scene = TexturedScene::flat_colored(&mesh, params.atlas_res, |f| if occ.contains(&f) { b } else { a })?;
    let cloud = scene.sample_cloud(params.points, params.seed)?;
    Ok(SlabScene {
        scene,
        cloud,
        occluder_faces,
        params: params.clone(),
    })
}

/// Cameras for the stacked-slabs benchmark: the six axis views plus a ring
/// of eight views tilted 45° from the frontal (+z) axis.
pub fn slab_views(resolution: usize) -> Result<Vec<View>> {
    let mut views = make_rig(RigKind::Cube6, resolution, DEFAULT_RADIUS)?.views;
    let tilt = std::f64::consts::FRAC_PI_4;
    for k in 0..8 {
        let az = k as f64 * std::f64::consts::FRAC_PI_4;
        let d = Vec3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
        views.push(View::look_at(
            d * DEFAULT_RADIUS,
            Vec3::zeros(),
            DEFAULT_FOV_Y_DEG.to_radians(),
            resolution,
            resolution,
        )?);
    }
    Ok(views)
}

/// Widens the occluder's image region by `dilate_img_px` (square kernel)
/// over pixels where the rest of the scene is frontmost, copying the nearest
/// occluder pixel's color. Returns the perturbed images and masks.
pub fn inject_border_inconsistency(
    images: &[RgbImage],
    views: &[View],
    mesh: &TriangleMesh,
    occluder_faces: &Range<usize>,
    dilate_img_px: usize,
) -> Result<(Vec<RgbImage>, Vec<Mask>)> {
    if images.len() != views.len() {
        return Err(Error::precondition("one image per view is required"));
    }
    images
        .par_iter()
        .zip(views)
        .map(|(img, view)| {
            if img.dims() != view.dims() {
                return Err(Error::precondition("image size differs from its view"));
            }
            let (w, h) = img.dims();
            let mut out = img.clone();
            if dilate_img_px == 0 {
                return Ok((out, Mask::new(w, h)));
            }
            let zb = render_zbuffer(mesh, view);
            let mut occ = Mask::new(w, h);
            let mut rest = Mask::new(w, h);
            let mut occ_colors = RgbImage::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    let f = zb.face[y * w + x];
                    if f == u32::MAX {
                        continue;
                    }
                    if occluder_faces.contains(&(f as usize)) {
                        occ.set(x, y, true);
                        occ_colors.set(x, y, img.get(x, y));
                    } else {
                        rest.set(x, y, true);
                    }
                }
            }
            let grown = occ.dilate_n(dilate_img_px);
            let perturbed = Mask::from_vec(
                w,
                h,
                grown.data().iter().zip(rest.data()).map(|(&g, &r)| g && r).collect(),
            )?;
            if perturbed.count() == 0 {
                return Ok((out, perturbed));
            }
            let nearest = fill_nearest(&occ_colors, &Mask::full(w, h), WHITE)?;
            for y in 0..h {
                for x in 0..w {
                    if perturbed.get(x, y) {
                        out.set(x, y, nearest.get(x, y));
                    }
                }
            }
            Ok((out, perturbed))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Texels whose 8-neighbourhood leaves their chart or the valid region.
pub fn chart_silhouette(table: &TexelTable) -> Vec<bool> {
    let res = table.resolution as i64;
    table
        .texels
        .iter()
        .map(|t| {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (x, y) = (t.x as i64 + dx, t.y as i64 + dy);
                    if x < 0 || y < 0 || x >= res || y >= res {
                        return true;
                    }
                    match table.at(x as usize, y as usize) {
                        Some(j) if table.texels[j].chart == t.chart => {}
                        _ => return true,
                    }
                }
            }
            false
        })
        .collect()
}

/// Valid texels away from chart silhouettes whose color differs from the
/// ground truth by more than `color_tol` in some channel, and their mask.
pub fn misassigned_texels(atlas: &TextureAtlas, gt_atlas: &TextureAtlas, table: &TexelTable, color_tol: f32) -> Result<(usize, Mask)> {
    let res = table.resolution;
    if atlas.dims() != (res, res) || gt_atlas.dims() != (res, res) {
        return Err(Error::precondition("atlas layouts differ"));
    }
    let edge = chart_silhouette(table);
    let mut mask = Mask::new(res, res);
    let mut count = 0;
    for (t, &e) in table.texels.iter().zip(&edge) {
        if e {
            continue;
        }
        let (x, y) = (t.x as usize, t.y as usize);
        let (a, g) = (atlas.get(x, y), gt_atlas.get(x, y));
        if (0..3).any(|c| (a[c] - g[c]).abs() > color_tol) {
            mask.set(x, y, true);
            count += 1;
        }
    }
    Ok((count, mask))
}

/// PSNR between two atlases over valid texels only.
pub fn atlas_psnr(atlas: &TextureAtlas, gt_atlas: &TextureAtlas, table: &TexelTable) -> Result<f64> {
    let res = table.resolution;
    if atlas.dims() != (res, res) || gt_atlas.dims() != (res, res) {
        return Err(Error::precondition("atlas layouts differ"));
    }
    if table.texels.is_empty() {
        return Err(Error::precondition("texel table is empty"));
    }
    let sum: f64 = table
        .texels
        .iter()
        .map(|t| {
            let (a, g) = (atlas.get(t.x as usize, t.y as usize), gt_atlas.get(t.x as usize, t.y as usize));
            (0..3).map(|c| ((a[c] - g[c]) as f64).powi(2)).sum::<f64>()
        })
        .sum();
    let mse = sum / (3 * table.texels.len()) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Möller–Trumbore intersection; the ray parameter of a hit in front of
/// `origin`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Forward-axis depth of the first surface hit on the ray from the camera
/// through `point`, by brute force over all faces.
pub fn first_hit_depth(mesh: &TriangleMesh, view: &View, point: &Vec3) -> Option<f64> {
    let o = view.position();
    let dir = (point - o).normalize();
    let cos = dir.dot(&view.forward());
    (0..mesh.faces.len())
        .filter_map(|f| ray_triangle(&o, &dir, &mesh.corners(f)))
        .min_by(f64::total_cmp)
        .map(|t| t * cos)
}

/// Ray-cast visibility of `point`: in frame and no surface more than
/// `epsilon` in front of it along the camera ray.
pub fn raycast_visible(mesh: &TriangleMesh, view: &View, point: &Vec3, epsilon: f64) -> bool {
    let p = view.project(point);
    if p.pixel(view.width, view.height).is_none() {
        return false;
    }
    match first_hit_depth(mesh, view, point) {
        Some(d) => d >= p.depth - epsilon,
        None => true,
    }
}

/// Settings of the stacked-slabs strategy comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabBenchParams {
    pub scene: SlabParams,
    pub image_res: usize,
    pub dilate_img_px: usize,
    /// Border dilation in texels.
    pub dilate_px: usize,
    pub epsilon: f64,
    pub color_tol: f32,
}

impl Default for SlabBenchParams {
    fn default() -> Self {
        SlabBenchParams {
            scene: SlabParams::default(),
            image_res: 256,
            dilate_img_px: 4,
            dilate_px: 6,
            epsilon: crate::visibility::DEFAULT_DEPTH_EPSILON,
            color_tol: DEFAULT_COLOR_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabBenchRow {
    pub strategy: Strategy,
    pub misassigned: usize,
    #[serde(with = "crate::metrics::decibels")]
    pub atlas_psnr: f64,
}

/// Renders the ground-truth slabs from [`slab_views`], injects the border
/// inconsistency and paints the atlas with every strategy.
pub fn run_slab_benchmark(params: &SlabBenchParams, strategies: &[Strategy]) -> Result<Vec<SlabBenchRow>> {
    let scene = make_stacked_slabs(&params.scene)?;
    let views = slab_views(params.image_res)?;
    let mesh = &scene.scene.mesh;
    let depths: Vec<DepthMap> = views.par_iter().map(|v| render_mesh_depth(mesh, v)).collect();
    let mut table = scene.scene.texel_table()?;
    compute_view_layers(&mut table, &views, &depths, params.epsilon)?;
    detect_all_borders(&mut table, params.dilate_px)?;
    let clean = scene.scene.render(&views)?;
    let (images, _) = inject_border_inconsistency(&clean, &views, mesh, &scene.occluder_faces, params.dilate_img_px)?;
    strategies
        .iter()
        .map(|&strategy| {
            let paint_params = PaintParams {
                strategy,
                seed: Some(params.scene.seed),
                ..Default::default()
            };
            let atlas = paint(&table, &images, mesh, &views, &paint_params)?.atlas;
            let (misassigned, _) = misassigned_texels(&atlas, &scene.scene.atlas, &table, params.color_tol)?;
            Ok(SlabBenchRow {
                strategy,
                misassigned,
                atlas_psnr: atlas_psnr(&atlas, &scene.scene.atlas, &table)?,
            })
        })
        .collect()
}
