//! Painting the texture atlas from posed dense images.
//!
//! Every strategy works on a [`TexelTable`] whose per-view layers record
//! visibility, visibility borders, direction priority and the continuous
//! pixel each texel lands on. Naive painting takes the most frontal visible
//! view. Non-Border-First prefers views where the texel is away from a
//! visible/invisible transition, then border views, then any view. The
//! optimization strategies average samples over contributing views.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{direction_priority, View};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::raster::{bilinear_footprint, DepthMap, Mask, Rgb, RgbImage, TextureAtlas, BLACK};
use crate::rasterizer::render_zbuffer;
use crate::uvatlas::{palette, uv_to_px, TexelTable, ViewLayer};

pub const DEFAULT_DILATE_PX: usize = 3;
pub const SEAM_BLEED_PASSES: usize = 8;
pub const DEFAULT_REFINE_STEP: f64 = 0.1;

/// Border dilation scaled from 3 px at a 1024 atlas.
pub fn default_dilate_px(atlas_res: usize) -> usize {
    ((DEFAULT_DILATE_PX * atlas_res) as f64 / 1024.0).round().max(1.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Naive,
    Nbf,
    OptNaive,
    OptNbf,
    OptScratch,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Naive,
        Strategy::Nbf,
        Strategy::OptNaive,
        Strategy::OptNbf,
        Strategy::OptScratch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Nbf => "nbf",
            Strategy::OptNaive => "opt-naive",
            Strategy::OptNbf => "opt-nbf",
            Strategy::OptScratch => "opt-scratch",
        }
    }

    pub fn uses_borders(self) -> bool {
        matches!(self, Strategy::Nbf | Strategy::OptNbf)
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input(format!("unknown unprojection strategy `{s}` (naive|nbf|opt-naive|opt-nbf|opt-scratch)")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fills visibility, priority and pixel coordinates for every view.
///
/// A texel is visible when it projects in frame and either its depth does
/// not exceed the mesh depth at its pixel by more than `epsilon`, or the mesh
/// depth there matches, within `epsilon`, the depth at which the pixel-center
/// ray meets the texel's own tangent plane. The second test keeps steep
/// surfaces visible although their depth changes by more than `epsilon`
/// across one pixel. When the pixel center misses the mesh, the other pixels
/// of the bilinear footprint are tested instead. Bilinear taps are kept
/// under the same tangent-plane test, so samples near silhouettes do not
/// blend in other surfaces or the background.
pub fn compute_view_layers(table: &mut TexelTable, views: &[View], mesh_depths: &[DepthMap], epsilon: f64) -> Result<()> {
    if views.len() != mesh_depths.len() {
        return Err(Error::precondition("one depth map per view is required"));
    }
    let mut layers = Vec::with_capacity(views.len());
    for (view, depth) in views.iter().zip(mesh_depths) {
        if depth.dims() != view.dims() {
            return Err(Error::precondition("depth map size differs from its view"));
        }
        let (w, h) = view.dims();
        let (origin, forward) = (view.position(), view.forward());
        let per: Vec<(bool, f32, [f32; 2], u8)> = table
            .texels
            .par_iter()
            .map(|t| {
                let p = view.project(&t.position);
                let plane_depth = |x: usize, y: usize| {
                    let d = view.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
                    let denom = t.normal.dot(&d);
                    (denom.abs() > 1e-9).then(|| t.normal.dot(&(t.position - origin)) / denom * d.dot(&forward))
                };
                let sees = |x: usize, y: usize| {
                    let d = depth.get(x, y) as f64;
                    d.is_finite()
                        && (p.depth <= d + epsilon || plane_depth(x, y).is_some_and(|z| z > 0.0 && (z - d).abs() <= epsilon))
                };
                let footprint = bilinear_footprint(w, h, p.x, p.y);
                let visible = match p.pixel(w, h) {
                    Some((x, y)) if depth.get(x, y).is_finite() => sees(x, y),
                    Some(_) => footprint.iter().any(|&(x, y, _)| sees(x, y)),
                    None => false,
                };
                let mut taps = 0u8;
                if visible {
                    for (bit, &(x, y, _)) in footprint.iter().enumerate() {
                        let d = depth.get(x, y) as f64;
                        let on_plane = plane_depth(x, y).is_some_and(|z| (z - d).abs() <= epsilon);
                        if d.is_finite() && ((d - p.depth).abs() <= epsilon || on_plane) {
                            taps |= 1 << bit;
                        }
                    }
                }
                let priority = direction_priority(&t.normal, view).unwrap_or(-1.0) as f32;
                (visible, priority, [p.x as f32, p.y as f32], taps)
            })
            .collect();
        let mut layer = ViewLayer {
            visible: Vec::with_capacity(per.len()),
            border: vec![false; per.len()],
            priority: Vec::with_capacity(per.len()),
            pixel: Vec::with_capacity(per.len()),
            taps: Vec::with_capacity(per.len()),
        };
        for (v, pr, px, tp) in per {
            layer.visible.push(v);
            layer.priority.push(pr);
            layer.pixel.push(px);
            layer.taps.push(tp);
        }
        layers.push(layer);
    }
    table.views = layers;
    Ok(())
}

/// Marks the visibility border of view `k`: visible texels next to an
/// invalid texel or to an invisible texel of the same chart, dilated by a
/// square of half-width `dilate_px` within the chart and kept only where
/// visible.
pub fn detect_borders(table: &mut TexelTable, k: usize, dilate_px: usize) -> Result<()> {
    if k >= table.views.len() {
        return Err(Error::precondition(format!("view {k} has no visibility layer")));
    }
    let res = table.resolution as i64;
    let layer = &table.views[k];
    let edges: Vec<usize> = (0..table.texels.len())
        .into_par_iter()
        .filter(|&i| {
            if !layer.visible[i] {
                return false;
            }
            let t = &table.texels[i];
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (x, y) = (t.x as i64 + dx, t.y as i64 + dy);
                    if x < 0 || y < 0 || x >= res || y >= res {
                        continue;
                    }
                    match table.at(x as usize, y as usize) {
                        None => return true,
                        Some(j) => {
                            if table.texels[j].chart == t.chart && !layer.visible[j] {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        })
        .collect();
    let mut border = vec![false; table.texels.len()];
    let d = dilate_px as i64;
    for &i in &edges {
        let t = table.texels[i];
        for dy in -d..=d {
            for dx in -d..=d {
                let (x, y) = (t.x as i64 + dx, t.y as i64 + dy);
                if x < 0 || y < 0 || x >= res || y >= res {
                    continue;
                }
                if let Some(j) = table.at(x as usize, y as usize) {
                    if table.texels[j].chart == t.chart && layer.visible[j] {
                        border[j] = true;
                    }
                }
            }
        }
    }
    table.views[k].border = border;
    Ok(())
}

pub fn detect_all_borders(table: &mut TexelTable, dilate_px: usize) -> Result<()> {
    for k in 0..table.views.len() {
        detect_borders(table, k, dilate_px)?;
    }
    Ok(())
}

/// Index of the highest-priority view among those accepted by `filter`;
/// ties keep the lowest index.
fn argmax_view(table: &TexelTable, i: usize, filter: impl Fn(&ViewLayer) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (k, layer) in table.views.iter().enumerate() {
        if filter(layer) && best.is_none_or(|(_, p)| layer.priority[i] > p) {
            best = Some((k, layer.priority[i]));
        }
    }
    best.map(|(k, _)| k)
}

/// View chosen per texel by naive painting.
pub fn choose_naive(table: &TexelTable) -> Vec<usize> {
    (0..table.texels.len())
        .into_par_iter()
        .map(|i| {
            argmax_view(table, i, |l| l.visible[i])
                .or_else(|| argmax_view(table, i, |_| true))
                .unwrap_or(0)
        })
        .collect()
}

/// View chosen per texel by Non-Border-First painting.
pub fn choose_nbf(table: &TexelTable) -> Vec<usize> {
    (0..table.texels.len())
        .into_par_iter()
        .map(|i| {
            argmax_view(table, i, |l| l.visible[i] && !l.border[i])
                .or_else(|| argmax_view(table, i, |l| l.visible[i] && l.border[i]))
                .or_else(|| argmax_view(table, i, |_| true))
                .unwrap_or(0)
        })
        .collect()
}

fn check_images(table: &TexelTable, images: &[RgbImage]) -> Result<()> {
    if table.views.len() != images.len() {
        return Err(Error::precondition(format!(
            "{} view layers but {} images",
            table.views.len(),
            images.len()
        )));
    }
    if table.views.is_empty() {
        return Err(Error::precondition("no views to paint from"));
    }
    Ok(())
}

#[inline]
fn sample(images: &[RgbImage], table: &TexelTable, k: usize, i: usize) -> Rgb {
    let layer = &table.views[k];
    let [x, y] = layer.pixel[i];
    images[k].sample_bilinear_masked(x as f64, y as f64, layer.taps.get(i).copied().unwrap_or(0b1111))
}

/// Writes per-texel colors into a fresh atlas (invalid texels unknown).
fn atlas_from(table: &TexelTable, colors: &[Rgb]) -> TextureAtlas {
    let mut atlas = TextureAtlas::new(table.resolution, table.resolution);
    for (t, c) in table.texels.iter().zip(colors) {
        atlas.set(t.x as usize, t.y as usize, *c);
    }
    atlas
}

fn paint_chosen(table: &TexelTable, images: &[RgbImage], chosen: &[usize]) -> TextureAtlas {
    let colors: Vec<Rgb> = (0..table.texels.len())
        .into_par_iter()
        .map(|i| sample(images, table, chosen[i], i))
        .collect();
    atlas_from(table, &colors)
}

/// Naive painting followed by seam bleed.
pub fn paint_naive(table: &TexelTable, images: &[RgbImage]) -> Result<TextureAtlas> {
    check_images(table, images)?;
    Ok(seam_bleed(&paint_chosen(table, images, &choose_naive(table)), SEAM_BLEED_PASSES))
}

/// Non-Border-First painting followed by seam bleed. Borders must already
/// be detected.
pub fn paint_nbf(table: &TexelTable, images: &[RgbImage]) -> Result<TextureAtlas> {
    check_images(table, images)?;
    Ok(seam_bleed(&paint_chosen(table, images, &choose_nbf(table)), SEAM_BLEED_PASSES))
}

/// Starting point of [`optimize_atlas`].
#[derive(Clone, Debug)]
pub enum AtlasInit<'a> {
    Atlas(&'a TextureAtlas),
    Random { seed: Option<u64> },
}

/// Uniform random colors on valid texels.
pub fn random_atlas(table: &TexelTable, seed: u64) -> TextureAtlas {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors: Vec<Rgb> = (0..table.texels.len())
        .map(|_| [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()])
        .collect();
    atlas_from(table, &colors)
}

/// Exact minimizer of the per-texel squared error: each texel becomes the
/// mean of its samples over the views where it is visible (and off the
/// border when `exclude_borders`). Texels without samples keep `init`.
pub fn optimize_atlas(init: AtlasInit, table: &TexelTable, images: &[RgbImage], exclude_borders: bool) -> Result<TextureAtlas> {
    check_images(table, images)?;
    let base = match init {
        AtlasInit::Atlas(a) => {
            if a.dims() != (table.resolution, table.resolution) {
                return Err(Error::precondition("initial atlas resolution differs from the texel table"));
            }
            a.clone()
        }
        AtlasInit::Random { seed: Some(s) } => random_atlas(table, s),
        AtlasInit::Random { seed: None } => {
            return Err(Error::precondition("random initialization needs a seed"));
        }
    };
    let colors: Vec<Rgb> = (0..table.texels.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = [0f64; 3];
            let mut n = 0usize;
            for (k, layer) in table.views.iter().enumerate() {
                if layer.visible[i] && !(exclude_borders && layer.border[i]) {
                    let c = sample(images, table, k, i);
                    for ch in 0..3 {
                        acc[ch] += c[ch] as f64;
                    }
                    n += 1;
                }
            }
            let t = &table.texels[i];
            if n == 0 {
                base.get(t.x as usize, t.y as usize)
            } else {
                acc.map(|v| (v / n as f64) as f32)
            }
        })
        .collect();
    Ok(atlas_from(table, &colors))
}

/// Gradient descent on Σ_k Σ_pixels ‖bilinear(atlas, uv(pixel)) − I_k‖²
/// with per-texel normalized steps. Pixels whose covering texel is a border
/// texel of that view are skipped when `exclude_borders`.
#[allow(clippy::too_many_arguments)]
pub fn refine_atlas(
    atlas: &TextureAtlas,
    table: &TexelTable,
    mesh: &TriangleMesh,
    views: &[View],
    images: &[RgbImage],
    exclude_borders: bool,
    iters: usize,
    step: f64,
) -> Result<TextureAtlas> {
    check_images(table, images)?;
    if iters == 0 {
        return Ok(atlas.clone());
    }
    let uvs = mesh
        .uv_corners
        .as_ref()
        .ok_or_else(|| Error::precondition("mesh has no uv coordinates"))?;
    let res = table.resolution;
    // (view, pixel) → continuous atlas coordinates
    let mut samples: Vec<(usize, usize, [f64; 2])> = Vec::new();
    for (k, view) in views.iter().enumerate() {
        let zb = render_zbuffer(mesh, view);
        for (p, &f) in zb.face.iter().enumerate() {
            if f == u32::MAX {
                continue;
            }
            let b = zb.bary[p];
            let tri = uvs[f as usize];
            let uv = [
                b[0] * tri[0][0] + b[1] * tri[1][0] + b[2] * tri[2][0],
                b[0] * tri[0][1] + b[1] * tri[1][1] + b[2] * tri[2][1],
            ];
            let a = uv_to_px(uv, res);
            if exclude_borders {
                let (tx, ty) = ((a[0].floor() as usize).min(res - 1), (a[1].floor() as usize).min(res - 1));
                if let Some(i) = table.at(tx, ty) {
                    if table.views[k].border[i] {
                        continue;
                    }
                }
            }
            samples.push((k, p, a));
        }
    }
    let mut cur = atlas.clone();
    for _ in 0..iters {
        let mut grad = vec![[0f64; 3]; res * res];
        let mut weight = vec![0f64; res * res];
        for &(k, p, a) in &samples {
            let img = &images[k];
            let target = img.data()[p];
            let pred = cur.sample_bilinear(a[0], a[1]);
            let r = [0, 1, 2].map(|c| (pred[c] - target[c]) as f64);
            for (x, y, w) in bilinear_taps(a, res) {
                let i = y * res + x;
                for c in 0..3 {
                    grad[i][c] += w * r[c];
                }
                weight[i] += w;
            }
        }
        for t in &table.texels {
            let i = t.y as usize * res + t.x as usize;
            if weight[i] > 0.0 {
                let c = cur.get(t.x as usize, t.y as usize);
                let next = [0, 1, 2].map(|ch| (c[ch] as f64 - step * grad[i][ch] / weight[i]).clamp(0.0, 1.0) as f32);
                cur.set(t.x as usize, t.y as usize, next);
            }
        }
    }
    Ok(cur)
}

/// The four texels and weights of a bilinear lookup at continuous atlas
/// coordinates, with the same edge clamping as [`RgbImage::sample_bilinear`].
fn bilinear_taps(a: [f64; 2], res: usize) -> [(usize, usize, f64); 4] {
    let max = (res - 1) as f64;
    let x = (a[0] - 0.5).clamp(0.0, max);
    let y = (a[1] - 0.5).clamp(0.0, max);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let (x1, y1) = ((x0 + 1).min(res - 1), (y0 + 1).min(res - 1));
    [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ]
}

/// Synchronous dilation of painted texels into empty ones: each pass gives
/// every empty texel with painted 8-neighbours their average.
pub fn seam_bleed(atlas: &TextureAtlas, passes: usize) -> TextureAtlas {
    let (w, h) = atlas.dims();
    let mut cur = atlas.clone();
    for _ in 0..passes {
        let prev = cur.clone();
        let updates: Vec<(usize, usize, Rgb)> = (0..h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let prev = &prev;
                (0..w).filter_map(move |x| {
                    if prev.is_known(x, y) {
                        return None;
                    }
                    let mut acc = [0f32; 3];
                    let mut n = 0;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            if prev.is_known(nx as usize, ny as usize) {
                                let c = prev.get(nx as usize, ny as usize);
                                for ch in 0..3 {
                                    acc[ch] += c[ch];
                                }
                                n += 1;
                            }
                        }
                    }
                    (n > 0).then(|| (x, y, acc.map(|v| v / n as f32)))
                })
            })
            .collect();
        if updates.is_empty() {
            break;
        }
        for (x, y, c) in updates {
            cur.set(x, y, c);
        }
    }
    cur
}

/// Options shared by all strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaintParams {
    pub strategy: Strategy,
    pub seed: Option<u64>,
    /// Iterations of the optional refinement pass for optimization strategies.
    pub refine_iters: usize,
    pub refine_step: f64,
}

impl Default for PaintParams {
    fn default() -> Self {
        PaintParams {
            strategy: Strategy::Nbf,
            seed: Some(0),
            refine_iters: 0,
            refine_step: DEFAULT_REFINE_STEP,
        }
    }
}

/// Output of [`paint`]: the bled atlas plus the view chosen per texel by
/// the selection strategies.
pub struct Painted {
    pub atlas: TextureAtlas,
    pub chosen: Option<Vec<usize>>,
}

/// Runs one strategy end to end on a table whose view layers (and borders,
/// for the border-aware strategies) are filled.
pub fn paint(table: &TexelTable, images: &[RgbImage], mesh: &TriangleMesh, views: &[View], params: &PaintParams) -> Result<Painted> {
    check_images(table, images)?;
    let (atlas, chosen) = match params.strategy {
        Strategy::Naive => {
            let c = choose_naive(table);
            (paint_chosen(table, images, &c), Some(c))
        }
        Strategy::Nbf => {
            let c = choose_nbf(table);
            (paint_chosen(table, images, &c), Some(c))
        }
        Strategy::OptNaive | Strategy::OptNbf | Strategy::OptScratch => {
            let exclude = params.strategy == Strategy::OptNbf;
            let init = match params.strategy {
                Strategy::OptNaive => paint_chosen(table, images, &choose_naive(table)),
                Strategy::OptNbf => paint_chosen(table, images, &choose_nbf(table)),
                _ => match params.seed {
                    Some(s) => random_atlas(table, s),
                    None => return Err(Error::precondition("opt-scratch needs a seed")),
                },
            };
            let a = optimize_atlas(AtlasInit::Atlas(&init), table, images, exclude)?;
            let a = refine_atlas(&a, table, mesh, views, images, exclude, params.refine_iters, params.refine_step)?;
            (a, None)
        }
    };
    Ok(Painted {
        atlas: seam_bleed(&atlas, SEAM_BLEED_PASSES),
        chosen,
    })
}

/// Debug image: chosen view per texel through the fixed palette.
pub fn chosen_view_image(table: &TexelTable, chosen: &[usize]) -> RgbImage {
    let mut img = RgbImage::filled(table.resolution, table.resolution, BLACK);
    for (t, &k) in table.texels.iter().zip(chosen) {
        img.set(t.x as usize, t.y as usize, palette(k));
    }
    img
}

/// Debug masks of view `k`: (visible, border) over the atlas.
pub fn layer_masks(table: &TexelTable, k: usize) -> (Mask, Mask) {
    let res = table.resolution;
    let mut vis = Mask::new(res, res);
    let mut bor = Mask::new(res, res);
    for (i, t) in table.texels.iter().enumerate() {
        vis.set(t.x as usize, t.y as usize, table.views[k].visible[i]);
        bor.set(t.x as usize, t.y as usize, table.views[k].border[i]);
    }
    (vis, bor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::View;
    use crate::mesh::{shapes, Vec3};
    use crate::uvatlas::{charts_from_uvs, rasterize_texels, Texel};

    /// Synthetic table: one chart filling a `res`² square, given per-view
    /// visibility and priority.
    fn square_table(res: usize, layers: Vec<(Vec<bool>, f32)>) -> TexelTable {
        let mut texels = Vec::new();
        let mut index = vec![u32::MAX; res * res];
        for y in 0..res {
            for x in 0..res {
                index[y * res + x] = texels.len() as u32;
                texels.push(Texel {
                    x: x as u32,
                    y: y as u32,
                    chart: 0,
                    face: 0,
                    position: Vec3::new(x as f64, y as f64, 0.0),
                    normal: Vec3::z(),
                });
            }
        }
        let n = texels.len();
        let views = layers
            .into_iter()
            .map(|(visible, pr)| ViewLayer {
                visible,
                border: vec![false; n],
                priority: vec![pr; n],
                pixel: texels.iter().map(|t| [t.x as f32 + 0.5, t.y as f32 + 0.5]).collect(),
                taps: vec![0b1111; n],
            })
            .collect();
        TexelTable {
            resolution: res,
            index,
            texels,
            overlap: false,
            views,
        }
    }

    fn solid(res: usize, c: Rgb) -> RgbImage {
        RgbImage::filled(res, res, c)
    }

    #[test]
    fn border_band_of_half_visible_chart() {
        let res = 40;
        // left half (x < 20) visible
        let visible: Vec<bool> = (0..res * res).map(|i| i % res < 20).collect();
        for d in [0usize, 2, 3] {
            let mut t = square_table(res, vec![(visible.clone(), 1.0)]);
            detect_borders(&mut t, 0, d).unwrap();
            // edges at x = 19; band x in [19 - d, 19], all rows; chart touches
            // the atlas frame only, which does not count
            let expected = res * (d + 1);
            let count = t.views[0].border.iter().filter(|&&b| b).count();
            assert_eq!(count, expected, "dilate {d}");
            for (i, tx) in t.texels.iter().enumerate() {
                if t.views[0].border[i] {
                    assert!(tx.x as usize >= 19 - d && tx.x < 20);
                }
            }
        }
    }

    #[test]
    fn fully_visible_chart_interior_has_no_border() {
        let mut t = square_table(16, vec![(vec![true; 256], 1.0)]);
        detect_borders(&mut t, 0, 3).unwrap();
        assert!(t.views[0].border.iter().all(|&b| !b));
    }

    #[test]
    fn invalid_neighbours_make_a_ring() {
        // a 6x6 chart inside a 10x10 atlas
        let mut t = square_table(10, vec![(vec![true; 100], 1.0)]);
        let keep: Vec<usize> = (0..100).filter(|i| (2..8).contains(&(i % 10)) && (2..8).contains(&(i / 10))).collect();
        let texels: Vec<Texel> = keep.iter().map(|&i| t.texels[i]).collect();
        let mut index = vec![u32::MAX; 100];
        for (k, tx) in texels.iter().enumerate() {
            index[tx.y as usize * 10 + tx.x as usize] = k as u32;
        }
        t.texels = texels;
        t.index = index;
        let n = keep.len();
        t.views[0] = ViewLayer {
            visible: vec![true; n],
            border: vec![false; n],
            priority: vec![1.0; n],
            pixel: vec![[0.0; 2]; n],
            taps: vec![0b1111; n],
        };
        detect_borders(&mut t, 0, 0).unwrap();
        assert_eq!(t.views[0].border.iter().filter(|&&b| b).count(), 36 - 16);
    }

    #[test]
    fn naive_takes_highest_visible_priority() {
        let n = 16;
        let mut t = square_table(4, vec![(vec![true; n], 0.4), (vec![true; n], 0.9), (vec![false; n], 1.0)]);
        assert!(choose_naive(&t).iter().all(|&k| k == 1));
        for l in &mut t.views {
            l.visible = vec![false; n];
        }
        assert!(choose_naive(&t).iter().all(|&k| k == 2));
    }

    #[test]
    fn ties_go_to_lowest_view() {
        let t = square_table(2, vec![(vec![true; 4], 0.5), (vec![true; 4], 0.5)]);
        assert!(choose_naive(&t).iter().all(|&k| k == 0));
        assert!(choose_nbf(&t).iter().all(|&k| k == 0));
    }

    #[test]
    fn nbf_prefers_non_border_view() {
        let n = 9;
        let mut t = square_table(3, vec![(vec![true; n], 0.9), (vec![true; n], 0.3)]);
        t.views[0].border = vec![true; n];
        assert!(choose_nbf(&t).iter().all(|&k| k == 1));
        assert!(choose_naive(&t).iter().all(|&k| k == 0));
        // only border views: highest-priority border view
        t.views[1].border = vec![true; n];
        assert!(choose_nbf(&t).iter().all(|&k| k == 0));
    }

    #[test]
    fn argmax_invariant_under_monotone_transform() {
        let n = 4;
        let mut t = square_table(2, vec![(vec![true; n], 0.2), (vec![true; n], -0.1), (vec![true; n], 0.7)]);
        let before = choose_naive(&t);
        for l in &mut t.views {
            for p in &mut l.priority {
                *p = (*p * 3.0).exp();
            }
        }
        assert_eq!(choose_naive(&t), before);
    }

    #[test]
    fn mean_of_two_views() {
        let n = 4;
        let t = square_table(2, vec![(vec![true; n], 0.5), (vec![true; n], 0.4)]);
        let imgs = [solid(2, [0.2, 0.4, 0.6]), solid(2, [0.6, 0.0, 1.0])];
        let a = optimize_atlas(AtlasInit::Random { seed: Some(1) }, &t, &imgs, false).unwrap();
        for c in a.data() {
            assert!((c[0] - 0.4).abs() < 1e-6 && (c[1] - 0.2).abs() < 1e-6 && (c[2] - 0.8).abs() < 1e-6);
        }
        assert!(optimize_atlas(AtlasInit::Random { seed: None }, &t, &imgs, false).is_err());
    }

    #[test]
    fn uncovered_texels_keep_init() {
        let t = square_table(2, vec![(vec![false; 4], 0.5)]);
        let init = random_atlas(&t, 3);
        let a = optimize_atlas(AtlasInit::Atlas(&init), &t, &[solid(2, BLACK)], false).unwrap();
        assert_eq!(a, init);
    }

    #[test]
    fn seam_bleed_fills_gutter() {
        let mut a = TextureAtlas::new(8, 8);
        a.set(3, 3, [1.0, 0.0, 0.0]);
        let b = seam_bleed(&a, 2);
        assert_eq!(b.known_count(), 25);
        assert!(b.data().iter().zip(b.known()).all(|(c, &k)| !k || *c == [1.0, 0.0, 0.0]));
    }

    /// Fronto-parallel quad seen by one camera: every texel visible, frontal.
    fn quad_scene(res: usize) -> (TriangleMesh, TexelTable, View) {
        let mut quad = shapes::planar_grid(1, 1.0, 0.0);
        quad.uv_corners = Some(
            quad.faces
                .iter()
                .map(|f| f.map(|v| [quad.vertices[v as usize].x + 0.5, quad.vertices[v as usize].y + 0.5]))
                .collect(),
        );
        let charts = charts_from_uvs(&quad, res).unwrap();
        let table = rasterize_texels(&quad, &charts, res).unwrap();
        let view = View::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), 50f64.to_radians(), 128, 128).unwrap();
        (quad, table, view)
    }

    #[test]
    fn quad_is_visible_and_frontal() {
        let (quad, mut table, view) = quad_scene(64);
        let depth = crate::projection::render_mesh_depth(&quad, &view);
        compute_view_layers(&mut table, std::slice::from_ref(&view), &[depth], 5e-3).unwrap();
        assert!(table.views[0].visible.iter().all(|&v| v));
        assert!(table.views[0].priority.iter().all(|&p| (p - 1.0).abs() < 1e-6));
    }

    #[test]
    fn single_view_strategies_agree() {
        let (quad, mut table, view) = quad_scene(64);
        let depth = crate::projection::render_mesh_depth(&quad, &view);
        compute_view_layers(&mut table, std::slice::from_ref(&view), &[depth], 5e-3).unwrap();
        detect_all_borders(&mut table, 2).unwrap();
        let mut img = RgbImage::new(128, 128);
        for y in 0..128 {
            for x in 0..128 {
                img.set(x, y, [x as f32 / 128.0, y as f32 / 128.0, 0.5]);
            }
        }
        let imgs = [img];
        let naive = paint_naive(&table, &imgs).unwrap();
        let nbf = paint_nbf(&table, &imgs).unwrap();
        assert_eq!(naive, nbf);
        let opt = optimize_atlas(AtlasInit::Random { seed: Some(2) }, &table, &imgs, false).unwrap();
        for t in &table.texels {
            assert_eq!(opt.get(t.x as usize, t.y as usize), naive.get(t.x as usize, t.y as usize));
        }
        let views = [view];
        for s in Strategy::ALL {
            let p = paint(&table, &imgs, &quad, &views, &PaintParams { strategy: s, ..Default::default() }).unwrap();
            for t in &table.texels {
                let (a, b) = (p.atlas.get(t.x as usize, t.y as usize), naive.get(t.x as usize, t.y as usize));
                if s != Strategy::OptNbf {
                    assert_eq!(a, b, "{s}");
                }
            }
        }
    }

    #[test]
    fn refinement_does_not_increase_loss() {
        let (quad, mut table, view) = quad_scene(32);
        let depth = crate::projection::render_mesh_depth(&quad, &view);
        compute_view_layers(&mut table, std::slice::from_ref(&view), &[depth], 5e-3).unwrap();
        let mut img = RgbImage::new(128, 128);
        for y in 0..128 {
            for x in 0..128 {
                img.set(x, y, [((x / 7 + y / 5) % 2) as f32, 0.3, 0.6]);
            }
        }
        let imgs = [img];
        let views = [view];
        let start = random_atlas(&table, 7);
        let loss = |a: &TextureAtlas| -> f64 {
            let uvs = quad.uv_corners.as_ref().unwrap();
            let zb = render_zbuffer(&quad, &views[0]);
            let mut l = 0.0;
            for (p, &f) in zb.face.iter().enumerate() {
                if f == u32::MAX {
                    continue;
                }
                let b = zb.bary[p];
                let tri = uvs[f as usize];
                let uv = [0, 1].map(|d| b[0] * tri[0][d] + b[1] * tri[1][d] + b[2] * tri[2][d]);
                let ap = uv_to_px(uv, 32);
                let pred = a.sample_bilinear(ap[0], ap[1]);
                let target = imgs[0].data()[p];
                l += (0..3).map(|c| ((pred[c] - target[c]) as f64).powi(2)).sum::<f64>();
            }
            l
        };
        let refined = refine_atlas(&start, &table, &quad, &views, &imgs, false, 20, 0.1).unwrap();
        assert!(loss(&refined) < loss(&start));
        assert_eq!(refine_atlas(&start, &table, &quad, &views, &imgs, false, 0, 0.1).unwrap(), start);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("best".parse::<Strategy>().is_err());
        assert_eq!(default_dilate_px(1024), 3);
        assert_eq!(default_dilate_px(512), 2);
    }
}
