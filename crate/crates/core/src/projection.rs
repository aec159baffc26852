//! Points and meshes to per-view rasters.

use crate::camera::View;
use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};
use crate::raster::{DepthMap, Mask, Rgb, RgbImage};
use crate::rasterizer::render_zbuffer;

pub const DEFAULT_SPLAT_PX: usize = 1;
pub const DEFAULT_MASK_SPLAT_PX: usize = 5;
pub const DEFAULT_CLOSE_ITER: usize = 2;
pub const DEFAULT_ERODE_ITER: usize = 2;

/// Pixel block painted by a splat of size `s` around pixel `(x, y)`,
/// clipped to the image.
fn block(x: usize, y: usize, s: usize, w: usize, h: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let lo = (s as i64 - 1) / 2;
    let hi = s as i64 - 1 - lo;
    let clip = |c: usize, n: usize| {
        let a = (c as i64 - lo).max(0) as usize;
        let b = ((c as i64 + hi + 1).min(n as i64)).max(0) as usize;
        a..b
    };
    (clip(x, w), clip(y, h))
}

/// Z-buffered splatting. Each point paints a `splat_px`² block around the
/// pixel containing its projection; the nearest point wins every pixel and
/// equal depths keep the earlier point.
pub fn splat_points(points: &[Vec3], colors: &[Rgb], view: &View, splat_px: usize) -> Result<(RgbImage, DepthMap)> {
    if splat_px == 0 {
        return Err(Error::precondition("splat size must be at least 1 pixel"));
    }
    if points.len() != colors.len() {
        return Err(Error::precondition("points and colors differ in length"));
    }
    let (w, h) = view.dims();
    let mut image = RgbImage::new(w, h);
    let mut depth = DepthMap::new(w, h);
    let mut zbuf = vec![f64::INFINITY; w * h];
    for (p, c) in points.iter().zip(colors) {
        let proj = view.project(p);
        let Some((px, py)) = proj.pixel(w, h) else {
            continue;
        };
        let (xs, ys) = block(px, py, splat_px, w, h);
        for y in ys {
            for x in xs.clone() {
                let i = y * w + x;
                if proj.depth < zbuf[i] {
                    zbuf[i] = proj.depth;
                    image.set(x, y, *c);
                    depth.set(x, y, proj.depth as f32);
                }
            }
        }
    }
    Ok((image, depth))
}

/// Splat coverage with a large point size, closed then eroded with a 3×3
/// square.
pub fn foreground_mask(points: &[Vec3], view: &View, mask_splat_px: usize, close_iter: usize, erode_iter: usize) -> Result<Mask> {
    if mask_splat_px == 0 {
        return Err(Error::precondition("mask splat size must be at least 1 pixel"));
    }
    let (w, h) = view.dims();
    let mut mask = Mask::new(w, h);
    for p in points {
        if let Some((px, py)) = view.project(p).pixel(w, h) {
            let (xs, ys) = block(px, py, mask_splat_px, w, h);
            for y in ys {
                for x in xs.clone() {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask.close_n(close_iter).erode_n(erode_iter))
}

pub fn render_mesh_depth(mesh: &TriangleMesh, view: &View) -> DepthMap {
    render_zbuffer(mesh, view).to_depth_map()
}
