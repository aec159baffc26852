//! Scanline-free triangle rasterization with edge functions, the top-left
//! fill rule and pixel-center sampling. Used for depth maps, textured
//! renders and texel tables.

use crate::camera::View;
use crate::mesh::{TriangleMesh, Vec3};
use crate::raster::DepthMap;

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Whether a pixel center exactly on edge a→b belongs to the triangle
/// (interior on the positive side, y pointing down).
#[inline]
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Visits every pixel whose center lies inside the 2D triangle, passing the
/// pixel and the affine barycentric weights of its center.
pub fn raster_2d(tri: [[f64; 2]; 3], width: usize, height: usize, mut visit: impl FnMut(usize, usize, [f64; 3])) {
    let [mut a, mut b, c] = tri;
    let mut area = edge(a, b, c);
    let mut swapped = false;
    if area < 0.0 {
        std::mem::swap(&mut a, &mut b);
        area = -area;
        swapped = true;
    }
    if !(area > 0.0) || !area.is_finite() {
        return;
    }
    let min_x = a[0].min(b[0]).min(c[0]);
    let max_x = a[0].max(b[0]).max(c[0]);
    let min_y = a[1].min(b[1]).min(c[1]);
    let max_y = a[1].max(b[1]).max(c[1]);
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let (own_bc, own_ca, own_ab) = (owns_edge(b, c), owns_edge(c, a), owns_edge(a, b));
    for y in y0 as usize..=y1 as usize {
        let py = y as f64 + 0.5;
        for x in x0 as usize..=x1 as usize {
            let p = [x as f64 + 0.5, py];
            let w0 = edge(b, c, p);
            let w1 = edge(c, a, p);
            let w2 = edge(a, b, p);
            let inside = (w0 > 0.0 || (w0 == 0.0 && own_bc))
                && (w1 > 0.0 || (w1 == 0.0 && own_ca))
                && (w2 > 0.0 || (w2 == 0.0 && own_ab));
            if inside {
                let l = [w0 / area, w1 / area, w2 / area];
                visit(x, y, if swapped { [l[1], l[0], l[2]] } else { l });
            }
        }
    }
}

/// A covered pixel of a projected 3D triangle.
#[derive(Clone, Copy, Debug)]
pub struct Fragment {
    pub x: usize,
    pub y: usize,
    /// Depth along the camera forward axis.
    pub depth: f64,
    /// Perspective-correct barycentric weights on the original triangle.
    pub bary: [f64; 3],
}

/// Rasterizes a world-space triangle through `view`, clipping at the near
/// plane.
pub fn raster_triangle(view: &View, tri: &[Vec3; 3], mut visit: impl FnMut(Fragment)) {
    let cam = tri.map(|p| view.to_camera(&p));
    let near = view.near;
    if cam.iter().all(|c| c.z < near) {
        return;
    }
    // polygon of (camera point, barycentric weights) clipped to z >= near
    let unit = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut poly: Vec<(Vec3, [f64; 3])> = Vec::with_capacity(4);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (ci, cj) = (cam[i], cam[j]);
        let (in_i, in_j) = (ci.z >= near, cj.z >= near);
        if in_i {
            poly.push((ci, unit[i]));
        }
        if in_i != in_j {
            let t = (near - ci.z) / (cj.z - ci.z);
            let p = ci + (cj - ci) * t;
            let mut w = [0.0; 3];
            w[i] = 1.0 - t;
            w[j] = t;
            poly.push((Vec3::new(p.x, p.y, near), w));
        }
    }
    let screen: Vec<([f64; 2], f64, [f64; 3])> = poly
        .iter()
        .map(|(c, w)| {
            let (x, y) = view.camera_to_pixel(c);
            ([x, y], 1.0 / c.z, *w)
        })
        .collect();
    for k in 1..screen.len().saturating_sub(1) {
        let s = [screen[0], screen[k], screen[k + 1]];
        raster_2d([s[0].0, s[1].0, s[2].0], view.width, view.height, |x, y, l| {
            let inv_z = l[0] * s[0].1 + l[1] * s[1].1 + l[2] * s[2].1;
            let depth = 1.0 / inv_z;
            let mut bary = [0.0; 3];
            for (m, sv) in s.iter().enumerate() {
                for (b, w) in bary.iter_mut().zip(sv.2) {
                    *b += l[m] * sv.1 * w;
                }
            }
            for b in &mut bary {
                *b *= depth;
            }
            visit(Fragment { x, y, depth, bary });
        });
    }
}

/// Per-pixel nearest surface of a mesh seen through a view.
#[derive(Clone, Debug)]
pub struct ZBuffer {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    /// Winning face per pixel, `u32::MAX` for background.
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
}

impl ZBuffer {
    pub fn to_depth_map(&self) -> DepthMap {
        let mut map = DepthMap::new(self.width, self.height);
        for (i, (&d, &f)) in self.depth.iter().zip(&self.face).enumerate() {
            if f != u32::MAX {
                map.set(i % self.width, i / self.width, d as f32);
            }
        }
        map
    }
}

/// Z-buffers every face in id order with a strict depth test, so equal
/// depths keep the smaller face id.
pub fn render_zbuffer(mesh: &TriangleMesh, view: &View) -> ZBuffer {
    let (w, h) = view.dims();
    let mut zb = ZBuffer {
        width: w,
        height: h,
        depth: vec![f64::INFINITY; w * h],
        face: vec![u32::MAX; w * h],
        bary: vec![[0.0; 3]; w * h],
    };
    for f in 0..mesh.faces.len() {
        let tri = mesh.corners(f);
        raster_triangle(view, &tri, |frag| {
            let i = frag.y * w + frag.x;
            if frag.depth < zb.depth[i] {
                zb.depth[i] = frag.depth;
                zb.face[i] = f as u32;
                zb.bary[i] = frag.bary;
            }
        });
    }
    zb
}
