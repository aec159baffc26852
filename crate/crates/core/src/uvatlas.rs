//! Chart segmentation, packing, and the texel table that links every atlas
//! texel to a surface point.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Uv, Vec3};
use crate::raster::RgbImage;
use crate::rasterizer::raster_2d;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub id: u32,
    pub face_ids: Vec<u32>,
    /// `[x0, y0, x1, y1]` in atlas pixels (y down).
    pub uv_bbox: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnwrapParams {
    pub atlas_res: usize,
    pub gutter_px: usize,
    pub max_angle_deg: f64,
}

impl Default for UnwrapParams {
    fn default() -> Self {
        UnwrapParams {
            atlas_res: 1024,
            gutter_px: 4,
            max_angle_deg: 60.0,
        }
    }
}

/// Atlas pixel coordinates of a UV.
#[inline]
pub fn uv_to_px(uv: Uv, res: usize) -> [f64; 2] {
    [uv[0] * res as f64, (1.0 - uv[1]) * res as f64]
}

#[inline]
fn px_to_uv(p: [f64; 2], res: usize) -> Uv {
    [p[0] / res as f64, 1.0 - p[1] / res as f64]
}

/// Region-grows charts from seeds in face-id order.
fn grow_charts(mesh: &TriangleMesh, adjacency: &[[Option<u32>; 3]], normals: &[Vec3], pool: &[u32], cos_max: f64) -> Vec<Vec<u32>> {
    let mut in_pool = vec![false; mesh.faces.len()];
    for &f in pool {
        in_pool[f as usize] = true;
    }
    let mut taken = vec![false; mesh.faces.len()];
    let mut charts = Vec::new();
    for &seed in pool {
        if taken[seed as usize] {
            continue;
        }
        let n0 = normals[seed as usize];
        let mut chart = vec![seed];
        taken[seed as usize] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            for g in adjacency[f as usize].iter().flatten() {
                let gi = *g as usize;
                if in_pool[gi] && !taken[gi] && normals[gi].dot(&n0) >= cos_max {
                    taken[gi] = true;
                    chart.push(*g);
                    queue.push_back(*g);
                }
            }
        }
        chart.sort_unstable();
        charts.push(chart);
    }
    charts
}

/// Connected components of `faces` under `adjacency`.
fn components(faces: &[u32], adjacency: &[[Option<u32>; 3]]) -> Vec<Vec<u32>> {
    let set: HashMap<u32, usize> = faces.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut seen = vec![false; faces.len()];
    let mut out = Vec::new();
    for i in 0..faces.len() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        let mut comp = vec![faces[i]];
        let mut k = 0;
        while k < comp.len() {
            let f = comp[k];
            k += 1;
            for g in adjacency[f as usize].iter().flatten() {
                if let Some(&j) = set.get(g) {
                    if !seen[j] {
                        seen[j] = true;
                        comp.push(*g);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Orthonormal tangent basis of a plane with normal `n`.
fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t = n.cross(&helper).normalize();
    (t, n.cross(&t))
}

struct Flat {
    faces: Vec<u32>,
    /// Per face, the 2D corner coordinates in world units.
    corners: Vec<[[f64; 2]; 3]>,
    min: [f64; 2],
    size: [f64; 2],
}

fn project_chart(mesh: &TriangleMesh, faces: &[u32]) -> (Flat, Vec<u32>) {
    let mut n = Vec3::zeros();
    for &f in faces {
        n += mesh.face_cross(f as usize);
    }
    let n = n.try_normalize(0.0).unwrap_or_else(|| mesh.face_normal(faces[0] as usize));
    let (t, b) = plane_basis(&n);
    let mut kept = Vec::new();
    let mut corners = Vec::new();
    let mut rejected = Vec::new();
    for &f in faces {
        let c = mesh.corners(f as usize).map(|p| [p.dot(&t), p.dot(&b)]);
        let area = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[1][1] - c[0][1]) * (c[2][0] - c[0][0]);
        // projected area is positive for faces agreeing with n
        if area > 0.0 || faces.len() == 1 {
            kept.push(f);
            corners.push(c);
        } else {
            rejected.push(f);
        }
    }
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for c in corners.iter().flatten() {
        for d in 0..2 {
            min[d] = min[d].min(c[d]);
            max[d] = max[d].max(c[d]);
        }
    }
    (
        Flat {
            faces: kept,
            corners,
            min,
            size: [max[0] - min[0], max[1] - min[1]],
        },
        rejected,
    )
}

/// Shelf packing of `sizes` (pixels, already scaled) into a `res`² atlas;
/// returns top-left positions or `None` when it does not fit.
fn shelf_pack(sizes: &[[f64; 2]], order: &[usize], res: usize, gutter: usize) -> Option<Vec<[f64; 2]>> {
    let limit = res as f64 - gutter as f64 / 2.0;
    let start = gutter as f64 / 2.0;
    let mut pos = vec![[0.0; 2]; sizes.len()];
    let (mut x, mut y, mut shelf_h) = (start, start, 0.0f64);
    for &i in order {
        let [w, h] = sizes[i].map(|s| s.ceil().max(1.0));
        if x + w > limit && x > start {
            y += shelf_h + gutter as f64;
            x = start;
            shelf_h = 0.0;
        }
        if x + w > limit || y + h > limit {
            return None;
        }
        pos[i] = [x, y];
        x += w + gutter as f64;
        shelf_h = shelf_h.max(h);
    }
    Some(pos)
}

/// Built-in unwrapper: planar charts from normal-cone region growing,
/// shelf-packed at a uniform texel density. Meshes that already carry UVs
/// keep them and only have their charts recovered.
pub fn unwrap(mesh: &TriangleMesh, params: &UnwrapParams) -> Result<(TriangleMesh, Vec<Chart>)> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if mesh.uv_corners.is_some() {
        let charts = charts_from_uvs(mesh, params.atlas_res)?;
        return Ok((mesh.clone(), charts));
    }
    let adjacency = mesh.face_adjacency();
    let normals: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    let cos_max = params.max_angle_deg.to_radians().cos();

    let mut flats: Vec<Flat> = Vec::new();
    let mut pool: Vec<u32> = (0..mesh.faces.len() as u32).collect();
    while !pool.is_empty() {
        let mut next_pool = Vec::new();
        for chart in grow_charts(mesh, &adjacency, &normals, &pool, cos_max) {
            let (flat, rejected) = project_chart(mesh, &chart);
            next_pool.extend(rejected);
            for comp in components(&flat.faces, &adjacency) {
                if comp.len() == flat.faces.len() {
                    flats.push(flat);
                    break;
                }
                let (sub, rest) = project_chart(mesh, &comp);
                next_pool.extend(rest);
                flats.push(sub);
            }
        }
        next_pool.sort_unstable();
        if next_pool.len() == pool.len() {
            // no progress: fall back to one chart per face
            for f in next_pool.drain(..) {
                flats.push(project_chart(mesh, &[f]).0);
            }
        }
        pool = next_pool;
    }
    flats.retain(|f| !f.faces.is_empty());
    flats.sort_by_key(|f| f.faces[0]);

    let res = params.atlas_res;
    let gutter = params.gutter_px;
    let mut order: Vec<usize> = (0..flats.len()).collect();
    order.sort_by(|&a, &b| flats[b].size[1].total_cmp(&flats[a].size[1]).then(a.cmp(&b)));
    let pack_at = |s: f64| {
        let sizes: Vec<[f64; 2]> = flats.iter().map(|f| [f.size[0] * s, f.size[1] * s]).collect();
        shelf_pack(&sizes, &order, res, gutter).map(|p| (p, sizes))
    };
    let largest = flats.iter().map(|f| f.size[0].max(f.size[1])).fold(0.0, f64::max);
    if !(largest > 0.0) {
        return Err(Error::precondition("mesh has no extent to unwrap"));
    }
    let mut lo = 0.0;
    let mut hi = res as f64 / largest;
    if pack_at(0.0).is_none() {
        return Err(Error::PackingOverflow(format!(
            "{} charts do not fit a {res}² atlas with {gutter} px gutters",
            flats.len()
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pack_at(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = lo;
    let (positions, sizes) = pack_at(scale).expect("feasible scale");

    let mut uv_corners = vec![[[0.0; 2]; 3]; mesh.faces.len()];
    let mut charts = Vec::with_capacity(flats.len());
    for (ci, flat) in flats.iter().enumerate() {
        let [ox, oy] = positions[ci];
        for (f, c) in flat.faces.iter().zip(&flat.corners) {
            // flip the chart's second axis so it keeps its orientation in y-down pixels
            uv_corners[*f as usize] = c.map(|p| {
                let px = ox + (p[0] - flat.min[0]) * scale;
                let py = oy + (flat.min[1] + flat.size[1] - p[1]) * scale;
                px_to_uv([px, py], res)
            });
        }
        charts.push(Chart {
            id: ci as u32,
            face_ids: flat.faces.clone(),
            uv_bbox: [ox, oy, ox + sizes[ci][0], oy + sizes[ci][1]],
        });
    }
    let mut out = mesh.clone();
    out.uv_corners = Some(uv_corners);
    Ok((out, charts))
}

/// Charts of a mesh with existing UVs: connected components of faces that
/// share an edge with identical UVs on both sides.
pub fn charts_from_uvs(mesh: &TriangleMesh, atlas_res: usize) -> Result<Vec<Chart>> {
    let uvs = mesh
        .uv_corners
        .as_ref()
        .ok_or_else(|| Error::precondition("mesh has no uv coordinates"))?;
    type Key = (u32, u64, u64, u32, u64, u64);
    let mut edges: HashMap<Key, Vec<u32>> = HashMap::new();
    for (f, tri) in mesh.faces.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (e, (e + 1) % 3);
            let mut ends = [
                (tri[a], uvs[f][a][0].to_bits(), uvs[f][a][1].to_bits()),
                (tri[b], uvs[f][b][0].to_bits(), uvs[f][b][1].to_bits()),
            ];
            ends.sort_unstable();
            edges
                .entry((ends[0].0, ends[0].1, ends[0].2, ends[1].0, ends[1].1, ends[1].2))
                .or_default()
                .push(f as u32);
        }
    }
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); mesh.faces.len()];
    for fs in edges.values() {
        for &a in fs {
            for &b in fs {
                if a != b {
                    adjacency[a as usize].push(b);
                }
            }
        }
    }
    let mut chart_of = vec![u32::MAX; mesh.faces.len()];
    let mut charts = Vec::new();
    for seed in 0..mesh.faces.len() {
        if chart_of[seed] != u32::MAX {
            continue;
        }
        let id = charts.len() as u32;
        chart_of[seed] = id;
        let mut faces = vec![seed as u32];
        let mut k = 0;
        while k < faces.len() {
            let f = faces[k] as usize;
            k += 1;
            for &g in &adjacency[f] {
                if chart_of[g as usize] == u32::MAX {
                    chart_of[g as usize] = id;
                    faces.push(g);
                }
            }
        }
        faces.sort_unstable();
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &f in &faces {
            for uv in &uvs[f as usize] {
                let p = uv_to_px(*uv, atlas_res);
                bbox = [bbox[0].min(p[0]), bbox[1].min(p[1]), bbox[2].max(p[0]), bbox[3].max(p[1])];
            }
        }
        charts.push(Chart {
            id,
            face_ids: faces,
            uv_bbox: bbox,
        });
    }
    Ok(charts)
}

/// One atlas texel that maps onto the surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Texel {
    pub x: u32,
    pub y: u32,
    pub chart: u32,
    pub face: u32,
    pub position: Vec3,
    pub normal: Vec3,
}

/// Per-view texel data, indexed like [`TexelTable::texels`].
#[derive(Clone, Debug, Default)]
pub struct ViewLayer {
    pub visible: Vec<bool>,
    pub border: Vec<bool>,
    pub priority: Vec<f32>,
    /// Continuous pixel coordinates in the view.
    pub pixel: Vec<[f32; 2]>,
    /// Bilinear taps around `pixel` that see the texel's own surface.
    pub taps: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct TexelTable {
    pub resolution: usize,
    /// Texel index per atlas pixel, `u32::MAX` where invalid.
    pub index: Vec<u32>,
    pub texels: Vec<Texel>,
    /// Set when UV triangles overlapped.
    pub overlap: bool,
    pub views: Vec<ViewLayer>,
}

impl TexelTable {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<usize> {
        let i = self.index[y * self.resolution + x];
        (i != u32::MAX).then_some(i as usize)
    }

    pub fn len(&self) -> usize {
        self.texels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texels.is_empty()
    }

    /// Chart ids painted with a fixed palette; invalid texels black.
    pub fn chart_image(&self) -> RgbImage {
        let mut img = RgbImage::new(self.resolution, self.resolution);
        for t in &self.texels {
            img.set(t.x as usize, t.y as usize, palette(t.chart as usize));
        }
        img
    }
}

/// Deterministic distinct-ish colors for debug images.
pub fn palette(i: usize) -> [f32; 3] {
    let h = (i as f64 * 0.618_033_988_749_895).fract();
    let k = |n: f64| {
        let x = (n + h * 6.0) % 6.0;
        (1.0 - (x.min(4.0 - x).clamp(0.0, 1.0)) * 0.8) as f32
    };
    [k(5.0), k(3.0), k(1.0)]
}

/// Rasterizes every face's UV triangle; a texel covered twice keeps the
/// smaller face id.
pub fn rasterize_texels(mesh: &TriangleMesh, charts: &[Chart], atlas_res: usize) -> Result<TexelTable> {
    let uvs = mesh
        .uv_corners
        .as_ref()
        .ok_or_else(|| Error::precondition("mesh has no uv coordinates"))?;
    let mut chart_of = vec![u32::MAX; mesh.faces.len()];
    for c in charts {
        for &f in &c.face_ids {
            chart_of[f as usize] = c.id;
        }
    }
    let res = atlas_res;
    let mut owner = vec![u32::MAX; res * res];
    let mut bary = vec![[0.0f64; 3]; res * res];
    let mut overlap = false;
    for (f, tri_uv) in uvs.iter().enumerate() {
        if chart_of[f] == u32::MAX {
            continue;
        }
        let px = tri_uv.map(|uv| uv_to_px(uv, res));
        raster_2d(px, res, res, |x, y, l| {
            let i = y * res + x;
            if owner[i] == u32::MAX {
                owner[i] = f as u32;
                bary[i] = l;
            } else {
                overlap = true;
            }
        });
    }
    if overlap {
        log::warn!("overlapping UV triangles; the smaller face id owns shared texels");
    }
    let face_normals: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    let rows: Vec<Vec<Texel>> = (0..res)
        .into_par_iter()
        .map(|y| {
            (0..res)
                .filter_map(|x| {
                    let i = y * res + x;
                    let f = owner[i];
                    if f == u32::MAX {
                        return None;
                    }
                    let l = bary[i];
                    let tri = mesh.faces[f as usize];
                    let c = mesh.corners(f as usize);
                    let position = c[0] * l[0] + c[1] * l[1] + c[2] * l[2];
                    let fnorm = face_normals[f as usize];
                    let normal = match &mesh.vertex_normals {
                        Some(vn) => (vn[tri[0] as usize] * l[0] + vn[tri[1] as usize] * l[1] + vn[tri[2] as usize] * l[2])
                            .try_normalize(1e-12)
                            .unwrap_or(fnorm),
                        None => fnorm,
                    };
                    Some(Texel {
                        x: x as u32,
                        y: y as u32,
                        chart: chart_of[f as usize],
                        face: f,
                        position,
                        normal,
                    })
                })
                .collect()
        })
        .collect();
    let texels: Vec<Texel> = rows.into_iter().flatten().collect();
    let mut index = vec![u32::MAX; res * res];
    for (k, t) in texels.iter().enumerate() {
        index[t.y as usize * res + t.x as usize] = k as u32;
    }
    Ok(TexelTable {
        resolution: res,
        index,
        texels,
        overlap,
        views: Vec::new(),
    })
}
