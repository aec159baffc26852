//! Image and geometry metrics plus the textured renderer they evaluate.

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{make_rig, CameraRig, RigKind, View, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};
use crate::pcio::sample_surface;
use crate::raster::{RgbImage, TextureAtlas, WHITE};
use crate::rasterizer::render_zbuffer;

pub const METRIC_SAMPLES: usize = 100_000;
pub const METRIC_SEED: u64 = 0;
pub const DEFAULT_FSCORE_TAU: f64 = 0.01;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Unlit textured rendering: z-buffered faces, interpolated UVs, bilinear
/// atlas lookup, white background.
pub fn render_textured(mesh: &TriangleMesh, atlas: &TextureAtlas, view: &View) -> Result<RgbImage> {
    let uvs = mesh
        .uv_corners
        .as_ref()
        .ok_or_else(|| Error::precondition("textured rendering needs uv coordinates"))?;
    let zb = render_zbuffer(mesh, view);
    let mut img = RgbImage::filled(view.width, view.height, WHITE);
    for (p, &f) in zb.face.iter().enumerate() {
        if f == u32::MAX {
            continue;
        }
        let b = zb.bary[p];
        let t = uvs[f as usize];
        let u = b[0] * t[0][0] + b[1] * t[1][0] + b[2] * t[2][0];
        let v = b[0] * t[0][1] + b[1] * t[1][1] + b[2] * t[2][1];
        img.data_mut()[p] = atlas.sample_uv(u, v);
    }
    Ok(img)
}

/// The 20 evaluation cameras on icosahedron face directions.
pub fn eval_views(resolution: usize) -> Result<CameraRig> {
    make_rig(RigKind::Ico20, resolution, DEFAULT_RADIUS)
}

fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::precondition(format!(
            "image sizes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio with peak 1.0; `f64::INFINITY` for identical
/// images.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum::<f64>())
        .sum();
    let mse = sum / (a.len() * 3) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" Gaussian filter of a `w`×`h` plane.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM (11×11 Gaussian window, σ = 1.5) averaged over channels
/// and valid window positions.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::precondition(format!("SSIM needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}")));
    }
    let k = gaussian_kernel();
    let per_channel: Vec<f64> = (0..3)
        .into_par_iter()
        .map(|c| {
            let x: Vec<f64> = a.data().iter().map(|p| p[c] as f64).collect();
            let y: Vec<f64> = b.data().iter().map(|p| p[c] as f64).collect();
            let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
            let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
            let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &k));
            let n = mx.len();
            let total: f64 = (0..n)
                .map(|i| {
                    let (ux, uy) = (mx[i], my[i]);
                    let vx = sxx[i] - ux * ux;
                    let vy = syy[i] - uy * uy;
                    let cov = sxy[i] - ux * uy;
                    ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                        / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
                })
                .sum();
            total / n as f64
        })
        .collect();
    Ok(per_channel.iter().sum::<f64>() / 3.0)
}

/// Nearest-neighbour index over a fixed point set.
pub struct PointIndex {
    tree: ImmutableKdTree<f64, 3>,
    points: Vec<Vec3>,
}

impl PointIndex {
    pub fn new(points: &[Vec3]) -> Result<PointIndex> {
        if points.is_empty() {
            return Err(Error::input("empty point set"));
        }
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Ok(PointIndex {
            tree: ImmutableKdTree::new_from_slice(&raw),
            points: points.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// (index, Euclidean distance) of the nearest stored point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let nn = self.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        let i = nn.item as usize;
        (i, (self.points[i] - q).norm())
    }

    pub fn distances(&self, queries: &[Vec3]) -> Vec<f64> {
        queries.par_iter().map(|q| self.nearest(q).1).collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric Chamfer L1 distance, scaled by 100.
pub fn chamfer_l1(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    let (ip, ig) = (PointIndex::new(pred)?, PointIndex::new(gt)?);
    Ok(chamfer_from(&ig.distances(pred), &ip.distances(gt)))
}

fn chamfer_from(pred_to_gt: &[f64], gt_to_pred: &[f64]) -> f64 {
    100.0 * 0.5 * (mean(pred_to_gt) + mean(gt_to_pred))
}

/// F-score at threshold `tau` between two point sets.
pub fn f_score(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Result<f64> {
    let (ip, ig) = (PointIndex::new(pred)?, PointIndex::new(gt)?);
    Ok(f_score_from(&ig.distances(pred), &ip.distances(gt), tau))
}

fn f_score_from(pred_to_gt: &[f64], gt_to_pred: &[f64], tau: f64) -> f64 {
    let frac = |d: &[f64]| d.iter().filter(|&&x| x <= tau).count() as f64 / d.len() as f64;
    let (p, r) = (frac(pred_to_gt), frac(gt_to_pred));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Surface samples with the normal of the face they were drawn from.
pub fn sample_with_normals(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let s = sample_surface(mesh, n, seed)?;
    let normals: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    Ok((s.iter().map(|x| x.position).collect(), s.iter().map(|x| normals[x.face]).collect()))
}

fn normal_term(queries: &[Vec3], qn: &[Vec3], index: &PointIndex, tn: &[Vec3]) -> f64 {
    let cos: Vec<f64> = queries
        .par_iter()
        .zip(qn)
        .map(|(q, n)| n.dot(&tn[index.nearest(q).0]).abs())
        .collect();
    mean(&cos)
}

/// Orientation-agnostic normal consistency between two meshes.
pub fn normal_consistency(pred: &TriangleMesh, gt: &TriangleMesh, samples: usize, seed: u64) -> Result<f64> {
    Ok(geometry_metrics(pred, gt, samples, seed, DEFAULT_FSCORE_TAU)?.nc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub cd: f64,
    pub nc: f64,
    pub fs: f64,
}

/// CD, NC and F-score from one shared sampling of each mesh.
pub fn geometry_metrics(pred: &TriangleMesh, gt: &TriangleMesh, samples: usize, seed: u64, tau: f64) -> Result<GeometryReport> {
    let (pp, pn) = sample_with_normals(pred, samples, seed)?;
    let (gp, gn) = sample_with_normals(gt, samples, seed)?;
    let (ip, ig) = (PointIndex::new(&pp)?, PointIndex::new(&gp)?);
    let (d_pg, d_gp) = (ig.distances(&pp), ip.distances(&gp));
    let nc = 0.5 * (normal_term(&pp, &pn, &ig, &gn) + normal_term(&gp, &gn, &ip, &pn));
    Ok(GeometryReport {
        cd: chamfer_from(&d_pg, &d_gp),
        nc,
        fs: f_score_from(&d_pg, &d_gp, tau),
    })
}

/// Serializes infinite decibel values as the string "inf".
pub mod decibels {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad decibel value `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    #[serde(with = "decibels")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    /// Mean of per-view PSNR.
    #[serde(with = "decibels")]
    pub psnr: f64,
    pub ssim: f64,
    pub per_view: Vec<ViewScore>,
}

/// Renders both textured meshes from every view and scores each pair.
pub fn compare_renders(
    pred: (&TriangleMesh, &TextureAtlas),
    gt: (&TriangleMesh, &TextureAtlas),
    views: &[View],
) -> Result<(RenderReport, Vec<(RgbImage, RgbImage)>)> {
    let pairs: Vec<(RgbImage, RgbImage)> = views
        .par_iter()
        .map(|v| Ok((render_textured(pred.0, pred.1, v)?, render_textured(gt.0, gt.1, v)?)))
        .collect::<Result<_>>()?;
    let per_view: Vec<ViewScore> = pairs
        .iter()
        .map(|(a, b)| {
            Ok(ViewScore {
                psnr: psnr(a, b)?,
                ssim: ssim(a, b)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = per_view.len().max(1) as f64;
    Ok((
        RenderReport {
            psnr: per_view.iter().map(|s| s.psnr).sum::<f64>() / n,
            ssim: per_view.iter().map(|s| s.ssim).sum::<f64>() / n,
            per_view,
        },
        pairs,
    ))
}
