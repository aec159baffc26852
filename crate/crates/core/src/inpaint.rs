//! Filling the unknown pixels of sparse rasters.
//!
//! Built-in nearest and Delaunay-linear fills are exact and deterministic.
//! [`inpaint_remote`] ships the sparse image to an external service over a
//! small HTTP protocol: `POST {endpoint}/inpaint` with multipart parts
//! `image` (RGB PNG) and `mask` (gray PNG, 255 = known), answered by an RGB
//! PNG of the same size.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Mask, Raster, RgbImage, Sample, WHITE};

/// Spatial hash of known pixels for exact nearest queries.
struct KnownGrid {
    cell: usize,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<(u32, u32)>>,
}

impl KnownGrid {
    const CELL: usize = 16;

    fn new<T: Sample>(src: &Raster<T>) -> KnownGrid {
        let cell = Self::CELL;
        let cols = src.width().div_ceil(cell);
        let rows = src.height().div_ceil(cell);
        let mut buckets = vec![Vec::new(); cols * rows];
        for y in 0..src.height() {
            for x in 0..src.width() {
                if src.is_known(x, y) {
                    buckets[(y / cell) * cols + x / cell].push((x as u32, y as u32));
                }
            }
        }
        KnownGrid {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Nearest known pixel by Euclidean distance; ties go to the smaller
    /// row, then the smaller column.
    fn nearest(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let (cx, cy) = ((x / self.cell) as i64, (y / self.cell) as i64);
        let mut best: Option<(i64, u32, u32)> = None;
        let max_ring = self.cols.max(self.rows) as i64;
        for r in 0..=max_ring {
            if let Some((d2, _, _)) = best {
                // any pixel in ring r is at least (r-1)*cell+1 away along an axis
                let lower = (r - 1) * self.cell as i64 + 1;
                if r > 0 && d2 < lower * lower {
                    break;
                }
            }
            for gy in cy - r..=cy + r {
                if gy < 0 || gy >= self.rows as i64 {
                    continue;
                }
                let on_edge_row = gy == cy - r || gy == cy + r;
                let mut gx = cx - r;
                while gx <= cx + r {
                    if gx >= 0 && gx < self.cols as i64 {
                        for &(kx, ky) in &self.buckets[gy as usize * self.cols + gx as usize] {
                            let dx = kx as i64 - x as i64;
                            let dy = ky as i64 - y as i64;
                            let cand = (dx * dx + dy * dy, ky, kx);
                            if best.is_none_or(|b| cand < b) {
                                best = Some(cand);
                            }
                        }
                    }
                    gx += if on_edge_row || r == 0 { 1 } else { 2 * r };
                }
            }
        }
        best.map(|(_, ky, kx)| (kx as usize, ky as usize))
    }
}

/// Nearest-known-pixel fill inside `mask`; outside the mask every pixel
/// becomes `background` and unknown.
pub fn fill_nearest<T: Sample>(sparse: &Raster<T>, mask: &Mask, background: T) -> Result<Raster<T>> {
    check_dims(sparse.dims(), mask)?;
    if sparse.known_count() == 0 {
        return Err(Error::precondition("nothing to inpaint from: no known pixels"));
    }
    let grid = KnownGrid::new(sparse);
    let (w, h) = sparse.dims();
    let rows: Vec<Vec<(T, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    if !mask.get(x, y) {
                        (background, false)
                    } else if sparse.is_known(x, y) {
                        (sparse.get(x, y), true)
                    } else {
                        let (nx, ny) = grid.nearest(x, y).expect("grid holds a known pixel");
                        (sparse.get(nx, ny), true)
                    }
                })
                .collect()
        })
        .collect();
    let (data, known) = rows.into_iter().flatten().unzip();
    Raster::from_parts(w, h, data, known)
}

pub fn inpaint_nearest(sparse: &RgbImage, mask: &Mask) -> Result<RgbImage> {
    fill_nearest(sparse, mask, WHITE)
}

/// Depth maps are always filled by nearest; background is +∞.
pub fn inpaint_depth(sparse: &DepthMap, mask: &Mask) -> Result<DepthMap> {
    fill_nearest(sparse, mask, f32::INFINITY)
}

fn check_dims(dims: (usize, usize), mask: &Mask) -> Result<()> {
    if dims != mask.dims() {
        return Err(Error::precondition(format!(
            "image is {}x{} but mask is {}x{}",
            dims.0,
            dims.1,
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// Result of an inpainting call that may have degraded to a simpler method.
#[derive(Clone, Debug)]
pub struct Filled {
    pub image: RgbImage,
    pub warnings: Vec<String>,
}

/// Barycentric interpolation over a Delaunay triangulation of the known
/// pixels, nearest fill elsewhere.
pub fn inpaint_linear(sparse: &RgbImage, mask: &Mask) -> Result<Filled> {
    check_dims(sparse.dims(), mask)?;
    let (w, h) = sparse.dims();
    let mut sites = Vec::new();
    let mut site_xy = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if sparse.is_known(x, y) {
                sites.push(delaunator::Point {
                    x: x as f64,
                    y: y as f64,
                });
                site_xy.push((x as i64, y as i64));
            }
        }
    }
    let mut out = inpaint_nearest(sparse, mask)?;
    let tri = delaunator::triangulate(&sites);
    if tri.triangles.is_empty() {
        return Ok(Filled {
            image: out,
            warnings: vec!["linear inpainting: known pixels are fewer than 3 or collinear; used nearest".into()],
        });
    }
    let mut written = vec![false; w * h];
    for t in tri.triangles.chunks_exact(3) {
        let v = [site_xy[t[0]], site_xy[t[1]], site_xy[t[2]]];
        let area = (v[1].0 - v[0].0) * (v[2].1 - v[0].1) - (v[1].1 - v[0].1) * (v[2].0 - v[0].0);
        if area == 0 {
            continue;
        }
        let colors = [
            sparse.get(v[0].0 as usize, v[0].1 as usize),
            sparse.get(v[1].0 as usize, v[1].1 as usize),
            sparse.get(v[2].0 as usize, v[2].1 as usize),
        ];
        let x0 = v.iter().map(|p| p.0).min().unwrap();
        let x1 = v.iter().map(|p| p.0).max().unwrap();
        let y0 = v.iter().map(|p| p.1).min().unwrap();
        let y1 = v.iter().map(|p| p.1).max().unwrap();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y as usize * w + x as usize;
                if written[i] || !mask.get(x as usize, y as usize) || sparse.is_known(x as usize, y as usize) {
                    continue;
                }
                let e = |a: (i64, i64), b: (i64, i64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let l = [e(v[1], v[2]), e(v[2], v[0]), e(v[0], v[1])];
                let inside = if area > 0 {
                    l.iter().all(|&c| c >= 0)
                } else {
                    l.iter().all(|&c| c <= 0)
                };
                if !inside {
                    continue;
                }
                let mut c = [0f32; 3];
                for k in 0..3 {
                    let wk = (l[k] as f64 / area as f64) as f32;
                    for ch in 0..3 {
                        c[ch] += wk * colors[k][ch];
                    }
                }
                written[i] = true;
                out.set(x as usize, y as usize, c.map(|v| v.clamp(0.0, 1.0)));
            }
        }
    }
    Ok(Filled {
        image: out,
        warnings: Vec::new(),
    })
}

/// Encodes the request pair: RGB image (unknown pixels black) and known mask.
pub fn encode_request(sparse: &RgbImage) -> Result<(Vec<u8>, Vec<u8>)> {
    let (w, h) = sparse.dims();
    let known = Mask::from_vec(w, h, sparse.known().to_vec())?;
    Ok((sparse.encode_png()?, known.encode_png()?))
}

#[derive(Deserialize)]
struct RemoteErrorBody {
    code: Option<serde_json::Value>,
    message: Option<String>,
}

/// Sends `sparse` to an external inpainter and applies `mask` to the answer.
/// With `strict`, known pixels of `sparse` are written back over the reply.
pub fn inpaint_remote(sparse: &RgbImage, mask: &Mask, endpoint: &str, timeout: Duration, strict: bool) -> Result<RgbImage> {
    check_dims(sparse.dims(), mask)?;
    let url = format!("{}/inpaint", endpoint.trim_end_matches('/'));
    let remote = |status: Option<u16>, message: String| Error::Remote {
        endpoint: endpoint.to_string(),
        status,
        message,
    };
    let (image_png, mask_png) = encode_request(sparse)?;
    let part = |bytes: Vec<u8>, name: &str| {
        reqwest::blocking::multipart::Part::bytes(bytes)
            .file_name(format!("{name}.png"))
            .mime_str("image/png")
            .expect("static mime type")
    };
    let form = reqwest::blocking::multipart::Form::new()
        .part("image", part(image_png, "image"))
        .part("mask", part(mask_png, "mask"));
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| remote(None, e.to_string()))?;
    let resp = client
        .post(&url)
        .multipart(form)
        .send()
        .map_err(|e| remote(e.status().map(|s| s.as_u16()), e.to_string()))?;
    let status = resp.status().as_u16();
    let body = resp.bytes().map_err(|e| remote(Some(status), e.to_string()))?;
    if status != 200 {
        let message = match serde_json::from_slice::<RemoteErrorBody>(&body) {
            Ok(RemoteErrorBody { code, message }) => format!(
                "{} ({})",
                message.unwrap_or_default(),
                code.map(|c| c.to_string()).unwrap_or_default()
            ),
            Err(_) => String::from_utf8_lossy(&body).into_owned(),
        };
        return Err(remote(Some(status), message));
    }
    let dense = RgbImage::decode_png(&body).map_err(|e| remote(Some(status), format!("bad PNG reply: {e}")))?;
    if dense.dims() != sparse.dims() {
        return Err(remote(
            Some(status),
            format!(
                "reply is {}x{}, expected {}x{}",
                dense.width(),
                dense.height(),
                sparse.width(),
                sparse.height()
            ),
        ));
    }
    let (w, h) = sparse.dims();
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                out.set_background(x, y, WHITE);
            } else if strict && sparse.is_known(x, y) {
                out.set(x, y, sparse.get(x, y));
            } else {
                out.set(x, y, dense.get(x, y));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Nearest,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inpainter {
    Nearest,
    Linear,
    Remote { endpoint: String, timeout_s: f64 },
}

impl std::str::FromStr for Inpainter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Inpainter::Nearest),
            "linear" => Ok(Inpainter::Linear),
            _ => match s.strip_prefix("remote:") {
                Some(url) if !url.is_empty() => Ok(Inpainter::Remote {
                    endpoint: url.to_string(),
                    timeout_s: 120.0,
                }),
                _ => Err(Error::input(format!("unknown inpainter `{s}` (nearest|linear|remote:URL)"))),
            },
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Builtin::Nearest),
            "linear" => Ok(Builtin::Linear),
            other => Err(Error::input(format!("unknown fallback inpainter `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintConfig {
    pub method: Inpainter,
    /// Re-impose known pixels; `None` means on for built-ins, off for remote.
    pub strict: Option<bool>,
    /// Built-in used when the remote call fails.
    pub fallback: Option<Builtin>,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            method: Inpainter::Linear,
            strict: None,
            fallback: None,
        }
    }
}

fn builtin(b: Builtin, sparse: &RgbImage, mask: &Mask) -> Result<Filled> {
    match b {
        Builtin::Nearest => Ok(Filled {
            image: inpaint_nearest(sparse, mask)?,
            warnings: Vec::new(),
        }),
        Builtin::Linear => inpaint_linear(sparse, mask),
    }
}

/// Dispatches to the configured inpainter, applying fallback on remote
/// failure.
pub fn inpaint(sparse: &RgbImage, mask: &Mask, cfg: &InpaintConfig) -> Result<Filled> {
    match &cfg.method {
        Inpainter::Nearest => builtin(Builtin::Nearest, sparse, mask),
        Inpainter::Linear => builtin(Builtin::Linear, sparse, mask),
        Inpainter::Remote { endpoint, timeout_s } => {
            let strict = cfg.strict.unwrap_or(false);
            match inpaint_remote(sparse, mask, endpoint, Duration::from_secs_f64(*timeout_s), strict) {
                Ok(image) => Ok(Filled {
                    image,
                    warnings: Vec::new(),
                }),
                Err(e) => match cfg.fallback {
                    Some(b) => {
                        let mut f = builtin(b, sparse, mask)?;
                        f.warnings.push(format!("remote inpainter failed ({e}); fell back to {b:?}"));
                        Ok(f)
                    }
                    None => Err(e),
                },
            }
        }
    }
}
