//! Point-cloud and mesh file I/O, surface sampling, and the input
//! degradations used by the robustness sweeps.

pub mod obj;
pub mod ply;

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mesh::{ColoredPointCloud, TriangleMesh, Vec3};
use crate::raster::TextureAtlas;

pub use obj::TexturedPaths;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointFormat {
    Ply,
    Obj,
    XyzRgb,
}

impl PointFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<PointFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(PointFormat::Ply),
            "obj" => Some(PointFormat::Obj),
            "xyz" | "xyzrgb" | "txt" => Some(PointFormat::XyzRgb),
            _ => None,
        }
    }
}

pub fn read_point_cloud(path: &Path, format: PointFormat) -> Result<ColoredPointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_path(path, e))?;
    parse_point_cloud(&bytes, format)
}

pub fn parse_point_cloud(bytes: &[u8], format: PointFormat) -> Result<ColoredPointCloud> {
    match format {
        PointFormat::Ply => ply::parse(bytes),
        PointFormat::XyzRgb => parse_xyz_rgb(bytes),
        PointFormat::Obj => parse_obj_points(bytes),
    }
}

/// Whitespace-separated `x y z r g b` lines with 8-bit color channels.
fn parse_xyz_rgb(bytes: &[u8]) -> Result<ColoredPointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(e.valid_up_to(), "non-utf8 text"))?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line_off = offset;
        offset += raw.len();
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(line_off, "unparsable number"))?;
        match vals.len() {
            6 => {}
            3 => return Err(Error::input("xyz-rgb line without color")),
            _ => return Err(Error::format(line_off, "expected 6 values per line")),
        }
        positions.push(Vec3::new(vals[0], vals[1], vals[2]));
        colors.push([3, 4, 5].map(|i| ((vals[i] / 255.0) as f32).clamp(0.0, 1.0)));
    }
    if positions.is_empty() {
        return Err(Error::input("no points in xyz-rgb file"));
    }
    ColoredPointCloud::new(positions, colors, None)
}

/// OBJ point clouds carry colors as extra vertex fields: `v x y z r g b`
/// with channels in [0, 1].
fn parse_obj_points(bytes: &[u8]) -> Result<ColoredPointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(e.valid_up_to(), "non-utf8 text"))?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line_off = offset;
        offset += raw.len();
        let mut toks = raw.split_whitespace();
        if toks.next() != Some("v") {
            continue;
        }
        let vals: Vec<f64> = toks
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(line_off, "unparsable vertex"))?;
        if vals.len() < 6 {
            return Err(Error::input("obj vertex without color"));
        }
        positions.push(Vec3::new(vals[0], vals[1], vals[2]));
        colors.push([vals[3] as f32, vals[4] as f32, vals[5] as f32]);
    }
    if positions.is_empty() {
        return Err(Error::input("no vertices in obj file"));
    }
    ColoredPointCloud::new(positions, colors, None)
}

pub fn write_point_cloud(cloud: &ColoredPointCloud, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io_path(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    ply::write(cloud, &mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
    Ok(obj::parse(&text)?.mesh)
}

/// Reads an OBJ together with the texture its material references.
pub fn read_textured_mesh(path: &Path) -> Result<(TriangleMesh, Option<TextureAtlas>)> {
    obj::read_with_texture(path)
}

/// Emits `mesh.obj`, `mesh.mtl` and `mesh.png` into `out_dir`.
pub fn write_textured_mesh(mesh: &TriangleMesh, atlas: &TextureAtlas, out_dir: &Path) -> Result<TexturedPaths> {
    obj::write_textured(mesh, atlas, out_dir, "mesh")
}

/// Area-weighted uniform surface samples colored from the atlas at each
/// sample's UV. Normals are the face normals.
pub fn sample_points(
    mesh: &TriangleMesh,
    atlas: &TextureAtlas,
    n: usize,
    seed: u64,
) -> Result<ColoredPointCloud> {
    if n == 0 {
        return Err(Error::precondition("sample count must be at least 1"));
    }
    let uvs = mesh
        .uv_corners
        .as_ref()
        .ok_or_else(|| Error::precondition("sampling colors requires uv coordinates"))?;
    let samples = sample_surface(mesh, n, seed)?;
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for s in samples {
        let tri = uvs[s.face];
        let u = s.bary[0] * tri[0][0] + s.bary[1] * tri[1][0] + s.bary[2] * tri[2][0];
        let v = s.bary[0] * tri[0][1] + s.bary[1] * tri[1][1] + s.bary[2] * tri[2][1];
        positions.push(s.position);
        colors.push(atlas.sample_uv(u, v).map(|c| c.clamp(0.0, 1.0)));
        normals.push(mesh.face_normal(s.face));
    }
    ColoredPointCloud::new(positions, colors, Some(normals))
}

/// A point drawn on a mesh surface.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceSample {
    pub face: usize,
    pub bary: [f64; 3],
    pub position: Vec3,
}

/// Area-weighted uniform samples over the faces of `mesh`.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::precondition("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let bary = [1.0 - s, s * (1.0 - r2), s * r2];
        let [a, b, c] = mesh.corners(face);
        out.push(SurfaceSample {
            face,
            bary,
            position: a * bary[0] + b * bary[1] + c * bary[2],
        });
    }
    Ok(out)
}

/// Perturbs positions by i.i.d. N(0, sigma²) per axis.
pub fn add_gaussian_noise(cloud: &ColoredPointCloud, sigma: f64, seed: u64) -> Result<ColoredPointCloud> {
    if !(sigma >= 0.0) {
        return Err(Error::precondition("noise sigma must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::precondition(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = cloud
        .positions
        .iter()
        .map(|p| p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    Ok(ColoredPointCloud {
        positions,
        ..cloud.clone()
    })
}

/// Uniform selection of `n` points without replacement; kept in input order.
pub fn subsample(cloud: &ColoredPointCloud, n: usize, seed: u64) -> Result<ColoredPointCloud> {
    if n == 0 || n > cloud.len() {
        return Err(Error::precondition(format!(
            "subsample size {n} outside 1..={}",
            cloud.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, cloud.len(), n).into_vec();
    picked.sort_unstable();
    Ok(cloud.select(&picked))
}
