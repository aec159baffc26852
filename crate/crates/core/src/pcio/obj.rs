//! Wavefront OBJ meshes with MTL + PNG texture.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Uv, Vec3};
use crate::raster::{RgbImage, TextureAtlas};

/// Parsed OBJ plus the `mtllib` it references, if any.
pub struct ParsedObj {
    pub mesh: TriangleMesh,
    pub mtllib: Option<String>,
}

fn resolve(idx: &str, len: usize, offset: usize) -> Result<usize> {
    let i: i64 = idx
        .parse()
        .map_err(|_| Error::format(offset, format!("bad index `{idx}`")))?;
    let r = if i > 0 {
        i - 1
    } else if i < 0 {
        len as i64 + i
    } else {
        return Err(Error::format(offset, "OBJ indices are 1-based; found 0"));
    };
    if r < 0 || r as usize >= len {
        return Err(Error::format(offset, format!("index {i} out of range ({len} records)")));
    }
    Ok(r as usize)
}

pub fn parse(text: &str) -> Result<ParsedObj> {
    let mut vertices = Vec::new();
    let mut uvs: Vec<Uv> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();
    let mut face_uvs: Vec<Option<[Uv; 3]>> = Vec::new();
    let mut vertex_normal: Vec<Option<Vec3>> = Vec::new();
    let mut mtllib = None;
    let mut offset = 0usize;

    for raw in text.split_inclusive('\n') {
        let line_off = offset;
        offset += raw.len();
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap();
        let nums = |toks: std::str::SplitWhitespace| -> Result<Vec<f64>> {
            toks.map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::format(line_off, format!("bad number `{t}`")))
            })
            .collect()
        };
        match tag {
            "v" => {
                let v = nums(toks)?;
                if v.len() < 3 {
                    return Err(Error::format(line_off, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(v[0], v[1], v[2]));
                vertex_normal.push(None);
            }
            "vt" => {
                let v = nums(toks)?;
                if v.len() < 2 {
                    return Err(Error::format(line_off, "texture coordinate needs 2 values"));
                }
                uvs.push([v[0], v[1]]);
            }
            "vn" => {
                let v = nums(toks)?;
                if v.len() < 3 {
                    return Err(Error::format(line_off, "normal needs 3 values"));
                }
                normals.push(Vec3::new(v[0], v[1], v[2]));
            }
            "f" => {
                let mut corners = Vec::new();
                for t in toks {
                    let mut parts = t.split('/');
                    let v = resolve(parts.next().unwrap_or(""), vertices.len(), line_off)?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, uvs.len(), line_off)?),
                        _ => None,
                    };
                    let vn = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, normals.len(), line_off)?),
                        _ => None,
                    };
                    corners.push((v, vt, vn));
                }
                if corners.len() < 3 {
                    return Err(Error::format(line_off, "face needs at least 3 corners"));
                }
                for &(v, _, vn) in &corners {
                    if let (Some(n), None) = (vn, vertex_normal[v]) {
                        vertex_normal[v] = Some(normals[n]);
                    }
                }
                // fan triangulation
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push(tri.map(|c| c.0 as u32));
                    face_uvs.push(if tri.iter().all(|c| c.1.is_some()) {
                        Some(tri.map(|c| uvs[c.1.unwrap()]))
                    } else {
                        None
                    });
                }
            }
            "mtllib" => mtllib = toks.next().map(str::to_string),
            _ => {}
        }
    }

    let uv_corners = if !faces.is_empty() && face_uvs.iter().all(Option::is_some) {
        Some(face_uvs.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    let vertex_normals = if !vertex_normal.is_empty() && vertex_normal.iter().all(Option::is_some) {
        Some(
            vertex_normal
                .into_iter()
                .map(|n| n.unwrap().try_normalize(0.0).unwrap_or_else(Vec3::zeros))
                .collect(),
        )
    } else {
        None
    };
    let mesh = TriangleMesh {
        vertices,
        faces,
        vertex_normals,
        uv_corners,
        material: None,
    };
    Ok(ParsedObj { mesh, mtllib })
}

/// Reads an OBJ and resolves the `map_Kd` texture named by its MTL, if any.
pub fn read_with_texture(path: &Path) -> Result<(TriangleMesh, Option<TextureAtlas>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
    let parsed = parse(&text)?;
    let mut mesh = parsed.mesh;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut atlas = None;
    if let Some(lib) = parsed.mtllib {
        let mtl_path = dir.join(&lib);
        if let Ok(mtl) = std::fs::read_to_string(&mtl_path) {
            if let Some(tex) = mtl
                .lines()
                .filter_map(|l| l.trim().strip_prefix("map_Kd"))
                .map(|s| s.trim().to_string())
                .next()
            {
                atlas = Some(RgbImage::read_png(dir.join(&tex))?);
                mesh.material = Some(tex);
            }
        }
    }
    Ok((mesh, atlas))
}

/// Output file set of [`write_textured`].
#[derive(Clone, Debug)]
pub struct TexturedPaths {
    pub obj: PathBuf,
    pub mtl: PathBuf,
    pub png: PathBuf,
}

pub fn format_obj(mesh: &TriangleMesh, mtl_name: &str) -> Result<String> {
    let uvs = mesh
        .uv_corners
        .as_ref()
        .ok_or_else(|| Error::precondition("mesh has no uv coordinates"))?;
    let mut out = String::new();
    writeln!(out, "mtllib {mtl_name}").unwrap();
    for v in &mesh.vertices {
        writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z).unwrap();
    }
    // deduplicate texture coordinates by their printed form
    let mut vt_index: HashMap<String, usize> = HashMap::new();
    let mut corner_vt = Vec::with_capacity(uvs.len());
    for tri in uvs {
        let mut ids = [0usize; 3];
        for (k, uv) in tri.iter().enumerate() {
            let key = format!("{:.6} {:.6}", uv[0], uv[1]);
            let next = vt_index.len() + 1;
            let id = *vt_index.entry(key.clone()).or_insert_with(|| {
                writeln!(out, "vt {key}").unwrap();
                next
            });
            ids[k] = id;
        }
        corner_vt.push(ids);
    }
    writeln!(out, "usemtl atlas").unwrap();
    for (f, vt) in mesh.faces.iter().zip(&corner_vt) {
        writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            f[0] + 1,
            vt[0],
            f[1] + 1,
            vt[1],
            f[2] + 1,
            vt[2]
        )
        .unwrap();
    }
    Ok(out)
}

/// Writes `<stem>.obj`, `<stem>.mtl` and `<stem>.png` into `out_dir`.
pub fn write_textured(
    mesh: &TriangleMesh,
    atlas: &TextureAtlas,
    out_dir: &Path,
    stem: &str,
) -> Result<TexturedPaths> {
    let paths = TexturedPaths {
        obj: out_dir.join(format!("{stem}.obj")),
        mtl: out_dir.join(format!("{stem}.mtl")),
        png: out_dir.join(format!("{stem}.png")),
    };
    let mtl_name = format!("{stem}.mtl");
    let png_name = format!("{stem}.png");
    let obj = format_obj(mesh, &mtl_name)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io_path(out_dir, e))?;
    let mtl = format!(
        "newmtl atlas\nKa 1.000000 1.000000 1.000000\nKd 1.000000 1.000000 1.000000\nKs 0.000000 0.000000 0.000000\nillum 1\nmap_Kd {png_name}\n"
    );
    std::fs::write(&paths.obj, obj).map_err(|e| Error::io_path(&paths.obj, e))?;
    std::fs::write(&paths.mtl, mtl).map_err(|e| Error::io_path(&paths.mtl, e))?;
    atlas.write_png(&paths.png)?;
    Ok(paths)
}
