use std::collections::HashMap;

use super::tables::{CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};
use super::tsdf::TsdfVolume;
use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

/// Extracts the `iso` level set over cells whose eight corners are all
/// observed. Triangles face toward increasing values.
pub fn marching_cubes(vol: &TsdfVolume, iso: f32) -> Result<TriangleMesh> {
    let r = vol.resolution;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut idx = [0usize; 8];
                let mut val = [0f32; 8];
                let mut observed = true;
                let mut case = 0usize;
                for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                    idx[c] = vol.index(i + off[0], j + off[1], k + off[2]);
                    if vol.weights[idx[c]] <= 0.0 {
                        observed = false;
                        break;
                    }
                    val[c] = vol.values[idx[c]];
                    if val[c] < iso {
                        case |= 1 << c;
                    }
                }
                if !observed || case == 0 || case == 255 {
                    continue;
                }
                let mut vertex_of = |e: usize| -> u32 {
                    let [a, b] = EDGE_CORNERS[e];
                    // key by the lower grid corner and the edge axis
                    let (lo, hi) = if idx[a] < idx[b] { (a, b) } else { (b, a) };
                    let axis = (0..3).find(|&d| CORNER_OFFSETS[a][d] != CORNER_OFFSETS[b][d]).unwrap() as u8;
                    *edge_vertex.entry((idx[lo], axis)).or_insert_with(|| {
                        let (va, vb) = (val[lo] as f64, val[hi] as f64);
                        let t = if va != vb { (iso as f64 - va) / (vb - va) } else { 0.5 };
                        let pa = vol.position(i + CORNER_OFFSETS[lo][0], j + CORNER_OFFSETS[lo][1], k + CORNER_OFFSETS[lo][2]);
                        let pb = vol.position(i + CORNER_OFFSETS[hi][0], j + CORNER_OFFSETS[hi][1], k + CORNER_OFFSETS[hi][2]);
                        vertices.push(pa + (pb - pa) * t.clamp(0.0, 1.0));
                        (vertices.len() - 1) as u32
                    })
                };
                for tri in TRI_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let f = [
                        vertex_of(tri[0] as usize),
                        vertex_of(tri[1] as usize),
                        vertex_of(tri[2] as usize),
                    ];
                    if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                        // the table winds triangles toward the inside corners
                        faces.push([f[0], f[2], f[1]]);
                    }
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(TriangleMesh::new(vertices, faces))
}
