//! Point cloud and triangle mesh containers.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Rgb;

pub type Vec3 = Vector3<f64>;
pub type Uv = [f64; 2];

/// Input point set with per-point color and optional unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct ColoredPointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<Rgb>,
    pub normals: Option<Vec<Vec3>>,
}

impl ColoredPointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Vec<Rgb>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        let cloud = Self {
            positions,
            colors,
            normals,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::input("point cloud is empty"));
        }
        if self.colors.len() != n {
            return Err(Error::input("color count does not match point count"));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::input("normal count does not match point count"));
            }
            if normals.iter().any(|nm| (nm.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::input("normals must be unit length"));
            }
        }
        if self
            .colors
            .iter()
            .any(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(Error::input("color channel outside [0, 1]"));
        }
        Ok(())
    }

    /// Keeps the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ColoredPointCloud {
        ColoredPointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: indices.iter().map(|&i| self.colors[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.positions)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Self {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_edge(&self) -> f64 {
        self.extent().max()
    }
}

/// Similarity transform mapping a shape into the unit cube [-0.5, 0.5]³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    /// Centers the bbox at the origin and scales the longest edge to 1.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("cannot normalize an empty point set"));
        }
        let bb = Aabb::from_points(points);
        let longest = bb.longest_edge();
        let scale = if longest > 0.0 { 1.0 / longest } else { 1.0 };
        Ok(Self {
            center: bb.center().into(),
            scale,
        })
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - Vec3::from(self.center)) * self.scale
    }

    #[inline]
    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + Vec3::from(self.center)
    }

    pub fn apply_cloud(&self, cloud: &ColoredPointCloud) -> ColoredPointCloud {
        ColoredPointCloud {
            positions: cloud.positions.iter().map(|p| self.apply(p)).collect(),
            ..cloud.clone()
        }
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        TriangleMesh {
            vertices: mesh.vertices.iter().map(|p| self.apply(p)).collect(),
            ..mesh.clone()
        }
    }

    pub fn invert_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        TriangleMesh {
            vertices: mesh.vertices.iter().map(|p| self.invert(p)).collect(),
            ..mesh.clone()
        }
    }
}

/// Indexed triangle mesh with optional per-vertex normals and per-corner UVs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_normals: Option<Vec<Vec3>>,
    /// Three UV pairs per face, in [0, 1]², v pointing up in the atlas image.
    pub uv_corners: Option<Vec<[Uv; 3]>>,
    /// File name of the atlas image referenced by the material, if any.
    pub material: Option<String>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            faces,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::input(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::input(format!("face {fi} is degenerate")));
            }
        }
        if let Some(uvs) = &self.uv_corners {
            if uvs.len() != self.faces.len() {
                return Err(Error::input("uv corner count does not match face count"));
            }
            if uvs
                .iter()
                .flatten()
                .flatten()
                .any(|v| !(0.0..=1.0).contains(v))
            {
                return Err(Error::input("uv coordinate outside [0, 1]"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Unnormalized face normal (length = 2 × area).
    #[inline]
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.corners(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let n = self.face_cross(face);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted vertex normals.
    pub fn compute_vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_cross(fi);
            for &v in f {
                normals[v as usize] += n;
            }
        }
        for n in normals.iter_mut() {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// For every face, the face sharing each of its edges (edge i runs from
    /// corner i to corner i+1). Non-manifold edges keep the first partner.
    pub fn face_adjacency(&self) -> Vec<[Option<u32>; 3]> {
        let mut edge_faces: HashMap<(u32, u32), Vec<(u32, usize)>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                edge_faces
                    .entry((a.min(b), a.max(b)))
                    .or_default()
                    .push((fi as u32, e));
            }
        }
        let mut adj = vec![[None; 3]; self.faces.len()];
        for list in edge_faces.values() {
            for (i, &(fa, ea)) in list.iter().enumerate() {
                if let Some(&(fb, _)) = list.iter().enumerate().find(|(j, _)| *j != i).map(|(_, x)| x) {
                    adj[fa as usize][ea] = Some(fb);
                }
            }
        }
        adj
    }

    /// Unique undirected edges with the number of incident faces.
    pub fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    /// V − E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.faces.len() as i64
    }

    /// Drops vertices no face references, remapping indices.
    pub fn compact(&self) -> TriangleMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        for f in &self.faces {
            for &v in f {
                if remap[v as usize] == u32::MAX {
                    remap[v as usize] = vertices.len() as u32;
                    vertices.push(self.vertices[v as usize]);
                    if let Some(n) = &self.vertex_normals {
                        normals.push(n[v as usize]);
                    }
                }
            }
        }
        TriangleMesh {
            vertices,
            faces: self
                .faces
                .iter()
                .map(|f| f.map(|v| remap[v as usize]))
                .collect(),
            vertex_normals: self.vertex_normals.as_ref().map(|_| normals),
            uv_corners: self.uv_corners.clone(),
            material: self.material.clone(),
        }
    }

    /// Concatenates two meshes. UVs are kept only when both carry them.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len() as u32;
        let mut out = self.clone();
        out.vertices.extend_from_slice(&other.vertices);
        out.faces
            .extend(other.faces.iter().map(|f| f.map(|v| v + offset)));
        out.vertex_normals = match (&self.vertex_normals, &other.vertex_normals) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        out.uv_corners = match (&self.uv_corners, &other.uv_corners) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        out
    }
}

/// Builders for simple test and benchmark shapes.
pub mod shapes {
    use super::*;

    /// Axis-aligned box with 8 shared vertices and 12 outward-facing triangles.
    pub fn cuboid(center: Vec3, size: Vec3) -> TriangleMesh {
        let h = size * 0.5;
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let sx = if i & 1 != 0 { 1.0 } else { -1.0 };
            let sy = if i & 2 != 0 { 1.0 } else { -1.0 };
            let sz = if i & 4 != 0 { 1.0 } else { -1.0 };
            vertices.push(center + Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let mut faces = Vec::with_capacity(12);
        for q in quads {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
        TriangleMesh::new(vertices, faces)
    }

    /// UV sphere with `rings` latitude bands and `segments` longitudes.
    pub fn uv_sphere(center: Vec3, radius: f64, rings: usize, segments: usize) -> TriangleMesh {
        let mut vertices = vec![center + Vec3::new(0.0, radius, 0.0)];
        for r in 1..rings {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                vertices.push(
                    center
                        + radius
                            * Vec3::new(theta.sin() * phi.cos(), theta.cos(), -theta.sin() * phi.sin()),
                );
            }
        }
        vertices.push(center + Vec3::new(0.0, -radius, 0.0));
        let south = (vertices.len() - 1) as u32;
        let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for s in 0..segments {
            faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        TriangleMesh::new(vertices, faces)
    }

    /// Icosphere obtained by `subdivisions` rounds of 4-to-1 splitting.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|v| Vec3::from(*v).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            for f in &faces {
                let ab = midpoint(f[0], f[1], &mut verts);
                let bc = midpoint(f[1], f[2], &mut verts);
                let ca = midpoint(f[2], f[0], &mut verts);
                next.push([f[0], ab, ca]);
                next.push([f[1], bc, ab]);
                next.push([f[2], ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        let vertices = verts.iter().map(|v| center + v * radius).collect();
        TriangleMesh::new(vertices, faces)
    }

    /// Regular grid of `n × n` quads in the z = `z` plane spanning [-s/2, s/2]²,
    /// each quad split along the same diagonal. Faces point toward +z.
    pub fn planar_grid(n: usize, size: f64, z: f64) -> TriangleMesh {
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vec3::new(
                    -size / 2.0 + size * i as f64 / n as f64,
                    -size / 2.0 + size * j as f64 / n as f64,
                    z,
                ));
            }
        }
        let id = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut faces = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriangleMesh::new(vertices, faces)
    }
}

#[cfg(test)]
mod tests {
    use super::shapes::*;
    use super::*;

    #[test]
    fn cuboid_is_closed_and_outward() {
        let m = cuboid(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0));
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        for f in 0..m.faces.len() {
            let [a, b, c] = m.corners(f);
            let centroid = (a + b + c) / 3.0;
            assert!(m.face_normal(f).dot(&centroid) > 0.0, "face {f} points inward");
        }
        assert!((m.total_area() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn spheres_are_closed_and_outward() {
        for m in [icosphere(Vec3::zeros(), 1.0, 2), uv_sphere(Vec3::zeros(), 1.0, 8, 12)] {
            assert!(m.is_watertight());
            assert_eq!(m.euler_characteristic(), 2);
            for f in 0..m.faces.len() {
                let [a, b, c] = m.corners(f);
                assert!(m.face_normal(f).dot(&((a + b + c) / 3.0)) > 0.0);
            }
        }
    }

    #[test]
    fn normalization_maps_into_unit_cube() {
        let pts = vec![Vec3::new(3.0, -1.0, 2.0), Vec3::new(7.0, 1.0, 2.5), Vec3::new(4.0, 0.0, 3.0)];
        let n = Normalization::fit(&pts).unwrap();
        let mapped: Vec<_> = pts.iter().map(|p| n.apply(p)).collect();
        let bb = Aabb::from_points(&mapped);
        assert!((bb.longest_edge() - 1.0).abs() < 1e-12);
        assert!(mapped.iter().all(|p| p.iter().all(|c| c.abs() <= 0.5 + 1e-12)));
        for (p, q) in pts.iter().zip(&mapped) {
            assert!((n.invert(q) - p).norm() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_faces() {
        let mut m = TriangleMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 1]]);
        assert!(m.validate().is_err());
        m.faces = vec![[0, 1, 3]];
        assert!(m.validate().is_err());
    }
}
