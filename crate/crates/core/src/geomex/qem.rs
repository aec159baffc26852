//! Garland–Heckbert edge-collapse simplification.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{Matrix3, Matrix4, Vector4};

use crate::mesh::{TriangleMesh, Vec3};

/// Weight of the perpendicular planes that pin boundary edges.
const BOUNDARY_WEIGHT: f64 = 1e3;

type Quadric = Matrix4<f64>;

fn plane_quadric(n: &Vec3, p: &Vec3, weight: f64) -> Quadric {
    let plane = Vector4::new(n.x, n.y, n.z, -n.dot(p));
    plane * plane.transpose() * weight
}

fn quadric_error(q: &Quadric, v: &Vec3) -> f64 {
    let h = Vector4::new(v.x, v.y, v.z, 1.0);
    (h.transpose() * q * h)[0].max(0.0)
}

/// Collapse candidate ordered by cost, then by vertex pair.
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp: (u32, u32),
    target: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

struct State {
    pos: Vec<Vec3>,
    quadric: Vec<Quadric>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vert_faces: Vec<Vec<u32>>,
    version: Vec<u32>,
    alive_faces: usize,
}

impl State {
    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.vert_faces[v as usize]
            .iter()
            .flat_map(|&f| self.faces[f as usize])
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        let q = self.quadric[a as usize] + self.quadric[b as usize];
        let (pa, pb) = (self.pos[a as usize], self.pos[b as usize]);
        let m = Matrix3::new(
            q[(0, 0)], q[(0, 1)], q[(0, 2)],
            q[(1, 0)], q[(1, 1)], q[(1, 2)],
            q[(2, 0)], q[(2, 1)], q[(2, 2)],
        );
        let rhs = -Vec3::new(q[(0, 3)], q[(1, 3)], q[(2, 3)]);
        let scale = m.norm().max(1e-300);
        let mut best: Option<(f64, Vec3)> = None;
        if m.determinant().abs() > 1e-9 * scale.powi(3) {
            if let Some(inv) = m.try_inverse() {
                let v = inv * rhs;
                // keep the optimum near the edge to avoid spikes from ill conditioning
                let len = (pb - pa).norm();
                let mid = (pa + pb) * 0.5;
                if (v - mid).norm() <= 2.0 * len {
                    best = Some((quadric_error(&q, &v), v));
                }
            }
        }
        for v in [pa, pb, (pa + pb) * 0.5] {
            let e = quadric_error(&q, &v);
            if best.is_none_or(|(c, _)| e < c) {
                best = Some((e, v));
            }
        }
        let (cost, target) = best.unwrap();
        Candidate {
            cost,
            a,
            b,
            stamp: (self.version[a as usize], self.version[b as usize]),
            target,
        }
    }

    /// Link condition: the common neighbours of a and b are exactly the
    /// apexes of the faces sharing edge ab.
    fn link_ok(&self, a: u32, b: u32) -> bool {
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common = na.iter().filter(|v| nb.binary_search(v).is_ok()).count();
        let shared = self.vert_faces[a as usize]
            .iter()
            .filter(|&&f| self.faces[f as usize].contains(&b))
            .count();
        common == shared
    }

    /// Rejects collapses that flip or degenerate any surviving face.
    fn geometry_ok(&self, a: u32, b: u32, target: &Vec3) -> bool {
        for &v in &[a, b] {
            for &f in &self.vert_faces[v as usize] {
                let tri = self.faces[f as usize];
                if tri.contains(&a) && tri.contains(&b) {
                    continue;
                }
                let p = tri.map(|u| self.pos[u as usize]);
                let before = (p[1] - p[0]).cross(&(p[2] - p[0]));
                let q = tri.map(|u| if u == a || u == b { *target } else { self.pos[u as usize] });
                let after = (q[1] - q[0]).cross(&(q[2] - q[0]));
                if after.norm_squared() <= 1e-30 || before.dot(&after) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, a: u32, b: u32, target: Vec3) {
        self.pos[a as usize] = target;
        self.quadric[a as usize] = self.quadric[a as usize] + self.quadric[b as usize];
        let b_faces = std::mem::take(&mut self.vert_faces[b as usize]);
        for f in b_faces {
            let tri = &mut self.faces[f as usize];
            if tri.contains(&a) {
                self.face_alive[f as usize] = false;
                self.alive_faces -= 1;
                for &u in tri.iter() {
                    if u != b {
                        self.vert_faces[u as usize].retain(|&g| g != f);
                    }
                }
            } else {
                for u in tri.iter_mut() {
                    if *u == b {
                        *u = a;
                    }
                }
                self.vert_faces[a as usize].push(f);
            }
        }
        self.vert_faces[a as usize].sort_unstable();
        self.version[a as usize] += 1;
        self.version[b as usize] += 1;
    }
}

/// Collapses edges by increasing quadric error until at most `target_faces`
/// remain or no legal collapse is left.
pub fn simplify_qem(mesh: &TriangleMesh, target_faces: usize) -> TriangleMesh {
    if mesh.faces.len() <= target_faces {
        return mesh.clone();
    }
    let nv = mesh.vertices.len();
    let mut quadric = vec![Quadric::zeros(); nv];
    let mut vert_faces = vec![Vec::new(); nv];
    let mut edge_faces: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (f, tri) in mesh.faces.iter().enumerate() {
        let cross = mesh.face_cross(f);
        let area2 = cross.norm();
        if area2 > 0.0 {
            let n = cross / area2;
            let q = plane_quadric(&n, &mesh.vertices[tri[0] as usize], area2 * 0.5);
            for &v in tri {
                quadric[v as usize] += q;
            }
        }
        for &v in tri {
            vert_faces[v as usize].push(f as u32);
        }
        for e in 0..3 {
            let (u, v) = (tri[e], tri[(e + 1) % 3]);
            edge_faces.entry((u.min(v), u.max(v))).or_default().push(f);
        }
    }
    let mut edges: Vec<(u32, u32)> = edge_faces.keys().copied().collect();
    edges.sort_unstable();
    for &(u, v) in &edges {
        let fs = &edge_faces[&(u, v)];
        if fs.len() == 1 {
            let f = fs[0];
            let n = mesh.face_normal(f);
            let (pu, pv) = (mesh.vertices[u as usize], mesh.vertices[v as usize]);
            let dir = pv - pu;
            let len = dir.norm();
            if let Some(side) = dir.cross(&n).try_normalize(1e-300) {
                let q = plane_quadric(&side, &pu, BOUNDARY_WEIGHT * len * len);
                quadric[u as usize] += q;
                quadric[v as usize] += q;
            }
        }
    }

    let mut st = State {
        pos: mesh.vertices.clone(),
        quadric,
        faces: mesh.faces.clone(),
        face_alive: vec![true; mesh.faces.len()],
        vert_faces,
        version: vec![0; nv],
        alive_faces: mesh.faces.len(),
    };
    let mut heap: BinaryHeap<Candidate> = edges.iter().map(|&(u, v)| st.candidate(u, v)).collect();

    while st.alive_faces > target_faces {
        let Some(c) = heap.pop() else { break };
        if c.stamp != (st.version[c.a as usize], st.version[c.b as usize]) {
            continue;
        }
        if st.vert_faces[c.a as usize].is_empty() || st.vert_faces[c.b as usize].is_empty() {
            continue;
        }
        if !st.link_ok(c.a, c.b) || !st.geometry_ok(c.a, c.b, &c.target) {
            continue;
        }
        st.collapse(c.a, c.b, c.target);
        for n in st.neighbors(c.a) {
            heap.push(st.candidate(c.a, n));
        }
    }

    let faces: Vec<[u32; 3]> = st
        .faces
        .iter()
        .zip(&st.face_alive)
        .filter(|(_, &alive)| alive)
        .map(|(f, _)| *f)
        .collect();
    TriangleMesh::new(st.pos, faces).compact()
}
