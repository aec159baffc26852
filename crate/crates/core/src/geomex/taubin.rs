use crate::mesh::{TriangleMesh, Vec3};

/// Alternating uniform-Laplacian steps with factors `lambda` and `mu`.
/// Vertices on open boundaries stay fixed.
pub fn taubin_smooth(mesh: &TriangleMesh, lambda: f64, mu: f64, iterations: usize) -> TriangleMesh {
    let n = mesh.vertices.len();
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for f in &mesh.faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            neighbors[a as usize].push(b);
            neighbors[b as usize].push(a);
        }
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
        nb.dedup();
    }
    let mut fixed = vec![false; n];
    for (&(a, b), &count) in &mesh.edge_counts() {
        if count == 1 {
            fixed[a as usize] = true;
            fixed[b as usize] = true;
        }
    }

    let mut pos = mesh.vertices.clone();
    let step = |pos: &[Vec3], factor: f64| -> Vec<Vec3> {
        pos.iter()
            .enumerate()
            .map(|(i, p)| {
                if fixed[i] || neighbors[i].is_empty() {
                    return *p;
                }
                let avg = neighbors[i].iter().fold(Vec3::zeros(), |acc, &j| acc + pos[j as usize])
                    / neighbors[i].len() as f64;
                p + (avg - p) * factor
            })
            .collect()
    };
    for _ in 0..iterations {
        pos = step(&pos, lambda);
        pos = step(&pos, mu);
    }
    TriangleMesh {
        vertices: pos,
        ..mesh.clone()
    }
}
