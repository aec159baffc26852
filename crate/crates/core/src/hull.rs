//! Incremental 3D convex hull (quickhull insertion order) on exact
//! orientation predicates.

use std::collections::HashMap;

use robust::{orient3d, Coord3D};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HullError {
    /// Fewer than four points, or all points coplanar.
    Degenerate,
    /// The horizon of an insertion was not a simple loop.
    NonSimpleHorizon,
}

#[derive(Clone, Debug)]
pub struct Hull {
    /// Outward-oriented triangles (counter-clockwise seen from outside).
    pub faces: Vec<[usize; 3]>,
    /// Sorted indices of the points that are hull vertices.
    pub vertices: Vec<usize>,
}

struct Face {
    v: [usize; 3],
    /// Face across edge v[i] -> v[i+1].
    adj: [usize; 3],
    outside: Vec<usize>,
    alive: bool,
}

#[inline]
fn c3(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

/// Exact sign: > 0 when `p` lies on the outer side of triangle (a, b, c).
#[inline]
fn above(pts: &[[f64; 3]], f: &[usize; 3], p: usize) -> f64 {
    -orient3d(c3(&pts[f[0]]), c3(&pts[f[1]]), c3(&pts[f[2]]), c3(&pts[p]))
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm2(a: &[f64; 3]) -> f64 {
    dot(a, a)
}

/// Picks four affinely independent points; ties resolve to the smaller index.
fn initial_simplex(pts: &[[f64; 3]]) -> Result<[usize; 4], HullError> {
    let n = pts.len();
    if n < 4 {
        return Err(HullError::Degenerate);
    }
    let mut extremes = [0usize; 6];
    for axis in 0..3 {
        let (mut lo, mut hi) = (0, 0);
        for i in 1..n {
            if pts[i][axis] < pts[lo][axis] {
                lo = i;
            }
            if pts[i][axis] > pts[hi][axis] {
                hi = i;
            }
        }
        extremes[2 * axis] = lo;
        extremes[2 * axis + 1] = hi;
    }
    let (mut a, mut b, mut best) = (0, 0, -1.0);
    for i in 0..6 {
        for j in i + 1..6 {
            let d = norm2(&sub(&pts[extremes[i]], &pts[extremes[j]]));
            if d > best {
                best = d;
                a = extremes[i].min(extremes[j]);
                b = extremes[i].max(extremes[j]);
            }
        }
    }
    if !(best > 0.0) {
        return Err(HullError::Degenerate);
    }
    let ab = sub(&pts[b], &pts[a]);
    let (mut c, mut best) = (usize::MAX, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let d = norm2(&cross(&ab, &sub(p, &pts[a])));
        if d > best {
            best = d;
            c = i;
        }
    }
    if c == usize::MAX {
        return Err(HullError::Degenerate);
    }
    let (mut d, mut best) = (usize::MAX, 0.0);
    for i in 0..n {
        let o = orient3d(c3(&pts[a]), c3(&pts[b]), c3(&pts[c]), c3(&pts[i])).abs();
        if o > best {
            best = o;
            d = i;
        }
    }
    if d == usize::MAX {
        return Err(HullError::Degenerate);
    }
    Ok([a, b, c, d])
}

pub fn convex_hull(pts: &[[f64; 3]]) -> Result<Hull, HullError> {
    let [a, b, c, d] = initial_simplex(pts)?;
    // orient so that d lies below (a, b, c)
    let (b, c) = if orient3d(c3(&pts[a]), c3(&pts[b]), c3(&pts[c]), c3(&pts[d])) > 0.0 {
        (b, c)
    } else {
        (c, b)
    };
    let mut faces: Vec<Face> = Vec::new();
    let tris = [[a, b, c], [a, d, b], [b, d, c], [c, d, a]];
    for t in tris {
        faces.push(Face {
            v: t,
            adj: [usize::MAX; 3],
            outside: Vec::new(),
            alive: true,
        });
    }
    link_all(&mut faces);

    let simplex = [a, b, c, d];
    for p in 0..pts.len() {
        if simplex.contains(&p) {
            continue;
        }
        if let Some(f) = (0..4).find(|&f| above(pts, &faces[f].v, p) > 0.0) {
            faces[f].outside.push(p);
        }
    }

    let mut stack: Vec<usize> = (0..4).rev().collect();
    while let Some(fi) = stack.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        let eye = furthest(pts, &faces[fi]);

        // visible region by flood fill
        let mut visible = vec![fi];
        let mut is_visible: HashMap<usize, bool> = HashMap::new();
        is_visible.insert(fi, true);
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for e in 0..3 {
                let g = faces[f].adj[e];
                if is_visible.contains_key(&g) {
                    continue;
                }
                let vis = above(pts, &faces[g].v, eye) > 0.0;
                is_visible.insert(g, vis);
                if vis {
                    visible.push(g);
                }
            }
        }

        // horizon edges (a -> b as oriented in the visible face)
        let mut horizon: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut first = None;
        for &f in &visible {
            for e in 0..3 {
                let g = faces[f].adj[e];
                if !is_visible[&g] {
                    let (ea, eb) = (faces[f].v[e], faces[f].v[(e + 1) % 3]);
                    if horizon.insert(ea, (eb, g)).is_some() {
                        return Err(HullError::NonSimpleHorizon);
                    }
                    first.get_or_insert(ea);
                }
            }
        }
        let start = first.ok_or(HullError::NonSimpleHorizon)?;
        let mut loop_edges = Vec::with_capacity(horizon.len());
        let mut cur = start;
        loop {
            let &(next, outer) = horizon.get(&cur).ok_or(HullError::NonSimpleHorizon)?;
            loop_edges.push((cur, next, outer));
            cur = next;
            if cur == start {
                break;
            }
            if loop_edges.len() > horizon.len() {
                return Err(HullError::NonSimpleHorizon);
            }
        }
        if loop_edges.len() != horizon.len() {
            return Err(HullError::NonSimpleHorizon);
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
        }

        let base = faces.len();
        let m = loop_edges.len();
        for (i, &(ea, eb, outer)) in loop_edges.iter().enumerate() {
            let id = base + i;
            faces.push(Face {
                v: [ea, eb, eye],
                adj: [outer, base + (i + 1) % m, base + (i + m - 1) % m],
                outside: Vec::new(),
                alive: true,
            });
            let o = &mut faces[outer];
            for e in 0..3 {
                if o.v[e] == eb && o.v[(e + 1) % 3] == ea {
                    o.adj[e] = id;
                }
            }
        }

        for p in orphans {
            if p == eye {
                continue;
            }
            if let Some(f) = (base..base + m).find(|&f| above(pts, &faces[f].v, p) > 0.0) {
                faces[f].outside.push(p);
            }
        }
        for f in (base..base + m).rev() {
            if !faces[f].outside.is_empty() {
                stack.push(f);
            }
        }
    }

    let live: Vec<[usize; 3]> = faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
    let mut vertices: Vec<usize> = live.iter().flatten().copied().collect();
    vertices.sort_unstable();
    vertices.dedup();
    Ok(Hull {
        faces: live,
        vertices,
    })
}

fn furthest(pts: &[[f64; 3]], f: &Face) -> usize {
    let a = &pts[f.v[0]];
    let n = cross(&sub(&pts[f.v[1]], a), &sub(&pts[f.v[2]], a));
    let mut best = f.outside[0];
    let mut best_d = f64::NEG_INFINITY;
    for &p in &f.outside {
        let d = dot(&n, &sub(&pts[p], a));
        if d > best_d || (d == best_d && p < best) {
            best_d = d;
            best = p;
        }
    }
    best
}

fn link_all(faces: &mut [Face]) {
    let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in 0..3 {
            edges.insert((f.v[e], f.v[(e + 1) % 3]), (fi, e));
        }
    }
    for f in faces.iter_mut() {
        for e in 0..3 {
            let (a, b) = (f.v[e], f.v[(e + 1) % 3]);
            f.adj[e] = edges[&(b, a)].0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_vertices(pts: &[[f64; 3]]) -> Vec<usize> {
        // a point is a hull vertex iff some plane through it has every other
        // point strictly on one side; check via all triangles of hull faces
        // found by brute force: a triple is a face if all points lie on one side.
        let n = pts.len();
        let mut on = vec![false; n];
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let mut pos = 0;
                    let mut neg = 0;
                    for (l, p) in pts.iter().enumerate() {
                        if l == i || l == j || l == k {
                            continue;
                        }
                        let o = orient3d(c3(&pts[i]), c3(&pts[j]), c3(&pts[k]), c3(p));
                        if o > 0.0 {
                            pos += 1;
                        } else if o < 0.0 {
                            neg += 1;
                        }
                    }
                    if pos == 0 || neg == 0 {
                        on[i] = true;
                        on[j] = true;
                        on[k] = true;
                    }
                }
            }
        }
        (0..n).filter(|&i| on[i]).collect()
    }

    #[test]
    fn random_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let pts: Vec<[f64; 3]> = (0..40)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let hull = convex_hull(&pts).unwrap();
            assert_eq!(hull.vertices, brute_force_vertices(&pts));
            // closed 2-manifold: F = 2V - 4
            assert_eq!(hull.faces.len(), 2 * hull.vertices.len() - 4);
            for f in &hull.faces {
                for p in 0..pts.len() {
                    assert!(above(&pts, f, p) <= 0.0);
                }
            }
        }
    }

    #[test]
    fn tetrahedron_is_its_own_hull() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.vertices, vec![0, 1, 2, 3]);
        assert_eq!(hull.faces.len(), 4);
    }

    #[test]
    fn coplanar_input_is_degenerate() {
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, (i * i) as f64, 0.0]).collect();
        assert_eq!(convex_hull(&pts).unwrap_err(), HullError::Degenerate);
        assert_eq!(convex_hull(&pts[..3]).unwrap_err(), HullError::Degenerate);
    }

    #[test]
    fn cube_with_interior_and_face_points() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.5, 0.5, 1.0]); // on a face, not a vertex
        pts.push([0.0, 0.0, 0.0]); // duplicate
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.vertices, (0..8).collect::<Vec<_>>());
    }
}
