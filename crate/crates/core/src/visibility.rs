//! Per-view point visibility: spherical-flip hidden point removal and
//! mesh-depth culling.

use crate::camera::View;
use crate::error::{Error, Result};
use crate::hull::convex_hull;
use crate::mesh::Vec3;
use crate::raster::DepthMap;

pub const DEFAULT_RADIUS_FACTOR: f64 = 100.0;
pub const DEFAULT_DEPTH_EPSILON: f64 = 5e-3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Visible {
    /// Sorted indices of visible points.
    pub indices: Vec<usize>,
    /// Set when the hull was degenerate and every point was reported visible.
    pub degenerate: bool,
}

impl Visible {
    fn all(n: usize) -> Visible {
        Visible {
            indices: (0..n).collect(),
            degenerate: true,
        }
    }
}

/// Spherical-flip hidden point removal as seen from `view`'s position, with
/// flip radius `radius_factor` times the largest camera distance.
pub fn hidden_point_removal(points: &[Vec3], view: &View, radius_factor: f64) -> Visible {
    let eye = view.position();
    let max_norm = points.iter().map(|p| (p - eye).norm()).fold(0.0, f64::max);
    hidden_point_removal_radius(points, view, radius_factor * max_norm)
}

/// Hidden point removal with an absolute flip radius `r`.
pub fn hidden_point_removal_radius(points: &[Vec3], view: &View, r: f64) -> Visible {
    let n = points.len();
    if n < 4 || !(r > 0.0) {
        return Visible::all(n);
    }
    let eye = view.position();
    let rel: Vec<Vec3> = points.iter().map(|p| p - eye).collect();
    let mut flipped: Vec<[f64; 3]> = rel
        .iter()
        .map(|p| {
            let len = p.norm();
            if len > 0.0 {
                let q = p + p * (2.0 * (r - len) / len);
                [q.x, q.y, q.z]
            } else {
                [0.0; 3]
            }
        })
        .collect();
    flipped.push([0.0; 3]);
    match convex_hull(&flipped) {
        Ok(hull) => Visible {
            indices: hull.vertices.into_iter().filter(|&i| i < n).collect(),
            degenerate: false,
        },
        Err(e) => {
            log::warn!("hidden point removal: degenerate hull ({e:?}); treating all points as visible");
            Visible::all(n)
        }
    }
}

/// Keeps the points whose view depth does not exceed the mesh depth at their
/// pixel by more than `epsilon`. Points over background pixels are kept.
pub fn depth_cull(points: &[Vec3], indices: &[usize], view: &View, mesh_depth: &DepthMap, epsilon: f64) -> Result<Vec<usize>> {
    if mesh_depth.dims() != view.dims() {
        return Err(Error::precondition(format!(
            "depth map is {}x{} but the view renders {}x{}",
            mesh_depth.width(),
            mesh_depth.height(),
            view.width,
            view.height
        )));
    }
    Ok(indices
        .iter()
        .copied()
        .filter(|&i| {
            let p = view.project(&points[i]);
            match p.pixel(view.width, view.height) {
                Some((x, y)) => {
                    let d = mesh_depth.get(x, y) as f64;
                    !d.is_finite() || p.depth <= d + epsilon
                }
                None => true,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, UnitSphere};

    fn view_from(pos: Vec3) -> View {
        View::look_at(pos, Vec3::zeros(), 50f64.to_radians(), 64, 64).unwrap()
    }

    #[test]
    fn four_points_all_visible() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.3, 0.0, 0.1),
            Vec3::new(0.0, 0.3, -0.1),
            Vec3::new(-0.2, -0.2, 0.2),
        ];
        let v = hidden_point_removal(&pts, &view_from(Vec3::new(0.0, 0.0, 3.0)), 100.0);
        assert_eq!(v.indices, vec![0, 1, 2, 3]);
        assert!(!v.degenerate);
    }

    #[test]
    fn sphere_front_kept_back_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| {
                let d: [f64; 3] = UnitSphere.sample(&mut rng);
                Vec3::from(d)
            })
            .collect();
        let cam = Vec3::new(0.0, 0.0, 3.0);
        let vis = hidden_point_removal(&pts, &view_from(cam), 100.0);
        let mut is_vis = vec![false; pts.len()];
        for &i in &vis.indices {
            is_vis[i] = true;
        }
        let (mut front, mut front_kept, mut back, mut back_removed) = (0, 0, 0, 0);
        for (i, p) in pts.iter().enumerate() {
            let c = p.dot(&(cam - p).normalize());
            if c > 0.3 {
                front += 1;
                front_kept += is_vis[i] as usize;
            } else if c < -0.3 {
                back += 1;
                back_removed += !is_vis[i] as usize;
            }
        }
        assert!(front_kept as f64 >= 0.95 * front as f64, "{front_kept}/{front}");
        assert!(back_removed as f64 >= 0.95 * back as f64, "{back_removed}/{back}");
    }

    #[test]
    fn plane_facing_camera_is_fully_visible() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(Vec3::new(i as f64 * 0.05 - 0.5, j as f64 * 0.05 - 0.5, 0.0));
            }
        }
        let vis = hidden_point_removal(&pts, &view_from(Vec3::new(0.0, 0.0, 2.0)), 100.0);
        assert_eq!(vis.indices.len(), pts.len());
    }

    #[test]
    fn idempotent_on_visible_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| Vec3::from(UnitSphere.sample(&mut rng) as [f64; 3]))
            .collect();
        let view = view_from(Vec3::new(1.0, 2.0, 2.0));
        let r = 100.0 * pts.iter().map(|p| (p - view.position()).norm()).fold(0.0, f64::max);
        let first = hidden_point_removal_radius(&pts, &view, r);
        assert_eq!(first, hidden_point_removal(&pts, &view, 100.0));
        let subset: Vec<Vec3> = first.indices.iter().map(|&i| pts[i]).collect();
        let second = hidden_point_removal_radius(&subset, &view, r);
        assert_eq!(second.indices, (0..subset.len()).collect::<Vec<_>>());
    }

    #[test]
    fn coplanar_falls_back_to_all_visible() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        // camera on the same line: flipped points and origin are collinear
        let view = View::look_at(Vec3::new(-5.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 1.0, 8, 8).unwrap();
        let vis = hidden_point_removal(&pts, &view, 100.0);
        assert!(vis.degenerate);
        assert_eq!(vis.indices.len(), 10);
    }

    #[test]
    fn depth_cull_thresholds() {
        let view = view_from(Vec3::new(0.0, 0.0, 2.0));
        let mut depth = DepthMap::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                depth.set(x, y, 2.0);
            }
        }
        let eps = 5e-3;
        let pts = vec![Vec3::zeros(), Vec3::new(0.0, 0.0, -10.0 * eps)];
        assert_eq!(depth_cull(&pts, &[0, 1], &view, &depth, eps).unwrap(), vec![0]);
        let small = DepthMap::new(32, 32);
        assert!(depth_cull(&pts, &[0], &view, &small, eps).is_err());
        // background keeps everything
        let bg = DepthMap::new(64, 64);
        assert_eq!(depth_cull(&pts, &[0, 1], &view, &bg, eps).unwrap(), vec![0, 1]);
    }
}
