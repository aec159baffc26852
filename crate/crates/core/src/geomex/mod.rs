//! Geometry from depth: TSDF fusion of dense depth maps, marching cubes,
//! quadric simplification and Taubin smoothing.

mod marching_cubes;
mod qem;
mod tables;
mod taubin;
mod tsdf;

use serde::{Deserialize, Serialize};

pub use marching_cubes::marching_cubes;
pub use qem::simplify_qem;
pub use taubin::taubin_smooth;
pub use tsdf::{tsdf_fuse, DepthObservation, TsdfVolume};

use crate::error::Result;
use crate::mesh::TriangleMesh;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub resolution: usize,
    /// Truncation distance in voxels.
    pub trunc_voxels: f64,
    /// Half extent of the fusion cube around the origin.
    pub half_extent: f64,
    pub target_faces: usize,
    pub lambda: f64,
    pub mu: f64,
    pub smooth_iterations: usize,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            resolution: 128,
            trunc_voxels: 3.0,
            half_extent: 0.55,
            target_faces: 100_000,
            lambda: 0.5,
            mu: -0.53,
            smooth_iterations: 10,
        }
    }
}

impl GeometryParams {
    pub fn voxel_size(&self) -> f64 {
        2.0 * self.half_extent / (self.resolution - 1) as f64
    }
}

/// Fuses, meshes, simplifies and smooths.
pub fn extract_geometry(observations: &[DepthObservation], params: &GeometryParams) -> Result<TriangleMesh> {
    let trunc = params.trunc_voxels * params.voxel_size();
    let vol = tsdf_fuse(observations, params.resolution, -params.half_extent, params.half_extent, trunc)?;
    let mesh = marching_cubes(&vol, 0.0)?;
    let mesh = simplify_qem(&mesh, params.target_faces);
    Ok(taubin_smooth(&mesh, params.lambda, params.mu, params.smooth_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{make_rig, RigKind, View};
    use crate::error::Error;
    use crate::mesh::{shapes, Vec3};
    use crate::raster::{DepthMap, Mask};
    use crate::synthbench::sphere_depth_map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, UnitSphere};

    fn sphere_volume(res: usize, radius: f64) -> TsdfVolume {
        let vs = 1.1 / (res - 1) as f64;
        TsdfVolume::from_sdf(res, -0.55, 0.55, 3.0 * vs, |p| p.norm() - radius).unwrap()
    }

    #[test]
    fn plane_zero_crossing_at_depth() {
        let view = View::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), 50f64.to_radians(), 64, 64).unwrap();
        let mut depth = DepthMap::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                depth.set(x, y, 2.1);
            }
        }
        let mask = Mask::full(64, 64);
        let obs = [DepthObservation {
            view: &view,
            depth: &depth,
            mask: &mask,
        }];
        let res = 33;
        let vol = tsdf_fuse(&obs, res, -0.4, 0.4, 0.1).unwrap();
        let c = res / 2;
        // march along z through the center column to the sign change
        let mut crossing = None;
        for k in 0..res - 1 {
            let (a, b) = (vol.values[vol.index(c, c, k)], vol.values[vol.index(c, c, k + 1)]);
            if vol.weights[vol.index(c, c, k)] > 0.0 && (a < 0.0) != (b < 0.0) {
                let za = vol.position(c, c, k).z;
                crossing = Some(za + (0.0 - a as f64) / (b - a) as f64 * vol.voxel_size);
            }
        }
        let z = crossing.expect("sign change");
        assert!((z - (-0.1)).abs() <= vol.voxel_size / 2.0, "{z}");
        // far behind the plane: never observed
        assert_eq!(vol.weights[vol.index(c, c, 0)], 0.0);
        assert!(vol.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn no_views_is_an_error() {
        assert!(tsdf_fuse(&[], 8, -1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn fused_sphere_radius_within_a_voxel() {
        let rig = make_rig(RigKind::Fib8, 256, 2.0).unwrap();
        let maps: Vec<(DepthMap, Mask)> = rig.views.iter().map(|v| sphere_depth_map(v, Vec3::zeros(), 0.4)).collect();
        let obs: Vec<DepthObservation> = rig
            .views
            .iter()
            .zip(&maps)
            .map(|(view, (depth, mask))| DepthObservation { view, depth, mask })
            .collect();
        let res = 128;
        let vs = 1.1 / (res - 1) as f64;
        let vol = tsdf_fuse(&obs, res, -0.55, 0.55, 3.0 * vs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let d = Vec3::from(UnitSphere.sample(&mut rng) as [f64; 3]);
            // trilinear probe along the ray for the zero crossing
            let sample = |t: f64| -> f64 {
                let p = d * t;
                let g = (p - Vec3::from(vol.origin)) / vol.voxel_size;
                let (i, j, k) = (g.x.floor() as usize, g.y.floor() as usize, g.z.floor() as usize);
                let (fx, fy, fz) = (g.x - i as f64, g.y - j as f64, g.z - k as f64);
                let mut acc = 0.0;
                for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                            acc += wx * wy * wz * vol.values[vol.index(i + dx, j + dy, k + dz)] as f64;
                        }
                    }
                }
                acc
            };
            let (mut lo, mut hi) = (0.4 - vs, 0.4 + vs);
            assert!(sample(lo) < 0.0 && sample(hi) > 0.0, "{} {} {:?}", sample(lo), sample(hi), d);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if sample(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((lo - 0.4).abs() <= vs, "radius {lo}");
        }
    }

    #[test]
    fn sphere_mesh_is_closed_and_outward() {
        let vol = sphere_volume(64, 0.4);
        let m = marching_cubes(&vol, 0.0).unwrap();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        let outward = (0..m.faces.len())
            .filter(|&f| {
                let c = m.corners(f);
                m.face_cross(f).dot(&((c[0] + c[1] + c[2]) / 3.0)) > 0.0
            })
            .count();
        assert_eq!(outward, m.faces.len());
    }

    #[test]
    fn all_positive_volume_is_empty() {
        let vol = TsdfVolume::from_sdf(8, -1.0, 1.0, 0.1, |_| 1.0).unwrap();
        assert!(matches!(marching_cubes(&vol, 0.0), Err(Error::EmptyMesh)));
    }

    #[test]
    fn sphere_vertices_within_a_voxel() {
        let vol = sphere_volume(128, 0.4);
        let m = marching_cubes(&vol, 0.0).unwrap();
        let worst = m.vertices.iter().map(|v| (v.norm() - 0.4).abs()).fold(0.0, f64::max);
        assert!(worst <= vol.voxel_size, "{worst}");
    }

    #[test]
    fn qem_noop_when_under_target() {
        let m = shapes::icosphere(Vec3::zeros(), 1.0, 2);
        let s = simplify_qem(&m, m.faces.len());
        assert_eq!(s.faces, m.faces);
        assert_eq!(s.vertices, m.vertices);
    }

    #[test]
    fn qem_keeps_plane_exact() {
        let grid = shapes::planar_grid(30, 1.0, 0.25);
        let target = grid.faces.len() / 10;
        let s = simplify_qem(&grid, target);
        assert!(s.faces.len() <= target, "{} faces", s.faces.len());
        for v in &s.vertices {
            assert!((v.z - 0.25).abs() < 1e-6);
        }
        s.validate().unwrap();
    }

    /// Distance from p to a triangle (Ericson's closest-point routine).
    fn point_triangle_distance(p: &Vec3, t: [Vec3; 3]) -> f64 {
        let [a, b, c] = t;
        let (ab, ac, ap) = (b - a, c - a, p - a);
        let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
        if d1 <= 0.0 && d2 <= 0.0 {
            return (p - a).norm();
        }
        let bp = p - b;
        let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
        if d3 >= 0.0 && d4 <= d3 {
            return (p - b).norm();
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return (p - (a + ab * (d1 / (d1 - d3)))).norm();
        }
        let cp = p - c;
        let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
        if d6 >= 0.0 && d5 <= d6 {
            return (p - c).norm();
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return (p - (a + ac * (d2 / (d2 - d6)))).norm();
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
        }
        let denom = 1.0 / (va + vb + vc);
        (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm()
    }

    fn one_sided(from: &crate::mesh::TriangleMesh, to: &crate::mesh::TriangleMesh) -> f64 {
        let samples = crate::pcio::sample_surface(from, 1000, 5).unwrap();
        samples
            .iter()
            .map(|s| {
                (0..to.faces.len())
                    .map(|f| point_triangle_distance(&s.position, to.corners(f)))
                    .fold(f64::MAX, f64::min)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn qem_sphere_hausdorff() {
        let sphere = shapes::uv_sphere(Vec3::zeros(), 1.0, 100, 101);
        assert!(sphere.faces.len() >= 19_000);
        let s = simplify_qem(&sphere, 2000);
        assert!(s.faces.len() <= 2000);
        assert!(s.is_watertight());
        let h = one_sided(&sphere, &s).max(one_sided(&s, &sphere));
        assert!(h <= 0.02, "hausdorff {h}");
    }

    #[test]
    fn taubin_zero_iterations_is_identity() {
        let m = shapes::icosphere(Vec3::zeros(), 1.0, 2);
        assert_eq!(taubin_smooth(&m, 0.5, -0.53, 0).vertices, m.vertices);
    }

    #[test]
    fn taubin_reduces_noise() {
        let mut m = shapes::icosphere(Vec3::zeros(), 1.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = Normal::new(0.0, 0.01).unwrap();
        for v in &mut m.vertices {
            *v += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
        let rms = |m: &crate::mesh::TriangleMesh| {
            (m.vertices.iter().map(|v| (v.norm() - 1.0).powi(2)).sum::<f64>() / m.vertices.len() as f64).sqrt()
        };
        let s = taubin_smooth(&m, 0.5, -0.53, 10);
        assert!(rms(&s) < rms(&m), "{} vs {}", rms(&s), rms(&m));
        assert_eq!(s.faces, m.faces);
    }

    #[test]
    fn taubin_leaves_planar_grid_interior() {
        let g = shapes::planar_grid(10, 1.0, 0.0);
        let s = taubin_smooth(&g, 0.5, -0.53, 10);
        for (a, b) in g.vertices.iter().zip(&s.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn extract_geometry_sphere() {
        let rig = make_rig(RigKind::Fib8, 128, 2.0).unwrap();
        let maps: Vec<(DepthMap, Mask)> = rig.views.iter().map(|v| sphere_depth_map(v, Vec3::zeros(), 0.45)).collect();
        let obs: Vec<DepthObservation> = rig
            .views
            .iter()
            .zip(&maps)
            .map(|(view, (depth, mask))| DepthObservation { view, depth, mask })
            .collect();
        let params = GeometryParams {
            resolution: 64,
            target_faces: 4000,
            ..Default::default()
        };
        let m = extract_geometry(&obs, &params).unwrap();
        assert!(m.faces.len() <= 4000);
        let mean = m.vertices.iter().map(|v| (v.norm() - 0.45).abs()).sum::<f64>() / m.vertices.len() as f64;
        assert!(mean < params.voxel_size(), "{mean}");
    }
}
