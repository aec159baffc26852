use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::View;
use crate::error::{Error, Result};
use crate::mesh::Vec3;
use crate::raster::{DepthMap, Mask};

/// Truncated signed distance grid. Samples sit on grid points
/// `origin + (i, j, k) · voxel_size`; values are in units of the truncation
/// distance, positive outside.
#[derive(Clone, Debug)]
pub struct TsdfVolume {
    pub resolution: usize,
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub values: Vec<f32>,
    pub weights: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    resolution: usize,
    origin: [f64; 3],
    voxel_size: f64,
}

impl TsdfVolume {
    /// Unobserved volume covering the cube `[lo, hi]³`.
    pub fn new(resolution: usize, lo: f64, hi: f64) -> Result<TsdfVolume> {
        if resolution < 2 || !(hi > lo) {
            return Err(Error::precondition("TSDF volume needs resolution ≥ 2 and a non-empty extent"));
        }
        let n = resolution.pow(3);
        Ok(TsdfVolume {
            resolution,
            origin: [lo; 3],
            voxel_size: (hi - lo) / (resolution - 1) as f64,
            values: vec![1.0; n],
            weights: vec![0.0; n],
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.voxel_size,
            self.origin[1] + j as f64 * self.voxel_size,
            self.origin[2] + k as f64 * self.voxel_size,
        )
    }

    /// Fills the volume from an analytic signed distance function, for tests
    /// and benchmarks.
    pub fn from_sdf(resolution: usize, lo: f64, hi: f64, trunc: f64, sdf: impl Fn(&Vec3) -> f64 + Sync) -> Result<TsdfVolume> {
        let mut vol = TsdfVolume::new(resolution, lo, hi)?;
        let r = resolution;
        let (origin, vs) = (vol.origin, vol.voxel_size);
        vol.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            let (i, j, k) = (idx % r, (idx / r) % r, idx / (r * r));
            let p = Vec3::new(origin[0] + i as f64 * vs, origin[1] + j as f64 * vs, origin[2] + k as f64 * vs);
            *v = (sdf(&p).clamp(-trunc, trunc) / trunc) as f32;
        });
        vol.weights.fill(1.0);
        Ok(vol)
    }

    /// Raw little-endian f32 values plus a JSON sidecar next to them.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(path, bytes).map_err(|e| Error::io_path(path, e))?;
        let sidecar = Sidecar {
            resolution: self.resolution,
            origin: self.origin,
            voxel_size: self.voxel_size,
        };
        let json_path = path.with_extension("json");
        std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io_path(&json_path, e))
    }
}

/// One observation of the scene: a dense depth map and its foreground mask.
pub struct DepthObservation<'a> {
    pub view: &'a View,
    pub depth: &'a DepthMap,
    pub mask: &'a Mask,
}

/// Weighted TSDF integration with weight 1 per observing view.
///
/// A voxel projecting to a background pixel (outside the mask or at +∞)
/// counts as free space. Voxels more than `trunc` behind the observed
/// surface are left untouched by that view.
pub fn tsdf_fuse(observations: &[DepthObservation], resolution: usize, lo: f64, hi: f64, trunc: f64) -> Result<TsdfVolume> {
    if observations.is_empty() {
        return Err(Error::precondition("TSDF fusion needs at least one view"));
    }
    if !(trunc > 0.0) {
        return Err(Error::precondition("truncation distance must be positive"));
    }
    for o in observations {
        if o.depth.dims() != o.view.dims() || o.mask.dims() != o.view.dims() {
            return Err(Error::precondition("depth map or mask size differs from its view"));
        }
    }
    let mut vol = TsdfVolume::new(resolution, lo, hi)?;
    let r = resolution;
    let (origin, vs) = (vol.origin, vol.voxel_size);
    vol.values
        .par_iter_mut()
        .zip(vol.weights.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (value, weight))| {
            let (i, j, k) = (idx % r, (idx / r) % r, idx / (r * r));
            let p = Vec3::new(origin[0] + i as f64 * vs, origin[1] + j as f64 * vs, origin[2] + k as f64 * vs);
            let (mut sum, mut count) = (0.0f64, 0u32);
            for o in observations {
                let proj = o.view.project(&p);
                let Some((x, y)) = proj.pixel(o.view.width, o.view.height) else {
                    continue;
                };
                let d = o.depth.get(x, y) as f64;
                if !o.mask.get(x, y) || !d.is_finite() {
                    sum += 1.0;
                    count += 1;
                    continue;
                }
                let sdf = d - proj.depth;
                if sdf < -trunc {
                    continue;
                }
                sum += sdf.min(trunc) / trunc;
                count += 1;
            }
            if count > 0 {
                *value = (sum / count as f64) as f32;
                *weight = count as f32;
            }
        });
    Ok(vol)
}
