//! Fixed multi-view camera rigs and the pinhole projection shared by every
//! other stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

pub const DEFAULT_RESOLUTION: usize = 256;
pub const DEFAULT_RADIUS: f64 = 2.0;
pub const DEFAULT_FOV_Y_DEG: f64 = 50.0;

/// A pinhole camera looking at a target.
///
/// Pixel coordinates are continuous with pixel `(c, r)` covering
/// `[c, c+1) × [r, r+1)`; `x` grows to the right and `y` downward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub position: [f64; 3],
    /// Unit viewing direction (toward the subject).
    pub direction: [f64; 3],
    /// World up hint used to build the camera basis.
    pub up: [f64; 3],
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    #[serde(skip)]
    basis: Basis,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Basis {
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    focal: f64,
}

/// Result of projecting a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub x: f64,
    pub y: f64,
    /// Distance along the camera forward axis; ≤ 0 behind the camera.
    pub depth: f64,
}

impl Projected {
    /// Integer pixel containing the projection, if in frame and in front.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        if !(self.depth > 0.0) || !(self.x >= 0.0 && self.y >= 0.0) {
            return None;
        }
        let (px, py) = (self.x.floor(), self.y.floor());
        if px < width as f64 && py < height as f64 {
            Some((px as usize, py as usize))
        } else {
            None
        }
    }
}

impl View {
    /// Camera at `position` looking at `target`. `up` defaults to +Y and
    /// falls back to +X when the view direction is parallel to it.
    pub fn look_at(position: Vec3, target: Vec3, fov_y: f64, width: usize, height: usize) -> Result<View> {
        let dir = target - position;
        let len = dir.norm();
        if !(len > 0.0) {
            return Err(Error::precondition("camera position coincides with its target"));
        }
        if width == 0 || height == 0 {
            return Err(Error::precondition("image resolution must be positive"));
        }
        let forward = dir / len;
        let up = if forward.y.abs() > 1.0 - 1e-9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let mut view = View {
            position: position.into(),
            direction: forward.into(),
            up: up.into(),
            fov_y,
            width,
            height,
            near: len * 0.01,
            far: len * 10.0,
            basis: Basis::default(),
        };
        view.rebuild();
        Ok(view)
    }

    fn rebuild(&mut self) {
        let forward = Vec3::from(self.direction).normalize();
        let right = forward.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&forward);
        let focal = (self.height as f64 / 2.0) / (self.fov_y / 2.0).tan();
        self.basis = Basis {
            right,
            up,
            forward,
            focal,
        };
    }

    /// Restores derived state after deserialization.
    pub fn finish(mut self) -> View {
        self.rebuild();
        self
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn forward(&self) -> Vec3 {
        self.basis.forward
    }

    pub fn right(&self) -> Vec3 {
        self.basis.right
    }

    pub fn camera_up(&self) -> Vec3 {
        self.basis.up
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        self.basis.focal
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// World point to camera coordinates (right, up, forward).
    #[inline]
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let d = p - self.position();
        Vec3::new(d.dot(&self.basis.right), d.dot(&self.basis.up), d.dot(&self.basis.forward))
    }

    /// Camera-space point to continuous pixel coordinates.
    #[inline]
    pub fn camera_to_pixel(&self, c: &Vec3) -> (f64, f64) {
        let f = self.basis.focal;
        (
            self.width as f64 / 2.0 + f * c.x / c.z,
            self.height as f64 / 2.0 - f * c.y / c.z,
        )
    }

    #[inline]
    pub fn project(&self, p: &Vec3) -> Projected {
        let c = self.to_camera(p);
        let (x, y) = self.camera_to_pixel(&c);
        Projected { x, y, depth: c.z }
    }

    /// Inverse of [`View::project`].
    pub fn unproject(&self, x: f64, y: f64, depth: f64) -> Vec3 {
        let f = self.basis.focal;
        let cx = (x - self.width as f64 / 2.0) * depth / f;
        let cy = (self.height as f64 / 2.0 - y) * depth / f;
        self.position() + self.basis.right * cx + self.basis.up * cy + self.basis.forward * depth
    }

    /// Unit ray direction through continuous pixel coordinates.
    pub fn ray_direction(&self, x: f64, y: f64) -> Vec3 {
        (self.unproject(x, y, 1.0) - self.position()).normalize()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigKind {
    Cube6,
    Fib8,
    Ico20,
}

impl RigKind {
    pub fn view_count(self) -> usize {
        match self {
            RigKind::Cube6 => 6,
            RigKind::Fib8 => 8,
            RigKind::Ico20 => 20,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RigKind::Cube6 => "cube6",
            RigKind::Fib8 => "fib8",
            RigKind::Ico20 => "ico20",
        }
    }
}

impl std::str::FromStr for RigKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube6" => Ok(RigKind::Cube6),
            "fib8" => Ok(RigKind::Fib8),
            "ico20" => Ok(RigKind::Ico20),
            other => Err(Error::input(format!("unknown rig `{other}` (cube6|fib8|ico20)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub kind: RigKind,
    pub views: Vec<View>,
}

impl CameraRig {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<CameraRig> {
        let mut rig: CameraRig = serde_json::from_str(text)?;
        rig.views = rig.views.into_iter().map(View::finish).collect();
        Ok(rig)
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Unit directions of the rig's camera positions.
pub fn rig_directions(kind: RigKind) -> Vec<Vec3> {
    match kind {
        RigKind::Cube6 => vec![
            Vec3::x(),
            -Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
            Vec3::z(),
            -Vec3::z(),
        ],
        RigKind::Fib8 => fibonacci_sphere(8),
        RigKind::Ico20 => icosahedron_face_centers(),
    }
}

/// Canonical Fibonacci lattice: point t of n at height 1 − 2(t+½)/n and
/// azimuth 2πt/φ.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|t| {
            let y = 1.0 - 2.0 * (t as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let a = 2.0 * std::f64::consts::PI * t as f64 / phi;
            Vec3::new(r * a.cos(), y, r * a.sin())
        })
        .collect()
}

/// The 20 face-center directions of a regular icosahedron (equivalently the
/// vertices of the dual dodecahedron).
pub fn icosahedron_face_centers() -> Vec<Vec3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let inv = 1.0 / phi;
    let mut out = Vec::with_capacity(20);
    for &sx in &[1.0, -1.0] {
        for &sy in &[1.0, -1.0] {
            for &sz in &[1.0, -1.0] {
                out.push(Vec3::new(sx, sy, sz));
            }
        }
    }
    for &a in &[1.0, -1.0] {
        for &b in &[1.0, -1.0] {
            out.push(Vec3::new(0.0, a * inv, b * phi));
            out.push(Vec3::new(a * inv, b * phi, 0.0));
            out.push(Vec3::new(a * phi, 0.0, b * inv));
        }
    }
    out.into_iter().map(|v| v.normalize()).collect()
}

/// Builds a rig of cameras on a sphere of `radius`, all looking at the origin.
pub fn make_rig(kind: RigKind, resolution: usize, radius: f64) -> Result<CameraRig> {
    make_rig_with_fov(kind, resolution, radius, DEFAULT_FOV_Y_DEG.to_radians())
}

pub fn make_rig_with_fov(kind: RigKind, resolution: usize, radius: f64, fov_y: f64) -> Result<CameraRig> {
    if !(radius > 0.0) {
        return Err(Error::precondition("rig radius must be positive"));
    }
    let views = rig_directions(kind)
        .into_iter()
        .map(|d| View::look_at(d * radius, Vec3::zeros(), fov_y, resolution, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraRig { kind, views })
}

/// Cosine between a surface normal and the direction toward the camera
/// (the reversed view direction). Front-facing surfaces score positive.
pub fn direction_priority(normal: &Vec3, view: &View) -> Result<f64> {
    let len = normal.norm();
    if !(len > 0.0) {
        return Err(Error::precondition("direction priority needs a non-zero normal"));
    }
    Ok(-(normal / len).dot(&view.forward()))
}
