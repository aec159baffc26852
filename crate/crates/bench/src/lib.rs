//! Shared inputs for the benchmarks.

use texrecon::camera::{make_rig, CameraRig, RigKind};
use texrecon::mesh::{ColoredPointCloud, TriangleMesh};
use texrecon::projection::render_mesh_depth;
use texrecon::raster::{DepthMap, RgbImage};
use texrecon::synthbench::{textured_cube, TexturedScene, CUBE_COLORS};
use texrecon::unproject::{compute_view_layers, detect_all_borders, default_dilate_px};
use texrecon::uvatlas::TexelTable;
use texrecon::visibility::DEFAULT_DEPTH_EPSILON;

/// A textured cube seen by a fib8 rig, with everything up to painting done.
pub struct CubeBench {
    pub scene: TexturedScene,
    pub cloud: ColoredPointCloud,
    pub rig: CameraRig,
    pub depths: Vec<DepthMap>,
    pub images: Vec<RgbImage>,
    pub table: TexelTable,
}

impl CubeBench {
    pub fn new(atlas_res: usize, image_res: usize, points: usize) -> CubeBench {
        let scene = textured_cube(CUBE_COLORS, atlas_res).expect("cube scene");
        let cloud = scene.sample_cloud(points, 0).expect("cloud");
        let rig = make_rig(RigKind::Fib8, image_res, 2.0).expect("rig");
        let depths: Vec<DepthMap> = rig.views.iter().map(|v| render_mesh_depth(&scene.mesh, v)).collect();
        let images = scene.render(&rig.views).expect("renders");
        let mut table = scene.texel_table().expect("texels");
        compute_view_layers(&mut table, &rig.views, &depths, DEFAULT_DEPTH_EPSILON).expect("layers");
        detect_all_borders(&mut table, default_dilate_px(atlas_res)).expect("borders");
        CubeBench {
            scene,
            cloud,
            rig,
            depths,
            images,
            table,
        }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.scene.mesh
    }
}
