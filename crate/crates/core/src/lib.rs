//! Textured mesh reconstruction from colored point clouds: project the cloud
//! into virtual cameras, inpaint the sparse views, and unproject the dense
//! images onto a UV-mapped mesh.
//!
//! NaN-rejecting guards are written as `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod geomex;
pub mod hull;
pub mod inpaint;
pub mod mesh;
pub mod metrics;
pub mod pcio;
pub mod pipeline;
pub mod projection;
pub mod raster;
pub mod rasterizer;
pub mod synthbench;
pub mod unproject;
pub mod uvatlas;
pub mod visibility;

pub use error::{Error, Result};
