//! Layered configuration: built-in defaults, then a config file, then flags.

use std::path::Path;

use clap::Args;
use texrecon::camera::RigKind;
use texrecon::inpaint::{Builtin, Inpainter};
use texrecon::pipeline::{Manifest, ReconstructConfig};
use texrecon::unproject::Strategy;
use texrecon::{Error, Result};

/// Reads a TOML config file, or the frozen config of a `manifest.json`.
pub fn load(path: Option<&Path>) -> Result<ReconstructConfig> {
    let Some(path) = path else {
        return Ok(ReconstructConfig::default());
    };
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(Manifest::read(path)?.config);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
    toml::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// Flags shared by the stages that look at the cloud through cameras.
#[derive(Args, Debug, Default, Clone)]
pub struct ViewFlags {
    /// Camera rig: cube6, fib8 or ico20.
    #[arg(long)]
    pub views: Option<RigKind>,
    /// Square image resolution per view.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Camera distance from the origin of the normalized frame.
    #[arg(long)]
    pub camera_radius: Option<f64>,
    #[arg(long)]
    pub hpr_radius_factor: Option<f64>,
    /// Depth tolerance for culling and texel visibility, in normalized units.
    #[arg(long)]
    pub depth_epsilon: Option<f64>,
    #[arg(long)]
    pub splat_px: Option<usize>,
    #[arg(long)]
    pub mask_splat_px: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct InpaintFlags {
    /// nearest, linear or remote:URL
    #[arg(long)]
    pub inpainter: Option<Inpainter>,
    /// Re-impose known pixels on the inpainter output.
    #[arg(long)]
    pub inpaint_strict: bool,
    /// Built-in inpainter to use when the remote one fails.
    #[arg(long)]
    pub inpaint_fallback: Option<Builtin>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TextureFlags {
    /// naive, nbf, opt-naive, opt-nbf or opt-scratch
    #[arg(long)]
    pub unproject: Option<Strategy>,
    /// Border dilation in texels.
    #[arg(long)]
    pub dilate_px: Option<usize>,
    #[arg(long)]
    pub atlas_res: Option<usize>,
    /// Gradient refinement iterations for the opt-* strategies.
    #[arg(long)]
    pub refine_iters: Option<usize>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl ViewFlags {
    pub fn apply(&self, cfg: &mut ReconstructConfig) {
        set(&mut cfg.views, self.views);
        set(&mut cfg.resolution, self.resolution);
        set(&mut cfg.camera_radius, self.camera_radius);
        set(&mut cfg.hpr_radius_factor, self.hpr_radius_factor);
        set(&mut cfg.depth_epsilon, self.depth_epsilon);
        set(&mut cfg.splat_px, self.splat_px);
        set(&mut cfg.mask_splat_px, self.mask_splat_px);
    }
}

impl InpaintFlags {
    pub fn apply(&self, cfg: &mut ReconstructConfig) {
        set(&mut cfg.inpaint.method, self.inpainter.clone());
        if self.inpaint_strict {
            cfg.inpaint.strict = Some(true);
        }
        if self.inpaint_fallback.is_some() {
            cfg.inpaint.fallback = self.inpaint_fallback;
        }
    }
}

impl TextureFlags {
    pub fn apply(&self, cfg: &mut ReconstructConfig) {
        set(&mut cfg.unproject, self.unproject);
        if self.dilate_px.is_some() {
            cfg.dilate_px = self.dilate_px;
        }
        set(&mut cfg.atlas_res, self.atlas_res);
        set(&mut cfg.refine_iters, self.refine_iters);
    }
}
