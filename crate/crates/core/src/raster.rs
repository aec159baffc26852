//! 2D rasters exchanged between stages: sparse/dense RGB images, depth maps
//! and boolean masks, plus their on-disk formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb as PxRgb};

use crate::error::{Error, Result};

/// Linear RGB color, each channel in [0, 1].
pub type Rgb = [f32; 3];

pub const WHITE: Rgb = [1.0, 1.0, 1.0];
pub const BLACK: Rgb = [0.0, 0.0, 0.0];

/// Values that can live in a [`Raster`] together with their "unknown" sentinel.
pub trait Sample: Copy + PartialEq + Send + Sync + std::fmt::Debug {
    const SENTINEL: Self;
}

impl Sample for Rgb {
    const SENTINEL: Self = BLACK;
}

impl Sample for f32 {
    const SENTINEL: Self = f32::INFINITY;
}

/// A row-major raster with a per-pixel `known` flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
    known: Vec<bool>,
}

pub type RgbImage = Raster<Rgb>;
pub type DepthMap = Raster<f32>;
/// Texture atlas: a square RGB raster whose `known` flags mark painted texels.
pub type TextureAtlas = Raster<Rgb>;

impl<T: Sample> Raster<T> {
    /// All pixels unknown, holding the sentinel.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::SENTINEL; width * height],
            known: vec![false; width * height],
        }
    }

    /// All pixels known with value `value`.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
            known: vec![true; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, data: Vec<T>, known: Vec<bool>) -> Result<Self> {
        if data.len() != width * height || known.len() != width * height {
            return Err(Error::precondition(format!(
                "raster buffers do not match {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            known,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn is_known(&self, x: usize, y: usize) -> bool {
        self.known[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.idx(x, y);
        self.data[i] = value;
        self.known[i] = true;
    }

    /// Stores a value without marking the pixel known (used for backgrounds).
    #[inline]
    pub fn set_background(&mut self, x: usize, y: usize, value: T) {
        let i = self.idx(x, y);
        self.data[i] = value;
        self.known[i] = false;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn known_mut(&mut self) -> &mut [bool] {
        &mut self.known
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn known_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.known.clone(),
        }
    }
}

impl RgbImage {
    /// Bilinear sample at continuous pixel coordinates (pixel centers at +0.5),
    /// clamped to the image edge.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Rgb {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = (fx - x0 as f64) as f32;
        let ty = (fy - y0 as f64) as f32;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0f32; 3];
        for ch in 0..3 {
            let top = a[ch] + (b[ch] - a[ch]) * tx;
            let bottom = c[ch] + (d[ch] - c[ch]) * tx;
            out[ch] = top + (bottom - top) * ty;
        }
        out
    }

    /// Bilinear sample restricted to the taps whose bit is set in `taps`
    /// (bit order as in [`bilinear_footprint`]), with the remaining weights
    /// renormalized. All four bits give [`Self::sample_bilinear`]; no usable
    /// tap falls back to it as well.
    pub fn sample_bilinear_masked(&self, x: f64, y: f64, taps: u8) -> Rgb {
        if taps & 0b1111 == 0b1111 {
            return self.sample_bilinear(x, y);
        }
        let fp = bilinear_footprint(self.width, self.height, x, y);
        let mut out = [0.0f32; 3];
        let mut total = 0.0f32;
        for (bit, &(px, py, w)) in fp.iter().enumerate() {
            if taps & (1 << bit) != 0 && w > 0.0 {
                let c = self.get(px, py);
                for ch in 0..3 {
                    out[ch] += w * c[ch];
                }
                total += w;
            }
        }
        if total > 0.0 {
            out.map(|v| v / total)
        } else {
            self.sample_bilinear(x, y)
        }
    }

    /// Bilinear lookup at a texture coordinate (u right, v up).
    pub fn sample_uv(&self, u: f64, v: f64) -> Rgb {
        self.sample_bilinear(u * self.width as f64, (1.0 - v) * self.height as f64)
    }

    /// Quantizes every pixel to 8 bits and back. Used so in-memory results
    /// match what a PNG round trip would give.
    pub fn quantized(&self) -> RgbImage {
        let mut out = self.clone();
        for px in out.data.iter_mut() {
            *px = dequantize(quantize(*px));
        }
        out
    }

    pub fn to_png_image(&self) -> ImageBuffer<PxRgb<u8>, Vec<u8>> {
        let mut img = ImageBuffer::new(self.width as u32, self.height as u32);
        for (x, y, px) in img.enumerate_pixels_mut() {
            *px = PxRgb(quantize(self.get(x as usize, y as usize)));
        }
        img
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_png_image()
            .write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io_path(path, e))
    }

    /// Decodes a PNG; every decoded pixel is marked known.
    pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.pixels().map(|p| dequantize(p.0)).collect();
        RgbImage::from_parts(w, h, data, vec![true; w * h])
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io_path(path, e))?;
        Self::decode_png(&bytes)
    }
}

/// 8-bit quantization with round-half-up.
#[inline]
/// The four pixels and weights of a bilinear lookup at continuous pixel
/// coordinates, ordered (x0,y0), (x1,y0), (x0,y1), (x1,y1) and clamped to the
/// image edge like [`RgbImage::sample_bilinear`].
pub fn bilinear_footprint(width: usize, height: usize, x: f64, y: f64) -> [(usize, usize, f32); 4] {
    let fx = (x - 0.5).clamp(0.0, (width - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (height - 1) as f64);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = (fx - x0 as f64) as f32;
    let ty = (fy - y0 as f64) as f32;
    [
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x1, y0, tx * (1.0 - ty)),
        (x0, y1, (1.0 - tx) * ty),
        (x1, y1, tx * ty),
    ]
}

pub fn quantize(c: Rgb) -> [u8; 3] {
    c.map(quantize_channel)
}

#[inline]
pub fn quantize_channel(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[inline]
pub fn dequantize(c: [u8; 3]) -> Rgb {
    c.map(|v| v as f32 / 255.0)
}

const DEPTH_MAGIC: &[u8; 4] = b"MDPT";

impl DepthMap {
    /// Writes the binary depth format: "MDPT", width, height, 4 reserved bytes
    /// (all u32 little-endian) followed by row-major f32 samples. Unknown
    /// pixels are stored as +inf.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io_path(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(DEPTH_MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for (v, &k) in self.data.iter().zip(&self.known) {
            let v = if k { *v } else { f32::INFINITY };
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the binary depth format; finite samples are marked known.
    pub fn read_binary(path: impl AsRef<Path>) -> Result<DepthMap> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io_path(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| Error::format(0, "truncated depth header"))?;
        if &header[0..4] != DEPTH_MAGIC {
            return Err(Error::format(0, "bad depth magic"));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != width * height * 4 {
            return Err(Error::format(
                16 + body.len().min(width * height * 4),
                format!("expected {} depth samples", width * height),
            ));
        }
        let data: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let known = data.iter().map(|v| v.is_finite()).collect();
        DepthMap::from_parts(width, height, data, known)
    }
}

/// Boolean raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::precondition("mask buffer size mismatch"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn union(&self, other: &Mask) -> Mask {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Mask { data, ..*self }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    /// One 3x3 dilation pass; pixels outside the image count as unset.
    pub fn dilate(&self) -> Mask {
        self.morph(true)
    }

    /// One 3x3 erosion pass; pixels outside the image count as set, so the
    /// image frame never erodes a mask.
    pub fn erode(&self) -> Mask {
        self.morph(false)
    }

    fn morph(&self, dilate: bool) -> Mask {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![false; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = !dilate;
                'n: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        let v = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            !dilate
                        } else {
                            self.data[(ny * w + nx) as usize]
                        };
                        if dilate && v {
                            acc = true;
                            break 'n;
                        }
                        if !dilate && !v {
                            acc = false;
                            break 'n;
                        }
                    }
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Mask {
            data: out,
            ..*self
        }
    }

    pub fn dilate_n(&self, n: usize) -> Mask {
        (0..n).fold(self.clone(), |m, _| m.dilate())
    }

    pub fn erode_n(&self, n: usize) -> Mask {
        (0..n).fold(self.clone(), |m, _| m.erode())
    }

    /// Morphological closing: `n` dilations followed by `n` erosions.
    pub fn close_n(&self, n: usize) -> Mask {
        self.dilate_n(n).erode_n(n)
    }

    /// 8-bit gray PNG, 255 = set.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img: GrayImage = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        });
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io_path(path, e))
    }

    /// Any gray level ≥ 128 counts as set.
    pub fn decode_png(bytes: &[u8]) -> Result<Mask> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_luma8();
        let data = img.pixels().map(|p| p.0[0] >= 128).collect();
        Mask::from_vec(img.width() as usize, img.height() as usize, data)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Mask> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io_path(path, e))?;
        Self::decode_png(&bytes)
    }
}
