//! Raster types for the two projections plus the per-pixel coordinate map,
//! and 8-bit PNG input/output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{erp_pixel_to_sphere, ErpGrid};

/// Channel-major equirectangular image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    pub channels: usize,
    pub grid: ErpGrid,
    pub data: Vec<f64>,
}

impl ErpImage {
    /// Wraps `data` (`C×H×W`), clamping every value into `[0, 1]`.
    pub fn new(channels: usize, grid: ErpGrid, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * grid.pixels() {
            return Err(Error::Dimension(format!(
                "{} values for {channels}×{}×{}",
                data.len(),
                grid.height,
                grid.width
            )));
        }
        if let Some(i) = data.iter().position(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("NaN at index {i} of ERP image")));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(ErpImage { channels, grid, data })
    }

    pub fn constant(channels: usize, grid: ErpGrid, value: f64) -> Self {
        ErpImage {
            channels,
            grid,
            data: vec![value.clamp(0.0, 1.0); channels * grid.pixels()],
        }
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.grid.height, self.grid.width]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.grid.height + y) * self.grid.width + x]
    }

    /// Snaps every value onto the 8-bit grid `k/255`, the exact set of values a
    /// PNG round trip preserves.
    pub fn quantized(&self) -> ErpImage {
        ErpImage {
            channels: self.channels,
            grid: self.grid,
            data: self.data.iter().map(|&v| quantize8(v) as f64 / 255.0).collect(),
        }
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let (w, h, data) = read_png_rgb(path)?;
        let grid = ErpGrid::new(h, w)
            .map_err(|e| Error::data(path, format!("not an equirectangular image: {e}")))?;
        ErpImage::new(3, grid, data)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png(path, self.channels, self.grid.height, self.grid.width, &self.data)
    }
}

/// Six square faces, stored `6×C×S×S` in the face order of
/// [`crate::geometry::CUBE_FACES`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cubemap {
    pub channels: usize,
    pub face_size: usize,
    pub data: Vec<f64>,
}

impl Cubemap {
    pub fn new(channels: usize, face_size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 6 * channels * face_size * face_size {
            return Err(Error::Dimension(format!(
                "{} values for 6×{channels}×{face_size}×{face_size}",
                data.len()
            )));
        }
        Ok(Cubemap { channels, face_size, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [6, self.channels, self.face_size, self.face_size]
    }

    pub fn face(&self, f: usize) -> &[f64] {
        let n = self.channels * self.face_size * self.face_size;
        &self.data[f * n..(f + 1) * n]
    }
}

/// Per-output-pixel sphere coordinates, `3×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lut3D {
    pub grid: ErpGrid,
    pub data: Vec<f64>,
}

impl Lut3D {
    pub fn new(grid: ErpGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * grid.pixels() {
            return Err(Error::Dimension(format!(
                "{} values for LUT 3×{}×{}",
                data.len(),
                grid.height,
                grid.width
            )));
        }
        Ok(Lut3D { grid, data })
    }

    /// The canonical grid: every pixel stores its own sphere direction.
    pub fn identity(grid: ErpGrid) -> Self {
        let n = grid.pixels();
        let mut data = vec![0.0; 3 * n];
        for y in 0..grid.height {
            for x in 0..grid.width {
                let d = erp_pixel_to_sphere(x as f64, y as f64, grid);
                let i = y * grid.width + x;
                data[i] = d.x;
                data[n + i] = d.y;
                data[2 * n + i] = d.z;
            }
        }
        Lut3D { grid, data }
    }

    pub fn get(&self, i: usize) -> [f64; 3] {
        let n = self.grid.pixels();
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    /// Largest deviation of a per-pixel norm from 1.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.grid.pixels())
            .map(|i| {
                let [x, y, z] = self.get(i);
                ((x * x + y * y + z * z).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Decodes any 8- or 16-bit PNG into RGB `[0, 1]` planes (`3×H×W`).
pub fn read_png_rgb(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::data(path, format!("png header: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::data(path, "png too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::data(path, format!("png data: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let stride = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::data(path, "unexpanded palette image")),
    };
    let n = w * h;
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let px = &bytes[i * stride..(i + 1) * stride];
        let rgb = if stride < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
        for c in 0..3 {
            data[c * n + i] = rgb[c] as f64 / 255.0;
        }
    }
    Ok((w, h, data))
}

/// Writes 1- or 3-channel planes as an 8-bit PNG (`round(v·255)`).
pub fn write_png(path: &Path, channels: usize, h: usize, w: usize, data: &[f64]) -> Result<()> {
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Dimension(format!("cannot write {c}-channel PNG"))),
    };
    let n = w * h;
    let mut bytes = vec![0u8; channels * n];
    for i in 0..n {
        for c in 0..channels {
            bytes[i * channels + c] = quantize8(data[c * n + i]);
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::data(path, format!("png encode: {e}")))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::data(path, format!("png encode: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::data(path, format!("png encode: {e}")))?;
    Ok(())
}
