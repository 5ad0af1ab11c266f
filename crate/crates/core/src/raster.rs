//! RGBA sketch rasters and 8-bit grayscale density images.

use std::io::Cursor;

use thiserror::Error;

use crate::grid::Grid;

pub type Rgba = [u8; 4];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster must be at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("pixel count {got} does not match {width}x{height}")]
    PixelCount {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
}

/// An RGBA image in row-major order, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterSketch {
    width: usize,
    height: usize,
    pixels: Vec<Rgba>,
}

impl RasterSketch {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgba>) -> Result<Self, RasterError> {
        if width < 2 || height < 2 {
            return Err(RasterError::TooSmall { width, height });
        }
        if pixels.len() != width * height {
            return Err(RasterError::PixelCount {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(RasterSketch {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgba) -> Result<Self, RasterError> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgba] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Rgba {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, color: Rgba) {
        self.pixels[row * self.width + col] = color;
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let (width, height, pixels) = decode_rgba(bytes)?;
        Self::new(width, height, pixels)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut data = Vec::with_capacity(self.pixels.len() * 4);
        for p in &self.pixels {
            data.extend_from_slice(p);
        }
        encode_png(self.width, self.height, png::ColorType::Rgba, &data)
    }
}

/// Decode any 8/16-bit PNG into RGBA8 pixels.
pub fn decode_rgba(bytes: &[u8]) -> Result<(usize, usize, Vec<Rgba>), RasterError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RasterError::Unsupported("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    let stride = info.line_size;
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        let line = &buf[row * stride..(row + 1) * stride];
        for col in 0..w {
            let px = match info.color_type {
                png::ColorType::Rgba => {
                    let s = &line[col * 4..col * 4 + 4];
                    [s[0], s[1], s[2], s[3]]
                }
                png::ColorType::Rgb => {
                    let s = &line[col * 3..col * 3 + 3];
                    [s[0], s[1], s[2], 255]
                }
                png::ColorType::GrayscaleAlpha => {
                    let s = &line[col * 2..col * 2 + 2];
                    [s[0], s[0], s[0], s[1]]
                }
                png::ColorType::Grayscale => {
                    let g = line[col];
                    [g, g, g, 255]
                }
                other => return Err(RasterError::Unsupported(format!("{other:?}"))),
            };
            pixels.push(px);
        }
    }
    Ok((w, h, pixels))
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

/// Quantize a density in `[0,1]` to a gray level. Material is drawn dark,
/// as in sketches: 0 is solid and 255 is void.
#[inline]
pub fn density_to_gray(rho: f64) -> u8 {
    255 - (rho.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn gray_to_density(g: u8) -> f64 {
    (255 - g) as f64 / 255.0
}

/// Encode per-element densities as an 8-bit grayscale PNG, one pixel per element.
pub fn encode_density_png(grid: Grid, rho: &[f64]) -> Result<Vec<u8>, RasterError> {
    let data: Vec<u8> = rho.iter().map(|&r| density_to_gray(r)).collect();
    encode_png(grid.nelx, grid.nely, png::ColorType::Grayscale, &data)
}

/// A decoded grayscale image in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl GrayImage {
    /// Decode a PNG and reduce color pixels to luma. Alpha is ignored.
    pub fn from_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let (width, height, pixels) = decode_rgba(bytes)?;
        let values = pixels
            .iter()
            .map(|p| {
                if p[0] == p[1] && p[1] == p[2] {
                    p[0]
                } else {
                    let l = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
                    ((l + 500) / 1000) as u8
                }
            })
            .collect();
        Ok(GrayImage {
            width,
            height,
            values,
        })
    }

    pub fn invert(&mut self) {
        for v in &mut self.values {
            *v = 255 - *v;
        }
    }

    /// Nearest-neighbour resample onto the element grid, as densities.
    pub fn to_densities(&self, grid: Grid) -> Vec<f64> {
        resample_nearest(&self.values, self.width, self.height, grid.nelx, grid.nely)
            .into_iter()
            .map(gray_to_density)
            .collect()
    }
}

/// Nearest-neighbour resample of a row-major buffer. Target pixel `(r, c)`
/// samples source `(floor((r+0.5)·h/H), floor((c+0.5)·w/W))`, which is the
/// identity when sizes agree.
pub fn resample_nearest<T: Copy>(
    src: &[T],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<T> {
    debug_assert_eq!(src.len(), src_w * src_h);
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for r in 0..dst_h {
        let sr = nearest_source(r, src_h, dst_h);
        for c in 0..dst_w {
            let sc = nearest_source(c, src_w, dst_w);
            out.push(src[sr * src_w + sc]);
        }
    }
    out
}

#[inline]
fn nearest_source(k: usize, src: usize, dst: usize) -> usize {
    // integer form of floor((k + 0.5) * src / dst)
    (((2 * k + 1) * src) / (2 * dst)).min(src - 1)
}
