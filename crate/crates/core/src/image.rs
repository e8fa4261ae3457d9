use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Png(#[from] png::EncodingError),
    #[error(transparent)]
    PngDecode(#[from] png::DecodingError),
    #[error("unsupported PNG layout {0:?}/{1:?}; expected 8-bit RGBA")]
    PngLayout(png::ColorType, png::BitDepth),
}

/// RGBA float image, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 4]>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [f32; 4]) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f32; 4]>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize);
        Self { width, height, pixels }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 4] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: [f32; 4]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }

    /// Largest absolute per-channel difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f32, ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::DimensionMismatch(self.dims(), other.dims()));
        }
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..4).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f32::max))
    }

    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    pub fn from_rgba8(width: u32, height: u32, bytes: &[u8]) -> Self {
        let pixels = bytes
            .chunks_exact(4)
            .map(|c| [0, 1, 2, 3].map(|i| c[i] as f32 / 255.0))
            .collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header()?;
            w.write_image_data(&self.to_rgba8())?;
        }
        Ok(out)
    }

    /// Decodes an 8-bit RGBA PNG such as the ones [`Image::encode_png`] writes.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut r = png::Decoder::new(std::io::Cursor::new(bytes)).read_info()?;
        let mut buf = vec![0; r.output_buffer_size().unwrap_or(0)];
        let info = r.next_frame(&mut buf)?;
        if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
            return Err(ImageError::PngLayout(info.color_type, info.bit_depth));
        }
        Ok(Self::from_rgba8(info.width, info.height, &buf[..info.buffer_size()]))
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::decode_png(&std::fs::read(path)?)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Binary PPM (P6); alpha is dropped.
    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let mut f = BufWriter::new(File::create(path)?);
        write!(f, "P6\n{} {}\n255\n", self.width, self.height)?;
        let rgba = self.to_rgba8();
        for px in rgba.chunks_exact(4) {
            f.write_all(&px[..3])?;
        }
        f.flush()?;
        Ok(())
    }

    /// Writes PNG unless the extension is `.ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => self.write_ppm(path),
            _ => self.write_png(path),
        }
    }

    /// Bilinear resampling to `(width, height)` with pixel-center alignment.
    pub fn upsample_bilinear(&self, width: u32, height: u32) -> Image {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let maxx = self.width as f64 - 1.0;
        let maxy = self.height as f64 - 1.0;
        let rows = crate::par::map_indexed(height as usize, |y| {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, maxy);
            let y0 = fy.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = (fy - y0 as f64) as f32;
            (0..width)
                .map(|x| {
                    let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, maxx);
                    let x0 = fx.floor() as u32;
                    let x1 = (x0 + 1).min(self.width - 1);
                    let wx = (fx - x0 as f64) as f32;
                    let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
                    [0, 1, 2, 3].map(|k| {
                        let top = a[k] + (b[k] - a[k]) * wx;
                        let bot = c[k] + (d[k] - c[k]) * wx;
                        top + (bot - top) * wy
                    })
                })
                .collect::<Vec<_>>()
        });
        Image::from_pixels(width, height, rows.into_iter().flatten().collect())
    }
}

/// Front-to-back "over": accumulates premultiplied `(c, a)` into `acc`.
#[inline]
pub fn blend_under(acc: &mut [f32; 4], c: [f32; 3], a: f32) {
    let t = 1.0 - acc[3];
    acc[0] += t * c[0];
    acc[1] += t * c[1];
    acc[2] += t * c[2];
    acc[3] += t * a;
}

/// Composites a premultiplied accumulation over a non-premultiplied background.
#[inline]
pub fn over_background(acc: [f32; 4], bg: [f32; 4]) -> [f32; 4] {
    let t = 1.0 - acc[3];
    [
        acc[0] + t * bg[0] * bg[3],
        acc[1] + t * bg[1] * bg[3],
        acc[2] + t * bg[2] * bg[3],
        acc[3] + t * bg[3],
    ]
}
