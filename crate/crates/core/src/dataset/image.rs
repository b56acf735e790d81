use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};

use super::{DatasetError, Result};
use crate::model::INPUT_SIZE;
use crate::tensor::{Shape, Tensor};

/// 8-bit RGB raster, interleaved, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(DatasetError::EmptyImage);
        }
        if pixels.len() != 3 * width * height {
            return Err(DatasetError::Decode(format!(
                "pixel buffer of {} bytes for {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Image> {
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Image::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Decodes PNG bytes; grayscale is replicated into all three channels.
    pub fn decode_png(bytes: &[u8]) -> Result<Image> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| DatasetError::Decode(e.to_string()))?;
        Image::from_dynamic(img)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Image> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| DatasetError::Io(path.as_ref().to_path_buf(), e))?;
        Image::decode_png(&bytes)
    }

    fn from_dynamic(img: DynamicImage) -> Result<Image> {
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        Image::new(w, h, rgb.into_raw())
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let buf = RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory");
        out.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.encode_png())
            .map_err(|e| DatasetError::Io(path.as_ref().to_path_buf(), e))
    }

    /// Bilinear resampling with pixel-center alignment and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(DatasetError::EmptyImage);
        }
        let xs = axis_weights(self.width, width);
        let ys = axis_weights(self.height, height);
        let mut out = Vec::with_capacity(3 * width * height);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for c in 0..3 {
                    let at = |x: usize, y: usize| self.pixels[3 * (y * self.width + x) + c] as f32;
                    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    out.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Image::new(width, height, out)
    }

    /// `[3, H, W]` tensor with values scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        Tensor::from_parts(
            Shape::new(vec![3, self.height, self.width]).expect("non-empty image"),
            data,
        )
    }
}

/// Source indices and weight for each destination coordinate along one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Network input for one image: 96×96 bilinear resize, `[3, 96, 96]` in `[0, 1]`.
pub fn image_to_input(img: &Image) -> Result<Tensor> {
    let resized = if img.width() == INPUT_SIZE && img.height() == INPUT_SIZE {
        img.clone()
    } else {
        img.resize_bilinear(INPUT_SIZE, INPUT_SIZE)?
    };
    Ok(resized.to_tensor())
}

/// Loads a PNG file as a network input tensor.
pub fn load_sample(path: impl AsRef<Path>) -> Result<Tensor> {
    image_to_input(&Image::open(path)?)
}

pub fn load_sample_bytes(bytes: &[u8]) -> Result<Tensor> {
    image_to_input(&Image::decode_png(bytes)?)
}
