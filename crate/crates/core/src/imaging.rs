//! RGB image buffers: load, aspect-preserving downscale, crop and black-fill
//! masking.

use std::io::Cursor;
use std::path::Path;

use image::imageops::FilterType;
use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::Rect;

pub const DEFAULT_MAX_SIDE: u32 = 1536;

/// Row-major RGB8 image.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry(format!("{width}x{height} image")));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidGeometry(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::from_raw(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn fill_rect(&mut self, r: Rect, rgb: [u8; 3]) {
        for y in r.y0..r.y1.min(self.height) {
            for x in r.x0..r.x1.min(self.width) {
                self.put_pixel(x, y, rgb);
            }
        }
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Decodes PNG or JPEG bytes; alpha is dropped.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        Ok(Self::from_rgb(img))
    }

    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    fn from_rgb(img: RgbImage) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            pixels: img.into_raw(),
        }
    }

    fn to_rgb(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction")
    }
}

/// Target dimensions for a downscale so the longest side is `max_side`.
/// Returns `None` when the image already fits.
pub fn resized_dimensions(width: u32, height: u32, max_side: u32) -> Option<(u32, u32)> {
    let long = width.max(height);
    if long <= max_side {
        return None;
    }
    let scale = |short: u32| -> u32 {
        let v = (2 * short as u64 * max_side as u64 + long as u64) / (2 * long as u64);
        (v as u32).max(1)
    };
    Some(if width >= height {
        (max_side, scale(height))
    } else {
        (scale(width), max_side)
    })
}

/// Downscales (never upscales) so that the longest side is at most
/// `max_side`, keeping the aspect ratio. Bilinear filtering.
pub fn resize_longest_side(img: &ImageBuffer, max_side: u32) -> ImageBuffer {
    let max_side = max_side.max(1);
    match resized_dimensions(img.width, img.height, max_side) {
        None => img.clone(),
        Some((w, h)) => ImageBuffer::from_rgb(image::imageops::resize(
            &img.to_rgb(),
            w,
            h,
            FilterType::Triangle,
        )),
    }
}

pub fn crop(img: &ImageBuffer, r: Rect) -> Result<ImageBuffer> {
    if r.x0 >= r.x1 || r.y0 >= r.y1 || !r.within(img.width, img.height) {
        return Err(Error::InvalidGeometry(format!(
            "crop rect {r:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    let row_bytes = r.width() as usize * 3;
    let mut pixels = Vec::with_capacity(row_bytes * r.height() as usize);
    for y in r.y0..r.y1 {
        let start = img.offset(r.x0, y);
        pixels.extend_from_slice(&img.pixels[start..start + row_bytes]);
    }
    ImageBuffer::from_raw(r.width(), r.height(), pixels)
}

/// Keeps the pixels inside the union of `visible`; everything else becomes
/// RGB (0, 0, 0).
pub fn apply_mask(img: &ImageBuffer, visible: &[Rect]) -> Result<ImageBuffer> {
    if visible.is_empty() {
        return Err(Error::InvalidSelection(
            "mask would black out the whole image".into(),
        ));
    }
    if let Some(r) = visible
        .iter()
        .find(|r| r.x0 >= r.x1 || r.y0 >= r.y1 || !r.within(img.width, img.height))
    {
        return Err(Error::InvalidGeometry(format!(
            "mask rect {r:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    let mut out = ImageBuffer {
        width: img.width,
        height: img.height,
        pixels: vec![0; img.pixels.len()],
    };
    for r in visible {
        let row_bytes = r.width() as usize * 3;
        for y in r.y0..r.y1 {
            let start = img.offset(r.x0, y);
            out.pixels[start..start + row_bytes]
                .copy_from_slice(&img.pixels[start..start + row_bytes]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> ImageBuffer {
        let mut img = ImageBuffer::filled(w, h, [0, 0, 0]).unwrap();
        for y in 0..h {
            for x in 0..w {
                img.put_pixel(x, y, [(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        img
    }

    #[test]
    fn resize_halves_exactly() {
        let img = ImageBuffer::filled(2000, 1000, [10, 20, 30]).unwrap();
        let out = resize_longest_side(&img, 1000);
        assert_eq!((out.width(), out.height()), (1000, 500));
        assert_eq!(out.pixel(500, 250), [10, 20, 30]);
    }

    #[test]
    fn resize_never_upscales() {
        let img = gradient(800, 600);
        assert_eq!(resize_longest_side(&img, 1000), img);
    }

    #[test]
    fn resize_rounds_short_side() {
        assert_eq!(resized_dimensions(1333, 1000, 1000), Some((1000, 750)));
        assert_eq!(resized_dimensions(1000, 1333, 1000), Some((750, 1000)));
        assert_eq!(resized_dimensions(5000, 1, 100), Some((100, 1)));
    }

    #[test]
    fn crop_cases() {
        let img = gradient(20, 10);
        assert_eq!(crop(&img, Rect::new(0, 0, 20, 10).unwrap()).unwrap(), img);
        let px = crop(&img, Rect::new(0, 0, 1, 1).unwrap()).unwrap();
        assert_eq!(px.pixels(), &img.pixel(0, 0));
        let flat = ImageBuffer::filled(20, 10, [9, 9, 9]).unwrap();
        assert_eq!(
            crop(&flat, Rect::new(0, 0, 4, 4).unwrap()).unwrap(),
            crop(&flat, Rect::new(10, 5, 14, 9).unwrap()).unwrap()
        );
        assert!(matches!(
            crop(&img, Rect::new(15, 0, 21, 5).unwrap()),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn mask_cases() {
        let img = gradient(16, 9);
        let full = Rect::new(0, 0, 16, 9).unwrap();
        assert_eq!(apply_mask(&img, &[full]).unwrap(), img);
        assert!(matches!(apply_mask(&img, &[]), Err(Error::InvalidSelection(_))));

        let white = ImageBuffer::filled(10, 10, [255, 255, 255]).unwrap();
        let out = apply_mask(&white, &[Rect::new(0, 0, 5, 10).unwrap()]).unwrap();
        let black = out.pixels().chunks(3).filter(|p| p == &[0, 0, 0]).count();
        assert_eq!(black, 50);
        // 50 black pixels are 150 zeroed channel bytes
        assert_eq!(out.pixels().iter().filter(|&&b| b == 0).count(), 150);
        assert_eq!(out.pixel(4, 9), [255, 255, 255]);
        assert_eq!(out.pixel(5, 0), [0, 0, 0]);
    }

    #[test]
    fn png_roundtrip() {
        let img = gradient(13, 7);
        assert_eq!(ImageBuffer::decode(&img.encode_png().unwrap()).unwrap(), img);
    }
}
