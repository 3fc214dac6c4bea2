//! Image edit engine: per-region attribute adjustments and mask highlighting.
//!
//! With `v = value / 100`, member pixels are transformed as follows
//! (non-member pixels are copied bit for bit):
//!
//! | attribute  | transform                                            |
//! |------------|------------------------------------------------------|
//! | brightness | `c + round(255 v)` per channel, clamped              |
//! | contrast   | `round((c - 127.5)(1 + v) + 127.5)` per channel      |
//! | hue        | `h + 180 v` degrees, wrapped into `[0, 360)`         |
//! | saturation | `s (1 + v)` clamped to `[0, 1]`                      |
//! | lightness  | `l + v (1 - l)` for `v >= 0`, `l (1 + v)` otherwise  |
//!
//! HSL arithmetic stays in `f64` and is quantized once, at the RGB write.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::ontology::{Attribute, EditValue};
use crate::vision::Mask;

pub const HIGHLIGHT: [u8; 3] = [255, 0, 0];
pub const HIGHLIGHT_ALPHA: f64 = 0.4;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    DimensionMismatch { image_w: u32, image_h: u32, mask_w: u32, mask_h: u32 },
    #[error("pixel buffer holds {got} pixels, expected {expected}")]
    BadRaster { expected: usize, got: usize },
    #[error("png codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self, EditError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(EditError::BadRaster { expected, got: pixels.len() });
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Image { width, height, pixels: vec![rgb; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn load_png(path: &Path) -> Result<Self, EditError> {
        let decoded = image::open(path)?.to_rgb8();
        Ok(Self::from_rgb_image(decoded))
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, EditError> {
        let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        Ok(Self::from_rgb_image(decoded))
    }

    fn from_rgb_image(img: RgbImage) -> Self {
        let (width, height) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Image { width, height, pixels }
    }

    fn to_rgb_image(&self) -> RgbImage {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        RgbImage::from_raw(self.width, self.height, raw).expect("raster length checked at construction")
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, EditError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), EditError> {
        self.to_rgb_image().save_with_format(path, ImageFormat::Png)?;
        Ok(())
    }

    fn check_mask(&self, mask: &Mask) -> Result<(), EditError> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(EditError::DimensionMismatch {
                image_w: self.width,
                image_h: self.height,
                mask_w: mask.width(),
                mask_h: mask.height(),
            });
        }
        Ok(())
    }

    fn map_members(&self, mask: &Mask, f: impl Fn([u8; 3]) -> [u8; 3]) -> Image {
        let pixels = self
            .pixels
            .iter()
            .zip(mask.membership())
            .map(|(&p, &member)| if member { f(p) } else { p })
            .collect();
        Image { width: self.width, height: self.height, pixels }
    }
}

/// HSL triple: hue in degrees `[0, 360)`, saturation and lightness in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HslPixel {
    pub h: f64,
    pub s: f64,
    pub l: f64,
}

pub fn rgb_to_hsl(p: [u8; 3]) -> HslPixel {
    rgb_to_hsl_f([f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
}

fn rgb_to_hsl_f(p: [f64; 3]) -> HslPixel {
    let [r, g, b] = p.map(|c| c / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let l = (max + min) / 2.0;
    let delta = max - min;
    if delta == 0.0 {
        return HslPixel { h: 0.0, s: 0.0, l };
    }
    let s = delta / (1.0 - (2.0 * l - 1.0).abs());
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    HslPixel { h: wrap_degrees(sector * 60.0), s: s.clamp(0.0, 1.0), l }
}

/// Unquantized RGB in `[0, 255]`.
fn hsl_to_rgb_f(q: HslPixel) -> [f64; 3] {
    let chroma = (1.0 - (2.0 * q.l - 1.0).abs()) * q.s;
    let hp = wrap_degrees(q.h) / 60.0;
    let x = chroma * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = q.l - chroma / 2.0;
    [r, g, b].map(|c| (c + m) * 255.0)
}

pub fn hsl_to_rgb(q: HslPixel) -> [u8; 3] {
    hsl_to_rgb_f(q).map(quantize)
}

fn wrap_degrees(h: f64) -> f64 {
    let w = h.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if w >= 360.0 { 0.0 } else { w }
}

fn quantize(c: f64) -> u8 {
    c.round().clamp(0.0, 255.0) as u8
}

fn map_hsl(p: [u8; 3], f: impl Fn(HslPixel) -> HslPixel) -> [u8; 3] {
    hsl_to_rgb(f(rgb_to_hsl(p)))
}

/// Per-pixel transform for one attribute at one value. Exposed so tests can
/// sweep single channels without building images.
pub fn adjust_pixel(p: [u8; 3], attribute: Attribute, value: EditValue) -> [u8; 3] {
    if value.get() == 0 {
        return p;
    }
    let v = value.fraction();
    match attribute {
        Attribute::Brightness => {
            let shift = (v * 255.0).round();
            p.map(|c| quantize(f64::from(c) + shift))
        }
        Attribute::Contrast => p.map(|c| quantize((f64::from(c) - 127.5) * (1.0 + v) + 127.5)),
        Attribute::Hue => map_hsl(p, |q| HslPixel { h: wrap_degrees(q.h + v * 180.0), ..q }),
        Attribute::Saturation => map_hsl(p, |q| HslPixel { s: (q.s * (1.0 + v)).clamp(0.0, 1.0), ..q }),
        Attribute::Lightness => map_hsl(p, |q| {
            let l = if v >= 0.0 { q.l + v * (1.0 - q.l) } else { q.l * (1.0 + v) };
            HslPixel { l: l.clamp(0.0, 1.0), ..q }
        }),
    }
}

/// Applies one attribute adjustment to the masked region. The input is left untouched.
pub fn adjust(image: &Image, mask: &Mask, attribute: Attribute, value: EditValue) -> Result<Image, EditError> {
    image.check_mask(mask)?;
    if value.get() == 0 {
        return Ok(image.clone());
    }
    Ok(image.map_members(mask, |p| adjust_pixel(p, attribute, value)))
}

/// Alpha-blends the highlight colour over member pixels.
pub fn render_overlay(image: &Image, mask: &Mask) -> Result<Image, EditError> {
    image.check_mask(mask)?;
    Ok(image.map_members(mask, |p| {
        let mut out = [0u8; 3];
        for i in 0..3 {
            out[i] = quantize((1.0 - HIGHLIGHT_ALPHA) * f64::from(p[i]) + HIGHLIGHT_ALPHA * f64::from(HIGHLIGHT[i]));
        }
        out
    }))
}
