//! Image containers, PNG I/O and cropping.
//!
//! All coordinates use a top-left origin. A [`BBox`] `(x, y, w, h)` covers
//! columns `x..x + w` and rows `y..y + h`.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("invalid image dimensions {width}x{height}")]
    Dimensions { width: usize, height: usize },
    #[error("sample buffer has {got} values, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("box {bbox:?} is outside a {width}x{height} image")]
    OutOfBounds {
        bbox: BBox,
        width: usize,
        height: usize,
    },
}

/// Axis-aligned integer rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Exclusive right edge.
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    /// Twice the x-center; an exact integer sort key.
    pub fn x_center2(&self) -> usize {
        2 * self.x + self.w
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width && self.bottom() <= height
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    /// Clip to an image; `None` when nothing is left.
    pub fn clip(&self, width: usize, height: usize) -> Option<BBox> {
        let right = self.right().min(width);
        let bottom = self.bottom().min(height);
        if self.x >= right || self.y >= bottom {
            return None;
        }
        Some(BBox::new(self.x, self.y, right - self.x, bottom - self.y))
    }

    /// Shift by a signed offset. `None` if the result leaves the positive quadrant.
    pub fn translate(&self, dx: isize, dy: isize) -> Option<BBox> {
        let x = self.x.checked_add_signed(dx)?;
        let y = self.y.checked_add_signed(dy)?;
        Some(BBox::new(x, y, self.w, self.h))
    }
}

/// 8-bit grayscale image, row-major. 0 is black, 255 is white.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Dimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::BufferSize {
                got: data.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Uniform image. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Panics on a zero dimension.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Sample mapped to `[0, 1]`.
    pub fn normalized(&self, x: usize, y: usize) -> f64 {
        self.get(x, y) as f64 / 255.0
    }

    pub fn full_box(&self) -> BBox {
        BBox::new(0, 0, self.width, self.height)
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 255 - v).collect(),
        }
    }

    pub fn crop(&self, b: BBox) -> Result<GrayImage, RasterError> {
        crop(self, b)
    }
}

/// Row-major foreground mask; `true` marks character ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self, RasterError> {
        if mask.len() != width * height {
            return Err(RasterError::BufferSize {
                got: mask.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                mask.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            mask,
        }
    }

    /// Parse rows of `#` (foreground) and `.` (background). Test fixture helper.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Out-of-image positions read as background.
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return false;
        }
        self.mask[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.mask[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn complement(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            mask: self.mask.iter().map(|m| !m).collect(),
        }
    }

    pub fn and(&self, other: &BinaryImage) -> BinaryImage {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryImage) -> BinaryImage {
        self.zip_with(other, |a, b| a || b)
    }

    /// Pixels set here but not in `other`.
    pub fn minus(&self, other: &BinaryImage) -> BinaryImage {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &BinaryImage, f: impl Fn(bool, bool) -> bool) -> BinaryImage {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask dimensions differ"
        );
        BinaryImage {
            width: self.width,
            height: self.height,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Tight box around all foreground, if any.
    pub fn ink_box(&self) -> Option<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Foreground as a black-on-white gray image.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.mask.iter().map(|&m| if m { 0 } else { 255 }).collect(),
        }
    }
}

/// Luma of an RGB triple with weights (0.299, 0.587, 0.114), rounded.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

fn gray_from_dynamic(img: DynamicImage, path: &str) -> Result<GrayImage, RasterError> {
    let (width, height) = (img.width() as usize, img.height() as usize);
    if width == 0 || height == 0 {
        return Err(RasterError::Format {
            path: path.to_string(),
            msg: "zero-dimension image".into(),
        });
    }
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::new(width, height, data)
}

/// Decode an image file to gray. Color inputs go through [`luma`].
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| RasterError::Io {
        path: shown.clone(),
        source,
    })?;
    let img = image::load_from_memory(&bytes).map_err(|e| RasterError::Format {
        path: shown.clone(),
        msg: e.to_string(),
    })?;
    gray_from_dynamic(img, &shown)
}

/// Width and height of an image file without decoding the pixels.
pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize), RasterError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    if !path.exists() {
        return Err(RasterError::Io {
            path: shown,
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
    }
    let (w, h) = image::image_dimensions(path).map_err(|e| RasterError::Format {
        path: shown,
        msg: e.to_string(),
    })?;
    Ok((w as usize, h as usize))
}

/// Write an 8-bit gray PNG.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone())
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => RasterError::Io {
                path: path.display().to_string(),
                source,
            },
            other => RasterError::Format {
                path: path.display().to_string(),
                msg: other.to_string(),
            },
        })
}

pub fn crop(img: &GrayImage, b: BBox) -> Result<GrayImage, RasterError> {
    if !b.fits_in(img.width, img.height) {
        return Err(RasterError::OutOfBounds {
            bbox: b,
            width: img.width,
            height: img.height,
        });
    }
    let mut data = Vec::with_capacity(b.area());
    for y in b.y..b.bottom() {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + b.x..row + b.right()]);
    }
    Ok(GrayImage {
        width: b.w,
        height: b.h,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x * 7 + y * 13) % 256) as u8)
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            GrayImage::new(0, 3, vec![]),
            Err(RasterError::Dimensions { .. })
        ));
        assert!(matches!(
            GrayImage::new(2, 2, vec![0; 3]),
            Err(RasterError::BufferSize { .. })
        ));
    }

    #[test]
    fn crop_full_box_is_identity() {
        let img = ramp(17, 9);
        assert_eq!(crop(&img, img.full_box()).unwrap(), img);
    }

    #[test]
    fn crop_dimensions_and_samples() {
        let img = ramp(100, 50);
        let c = crop(&img, BBox::new(10, 5, 20, 10)).unwrap();
        assert_eq!((c.width(), c.height()), (20, 10));
        for j in 0..10 {
            for i in 0..20 {
                assert_eq!(c.get(i, j), img.get(10 + i, 5 + j));
            }
        }
    }

    #[test]
    fn crop_outside_is_error() {
        let img = ramp(10, 10);
        assert!(matches!(
            crop(&img, BBox::new(5, 5, 6, 2)),
            Err(RasterError::OutOfBounds { .. })
        ));
        assert!(crop(&img, BBox::new(0, 0, 0, 2)).is_err());
    }

    #[test]
    fn pure_red_maps_to_76() {
        // independent per-pixel computation: 0.299 * 255 = 76.245
        let expected = (0.299f64 * 255.0).round() as u8;
        assert_eq!(expected, 76);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        RgbImage::from_pixel(4, 3, Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let g = load_gray(&path).unwrap();
        assert_eq!((g.width(), g.height()), (4, 3));
        assert!(g.data().iter().all(|&v| v == expected));
    }

    #[test]
    fn color_frame_keeps_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.png");
        RgbImage::from_fn(1920, 1080, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 9]))
            .save(&path)
            .unwrap();
        let g = load_gray(&path).unwrap();
        assert_eq!((g.width(), g.height()), (1920, 1080));
        assert_eq!(g.get(300, 20), luma(44, 20, 9));
    }

    #[test]
    fn gray_file_loads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = ramp(31, 12);
        save_gray(&img, &path).unwrap();
        assert_eq!(load_gray(&path).unwrap(), img);
        assert_eq!(image_dimensions(&path).unwrap(), (31, 12));
    }

    #[test]
    fn missing_and_garbage_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_gray(dir.path().join("nope.png")),
            Err(RasterError::Io { .. })
        ));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not a png").unwrap();
        assert!(matches!(load_gray(&junk), Err(RasterError::Format { .. })));
    }

    #[test]
    fn ink_box_and_ascii() {
        let m = BinaryImage::from_ascii(&["....", ".##.", "..#.", "...."]);
        assert_eq!(m.ink_box(), Some(BBox::new(1, 1, 2, 2)));
        assert_eq!(BinaryImage::empty(3, 3).ink_box(), None);
    }

    proptest! {
        #[test]
        fn crop_composes(
            w in 4usize..40, h in 4usize..40,
            a in (0usize..1000, 0usize..1000, 0usize..1000, 0usize..1000),
            b in (0usize..1000, 0usize..1000, 0usize..1000, 0usize..1000),
        ) {
            let img = ramp(w, h);
            let (ax, ay) = (a.0 % w, a.1 % h);
            let outer = BBox::new(ax, ay, 1 + a.2 % (w - ax), 1 + a.3 % (h - ay));
            let (bx, by) = (b.0 % outer.w, b.1 % outer.h);
            let inner = BBox::new(bx, by, 1 + b.2 % (outer.w - bx), 1 + b.3 % (outer.h - by));
            let twice = crop(&crop(&img, outer).unwrap(), inner).unwrap();
            let composed = BBox::new(ax + bx, ay + by, inner.w, inner.h);
            let once = crop(&img, composed).unwrap();
            prop_assert_eq!(twice.clone(), once);
            // purity
            prop_assert_eq!(crop(&crop(&img, outer).unwrap(), inner).unwrap(), twice);
        }

        #[test]
        fn png_round_trip(w in 1usize..30, h in 1usize..30, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(6364136223846793005).wrapping_add((x * 31 + y * 17) as u64) >> 33) as u8
            });
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.png");
            save_gray(&img, &path).unwrap();
            prop_assert_eq!(load_gray(&path).unwrap(), img);
        }
    }
}
