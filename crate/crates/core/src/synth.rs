//! Deterministic synthetic plate generator with exact ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::bench::{self, BenchError, PlateAnnotation};
use crate::raster::{BBox, BinaryImage, GrayImage};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("plate text {0:?} is not three letters followed by four digits")]
    Text(String),
    #[error("plate size {width}x{height} is invalid: {reason}")]
    Size {
        width: usize,
        height: usize,
        reason: String,
    },
    #[error("invalid degradation {0}")]
    Degradation(String),
}

/// Checks the `AAA9999` pattern.
pub fn is_plate_text(text: &str) -> bool {
    let b = text.as_bytes();
    b.len() == 7 && b[..3].iter().all(u8::is_ascii_uppercase) && b[3..].iter().all(u8::is_ascii_digit)
}

const FONT_W: usize = 5;
const FONT_H: usize = 7;

fn glyph_rows(c: char) -> Option<[&'static str; FONT_H]> {
    let rows = match c {
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'B' => ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
        'C' => [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
        'D' => ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        'G' => [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
        'H' => ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'I' => [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
        'J' => ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'L' => ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
        'M' => ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
        'N' => ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
        'O' => [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'P' => ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
        'Q' => [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
        'R' => ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
        'S' => [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
        'T' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
        'U' => ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'V' => ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
        'W' => ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
        'X' => ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
        'Y' => ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
        'Z' => ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
        '0' => [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
        '1' => ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
        '2' => [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
        '3' => ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
        '4' => ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
        '5' => ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
        '6' => ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
        '7' => ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
        '8' => [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
        '9' => [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
        _ => return None,
    };
    Some(rows)
}

/// The 36 supported characters, letters first.
pub fn alphabet() -> impl Iterator<Item = char> {
    ('A'..='Z').chain('0'..='9')
}

/// Nearest-neighbour scaled glyph mask of `w x h` pixels.
pub fn glyph_mask(c: char, w: usize, h: usize) -> Option<BinaryImage> {
    let rows = glyph_rows(c)?;
    Some(BinaryImage::from_fn(w, h, |x, y| {
        rows[y * FONT_H / h].as_bytes()[x * FONT_W / w] == b'#'
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateStyle {
    /// Dark characters on a light plate.
    GrayBlack,
    /// Light characters on a red plate, rendered as luma.
    RedWhite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowKind {
    /// Band filling the gap between glyph `position` and the next one.
    Cst1,
    /// Patch in the top margin above glyph `position`, touching no glyph.
    Cst2,
    /// Patch in the bottom margin under glyph `position`, touching it.
    Cst3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    GaussianNoise { sigma: f64 },
    ShadowBand { kind: ShadowKind, position: usize },
    Blur { radius: usize },
    Skew { degrees: f64 },
    /// Thin line at mid glyph height across the whole text.
    BridgeNoise { intensity: u8 },
    /// Multiplicative illumination ramp from the top-left corner.
    Shading { strength: f64 },
}

/// Multiplier applied inside shadow regions.
pub const SHADOW_FACTOR: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct PlateSpec {
    pub text: String,
    pub width: usize,
    pub height: usize,
    pub style: PlateStyle,
    pub background: u8,
    pub ink: u8,
    /// Applied in order.
    pub degradations: Vec<Degradation>,
}

impl PlateSpec {
    /// Clean gray-black plate with mid-range intensities.
    pub fn clean(text: &str, width: usize, height: usize) -> Self {
        Self {
            text: text.to_string(),
            width,
            height,
            style: PlateStyle::GrayBlack,
            background: 200,
            ink: 30,
            degradations: Vec::new(),
        }
    }

    pub fn with(mut self, d: Degradation) -> Self {
        self.degradations.push(d);
        self
    }

    pub fn validate(&self) -> Result<Layout, SynthError> {
        if !is_plate_text(&self.text) {
            return Err(SynthError::Text(self.text.clone()));
        }
        let size_err = |reason: &str| SynthError::Size {
            width: self.width,
            height: self.height,
            reason: reason.to_string(),
        };
        if self.height < MIN_HEIGHT {
            return Err(size_err("height below 22"));
        }
        let aspect = self.width as f64 / self.height as f64;
        if !(2.5..=3.2).contains(&aspect) {
            return Err(size_err("aspect ratio outside [2.5, 3.2]"));
        }
        let layout = Layout::new(self.width, self.height);
        if layout.text_width > self.width {
            return Err(size_err("text does not fit"));
        }
        for d in &self.degradations {
            let bad = match *d {
                Degradation::GaussianNoise { sigma } => !(sigma.is_finite() && sigma >= 0.0),
                Degradation::ShadowBand { kind, position } => match kind {
                    ShadowKind::Cst1 => position >= 6 || position == 2,
                    ShadowKind::Cst2 | ShadowKind::Cst3 => position >= 7,
                },
                Degradation::Blur { .. } | Degradation::BridgeNoise { .. } => false,
                Degradation::Skew { degrees } => !(degrees.is_finite() && degrees.abs() <= 45.0),
                Degradation::Shading { strength } => !(0.0..1.0).contains(&strength),
            };
            if bad {
                return Err(SynthError::Degradation(format!("{d:?}")));
            }
        }
        Ok(layout)
    }
}

/// Smallest height for which a width range with aspect in [2.5, 3.2] meets
/// the 68-pixel minimum width.
pub const MIN_HEIGHT: usize = 22;

/// Glyph geometry derived from the plate size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub glyph_w: usize,
    pub glyph_h: usize,
    pub gap: usize,
    pub hyphen_len: usize,
    pub hyphen_thick: usize,
    pub text_width: usize,
    pub left: usize,
    pub top: usize,
}

impl Layout {
    pub fn new(width: usize, height: usize) -> Self {
        let glyph_h = ((0.45 * height as f64).round() as usize).max(FONT_H);
        let glyph_w = ((0.55 * glyph_h as f64).round() as usize).max(FONT_W);
        let gap = ((0.3 * glyph_w as f64) as usize).max(1);
        let hyphen_len = ((0.4 * glyph_w as f64).round() as usize).max(1);
        let hyphen_thick = ((0.08 * glyph_h as f64).round() as usize).max(1);
        let text_width = 7 * glyph_w + hyphen_len + 7 * gap;
        Self {
            glyph_w,
            glyph_h,
            gap,
            hyphen_len,
            hyphen_thick,
            text_width,
            left: width.saturating_sub(text_width) / 2,
            top: (height - glyph_h) / 2,
        }
    }

    /// Cell origin of glyph `i` (0..7).
    pub fn cell_x(&self, i: usize) -> usize {
        let slot = self.glyph_w + self.gap;
        let hyphen = if i >= 3 { self.hyphen_len + self.gap } else { 0 };
        self.left + i * slot + hyphen
    }

    pub fn hyphen_box(&self) -> BBox {
        BBox::new(
            self.cell_x(2) + self.glyph_w + self.gap,
            self.top + (self.glyph_h - self.hyphen_thick) / 2,
            self.hyphen_len,
            self.hyphen_thick,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPlate {
    pub image: GrayImage,
    pub annotation: PlateAnnotation,
    pub spec: PlateSpec,
}

/// Ink mask of all glyphs and the hyphen, plus per-glyph ink boxes.
pub fn render_ink(spec: &PlateSpec) -> Result<(BinaryImage, Vec<BBox>), SynthError> {
    let layout = spec.validate()?;
    let mut ink = BinaryImage::empty(spec.width, spec.height);
    let mut boxes = Vec::with_capacity(7);
    for (i, c) in spec.text.chars().enumerate() {
        let g = glyph_mask(c, layout.glyph_w, layout.glyph_h).ok_or_else(|| SynthError::Text(spec.text.clone()))?;
        let ib = g.ink_box().expect("every glyph has ink");
        let (ox, oy) = (layout.cell_x(i), layout.top);
        for y in 0..g.height() {
            for x in 0..g.width() {
                if g.get(x, y) {
                    ink.set(ox + x, oy + y, true);
                }
            }
        }
        boxes.push(BBox::new(ox + ib.x, oy + ib.y, ib.w, ib.h));
    }
    let hb = layout.hyphen_box();
    for y in hb.y..hb.bottom() {
        for x in hb.x..hb.right() {
            ink.set(x, y, true);
        }
    }
    Ok((ink, boxes))
}

/// Renders a plate and applies its degradations in order. Deterministic in
/// `(spec, seed)`.
pub fn render_plate(spec: &PlateSpec, seed: u64) -> Result<GeneratedPlate, SynthError> {
    let layout = spec.validate()?;
    let (ink, boxes) = render_ink(spec)?;
    let (bg, fg) = match spec.style {
        PlateStyle::GrayBlack => (spec.background, spec.ink),
        // red plate, white characters
        PlateStyle::RedWhite => (
            crate::raster::luma(spec.background, spec.ink / 2, spec.ink / 2),
            255 - spec.ink / 2,
        ),
    };
    let mut img = GrayImage::from_fn(spec.width, spec.height, |x, y| if ink.get(x, y) { fg } else { bg });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in &spec.degradations {
        apply(&mut img, d, &layout, &boxes, &mut rng);
    }
    let annotation = PlateAnnotation {
        image_ref: Default::default(),
        plate_text: spec.text.clone(),
        plate_box: BBox::new(0, 0, spec.width, spec.height),
        char_boxes: boxes,
        vehicle_id: String::new(),
    };
    Ok(GeneratedPlate {
        image: img,
        annotation,
        spec: spec.clone(),
    })
}

/// Pixel region darkened by a shadow degradation.
pub fn shadow_region(kind: ShadowKind, position: usize, layout: &Layout, boxes: &[BBox], height: usize) -> BBox {
    let g = boxes[position];
    match kind {
        ShadowKind::Cst1 => {
            let next = boxes[position + 1];
            BBox::new(g.right(), g.y, next.x - g.right(), g.h)
        }
        ShadowKind::Cst2 => {
            let rows = layout.top.saturating_sub(2).max(1);
            BBox::new(g.x, 0, g.w, rows)
        }
        ShadowKind::Cst3 => {
            let below = height - g.bottom();
            BBox::new(g.x, g.bottom(), g.w, (below / 2).max(1))
        }
    }
}

fn apply(img: &mut GrayImage, d: &Degradation, layout: &Layout, boxes: &[BBox], rng: &mut ChaCha8Rng) {
    let (w, h) = (img.width(), img.height());
    match *d {
        Degradation::GaussianNoise { sigma } => {
            if sigma == 0.0 {
                return;
            }
            let normal = Normal::new(0.0, sigma).expect("validated sigma");
            for y in 0..h {
                for x in 0..w {
                    let v = img.get(x, y) as f64 + normal.sample(rng);
                    img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Degradation::ShadowBand { kind, position } => {
            let r = shadow_region(kind, position, layout, boxes, h);
            for y in r.y..r.bottom() {
                for x in r.x..r.right() {
                    img.set(x, y, (img.get(x, y) as f64 * SHADOW_FACTOR).round() as u8);
                }
            }
        }
        Degradation::Blur { radius } => *img = box_blur(img, radius),
        Degradation::Skew { degrees } => *img = rotate(img, degrees),
        Degradation::BridgeNoise { intensity } => {
            let y = layout.top + layout.glyph_h / 2;
            let (x0, x1) = (boxes[0].x, boxes[6].right());
            for x in x0..x1 {
                img.set(x, y, img.get(x, y).min(intensity));
            }
        }
        Degradation::Shading { strength } => {
            let diag = (w + h) as f64;
            for y in 0..h {
                for x in 0..w {
                    let f = 1.0 - strength * (x + y) as f64 / diag;
                    img.set(x, y, (img.get(x, y) as f64 * f).round() as u8);
                }
            }
        }
    }
}

fn box_blur(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let r = radius as isize;
    GrayImage::from_fn(w, h, |x, y| {
        let (mut sum, mut n) = (0u32, 0u32);
        for dy in -r..=r {
            for dx in -r..=r {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    sum += img.get(sx as usize, sy as usize) as u32;
                    n += 1;
                }
            }
        }
        ((sum + n / 2) / n) as u8
    })
}

/// Nearest-neighbour rotation about the centre; uncovered pixels take the
/// median border value.
fn rotate(img: &GrayImage, degrees: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut border: Vec<u8> = (0..w).flat_map(|x| [img.get(x, 0), img.get(x, h - 1)]).collect();
    border.sort_unstable();
    let fill = border[border.len() / 2];
    let (s, c) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    GrayImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let sx = (c * dx + s * dy + cx).round();
        let sy = (-s * dx + c * dy + cy).round();
        if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
            img.get(sx as usize, sy as usize)
        } else {
            fill
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Clean,
    /// Every plate carries at least one degradation.
    Degraded,
    /// Roughly half the plates are degraded.
    Mixed,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "clean" => Ok(Self::Clean),
            "degraded" => Ok(Self::Degraded),
            "mixed" => Ok(Self::Mixed),
            _ => Err(format!("unknown profile {s:?} (clean, degraded, mixed)")),
        }
    }
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    (0..7)
        .map(|i| {
            if i < 3 {
                (b'A' + rng.random_range(0..26u8)) as char
            } else {
                (b'0' + rng.random_range(0..10u8)) as char
            }
        })
        .collect()
}

fn random_degradation(rng: &mut ChaCha8Rng) -> Degradation {
    match rng.random_range(0..6) {
        0 => Degradation::GaussianNoise {
            sigma: rng.random_range(4.0..14.0),
        },
        1 => {
            let kind = [ShadowKind::Cst1, ShadowKind::Cst2, ShadowKind::Cst3][rng.random_range(0..3)];
            let position = match kind {
                ShadowKind::Cst1 => [0, 1, 3, 4, 5][rng.random_range(0..5)],
                _ => rng.random_range(0..7),
            };
            Degradation::ShadowBand { kind, position }
        }
        2 => Degradation::Blur { radius: 1 },
        3 => Degradation::Skew {
            degrees: rng.random_range(-3.0..3.0),
        },
        4 => Degradation::BridgeNoise {
            intensity: rng.random_range(90..140),
        },
        _ => Degradation::Shading {
            strength: rng.random_range(0.3..0.6),
        },
    }
}

/// Draws a random plate spec for the given profile. `size` pins the plate
/// dimensions; otherwise they are sampled over the observed dataset range.
pub fn random_spec(rng: &mut ChaCha8Rng, profile: Profile, size: Option<(usize, usize)>) -> PlateSpec {
    let (width, height) = size.unwrap_or_else(|| {
        let height = rng.random_range(MIN_HEIGHT..=77);
        let lo = ((2.5 * height as f64).ceil() as usize).max(68);
        let hi = ((3.2 * height as f64).floor() as usize).min(221);
        (rng.random_range(lo..=hi), height)
    });
    let mut spec = PlateSpec {
        text: random_text(rng),
        width,
        height,
        style: PlateStyle::GrayBlack,
        background: rng.random_range(170..=230),
        ink: rng.random_range(10..=60),
        degradations: Vec::new(),
    };
    let degraded = match profile {
        Profile::Clean => false,
        Profile::Degraded => true,
        Profile::Mixed => rng.random_bool(0.5),
    };
    if degraded {
        let n = rng.random_range(1..=2);
        spec.degradations = (0..n).map(|_| random_degradation(rng)).collect();
    }
    spec
}

/// `n` plates, each its own vehicle, named `plate_NNNNN`.
pub fn gen_corpus(n: usize, profile: Profile, seed: u64) -> Vec<GeneratedPlate> {
    gen_corpus_sized(n, profile, seed, None)
}

/// As [`gen_corpus`], optionally with every plate at one `(width, height)`.
///
/// # Panics
///
/// If `size` cannot hold the layout (see [`PlateSpec::validate`]).
pub fn gen_corpus_sized(n: usize, profile: Profile, seed: u64, size: Option<(usize, usize)>) -> Vec<GeneratedPlate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(PlateSpec, u64)> = (0..n).map(|_| (random_spec(&mut rng, profile, size), rng.random())).collect();
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (spec, s))| {
            let mut p = render_plate(&spec, s).expect("random specs are valid");
            let name = format!("plate_{i:05}");
            p.annotation.image_ref = format!("{name}.png").into();
            p.annotation.vehicle_id = name;
            p
        })
        .collect()
}

/// Writes `<name>.png`, `<name>.txt` and `tracks.csv` into `dir`.
pub fn write_corpus(plates: &[GeneratedPlate], dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut tracks = Vec::with_capacity(plates.len());
    for p in plates {
        let png = dir.join(&p.annotation.image_ref);
        crate::raster::save_gray(&p.image, &png)?;
        bench::write_annotation(&p.annotation, &png.with_extension("txt"))?;
        let stem = png.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        tracks.push((stem, p.annotation.vehicle_id.clone()));
    }
    bench::write_tracks(&tracks, &dir.join("tracks.csv"))
}
