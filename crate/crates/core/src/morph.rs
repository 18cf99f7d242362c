//! Binary morphology and the SL*L shadow-removal preprocessor.
//!
//! Pixels outside the image read as background for every operator. All
//! connectivity is 8-connected.

use crate::binarize::{otsu_level, threshold_at};
use crate::raster::{BinaryImage, GrayImage};
use crate::segment::label_components;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    /// Must hit foreground.
    Fg,
    /// Must hit background.
    Bg,
    DontCare,
}

/// Ternary structuring element with odd sides; the origin is the center cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructElement {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl StructElement {
    /// Panics unless both sides are odd and `cells` matches them.
    pub fn new(width: usize, height: usize, cells: Vec<Cell>) -> Self {
        assert!(width % 2 == 1 && height % 2 == 1, "structuring element sides must be odd");
        assert_eq!(cells.len(), width * height, "cell count mismatch");
        Self {
            width,
            height,
            cells,
        }
    }

    /// `1` foreground, `0` background, `.` don't care.
    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows[0].len();
        let cells = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), width, "ragged structuring element");
                r.bytes().map(|b| match b {
                    b'1' => Cell::Fg,
                    b'0' => Cell::Bg,
                    _ => Cell::DontCare,
                })
            })
            .collect();
        Self::new(width, height, cells)
    }

    pub fn square(side: usize) -> Self {
        Self::new(side, side, vec![Cell::Fg; side * side])
    }

    pub fn cross() -> Self {
        Self::from_rows(&[".1.", "111", ".1."])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Point reflection about the origin.
    pub fn reflect(&self) -> Self {
        let mut cells = self.cells.clone();
        cells.reverse();
        Self::new(self.width, self.height, cells)
    }

    /// Quarter turn clockwise. Only square elements rotate.
    pub fn rotate90(&self) -> Self {
        assert_eq!(self.width, self.height, "rotation needs a square element");
        let n = self.width;
        let mut cells = vec![Cell::DontCare; n * n];
        for y in 0..n {
            for x in 0..n {
                cells[x * n + (n - 1 - y)] = self.cells[y * n + x];
            }
        }
        Self::new(n, n, cells)
    }

    /// Offsets from the origin paired with the cell state.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize, Cell)> + '_ {
        let (cx, cy) = ((self.width / 2) as isize, (self.height / 2) as isize);
        self.cells.iter().enumerate().map(move |(i, &c)| {
            (
                (i % self.width) as isize - cx,
                (i / self.width) as isize - cy,
                c,
            )
        })
    }

    fn fg_offsets(&self) -> Vec<(isize, isize)> {
        self.offsets()
            .filter(|o| o.2 == Cell::Fg)
            .map(|(dx, dy, _)| (dx, dy))
            .collect()
    }
}

/// Minkowski dilation: `p` is set when `p - b` is foreground for some `b`.
pub fn dilate(img: &BinaryImage, se: &StructElement) -> BinaryImage {
    let offs = se.fg_offsets();
    BinaryImage::from_fn(img.width(), img.height(), |x, y| {
        offs.iter()
            .any(|&(dx, dy)| img.get_signed(x as isize - dx, y as isize - dy))
    })
}

/// Erosion: `p` survives when `p + b` is foreground for every `b`.
pub fn erode(img: &BinaryImage, se: &StructElement) -> BinaryImage {
    let offs = se.fg_offsets();
    BinaryImage::from_fn(img.width(), img.height(), |x, y| {
        offs.iter()
            .all(|&(dx, dy)| img.get_signed(x as isize + dx, y as isize + dy))
    })
}

pub fn hit_or_miss(img: &BinaryImage, se: &StructElement) -> BinaryImage {
    let offs: Vec<_> = se.offsets().filter(|o| o.2 != Cell::DontCare).collect();
    BinaryImage::from_fn(img.width(), img.height(), |x, y| {
        offs.iter().all(|&(dx, dy, c)| {
            let v = img.get_signed(x as isize + dx, y as isize + dy);
            match c {
                Cell::Fg => v,
                Cell::Bg => !v,
                Cell::DontCare => true,
            }
        })
    })
}

/// The eight end-point detectors: four rotations of a pixel with a single
/// side neighbor and four rotations of a pixel with a single corner neighbor.
pub fn end_point_elements() -> Vec<StructElement> {
    let mut out = Vec::with_capacity(8);
    let mut side = StructElement::from_rows(&[".00", "110", ".00"]);
    let mut corner = StructElement::from_rows(&["100", "010", "000"]);
    for _ in 0..4 {
        out.push(side.clone());
        side = side.rotate90();
    }
    for _ in 0..4 {
        out.push(corner.clone());
        corner = corner.rotate90();
    }
    out
}

/// 3x3 neighborhood in the order E, NE, N, NW, W, SW, S, SE.
fn neighbors(img: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let (x, y) = (x as isize, y as isize);
    [
        img.get_signed(x + 1, y),
        img.get_signed(x + 1, y - 1),
        img.get_signed(x, y - 1),
        img.get_signed(x - 1, y - 1),
        img.get_signed(x - 1, y),
        img.get_signed(x - 1, y + 1),
        img.get_signed(x, y + 1),
        img.get_signed(x + 1, y + 1),
    ]
}

/// Yokoi connectivity number for 8-connectivity. A border pixel with value 1
/// can be removed without changing topology.
fn connectivity_number(n: &[bool; 8]) -> u32 {
    let c = |i: usize| !n[i % 8] as u32;
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| c(k) - c(k) * c(k + 1) * c(k + 2))
        .sum()
}

/// Thin to a 1-pixel-wide 8-connected skeleton.
///
/// Each pass visits the north, south, east and west borders in turn and
/// deletes, in raster order, border pixels that are simple and are not end
/// points. Stops when a full pass deletes nothing, so the result is a fixed
/// point.
pub fn skeletonize(img: &BinaryImage) -> BinaryImage {
    let mut out = img.clone();
    let dirs: [(isize, isize); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];
    loop {
        let mut changed = false;
        for &(dx, dy) in &dirs {
            let border: Vec<(usize, usize)> = (0..out.height())
                .flat_map(|y| (0..out.width()).map(move |x| (x, y)))
                .filter(|&(x, y)| {
                    out.get(x, y) && !out.get_signed(x as isize + dx, y as isize + dy)
                })
                .collect();
            for (x, y) in border {
                let n = neighbors(&out, x, y);
                let count = n.iter().filter(|&&v| v).count();
                if count >= 2 && connectivity_number(&n) == 1 {
                    out.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Remove spurs of length up to `iterations` from a skeleton.
///
/// Thins with the end-point elements `iterations` times, finds the end
/// points that remain, and regrows them by conditional dilation inside the
/// original mask so that only legitimate strokes recover their length.
pub fn prune(img: &BinaryImage, iterations: usize) -> BinaryImage {
    if iterations == 0 {
        return img.clone();
    }
    let ends = end_point_elements();
    let mut thinned = img.clone();
    for _ in 0..iterations {
        for se in &ends {
            thinned = thinned.minus(&hit_or_miss(&thinned, se));
        }
    }
    let mut tips = BinaryImage::empty(img.width(), img.height());
    for se in &ends {
        tips = tips.or(&hit_or_miss(&thinned, se));
    }
    let h = StructElement::square(3);
    let mut grown = tips;
    for _ in 0..iterations {
        grown = dilate(&grown, &h).and(img);
    }
    thinned.or(&grown)
}

/// One conditional-dilation pass that never joins two components.
///
/// Background pixels touching foreground are visited in raster order and
/// switched on only when every labeled pixel around them (original or
/// already grown) belongs to a single component.
pub fn thicken(img: &BinaryImage) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let (mut labels, _) = label_components(img);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) {
                continue;
            }
            let touches_input = (-1isize..=1)
                .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
                .any(|(dx, dy)| img.get_signed(x as isize + dx, y as isize + dy));
            if !touches_input {
                continue;
            }
            let mut owner = 0u32;
            let mut unique = true;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let l = labels[ny as usize * w + nx as usize];
                    if l == 0 {
                        continue;
                    }
                    if owner == 0 {
                        owner = l;
                    } else if owner != l {
                        unique = false;
                    }
                }
            }
            if unique && owner != 0 {
                labels[y * w + x] = owner;
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Knobs for the SL*L shadow detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SllParams {
    /// Spur length removed from the skeleton.
    pub prune_iterations: usize,
    /// Minimum gap, in gray levels, between ink and shadow class means.
    pub min_shadow_contrast: f64,
    /// Largest mean absolute step, in gray levels, between 4-adjacent pixels
    /// of one candidate; shadows are flat.
    pub max_shadow_gradient: f64,
    /// Minimum shadow area as a fraction of the plate area.
    pub min_shadow_area_frac: f64,
}

impl Default for SllParams {
    fn default() -> Self {
        Self {
            prune_iterations: 3,
            min_shadow_contrast: 40.0,
            max_shadow_gradient: 24.0,
            min_shadow_area_frac: 0.004,
        }
    }
}

fn median(values: &mut [u8]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

/// Shadow regions as a mask. Empty when the plate has none.
///
/// A shadow is a connected run of foreground pixels that are markedly
/// lighter than the ink (a second Otsu split of the foreground intensities),
/// flat (low gradient between its own pixels), large, and crossed by the
/// pruned skeleton of the thickened foreground.
pub fn detect_shadows(img: &GrayImage, mask: &BinaryImage, p: &SllParams) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let none = BinaryImage::empty(w, h);

    let mut hist = [0u64; 256];
    for (i, &m) in mask.mask().iter().enumerate() {
        if m {
            hist[img.data()[i] as usize] += 1;
        }
    }
    let Ok(split) = crate::binarize::otsu_from_histogram(&hist) else {
        return none;
    };
    let class_mean = |range: std::ops::Range<usize>| {
        let (n, s) = range.fold((0u64, 0u64), |(n, s), v| (n + hist[v], s + v as u64 * hist[v]));
        s as f64 / n.max(1) as f64
    };
    let ink_mean = class_mean(0..split as usize);
    let shade_mean = class_mean(split as usize..256);
    if shade_mean - ink_mean < p.min_shadow_contrast {
        return none;
    }

    let lighter = BinaryImage::from_fn(w, h, |x, y| mask.get(x, y) && img.get(x, y) >= split);
    let skeleton = prune(&skeletonize(&thicken(mask)), p.prune_iterations);
    let (labels, n) = label_components(&lighter);
    let min_area = (p.min_shadow_area_frac * (w * h) as f64).max(4.0);

    let mut area = vec![0usize; n + 1];
    let mut step_sum = vec![0f64; n + 1];
    let mut steps = vec![0usize; n + 1];
    let mut on_skeleton = vec![false; n + 1];
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x] as usize;
            if l == 0 {
                continue;
            }
            area[l] += 1;
            on_skeleton[l] |= skeleton.get(x, y);
            let v = img.get(x, y) as f64;
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h && labels[ny * w + nx] as usize == l {
                    step_sum[l] += (img.get(nx, ny) as f64 - v).abs();
                    steps[l] += 1;
                }
            }
        }
    }
    let keep: Vec<bool> = (0..=n)
        .map(|l| {
            l > 0
                && area[l] as f64 >= min_area
                && on_skeleton[l]
                && step_sum[l] / steps[l].max(1) as f64 <= p.max_shadow_gradient
        })
        .collect();
    BinaryImage::from_fn(w, h, |x, y| keep[labels[y * w + x] as usize])
}

/// SL*L preprocessing: locate shadows, lighten them, re-binarize with Otsu.
///
/// Pixels inside each detected shadow (grown by one pixel) are scaled by
/// `background_median / shadow_median`, which restores a multiplicative
/// shadow to the plate background level. A constant plate yields an empty
/// mask.
pub fn sll_preprocess(img: &GrayImage) -> BinaryImage {
    sll_preprocess_with(img, &SllParams::default())
}

pub fn sll_preprocess_with(img: &GrayImage, p: &SllParams) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let Ok(t) = otsu_level(img) else {
        return BinaryImage::empty(w, h);
    };
    let mask = threshold_at(img, t);
    let shadows = detect_shadows(img, &mask, p);
    if shadows.is_empty() {
        return mask;
    }

    let mut background: Vec<u8> = (0..w * h)
        .filter(|&i| !mask.mask()[i])
        .map(|i| img.data()[i])
        .collect();
    if background.is_empty() {
        return mask;
    }
    let bg_level = median(&mut background);

    let mut lightened = img.clone();
    let (labels, n) = label_components(&shadows);
    let grown_labels = grow_labels(&labels, w, h);
    for l in 1..=n as u32 {
        let mut values: Vec<u8> = (0..w * h)
            .filter(|&i| labels[i] == l)
            .map(|i| img.data()[i])
            .collect();
        let level = median(&mut values).max(1.0);
        let gain = bg_level / level;
        for i in (0..w * h).filter(|&i| grown_labels[i] == l) {
            let v = (img.data()[i] as f64 * gain).round().min(255.0);
            lightened.set(i % w, i / w, v as u8);
        }
    }
    match otsu_level(&lightened) {
        Ok(t) => threshold_at(&lightened, t),
        Err(_) => BinaryImage::empty(w, h),
    }
}

/// Extend each label by one pixel into unlabeled neighbors (lowest label wins).
fn grow_labels(labels: &[u32], w: usize, h: usize) -> Vec<u32> {
    let mut out = labels.to_vec();
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] != 0 {
                continue;
            }
            let mut best = 0u32;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let l = labels[ny as usize * w + nx as usize];
                    if l != 0 && (best == 0 || l < best) {
                        best = l;
                    }
                }
            }
            out[y * w + x] = best;
        }
    }
    out
}
