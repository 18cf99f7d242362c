//! Connected components, projection cutting and the five plate segmenters.
//!
//! Every segmenter maps a plate crop to character boxes ordered left to
//! right by x-center.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::binarize::{igt_hybrid, otsu_level, threshold_at, IgtParams};
use crate::morph::sll_preprocess;
use crate::raster::{BBox, BinaryImage, GrayImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("plate crop {width}x{height} is too small to segment")]
    Degenerate { width: usize, height: usize },
    #[error("unknown segmenter {0:?}")]
    UnknownSegmenter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub bbox: BBox,
    pub area: usize,
    pub id: u32,
}

/// Raw 8-connected labeling. Label 0 is background; labels `1..=n` follow
/// the raster order of each component's first pixel.
pub fn label_components(img: &BinaryImage) -> (Vec<u32>, usize) {
    let (w, h) = (img.width(), img.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !img.mask()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if img.mask()[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// 8-connected components ordered by ascending x-center (ties: top edge,
/// then raster order of the first pixel). Ids are positions in that order.
pub fn connected_components(img: &BinaryImage) -> Vec<Component> {
    let (labels, n) = label_components(img);
    let w = img.width();
    let mut ext = vec![(usize::MAX, usize::MAX, 0usize, 0usize, 0usize); n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let e = &mut ext[l as usize - 1];
        e.0 = e.0.min(x);
        e.1 = e.1.min(y);
        e.2 = e.2.max(x);
        e.3 = e.3.max(y);
        e.4 += 1;
    }
    let mut comps: Vec<(usize, BBox, usize)> = ext
        .into_iter()
        .enumerate()
        .map(|(raster, (x0, y0, x1, y1, area))| {
            (raster, BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1), area)
        })
        .collect();
    comps.sort_by_key(|&(raster, b, _)| (b.x_center2(), b.y, raster));
    comps
        .into_iter()
        .enumerate()
        .map(|(id, (_, bbox, area))| Component {
            bbox,
            area,
            id: id as u32,
        })
        .collect()
}

/// Cut at empty columns; trim each column span to its ink rows.
pub fn projection_cut(img: &BinaryImage) -> Vec<BBox> {
    let (w, h) = (img.width(), img.height());
    let columns: Vec<usize> = (0..w)
        .map(|x| (0..h).filter(|&y| img.get(x, y)).count())
        .collect();
    let mut boxes = Vec::new();
    let mut x = 0;
    while x < w {
        if columns[x] == 0 {
            x += 1;
            continue;
        }
        let start = x;
        while x < w && columns[x] > 0 {
            x += 1;
        }
        let rows: Vec<usize> = (0..h)
            .filter(|&y| (start..x).any(|c| img.get(c, y)))
            .collect();
        let (top, bottom) = (rows[0], *rows.last().expect("span has ink"));
        boxes.push(BBox::new(start, top, x - start, bottom - top + 1));
    }
    boxes
}

/// The five evaluated approaches, in benchmark table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmenterId {
    SllProjection,
    Ccl,
    IgtProjection,
    PriorKnowledge,
    IterativeProposed,
}

impl SegmenterId {
    pub const ALL: [SegmenterId; 5] = [
        SegmenterId::SllProjection,
        SegmenterId::Ccl,
        SegmenterId::IgtProjection,
        SegmenterId::PriorKnowledge,
        SegmenterId::IterativeProposed,
    ];

    /// Short name used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            SegmenterId::SllProjection => "sll",
            SegmenterId::Ccl => "ccl",
            SegmenterId::IgtProjection => "igt",
            SegmenterId::PriorKnowledge => "prior",
            SegmenterId::IterativeProposed => "iterative",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SegmenterId::SllProjection => "Pixel Counting with SL*L",
            SegmenterId::Ccl => "Conn. Component",
            SegmenterId::IgtProjection => "Pixel Counting with IGT",
            SegmenterId::PriorKnowledge => "Prior-Knowledge Based",
            SegmenterId::IterativeProposed => "Proposed Iterative Approach",
        }
    }
}

impl fmt::Display for SegmenterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SegmenterId {
    type Err = SegmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmenterId::ALL
            .into_iter()
            .find(|id| id.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| SegmentError::UnknownSegmenter(s.to_string()))
    }
}

/// Character boxes of one plate, sorted by x-center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    boxes: Vec<BBox>,
    pub segmenter: SegmenterId,
}

impl Segmentation {
    pub fn new(mut boxes: Vec<BBox>, segmenter: SegmenterId) -> Self {
        boxes.sort_by_key(|b| (b.x_center2(), b.y, b.w, b.h));
        Self { boxes, segmenter }
    }

    pub fn empty(segmenter: SegmenterId) -> Self {
        Self {
            boxes: Vec::new(),
            segmenter,
        }
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Eight equal columns over the character band (top 15% and bottom 5%
/// removed); the fourth column is the hyphen and is dropped. The last column
/// absorbs `width % 8`.
pub fn segment_prior(plate: &GrayImage) -> Result<Segmentation, SegmentError> {
    let (w, h) = (plate.width(), plate.height());
    let top = h * 15 / 100;
    let band = h - top - h * 5 / 100;
    if w < 8 || band < 2 {
        return Err(SegmentError::Degenerate {
            width: w,
            height: h,
        });
    }
    let region = w / 8;
    let boxes = (0..8)
        .filter(|&i| i != 3)
        .map(|i| {
            let width = if i == 7 { w - 7 * region } else { region };
            BBox::new(i * region, top, width, band)
        })
        .collect();
    Ok(Segmentation::new(boxes, SegmenterId::PriorKnowledge))
}

/// Accepted component height as a fraction of the plate height.
pub const CCL_HEIGHT_RANGE: (f64, f64) = (0.40, 0.50);

/// Otsu, label, keep components whose height is 40–50% of the plate, then
/// the seven largest by area.
pub fn segment_ccl(plate: &GrayImage) -> Segmentation {
    let Ok(t) = otsu_level(plate) else {
        return Segmentation::empty(SegmenterId::Ccl);
    };
    let h = plate.height() as f64;
    let mut kept: Vec<Component> = connected_components(&threshold_at(plate, t))
        .into_iter()
        .filter(|c| {
            let r = c.bbox.h as f64 / h;
            r >= CCL_HEIGHT_RANGE.0 && r <= CCL_HEIGHT_RANGE.1
        })
        .collect();
    if kept.len() > 7 {
        kept.sort_by(|a, b| b.area.cmp(&a.area).then(a.id.cmp(&b.id)));
        kept.truncate(7);
    }
    Segmentation::new(kept.into_iter().map(|c| c.bbox).collect(), SegmenterId::Ccl)
}

pub fn segment_sll(plate: &GrayImage) -> Segmentation {
    Segmentation::new(
        projection_cut(&sll_preprocess(plate)),
        SegmenterId::SllProjection,
    )
}

/// Hybrid IGT followed by projection cutting. The window is clamped to the
/// shorter plate side so small crops remain usable.
pub fn segment_igt(plate: &GrayImage, p: &IgtParams) -> Segmentation {
    let side = plate.width().min(plate.height());
    let params = IgtParams {
        window: p.window.min(side).max(4.min(side)),
        ..*p
    };
    match igt_hybrid(plate, &params) {
        Ok(mask) => Segmentation::new(projection_cut(&mask), SegmenterId::IgtProjection),
        Err(e) => {
            log::warn!("IGT segmentation failed: {e}");
            Segmentation::empty(SegmenterId::IgtProjection)
        }
    }
}

/// Knobs of the iterative segmenter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeParams {
    pub expected: usize,
    pub start: u8,
    pub step: u8,
    pub min_area_frac: f64,
    pub max_area_frac: f64,
    pub max_width_frac: f64,
}

impl Default for IterativeParams {
    fn default() -> Self {
        Self {
            expected: 7,
            start: 10,
            step: 5,
            min_area_frac: 0.002,
            max_area_frac: 0.20,
            max_width_frac: 0.25,
        }
    }
}

/// Candidate character boxes at one threshold: filtered components with
/// x-overlapping boxes merged.
pub fn iterative_candidates(plate: &GrayImage, t: u8, p: &IterativeParams) -> Vec<BBox> {
    let (w, h) = (plate.width() as f64, plate.height() as f64);
    let plate_area = w * h;
    let kept: Vec<BBox> = connected_components(&threshold_at(plate, t))
        .into_iter()
        .filter(|c| {
            let area = c.area as f64;
            c.bbox.w as f64 <= p.max_width_frac * w
                && area >= p.min_area_frac * plate_area
                && area <= p.max_area_frac * plate_area
        })
        .map(|c| c.bbox)
        .collect();
    merge_x_overlaps(kept)
}

/// Merge boxes whose column spans overlap until none do.
pub fn merge_x_overlaps(mut boxes: Vec<BBox>) -> Vec<BBox> {
    boxes.sort_by_key(|b| (b.x, b.y, b.w, b.h));
    let mut merged: Vec<BBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        match merged.last_mut() {
            Some(last) if b.x < last.right() => *last = last.union(&b),
            _ => merged.push(b),
        }
    }
    merged
}

/// Thresholds visited by the iterative segmenter.
pub fn iterative_levels(p: &IterativeParams) -> impl Iterator<Item = u8> {
    (p.start as u16..=255)
        .step_by(p.step.max(1) as usize)
        .map(|t| t as u8)
}

/// Raise the threshold from 10 in steps of 5 until the filtered, merged
/// component count equals the expected character count.
///
/// When no level hits the count exactly, the candidates of the level whose
/// count came closest are returned (ties go to the lower level).
pub fn segment_iterative(plate: &GrayImage, p: &IterativeParams) -> Segmentation {
    let mut best: Option<(usize, Vec<BBox>)> = None;
    for t in iterative_levels(p) {
        let cands = iterative_candidates(plate, t, p);
        if cands.len() == p.expected {
            return Segmentation::new(cands, SegmenterId::IterativeProposed);
        }
        let gap = cands.len().abs_diff(p.expected);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, cands));
        }
    }
    Segmentation::new(
        best.map(|b| b.1).unwrap_or_default(),
        SegmenterId::IterativeProposed,
    )
}

/// Parameters for every segmenter, with defaults for all of them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentConfig {
    pub igt: IgtParams,
    pub iterative: IterativeParams,
}

/// Dispatch by id. Degenerate prior-knowledge crops give an empty result.
pub fn run_segmenter(id: SegmenterId, plate: &GrayImage, cfg: &SegmentConfig) -> Segmentation {
    match id {
        SegmenterId::SllProjection => segment_sll(plate),
        SegmenterId::Ccl => segment_ccl(plate),
        SegmenterId::IgtProjection => segment_igt(plate, &cfg.igt),
        SegmenterId::PriorKnowledge => segment_prior(plate).unwrap_or_else(|e| {
            log::warn!("prior-knowledge segmentation failed: {e}");
            Segmentation::empty(id)
        }),
        SegmenterId::IterativeProposed => segment_iterative(plate, &cfg.iterative),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// BFS flood fill returning pixel sets, independent of the labeler.
    fn flood_fill_oracle(m: &BinaryImage) -> BTreeSet<Vec<(usize, usize)>> {
        let (w, h) = (m.width(), m.height());
        let mut seen = vec![false; w * h];
        let mut out = BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                if !m.get(x, y) || seen[y * w + x] {
                    continue;
                }
                let mut queue = std::collections::VecDeque::from([(x, y)]);
                seen[y * w + x] = true;
                let mut pixels = Vec::new();
                while let Some((cx, cy)) = queue.pop_front() {
                    pixels.push((cx, cy));
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            if m.get(nx, ny) && !seen[ny * w + nx] {
                                seen[ny * w + nx] = true;
                                queue.push_back((nx, ny));
                            }
                        }
                    }
                }
                pixels.sort();
                out.insert(pixels);
            }
        }
        out
    }

    fn label_pixel_sets(m: &BinaryImage) -> BTreeSet<Vec<(usize, usize)>> {
        let (labels, n) = label_components(m);
        let w = m.width();
        let mut sets = vec![Vec::new(); n];
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                sets[l as usize - 1].push((i % w, i / w));
            }
        }
        sets.into_iter()
            .map(|mut s| {
                s.sort();
                s
            })
            .collect()
    }

    fn box_and_area(pixels: &[(usize, usize)]) -> (BBox, usize) {
        let x0 = pixels.iter().map(|p| p.0).min().unwrap();
        let x1 = pixels.iter().map(|p| p.0).max().unwrap();
        let y0 = pixels.iter().map(|p| p.1).min().unwrap();
        let y1 = pixels.iter().map(|p| p.1).max().unwrap();
        (BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1), pixels.len())
    }

    #[test]
    fn components_empty_and_blocks() {
        assert!(connected_components(&BinaryImage::empty(5, 5)).is_empty());
        let m = BinaryImage::from_fn(12, 6, |x, y| {
            (1..4).contains(&y) && ((1..4).contains(&x) || (7..10).contains(&x))
        });
        let c = connected_components(&m);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].bbox, BBox::new(1, 1, 3, 3));
        assert_eq!(c[1].bbox, BBox::new(7, 1, 3, 3));
        assert!(c.iter().all(|c| c.area == 9));
        assert_eq!((c[0].id, c[1].id), (0, 1));
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let m = BinaryImage::from_ascii(&["#..", ".#.", "..#"]);
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn components_match_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let p = rng.random_range(0.1..0.6);
            let m = BinaryImage::from_fn(32, 32, |_, _| rng.random_bool(p));
            let oracle = flood_fill_oracle(&m);
            assert_eq!(label_pixel_sets(&m), oracle);
            let comps = connected_components(&m);
            let mut got: Vec<(BBox, usize)> = comps.iter().map(|c| (c.bbox, c.area)).collect();
            let mut want: Vec<(BBox, usize)> = oracle.iter().map(|p| box_and_area(p)).collect();
            got.sort();
            want.sort();
            assert_eq!(got, want);
            assert!(comps.windows(2).all(|w| w[0].bbox.x_center2() <= w[1].bbox.x_center2()));
            assert!(comps.iter().all(|c| c.area >= 1 && c.area <= c.bbox.area()));
        }
    }

    #[test]
    fn projection_two_blocks() {
        let m = BinaryImage::from_fn(14, 8, |x, y| {
            ((1..5).contains(&x) && (2..7).contains(&y)) || ((8..12).contains(&x) && (1..5).contains(&y))
        });
        assert_eq!(
            projection_cut(&m),
            vec![BBox::new(1, 2, 4, 5), BBox::new(8, 1, 4, 4)]
        );
        assert!(projection_cut(&BinaryImage::empty(4, 4)).is_empty());
    }

    #[test]
    fn projection_single_glyph_is_ink_box() {
        let m = BinaryImage::from_ascii(&["......", "..##..", ".#..#.", "..##..", "......"]);
        assert_eq!(projection_cut(&m), vec![m.ink_box().unwrap()]);
    }

    #[test]
    fn prior_reference_layout() {
        let s = segment_prior(&GrayImage::filled(160, 40, 200)).unwrap();
        let xs: Vec<usize> = s.boxes().iter().map(|b| b.x).collect();
        assert_eq!(xs, vec![0, 20, 40, 80, 100, 120, 140]);
        assert!(s.boxes().iter().all(|b| b.y == 6 && b.h == 32 && b.w == 20));
    }

    #[test]
    fn prior_minimal_and_remainder() {
        let s = segment_prior(&GrayImage::filled(8, 10, 9)).unwrap();
        assert_eq!(s.len(), 7);
        assert!(s.boxes().iter().all(|b| b.w == 1 && b.y == 1 && b.h == 9));

        let s = segment_prior(&GrayImage::filled(165, 40, 9)).unwrap();
        // independent integer computation: 165 / 8 = 20 rem 5
        let last = s.boxes()[6];
        assert_eq!((last.x, last.w), (140, 25));
        assert_eq!(s.boxes().iter().map(|b| b.w).sum::<usize>(), 165 - 20);

        assert!(segment_prior(&GrayImage::filled(7, 40, 9)).is_err());
        assert!(segment_prior(&GrayImage::filled(40, 1, 9)).is_err());
    }

    #[test]
    fn ccl_rejects_short_blob() {
        // two 9-row strokes on a 20-row plate (45%) and a 2-row blob (10%)
        let img = GrayImage::from_fn(40, 20, |x, y| {
            let stroke = (5..14).contains(&y) && ((5..8).contains(&x) || (15..18).contains(&x));
            let blob = (2..4).contains(&y) && (28..31).contains(&x);
            if stroke || blob { 20 } else { 220 }
        });
        let s = segment_ccl(&img);
        assert_eq!(s.boxes(), &[BBox::new(5, 5, 3, 9), BBox::new(15, 5, 3, 9)]);
        assert!(segment_ccl(&GrayImage::filled(40, 20, 100)).is_empty());
    }

    #[test]
    fn iterative_merges_x_overlaps() {
        let merged = merge_x_overlaps(vec![
            BBox::new(10, 2, 4, 3),
            BBox::new(0, 0, 5, 5),
            BBox::new(12, 6, 5, 2),
            BBox::new(5, 1, 2, 2),
        ]);
        assert_eq!(
            merged,
            vec![BBox::new(0, 0, 5, 5), BBox::new(5, 1, 2, 2), BBox::new(10, 2, 7, 6)]
        );
    }

    #[test]
    fn iterative_blank_plate_falls_back_to_empty() {
        let s = segment_iterative(&GrayImage::filled(120, 42, 230), &IterativeParams::default());
        assert!(s.is_empty());
    }

    #[test]
    fn iterative_levels_start_at_ten() {
        let levels: Vec<u8> = iterative_levels(&IterativeParams::default()).collect();
        assert_eq!(levels.first(), Some(&10));
        assert_eq!(levels.last(), Some(&255));
        assert_eq!(levels.len(), 50);
    }

    #[test]
    fn segmenter_names_round_trip() {
        for id in SegmenterId::ALL {
            assert_eq!(id.key().parse::<SegmenterId>(), Ok(id));
        }
        assert!("nope".parse::<SegmenterId>().is_err());
    }
}
