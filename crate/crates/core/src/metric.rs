//! Box overlap measures: Jaccard, centroid distance, Jaccard-Centroid, and
//! the character/plate scoring built on them.

use crate::raster::BBox;
use crate::segment::Segmentation;

/// Penalty constant of the Jaccard-Centroid coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcParams {
    c: f64,
}

impl JcParams {
    pub const DEFAULT_C: f64 = 3.0;

    /// `None` unless `c` is finite and positive.
    pub fn new(c: f64) -> Option<Self> {
        (c.is_finite() && c > 0.0).then_some(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

impl Default for JcParams {
    fn default() -> Self {
        Self {
            c: Self::DEFAULT_C,
        }
    }
}

/// Intersection over union of two rectangles, computed in closed form.
pub fn jaccard(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()).saturating_sub(a.x.max(b.x));
    let ih = a.bottom().min(b.bottom()).saturating_sub(a.y.max(b.y));
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Euclidean distance between box centers `(x + w/2, y + h/2)`.
pub fn centroid_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// `J / max(1, C * dc)`.
pub fn jaccard_centroid(a: &BBox, b: &BBox, p: &JcParams) -> f64 {
    jaccard(a, b) / (p.c * centroid_distance(a, b)).max(1.0)
}

/// Score of one ground-truth character.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharScore {
    pub jaccard: f64,
    /// Infinite when unmatched.
    pub delta_c: f64,
    pub jc: f64,
    pub truth_index: usize,
    pub matched: bool,
    /// Index into the detection list when matched.
    pub detection: Option<usize>,
}

impl CharScore {
    pub fn unmatched(truth_index: usize) -> Self {
        Self {
            jaccard: 0.0,
            delta_c: f64::INFINITY,
            jc: 0.0,
            truth_index,
            matched: false,
            detection: None,
        }
    }
}

/// Greedy one-to-one assignment by descending JC.
///
/// Only overlapping pairs are eligible. Ties resolve toward the lower truth
/// index, then the lower detection index. Output follows truth order.
pub fn match_boxes(detected: &[BBox], truth: &[BBox], p: &JcParams) -> Vec<CharScore> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        for (di, d) in detected.iter().enumerate() {
            if jaccard(d, t) > 0.0 {
                pairs.push((jaccard_centroid(d, t, p), ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut scores: Vec<CharScore> = (0..truth.len()).map(CharScore::unmatched).collect();
    let mut used = vec![false; detected.len()];
    for (jc, ti, di) in pairs {
        if scores[ti].matched || used[di] {
            continue;
        }
        used[di] = true;
        scores[ti] = CharScore {
            jaccard: jaccard(&detected[di], &truth[ti]),
            delta_c: centroid_distance(&detected[di], &truth[ti]),
            jc,
            truth_index: ti,
            matched: true,
            detection: Some(di),
        };
    }
    scores
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateScore {
    pub char_scores: Vec<CharScore>,
    /// Lowest character JC; 0 on any count mismatch or unmatched character.
    pub plate_jc: f64,
}

pub fn plate_score(detected: &Segmentation, truth: &[BBox], p: &JcParams) -> PlateScore {
    plate_score_boxes(detected.boxes(), truth, p)
}

pub fn plate_score_boxes(detected: &[BBox], truth: &[BBox], p: &JcParams) -> PlateScore {
    let char_scores = match_boxes(detected, truth, p);
    let plate_jc = if detected.len() != truth.len() || char_scores.iter().any(|s| !s.matched) {
        0.0
    } else {
        char_scores.iter().map(|s| s.jc).fold(f64::INFINITY, f64::min)
    };
    PlateScore {
        char_scores,
        plate_jc: if plate_jc.is_finite() { plate_jc } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::SegmenterId;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn pixels(b: &BBox) -> BTreeSet<(usize, usize)> {
        (b.y..b.bottom())
            .flat_map(|y| (b.x..b.right()).map(move |x| (x, y)))
            .collect()
    }

    /// Rasterized intersection over union.
    fn jaccard_oracle(a: &BBox, b: &BBox) -> f64 {
        let (pa, pb) = (pixels(a), pixels(b));
        let inter = pa.intersection(&pb).count();
        let union = pa.union(&pb).count();
        inter as f64 / union as f64
    }

    fn truth7() -> Vec<BBox> {
        (0..7).map(|i| BBox::new(5 + 16 * i, 10, 10, 20)).collect()
    }

    #[test]
    fn jaccard_values() {
        let a = BBox::new(0, 0, 10, 20);
        let b = BBox::new(2, 0, 10, 20);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &BBox::new(10, 0, 5, 5)), 0.0);
        assert_eq!(jaccard(&a, &b), jaccard_oracle(&a, &b));
        assert!((jaccard(&a, &b) - 160.0 / 240.0).abs() < 1e-15);
    }

    #[test]
    fn centroid_values() {
        let a = BBox::new(0, 0, 10, 20);
        assert_eq!(centroid_distance(&a, &a), 0.0);
        assert_eq!(centroid_distance(&a, &BBox::new(2, 0, 10, 20)), 2.0);
        // centers (5, 5) and (8, 9)
        assert_eq!(
            centroid_distance(&BBox::new(0, 0, 10, 10), &BBox::new(6, 7, 4, 4)),
            5.0
        );
    }

    #[test]
    fn jc_values() {
        let p = JcParams::default();
        let outer = BBox::new(0, 0, 10, 10);
        let inner = BBox::new(2, 2, 6, 6);
        assert_eq!(jaccard(&outer, &inner), 0.36);
        assert_eq!(jaccard_centroid(&outer, &inner, &p), 0.36);

        let a = BBox::new(0, 0, 10, 20);
        let b = BBox::new(2, 0, 10, 20);
        let expected = jaccard_oracle(&a, &b) / (3.0f64 * 2.0).max(1.0);
        assert!((jaccard_centroid(&a, &b, &p) - expected).abs() < 1e-15);
        assert!((jaccard_centroid(&a, &b, &p) - 0.1111).abs() < 1e-4);

        // C * dc = 0.25 * 2 = 0.5 < 1
        let small = JcParams::new(0.25).unwrap();
        assert_eq!(jaccard_centroid(&a, &b, &small), jaccard(&a, &b));
    }

    #[test]
    fn params_reject_non_positive() {
        assert!(JcParams::new(0.0).is_none());
        assert!(JcParams::new(-1.0).is_none());
        assert!(JcParams::new(f64::NAN).is_none());
        assert_eq!(JcParams::default().c(), 3.0);
    }

    #[test]
    fn match_identity_and_empty() {
        let t = truth7();
        let p = JcParams::default();
        let s = match_boxes(&t, &t, &p);
        assert!(s.iter().all(|c| c.matched && c.jc == 1.0));
        let s = match_boxes(&[], &t, &p);
        assert!(s.iter().all(|c| !c.matched && c.jc == 0.0 && c.delta_c.is_infinite()));
        assert_eq!(s.iter().map(|c| c.truth_index).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Best total JC over all 7! assignments.
    fn exhaustive_best(det: &[BBox], truth: &[BBox], p: &JcParams) -> (f64, Vec<usize>) {
        permutations(truth.len())
            .into_iter()
            .map(|perm| {
                let total: f64 = perm
                    .iter()
                    .enumerate()
                    .map(|(ti, &di)| jaccard_centroid(&det[di], &truth[ti], p))
                    .sum();
                (total, perm)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
    }

    #[test]
    fn uniform_offset_matches_positionally() {
        let t = truth7();
        let det: Vec<BBox> = t.iter().map(|b| b.translate(2, 0).unwrap()).collect();
        let p = JcParams::default();
        let s = match_boxes(&det, &t, &p);
        let (best, perm) = exhaustive_best(&det, &t, &p);
        assert_eq!(perm, (0..7).collect::<Vec<_>>());
        assert!(s.iter().enumerate().all(|(i, c)| c.detection == Some(i)));
        let greedy: f64 = s.iter().map(|c| c.jc).sum();
        assert!((greedy - best).abs() < 1e-12);
    }

    #[test]
    fn plate_scores() {
        let t = truth7();
        let p = JcParams::default();
        let perfect = Segmentation::new(t.clone(), SegmenterId::IterativeProposed);
        assert_eq!(plate_score(&perfect, &t, &p).plate_jc, 1.0);

        let six = Segmentation::new(t[..6].to_vec(), SegmenterId::Ccl);
        assert_eq!(plate_score(&six, &t, &p).plate_jc, 0.0);

        // with C small enough that JC == J, build boxes with chosen J values
        let weak = JcParams::new(1e-3).unwrap();
        let targets: [f64; 7] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.41];
        let tall: Vec<BBox> = (0..7).map(|i| BBox::new(200 * i, 0, 100, 1)).collect();
        let det: Vec<BBox> = targets
            .iter()
            .enumerate()
            .map(|(i, j)| BBox::new(200 * i, 0, (100.0 * j).round() as usize, 1))
            .collect();
        let score = plate_score_boxes(&det, &tall, &weak);
        let min = score.char_scores.iter().map(|c| c.jc).fold(1.0, f64::min);
        assert_eq!(min, 0.41);
        assert!((score.plate_jc - 0.41).abs() < 1e-12);
    }

    #[test]
    fn plateau_versus_peak() {
        // 6x6 truth inside 10x10 windows slid diagonally across it
        let truth = BBox::new(10, 10, 6, 6);
        let p = JcParams::default();
        let mut jac = Vec::new();
        let mut jc = Vec::new();
        for s in 0..=12usize {
            let win = BBox::new(4 + s, 4 + s, 10, 10);
            jac.push((win.contains_box(&truth), jaccard(&win, &truth)));
            jc.push(jaccard_centroid(&win, &truth, &p));
        }
        let inside: Vec<f64> = jac.iter().filter(|j| j.0).map(|j| j.1).collect();
        assert!(inside.len() >= 2);
        assert!(inside.iter().all(|&v| v == inside[0]));
        let max = jc.iter().cloned().fold(f64::MIN, f64::max);
        let argmax: Vec<usize> = (0..jc.len()).filter(|&i| jc[i] == max).collect();
        // aligned when window origin is 8: s = 4
        assert_eq!(argmax, vec![4]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0usize..40, 0usize..40, 1usize..25, 1usize..25).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn jaccard_equals_pixel_oracle(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(jaccard(&a, &b), jaccard_oracle(&a, &b));
        }

        #[test]
        fn jc_law_and_symmetry(a in arb_box(), b in arb_box(), c in 0.05f64..10.0) {
            let p = JcParams::new(c).unwrap();
            let j = jaccard(&a, &b);
            let jc = jaccard_centroid(&a, &b, &p);
            prop_assert!(0.0 <= jc && jc <= j && j <= 1.0);
            prop_assert_eq!(jc == j, j == 0.0 || c * centroid_distance(&a, &b) <= 1.0);
            prop_assert_eq!(j, jaccard(&b, &a));
            prop_assert_eq!(centroid_distance(&a, &b), centroid_distance(&b, &a));
            prop_assert_eq!(jc, jaccard_centroid(&b, &a, &p));
        }

        #[test]
        fn greedy_is_optimal_when_each_detection_meets_one_truth(
            jitter in proptest::collection::vec((-3isize..=3, -3isize..=3, 0usize..4, 0usize..4), 7)
        ) {
            let truth = truth7();
            let det: Vec<BBox> = truth
                .iter()
                .zip(&jitter)
                .map(|(t, &(dx, dy, gw, gh))| {
                    let b = t.translate(dx, dy).unwrap();
                    BBox::new(b.x, b.y, b.w + gw, b.h + gh)
                })
                .collect();
            let disjoint = det.windows(2).all(|w| w[0].right() <= w[1].x);
            let single = det.iter().all(|d| truth.iter().filter(|t| jaccard(d, t) > 0.0).count() <= 1);
            prop_assume!(disjoint && single);
            let p = JcParams::default();
            let greedy: f64 = match_boxes(&det, &truth, &p).iter().map(|c| c.jc).sum();
            let (best, _) = exhaustive_best(&det, &truth, &p);
            prop_assert!((greedy - best).abs() < 1e-12);
        }
    }
}
