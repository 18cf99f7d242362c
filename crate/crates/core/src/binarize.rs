//! Global thresholding: fixed level, Otsu, and Iterative Global Thresholding
//! (IGT) in its global and hybrid (windowed) variants.
//!
//! Polarity is dark ink on a light plate: foreground is `sample < t`.

use thiserror::Error;

use crate::raster::{BBox, BinaryImage, GrayImage};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BinarizeError {
    #[error("image has a single intensity level; no threshold separates it")]
    Degenerate,
    #[error("invalid IGT parameters: {0}")]
    InvalidParams(String),
}

/// Foreground wherever `sample < t`. `t = 0` yields an empty mask.
pub fn threshold_at(img: &GrayImage, t: u8) -> BinaryImage {
    BinaryImage::new(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| v < t).collect(),
    )
    .expect("dimensions preserved")
}

/// Otsu level `t` in `1..=255`, to be used as `threshold_at(img, t)`.
///
/// The classes are `{v < t}` and `{v >= t}`. Among levels with maximal
/// between-class variance the lowest is returned.
pub fn otsu_level(img: &GrayImage) -> Result<u8, BinarizeError> {
    otsu_from_histogram(&img.histogram())
}

pub(crate) fn otsu_from_histogram(hist: &[u64; 256]) -> Result<u8, BinarizeError> {
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(BinarizeError::Degenerate);
    }
    let sum_all: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    // Between-class variance times N^2 is (S0*n1 - S1*n0)^2 / (n0*n1); the
    // difference is an exact integer in f64 for any realistic image size.
    let mut best_level = 0u8;
    let mut best = -1.0f64;
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 1..=255usize {
        n0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = sum_all - s0;
        let diff = s0 as f64 * n1 as f64 - s1 as f64 * n0 as f64;
        let score = diff * diff / (n0 as f64 * n1 as f64);
        if score > best {
            best = score;
            best_level = t as u8;
        }
    }
    Ok(best_level)
}

/// Controls for [`igt_global`] and [`igt_hybrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgtParams {
    /// Stop once the mean intensity moves less than this (normalized units).
    pub epsilon: f64,
    pub max_iters: usize,
    /// Side of the square window used by the hybrid pass.
    pub window: usize,
    /// Noise multiplier: a window is reprocessed when `f > m + k*s`.
    pub k: f64,
}

impl Default for IgtParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_iters: 50,
            window: 16,
            k: 1.0,
        }
    }
}

impl IgtParams {
    pub fn validate(&self) -> Result<(), BinarizeError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(BinarizeError::InvalidParams("epsilon must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(BinarizeError::InvalidParams("max_iters must be >= 1".into()));
        }
        if self.window < 4 {
            return Err(BinarizeError::InvalidParams("window must be >= 4".into()));
        }
        if self.k.is_nan() || self.k <= 0.0 {
            return Err(BinarizeError::InvalidParams("k must be > 0".into()));
        }
        Ok(())
    }
}

const IGT_DEGENERATE: f64 = 1e-6;
const IGT_CUT: f64 = 0.5;

/// Outcome of running the IGT iteration on a sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct IgtTrace {
    /// Final normalized samples, `None` when the degenerate path was taken.
    pub values: Option<Vec<f64>>,
    /// Mean intensity `T_i` at the start of each iteration.
    pub means: Vec<f64>,
}

/// Runs the two IGT steps until the mean settles.
///
/// Each iteration shifts the histogram so the mean maps to white
/// (`1 - T + I`, clipped at 1) and then stretches it so the minimum maps to
/// black (`1 - (1 - I_f) / (1 - E)`).
pub fn igt_iterate(samples: &[f64], p: &IgtParams) -> IgtTrace {
    let mut values = samples.to_vec();
    let mut means = Vec::new();
    if values.is_empty() {
        return IgtTrace {
            values: None,
            means,
        };
    }
    let n = values.len() as f64;
    let mut prev: Option<f64> = None;
    for _ in 0..p.max_iters {
        let mean = values.iter().sum::<f64>() / n;
        if let Some(prev) = prev {
            if (mean - prev).abs() < p.epsilon {
                break;
            }
        }
        means.push(mean);
        prev = Some(mean);

        let mut min = f64::INFINITY;
        for v in values.iter_mut() {
            *v = (1.0 - mean + *v).min(1.0);
            min = min.min(*v);
        }
        let span = 1.0 - min;
        if span < IGT_DEGENERATE {
            return IgtTrace {
                values: None,
                means,
            };
        }
        for v in values.iter_mut() {
            *v = 1.0 - (1.0 - *v) / span;
        }
    }
    IgtTrace {
        values: Some(values),
        means,
    }
}

fn region_samples(img: &GrayImage, r: BBox) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.area());
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            out.push(img.normalized(x, y));
        }
    }
    out
}

/// Global IGT. A blank or constant image takes the degenerate path and
/// yields an empty mask.
pub fn igt_global(img: &GrayImage, p: &IgtParams) -> Result<BinaryImage, BinarizeError> {
    p.validate()?;
    let trace = igt_iterate(&region_samples(img, img.full_box()), p);
    Ok(match trace.values {
        Some(v) => BinaryImage::new(
            img.width(),
            img.height(),
            v.iter().map(|&x| x < IGT_CUT).collect(),
        )
        .expect("dimensions preserved"),
        None => BinaryImage::empty(img.width(), img.height()),
    })
}

/// Window origins along one axis: stride `window / 2`, plus a final window
/// flush with the far edge when the stride does not land there.
fn window_starts(len: usize, window: usize) -> Vec<usize> {
    let stride = (window / 2).max(1);
    let mut starts: Vec<usize> = (0..=len - window).step_by(stride).collect();
    if *starts.last().expect("len >= window") != len - window {
        starts.push(len - window);
    }
    starts
}

/// All hybrid-pass windows in row-major order.
pub fn hybrid_windows(width: usize, height: usize, window: usize) -> Vec<BBox> {
    let xs = window_starts(width, window);
    window_starts(height, window)
        .into_iter()
        .flat_map(|y| xs.iter().map(move |&x| BBox::new(x, y, window, window)))
        .collect()
}

/// Windows whose foreground count exceeds `m + k*s` over all windows.
pub fn noisy_windows(mask: &BinaryImage, windows: &[BBox], k: f64) -> Vec<usize> {
    if windows.is_empty() {
        return Vec::new();
    }
    let counts: Vec<f64> = windows
        .iter()
        .map(|w| {
            let mut c = 0usize;
            for y in w.y..w.bottom() {
                for x in w.x..w.right() {
                    c += mask.get(x, y) as usize;
                }
            }
            c as f64
        })
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let limit = mean + k * var.sqrt();
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > limit)
        .map(|(i, _)| i)
        .collect()
}

/// Hybrid IGT: global pass, then local re-runs on noisy windows.
///
/// Where selected windows overlap, the lower-indexed window keeps ownership
/// of the shared pixels.
pub fn igt_hybrid(img: &GrayImage, p: &IgtParams) -> Result<BinaryImage, BinarizeError> {
    p.validate()?;
    let (w, h) = (img.width(), img.height());
    if p.window > w.min(h) {
        return Err(BinarizeError::InvalidParams(format!(
            "window {} exceeds image side {}",
            p.window,
            w.min(h)
        )));
    }
    let mut mask = igt_global(img, p)?;
    if !p.k.is_finite() {
        return Ok(mask);
    }
    let windows = hybrid_windows(w, h, p.window);
    let selected = noisy_windows(&mask, &windows, p.k);
    if selected.is_empty() {
        return Ok(mask);
    }
    let mut owned = vec![false; w * h];
    for idx in selected {
        let r = windows[idx];
        let local = igt_iterate(&region_samples(img, r), p).values;
        for (i, (x, y)) in (r.y..r.bottom())
            .flat_map(|y| (r.x..r.right()).map(move |x| (x, y)))
            .enumerate()
        {
            if owned[y * w + x] {
                continue;
            }
            owned[y * w + x] = true;
            let fg = local.as_ref().is_some_and(|v| v[i] < IGT_CUT);
            mask.set(x, y, fg);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half_and_half(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, _| if x < w / 2 { 0 } else { 255 })
    }

    /// Exhaustive Otsu in exact integer arithmetic straight from the pixels.
    fn otsu_oracle(img: &GrayImage) -> Option<u8> {
        let px: Vec<u64> = img.data().iter().map(|&v| v as u64).collect();
        let mut best: Option<(u8, u128, u128)> = None; // (t, num, den)
        for t in 1..=255u64 {
            let (n0, s0) = px
                .iter()
                .filter(|&&v| v < t)
                .fold((0u64, 0u64), |(n, s), &v| (n + 1, s + v));
            let (n1, s1) = px
                .iter()
                .filter(|&&v| v >= t)
                .fold((0u64, 0u64), |(n, s), &v| (n + 1, s + v));
            if n0 == 0 || n1 == 0 {
                continue;
            }
            let d = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
            let num = d * d;
            let den = n0 as u128 * n1 as u128;
            match best {
                Some((_, bn, bd)) if num * bd <= bn * den => {}
                _ => best = Some((t as u8, num, den)),
            }
        }
        best.map(|b| b.0)
    }

    #[test]
    fn threshold_uniform_white_is_empty() {
        let img = GrayImage::filled(8, 4, 255);
        for t in [0u8, 1, 100, 255] {
            assert!(threshold_at(&img, t).is_empty());
        }
    }

    #[test]
    fn threshold_bimodal() {
        let img = half_and_half(10, 3);
        let m = threshold_at(&img, 128);
        for y in 0..3 {
            for x in 0..10 {
                assert_eq!(m.get(x, y), x < 5);
            }
        }
    }

    #[test]
    fn threshold_top_level_matches_pixel_oracle() {
        let img = GrayImage::from_fn(23, 11, |x, y| ((x * 37 + y * 101) % 256) as u8);
        let m = threshold_at(&img, 255);
        for y in 0..11 {
            for x in 0..23 {
                assert_eq!(m.get(x, y), img.get(x, y) != 255);
            }
        }
    }

    #[test]
    fn otsu_half_and_half_returns_lowest_separating_level() {
        let img = half_and_half(16, 4);
        assert_eq!(otsu_oracle(&img), Some(1));
        assert_eq!(otsu_level(&img), Ok(1));
    }

    #[test]
    fn otsu_constant_is_degenerate() {
        assert_eq!(
            otsu_level(&GrayImage::filled(5, 5, 77)),
            Err(BinarizeError::Degenerate)
        );
    }

    #[test]
    fn otsu_two_gaussians() {
        // deterministic histogram of two Gaussians (means 60/190, sigma 10)
        let mut data = Vec::new();
        for v in 0..256usize {
            let g = |mu: f64| {
                let z = (v as f64 - mu) / 10.0;
                (-0.5 * z * z).exp()
            };
            let count = (2000.0 * (g(60.0) + g(190.0))).round() as usize;
            data.extend(std::iter::repeat_n(v as u8, count));
        }
        let n = data.len();
        let img = GrayImage::new(n, 1, data).unwrap();
        let level = otsu_level(&img).unwrap();
        assert_eq!(Some(level), otsu_oracle(&img));
        assert!((100..=150).contains(&level), "level {level}");
    }

    #[test]
    fn igt_constant_image_degenerates_to_empty() {
        let img = GrayImage::filled(6, 6, 120);
        assert!(igt_global(&img, &IgtParams::default()).unwrap().is_empty());
        let white = GrayImage::filled(6, 6, 255);
        assert!(igt_global(&white, &IgtParams::default()).unwrap().is_empty());
    }

    #[test]
    fn igt_four_pixel_hand_iteration() {
        // one ink pixel at 0.1, three background pixels at 0.9
        // round 1: T = 0.7, I_f = {0.4, 1, 1, 1}, E = 0.4, I_l = {0, 1, 1, 1}
        // round 2: T = 0.75, I_f = {0.25, 1, 1, 1}, E = 0.25, I_l = {0, 1, 1, 1}
        // round 3: T = 0.75, no change -> stop
        let trace = igt_iterate(&[0.1, 0.9, 0.9, 0.9], &IgtParams::default());
        assert_eq!(trace.means.len(), 2);
        assert!((trace.means[0] - 0.7).abs() < 1e-12);
        assert!((trace.means[1] - 0.75).abs() < 1e-12);
        let v = trace.values.unwrap();
        assert!(v[0].abs() < 1e-12);
        assert!(v[1..].iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn igt_clean_plate_recovers_ink_exactly() {
        let ink = |x: usize, y: usize| (3..6).contains(&x) && (2..9).contains(&y) || (x == 12 && y > 1);
        let img = GrayImage::from_fn(20, 12, |x, y| if ink(x, y) { 26 } else { 230 });
        let m = igt_global(&img, &IgtParams::default()).unwrap();
        assert_eq!(m, BinaryImage::from_fn(20, 12, ink));
    }

    #[test]
    fn igt_respects_iteration_cap() {
        let p = IgtParams {
            epsilon: 1e-300,
            max_iters: 3,
            ..IgtParams::default()
        };
        let img = GrayImage::from_fn(9, 9, |x, y| (x * 20 + y * 3) as u8);
        let trace = igt_iterate(&region_samples(&img, img.full_box()), &p);
        assert!(trace.means.len() <= 3);
    }

    #[test]
    fn igt_rejects_bad_params() {
        let img = GrayImage::filled(20, 20, 9);
        for p in [
            IgtParams { epsilon: 0.0, ..IgtParams::default() },
            IgtParams { max_iters: 0, ..IgtParams::default() },
            IgtParams { window: 3, ..IgtParams::default() },
            IgtParams { k: -1.0, ..IgtParams::default() },
        ] {
            assert!(matches!(igt_global(&img, &p), Err(BinarizeError::InvalidParams(_))));
        }
        let p = IgtParams { window: 21, ..IgtParams::default() };
        assert!(igt_hybrid(&img, &p).is_err());
    }

    #[test]
    fn window_layout_covers_image() {
        let wins = hybrid_windows(40, 20, 16);
        // x starts 0, 8, 16, 24 ; y starts 0, 4 (flush)
        assert_eq!(wins.len(), 4 * 2);
        assert_eq!(wins.last(), Some(&BBox::new(24, 4, 16, 16)));
        let mut covered = BinaryImage::empty(40, 20);
        for w in &wins {
            for y in w.y..w.bottom() {
                for x in w.x..w.right() {
                    covered.set(x, y, true);
                }
            }
        }
        assert_eq!(covered.count(), 800);
    }

    #[test]
    fn hybrid_equals_global_on_homogeneous_pattern() {
        // period-4 dots: every 16x16 window holds the same number of ink pixels
        let img = GrayImage::from_fn(48, 32, |x, y| if x % 4 == 1 && y % 4 == 2 { 20 } else { 220 });
        let p = IgtParams::default();
        let global = igt_global(&img, &p).unwrap();
        let wins = hybrid_windows(48, 32, p.window);
        assert!(noisy_windows(&global, &wins, p.k).is_empty());
        assert_eq!(igt_hybrid(&img, &p).unwrap(), global);
    }

    #[test]
    fn hybrid_selects_blot_window() {
        let mut img = GrayImage::from_fn(64, 32, |x, y| if x % 8 == 3 && y % 8 == 3 { 20 } else { 220 });
        for y in 18..30 {
            for x in 42..56 {
                img.set(x, y, 40);
            }
        }
        let p = IgtParams::default();
        let global = igt_global(&img, &p).unwrap();
        let wins = hybrid_windows(64, 32, p.window);
        // brute force f, m, s
        let f: Vec<f64> = wins
            .iter()
            .map(|w| {
                (w.y..w.bottom())
                    .flat_map(|y| (w.x..w.right()).map(move |x| (x, y)))
                    .filter(|&(x, y)| global.get(x, y))
                    .count() as f64
            })
            .collect();
        let m = f.iter().sum::<f64>() / f.len() as f64;
        let s = (f.iter().map(|v| (v - m).powi(2)).sum::<f64>() / f.len() as f64).sqrt();
        let expected: Vec<usize> = (0..f.len()).filter(|&i| f[i] > m + s).collect();
        let selected = noisy_windows(&global, &wins, 1.0);
        assert_eq!(selected, expected);
        let blot = BBox::new(42, 18, 14, 12);
        assert!(!selected.is_empty());
        assert!(selected.iter().all(|&i| wins[i].intersects(&blot)));
    }

    #[test]
    fn hybrid_with_huge_k_is_global() {
        let img = GrayImage::from_fn(40, 24, |x, y| ((x * x + 3 * y) % 256) as u8);
        for k in [1e12, f64::INFINITY] {
            let p = IgtParams { k, ..IgtParams::default() };
            assert_eq!(igt_hybrid(&img, &p).unwrap(), igt_global(&img, &p).unwrap());
        }
    }

    proptest! {
        #[test]
        fn threshold_is_monotone(data in proptest::collection::vec(any::<u8>(), 48), t1 in any::<u8>(), t2 in any::<u8>()) {
            let img = GrayImage::new(8, 6, data).unwrap();
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            prop_assert!(threshold_at(&img, lo).is_subset_of(&threshold_at(&img, hi)));
        }

        #[test]
        fn otsu_matches_oracle_and_is_duplication_invariant(data in proptest::collection::vec(any::<u8>(), 2..60)) {
            let n = data.len();
            let img = GrayImage::new(n, 1, data.clone()).unwrap();
            let level = otsu_level(&img);
            prop_assert_eq!(level.clone().ok(), otsu_oracle(&img));
            let doubled = GrayImage::from_fn(2 * n, 1, |x, _| data[x % n]);
            prop_assert_eq!(otsu_level(&doubled), level);
        }

        #[test]
        fn igt_terminates_within_cap(data in proptest::collection::vec(any::<u8>(), 64), cap in 1usize..8) {
            let img = GrayImage::new(8, 8, data).unwrap();
            let p = IgtParams { epsilon: 1e-12, max_iters: cap, ..IgtParams::default() };
            let trace = igt_iterate(&region_samples(&img, img.full_box()), &p);
            prop_assert!(trace.means.len() <= cap);
        }
    }
}
