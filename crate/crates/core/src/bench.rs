//! Dataset loading, the 40/20/40 vehicle split, evaluation reports, C
//! tuning and the OCR-rank experiment.
//!
//! # Annotation files
//!
//! One `<name>.txt` next to each `<name>.png`:
//!
//! ```text
//! text ABC1234
//! position_plate <x> <y> <w> <h>
//! char 1 <x> <y> <w> <h>
//! ...
//! char 7 <x> <y> <w> <h>
//! ```
//!
//! Coordinates are in frame pixels. The reader also accepts `key: value`
//! lines, `plate` as an alias of `text` (a hyphen in the text is ignored)
//! and skips the vehicle metadata keys `camera`, `position_vehicle`,
//! `type`, `make`, `model` and `year`.
//!
//! # Output files
//!
//! - `summary.csv`: `segmenter,plates,characters,matched,mean_jaccard,mean_delta_c,mean_jc,mean_plate_jc,char_rate_at_0.4,plate_rate_at_0.4`
//! - `char_curve_<key>.csv`, `plate_curve_<key>.csv`: `threshold,fraction`
//! - `ocr_rank_curve.csv`: `top_percent,accuracy_by_jaccard,accuracy_by_jc`
//! - `tune_c.csv`: `c,accuracy`

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::metric::{jaccard, match_boxes, plate_score_boxes, JcParams};
use crate::ocr::{self, ClassSet, HogParams, OcrError, OcrModel};
use crate::raster::{self, BBox, GrayImage, RasterError};
use crate::segment::{run_segmenter, SegmentConfig, SegmenterId, Segmentation};
use crate::synth::{is_plate_text, GeneratedPlate};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Validation { path: PathBuf, msg: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Ocr(#[from] OcrError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlateAnnotation {
    pub image_ref: PathBuf,
    pub plate_text: String,
    /// Frame coordinates.
    pub plate_box: BBox,
    /// Frame coordinates, left to right.
    pub char_boxes: Vec<BBox>,
    pub vehicle_id: String,
}

const METADATA_KEYS: [&str; 6] = ["camera", "position_vehicle", "type", "make", "model", "year"];

/// Parses annotation text. `path` only labels errors.
pub fn parse_annotation(text: &str, path: &Path) -> Result<PlateAnnotation, BenchError> {
    let parse_err = |line: usize, msg: String| BenchError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let nums = |line: usize, toks: &[&str]| -> Result<BBox, BenchError> {
        if toks.len() != 4 {
            return Err(parse_err(line, format!("expected 4 numbers, found {}", toks.len())));
        }
        let v: Vec<usize> = toks
            .iter()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(line, format!("bad number {t:?}"))))
            .collect::<Result<_, _>>()?;
        Ok(BBox::new(v[0], v[1], v[2], v[3]))
    };

    let mut plate_text = None;
    let mut plate_box = None;
    let mut chars: BTreeMap<usize, BBox> = BTreeMap::new();
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let cleaned = raw.replace(':', " ");
        let toks: Vec<&str> = cleaned.split_whitespace().collect();
        let Some(&key) = toks.first() else { continue };
        match key {
            "text" | "plate" => {
                if toks.len() != 2 {
                    return Err(parse_err(line, "expected one plate text token".into()));
                }
                let t = toks[1].replace('-', "");
                if !is_plate_text(&t) {
                    return Err(parse_err(line, format!("plate text {:?} is not 3 letters + 4 digits", toks[1])));
                }
                plate_text = Some(t);
            }
            "position_plate" => plate_box = Some(nums(line, &toks[1..])?),
            "char" => {
                let idx: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .filter(|i| (1..=7).contains(i))
                    .ok_or_else(|| parse_err(line, "character index must be 1..7".into()))?;
                let b = nums(line, &toks[2..])?;
                if chars.insert(idx, b).is_some() {
                    return Err(parse_err(line, format!("duplicate character {idx}")));
                }
            }
            k if METADATA_KEYS.contains(&k) => {}
            k => return Err(parse_err(line, format!("unknown key {k:?}"))),
        }
    }
    let plate_text = plate_text.ok_or_else(|| parse_err(last, "missing plate text".into()))?;
    let plate_box = plate_box.ok_or_else(|| parse_err(last, "missing position_plate".into()))?;
    if chars.len() != 7 {
        return Err(parse_err(last, format!("expected 7 character boxes, found {}", chars.len())));
    }
    Ok(PlateAnnotation {
        image_ref: PathBuf::new(),
        plate_text,
        plate_box,
        char_boxes: chars.into_values().collect(),
        vehicle_id: String::new(),
    })
}

/// Checks the boxes against a `width x height` frame.
pub fn validate_annotation(a: &PlateAnnotation, width: usize, height: usize, path: &Path) -> Result<(), BenchError> {
    let err = |msg: String| BenchError::Validation {
        path: path.to_path_buf(),
        msg,
    };
    if a.plate_box.area() == 0 || !a.plate_box.fits_in(width, height) {
        return Err(err(format!("plate box {:?} outside {width}x{height} frame", a.plate_box)));
    }
    for (i, b) in a.char_boxes.iter().enumerate() {
        if b.area() == 0 || !a.plate_box.contains_box(b) {
            return Err(err(format!("char {} box {b:?} outside plate box {:?}", i + 1, a.plate_box)));
        }
    }
    Ok(())
}

/// Reads `path` and its sibling `.png`, validating boxes against the image.
pub fn load_annotation(path: &Path) -> Result<PlateAnnotation, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let mut a = parse_annotation(&text, path)?;
    let png = path.with_extension("png");
    let (w, h) = raster::image_dimensions(&png)?;
    validate_annotation(&a, w, h, path)?;
    a.vehicle_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    a.image_ref = png;
    Ok(a)
}

pub fn format_annotation(a: &PlateAnnotation) -> String {
    let b = a.plate_box;
    let mut s = format!("text {}\nposition_plate {} {} {} {}\n", a.plate_text, b.x, b.y, b.w, b.h);
    for (i, c) in a.char_boxes.iter().enumerate() {
        s.push_str(&format!("char {} {} {} {} {}\n", i + 1, c.x, c.y, c.w, c.h));
    }
    s
}

pub fn write_annotation(a: &PlateAnnotation, path: &Path) -> Result<(), BenchError> {
    std::fs::write(path, format_annotation(a)).map_err(|e| BenchError::io(path, e))
}

/// `name,vehicle_id` rows with a header.
pub fn write_tracks(rows: &[(String, String)], path: &Path) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "vehicle_id"])?;
    for (n, v) in rows {
        w.write_record([n, v])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_tracks(path: &Path) -> Result<HashMap<String, String>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        match (rec.get(0), rec.get(1)) {
            (Some(n), Some(v)) => {
                out.insert(n.to_string(), v.to_string());
            }
            _ => {
                return Err(BenchError::Parse {
                    path: path.to_path_buf(),
                    line: rec.position().map_or(0, |p| p.line() as usize),
                    msg: "expected name,vehicle_id".into(),
                })
            }
        }
    }
    Ok(out)
}

fn collect_annotation_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), BenchError> {
    let entries = std::fs::read_dir(dir).map_err(|e| BenchError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| BenchError::io(dir, e))?.path();
        if path.is_dir() {
            collect_annotation_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "txt") {
            if path.with_extension("png").is_file() {
                out.push(path);
            } else {
                log::warn!("skipping {}: no sibling png", path.display());
            }
        }
    }
    Ok(())
}

/// Loads every `<name>.txt` with a sibling `<name>.png` under `dir`, sorted
/// by path. Vehicle ids come from `tracks.csv` when present, otherwise from
/// the sub-directory holding the frame, otherwise from the file name.
pub fn load_dataset(dir: &Path) -> Result<Vec<PlateAnnotation>, BenchError> {
    let mut files = Vec::new();
    collect_annotation_files(dir, &mut files)?;
    files.sort();
    let tracks_path = dir.join("tracks.csv");
    let tracks = if tracks_path.is_file() {
        Some(read_tracks(&tracks_path)?)
    } else {
        None
    };
    let mut out: Vec<PlateAnnotation> = files.par_iter().map(|f| load_annotation(f)).collect::<Result<_, _>>()?;
    for (a, f) in out.iter_mut().zip(&files) {
        let stem = a.vehicle_id.clone();
        let parent = f.parent().filter(|p| *p != dir).and_then(|p| p.strip_prefix(dir).ok());
        a.vehicle_id = match (&tracks, parent) {
            (Some(t), _) => t.get(&stem).cloned().unwrap_or(stem),
            (None, Some(p)) => p.to_string_lossy().into_owned(),
            (None, None) => stem,
        };
    }
    Ok(out)
}

/// Disjoint vehicle partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// Frames of each partition, in input order.
    pub fn partition<'a>(&self, plates: &'a [PlateAnnotation]) -> [Vec<&'a PlateAnnotation>; 3] {
        let sets: Vec<HashSet<&str>> = [&self.train, &self.validation, &self.test]
            .iter()
            .map(|v| v.iter().map(String::as_str).collect())
            .collect();
        let mut out = [Vec::new(), Vec::new(), Vec::new()];
        for p in plates {
            if let Some(k) = sets.iter().position(|s| s.contains(p.vehicle_id.as_str())) {
                out[k].push(p);
            }
        }
        out
    }
}

pub const MIN_VEHICLES: usize = 5;

/// Shuffles distinct vehicles with `seed` and cuts 40/20/40, rounding the
/// first two parts down.
pub fn split_dataset(plates: &[PlateAnnotation], seed: u64) -> Result<Split, BenchError> {
    let mut vehicles: Vec<String> = plates
        .iter()
        .map(|p| p.vehicle_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = vehicles.len();
    if n < MIN_VEHICLES {
        return Err(BenchError::Protocol(format!("need at least {MIN_VEHICLES} vehicles, found {n}")));
    }
    vehicles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 2 / 5;
    let n_val = n / 5;
    let test = vehicles.split_off(n_train + n_val);
    let validation = vehicles.split_off(n_train);
    Ok(Split {
        train: vehicles,
        validation,
        test,
    })
}

/// A plate crop with truth boxes in crop coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateSample {
    pub name: String,
    pub text: String,
    pub plate: GrayImage,
    pub truth: Vec<BBox>,
}

impl PlateSample {
    pub fn from_generated(p: &GeneratedPlate) -> Self {
        let name = p
            .annotation
            .image_ref
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        Self::from_frame(name, &p.image, &p.annotation).expect("generator output is consistent")
    }

    pub fn from_frame(name: String, frame: &GrayImage, a: &PlateAnnotation) -> Result<Self, RasterError> {
        let plate = frame.crop(a.plate_box)?;
        let (ox, oy) = (a.plate_box.x, a.plate_box.y);
        let truth = a.char_boxes.iter().map(|b| BBox::new(b.x - ox, b.y - oy, b.w, b.h)).collect();
        Ok(Self {
            name,
            text: a.plate_text.clone(),
            plate,
            truth,
        })
    }

    /// Truth label of character `i`.
    pub fn label(&self, i: usize) -> char {
        self.text.as_bytes()[i] as char
    }
}

/// Loads and crops the frames. `invert` flips polarity for light-on-dark
/// plates.
pub fn load_samples(plates: &[&PlateAnnotation], invert: bool) -> Result<Vec<PlateSample>, BenchError> {
    plates
        .par_iter()
        .map(|a| {
            let mut frame = raster::load_gray(&a.image_ref)?;
            if invert {
                frame = frame.inverted();
            }
            let name = a.image_ref.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            Ok(PlateSample::from_frame(name, &frame, a)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fraction: f64,
}

/// Thresholds 0.05, 0.10, ..., 1.00.
pub fn curve_thresholds() -> impl Iterator<Item = f64> {
    (1..=20).map(|k| k as f64 / 20.0)
}

/// JC level counted as a satisfactory segmentation in the report.
pub const SATISFACTORY_JC: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub segmenter: SegmenterId,
    pub plates: usize,
    /// Truth characters, `7 * plates`.
    pub characters: usize,
    pub matched: usize,
    /// Unmatched characters count as 0.
    pub mean_jaccard: f64,
    /// Over matched characters only; 0 when nothing matched.
    pub mean_delta_c: f64,
    /// Unmatched characters count as 0.
    pub mean_jc: f64,
    pub mean_plate_jc: f64,
    pub char_curve: Vec<CurvePoint>,
    pub plate_curve: Vec<CurvePoint>,
    pub satisfactory_char_rate: f64,
    pub satisfactory_plate_rate: f64,
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn fraction_at_least(values: &[f64], t: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v >= t).count() as f64 / values.len() as f64
}

/// Scores precomputed detections. Aggregates are sorted before summation so
/// the report does not depend on plate order or thread count.
pub fn evaluate_detections(
    segmenter: SegmenterId,
    samples: &[PlateSample],
    detections: &[Segmentation],
    p: &JcParams,
) -> EvalReport {
    assert_eq!(samples.len(), detections.len(), "one detection set per plate");
    let scores: Vec<_> = samples
        .par_iter()
        .zip(detections.par_iter())
        .map(|(s, d)| plate_score_boxes(d.boxes(), &s.truth, p))
        .collect();
    let chars: Vec<_> = scores.iter().flat_map(|s| s.char_scores.iter()).collect();
    let jcs: Vec<f64> = chars.iter().map(|c| c.jc).collect();
    let plate_jcs: Vec<f64> = scores.iter().map(|s| s.plate_jc).collect();
    let deltas: Vec<f64> = chars.iter().filter(|c| c.matched).map(|c| c.delta_c).collect();
    let curve = |v: &[f64]| -> Vec<CurvePoint> {
        curve_thresholds()
            .map(|t| CurvePoint {
                threshold: t,
                fraction: fraction_at_least(v, t),
            })
            .collect()
    };
    EvalReport {
        segmenter,
        plates: samples.len(),
        characters: chars.len(),
        matched: deltas.len(),
        mean_jaccard: sorted_mean(chars.iter().map(|c| c.jaccard).collect()),
        mean_delta_c: sorted_mean(deltas),
        mean_jc: sorted_mean(jcs.clone()),
        mean_plate_jc: sorted_mean(plate_jcs.clone()),
        char_curve: curve(&jcs),
        plate_curve: curve(&plate_jcs),
        satisfactory_char_rate: fraction_at_least(&jcs, SATISFACTORY_JC),
        satisfactory_plate_rate: fraction_at_least(&plate_jcs, SATISFACTORY_JC),
    }
}

pub fn detect_all(id: SegmenterId, samples: &[PlateSample], cfg: &SegmentConfig) -> Vec<Segmentation> {
    samples.par_iter().map(|s| run_segmenter(id, &s.plate, cfg)).collect()
}

/// Runs one segmenter over the samples and scores it.
pub fn evaluate(id: SegmenterId, samples: &[PlateSample], p: &JcParams, cfg: &SegmentConfig) -> EvalReport {
    evaluate_detections(id, samples, &detect_all(id, samples, cfg), p)
}

/// All five segmenters in table order.
pub fn evaluate_all(samples: &[PlateSample], p: &JcParams, cfg: &SegmentConfig) -> Vec<EvalReport> {
    SegmenterId::ALL.iter().map(|&id| evaluate(id, samples, p, cfg)).collect()
}

/// CSV comparison table, rows in segmenter enumeration order.
pub fn summarize(reports: &[EvalReport]) -> String {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| SegmenterId::ALL.iter().position(|&s| s == r.segmenter));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "segmenter",
        "plates",
        "characters",
        "matched",
        "mean_jaccard",
        "mean_delta_c",
        "mean_jc",
        "mean_plate_jc",
        "char_rate_at_0.4",
        "plate_rate_at_0.4",
    ])
    .expect("in-memory write");
    for r in sorted {
        w.write_record([
            r.segmenter.key().to_string(),
            r.plates.to_string(),
            r.characters.to_string(),
            r.matched.to_string(),
            format!("{:.6}", r.mean_jaccard),
            format!("{:.6}", r.mean_delta_c),
            format!("{:.6}", r.mean_jc),
            format!("{:.6}", r.mean_plate_jc),
            format!("{:.6}", r.satisfactory_char_rate),
            format!("{:.6}", r.satisfactory_plate_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn write_text(path: &Path, s: &str) -> Result<(), BenchError> {
    std::fs::write(path, s).map_err(|e| BenchError::io(path, e))
}

fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("threshold,fraction\n");
    for c in curve {
        s.push_str(&format!("{:.2},{:.6}\n", c.threshold, c.fraction));
    }
    s
}

/// Writes `summary.csv` and both curves of every report into `dir`.
pub fn write_reports(reports: &[EvalReport], dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    write_text(&dir.join("summary.csv"), &summarize(reports))?;
    for r in reports {
        let key = r.segmenter.key();
        write_text(&dir.join(format!("char_curve_{key}.csv")), &curve_csv(&r.char_curve))?;
        write_text(&dir.join(format!("plate_curve_{key}.csv")), &curve_csv(&r.plate_curve))?;
    }
    Ok(())
}

/// Crop of `b`, clipped to the plate.
pub fn char_chip(plate: &GrayImage, b: &BBox) -> Option<GrayImage> {
    let c = b.clip(plate.width(), plate.height())?;
    plate.crop(c).ok()
}

/// Characters cropped at their truth boxes.
pub fn truth_chips(samples: &[PlateSample]) -> Vec<(GrayImage, char)> {
    samples
        .iter()
        .flat_map(|s| {
            s.truth
                .iter()
                .enumerate()
                .filter_map(move |(i, b)| Some((char_chip(&s.plate, b)?, s.label(i))))
        })
        .collect()
}

pub fn train_ocr(samples: &[PlateSample], p: &HogParams) -> Result<OcrModel, BenchError> {
    Ok(ocr::train(&truth_chips(samples), p)?)
}

fn recognized(model: &OcrModel, s: &PlateSample, i: usize, b: &BBox) -> bool {
    char_chip(&s.plate, b).is_some_and(|chip| ocr::recognize_in(model, &chip, ClassSet::for_position(i)).0 == s.label(i))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcrAccuracy {
    pub letters: f64,
    pub digits: f64,
}

/// Recognition rate at matched detections; unmatched characters count as
/// errors.
pub fn ocr_accuracy(samples: &[PlateSample], detections: &[Segmentation], model: &OcrModel, p: &JcParams) -> OcrAccuracy {
    let hits: Vec<[bool; 7]> = samples
        .par_iter()
        .zip(detections.par_iter())
        .map(|(s, d)| {
            let mut out = [false; 7];
            for c in match_boxes(d.boxes(), &s.truth, p) {
                if let Some(di) = c.detection {
                    out[c.truth_index] = recognized(model, s, c.truth_index, &d.boxes()[di]);
                }
            }
            out
        })
        .collect();
    let rate = |range: std::ops::Range<usize>| {
        let total = hits.len() * range.len();
        if total == 0 {
            return 0.0;
        }
        hits.iter().map(|h| h[range.clone()].iter().filter(|&&b| b).count()).sum::<usize>() as f64 / total as f64
    };
    OcrAccuracy {
        letters: rate(0..3),
        digits: rate(3..7),
    }
}

/// One matched character and its scores.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Observation {
    plate: usize,
    truth: usize,
    jaccard: f64,
    jc: f64,
    correct: bool,
}

fn observations(samples: &[PlateSample], detections: &[Segmentation], model: &OcrModel, p: &JcParams) -> Vec<Observation> {
    samples
        .par_iter()
        .zip(detections.par_iter())
        .enumerate()
        .flat_map_iter(|(pi, (s, d))| {
            match_boxes(d.boxes(), &s.truth, p)
                .into_iter()
                .filter_map(|c| {
                    let b = d.boxes()[c.detection?];
                    Some(Observation {
                        plate: pi,
                        truth: c.truth_index,
                        jaccard: c.jaccard,
                        jc: c.jc,
                        correct: recognized(model, s, c.truth_index, &b),
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Accuracy over the best `ceil(frac * n)` observations by `key`; ties keep
/// plate/character order.
fn top_accuracy(obs: &[Observation], key: impl Fn(&Observation) -> f64, frac: f64) -> f64 {
    let mut ranked: Vec<&Observation> = obs.iter().collect();
    ranked.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.plate.cmp(&b.plate)).then(a.truth.cmp(&b.truth)));
    let k = ((frac * ranked.len() as f64).ceil() as usize).min(ranked.len());
    if k == 0 {
        return 0.0;
    }
    ranked[..k].iter().filter(|o| o.correct).count() as f64 / k as f64
}

/// Share of top-ranked characters used when tuning C.
pub const TUNE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: f64,
    /// `(C, top-20% accuracy)` per candidate, in input order.
    pub accuracies: Vec<(f64, f64)>,
}

/// Picks the C whose JC ranking gives the most accurate top 20% of
/// characters; ties go to the smaller C.
pub fn tune_c(
    samples: &[PlateSample],
    detections: &[Segmentation],
    model: &OcrModel,
    candidates: &[f64],
) -> Result<TuneResult, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::Protocol("empty validation set".into()));
    }
    let mut accuracies = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let p = JcParams::new(c).ok_or_else(|| BenchError::Protocol(format!("C must be positive, got {c}")))?;
        let obs = observations(samples, detections, model, &p);
        accuracies.push((c, top_accuracy(&obs, |o| o.jc, TUNE_FRACTION)));
    }
    let best = accuracies
        .iter()
        .copied()
        .reduce(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
        .ok_or_else(|| BenchError::Protocol("no C candidates".into()))?
        .0;
    Ok(TuneResult { best, accuracies })
}

/// Top-20% accuracy when ranking by plain Jaccard.
pub fn jaccard_ranked_accuracy(samples: &[PlateSample], detections: &[Segmentation], model: &OcrModel, frac: f64) -> f64 {
    let obs = observations(samples, detections, model, &JcParams::default());
    top_accuracy(&obs, |o| o.jaccard, frac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPoint {
    pub top_percent: usize,
    pub by_jaccard: f64,
    pub by_jc: f64,
}

/// OCR accuracy over the top k% of matched characters, k = 5, 10, ..., 100,
/// ranked by J and by JC.
pub fn ocr_rank_curve(samples: &[PlateSample], detections: &[Segmentation], model: &OcrModel, p: &JcParams) -> Vec<RankPoint> {
    let obs = observations(samples, detections, model, p);
    if obs.is_empty() {
        return Vec::new();
    }
    (1..=20)
        .map(|k| {
            let frac = k as f64 / 20.0;
            RankPoint {
                top_percent: 5 * k,
                by_jaccard: top_accuracy(&obs, |o| o.jaccard, frac),
                by_jc: top_accuracy(&obs, |o| o.jc, frac),
            }
        })
        .collect()
}

pub fn write_rank_curve(points: &[RankPoint], path: &Path) -> Result<(), BenchError> {
    let mut s = String::from("top_percent,accuracy_by_jaccard,accuracy_by_jc\n");
    for r in points {
        s.push_str(&format!("{},{:.6},{:.6}\n", r.top_percent, r.by_jaccard, r.by_jc));
    }
    write_text(path, &s)
}

pub fn write_tune(result: &TuneResult, path: &Path) -> Result<(), BenchError> {
    let mut s = String::from("c,accuracy\n");
    for (c, a) in &result.accuracies {
        s.push_str(&format!("{c},{a:.6}\n"));
    }
    write_text(path, &s)
}

/// Margin used by the misalignment experiment.
pub const MISALIGN_MARGIN: usize = 3;

/// Detections that contain their truth box: the truth grown by `margin` on
/// every side (a fixed-size window), with the truth at a uniformly random
/// offset inside it. Jaccard is the same for every offset; only the
/// centroid moves.
pub fn misaligned_detections(samples: &[PlateSample], margin: usize, seed: u64) -> Vec<Segmentation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| {
            let (w, h) = (s.plate.width(), s.plate.height());
            let boxes = s
                .truth
                .iter()
                .map(|t| {
                    let ox = rng.random_range(0..=2 * margin).min(t.x);
                    let oy = rng.random_range(0..=2 * margin).min(t.y);
                    BBox::new(t.x - ox, t.y - oy, t.w + 2 * margin, t.h + 2 * margin)
                        .clip(w, h)
                        .unwrap_or(*t)
                })
                .collect();
            Segmentation::new(boxes, SegmenterId::IterativeProposed)
        })
        .collect()
}

/// Truth boxes as detections.
pub fn truth_detections(samples: &[PlateSample], id: SegmenterId) -> Vec<Segmentation> {
    samples.iter().map(|s| Segmentation::new(s.truth.clone(), id)).collect()
}

/// Share of `a` that overlaps some box in `b`.
pub fn overlap_share(a: &[BBox], b: &[BBox]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().filter(|x| b.iter().any(|y| jaccard(x, y) > 0.0)).count() as f64 / a.len() as f64
}
