//! HOG descriptor and nearest-centroid character recognizer.
//!
//! Model file layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "LPCSOCR\0"
//! version      u32      1
//! bins         u32
//! cell         u32
//! stride       u32
//! norm_width   u32
//! norm_height  u32
//! n_classes    u32
//! dim          u32
//! n_classes records:
//!   label      u8       ASCII character
//!   centroid   dim x f32
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::raster::GrayImage;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("invalid HOG parameters: {0}")]
    Params(String),
    #[error("no training sample for class {0:?}")]
    MissingClass(char),
    #[error("label {0:?} is not a plate character")]
    UnknownLabel(char),
    #[error("model file: {0}")]
    Format(String),
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogParams {
    pub bins: usize,
    pub cell: usize,
    pub stride: usize,
    pub norm_width: usize,
    pub norm_height: usize,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            bins: 9,
            cell: 16,
            stride: 8,
            norm_width: 32,
            norm_height: 32,
        }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<(), OcrError> {
        let err = |m: &str| Err(OcrError::Params(m.to_string()));
        if self.bins < 2 {
            return err("bins must be at least 2");
        }
        if self.stride == 0 || self.stride > self.cell {
            return err("stride must be in 1..=cell");
        }
        for n in [self.norm_width, self.norm_height] {
            if n < self.cell || !(n - self.cell).is_multiple_of(self.stride) {
                return err("normalized size does not tile into cells at the given stride");
            }
            if self.cells_along(n) < 2 {
                return err("need at least two cells per axis for 2x2 blocks");
            }
        }
        Ok(())
    }

    fn cells_along(&self, n: usize) -> usize {
        (n - self.cell) / self.stride + 1
    }

    /// Descriptor length: blocks x 4 cells x bins.
    pub fn descriptor_len(&self) -> usize {
        let bx = self.cells_along(self.norm_width) - 1;
        let by = self.cells_along(self.norm_height) - 1;
        bx * by * 4 * self.bins
    }
}

/// Centre-aligned nearest-neighbour resize. An integer upscale of a chip
/// resizes to exactly the same pixels as the chip itself.
pub fn resize_nearest(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let (sw, sh) = (img.width(), img.height());
    GrayImage::from_fn(width, height, |x, y| {
        let sx = ((2 * x + 1) * sw) / (2 * width);
        let sy = ((2 * y + 1) * sh) / (2 * height);
        img.get(sx.min(sw - 1), sy.min(sh - 1))
    })
}

/// Panics on an invalid `p`; call [`HogParams::validate`] first when the
/// parameters come from outside.
pub fn hog_descriptor(chip: &GrayImage, p: &HogParams) -> Vec<f32> {
    let img = resize_nearest(chip, p.norm_width, p.norm_height);
    let (w, h) = (p.norm_width, p.norm_height);
    let at = |x: isize, y: isize| img.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize) as f64;

    let mut mag = vec![0.0f64; w * h];
    let mut bin = vec![0usize; w * h];
    let bin_width = 180.0 / p.bins as f64;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = at(x + 1, y) - at(x - 1, y);
            let gy = at(x, y + 1) - at(x, y - 1);
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            bin[i] = ((angle / bin_width) as usize).min(p.bins - 1);
        }
    }

    let (ncx, ncy) = (p.cells_along(w), p.cells_along(h));
    let mut cells = vec![vec![0.0f64; p.bins]; ncx * ncy];
    for cy in 0..ncy {
        for cx in 0..ncx {
            let hist = &mut cells[cy * ncx + cx];
            for y in cy * p.stride..cy * p.stride + p.cell {
                for x in cx * p.stride..cx * p.stride + p.cell {
                    hist[bin[y * w + x]] += mag[y * w + x];
                }
            }
        }
    }

    let mut out = Vec::with_capacity(p.descriptor_len());
    for by in 0..ncy - 1 {
        for bx in 0..ncx - 1 {
            let block: Vec<f64> = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .flat_map(|&(dx, dy)| cells[(by + dy) * ncx + bx + dx].iter().copied())
                .collect();
            let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                out.extend(block.iter().map(|v| (v / norm) as f32));
            } else {
                out.extend(std::iter::repeat_n(0.0f32, block.len()));
            }
        }
    }
    out
}

/// Which classes a query may be assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassSet {
    All,
    Letters,
    Digits,
}

impl ClassSet {
    /// Positions 0..3 hold letters, 3..7 digits.
    pub fn for_position(i: usize) -> Self {
        if i < 3 {
            Self::Letters
        } else {
            Self::Digits
        }
    }

    pub fn admits(self, c: char) -> bool {
        match self {
            Self::All => c.is_ascii_uppercase() || c.is_ascii_digit(),
            Self::Letters => c.is_ascii_uppercase(),
            Self::Digits => c.is_ascii_digit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrModel {
    params: HogParams,
    labels: Vec<char>,
    centroids: Vec<Vec<f32>>,
}

const MAGIC: &[u8; 8] = b"LPCSOCR\0";
const VERSION: u32 = 1;

impl OcrModel {
    pub fn params(&self) -> &HogParams {
        &self.params
    }

    /// Class labels, letters then digits.
    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn centroid(&self, label: char) -> Option<&[f32]> {
        let i = self.labels.iter().position(|&l| l == label)?;
        Some(&self.centroids[i])
    }

    pub fn save(&self, path: &Path) -> Result<(), OcrError> {
        let io = |e| OcrError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_to(&mut f).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        let p = &self.params;
        let dim = self.centroids.first().map_or(0, Vec::len);
        for v in [VERSION as usize, p.bins, p.cell, p.stride, p.norm_width, p.norm_height, self.labels.len(), dim] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for (l, c) in self.labels.iter().zip(&self.centroids) {
            w.write_all(&[*l as u8])?;
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OcrError> {
        let bytes = std::fs::read(path).map_err(|e| OcrError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, OcrError> {
        let eof = |_| OcrError::Format("truncated".into());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != MAGIC {
            return Err(OcrError::Format("bad magic".into()));
        }
        let mut u32s = [0usize; 8];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(eof)?;
            *v = u32::from_le_bytes(b) as usize;
        }
        let [version, bins, cell, stride, norm_width, norm_height, n, dim] = u32s;
        if version != VERSION as usize {
            return Err(OcrError::Format(format!("unsupported version {version}")));
        }
        let params = HogParams {
            bins,
            cell,
            stride,
            norm_width,
            norm_height,
        };
        params.validate()?;
        if dim != params.descriptor_len() {
            return Err(OcrError::Format(format!("dimension {dim} does not match parameters")));
        }
        let mut labels = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for _ in 0..n {
            let mut l = [0u8; 1];
            r.read_exact(&mut l).map_err(eof)?;
            let label = l[0] as char;
            if !ClassSet::All.admits(label) {
                return Err(OcrError::UnknownLabel(label));
            }
            let mut c = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                r.read_exact(&mut b).map_err(eof)?;
                c.push(f32::from_le_bytes(b));
            }
            labels.push(label);
            centroids.push(c);
        }
        if r.read(&mut [0u8; 1]).map_err(eof)? != 0 {
            return Err(OcrError::Format("trailing bytes".into()));
        }
        Ok(Self {
            params,
            labels,
            centroids,
        })
    }
}

/// Per-class mean descriptor over all 36 plate characters.
pub fn train(samples: &[(GrayImage, char)], p: &HogParams) -> Result<OcrModel, OcrError> {
    p.validate()?;
    let mut per_class: BTreeMap<char, Vec<Vec<f32>>> = BTreeMap::new();
    for (chip, label) in samples {
        if !ClassSet::All.admits(*label) {
            return Err(OcrError::UnknownLabel(*label));
        }
        per_class.entry(*label).or_default().push(hog_descriptor(chip, p));
    }
    let labels: Vec<char> = crate::synth::alphabet().collect();
    let mut centroids = Vec::with_capacity(labels.len());
    for &l in &labels {
        let mut descs = per_class.remove(&l).ok_or(OcrError::MissingClass(l))?;
        // canonical order so the mean does not depend on sample order
        descs.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        let n = descs.len() as f64;
        let mean = (0..p.descriptor_len())
            .map(|k| (descs.iter().map(|d| d[k] as f64).sum::<f64>() / n) as f32)
            .collect();
        centroids.push(mean);
    }
    Ok(OcrModel {
        params: *p,
        labels,
        centroids,
    })
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Euclidean distance from the chip's descriptor to the centroid of `label`.
pub fn distance_to(model: &OcrModel, chip: &GrayImage, label: char) -> Option<f64> {
    let c = model.centroid(label)?;
    Some(distance(&hog_descriptor(chip, &model.params), c))
}

/// Nearest centroid over all classes. Confidence is the gap between the
/// second-best and best distances.
pub fn recognize(model: &OcrModel, chip: &GrayImage) -> (char, f64) {
    recognize_in(model, chip, ClassSet::All)
}

pub fn recognize_in(model: &OcrModel, chip: &GrayImage, set: ClassSet) -> (char, f64) {
    let d = hog_descriptor(chip, &model.params);
    let mut best = (f64::INFINITY, '?');
    let mut second = f64::INFINITY;
    for (l, c) in model.labels.iter().zip(&model.centroids) {
        if !set.admits(*l) {
            continue;
        }
        let dist = distance(&d, c);
        if dist < best.0 {
            second = best.0;
            best = (dist, *l);
        } else if dist < second {
            second = dist;
        }
    }
    let confidence = if second.is_finite() { second - best.0 } else { 0.0 };
    (best.1, confidence)
}
