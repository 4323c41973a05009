use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

const MASK_MAGIC: &[u8; 4] = b"MBMK";

/// The three time-frequency classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum MaskClass {
    Speech = 0,
    Interference = 1,
    Weak = 2,
}

/// Per-bin class probabilities, shape `bins × frames × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTriple {
    bins: usize,
    frames: usize,
    values: Vec<f64>,
}

impl MaskTriple {
    pub fn from_vec(bins: usize, frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != bins * frames * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} mask values for {bins}x{frames}x3",
                values.len()
            )));
        }
        Ok(Self { bins, frames, values })
    }

    /// Every bin assigned 1/3 to each class.
    pub fn uniform(bins: usize, frames: usize) -> Self {
        Self { bins, frames, values: vec![1.0 / 3.0; bins * frames * 3] }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize, class: usize) -> f64 {
        self.values[(k * self.frames + t) * 3 + class]
    }

    #[inline]
    pub fn set(&mut self, k: usize, t: usize, class: usize, v: f64) {
        self.values[(k * self.frames + t) * 3 + class] = v;
    }

    pub fn triple(&self, k: usize, t: usize) -> [f64; 3] {
        let o = (k * self.frames + t) * 3;
        [self.values[o], self.values[o + 1], self.values[o + 2]]
    }

    /// One class as a `bins × frames` row-major mask.
    pub fn class_mask(&self, class: MaskClass) -> Vec<f64> {
        self.values.iter().skip(class as usize).step_by(3).copied().collect()
    }

    /// Index of the largest entry; ties go to the lowest class index.
    pub fn argmax(&self, k: usize, t: usize) -> usize {
        let p = self.triple(k, t);
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_one_hot(&self) -> bool {
        self.values.chunks(3).all(|c| {
            c.iter().all(|&v| v == 0.0 || v == 1.0) && c.iter().sum::<f64>() == 1.0
        })
    }

    pub fn max_sum_defect(&self) -> f64 {
        self.values.chunks(3).map(|c| (c.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Fraction of bins labelled with each class.
    pub fn class_frequencies(&self) -> [f64; 3] {
        let mut counts = [0.0; 3];
        for k in 0..self.bins {
            for t in 0..self.frames {
                counts[self.argmax(k, t)] += 1.0;
            }
        }
        let n = (self.bins * self.frames).max(1) as f64;
        counts.map(|c| c / n)
    }
}

/// Per-bin energy floor `ε(k) = 0.01 · max_t max(‖S(k,t)‖, ‖N(k,t)‖)`.
pub fn default_epsilon(s: &ComplexSpectrogram, n: &ComplexSpectrogram) -> Vec<f64> {
    (0..s.bins())
        .map(|k| {
            let mut peak = 0.0f64;
            for t in 0..s.frames() {
                peak = peak.max(s.vector_norm(k, t)).max(n.vector_norm(k, t));
            }
            0.01 * peak
        })
        .collect()
}

/// One-hot training targets from the separated components.
///
/// A bin is speech if `‖S‖ > max(‖N‖, ε(k))`, interference if
/// `‖N‖ > max(‖S‖, ε(k))`, and weak otherwise (including exact ties).
pub fn ground_truth_masks(s: &ComplexSpectrogram, n: &ComplexSpectrogram, epsilon: &[f64]) -> Result<MaskTriple> {
    if s.shape() != n.shape() {
        return Err(Error::ShapeMismatch(format!("S {:?} vs N {:?}", s.shape(), n.shape())));
    }
    if epsilon.len() != s.bins() {
        return Err(Error::ShapeMismatch(format!("{} thresholds for {} bins", epsilon.len(), s.bins())));
    }
    if let Some(e) = epsilon.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::InvalidConfig(format!("negative energy threshold {e}")));
    }
    let (bins, frames) = (s.bins(), s.frames());
    let mut masks = MaskTriple { bins, frames, values: vec![0.0; bins * frames * 3] };
    for k in 0..bins {
        for t in 0..frames {
            let es = s.vector_norm(k, t);
            let en = n.vector_norm(k, t);
            let speech = es > en.max(epsilon[k]);
            let interf = en > es.max(epsilon[k]);
            let class = if speech {
                MaskClass::Speech
            } else if interf {
                MaskClass::Interference
            } else {
                MaskClass::Weak
            };
            masks.set(k, t, class as usize, 1.0);
        }
    }
    Ok(masks)
}

/// Writes `"MBMK"`, u32 K, u32 T, then K·T·3 little-endian f32 values.
pub fn write_mask_file(path: impl AsRef<Path>, masks: &MaskTriple) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MASK_MAGIC)?;
    w.write_all(&(masks.bins as u32).to_le_bytes())?;
    w.write_all(&(masks.frames as u32).to_le_bytes())?;
    for &v in &masks.values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask_file(path: impl AsRef<Path>) -> Result<MaskTriple> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MASK_MAGIC {
        return Err(Error::Format("bad mask file magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let bins = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let frames = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(bins * frames * 3);
    for _ in 0..bins * frames * 3 {
        r.read_exact(&mut word)?;
        values.push(f32::from_le_bytes(word) as f64);
    }
    if r.read(&mut word)? != 0 {
        return Err(Error::Format("trailing bytes after mask payload".into()));
    }
    MaskTriple::from_vec(bins, frames, values)
}
