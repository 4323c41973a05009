use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Norm floor for silent bins.
pub const FEATURE_EPS: f64 = 1e-12;

/// Per-frame network input: for every bin `[Re Z̄_1..Re Z̄_M, Im Z̄_1..Im Z̄_M]`.
/// Stored frame-major as `data[(t * bins + k) * 2M + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub frames: usize,
    pub bins: usize,
    pub mics: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn new(frames: usize, bins: usize, mics: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bins * 2 * mics {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values for {frames} frames of {bins} bins x {mics} mics",
                data.len()
            )));
        }
        Ok(Self { frames, bins, mics, data })
    }

    pub fn frame_len(&self) -> usize {
        2 * self.mics * self.bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn bin(&self, t: usize, k: usize) -> &[f64] {
        let w = 2 * self.mics;
        let start = (t * self.bins + k) * w;
        &self.data[start..start + w]
    }
}

/// Unit-norm, reference-phase-aligned observation vectors.
///
/// `Z̄(k,t) = Z(k,t) / max(‖Z(k,t)‖, ε₀) · exp(−j arg Z_1(k,t))`, so the
/// first microphone's imaginary part is always zero.
pub fn extract_features(z: &ComplexSpectrogram) -> Result<Features> {
    let (m, bins, frames) = z.shape();
    if m == 0 {
        return Err(Error::InvalidConfig("feature extraction needs at least one microphone".into()));
    }
    let mut data = vec![0.0; frames * bins * 2 * m];
    for t in 0..frames {
        for k in 0..bins {
            let v = z.vector(k, t);
            let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let rot = Complex64::from_polar(1.0 / n.max(FEATURE_EPS), -v[0].arg());
            let out = &mut data[(t * bins + k) * 2 * m..(t * bins + k + 1) * 2 * m];
            for (i, c) in v.iter().enumerate() {
                let r = c * rot;
                out[i] = r.re;
                out[m + i] = if i == 0 { 0.0 } else { r.im };
            }
        }
    }
    Features::new(frames, bins, m, data)
}
