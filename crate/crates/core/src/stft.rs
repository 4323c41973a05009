//! Multi-channel short-time Fourier transform with exact overlap-add inversion.
//!
//! Frames are not centered: frame `t` covers samples `t·hop .. t·hop + fft_size`.
//! Analysis uses a periodic Hann window; synthesis uses the same window divided
//! by the overlap sum of the squared window, which makes `istft(stft(x)) == x`
//! on every sample covered by a full set of frames.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Channel-major multi-channel time signal (`signal[m][n]`).
pub type MultiChannel = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { fft_size: 1024, hop: 256, sample_rate: 16000 }
    }
}

impl StftConfig {
    /// Config with 75 % overlap for the given FFT size.
    pub fn with_fft_size(fft_size: usize) -> Self {
        Self { fft_size, hop: fft_size / 4, ..Self::default() }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    /// Signal length produced by [`istft`] for `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.fft_size
        }
    }

    /// Samples that are covered by `fft_size / hop` frames.
    pub fn interior(&self, frames: usize) -> Range<usize> {
        let start = self.fft_size - self.hop;
        let end = frames * self.hop;
        start..end.max(start)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::InvalidConfig(format!("fft_size {} must be even and >= 2", self.fft_size)));
        }
        if self.hop == 0 || self.fft_size % self.hop != 0 {
            return Err(Error::InvalidConfig(format!(
                "hop {} must divide fft_size {}",
                self.hop, self.fft_size
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        Ok(())
    }

    /// Periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.fft_size as f64;
        (0..self.fft_size).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos()).collect()
    }

    /// Synthesis window: Hann divided by the overlap sum of the squared window.
    pub fn synthesis_window(&self) -> Vec<f64> {
        let w = self.window();
        let mut cola = vec![0.0; self.hop];
        for (i, wi) in w.iter().enumerate() {
            cola[i % self.hop] += wi * wi;
        }
        w.iter().enumerate().map(|(i, wi)| wi / cola[i % self.hop]).collect()
    }
}

/// Complex STFT tensor of shape `channels × bins × frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    channels: usize,
    bins: usize,
    frames: usize,
    data: Vec<Complex64>,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn zeros(channels: usize, bins: usize, frames: usize, config: StftConfig) -> Self {
        Self {
            channels,
            bins,
            frames,
            data: vec![Complex64::new(0.0, 0.0); channels * bins * frames],
            config,
        }
    }

    pub fn from_vec(
        channels: usize,
        bins: usize,
        frames: usize,
        data: Vec<Complex64>,
        config: StftConfig,
    ) -> Result<Self> {
        if data.len() != channels * bins * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{bins}x{frames} spectrogram",
                data.len()
            )));
        }
        Ok(Self { channels, bins, frames, data, config })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.bins, self.frames)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, m: usize, k: usize, t: usize) -> usize {
        (m * self.bins + k) * self.frames + t
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize, t: usize) -> Complex64 {
        self.data[self.offset(m, k, t)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, k: usize, t: usize, v: Complex64) {
        let o = self.offset(m, k, t);
        self.data[o] = v;
    }

    /// All frames of one channel and bin.
    pub fn row(&self, m: usize, k: usize) -> &[Complex64] {
        let o = self.offset(m, k, 0);
        &self.data[o..o + self.frames]
    }

    pub fn row_mut(&mut self, m: usize, k: usize) -> &mut [Complex64] {
        let o = self.offset(m, k, 0);
        &mut self.data[o..o + self.frames]
    }

    /// The stacked microphone vector `Z(k, t)`.
    pub fn vector(&self, k: usize, t: usize) -> Vec<Complex64> {
        (0..self.channels).map(|m| self.get(m, k, t)).collect()
    }

    pub fn set_vector(&mut self, k: usize, t: usize, v: &[Complex64]) {
        for (m, &x) in v.iter().enumerate() {
            self.set(m, k, t, x);
        }
    }

    /// `‖Z(k, t)‖₂`
    pub fn vector_norm(&self, k: usize, t: usize) -> f64 {
        (0..self.channels).map(|m| self.get(m, k, t).norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn channel(&self, m: usize) -> ComplexSpectrogram {
        let start = self.offset(m, 0, 0);
        let len = self.bins * self.frames;
        Self {
            channels: 1,
            bins: self.bins,
            frames: self.frames,
            data: self.data[start..start + len].to_vec(),
            config: self.config,
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Mean power of one channel, `mean |Z_m(k,t)|²`.
    pub fn channel_power(&self, m: usize) -> f64 {
        let start = self.offset(m, 0, 0);
        let len = self.bins * self.frames;
        if len == 0 {
            return 0.0;
        }
        self.data[start..start + len].iter().map(|v| v.norm_sqr()).sum::<f64>() / len as f64
    }
}

/// Forward STFT of every channel.
pub fn stft(signal: &[Vec<f64>], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(Error::InvalidConfig("signal has no channels".into()));
    }
    let len = signal[0].len();
    if signal.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch("channels differ in length".into()));
    }
    if len < cfg.fft_size {
        return Err(Error::InsufficientSamples { needed: cfg.fft_size, got: len });
    }
    let frames = cfg.num_frames(len);
    let bins = cfg.num_bins();
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);

    let per_channel: Vec<Vec<Complex64>> = signal
        .par_iter()
        .map(|x| {
            let mut out = vec![Complex64::new(0.0, 0.0); bins * frames];
            let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
            for t in 0..frames {
                let start = t * cfg.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(x[start + i] * window[i], 0.0);
                }
                fft.process(&mut buf);
                for k in 0..bins {
                    out[k * frames + t] = buf[k];
                }
            }
            out
        })
        .collect();

    let data = per_channel.into_iter().flatten().collect();
    ComplexSpectrogram::from_vec(signal.len(), bins, frames, data, *cfg)
}

/// Inverse STFT by weighted overlap-add.
pub fn istft(spec: &ComplexSpectrogram) -> Result<MultiChannel> {
    let cfg = spec.config;
    cfg.validate()?;
    if spec.frames() == 0 {
        return Err(Error::EmptySpectrogram);
    }
    if spec.bins() != cfg.num_bins() {
        return Err(Error::ShapeMismatch(format!(
            "{} bins but fft_size {} implies {}",
            spec.bins(),
            cfg.fft_size,
            cfg.num_bins()
        )));
    }
    let n = cfg.fft_size;
    let frames = spec.frames();
    let synth = cfg.synthesis_window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    Ok((0..spec.channels())
        .into_par_iter()
        .map(|m| {
            let mut out = vec![0.0; cfg.signal_len(frames)];
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for t in 0..frames {
                for k in 0..spec.bins() {
                    buf[k] = spec.get(m, k, t);
                }
                // Imaginary parts of DC and Nyquist are discarded by the real inverse.
                buf[0].im = 0.0;
                buf[n / 2].im = 0.0;
                for k in 1..n / 2 {
                    buf[n - k] = buf[k].conj();
                }
                ifft.process(&mut buf);
                let start = t * cfg.hop;
                for i in 0..n {
                    out[start + i] += buf[i].re / n as f64 * synth[i];
                }
            }
            out
        })
        .collect())
}
