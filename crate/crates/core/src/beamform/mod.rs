//! Mask-driven PSD estimation, MVDR/GEV beamformers and their postfilters.

mod oja;
mod postfilter;
mod psd;
mod weights;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::room::{MaskClass, MaskTriple};
use crate::stft::ComplexSpectrogram;

pub use oja::{oja_step, oja_step_ev, principal_angle, OjaState};
pub use postfilter::{postfilter_ban, postfilter_pan};
pub use psd::{block_range, psd_block, psd_block_bin, psd_block_series, psd_recursive, PsdPair};
pub use weights::{
    gev_weights, mvdr_weights, mvdr_weights_loaded, rayleigh_quotient, steering_vector, DIAGONAL_LOADING,
};

/// Default PSD block length in frames.
pub const DEFAULT_WINDOW: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeamformerKind {
    Mvdr,
    GevBan,
    GevPan,
}

impl FromStr for BeamformerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvdr" => Ok(Self::Mvdr),
            "gev-ban" => Ok(Self::GevBan),
            "gev-pan" => Ok(Self::GevPan),
            _ => Err(Error::InvalidConfig(format!("unknown beamformer {s:?} (mvdr, gev-ban, gev-pan)"))),
        }
    }
}

impl fmt::Display for BeamformerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::Mvdr => "mvdr",
            Self::GevBan => "gev-ban",
            Self::GevPan => "gev-pan",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsdMode {
    /// Sliding block of `L` frames around each frame.
    Block,
    /// First-order recursion driven by the masks.
    Recursive,
    /// Recursive PSDs with Oja eigenvector tracking instead of per-frame decompositions.
    Oja,
}

impl FromStr for PsdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(Self::Block),
            "recursive" => Ok(Self::Recursive),
            "oja" => Ok(Self::Oja),
            _ => Err(Error::InvalidConfig(format!("unknown PSD mode {s:?} (block, recursive, oja)"))),
        }
    }
}

impl fmt::Display for PsdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::Block => "block",
            Self::Recursive => "recursive",
            Self::Oja => "oja",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamformConfig {
    pub kind: BeamformerKind,
    pub psd: PsdMode,
    pub window: usize,
}

impl Default for BeamformConfig {
    fn default() -> Self {
        Self { kind: BeamformerKind::GevBan, psd: PsdMode::Block, window: DEFAULT_WINDOW }
    }
}

/// Beamformer weights and postfilter gains, either one set per bin
/// (`frames == 1`) or one per time-frequency point, indexed `k * frames + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerWeights {
    pub kind: BeamformerKind,
    pub bins: usize,
    pub frames: usize,
    pub w: Vec<Vec<Complex64>>,
    pub postfilter_gain: Vec<f64>,
    /// Points where the PSDs were degenerate and the reference channel was passed through.
    pub fallbacks: usize,
}

impl BeamformerWeights {
    pub fn fixed(kind: BeamformerKind, w: Vec<Vec<Complex64>>, gain: Vec<f64>) -> Result<Self> {
        if w.len() != gain.len() {
            return Err(Error::ShapeMismatch(format!("{} weight vectors but {} gains", w.len(), gain.len())));
        }
        Ok(Self { kind, bins: w.len(), frames: 1, w, postfilter_gain: gain, fallbacks: 0 })
    }

    fn index(&self, k: usize, t: usize) -> usize {
        if self.frames == 1 {
            k
        } else {
            k * self.frames + t
        }
    }

    pub fn weight(&self, k: usize, t: usize) -> &[Complex64] {
        &self.w[self.index(k, t)]
    }

    pub fn gain(&self, k: usize, t: usize) -> f64 {
        self.postfilter_gain[self.index(k, t)]
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.postfilter_gain.iter().all(|g| g.is_finite() && *g >= 0.0)
    }
}

/// `Y(k,t) = g(k,t) · W(k,t)ᴴ Z(k,t)`
pub fn filter_and_sum(weights: &BeamformerWeights, z: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    let (m, bins, frames) = z.shape();
    if weights.bins != bins || (weights.frames != 1 && weights.frames != frames) {
        return Err(Error::ShapeMismatch(format!(
            "weights cover {}x{} points, spectrogram has {bins}x{frames}",
            weights.bins, weights.frames
        )));
    }
    if weights.w.iter().any(|w| w.len() != m) {
        return Err(Error::ShapeMismatch(format!("weight vectors must have {m} entries")));
    }
    let mut y = ComplexSpectrogram::zeros(1, bins, frames, z.config);
    for k in 0..bins {
        let row = y.row_mut(0, k);
        for (t, out) in row.iter_mut().enumerate() {
            let w = weights.weight(k, t);
            let mut acc = Complex64::new(0.0, 0.0);
            for (ch, wc) in w.iter().enumerate() {
                acc += wc.conj() * z.get(ch, k, t);
            }
            *out = acc * weights.gain(k, t);
        }
    }
    Ok(y)
}

fn reference_weight(m: usize) -> Vec<Complex64> {
    let mut w = vec![Complex64::new(0.0, 0.0); m];
    w[0] = Complex64::new(1.0, 0.0);
    w
}

struct Frame<'a> {
    phi_ss: &'a CMat,
    phi_nn: &'a CMat,
    phi_zz: &'a CMat,
}

fn closed_form(kind: BeamformerKind, f: &Frame<'_>) -> Result<(Vec<Complex64>, f64)> {
    match kind {
        BeamformerKind::Mvdr => {
            let v = steering_vector(f.phi_ss)?;
            Ok((mvdr_weights(f.phi_nn, &v)?, 1.0))
        }
        BeamformerKind::GevBan | BeamformerKind::GevPan => {
            let (w, _) = gev_weights(f.phi_ss, f.phi_nn)?;
            let g = gain(kind, &w, f);
            Ok((w, g))
        }
    }
}

fn gain(kind: BeamformerKind, w: &[Complex64], f: &Frame<'_>) -> f64 {
    match kind {
        BeamformerKind::Mvdr => 1.0,
        BeamformerKind::GevBan => postfilter_ban(w, f.phi_nn),
        BeamformerKind::GevPan => postfilter_pan(w, f.phi_zz),
    }
}

/// Per-bin tracker used in Oja mode.
enum Tracker {
    Gev(OjaState),
    Steering(OjaState),
}

impl Tracker {
    fn init(kind: BeamformerKind, f: &Frame<'_>) -> Result<Self> {
        match kind {
            BeamformerKind::Mvdr => {
                let v = steering_vector(f.phi_ss)?;
                Ok(Self::Steering(OjaState::new(v, 0.0)))
            }
            _ => {
                let (w, xi) = gev_weights(f.phi_ss, f.phi_nn)?;
                // Start W′ at its fixed-point magnitude.
                let scale = if xi.is_finite() && xi > 0.0 { xi } else { 1.0 };
                Ok(Self::Gev(OjaState::new(w.iter().map(|x| x * scale).collect(), 0.0)))
            }
        }
    }

    fn step(&mut self, kind: BeamformerKind, f: &Frame<'_>) -> Result<(Vec<Complex64>, f64)> {
        match self {
            Self::Steering(state) => {
                state.alpha = OjaState::default_alpha(f.phi_ss, f.phi_nn);
                let v = oja_step_ev(state, f.phi_ss);
                Ok((mvdr_weights(f.phi_nn, &v)?, 1.0))
            }
            Self::Gev(state) => {
                state.alpha = OjaState::default_alpha(f.phi_ss, f.phi_nn);
                let w = oja_step(state, f.phi_ss, f.phi_nn);
                let g = gain(kind, &w, f);
                Ok((w, g))
            }
        }
    }
}

/// Per-frame weights of one bin. A degenerate frame reuses the nearest valid
/// weight of the bin (the previous one, else the next) with the postfilter
/// gain of its own PSDs. A bin without any valid frame passes the reference
/// channel through the postfilter.
struct Track {
    kind: BeamformerKind,
    m: usize,
    ws: Vec<Option<Vec<Complex64>>>,
    gs: Vec<f64>,
    /// `(Φ_NN, Φ_ZZ)` of degenerate frames, for their postfilter gains.
    held: Vec<Option<(CMat, CMat)>>,
}

impl Track {
    fn new(kind: BeamformerKind, m: usize, frames: usize) -> Self {
        Self { kind, m, ws: Vec::with_capacity(frames), gs: Vec::with_capacity(frames), held: Vec::with_capacity(frames) }
    }

    fn push(&mut self, r: Result<(Vec<Complex64>, f64)>, f: &Frame<'_>) {
        match r {
            Ok((w, g)) if w.iter().all(|c| c.re.is_finite() && c.im.is_finite()) && g.is_finite() => {
                self.ws.push(Some(w));
                self.gs.push(g);
                self.held.push(None);
            }
            _ => {
                self.ws.push(None);
                self.gs.push(0.0);
                self.held.push(Some((f.phi_nn.clone(), f.phi_zz.clone())));
            }
        }
    }

    fn finish(self) -> (Vec<Vec<Complex64>>, Vec<f64>, usize) {
        let first = self.ws.iter().flatten().next().cloned().unwrap_or_else(|| reference_weight(self.m));
        let mut last = first;
        let mut ws = Vec::with_capacity(self.ws.len());
        let mut gs = Vec::with_capacity(self.ws.len());
        let mut fallbacks = 0;
        for ((w, g), held) in self.ws.into_iter().zip(self.gs).zip(self.held) {
            match (w, held) {
                (Some(w), _) => {
                    last = w.clone();
                    ws.push(w);
                    gs.push(g);
                }
                (None, held) => {
                    fallbacks += 1;
                    let g = held.map_or(1.0, |(phi_nn, phi_zz)| {
                        let f = Frame { phi_ss: &phi_nn, phi_nn: &phi_nn, phi_zz: &phi_zz };
                        gain(self.kind, &last, &f)
                    });
                    ws.push(last.clone());
                    gs.push(if g.is_finite() && g > 0.0 { g } else { 1.0 });
                }
            }
        }
        (ws, gs, fallbacks)
    }
}

fn bin_weights(
    z: &ComplexSpectrogram,
    speech: &[f64],
    interference: &[f64],
    k: usize,
    cfg: &BeamformConfig,
) -> Result<(Vec<Vec<Complex64>>, Vec<f64>, usize)> {
    let frames = z.frames();
    let m = z.channels();
    let block_ss = psd_block_series(z, speech, k, cfg.window)?;
    let block_nn = psd_block_series(z, interference, k, cfg.window)?;
    // PAN normalizes against the mixture power of the whole utterance.
    let mut mean_zz = CMat::zeros(m);
    if cfg.kind == BeamformerKind::GevPan {
        for t in 0..frames {
            mean_zz.add_outer_scaled(&z.vector(k, t), 1.0 / frames as f64);
        }
    }

    let mut track = Track::new(cfg.kind, m, frames);
    let mut push = |r: Result<(Vec<Complex64>, f64)>, f: &Frame<'_>| track.push(r, f);

    match cfg.psd {
        PsdMode::Block => {
            let sp = &speech[k * frames..(k + 1) * frames];
            let nn = &interference[k * frames..(k + 1) * frames];
            for t in 0..frames {
                let r = block_range(t, cfg.window, frames);
                // Fewer than M interference snapshots leave Φ_NN rank deficient.
                let weight = |mask: &[f64]| mask[r.clone()].iter().sum::<f64>();
                let f = Frame { phi_ss: &block_ss[t], phi_nn: &block_nn[t], phi_zz: &mean_zz };
                let r = if weight(sp) == 0.0 || weight(nn) < m as f64 {
                    Err(Error::DegeneratePsd)
                } else {
                    closed_form(cfg.kind, &f)
                };
                push(r, &f);
            }
        }
        PsdMode::Recursive | PsdMode::Oja => {
            let mut phi_ss = block_ss[0].clone();
            let mut phi_nn = block_nn[0].clone();
            let mut tracker: Option<Tracker> = None;
            for t in 0..frames {
                if t > 0 {
                    let zt = z.vector(k, t);
                    phi_ss = psd_recursive(&phi_ss, &zt, speech[k * frames + t]);
                    phi_nn = psd_recursive(&phi_nn, &zt, interference[k * frames + t]);
                }
                let f = Frame { phi_ss: &phi_ss, phi_nn: &phi_nn, phi_zz: &mean_zz };
                let r = if cfg.psd == PsdMode::Recursive {
                    closed_form(cfg.kind, &f)
                } else {
                    match tracker.as_mut() {
                        Some(tr) => tr.step(cfg.kind, &f),
                        None => match Tracker::init(cfg.kind, &f) {
                            Ok(tr) => {
                                tracker = Some(tr);
                                closed_form(cfg.kind, &f)
                            }
                            Err(e) => Err(e),
                        },
                    }
                };
                push(r, &f);
            }
        }
    }
    Ok(track.finish())
}

/// Estimate time-varying beamformer weights from the mixture and masks.
pub fn estimate_weights(z: &ComplexSpectrogram, masks: &MaskTriple, cfg: &BeamformConfig) -> Result<BeamformerWeights> {
    let (_, bins, frames) = z.shape();
    if masks.bins() != bins || masks.frames() != frames {
        return Err(Error::ShapeMismatch(format!(
            "masks are {}x{}, spectrogram is {bins}x{frames}",
            masks.bins(),
            masks.frames()
        )));
    }
    if cfg.window == 0 {
        return Err(Error::InvalidConfig("PSD window length must be at least 1".into()));
    }
    let speech = masks.class_mask(MaskClass::Speech);
    let interference = masks.class_mask(MaskClass::Interference);
    psd::check_mask(z, &speech)?;
    psd::check_mask(z, &interference)?;
    let per_bin: Vec<_> = (0..bins)
        .into_par_iter()
        .map(|k| bin_weights(z, &speech, &interference, k, cfg))
        .collect::<Result<_>>()?;
    let mut w = Vec::with_capacity(bins * frames);
    let mut gains = Vec::with_capacity(bins * frames);
    let mut fallbacks = 0;
    for (ws, gs, fb) in per_bin {
        w.extend(ws);
        gains.extend(gs);
        fallbacks += fb;
    }
    if fallbacks > 0 {
        log::debug!("{fallbacks} degenerate time-frequency points passed through the reference channel");
    }
    Ok(BeamformerWeights { kind: cfg.kind, bins, frames, w, postfilter_gain: gains, fallbacks })
}

/// Mask-driven enhancement: weight estimation followed by filter-and-sum.
pub fn beamform(z: &ComplexSpectrogram, masks: &MaskTriple, cfg: &BeamformConfig) -> Result<(ComplexSpectrogram, BeamformerWeights)> {
    let weights = estimate_weights(z, masks, cfg)?;
    let y = filter_and_sum(&weights, z)?;
    Ok((y, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn filter_and_sum_by_hand() {
        let z = ComplexSpectrogram::from_vec(2, 1, 1, vec![c(1.0, 1.0), c(2.0, 0.0)], StftConfig::with_fft_size(16)).unwrap();
        let w = BeamformerWeights::fixed(BeamformerKind::Mvdr, vec![vec![c(1.0, 0.0), c(0.0, 1.0)]], vec![1.0]).unwrap();
        let y = filter_and_sum(&w, &z).unwrap();
        assert_eq!(y.get(0, 0, 0), c(1.0, -1.0));
    }

    #[test]
    fn reference_weight_selects_first_channel() {
        let cfg = StftConfig::with_fft_size(16);
        let data: Vec<Complex64> = (0..2 * 3 * 4).map(|i| c(i as f64, -(i as f64))).collect();
        let z = ComplexSpectrogram::from_vec(2, 3, 4, data, cfg).unwrap();
        let w = BeamformerWeights::fixed(BeamformerKind::Mvdr, vec![reference_weight(2); 3], vec![1.0; 3]).unwrap();
        let y = filter_and_sum(&w, &z).unwrap();
        assert_eq!(y.as_slice(), z.channel(0).as_slice());
    }

    #[test]
    fn averaging_identical_channels_returns_common_signal() {
        let cfg = StftConfig::with_fft_size(16);
        let common: Vec<Complex64> = (0..5).map(|i| c(i as f64, 1.0)).collect();
        let data: Vec<Complex64> = common.iter().chain(&common).chain(&common).copied().collect();
        let z = ComplexSpectrogram::from_vec(3, 1, 5, data, cfg).unwrap();
        let w = BeamformerWeights::fixed(BeamformerKind::Mvdr, vec![vec![c(1.0 / 3.0, 0.0); 3]], vec![1.0]).unwrap();
        let y = filter_and_sum(&w, &z).unwrap();
        for (a, b) in y.as_slice().iter().zip(&common) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn enum_parsing_round_trips() {
        for s in ["mvdr", "gev-ban", "gev-pan"] {
            assert_eq!(s.parse::<BeamformerKind>().unwrap().to_string(), s);
        }
        for s in ["block", "recursive", "oja"] {
            assert_eq!(s.parse::<PsdMode>().unwrap().to_string(), s);
        }
        assert!("gev".parse::<BeamformerKind>().is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let z = ComplexSpectrogram::zeros(2, 3, 4, StftConfig::with_fft_size(16));
        assert!(estimate_weights(&z, &MaskTriple::uniform(3, 5), &BeamformConfig::default()).is_err());
    }

    #[test]
    fn degenerate_frames_hold_the_nearest_valid_weight() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (bins, frames) = (2, 40);
        let data: Vec<Complex64> = (0..2 * bins * frames).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let z = ComplexSpectrogram::from_vec(2, bins, frames, data, StftConfig::with_fft_size(16)).unwrap();
        let mut masks = MaskTriple::from_vec(bins, frames, vec![0.0; bins * frames * 3]).unwrap();
        for t in 0..frames {
            // Bin 0 has speech in frames 30..36 only; bin 1 never.
            let class = if (30..36).contains(&t) { 0 } else { 1 };
            masks.set(0, t, class, 1.0);
            masks.set(1, t, 1, 1.0);
        }
        let cfg = BeamformConfig { kind: BeamformerKind::GevBan, psd: PsdMode::Block, window: 4 };
        let w = estimate_weights(&z, &masks, &cfg).unwrap();
        // Bin 0 is valid for t in 28..=30 and 35..=37; frames 31..=34 see
        // fewer than two interference snapshots.
        assert_eq!(w.weight(0, 0), w.weight(0, 28));
        assert_eq!(w.weight(0, 33), w.weight(0, 30));
        assert_eq!(w.weight(0, 39), w.weight(0, 37));
        assert_ne!(w.weight(0, 28), w.weight(0, 37));
        for t in 0..frames {
            assert_eq!(w.weight(1, t), reference_weight(2).as_slice());
            assert!(w.gain(1, t) > 0.0);
        }
        assert_eq!(w.fallbacks, 34 + frames);
    }

    #[test]
    fn all_modes_produce_finite_weights_on_a_scene() {
        use crate::room::{build_scenario, ScenarioConfig};
        let mut sc = ScenarioConfig { id: 2, duration: 1.0, ..ScenarioConfig::default() };
        sc.stft = StftConfig::with_fft_size(256);
        let scene = build_scenario(&sc).unwrap();
        for kind in [BeamformerKind::Mvdr, BeamformerKind::GevBan, BeamformerKind::GevPan] {
            for psd in [PsdMode::Block, PsdMode::Recursive, PsdMode::Oja] {
                let cfg = BeamformConfig { kind, psd, window: 16 };
                let (y, w) = beamform(&scene.mixture, &scene.masks, &cfg).unwrap();
                assert!(w.is_finite(), "{kind} {psd}");
                assert!(y.is_finite());
                if psd == PsdMode::Oja && kind != BeamformerKind::Mvdr {
                    for wk in &w.w {
                        let n = crate::linalg::norm(wk);
                        assert!((n - 1.0).abs() < 1e-9, "{kind} {psd}: {n}");
                    }
                }
            }
        }
    }
}
