//! SNR improvement of a beamformer output and mask-quality scores.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::cross_entropy;
use crate::room::{MaskClass, MaskTriple};
use crate::stft::ComplexSpectrogram;

/// Magnitude bound on reported SNR improvements.
pub const DELTA_SNR_CAP_DB: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaSnr {
    pub db: f64,
    /// The output ratio was infinite or zero and `db` was clamped to ±100.
    pub capped: bool,
}

/// Output SNR minus input SNR, both measured through the masks `p_opt`:
///
/// `10 log10(Σ|Y p_s|² / Σ|Y p_n|²) − 10 log10(Σ‖Z p_s‖² / Σ‖Z p_n‖²)`
///
/// Fails when either class is absent from the masks or the input has no
/// energy in one of them. A silent output class clamps the result.
pub fn delta_snr(y: &ComplexSpectrogram, z: &ComplexSpectrogram, p_opt: &MaskTriple) -> Result<DeltaSnr> {
    let (yc, kk, tt) = y.shape();
    let (_, zk, zt) = z.shape();
    if yc != 1 || (zk, zt) != (kk, tt) || (p_opt.bins(), p_opt.frames()) != (kk, tt) {
        return Err(Error::ShapeMismatch(format!(
            "output {yc}x{kk}x{tt}, input {zk}x{zt}, masks {}x{}",
            p_opt.bins(),
            p_opt.frames()
        )));
    }
    let (mut ys, mut yn, mut zs, mut zn, mut cs, mut cn) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..kk {
        for t in 0..tt {
            let ps = p_opt.get(k, t, MaskClass::Speech as usize);
            let pn = p_opt.get(k, t, MaskClass::Interference as usize);
            let ey = y.get(0, k, t).norm_sqr();
            let ez = z.vector_norm(k, t).powi(2);
            ys += ps * ps * ey;
            yn += pn * pn * ey;
            zs += ps * ps * ez;
            zn += pn * pn * ez;
            cs += ps;
            cn += pn;
        }
    }
    if cs == 0.0 || cn == 0.0 || zs == 0.0 || zn == 0.0 {
        return Err(Error::DegenerateMaskCoverage);
    }
    if !(ys.is_finite() && yn.is_finite()) {
        return Err(Error::NonFinite);
    }
    let input = 10.0 * (zs / zn).log10();
    let raw = if yn == 0.0 && ys == 0.0 {
        return Err(Error::DegenerateMaskCoverage);
    } else if yn == 0.0 {
        f64::INFINITY
    } else if ys == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (ys / yn).log10() - input
    };
    if raw.abs() > DELTA_SNR_CAP_DB {
        Ok(DeltaSnr { db: raw.clamp(-DELTA_SNR_CAP_DB, DELTA_SNR_CAP_DB), capped: true })
    } else {
        Ok(DeltaSnr { db: raw, capped: false })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskScores {
    pub cross_entropy: f64,
    /// Fraction of bins whose most likely class matches the target's.
    pub accuracy: f64,
}

pub fn mask_scores(p_est: &MaskTriple, p_opt: &MaskTriple) -> Result<MaskScores> {
    let ce = cross_entropy(p_est, p_opt)?;
    let (kk, tt) = (p_opt.bins(), p_opt.frames());
    let mut hits = 0usize;
    for k in 0..kk {
        for t in 0..tt {
            hits += usize::from(p_est.argmax(k, t) == p_opt.argmax(k, t));
        }
    }
    Ok(MaskScores { cross_entropy: ce, accuracy: hits as f64 / (kk * tt).max(1) as f64 })
}

/// One evaluation row, keyed by scenario, beamformer and precision.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scenario: String,
    pub beamformer: String,
    pub psd: String,
    /// Network precision, or `oracle` / `uniform` for reference masks.
    pub precision: String,
    pub delta_snr_db: f64,
    pub capped: bool,
    pub mask_cross_entropy: f64,
    pub mask_accuracy: f64,
}

pub const EVAL_CSV_HEADER: &str = "scenario,beamformer,psd,precision,delta_snr_db,capped,mask_cross_entropy,mask_accuracy";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{:.6},{:.6}",
            self.scenario,
            self.beamformer,
            self.psd,
            self.precision,
            self.delta_snr_db,
            self.capped,
            self.mask_cross_entropy,
            self.mask_accuracy
        )
    }
}

pub fn write_eval_csv(path: impl AsRef<Path>, rows: &[EvalReport]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{EVAL_CSV_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use num_complex::Complex64;

    fn spec(ch: usize, bins: usize, frames: usize, v: Vec<f64>) -> ComplexSpectrogram {
        let data = v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        ComplexSpectrogram::from_vec(ch, bins, frames, data, StftConfig::with_fft_size(16)).unwrap()
    }

    fn one_hot(bins: usize, frames: usize, classes: &[usize]) -> MaskTriple {
        let mut m = MaskTriple::from_vec(bins, frames, vec![0.0; bins * frames * 3]).unwrap();
        for k in 0..bins {
            for t in 0..frames {
                m.set(k, t, classes[k * frames + t], 1.0);
            }
        }
        m
    }

    #[test]
    fn identity_has_no_improvement() {
        let z = spec(1, 2, 2, vec![1.0, -0.5, 2.0, 0.3]);
        let p = one_hot(2, 2, &[0, 1, 2, 0]);
        let d = delta_snr(&z, &z, &p).unwrap();
        assert!(d.db.abs() < 1e-12 && !d.capped);
    }

    #[test]
    fn hand_set_energies() {
        // Desired bin (0,0), interfering bin (1,1); output energies 4 and 1.
        let p = one_hot(2, 2, &[0, 2, 2, 1]);
        let y = spec(1, 2, 2, vec![2.0, 0.0, 0.0, 1.0]);
        // Each channel carries energy 1 in both bins: 2 and 2 over two mics.
        let z = spec(2, 2, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let d = delta_snr(&y, &z, &p).unwrap();
        assert!((d.db - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((d.db - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn perfect_separation_is_capped() {
        let p = one_hot(2, 1, &[0, 1]);
        let y = spec(1, 2, 1, vec![1.0, 0.0]);
        let z = spec(1, 2, 1, vec![1.0, 1.0]);
        let d = delta_snr(&y, &z, &p).unwrap();
        assert_eq!(d, DeltaSnr { db: DELTA_SNR_CAP_DB, capped: true });
    }

    #[test]
    fn missing_class_is_an_error() {
        let p = one_hot(2, 1, &[0, 2]);
        let y = spec(1, 2, 1, vec![1.0, 1.0]);
        assert!(matches!(delta_snr(&y, &y, &p), Err(Error::DegenerateMaskCoverage)));
    }

    #[test]
    fn output_scale_cancels() {
        let p = one_hot(2, 2, &[0, 1, 1, 0]);
        let z = spec(2, 2, 2, vec![1.0, 0.2, -0.4, 0.9, 0.3, 0.5, 0.7, -1.1]);
        let y = spec(1, 2, 2, vec![0.8, 0.1, 0.3, 1.7]);
        let a = delta_snr(&y, &z, &p).unwrap().db;
        for c in [0.01, 3.0, 1e4] {
            let ys = spec(1, 2, 2, vec![0.8 * c, 0.1 * c, 0.3 * c, 1.7 * c]);
            assert!((delta_snr(&ys, &z, &p).unwrap().db - a).abs() < 1e-10);
        }
    }

    #[test]
    fn accuracy_cases() {
        let p = one_hot(2, 3, &[0, 1, 2, 1, 1, 0]);
        assert_eq!(mask_scores(&p, &p).unwrap().accuracy, 1.0);
        // Uniform estimates resolve to class 0: accuracy is the share of class 0.
        assert!((mask_scores(&MaskTriple::uniform(2, 3), &p).unwrap().accuracy - 2.0 / 6.0).abs() < 1e-15);
        let shifted = one_hot(2, 3, &[1, 2, 0, 2, 2, 1]);
        assert_eq!(mask_scores(&shifted, &p).unwrap().accuracy, 0.0);
    }
}
