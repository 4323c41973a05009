//! 16-bit PCM WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::stft::MultiChannel;

/// Reads a 16-bit PCM WAV file into channel-major samples in `[-1, 1)`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(MultiChannel, u32)> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.bits_per_sample != 16 || spec.sample_format != SampleFormat::Int {
        return Err(Error::Format(format!(
            "expected 16-bit PCM, got {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let channels = spec.channels as usize;
    let mut out = vec![Vec::new(); channels];
    for (i, s) in reader.samples::<i16>().enumerate() {
        out[i % channels].push(s? as f64 / 32768.0);
    }
    Ok((out, spec.sample_rate))
}

/// Writes interleaved 16-bit PCM; samples are scaled by 32768 and saturated.
pub fn write_wav(path: impl AsRef<Path>, signal: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    if signal.is_empty() {
        return Err(Error::InvalidConfig("cannot write a WAV with no channels".into()));
    }
    let len = signal[0].len();
    if signal.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch("channels differ in length".into()));
    }
    let spec = WavSpec {
        channels: signal.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for n in 0..len {
        for ch in signal {
            let v = (ch[n] * 32768.0).round().clamp(-32768.0, 32767.0);
            writer.write_sample(v as i16)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_on_the_pcm_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let sig = vec![vec![0.0, 0.5, -1.0, 1234.0 / 32768.0], vec![-0.25, 0.125, 0.0, -3.0 / 32768.0]];
        write_wav(&path, &sig, 16000).unwrap();
        let (back, sr) = read_wav(&path).unwrap();
        assert_eq!(sr, 16000);
        assert_eq!(back, sig);
    }

    #[test]
    fn saturates_out_of_range_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        write_wav(&path, &[vec![2.0, -2.0]], 16000).unwrap();
        let (back, _) = read_wav(&path).unwrap();
        assert_eq!(back[0], vec![32767.0 / 32768.0, -1.0]);
    }
}
