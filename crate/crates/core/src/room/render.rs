use rayon::prelude::*;

use super::{simulate_rir, ArrayGeometry, RoomSpec, SourceTrajectory, TrajectoryKind};
use crate::error::{Error, Result};
use crate::stft::MultiChannel;

/// A moving source gets a fresh set of impulse responses every 32 ms.
pub const SEGMENT_SECONDS: f64 = 0.032;

/// Direct convolution truncated to `out.len()`, accumulated into `out`.
fn convolve_into(out: &mut [f64], x: &[f64], offset: usize, h: &[f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let start = offset + i;
        if start >= out.len() {
            break;
        }
        let n = h.len().min(out.len() - start);
        for (o, &hv) in out[start..start + n].iter_mut().zip(&h[..n]) {
            *o += xi * hv;
        }
    }
}

/// Renders a monaural signal at every microphone.
///
/// Static sources are convolved with one set of impulse responses. Moving
/// sources are split into 32 ms segments, each convolved with the responses
/// at the segment's midpoint position; neighbouring segments overlap with
/// complementary linear ramps `crossfade` samples long, so the weights always
/// sum to one. The output has the same length as `mono`.
pub fn render_source(
    mono: &[f64],
    traj: &SourceTrajectory,
    room: &RoomSpec,
    array: &ArrayGeometry,
    sample_rate: u32,
    crossfade: usize,
) -> Result<MultiChannel> {
    traj.validate()?;
    let fs = sample_rate as f64;
    let duration = mono.len() as f64 / fs;
    if traj.end_time() + 1e-9 < duration {
        return Err(Error::TrajectoryTooShort { covered: traj.end_time(), needed: duration });
    }
    let m = array.num_mics();
    let len = mono.len();

    if traj.kind == TrajectoryKind::Static {
        let h = simulate_rir(room, &traj.position_at(0.0), array, sample_rate)?;
        return Ok(h
            .par_iter()
            .map(|hm| {
                let mut out = vec![0.0; len];
                convolve_into(&mut out, mono, 0, hm);
                out
            })
            .collect());
    }

    let seg = ((SEGMENT_SECONDS * fs).round() as usize).max(1);
    let fade = crossfade.min(seg).max(1);
    let half = fade as f64 / 2.0;
    let segments = len.div_ceil(seg);

    // Weight of segment `i` at sample `n`: a trapezoid with linear ramps
    // centred on the segment boundaries.
    let weight = |i: usize, n: usize| -> f64 {
        let n = n as f64 + 0.5;
        let start = (i * seg) as f64;
        let end = ((i + 1) * seg) as f64;
        let rise = if i == 0 { 1.0 } else { ((n - (start - half)) / fade as f64).clamp(0.0, 1.0) };
        let fall = if i + 1 == segments { 1.0 } else { (((end + half) - n) / fade as f64).clamp(0.0, 1.0) };
        rise.min(fall)
    };

    let pieces: Vec<Result<MultiChannel>> = (0..segments)
        .into_par_iter()
        .map(|i| {
            let lo = (i * seg).saturating_sub(fade / 2 + 1);
            let hi = ((i + 1) * seg + fade / 2 + 1).min(len);
            let piece: Vec<f64> = (lo..hi).map(|n| mono[n] * weight(i, n)).collect();
            let t_mid = ((i as f64 + 0.5) * seg as f64 / fs).min(duration);
            let h = simulate_rir(room, &traj.position_at(t_mid), array, sample_rate)?;
            Ok(h
                .iter()
                .map(|hm| {
                    let mut out = vec![0.0; len];
                    convolve_into(&mut out, &piece, lo, hm);
                    out
                })
                .collect())
        })
        .collect();

    let mut out = vec![vec![0.0; len]; m];
    for piece in pieces {
        for (o, p) in out.iter_mut().zip(piece?) {
            o.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
    }
    Ok(out)
}
