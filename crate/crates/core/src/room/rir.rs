use std::f64::consts::PI;

use rayon::prelude::*;

use super::{distance, ArrayGeometry, Point, RoomSpec};
use crate::error::Result;

/// Length of the Hann-windowed sinc used for fractional delays.
pub const SINC_TAPS: usize = 64;

/// One mirrored source contributing a delayed, attenuated copy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageTap {
    pub position: Point,
    /// Propagation delay in seconds.
    pub delay: f64,
    /// `β^order / (4π d)`
    pub amplitude: f64,
    /// Number of wall reflections.
    pub order: u32,
}

/// Enumerates all image sources up to the room's maximum reflection order.
pub fn image_sources(room: &RoomSpec, source: &Point, mic: &Point) -> Vec<ImageTap> {
    let n = room.max_image_order as i64;
    let mut taps = Vec::new();
    let per_axis = |axis: usize| {
        let mut v = Vec::new();
        for i in -n..=n {
            for u in 0..=1i64 {
                let coord = (1 - 2 * u) as f64 * source[axis] + 2.0 * i as f64 * room.dimensions[axis];
                let refl = ((i - u).abs() + i.abs()) as u32;
                if refl <= room.max_image_order {
                    v.push((coord, refl));
                }
            }
        }
        v
    };
    let (xs, ys, zs) = (per_axis(0), per_axis(1), per_axis(2));
    for &(x, rx) in &xs {
        for &(y, ry) in &ys {
            for &(z, rz) in &zs {
                let order = rx + ry + rz;
                if order > room.max_image_order {
                    continue;
                }
                let position = [x, y, z];
                let d = distance(&position, mic);
                let gain = if order == 0 { 1.0 } else { room.reflection.powi(order as i32) };
                if gain == 0.0 {
                    continue;
                }
                taps.push(ImageTap {
                    position,
                    delay: d / room.speed_of_sound,
                    amplitude: gain / (4.0 * PI * d),
                    order,
                });
            }
        }
    }
    taps
}

fn windowed_sinc(x: f64) -> f64 {
    let half = SINC_TAPS as f64 / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    let w = 0.5 * (1.0 + (PI * x / half).cos());
    let s = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    w * s
}

/// Room impulse responses from `source` to every microphone, sampled at
/// `sample_rate`. All responses share the same length.
pub fn simulate_rir(room: &RoomSpec, source: &Point, array: &ArrayGeometry, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    room.validate()?;
    room.check_inside(source)?;
    for mic in &array.mic_positions {
        room.check_inside(mic)?;
    }
    let fs = sample_rate as f64;
    let taps: Vec<Vec<ImageTap>> = array
        .mic_positions
        .par_iter()
        .map(|mic| image_sources(room, source, mic))
        .collect();
    let max_delay = taps.iter().flatten().map(|t| t.delay).fold(0.0, f64::max);
    let len = (max_delay * fs).ceil() as usize + SINC_TAPS / 2 + 1;
    let half = (SINC_TAPS / 2) as i64;

    Ok(taps
        .par_iter()
        .map(|mic_taps| {
            let mut h = vec![0.0; len];
            for tap in mic_taps {
                let tau = tap.delay * fs;
                let lo = ((tau.ceil() as i64) - half).max(0);
                let hi = ((tau.floor() as i64) + half).min(len as i64 - 1);
                for n in lo..=hi {
                    h[n as usize] += tap.amplitude * windowed_sinc(n as f64 - tau);
                }
            }
            h
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn single_mic(p: Point) -> ArrayGeometry {
        ArrayGeometry::new(vec![p])
    }

    #[test]
    fn order_zero_is_a_single_direct_tap() {
        let room = RoomSpec { max_image_order: 0, ..Default::default() };
        // 20 samples of delay at 16 kHz.
        let d = 20.0 * 343.0 / 16000.0;
        let src = [1.0, 1.0, 1.0];
        let mic = [1.0 + d, 1.0, 1.0];
        let h = simulate_rir(&room, &src, &single_mic(mic), 16000).unwrap();
        let amp = 1.0 / (4.0 * PI * d);
        assert!((h[0][20] - amp).abs() < 1e-12);
        for (n, v) in h[0].iter().enumerate() {
            if n != 20 {
                assert!(v.abs() < 1e-12 * amp, "tap {n} = {v}");
            }
        }
    }

    #[test]
    fn first_order_images_match_hand_enumeration() {
        let room = RoomSpec { dimensions: [10.0, 2.0, 3.0], max_image_order: 1, ..Default::default() };
        let s = [2.0, 0.5, 1.0];
        let mic = [7.0, 1.5, 2.0];
        let taps = image_sources(&room, &s, &mic);
        let mut first: Vec<Point> = taps.iter().filter(|t| t.order == 1).map(|t| t.position).collect();
        let mut expected = vec![
            [-2.0, 0.5, 1.0],
            [18.0, 0.5, 1.0],
            [2.0, -0.5, 1.0],
            [2.0, 3.5, 1.0],
            [2.0, 0.5, -1.0],
            [2.0, 0.5, 5.0],
        ];
        let key = |p: &Point| (p[0] * 1e3) as i64 * 1_000_000 + (p[1] * 1e3) as i64 * 1000 + (p[2] * 1e3) as i64;
        first.sort_by_key(key);
        expected.sort_by_key(key);
        assert_eq!(first, expected);
        assert_eq!(taps.len(), 7);
        for t in taps.iter().filter(|t| t.order == 1) {
            let d = distance(&t.position, &mic);
            assert!((t.delay - d / 343.0).abs() < 1e-15);
            assert!((t.amplitude - 0.85 / (4.0 * PI * d)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_reflection_reduces_to_direct_path() {
        let src = [1.2, 3.1, 1.4];
        let array = ArrayGeometry::circular([3.0, 2.5, 1.2], 0.086, 4);
        let direct = simulate_rir(&RoomSpec { max_image_order: 0, ..Default::default() }, &src, &array, 16000).unwrap();
        let dead = simulate_rir(&RoomSpec { reflection: 0.0, max_image_order: 3, ..Default::default() }, &src, &array, 16000)
            .unwrap();
        for (a, b) in direct.iter().zip(&dead) {
            let n = a.len().min(b.len());
            assert!(a[..n].iter().zip(&b[..n]).all(|(x, y)| (x - y).abs() < 1e-15));
            assert!(b[n..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn energy_grows_with_reflection() {
        let src = [1.2, 3.1, 1.4];
        let array = ArrayGeometry::circular([3.0, 2.5, 1.2], 0.086, 2);
        let energy = |beta: f64| {
            let room = RoomSpec { reflection: beta, ..Default::default() };
            simulate_rir(&room, &src, &array, 16000).unwrap()[0].iter().map(|v| v * v).sum::<f64>()
        };
        let e: Vec<f64> = [0.0, 0.3, 0.6, 0.85].iter().map(|&b| energy(b)).collect();
        assert!(e.windows(2).all(|w| w[1] > w[0]), "{e:?}");
    }

    #[test]
    fn source_outside_room_is_an_error() {
        let array = ArrayGeometry::circular([3.0, 2.5, 1.2], 0.086, 2);
        let err = simulate_rir(&RoomSpec::default(), &[7.0, 1.0, 1.0], &array, 16000);
        assert!(matches!(err, Err(Error::OutsideRoom(_))));
    }
}
