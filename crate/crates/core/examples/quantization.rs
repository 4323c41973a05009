//! Quantize random weights in every precision.

use maskbeam::quant::{dequantize, quantize, Payload, Precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> maskbeam::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-2.5..2.5)).collect();
    for p in Precision::ALL {
        let q = quantize(&x, &[64, 64], p)?;
        let y = dequantize(&q);
        let payload = match &q.payload {
            Payload::Float(v) => format!("{} floats", v.len()),
            Payload::Codes(v) => format!("{} codes", v.len()),
            Payload::Bits(v) => format!("{} words", v.len()),
        };
        match p.value_range() {
            Some((lo, hi)) if p.is_fixed_point() => {
                let err = x
                    .iter()
                    .zip(&y)
                    .filter(|(v, _)| (lo..=hi).contains(*v))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                println!("{p:>5}: {payload}, range [{lo}, {hi}], max in-range error {err:.4}");
            }
            _ => {
                let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                println!("{p:>5}: {payload}, max error {err:.4}");
            }
        }
    }
    Ok(())
}
