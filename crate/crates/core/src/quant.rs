//! Fixed-point and binary precision formats.
//!
//! Q2.6 and Q2.2 are signed two's-complement codes with two integer bits,
//! covering `[-2, 2)`. Rounding is half away from zero and out-of-range
//! values saturate. Binarization maps `x >= 0` to `+1`, so `sign(0) = +1`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    Q2_6,
    Q2_2,
    Bin1,
}

impl Precision {
    pub const ALL: [Precision; 4] = [Precision::F32, Precision::Q2_6, Precision::Q2_2, Precision::Bin1];

    /// Tag byte used in weight files.
    pub fn tag(self) -> u8 {
        match self {
            Self::F32 => 0,
            Self::Q2_6 => 1,
            Self::Q2_2 => 2,
            Self::Bin1 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown precision tag {tag}")))
    }

    pub fn bits(self) -> u32 {
        match self {
            Self::F32 => 32,
            Self::Q2_6 => 8,
            Self::Q2_2 => 4,
            Self::Bin1 => 1,
        }
    }

    /// Quantization step of the fixed-point formats.
    pub fn step(self) -> Option<f64> {
        match self {
            Self::Q2_6 => Some(1.0 / 64.0),
            Self::Q2_2 => Some(0.25),
            _ => None,
        }
    }

    pub fn is_fixed_point(self) -> bool {
        self.step().is_some()
    }

    /// Smallest and largest code of a fixed-point format.
    pub fn code_range(self) -> Option<(i32, i32)> {
        self.step().map(|_| {
            let half = 1i32 << (self.bits() - 1);
            (-half, half - 1)
        })
    }

    /// Smallest and largest representable value.
    pub fn value_range(self) -> Option<(f64, f64)> {
        match self {
            Self::F32 => None,
            Self::Bin1 => Some((-1.0, 1.0)),
            _ => {
                let (lo, hi) = self.code_range()?;
                let s = self.step()?;
                Some((lo as f64 * s, hi as f64 * s))
            }
        }
    }

    /// Integer code of `x`; `None` for `f32`. Binary codes are 1 for `+1` and 0 for `-1`.
    pub fn code(self, x: f64) -> Option<i32> {
        match self {
            Self::F32 => None,
            Self::Bin1 => Some(sign_bit(x) as i32),
            _ => {
                let (lo, hi) = self.code_range()?;
                let r = (x / self.step()?).round();
                let r = if r.is_nan() { 0.0 } else { r };
                Some(r.clamp(lo as f64, hi as f64) as i32)
            }
        }
    }

    pub fn decode(self, code: i32) -> f64 {
        match self {
            Self::F32 => code as f64,
            Self::Bin1 => {
                if code != 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            _ => code as f64 * self.step().unwrap_or(1.0),
        }
    }

    /// Quantize one value onto this format's grid; `f32` rounds to single precision.
    pub fn quantize_value(self, x: f64) -> f64 {
        match self {
            Self::F32 => x as f32 as f64,
            _ => self.decode(self.code(x).unwrap_or(0)),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::F32 => "f32",
            Self::Q2_6 => "q2.6",
            Self::Q2_2 => "q2.2",
            Self::Bin1 => "bin1",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" => Ok(Self::F32),
            "q2.6" | "q2_6" => Ok(Self::Q2_6),
            "q2.2" | "q2_2" => Ok(Self::Q2_2),
            "bin1" => Ok(Self::Bin1),
            _ => Err(Error::InvalidConfig(format!("unknown precision {s:?} (f32, q2.6, q2.2, bin1)"))),
        }
    }
}

/// `true` for `+1`. The single definition of `sign(0) = +1`.
#[inline]
pub fn sign_bit(x: f64) -> bool {
    !(x < 0.0)
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if sign_bit(x) {
        1.0
    } else {
        -1.0
    }
}

/// Pack signs into 64-bit words, LSB first, `+1 -> 1`. Bits past `values.len()` are set.
pub fn pack_bits(values: &[f64]) -> Vec<u64> {
    let words = values.len().div_ceil(64);
    let mut out = vec![u64::MAX; words];
    for (i, &v) in values.iter().enumerate() {
        if !sign_bit(v) {
            out[i / 64] &= !(1u64 << (i % 64));
        }
    }
    out
}

/// Inverse of [`pack_bits`] for the first `n` entries.
pub fn unpack_bits(words: &[u64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if words[i / 64] >> (i % 64) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Float(Vec<f32>),
    Codes(Vec<i8>),
    Bits(Vec<u64>),
}

/// A quantized tensor. `scale` multiplies decoded binary values, e.g. for
/// recurrent matrices whose magnitude is carried separately.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantTensor {
    pub shape: Vec<usize>,
    pub precision: Precision,
    pub payload: Payload,
    pub scale: Option<f32>,
}

impl QuantTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn quantize(x: &[f64], shape: &[usize], precision: Precision) -> Result<QuantTensor> {
    let n: usize = shape.iter().product();
    if n != x.len() {
        return Err(Error::ShapeMismatch(format!("shape {shape:?} holds {n} values, got {}", x.len())));
    }
    let payload = match precision {
        Precision::F32 => Payload::Float(x.iter().map(|&v| v as f32).collect()),
        Precision::Bin1 => Payload::Bits(pack_bits(x)),
        _ => Payload::Codes(x.iter().map(|&v| precision.code(v).unwrap_or(0) as i8).collect()),
    };
    Ok(QuantTensor { shape: shape.to_vec(), precision, payload, scale: None })
}

pub fn dequantize(q: &QuantTensor) -> Vec<f64> {
    let scale = q.scale.map_or(1.0, f64::from);
    match &q.payload {
        Payload::Float(v) => v.iter().map(|&x| x as f64 * scale).collect(),
        Payload::Codes(c) => c.iter().map(|&c| q.precision.decode(c as i32) * scale).collect(),
        Payload::Bits(w) => unpack_bits(w, q.len()).into_iter().map(|x| x * scale).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_times_half_code_range_is_two() {
        for p in [Precision::Q2_6, Precision::Q2_2] {
            let half = (1i64 << (p.bits() - 1)) as f64;
            assert_eq!(p.step().unwrap() * half, 2.0);
        }
    }

    #[test]
    fn q2_6_examples() {
        let p = Precision::Q2_6;
        assert_eq!(p.code(0.5), Some(32));
        assert_eq!(p.quantize_value(0.5), 0.5);
        assert_eq!(p.code(1.23), Some(79));
        assert_eq!(p.quantize_value(1.23), 1.234375);
        assert_eq!(p.quantize_value(3.0), 1.984375);
        assert_eq!(p.quantize_value(-3.0), -2.0);
    }

    #[test]
    fn q2_2_examples() {
        assert_eq!(Precision::Q2_2.quantize_value(0.6), 0.5);
        assert_eq!(Precision::Q2_2.quantize_value(5.0), 1.75);
        assert_eq!(Precision::Q2_2.quantize_value(-5.0), -2.0);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(Precision::Q2_2.quantize_value(0.125), 0.25);
        assert_eq!(Precision::Q2_2.quantize_value(-0.125), -0.25);
        assert_eq!(Precision::Q2_6.code(-1.5 / 64.0), Some(-2));
    }

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(Precision::Bin1.quantize_value(0.0), 1.0);
        assert_eq!(Precision::Bin1.quantize_value(-1e-30), -1.0);
    }

    #[test]
    fn decode_conventions() {
        assert_eq!(Precision::Q2_6.decode(0), 0.0);
        assert_eq!(Precision::Bin1.decode(1), 1.0);
        assert_eq!(Precision::Bin1.decode(0), -1.0);
    }

    #[test]
    fn pack_examples() {
        assert_eq!(pack_bits(&[1.0; 64]), vec![u64::MAX]);
        let alt: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(pack_bits(&alt), vec![0x5555_5555_5555_5555]);
        // Padding bits are ones.
        assert_eq!(pack_bits(&[-1.0; 3]), vec![!0b111]);
        let x: Vec<f64> = (0..70).map(|i| if (i * 7) % 3 == 0 { -1.0 } else { 1.0 }).collect();
        assert_eq!(unpack_bits(&pack_bits(&x), 70), x);
    }

    #[test]
    fn tensor_round_trip_on_codes() {
        let x = [0.3, -1.7, 2.5, 0.0, -0.01];
        for p in Precision::ALL {
            let q = quantize(&x, &[5], p).unwrap();
            let d = dequantize(&q);
            let again = dequantize(&quantize(&d, &[5], p).unwrap());
            assert_eq!(d, again, "{p}");
        }
        assert!(quantize(&x, &[2, 2], Precision::Q2_6).is_err());
    }

    #[test]
    fn precision_names_and_tags() {
        for p in Precision::ALL {
            assert_eq!(p.to_string().parse::<Precision>().unwrap(), p);
            assert_eq!(Precision::from_tag(p.tag()).unwrap(), p);
        }
        assert!(Precision::from_tag(9).is_err());
        assert_eq!("q2_6".parse::<Precision>().unwrap(), Precision::Q2_6);
    }
}
