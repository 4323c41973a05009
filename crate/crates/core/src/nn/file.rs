//! `MBNW` weight files.
//!
//! Layout: magic `"MBNW"`, u16 version, u16 record count, then per record a
//! u8 name length, the name bytes, u8 precision tag, u8 rank, rank × u32
//! dimensions and the payload. Payloads: f32 little-endian, one byte per
//! Q2.6 code, two Q2.2 codes per byte (low nibble first), or packed sign
//! bits as u64 little-endian words. Weight tensors are stored in the model
//! precision, and so are biases except in binary models. Scales and
//! batch-norm tensors are always f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{layout, Arch, MaskNetParams, Tensor, L1_WH, L3_W};
use crate::error::{Error, Result};
use crate::quant::{pack_bits, unpack_bits, Precision};

const MAGIC: &[u8; 4] = b"MBNW";
pub const WEIGHT_FILE_VERSION: u16 = 1;

fn encode_payload(data: &[f64], p: Precision) -> Vec<u8> {
    match p {
        Precision::F32 => data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
        Precision::Q2_6 => data.iter().map(|&v| p.code(v).unwrap_or(0) as i8 as u8).collect(),
        Precision::Q2_2 => data
            .chunks(2)
            .map(|pair| {
                let lo = (p.code(pair[0]).unwrap_or(0) as u8) & 0x0f;
                let hi = pair.get(1).map_or(0, |&v| (p.code(v).unwrap_or(0) as u8) & 0x0f);
                lo | (hi << 4)
            })
            .collect(),
        Precision::Bin1 => pack_bits(data).iter().flat_map(|w| w.to_le_bytes()).collect(),
    }
}

fn payload_len(n: usize, p: Precision) -> usize {
    match p {
        Precision::F32 => 4 * n,
        Precision::Q2_6 => n,
        Precision::Q2_2 => n.div_ceil(2),
        Precision::Bin1 => 8 * n.div_ceil(64),
    }
}

fn decode_payload(bytes: &[u8], n: usize, p: Precision) -> Vec<f64> {
    match p {
        Precision::F32 => bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect(),
        Precision::Q2_6 => bytes.iter().map(|&b| p.decode(b as i8 as i32)).collect(),
        Precision::Q2_2 => (0..n)
            .map(|i| {
                let nib = (bytes[i / 2] >> (4 * (i % 2))) & 0x0f;
                // Sign-extend the 4-bit two's-complement code.
                p.decode(((nib << 4) as i8 >> 4) as i32)
            })
            .collect(),
        Precision::Bin1 => {
            let words: Vec<u64> = bytes
                .chunks_exact(8)
                .map(|b| u64::from_le_bytes(b.try_into().expect("chunk of 8")))
                .collect();
            unpack_bits(&words, n)
        }
    }
}

pub fn write_weights(path: impl AsRef<Path>, params: &MaskNetParams) -> Result<()> {
    params.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&WEIGHT_FILE_VERSION.to_le_bytes())?;
    w.write_all(&(params.tensors.len() as u16).to_le_bytes())?;
    for t in &params.tensors {
        let p = t.role.precision(params.precision);
        w.write_all(&[t.name.len() as u8])?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&[p.tag(), t.shape.len() as u8])?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&encode_payload(&t.data, p))?;
    }
    w.flush()?;
    Ok(())
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

/// Load a weight file. When `expected` is given, the stored model precision
/// must match it.
pub fn read_weights(path: impl AsRef<Path>, expected: Option<Precision>) -> Result<MaskNetParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad weight file magic".into()));
    }
    let version = read_u16(&mut r)?;
    if version != WEIGHT_FILE_VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let count = read_u16(&mut r)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u8(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let p = Precision::from_tag(read_u8(&mut r)?)?;
        let rank = read_u8(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            shape.push(u32::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; payload_len(n, p)];
        r.read_exact(&mut bytes)?;
        records.push((name, p, shape, decode_payload(&bytes, n, p)));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format("trailing bytes after weight records".into()));
    }

    let shape_of = |i: usize| records.get(i).map(|r| r.2.clone()).unwrap_or_default();
    let (l1, l3) = (shape_of(L1_WH), shape_of(L3_W));
    if l1.len() != 4 || l3.len() != 2 {
        return Err(Error::Format("weight file does not contain a mask network".into()));
    }
    let arch = Arch::new(l3[0], l1[3])?;
    let expected_layout = layout(arch);
    if expected_layout.len() != records.len() {
        return Err(Error::Format(format!("expected {} records, found {}", expected_layout.len(), records.len())));
    }
    let model = records[L1_WH].1;
    if let Some(e) = expected {
        if e != model {
            return Err(Error::PrecisionMismatch { expected: e.to_string(), found: model.to_string() });
        }
    }
    let mut tensors = Vec::with_capacity(records.len());
    for ((name, shape, role), (rname, p, rshape, data)) in expected_layout.into_iter().zip(records) {
        if name != rname || shape != rshape {
            return Err(Error::Format(format!("record {rname:?} does not match the expected layout")));
        }
        let want = role.precision(model);
        if p != want {
            return Err(Error::PrecisionMismatch { expected: want.to_string(), found: p.to_string() });
        }
        tensors.push(Tensor { name, shape, role, data });
    }
    let params = MaskNetParams { arch, precision: model, tensors };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_the_effective_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dir = tempfile::tempdir().unwrap();
        for p in Precision::ALL {
            let params = MaskNetParams::init(Arch::new(3, 2).unwrap(), p, &mut rng);
            let path = dir.path().join(format!("{p}.mbnw"));
            write_weights(&path, &params).unwrap();
            let back = read_weights(&path, Some(p)).unwrap();
            let (a, b) = (params.effective(), back.effective());
            for (x, y) in a.iter().zip(&b) {
                for (u, v) in x.iter().zip(y) {
                    assert_eq!(*u as f32, *v as f32);
                }
            }
        }
    }

    #[test]
    fn q2_2_nibbles_sign_extend() {
        let vals = [-2.0, 1.75, -0.25, 0.0, 0.5];
        let enc = encode_payload(&vals, Precision::Q2_2);
        assert_eq!(enc.len(), 3);
        assert_eq!(decode_payload(&enc, 5, Precision::Q2_2), vals.to_vec());
    }

    #[test]
    fn wrong_precision_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mbnw");
        write_weights(&path, &MaskNetParams::init(Arch::new(2, 1).unwrap(), Precision::Q2_6, &mut rng)).unwrap();
        assert!(matches!(read_weights(&path, Some(Precision::Bin1)), Err(Error::PrecisionMismatch { .. })));
        assert_eq!(read_weights(&path, None).unwrap().precision, Precision::Q2_6);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mbnw");
        write_weights(&path, &MaskNetParams::init(Arch::new(2, 1).unwrap(), Precision::F32, &mut rng)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_weights(&path, None).is_err());
    }
}
