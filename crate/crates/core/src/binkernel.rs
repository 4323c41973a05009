//! Bit-packed ±1 linear algebra and a float-vs-binary matmul benchmark.
//!
//! The signed dot product of two ±1 vectors of length `n` packed with
//! `+1 -> 1` is `2·popc(xnor(x, y)) − n`: every matching position
//! contributes `+1`, every mismatch `−1`.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quant::pack_bits;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedBitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl PackedBitMatrix {
    /// Pack a row-major matrix by sign, `x >= 0 -> +1`.
    pub fn from_signs(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::with_words_per_row(rows, cols, values, cols.div_ceil(64))
    }

    /// Like [`from_signs`](Self::from_signs) but with extra all-ones padding words per row.
    pub fn with_words_per_row(rows: usize, cols: usize, values: &[f64], words_per_row: usize) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, values.len())));
        }
        if words_per_row < cols.div_ceil(64) {
            return Err(Error::InvalidConfig(format!("{words_per_row} words cannot hold {cols} columns")));
        }
        let mut data = vec![u64::MAX; rows * words_per_row];
        for r in 0..rows {
            let packed = pack_bits(&values[r * cols..(r + 1) * cols]);
            data[r * words_per_row..r * words_per_row + packed.len()].copy_from_slice(&packed);
        }
        Ok(Self { rows, cols, words_per_row, data })
    }

    /// Pack the transpose of a row-major `rows × cols` matrix.
    pub fn transposed_from_signs(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, values.len())));
        }
        let t: Vec<f64> = (0..cols).flat_map(|c| (0..rows).map(move |r| values[r * cols + c])).collect();
        Self::from_signs(cols, rows, &t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub fn as_words(&self) -> &[u64] {
        &self.data
    }

    pub fn unpack(&self) -> Vec<f64> {
        (0..self.rows).flat_map(|r| crate::quant::unpack_bits(self.row(r), self.cols)).collect()
    }
}

#[inline]
fn tail_mask(n: usize) -> u64 {
    match n % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[inline]
fn matches(x: &[u64], y: &[u64], n: usize) -> u32 {
    let full = n / 64;
    let mut count = 0u32;
    for i in 0..full {
        count += (!(x[i] ^ y[i])).count_ones();
    }
    if n % 64 != 0 {
        count += (!(x[full] ^ y[full]) & tail_mask(n)).count_ones();
    }
    count
}

/// `Σ x_i y_i` for packed ±1 rows of true length `n`.
pub fn binary_dot(x: &[u64], y: &[u64], n: usize) -> Result<i64> {
    let need = n.div_ceil(64);
    if x.len() < need || y.len() < need {
        return Err(Error::ShapeMismatch(format!("rows of {} and {} words cannot hold {n} entries", x.len(), y.len())));
    }
    Ok(2 * matches(x, y, n) as i64 - n as i64)
}

/// `Σ_{i: mask_i} x_i y_i`, for ternary operands whose zeros are cleared in `mask`.
pub fn binary_dot_masked(x: &[u64], y: &[u64], mask: &[u64], n: usize) -> Result<i64> {
    let need = n.div_ceil(64);
    if x.len() < need || y.len() < need || mask.len() < need {
        return Err(Error::ShapeMismatch(format!("operands too short for {n} entries")));
    }
    let mut hits = 0i64;
    let mut active = 0i64;
    for i in 0..need {
        let m = if i + 1 == need { mask[i] & tail_mask(n) } else { mask[i] };
        hits += (!(x[i] ^ y[i]) & m).count_ones() as i64;
        active += m.count_ones() as i64;
    }
    Ok(2 * hits - active)
}

fn check_inner(a: &PackedBitMatrix, bt: &PackedBitMatrix) -> Result<()> {
    if a.cols != bt.cols {
        return Err(Error::ShapeMismatch(format!("inner dimensions {} and {} differ", a.cols, bt.cols)));
    }
    Ok(())
}

fn fill_row(a: &PackedBitMatrix, bt: &PackedBitMatrix, i: usize, out: &mut [i32]) {
    let n = a.cols;
    let x = a.row(i);
    for (j, c) in out.iter_mut().enumerate() {
        *c = 2 * matches(x, bt.row(j), n) as i32 - n as i32;
    }
}

/// `C = A · B` where `bt` holds the rows of `Bᵀ`. Result is row-major `a.rows × bt.rows`.
pub fn binary_matmul(a: &PackedBitMatrix, bt: &PackedBitMatrix) -> Result<Vec<i32>> {
    check_inner(a, bt)?;
    let mut c = vec![0i32; a.rows * bt.rows];
    if bt.rows > 0 {
        for (i, row) in c.chunks_mut(bt.rows).enumerate() {
            fill_row(a, bt, i, row);
        }
    }
    Ok(c)
}

/// Row-sharded parallel version of [`binary_matmul`]; bit-identical results.
pub fn binary_matmul_par(a: &PackedBitMatrix, bt: &PackedBitMatrix) -> Result<Vec<i32>> {
    check_inner(a, bt)?;
    let mut c = vec![0i32; a.rows * bt.rows];
    if bt.rows > 0 {
        c.par_chunks_mut(bt.rows).enumerate().for_each(|(i, row)| fill_row(a, bt, i, row));
    }
    Ok(c)
}

/// Naive single-precision `C = A · B` with `A: n × k`, `B: k × m`, i-k-j loop order.
pub fn naive_matmul_f32(a: &[f32], b: &[f32], n: usize, k: usize, m: usize) -> Result<Vec<f32>> {
    if a.len() != n * k || b.len() != k * m {
        return Err(Error::ShapeMismatch(format!("operands do not match {n}x{k} · {k}x{m}")));
    }
    let mut c = vec![0.0f32; n * m];
    for i in 0..n {
        let crow = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * m..(p + 1) * m];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub time_float_ms: f64,
    pub time_binary_ms: f64,
    pub speedup: f64,
    /// Binary result equalled the float oracle.
    pub exact: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Time square `size × size` products of random ±1 matrices on the calling thread.
///
/// Reports the median over `reps` runs of each kernel. Packing is not timed.
pub fn bench_matmul(sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("benchmark needs at least one repetition".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 {
            return Err(Error::InvalidConfig("matrix size must be positive".into()));
        }
        let a: Vec<f64> = (0..size * size).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let b: Vec<f64> = (0..size * size).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let af: Vec<f32> = a.iter().map(|&x| x as f32).collect();
        let bf: Vec<f32> = b.iter().map(|&x| x as f32).collect();
        let pa = PackedBitMatrix::from_signs(size, size, &a)?;
        let pbt = PackedBitMatrix::transposed_from_signs(size, size, &b)?;

        // Warm-up doubles as the exactness check.
        let cf = naive_matmul_f32(&af, &bf, size, size, size)?;
        let cb = binary_matmul(&pa, &pbt)?;
        let exact = cf.iter().zip(&cb).all(|(f, b)| *f == *b as f32);

        let mut tf = Vec::with_capacity(reps);
        let mut tb = Vec::with_capacity(reps);
        for _ in 0..reps {
            let start = Instant::now();
            std::hint::black_box(naive_matmul_f32(std::hint::black_box(&af), &bf, size, size, size)?);
            tf.push(start.elapsed().as_secs_f64() * 1e3);
            let start = Instant::now();
            std::hint::black_box(binary_matmul(std::hint::black_box(&pa), &pbt)?);
            tb.push(start.elapsed().as_secs_f64() * 1e3);
        }
        let (time_float_ms, time_binary_ms) = (median(tf), median(tb));
        rows.push(BenchRow { size, time_float_ms, time_binary_ms, speedup: time_float_ms / time_binary_ms, exact });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(mut out: W, rows: &[BenchRow]) -> Result<()> {
    writeln!(out, "size,time_float_ms,time_binary_ms,speedup")?;
    for r in rows {
        writeln!(out, "{},{:.4},{:.4},{:.2}", r.size, r.time_float_ms, r.time_binary_ms, r.speedup)?;
    }
    Ok(())
}
