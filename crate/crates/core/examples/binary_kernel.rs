//! Binary xnor/popcount products against a naive f32 product.
//!
//! Usage: `cargo run --release --example binary_kernel [sizes...]`

use maskbeam::binkernel::{bench_matmul, write_bench_csv};

fn main() -> maskbeam::Result<()> {
    let mut sizes: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if sizes.is_empty() {
        sizes = vec![64, 128, 256, 512, 1024];
    }
    let rows = bench_matmul(&sizes, 3, 0)?;
    write_bench_csv(std::io::stdout().lock(), &rows)?;
    if rows.iter().any(|r| !r.exact) {
        eprintln!("binary product differs from the float product");
    }
    Ok(())
}
