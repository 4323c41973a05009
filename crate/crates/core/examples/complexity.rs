//! Weight and MAC counts of the mask network and the GEV beamformer.
//!
//! Usage: `cargo run --example complexity [mics bins frames]`

use maskbeam::nn::complexity_report;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (m, k, t) = match args[..] {
        [m, k, t] => (m, k, t),
        _ => (6, 513, 500),
    };
    print!("{}", complexity_report(m, k, t));
}
