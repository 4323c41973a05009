//! Oracle-mask beamforming of scenario 2 with every beamformer and PSD mode.
//!
//! Usage: `cargo run --release --example beamforming [seed]`

use maskbeam::beamform::{beamform, BeamformConfig, BeamformerKind, PsdMode};
use maskbeam::metrics::delta_snr;
use maskbeam::room::{build_scenario, MaskTriple, ScenarioConfig};
use maskbeam::stft::StftConfig;

fn main() -> maskbeam::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let sc = build_scenario(&ScenarioConfig { id: 2, seed, stft: StftConfig::with_fft_size(512), ..ScenarioConfig::default() })?;
    let uniform = MaskTriple::uniform(sc.masks.bins(), sc.masks.frames());
    println!("{:<8} {:<10} {:>8} {:>8} {:>10}", "kind", "psd", "oracle", "uniform", "fallbacks");
    for kind in [BeamformerKind::Mvdr, BeamformerKind::GevBan, BeamformerKind::GevPan] {
        for psd in [PsdMode::Block, PsdMode::Recursive, PsdMode::Oja] {
            let cfg = BeamformConfig { kind, psd, ..BeamformConfig::default() };
            let (y, w) = beamform(&sc.mixture, &sc.masks, &cfg)?;
            let (yu, _) = beamform(&sc.mixture, &uniform, &cfg)?;
            let d = delta_snr(&y, &sc.mixture, &sc.masks)?;
            let du = delta_snr(&yu, &sc.mixture, &sc.masks)?;
            let flag = if d.capped { "*" } else { "" };
            println!("{kind:<8} {psd:<10} {:>7.2}{flag:1} {:>8.2} {:>10}", d.db, du.db, w.fallbacks);
        }
    }
    Ok(())
}
