//! Estimate masks for a simulated utterance with an untrained network in
//! each precision, and round-trip the weights through a weight file.

use maskbeam::metrics::mask_scores;
use maskbeam::nn::{extract_features, mask_net_forward, read_weights, write_weights, Arch, MaskNetParams};
use maskbeam::quant::Precision;
use maskbeam::room::{build_scenario, ScenarioConfig};
use maskbeam::stft::StftConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> maskbeam::Result<()> {
    let sc = build_scenario(&ScenarioConfig {
        id: 2,
        mics: 2,
        duration: 1.0,
        stft: StftConfig::with_fft_size(64),
        ..ScenarioConfig::default()
    })?;
    let features = extract_features(&sc.mixture)?;
    let arch = Arch::new(features.bins, features.mics)?;
    let dir = std::env::temp_dir();
    for p in Precision::ALL {
        let params = MaskNetParams::init(arch, p, &mut ChaCha8Rng::seed_from_u64(0));
        let path = dir.join(format!("maskbeam_example_{p}.mbnw"));
        write_weights(&path, &params)?;
        let loaded = read_weights(&path, Some(p))?;
        let masks = mask_net_forward(&loaded, &features)?;
        let scores = mask_scores(&masks, &sc.masks)?;
        let bytes = std::fs::metadata(&path)?.len();
        std::fs::remove_file(&path)?;
        println!(
            "{p:>5}: {} weights, file {bytes} bytes, sum defect {:.1e}, cross-entropy {:.4}",
            loaded.num_weights(),
            masks.max_sum_defect(),
            scores.cross_entropy
        );
    }
    Ok(())
}
