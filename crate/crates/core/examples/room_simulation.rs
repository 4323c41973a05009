//! Image-source impulse responses and a rendered scenario with its masks.

use maskbeam::room::{build_scenario, simulate_rir, ArrayGeometry, RoomSpec, ScenarioConfig};

fn main() -> maskbeam::Result<()> {
    let room = RoomSpec::default();
    let array = ArrayGeometry::circular([3.0, 2.5, 1.2], ArrayGeometry::DEFAULT_DIAMETER, 6);
    let rirs = simulate_rir(&room, &[1.8, 1.6, 1.5], &array, 16000)?;
    for (m, h) in rirs.iter().enumerate() {
        let peak = h.iter().enumerate().fold((0, 0.0f64), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
        let energy: f64 = h.iter().map(|v| v * v).sum();
        println!("mic {m}: {} taps, direct path at sample {}, energy {energy:.3e}", h.len(), peak.0);
    }
    for id in 1..=5 {
        let sc = build_scenario(&ScenarioConfig { id, seed: 7, duration: 2.0, ..ScenarioConfig::default() })?;
        let [s, n, w] = sc.masks.class_frequencies();
        println!("scenario {id}: speech {s:.3}, interference {n:.3}, weak {w:.3}");
    }
    Ok(())
}
