//! Train the mask network on the toy task at every precision and compare.
//!
//! Usage: `cargo run --release --example toy_training [seed]`

use maskbeam::quant::Precision;
use maskbeam::train::{mask_accuracy, plurality_baseline, train, twin_deviation, ToyTask, TrainConfig};

fn main() -> maskbeam::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let (train_set, val_set) = ToyTask::default().generate()?;
    println!("plurality baseline {:.3}", plurality_baseline(&val_set));
    for precision in Precision::ALL {
        let cfg = TrainConfig { precision, seed, ..TrainConfig::default() };
        let start = std::time::Instant::now();
        let out = train(&cfg, &train_set, &val_set)?;
        println!(
            "{precision:>5}: train loss {:.4} -> {:.4}, best validation {:.4} at epoch {}, accuracy {:.3} ({:.1?})",
            out.first_train_loss(),
            out.min_train_loss(),
            out.best_val_loss,
            out.best_epoch,
            mask_accuracy(&out.best, &val_set)?,
            start.elapsed()
        );
        if precision != Precision::F32 {
            println!("       deviation from the f32 twin {:.4}", twin_deviation(&out.best, &val_set)?);
        }
    }
    Ok(())
}
