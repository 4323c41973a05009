use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maskbeam::config::KeyValues;
use maskbeam::pipeline::{cmd_bench, cmd_enhance, cmd_evaluate, cmd_report, cmd_simulate, cmd_train, exit_code};

#[derive(Parser)]
#[command(name = "maskbeam", version, about = "Mask-driven beamforming toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key=value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// f32, q2.6, q2.2 or bin1.
    #[arg(long, global = true)]
    precision: Option<String>,
    /// mvdr, gev-ban or gev-pan.
    #[arg(long, global = true)]
    beamformer: Option<String>,
    /// block, recursive or oja.
    #[arg(long, global = true)]
    psd: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Render scenario utterances with target masks.
    Simulate,
    /// Train the mask network.
    Train,
    /// Beamform one utterance.
    Enhance,
    /// Time the binary matrix kernel against float.
    Bench,
    /// Print network and beamformer complexity.
    Report,
    /// Score beamformer and mask combinations over a dataset.
    Evaluate,
}

fn build_config(cli: &Cli) -> maskbeam::Result<KeyValues> {
    let mut kv = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    if let Some(s) = cli.seed {
        kv.set("seed", s);
    }
    for (key, v) in [("precision", &cli.precision), ("beamformer", &cli.beamformer), ("psd", &cli.psd)] {
        if let Some(v) = v {
            kv.set(key, v);
        }
    }
    if let Some(o) = &cli.out {
        kv.set("out", o.display());
    }
    for pair in &cli.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| maskbeam::Error::InvalidConfig(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

fn run(cli: &Cli) -> maskbeam::Result<()> {
    let kv = build_config(cli)?;
    match cli.command {
        Command::Simulate => {
            let out = cmd_simulate(&kv)?;
            println!("{} utterances in {} (manifest {})", out.utterances.len(), out.dir.display(), out.manifest_sha256);
        }
        Command::Train => {
            let out = cmd_train(&kv)?;
            println!("best validation loss {:.5} at epoch {}", out.best_val_loss, out.best_epoch);
        }
        Command::Enhance => {
            let r = cmd_enhance(&kv)?;
            println!("{}", r.csv_row());
        }
        Command::Bench => {
            for r in cmd_bench(&kv)? {
                println!("size {:5}: float {:9.3} ms, binary {:8.3} ms, speedup {:6.2}", r.size, r.time_float_ms, r.time_binary_ms, r.speedup);
            }
        }
        Command::Report => print!("{}", cmd_report(&kv)?),
        Command::Evaluate => {
            println!("{}", maskbeam::metrics::EVAL_CSV_HEADER);
            for r in cmd_evaluate(&kv)? {
                println!("{}", r.csv_row());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
