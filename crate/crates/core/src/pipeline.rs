//! Reproducible command runs: simulation, training, enhancement,
//! evaluation, benchmarking and the complexity report.
//!
//! Every command reads a flat `key=value` config, writes its artifacts into
//! `out` and finishes with a `manifest.txt` recording the command, crate
//! version, seed, config hash and the SHA-256 of each output file.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::beamform::{beamform, BeamformConfig, BeamformerKind, PsdMode, DEFAULT_WINDOW};
use crate::binkernel::{bench_matmul, write_bench_csv, BenchRow};
use crate::config::{hex_digest, KeyValues};
use crate::error::{Error, Result};
use crate::metrics::{delta_snr, mask_scores, write_eval_csv, EvalReport};
use crate::nn::{complexity_report, extract_features, mask_net_forward, read_weights, write_weights, ComplexityReport, MaskNetParams};
use crate::quant::Precision;
use crate::room::{build_scenario, read_mask_file, write_mask_file, MaskTriple, ScenarioConfig};
use crate::stft::{istft, stft, ComplexSpectrogram, StftConfig};
use crate::train::{train, Example, ToyTask, TrainConfig, TrainOutcome};
use crate::wav::{read_wav, write_wav};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.txt";
/// Peak level of the loudest simulated signal in the written WAVs.
pub const WAV_PEAK: f64 = 0.9;

/// Process exit code for an error: 2 for invalid configuration, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::UnknownScenario(_) | Error::PrecisionMismatch { .. } => 2,
        _ => 1,
    }
}

/// Run record written next to a command's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub info: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    /// The config hash leaves out `out`, so runs differing only in their
    /// output directory share it.
    pub fn new(command: &str, kv: &KeyValues) -> Result<Self> {
        let mut hashed = kv.clone();
        hashed.remove("out");
        Ok(Self {
            command: command.into(),
            seed: kv.get_or("seed", 0u64)?,
            config_sha256: hashed.hash_hex(),
            info: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.info.push((key.into(), value.to_string()));
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.outputs.push((name, hex_digest(&fs::read(path)?)));
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut s = format!(
            "command={}\nversion={VERSION}\nseed={}\nconfig_sha256={}\n",
            self.command, self.seed, self.config_sha256
        );
        for (k, v) in &self.info {
            s.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.outputs {
            s.push_str(&format!("output.{k}={v}\n"));
        }
        s
    }

    /// Writes `manifest.txt` into `dir`; returns the manifest's own SHA-256.
    pub fn write(&self, dir: &Path) -> Result<String> {
        let text = self.text();
        fs::write(dir.join(MANIFEST), &text)?;
        Ok(hex_digest(text.as_bytes()))
    }
}

fn out_dir(kv: &KeyValues) -> Result<PathBuf> {
    let dir = PathBuf::from(kv.require::<String>("out")?);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn existing(kv: &KeyValues, key: &str) -> Result<PathBuf> {
    let p = PathBuf::from(kv.require::<String>(key)?);
    if !p.exists() {
        return Err(Error::InvalidConfig(format!("{key} refers to a missing path: {}", p.display())));
    }
    Ok(p)
}

fn stft_from_kv(kv: &KeyValues) -> Result<StftConfig> {
    let d = StftConfig::default();
    let fft_size = kv.get_or("fft_size", d.fft_size)?;
    let cfg = StftConfig {
        fft_size,
        hop: kv.get_or("hop", fft_size / 4)?,
        sample_rate: kv.get_or("sample_rate", d.sample_rate)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn beamform_from_kv(kv: &KeyValues) -> Result<BeamformConfig> {
    let cfg = BeamformConfig {
        kind: kv.get_or("beamformer", BeamformerKind::GevBan)?,
        psd: kv.get_or("psd", PsdMode::Block)?,
        window: kv.get_or("window", DEFAULT_WINDOW)?,
    };
    if cfg.window == 0 {
        return Err(Error::InvalidConfig("window must be positive".into()));
    }
    Ok(cfg)
}

#[derive(Clone, Debug)]
pub struct SimulateOutput {
    pub dir: PathBuf,
    pub utterances: Vec<String>,
    pub manifest_sha256: String,
}

/// Renders `count` utterances of one scenario (seeds `seed`, `seed+1`, …)
/// as `uttNNN_{mix,clean,interf}.wav` plus `uttNNN.mbmk` target masks.
pub fn cmd_simulate(kv: &KeyValues) -> Result<SimulateOutput> {
    let base = ScenarioConfig::from_kv(kv)?;
    let count: usize = kv.get_or("count", 1)?;
    if count == 0 {
        return Err(Error::InvalidConfig("count must be positive".into()));
    }
    let dir = out_dir(kv)?;
    let mut manifest = Manifest::new("simulate", kv)?;
    manifest.note("scenario", base.id);
    manifest.note("count", count);
    manifest.note("fft_size", base.stft.fft_size);
    manifest.note("hop", base.stft.hop);
    manifest.note("sample_rate", base.stft.sample_rate);
    let mut names = Vec::with_capacity(count);
    for i in 0..count {
        let cfg = ScenarioConfig { seed: base.seed.wrapping_add(i as u64), ..base.clone() };
        let sc = build_scenario(&cfg)?;
        let signals = [istft(&sc.mixture)?, istft(&sc.clean)?, istft(&sc.interference)?];
        let peak = signals.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let gain = if peak > 0.0 { WAV_PEAK / peak } else { 1.0 };
        let name = format!("utt{i:03}");
        for (sig, suffix) in signals.iter().zip(["mix", "clean", "interf"]) {
            let scaled: Vec<Vec<f64>> = sig.iter().map(|c| c.iter().map(|v| v * gain).collect()).collect();
            let path = dir.join(format!("{name}_{suffix}.wav"));
            write_wav(&path, &scaled, cfg.stft.sample_rate)?;
            manifest.add_output(&path)?;
        }
        let mpath = dir.join(format!("{name}.mbmk"));
        write_mask_file(&mpath, &sc.masks)?;
        manifest.add_output(&mpath)?;
        manifest.note(&format!("{name}.gain"), format!("{gain:.9}"));
        info!("simulated {name} (scenario {}, seed {})", cfg.id, cfg.seed);
        names.push(name);
    }
    let manifest_sha256 = manifest.write(&dir)?;
    Ok(SimulateOutput { dir, utterances: names, manifest_sha256 })
}

/// One utterance of a simulated dataset.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub name: String,
    pub mixture: ComplexSpectrogram,
    pub masks: MaskTriple,
}

/// Loads every utterance listed by a dataset directory's manifest.
pub fn load_dataset(dir: &Path) -> Result<Vec<Utterance>> {
    let manifest = dir.join(MANIFEST);
    if !manifest.exists() {
        return Err(Error::InvalidConfig(format!("{} has no {MANIFEST}", dir.display())));
    }
    let kv = KeyValues::load(&manifest)?;
    let cfg = stft_from_kv(&kv)?;
    let count: usize = kv.require("count")?;
    (0..count)
        .map(|i| {
            let name = format!("utt{i:03}");
            let (signal, _) = read_wav(dir.join(format!("{name}_mix.wav")))?;
            let mixture = stft(&signal, &cfg)?;
            let masks = read_mask_file(dir.join(format!("{name}.mbmk")))?;
            if (masks.bins(), masks.frames()) != (mixture.bins(), mixture.frames()) {
                return Err(Error::ShapeMismatch(format!("{name}: masks do not match the mixture")));
            }
            Ok(Utterance { name, mixture, masks })
        })
        .collect()
}

/// Where the beamformer's masks come from.
#[derive(Clone, Debug)]
pub enum MaskSource {
    Oracle,
    Uniform,
    Network(Box<MaskNetParams>),
}

impl MaskSource {
    pub fn label(&self) -> String {
        match self {
            Self::Oracle => "oracle".into(),
            Self::Uniform => "uniform".into(),
            Self::Network(p) => p.precision.to_string(),
        }
    }

    pub fn masks(&self, z: &ComplexSpectrogram, oracle: &MaskTriple) -> Result<MaskTriple> {
        match self {
            Self::Oracle => Ok(oracle.clone()),
            Self::Uniform => Ok(MaskTriple::uniform(z.bins(), z.frames())),
            Self::Network(p) => mask_net_forward(p, &extract_features(z)?),
        }
    }
}

fn mask_source(kv: &KeyValues, kind: &str) -> Result<MaskSource> {
    match kind {
        "oracle" => Ok(MaskSource::Oracle),
        "uniform" => Ok(MaskSource::Uniform),
        "network" => {
            let path = existing(kv, "weights")?;
            let expected: Option<Precision> = match kv.get("precision") {
                Some(_) => Some(kv.require("precision")?),
                None => None,
            };
            Ok(MaskSource::Network(Box::new(read_weights(path, expected)?)))
        }
        other => Err(Error::InvalidConfig(format!("unknown mask source {other:?}; expected oracle, uniform or network"))),
    }
}

/// Masks, beamformer, filter-and-sum and ΔSNR against the reference masks.
pub fn enhance(
    z: &ComplexSpectrogram,
    reference: &MaskTriple,
    source: &MaskSource,
    cfg: &BeamformConfig,
    scenario: &str,
) -> Result<(ComplexSpectrogram, EvalReport)> {
    let masks = source.masks(z, reference)?;
    let (y, _) = beamform(z, &masks, cfg)?;
    let d = delta_snr(&y, z, reference)?;
    let scores = mask_scores(&masks, reference)?;
    let report = EvalReport {
        scenario: scenario.into(),
        beamformer: cfg.kind.to_string(),
        psd: cfg.psd.to_string(),
        precision: source.label(),
        delta_snr_db: d.db,
        capped: d.capped,
        mask_cross_entropy: scores.cross_entropy,
        mask_accuracy: scores.accuracy,
    };
    Ok((y, report))
}

/// Enhances `input` (with `reference_masks`), or a freshly simulated
/// scenario when no input is given. Writes `enhanced.wav` and `eval.csv`.
pub fn cmd_enhance(kv: &KeyValues) -> Result<EvalReport> {
    let bf = beamform_from_kv(kv)?;
    let source = mask_source(kv, kv.get("masks").unwrap_or("oracle"))?;
    let (z, reference, label) = if kv.contains("input") {
        let input = existing(kv, "input")?;
        let (signal, _) = read_wav(&input)?;
        let z = stft(&signal, &stft_from_kv(kv)?)?;
        let reference = read_mask_file(existing(kv, "reference_masks")?)?;
        (z, reference, input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
    } else {
        let sc = build_scenario(&ScenarioConfig::from_kv(kv)?)?;
        let label = format!("scenario{}", sc.config.id);
        (sc.mixture, sc.masks, label)
    };
    let dir = out_dir(kv)?;
    let (y, report) = enhance(&z, &reference, &source, &bf, &label)?;
    let mut manifest = Manifest::new("enhance", kv)?;
    let wav = dir.join("enhanced.wav");
    let signal = istft(&y)?;
    let peak = signal.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 1.0 { WAV_PEAK / peak } else { 1.0 };
    let scaled: Vec<Vec<f64>> = signal.iter().map(|c| c.iter().map(|v| v * gain).collect()).collect();
    write_wav(&wav, &scaled, z.config.sample_rate)?;
    manifest.add_output(&wav)?;
    let csv = dir.join("eval.csv");
    write_eval_csv(&csv, std::slice::from_ref(&report))?;
    manifest.add_output(&csv)?;
    manifest.note("delta_snr_db", format!("{:.6}", report.delta_snr_db));
    manifest.write(&dir)?;
    info!("{}: delta SNR {:.2} dB", report.scenario, report.delta_snr_db);
    Ok(report)
}

/// Every combination of beamformer, PSD mode and mask source over a dataset.
pub fn cmd_evaluate(kv: &KeyValues) -> Result<Vec<EvalReport>> {
    let data = load_dataset(&existing(kv, "data")?)?;
    let kinds: Vec<BeamformerKind> = kv.list_or("beamformers", vec![kv.get_or("beamformer", BeamformerKind::GevBan)?])?;
    let psds: Vec<PsdMode> = kv.list_or("psds", vec![kv.get_or("psd", PsdMode::Block)?])?;
    let sources: Vec<String> = kv.list_or("mask_sources", vec!["oracle".to_string(), "uniform".to_string()])?;
    let sources: Vec<MaskSource> = sources.iter().map(|s| mask_source(kv, s)).collect::<Result<_>>()?;
    let window = kv.get_or("window", DEFAULT_WINDOW)?;
    let mut rows = Vec::new();
    for utt in &data {
        for &kind in &kinds {
            for &psd in &psds {
                for src in &sources {
                    let cfg = BeamformConfig { kind, psd, window };
                    rows.push(enhance(&utt.mixture, &utt.masks, src, &cfg, &utt.name)?.1);
                }
            }
        }
    }
    let dir = out_dir(kv)?;
    let csv = dir.join("eval.csv");
    write_eval_csv(&csv, &rows)?;
    let mut manifest = Manifest::new("evaluate", kv)?;
    manifest.add_output(&csv)?;
    manifest.write(&dir)?;
    Ok(rows)
}

fn toy_from_kv(kv: &KeyValues) -> Result<ToyTask> {
    let d = ToyTask::default();
    Ok(ToyTask {
        bins: kv.get_or("toy_bins", d.bins)?,
        mics: kv.get_or("toy_mics", d.mics)?,
        frames: kv.get_or("toy_frames", d.frames)?,
        train: kv.get_or("toy_train", d.train)?,
        validation: kv.get_or("toy_validation", d.validation)?,
        stay: kv.get_or("toy_stay", d.stay)?,
        noise: kv.get_or("toy_noise", d.noise)?,
        seed: kv.get_or("toy_seed", d.seed)?,
    })
}

pub fn train_config_from_kv(kv: &KeyValues) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: kv.get_or("epochs", d.epochs)?,
        validation_period: kv.get_or("validation_period", d.validation_period)?,
        patience: kv.get_or("patience", d.patience)?,
        batch_size: kv.get_or("batch_size", d.batch_size)?,
        learn_rate: kv.get_or("learn_rate", d.learn_rate)?,
        precision: kv.get_or("precision", d.precision)?,
        seed: kv.get_or("seed", d.seed)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Trains on the toy task (`task=toy`, default) or on a simulated dataset
/// (`data=<dir>`, last `validation` utterances held out). Writes the best
/// snapshot to `weights.mbnw` and the loss curve to `loss.csv`.
pub fn cmd_train(kv: &KeyValues) -> Result<TrainOutcome> {
    let cfg = train_config_from_kv(kv)?;
    let (train_set, val_set) = if kv.contains("data") {
        let data = load_dataset(&existing(kv, "data")?)?;
        let n_val: usize = kv.get_or("validation", 1)?;
        if n_val == 0 || n_val >= data.len() {
            return Err(Error::InvalidConfig(format!(
                "validation must leave at least one of {} utterances for training",
                data.len()
            )));
        }
        let mut examples: Vec<Example> = data
            .into_iter()
            .map(|u| Ok(Example { features: extract_features(&u.mixture)?, target: u.masks }))
            .collect::<Result<_>>()?;
        let val = examples.split_off(examples.len() - n_val);
        (examples, val)
    } else {
        match kv.get("task").unwrap_or("toy") {
            "toy" => toy_from_kv(kv)?.generate()?,
            other => return Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    };
    let dir = out_dir(kv)?;
    let outcome = train(&cfg, &train_set, &val_set)?;
    let mut manifest = Manifest::new("train", kv)?;
    let weights = dir.join("weights.mbnw");
    write_weights(&weights, &outcome.best)?;
    manifest.add_output(&weights)?;
    let loss = dir.join("loss.csv");
    outcome.write_loss_csv(&loss)?;
    manifest.add_output(&loss)?;
    manifest.note("precision", cfg.precision);
    manifest.note("best_epoch", outcome.best_epoch);
    manifest.note("best_val_loss", format!("{:.8}", outcome.best_val_loss));
    manifest.write(&dir)?;
    Ok(outcome)
}

/// Binary vs. float matrix-product timings written to `bench.csv`.
pub fn cmd_bench(kv: &KeyValues) -> Result<Vec<BenchRow>> {
    let sizes: Vec<usize> = kv.list_or("sizes", vec![256, 512, 1024])?;
    let reps: usize = kv.get_or("reps", 3)?;
    let rows = bench_matmul(&sizes, reps, kv.get_or("seed", 0u64)?)?;
    let dir = out_dir(kv)?;
    let csv = dir.join("bench.csv");
    write_bench_csv(fs::File::create(&csv)?, &rows)?;
    let mut manifest = Manifest::new("bench", kv)?;
    manifest.add_output(&csv)?;
    manifest.write(&dir)?;
    Ok(rows)
}

/// Complexity tables for `mics`, `bins`, `frames` (default 6, 513, 500);
/// written to `report.txt` when `out` is set.
pub fn cmd_report(kv: &KeyValues) -> Result<ComplexityReport> {
    let report = complexity_report(kv.get_or("mics", 6)?, kv.get_or("bins", 513)?, kv.get_or("frames", 500)?);
    if kv.contains("out") {
        let dir = out_dir(kv)?;
        let path = dir.join("report.txt");
        fs::write(&path, report.to_string())?;
        let mut manifest = Manifest::new("report", kv)?;
        manifest.add_output(&path)?;
        manifest.write(&dir)?;
    }
    Ok(report)
}
