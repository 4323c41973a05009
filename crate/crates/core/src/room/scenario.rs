use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::signals::{colored_noise, speech_like};
use super::{
    default_epsilon, gen_isotropic_noise, ground_truth_masks, render_source, ArrayGeometry, MaskTriple, Point,
    RoomSpec, SourceTrajectory,
};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::stft::{stft, ComplexSpectrogram, StftConfig};

/// Moving talkers walk at a constant 0.5 m/s.
pub const WALKING_SPEED: f64 = 0.5;
/// Static talkers are displaced within a 20 cm cube once per utterance.
pub const HEAD_JITTER: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// 1: R-I, 2: S1-I, 3: S1-S2I, 4: D1-I, 5: D1-D2I.
    pub id: u32,
    pub seed: u64,
    pub room: RoomSpec,
    pub stft: StftConfig,
    pub mics: usize,
    pub array_diameter: f64,
    pub array_center: Point,
    /// Utterance length in seconds.
    pub duration: f64,
    /// Gain on the isotropic noise after equal-RMS mixing.
    pub noise_gain: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: 2,
            seed: 0,
            room: RoomSpec::default(),
            stft: StftConfig::default(),
            mics: 6,
            array_diameter: ArrayGeometry::DEFAULT_DIAMETER,
            array_center: [3.0, 2.5, 1.2],
            duration: 3.0,
            noise_gain: 1.0,
        }
    }
}

fn parse_point(kv: &KeyValues, key: &str, default: Point) -> Result<Point> {
    let v = kv.list_or::<f64>(key, default.to_vec())?;
    if v.len() != 3 {
        return Err(Error::InvalidConfig(format!("{key} needs three comma-separated values")));
    }
    Ok([v[0], v[1], v[2]])
}

impl ScenarioConfig {
    /// Reads the scenario keys of a `key=value` config; absent keys keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let fft_size = kv.get_or("fft_size", d.stft.fft_size)?;
        let stft = StftConfig {
            fft_size,
            hop: kv.get_or("hop", fft_size / 4)?,
            sample_rate: kv.get_or("sample_rate", d.stft.sample_rate)?,
        };
        let cfg = Self {
            id: kv.get_or("scenario", d.id)?,
            seed: kv.get_or("seed", d.seed)?,
            room: RoomSpec {
                dimensions: parse_point(kv, "room_dims", d.room.dimensions)?,
                reflection: kv.get_or("beta", d.room.reflection)?,
                max_image_order: kv.get_or("order", d.room.max_image_order)?,
                speed_of_sound: kv.get_or("speed_of_sound", d.room.speed_of_sound)?,
            },
            stft,
            mics: kv.get_or("mics", d.mics)?,
            array_diameter: kv.get_or("array_diameter", d.array_diameter)?,
            array_center: parse_point(kv, "array_center", d.array_center)?,
            duration: kv.get_or("duration", d.duration)?,
            noise_gain: kv.get_or("noise_gain", d.noise_gain)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.id) {
            return Err(Error::UnknownScenario(self.id));
        }
        self.room.validate()?;
        self.stft.validate()?;
        if self.mics == 0 {
            return Err(Error::InvalidConfig("mics must be at least 1".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        if !(self.noise_gain >= 0.0) {
            return Err(Error::InvalidConfig("noise_gain must be non-negative".into()));
        }
        self.array().validate()?;
        for mic in &self.array().mic_positions {
            self.room.check_inside(mic)?;
        }
        Ok(())
    }

    pub fn array(&self) -> ArrayGeometry {
        if self.mics == 1 {
            ArrayGeometry::new(vec![self.array_center])
        } else {
            ArrayGeometry::circular(self.array_center, self.array_diameter, self.mics)
        }
    }

    /// Samples per utterance, rounded down to a whole number of STFT frames.
    pub fn num_samples(&self) -> usize {
        let raw = (self.duration * self.stft.sample_rate as f64).round() as usize;
        self.stft.signal_len(self.stft.num_frames(raw).max(1))
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.id as u64 * 64 + stream);
        rng
    }
}

/// Source placement for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioLayout {
    pub desired: SourceTrajectory,
    pub interferer: Option<SourceTrajectory>,
}

/// A rendered utterance: mixture `Z = S + N`, its components and targets.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub layout: ScenarioLayout,
    pub mixture: ComplexSpectrogram,
    pub clean: ComplexSpectrogram,
    pub interference: ComplexSpectrogram,
    pub epsilon: Vec<f64>,
    pub masks: MaskTriple,
}

fn jittered<R: Rng>(base: Point, rng: &mut R) -> Point {
    let h = HEAD_JITTER / 2.0;
    [base[0] + rng.gen_range(-h..h), base[1] + rng.gen_range(-h..h), base[2] + rng.gen_range(-h..h)]
}

/// Random walk at constant speed inside an axis-aligned rectangle, bouncing
/// off its edges; one waypoint per bounce.
fn walk<R: Rng>(lo: [f64; 2], hi: [f64; 2], z: f64, duration: f64, rng: &mut R) -> Result<SourceTrajectory> {
    let mut p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
    let heading: f64 = rng.gen_range(-PI..PI);
    let mut v = [WALKING_SPEED * heading.cos(), WALKING_SPEED * heading.sin()];
    let mut t = 0.0;
    let mut waypoints = vec![(0.0, [p[0], p[1], z])];
    let end = duration + 0.1;
    while t < end {
        let mut dt = end - t;
        let mut hit = None;
        for ax in 0..2 {
            if v[ax] != 0.0 {
                let bound = if v[ax] > 0.0 { hi[ax] } else { lo[ax] };
                let s = (bound - p[ax]) / v[ax];
                if s < dt {
                    dt = s;
                    hit = Some(ax);
                }
            }
        }
        let dt = dt.max(1e-6);
        p = [p[0] + v[0] * dt, p[1] + v[1] * dt];
        t += dt;
        waypoints.push((t, [p[0], p[1], z]));
        if let Some(ax) = hit {
            v[ax] = -v[ax];
        }
    }
    SourceTrajectory::moving(waypoints)
}

fn layout(cfg: &ScenarioConfig) -> Result<ScenarioLayout> {
    let [lx, ly, _] = cfg.room.dimensions;
    let c = cfg.array_center;
    let mut rng = cfg.rng(1);
    // S1 / S2 sit on opposite sides of the array, D1 / D2 walk in 2 m × 4 m
    // regions left and right of it.
    let s1 = [c[0] - 1.2, c[1] - 0.9, 1.5];
    let s2 = [c[0] + 1.3, c[1] + 1.1, 1.5];
    let d1 = ([(c[0] - 2.5).max(0.3), (c[1] - 2.0).max(0.3)], [c[0] - 0.5, (c[1] + 2.0).min(ly - 0.3)]);
    let d2 = ([c[0] + 0.5, (c[1] - 2.0).max(0.3)], [(c[0] + 2.5).min(lx - 0.3), (c[1] + 2.0).min(ly - 0.3)]);
    let layout = match cfg.id {
        1 => {
            let p = loop {
                let cand = [rng.gen_range(0.5..lx - 0.5), rng.gen_range(0.5..ly - 0.5), rng.gen_range(1.0..1.9)];
                let dx = ((cand[0] - c[0]).powi(2) + (cand[1] - c[1]).powi(2)).sqrt();
                if dx > 0.8 {
                    break cand;
                }
            };
            ScenarioLayout { desired: SourceTrajectory::fixed(jittered(p, &mut rng)), interferer: None }
        }
        2 => ScenarioLayout { desired: SourceTrajectory::fixed(jittered(s1, &mut rng)), interferer: None },
        3 => ScenarioLayout {
            desired: SourceTrajectory::fixed(jittered(s1, &mut rng)),
            interferer: Some(SourceTrajectory::fixed(jittered(s2, &mut rng))),
        },
        4 => ScenarioLayout { desired: walk(d1.0, d1.1, 1.6, cfg.duration, &mut rng)?, interferer: None },
        5 => ScenarioLayout {
            desired: walk(d1.0, d1.1, 1.6, cfg.duration, &mut rng)?,
            interferer: Some(walk(d2.0, d2.1, 1.6, cfg.duration, &mut rng)?),
        },
        id => return Err(Error::UnknownScenario(id)),
    };
    Ok(layout)
}

fn reference_rms(spec: &ComplexSpectrogram) -> f64 {
    spec.channel_power(0).sqrt()
}

fn normalized(mut spec: ComplexSpectrogram, gain: f64) -> ComplexSpectrogram {
    let rms = reference_rms(&spec);
    if rms > 0.0 {
        spec.scale(gain / rms);
    } else {
        spec.scale(0.0);
    }
    spec
}

fn render(
    cfg: &ScenarioConfig,
    traj: &SourceTrajectory,
    stream: u64,
    len: usize,
) -> Result<ComplexSpectrogram> {
    let mono = speech_like(len, cfg.stft.sample_rate, &mut cfg.rng(stream));
    let multi = render_source(&mono, traj, &cfg.room, &cfg.array(), cfg.stft.sample_rate, cfg.stft.hop)?;
    stft(&multi, &cfg.stft)
}

/// Renders one utterance of the given scenario.
///
/// Every source (talkers and the diffuse noise) is scaled to unit RMS at the
/// reference microphone before mixing; the noise is then multiplied by
/// `noise_gain`.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let len = cfg.num_samples();
    let layout = layout(cfg)?;
    let array = cfg.array();

    let clean = normalized(render(cfg, &layout.desired, 2, len)?, 1.0);

    let noise_mono = colored_noise(len, &mut cfg.rng(4));
    let noise_spec = stft(&[noise_mono], &cfg.stft)?;
    let iso = gen_isotropic_noise(&noise_spec, &array, cfg.room.speed_of_sound, &mut cfg.rng(5))?;
    let mut interference = normalized(iso, cfg.noise_gain);
    if let Some(traj) = &layout.interferer {
        let other = normalized(render(cfg, traj, 3, len)?, 1.0);
        interference.add_assign(&other)?;
    }

    let mut mixture = clean.clone();
    mixture.add_assign(&interference)?;
    let epsilon = default_epsilon(&clean, &interference);
    let masks = ground_truth_masks(&clean, &interference, &epsilon)?;
    Ok(Scenario { config: cfg.clone(), layout, mixture, clean, interference, epsilon, masks })
}
