//! Shoebox room acoustics and synthetic multi-speaker scenes.

mod coherence;
mod masks;
mod render;
mod rir;
mod scenario;
pub mod signals;

pub use coherence::{empirical_coherence, gen_isotropic_noise, spatial_coherence};
pub use masks::{
    default_epsilon, ground_truth_masks, read_mask_file, write_mask_file, MaskClass, MaskTriple,
};
pub use render::{render_source, SEGMENT_SECONDS};
pub use rir::{image_sources, simulate_rir, ImageTap, SINC_TAPS};
pub use scenario::{build_scenario, Scenario, ScenarioConfig, ScenarioLayout};

use crate::error::{Error, Result};

/// Cartesian position in meters.
pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomSpec {
    /// Length, width and height in meters.
    pub dimensions: Point,
    /// Pressure reflection coefficient shared by all six walls.
    pub reflection: f64,
    pub max_image_order: u32,
    pub speed_of_sound: f64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self { dimensions: [6.0, 5.0, 2.5], reflection: 0.85, max_image_order: 3, speed_of_sound: 343.0 }
    }
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidConfig(format!("room dimensions {:?} must be positive", self.dimensions)));
        }
        if !(0.0..1.0).contains(&self.reflection) {
            return Err(Error::InvalidConfig(format!("reflection coefficient {} not in [0, 1)", self.reflection)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig("speed of sound must be positive".into()));
        }
        Ok(())
    }

    /// Strictly inside all six walls.
    pub fn contains(&self, p: &Point) -> bool {
        p.iter().zip(&self.dimensions).all(|(&x, &l)| x > 0.0 && x < l)
    }

    pub fn check_inside(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideRoom(*p))
        }
    }
}

/// Microphone positions of the array.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<Point>,
    pub center: Point,
}

impl ArrayGeometry {
    pub const DEFAULT_DIAMETER: f64 = 0.086;

    /// Uniform circular array in the horizontal plane.
    pub fn circular(center: Point, diameter: f64, mics: usize) -> Self {
        let r = diameter / 2.0;
        let mic_positions = (0..mics)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / mics as f64;
                [center[0] + r * a.cos(), center[1] + r * a.sin(), center[2]]
            })
            .collect();
        Self { mic_positions, center }
    }

    pub fn new(mic_positions: Vec<Point>) -> Self {
        let m = mic_positions.len().max(1) as f64;
        let mut center = [0.0; 3];
        for p in &mic_positions {
            for d in 0..3 {
                center[d] += p[d] / m;
            }
        }
        Self { mic_positions, center }
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn mic_distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.mic_positions[i], &self.mic_positions[j])
    }

    /// Largest pairwise microphone distance.
    pub fn aperture(&self) -> f64 {
        let m = self.num_mics();
        let mut d = 0.0f64;
        for i in 0..m {
            for j in (i + 1)..m {
                d = d.max(self.mic_distance(i, j));
            }
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() {
            return Err(Error::InvalidConfig("array has no microphones".into()));
        }
        let m = self.num_mics();
        for i in 0..m {
            for j in (i + 1)..m {
                if self.mic_distance(i, j) < 1e-9 {
                    return Err(Error::InvalidConfig(format!("microphones {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Fixed position for the whole utterance (head jitter is drawn per utterance).
    Static,
    Moving,
}

/// Piecewise-linear source path.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTrajectory {
    pub waypoints: Vec<(f64, Point)>,
    pub kind: TrajectoryKind,
}

impl SourceTrajectory {
    pub fn fixed(p: Point) -> Self {
        Self { waypoints: vec![(0.0, p)], kind: TrajectoryKind::Static }
    }

    pub fn moving(waypoints: Vec<(f64, Point)>) -> Result<Self> {
        let traj = Self { waypoints, kind: TrajectoryKind::Moving };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::InvalidConfig("trajectory has no waypoints".into()));
        }
        if self.waypoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidConfig("waypoint times must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Last time covered by the trajectory; static paths cover all time.
    pub fn end_time(&self) -> f64 {
        match self.kind {
            TrajectoryKind::Static => f64::INFINITY,
            TrajectoryKind::Moving => self.waypoints.last().map_or(0.0, |w| w.0),
        }
    }

    pub fn position_at(&self, time: f64) -> Point {
        let w = &self.waypoints;
        if self.kind == TrajectoryKind::Static || time <= w[0].0 {
            return w[0].1;
        }
        for pair in w.windows(2) {
            let (t0, p0) = pair[0];
            let (t1, p1) = pair[1];
            if time <= t1 {
                let a = (time - t0) / (t1 - t0);
                return [p0[0] + a * (p1[0] - p0[0]), p0[1] + a * (p1[1] - p0[1]), p0[2] + a * (p1[2] - p0[2])];
            }
        }
        w[w.len() - 1].1
    }

    /// Speed on each leg in m/s.
    pub fn leg_speeds(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|p| distance(&p[0].1, &p[1].1) / (p[1].0 - p[0].0))
            .collect()
    }
}
