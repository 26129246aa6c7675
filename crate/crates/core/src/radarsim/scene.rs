//! Point-scatterer scenes: a moving body, static and oscillating clutter, and
//! mirror-plane multipath ghosts.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RadarConfig;
use super::skeleton::{self, BodyPoints, Motion, PointId, SkeletonMotion};
use crate::error::{Error, Result};

/// Point reflector at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    /// Meters, radar at the origin.
    pub position: [f64; 3],
    /// m/s, positive when approaching the radar.
    pub radial_velocity: f64,
    /// Linear amplitude.
    pub reflectivity: f64,
}

impl Scatterer {
    pub fn range(&self) -> f64 {
        norm(self.position)
    }

    /// Direction cosine along the array axis (`sin θ`).
    pub fn sin_azimuth(&self) -> f64 {
        let r = self.range();
        if r == 0.0 {
            0.0
        } else {
            self.position[0] / r
        }
    }

    /// Places a reflector at a given range and azimuth in the `z = 0` plane.
    pub fn at_range_azimuth(range: f64, sin_theta: f64, radial_velocity: f64, reflectivity: f64) -> Self {
        let x = range * sin_theta;
        let y = (range * range - x * x).max(0.0).sqrt();
        Self {
            position: [x, y, 0.0],
            radial_velocity,
            reflectivity,
        }
    }
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// A sample point on a bone between two named body points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyScatterer {
    pub from: PointId,
    pub to: PointId,
    pub fraction: f64,
    pub reflectivity: f64,
}

/// Fixed-position reflector whose radial velocity oscillates sinusoidally,
/// e.g. a fan blade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillator {
    pub position: [f64; 3],
    pub amplitude_mps: f64,
    pub freq_hz: f64,
    pub phase: f64,
    pub reflectivity: f64,
}

/// Side wall producing one attenuated ghost per body scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorPlane {
    /// Wall plane `x = x_m`.
    pub x_m: f64,
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clutter {
    pub statics: Vec<Scatterer>,
    pub oscillators: Vec<Oscillator>,
}

/// Knobs for the non-human content of a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterSpec {
    pub enabled: bool,
    pub statics: usize,
    pub oscillators: usize,
    pub oscillator_amplitude_mps: f64,
    pub oscillator_reflectivity: f64,
    pub multipath: bool,
    pub ghost_attenuation: f64,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            statics: 3,
            oscillators: 1,
            oscillator_amplitude_mps: 1.0,
            oscillator_reflectivity: 1.5,
            multipath: true,
            ghost_attenuation: 0.3,
        }
    }
}

impl ClutterSpec {
    pub fn off() -> Self {
        Self {
            enabled: false,
            multipath: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub skeleton: SkeletonMotion,
    pub body_scatterers: Vec<BodyScatterer>,
    pub clutter: Clutter,
    pub multipath: Option<MirrorPlane>,
}

/// `(from, to, samples, reflectivity)` for each bone.
const BONES: [(PointId, PointId, usize, f64); 11] = [
    (skeleton::HEAD, skeleton::TORSO, 3, 0.8),
    (skeleton::TORSO, skeleton::L_SHOULDER, 2, 0.6),
    (skeleton::TORSO, skeleton::R_SHOULDER, 2, 0.6),
    (skeleton::L_SHOULDER, skeleton::L_ELBOW, 3, 0.4),
    (skeleton::R_SHOULDER, skeleton::R_ELBOW, 3, 0.4),
    (skeleton::L_ELBOW, skeleton::L_WRIST, 3, 0.35),
    (skeleton::R_ELBOW, skeleton::R_WRIST, 3, 0.35),
    (skeleton::TORSO, skeleton::L_HIP, 2, 0.6),
    (skeleton::TORSO, skeleton::R_HIP, 2, 0.6),
    (skeleton::L_HIP, skeleton::L_ANKLE, 4, 0.5),
    (skeleton::R_HIP, skeleton::R_ANKLE, 4, 0.5),
];

const CLUTTER_STREAM: u64 = 0x5eed_c1a7_7e20_0001;

/// Finite-difference step for radial velocities, seconds.
const VELOCITY_DT: f64 = 1e-4;

impl Scene {
    pub fn generate(seed: u64, motion: Motion, spec: &ClutterSpec) -> Self {
        let skeleton = SkeletonMotion::sample(seed, motion);
        let body_scatterers = BONES
            .iter()
            .flat_map(|&(from, to, n, refl)| {
                (0..n).map(move |k| BodyScatterer {
                    from,
                    to,
                    fraction: (k as f64 + 0.5) / n as f64,
                    reflectivity: refl,
                })
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CLUTTER_STREAM);
        let place = |rng: &mut ChaCha8Rng| {
            let range: f64 = rng.gen_range(1.0..3.0);
            let u: f64 = rng.gen_range(-0.7..0.7);
            let e: f64 = rng.gen_range(-0.3..0.3);
            let (x, z) = (u * range, e * range);
            [x, (range * range - x * x - z * z).sqrt(), z]
        };
        let clutter = if spec.enabled {
            Clutter {
                statics: (0..spec.statics)
                    .map(|_| Scatterer {
                        position: place(&mut rng),
                        radial_velocity: 0.0,
                        reflectivity: rng.gen_range(1.0..2.0),
                    })
                    .collect(),
                oscillators: (0..spec.oscillators)
                    .map(|_| Oscillator {
                        position: place(&mut rng),
                        amplitude_mps: spec.oscillator_amplitude_mps,
                        freq_hz: rng.gen_range(2.0..4.0),
                        phase: rng.gen_range(0.0..TAU),
                        reflectivity: spec.oscillator_reflectivity,
                    })
                    .collect(),
            }
        } else {
            Clutter {
                statics: Vec::new(),
                oscillators: Vec::new(),
            }
        };
        let multipath = spec.multipath.then(|| MirrorPlane {
            x_m: if rng.gen_bool(0.5) { 0.9 } else { -0.9 },
            attenuation: spec.ghost_attenuation,
        });
        Self {
            skeleton,
            body_scatterers,
            clutter,
            multipath,
        }
    }

    fn body_positions(&self, points: &BodyPoints) -> Vec<[f64; 3]> {
        let all = points.all();
        self.body_scatterers
            .iter()
            .map(|b| {
                let (p, q) = (all[b.from], all[b.to]);
                [
                    p[0] + b.fraction * (q[0] - p[0]),
                    p[1] + b.fraction * (q[1] - p[1]),
                    p[2] + b.fraction * (q[2] - p[2]),
                ]
            })
            .collect()
    }

    /// Every reflector present at time `t` (seconds), with radial
    /// velocities from a central difference of the range trajectory.
    /// Ghosts falling outside the radar's range span are dropped.
    pub fn scatterers_at(&self, t: f64, cfg: &RadarConfig) -> Vec<Scatterer> {
        let now = self.body_positions(&self.skeleton.points_at(t));
        let before = self.body_positions(&self.skeleton.points_at(t - VELOCITY_DT));
        let after = self.body_positions(&self.skeleton.points_at(t + VELOCITY_DT));
        let radial = |a: [f64; 3], b: [f64; 3]| -(norm(b) - norm(a)) / (2.0 * VELOCITY_DT);
        let mut out = Vec::with_capacity(2 * now.len() + 8);
        for (i, b) in self.body_scatterers.iter().enumerate() {
            out.push(Scatterer {
                position: now[i],
                radial_velocity: radial(before[i], after[i]),
                reflectivity: b.reflectivity,
            });
        }
        if let Some(m) = self.multipath {
            let mirror = |p: [f64; 3]| [2.0 * m.x_m - p[0], p[1], p[2]];
            for (i, b) in self.body_scatterers.iter().enumerate() {
                let ghost = Scatterer {
                    position: mirror(now[i]),
                    radial_velocity: radial(mirror(before[i]), mirror(after[i])),
                    reflectivity: b.reflectivity * m.attenuation,
                };
                if ghost.range() <= cfg.max_range() && ghost.radial_velocity.abs() < cfg.max_velocity() {
                    out.push(ghost);
                }
            }
        }
        out.extend(self.clutter.statics.iter().copied());
        out.extend(self.clutter.oscillators.iter().map(|o| Scatterer {
            position: o.position,
            radial_velocity: o.amplitude_mps * (TAU * o.freq_hz * t + o.phase).sin(),
            reflectivity: o.reflectivity,
        }));
        out
    }
}

/// Checks that every reflector lies inside the unambiguous range and
/// velocity spans of `cfg`.
pub fn check_unambiguous(scatterers: &[Scatterer], cfg: &RadarConfig) -> Result<()> {
    for s in scatterers {
        if s.reflectivity < 0.0 {
            return Err(Error::Domain(format!("negative reflectivity {}", s.reflectivity)));
        }
        if s.range() > cfg.max_range() {
            return Err(Error::Domain(format!(
                "scatterer at {:.3} m beyond {:.3} m",
                s.range(),
                cfg.max_range()
            )));
        }
        if s.radial_velocity.abs() >= cfg.max_velocity() {
            return Err(Error::Domain(format!(
                "radial velocity {:.3} m/s beyond ±{:.3} m/s",
                s.radial_velocity,
                cfg.max_velocity()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_stay_unambiguous_and_ghosts_are_weaker() {
        let cfg = RadarConfig::default();
        for seed in 0..20 {
            for motion in Motion::ALL {
                let scene = Scene::generate(seed, motion, &ClutterSpec::default());
                for i in 0..20 {
                    let s = scene.scatterers_at(i as f64 * 0.1, &cfg);
                    check_unambiguous(&s, &cfg).unwrap();
                }
                let m = scene.multipath.unwrap();
                assert!(m.attenuation < 1.0);
            }
        }
    }

    #[test]
    fn still_body_has_zero_radial_velocity() {
        let cfg = RadarConfig::default();
        let scene = Scene::generate(2, Motion::Still, &ClutterSpec::off());
        let s = scene.scatterers_at(0.7, &cfg);
        assert_eq!(s.len(), scene.body_scatterers.len());
        assert!(s.iter().all(|x| x.radial_velocity.abs() < 1e-9));
    }

    #[test]
    fn oscillator_velocity_swings_within_amplitude() {
        let cfg = RadarConfig::default();
        let scene = Scene::generate(5, Motion::Still, &ClutterSpec::default());
        let mut seen_max: f64 = 0.0;
        for i in 0..200 {
            let s = scene.scatterers_at(i as f64 * 0.013, &cfg);
            let fan = s.last().unwrap();
            assert!(fan.radial_velocity.abs() <= 1.0 + 1e-12);
            seen_max = seen_max.max(fan.radial_velocity.abs());
        }
        assert!(seen_max > 0.9);
    }
}
