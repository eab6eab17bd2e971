//! Procedural walking clips on the standard skeleton, used for tests,
//! demos and smoke-training without a motion-capture corpus.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::motion::{fk, Category, MotionClip, Pose, Rotation, Skeleton, TARGET_FPS};

/// Height of the lowest toe-base above the floor in every generated frame.
pub const FLOOR_CLEARANCE: f64 = 0.003;

#[derive(Debug, Clone, PartialEq)]
pub struct LocomotionParams {
    pub name: String,
    pub category: Category,
    pub frames: usize,
    pub fps: f64,
    /// Forward speed, m/s.
    pub speed: f64,
    /// Duration of one full gait cycle, seconds.
    pub period: f64,
    /// Heading change, rad/s.
    pub turn_rate: f64,
    pub heading: f64,
    pub start: Vector3<f64>,
    pub phase: f64,
    pub hip_amplitude_deg: f64,
    pub knee_amplitude_deg: f64,
    pub arm_swing_deg: f64,
    /// Extra forearm oscillation, degrees; non-zero gives an upper-body clip.
    pub wave_deg: f64,
}

impl Default for LocomotionParams {
    fn default() -> Self {
        Self {
            name: "walk".into(),
            category: Category::Locomotion,
            frames: 180,
            fps: TARGET_FPS,
            speed: 1.2,
            period: 1.0,
            turn_rate: 0.15,
            heading: 0.0,
            start: Vector3::zeros(),
            phase: 0.0,
            hip_amplitude_deg: 25.0,
            knee_amplitude_deg: 45.0,
            arm_swing_deg: 15.0,
            wave_deg: 0.0,
        }
    }
}

fn set(skel: &Skeleton, pose: &mut Pose, name: &str, r: Rotation) {
    let j = skel.index_of(name).expect("standard joint");
    pose.set_local_rotation(j, r);
}

/// One clip of phase-driven walking on [`Skeleton::standard`].
pub fn locomotion_clip(p: &LocomotionParams) -> MotionClip {
    let skel = Arc::new(Skeleton::standard());
    let rig = *skel.rig().expect("standard rig");
    let (hip_a, knee_a) = (p.hip_amplitude_deg.to_radians(), p.knee_amplitude_deg.to_radians());
    let (arm_a, wave_a) = (p.arm_swing_deg.to_radians(), p.wave_deg.to_radians());
    let arm_down = 80f64.to_radians();
    let mut position = p.start;
    let mut frames = Vec::with_capacity(p.frames);
    for i in 0..p.frames {
        let t = i as f64 / p.fps;
        let phi = TAU * t / p.period + p.phase;
        let yaw = p.heading + p.turn_rate * t;
        let mut pose = Pose::identity(&skel);
        pose.root.rotation = Rotation::about_y(yaw);
        for (prefix, offset) in [("Left", 0.0), ("Right", std::f64::consts::PI)] {
            let a = phi + offset;
            // hip flexion swings the leg towards +Z; the knee flexes during swing
            let hip = hip_a * a.sin();
            let knee = knee_a * a.cos().max(0.0);
            set(&skel, &mut pose, &format!("{prefix}UpLeg"), Rotation::about_x(-hip));
            set(&skel, &mut pose, &format!("{prefix}Leg"), Rotation::about_x(knee));
            set(&skel, &mut pose, &format!("{prefix}Foot"), Rotation::about_x(hip - knee));
            let sx = if prefix == "Left" { -1.0 } else { 1.0 };
            set(
                &skel,
                &mut pose,
                &format!("{prefix}Arm"),
                Rotation::about_x(arm_a * a.sin()) * Rotation::about_z(sx * arm_down),
            );
            set(
                &skel,
                &mut pose,
                &format!("{prefix}ForeArm"),
                Rotation::about_z(-sx * wave_a * (0.5 + 0.5 * (2.0 * a).sin())),
            );
        }
        pose.root.position = Vector3::new(position.x, 0.0, position.z);
        let world = fk(&skel, &pose);
        let lowest = rig
            .toe_base
            .iter()
            .map(|&j| world[j].position.y)
            .fold(f64::INFINITY, f64::min);
        pose.root.position.y = FLOOR_CLEARANCE - lowest;
        frames.push(pose);
        position += Rotation::about_y(yaw) * Vector3::new(0.0, 0.0, p.speed / p.fps);
    }
    MotionClip::new(skel, p.fps, frames, &p.name, p.category).expect("generated clip is valid")
}

/// A reproducible set of clips with varied speed, cadence and turning.
pub fn synthetic_corpus(count: usize, frames: usize, seed: u64) -> Vec<MotionClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let upper = k % 5 == 4;
            let p = LocomotionParams {
                name: format!("synth_{k:03}"),
                category: if upper { Category::UpperBody } else { Category::Locomotion },
                frames,
                speed: if upper { 0.0 } else { rng.random_range(0.6..1.6) },
                period: rng.random_range(0.85..1.25),
                turn_rate: rng.random_range(-0.4..0.4),
                heading: rng.random_range(-3.1..3.1),
                start: Vector3::new(rng.random_range(-2.0..2.0), 0.0, rng.random_range(-2.0..2.0)),
                phase: rng.random_range(0.0..TAU),
                hip_amplitude_deg: if upper { 0.0 } else { rng.random_range(15.0..30.0) },
                knee_amplitude_deg: if upper { 0.0 } else { rng.random_range(30.0..55.0) },
                arm_swing_deg: rng.random_range(5.0..20.0),
                wave_deg: if upper { rng.random_range(20.0..60.0) } else { 0.0 },
                ..Default::default()
            };
            locomotion_clip(&p)
        })
        .collect()
}
