use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::pose::Pose;
use super::skeleton::Skeleton;
use super::transform::Transform;
use super::MotionError;

/// Frame rate every training clip is resampled to.
pub const TARGET_FPS: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Locomotion,
    SitStand,
    UpperBody,
    #[default]
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Locomotion,
        Category::SitStand,
        Category::UpperBody,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Locomotion => "locomotion",
            Category::SitStand => "sit-stand",
            Category::UpperBody => "upper-body",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = MotionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| MotionError::Description(format!("unknown category '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skeleton: Arc<Skeleton>,
    pub fps: f64,
    pub frames: Vec<Pose>,
    pub name: String,
    pub category: Category,
}

impl MotionClip {
    pub fn new(
        skeleton: Arc<Skeleton>,
        fps: f64,
        frames: Vec<Pose>,
        name: impl Into<String>,
        category: Category,
    ) -> Result<Self, MotionError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(MotionError::InvalidFps(fps));
        }
        if let Some(i) = frames.iter().position(|p| !p.matches(&skeleton)) {
            return Err(MotionError::PoseMismatch(i));
        }
        Ok(Self {
            skeleton,
            fps,
            frames,
            name: name.into(),
            category,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len().saturating_sub(1) as f64 / self.fps
    }

    /// Applies a world-space transform to every root (rigidly moves the clip).
    pub fn transformed(&self, t: &Transform) -> MotionClip {
        let mut out = self.clone();
        for f in &mut out.frames {
            f.root = *t * f.root;
        }
        out
    }
}

/// Scales offsets and root positions by `scale`, then shifts root Y by
/// `root_shift_y` meters. Rotations are unchanged.
pub fn retarget_scale(
    clip: &MotionClip,
    scale: f64,
    root_shift_y: f64,
) -> Result<MotionClip, MotionError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(MotionError::InvalidScale(scale));
    }
    let skeleton = Arc::new(clip.skeleton.scaled(scale));
    let frames = clip
        .frames
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.root.position *= scale;
            p.root.position.y += root_shift_y;
            p
        })
        .collect();
    Ok(MotionClip {
        skeleton,
        frames,
        ..clip.clone()
    })
}

/// Moves a clip onto another skeleton with the same joint names, copying
/// local rotations by name and keeping the root transform. Bone lengths come
/// from `target`, so the root should already be scaled to it.
pub fn transfer_to(clip: &MotionClip, target: Arc<Skeleton>) -> Result<MotionClip, MotionError> {
    let source: Vec<usize> = target
        .joints()
        .iter()
        .map(|j| {
            clip.skeleton
                .index_of(&j.name)
                .ok_or_else(|| MotionError::MissingJoint(j.name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let frames = clip
        .frames
        .iter()
        .map(|p| {
            let mut out = Pose::identity(&target);
            out.root = p.root;
            for (j, &src) in source.iter().enumerate().skip(1) {
                out.set_local_rotation(j, p.local_rotation(src));
            }
            out
        })
        .collect();
    MotionClip::new(target, clip.fps, frames, clip.name.clone(), clip.category)
}

/// Downsamples to `target_fps`. Positions are interpolated linearly and
/// rotations by shortest-arc slerp at each output instant `k / target_fps`.
pub fn resample(clip: &MotionClip, target_fps: f64) -> Result<MotionClip, MotionError> {
    if !(target_fps > 0.0 && target_fps.is_finite()) {
        return Err(MotionError::InvalidFps(target_fps));
    }
    if target_fps > clip.fps {
        return Err(MotionError::Upsample {
            from: clip.fps,
            to: target_fps,
        });
    }
    if target_fps == clip.fps || clip.frames.is_empty() {
        return Ok(MotionClip {
            fps: target_fps,
            ..clip.clone()
        });
    }
    let last = (clip.frames.len() - 1) as f64;
    let mut frames = Vec::new();
    for k in 0.. {
        // source-frame coordinate of the k-th output instant
        let u = k as f64 * clip.fps / target_fps;
        if u > last + 1e-9 {
            break;
        }
        let i0 = (u.floor() as usize).min(clip.frames.len() - 1);
        let frac = u - i0 as f64;
        if frac < 1e-12 || i0 + 1 >= clip.frames.len() {
            frames.push(clip.frames[i0].clone());
            continue;
        }
        let (a, b) = (&clip.frames[i0], &clip.frames[i0 + 1]);
        let root = Transform::new(
            a.root.rotation.slerp(&b.root.rotation, frac),
            a.root.position + (b.root.position - a.root.position) * frac,
        );
        let rotations = a
            .rotations
            .iter()
            .zip(&b.rotations)
            .map(|(ra, rb)| ra.slerp(rb, frac))
            .collect();
        frames.push(Pose { root, rotations });
    }
    Ok(MotionClip {
        fps: target_fps,
        frames,
        ..clip.clone()
    })
}
