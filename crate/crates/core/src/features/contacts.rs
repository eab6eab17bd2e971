use super::FeatureError;
use crate::motion::{fk, MotionClip};

/// Toe-base heights strictly below this are labeled as contact.
pub const CONTACT_HEIGHT: f64 = 0.01;

pub fn is_contact(toe_height: f64) -> bool {
    toe_height < CONTACT_HEIGHT
}

/// Per-frame `[left, right]` contact labels from toe-base world height.
pub fn label_contacts(clip: &MotionClip) -> Result<Vec<[bool; 2]>, FeatureError> {
    let rig = *clip.skeleton.rig()?;
    Ok(clip
        .frames
        .iter()
        .map(|pose| {
            let world = fk(&clip.skeleton, pose);
            [
                is_contact(world[rig.toe_base[0]].position.y),
                is_contact(world[rig.toe_base[1]].position.y),
            ]
        })
        .collect())
}
