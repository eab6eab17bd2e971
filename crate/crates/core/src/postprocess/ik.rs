//! Damped least-squares IK on a joint chain.

use nalgebra::{Matrix3, Vector3};

use super::{IkConfig, PostprocessError};
use crate::motion::{fk, Pose, Rotation, Skeleton};

/// Longest end-effector correction requested per iteration, metres. Far
/// targets otherwise produce linearization steps of several radians.
const MAX_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub pose: Pose,
    /// Updates applied; 0 when the end effector already met the tolerance.
    pub iterations: usize,
    pub converged: bool,
    /// Final end-effector distance to the target, metres.
    pub error: f64,
}

fn check_chain(skeleton: &Skeleton, chain: &[usize]) -> Result<(), PostprocessError> {
    if chain.len() < 2 {
        return Err(PostprocessError::Chain("needs at least one joint and an end effector".into()));
    }
    let joints = skeleton.joints();
    if let Some(&j) = chain.iter().find(|&&j| j >= joints.len()) {
        return Err(PostprocessError::Chain(format!("joint {j} out of range")));
    }
    for w in chain.windows(2) {
        let mut p = joints[w[1]].parent;
        while let Some(q) = p {
            if q == w[0] {
                break;
            }
            p = joints[q].parent;
        }
        if p.is_none() {
            return Err(PostprocessError::Chain(format!("joint {} is not an ancestor of {}", w[0], w[1])));
        }
    }
    Ok(())
}

/// Moves the last joint of `chain` toward `target` by rotating the other
/// chain joints. The Jacobian uses world axes at each joint; the update is
/// `Jᵀ(JJᵀ + λ²I)⁻¹e`. Joints outside the chain keep their rotations. An
/// unreachable target yields the best pose found with `converged = false`.
pub fn jacobian_ik(
    skeleton: &Skeleton,
    pose: &Pose,
    chain: &[usize],
    target: &Vector3<f64>,
    cfg: &IkConfig,
) -> Result<IkResult, PostprocessError> {
    check_chain(skeleton, chain)?;
    if !target.iter().all(|v| v.is_finite()) {
        return Err(PostprocessError::NonFiniteTarget);
    }
    let (movable, end) = chain.split_at(chain.len() - 1);
    let end = end[0];
    let lambda2 = cfg.damping * cfg.damping;
    let mut p = pose.clone();
    let mut iterations = 0;
    loop {
        let world = fk(skeleton, &p);
        let effector = world[end].position;
        let e = target - effector;
        let error = e.norm();
        if error < cfg.tolerance || iterations == cfg.max_iterations {
            return Ok(IkResult {
                pose: p,
                iterations,
                converged: error < cfg.tolerance,
                error,
            });
        }
        // columns of J: axis × (effector − joint) for the three world axes
        let columns: Vec<[Vector3<f64>; 3]> = movable
            .iter()
            .map(|&j| {
                let r = effector - world[j].position;
                [Vector3::x().cross(&r), Vector3::y().cross(&r), Vector3::z().cross(&r)]
            })
            .collect();
        let mut jjt = Matrix3::identity() * lambda2;
        for c in columns.iter().flatten() {
            jjt += c * c.transpose();
        }
        let step = if error > MAX_STEP { e * (MAX_STEP / error) } else { e };
        let y = match jjt.try_inverse() {
            Some(inv) => inv * step,
            None => break Ok(IkResult { pose: p, iterations, converged: false, error }),
        };
        for (&j, c) in movable.iter().zip(&columns) {
            let omega = Vector3::new(c[0].dot(&y), c[1].dot(&y), c[2].dot(&y));
            // a world-axis rotation at j, expressed in j's own frame
            let local_axis = world[j].rotation.inverse() * omega;
            let updated = p.local_rotation(j) * Rotation::from_scaled_axis(&local_axis);
            p.set_local_rotation(j, updated);
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Side;

    fn leg(s: &Skeleton, side: Side) -> Vec<usize> {
        let rig = s.rig().unwrap();
        let c = rig.leg_chain(side);
        vec![c[1], c[2], c[3], rig.toe(side)]
    }

    fn bent_pose(s: &Skeleton) -> Pose {
        let mut p = Pose::identity(s);
        p.root.position = Vector3::new(0.3, 0.9, -0.2);
        p.root.rotation = Rotation::about_y(0.7);
        let c = leg(s, Side::Left);
        p.set_local_rotation(c[0], Rotation::about_x(-0.4));
        p.set_local_rotation(c[1], Rotation::about_x(0.6));
        p
    }

    #[test]
    fn target_at_effector_is_a_no_op() {
        let s = Skeleton::standard();
        let p = bent_pose(&s);
        let chain = leg(&s, Side::Left);
        let here = fk(&s, &p)[chain[3]].position;
        let r = jacobian_ik(&s, &p, &chain, &here, &IkConfig::default()).unwrap();
        assert_eq!((r.iterations, r.converged), (0, true));
        assert_eq!(r.pose, p);
    }

    #[test]
    fn reaches_nearby_target() {
        let s = Skeleton::standard();
        let p = bent_pose(&s);
        let chain = leg(&s, Side::Left);
        let world = fk(&s, &p);
        let fwd = p.root.rotation.forward();
        let target = world[chain[3]].position + 0.02 * fwd;
        let r = jacobian_ik(&s, &p, &chain, &target, &IkConfig::default()).unwrap();
        assert!(r.converged && r.iterations <= 50, "{r:?}");
        let got = fk(&s, &r.pose)[chain[3]].position;
        assert!((got - target).norm() < 1e-3);
        assert_eq!(r.error, (got - target).norm());
        // everything outside the chain is untouched
        for j in 1..s.len() {
            if !chain[..3].contains(&j) {
                assert_eq!(r.pose.local_rotation(j), p.local_rotation(j), "joint {j}");
            }
        }
        assert_eq!(r.pose.root, p.root);
    }

    #[test]
    fn unreachable_target_extends_toward_it() {
        let s = Skeleton::standard();
        let p = bent_pose(&s);
        let chain = leg(&s, Side::Left);
        let world = fk(&s, &p);
        let base = world[chain[0]].position;
        let dir = Vector3::new(0.3, -1.0, 0.5).normalize();
        let target = base + 3.0 * dir;
        let joints = s.joints();
        let reach: f64 = chain[1..].iter().map(|&j| joints[j].offset.norm()).sum();
        let r = jacobian_ik(&s, &p, &chain, &target, &IkConfig::default()).unwrap();
        assert!(!r.converged);
        let got = fk(&s, &r.pose)[chain[3]].position;
        assert!((got - (base + reach * dir)).norm() < 0.01, "{}", (got - (base + reach * dir)).norm());
    }

    #[test]
    fn invalid_chain_is_rejected() {
        let s = Skeleton::standard();
        let rig = s.rig().unwrap();
        let bad = [rig.toe(Side::Left), rig.leg_chain(Side::Left)[1]];
        assert!(matches!(
            jacobian_ik(&s, &Pose::identity(&s), &bad, &Vector3::zeros(), &IkConfig::default()),
            Err(PostprocessError::Chain(_))
        ));
        let nan = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(jacobian_ik(&s, &Pose::identity(&s), &leg(&s, Side::Right), &nan, &IkConfig::default()).is_err());
    }
}
