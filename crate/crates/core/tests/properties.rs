use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, Vector3};
use proptest::prelude::*;

use sparsepose::features::{feature_sequence, synthesize_trackers, FeatureConfig};
use sparsepose::motion::{
    fk, parse_bvh, retarget_scale, rot_to_6d, sixdof_to_rot, write_bvh, BvhOptions, Joint, MotionClip, Pose,
    Rotation, Side, SixDof, Skeleton, Transform,
};
use sparsepose::net::{forward, NetDims, NetworkParams};
use sparsepose::features::{FeatureWindow, FEATURE_DIM, WINDOW_LEN};
use sparsepose::postprocess::{PostProcessor, PostprocessConfig};
use sparsepose::synth::{locomotion_clip, LocomotionParams};
use sparsepose::train::{learning_rate, loss_fk};

fn rotation() -> impl Strategy<Value = Rotation> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..3.1).prop_filter_map("axis", |(x, y, z, a)| {
        let axis = Vector3::new(x, y, z);
        (axis.norm() > 1e-3).then(|| Rotation::from_axis_angle(&axis.normalize(), a))
    })
}

fn vector(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn homogeneous(r: &Rotation, p: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(p);
    m
}

fn walk(frames: usize, heading: f64, phase: f64) -> MotionClip {
    locomotion_clip(&LocomotionParams {
        frames,
        heading,
        phase,
        ..LocomotionParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_matches_homogeneous_matrix_chain(
        offsets in proptest::collection::vec(vector(0.5), 4),
        rots in proptest::collection::vec(rotation(), 5),
        root_pos in vector(2.0),
    ) {
        let mut joints = vec![Joint { name: "j0".into(), parent: None, offset: Vector3::zeros() }];
        for (k, o) in offsets.iter().enumerate() {
            joints.push(Joint { name: format!("j{}", k + 1), parent: Some(k), offset: *o });
        }
        let skel = Skeleton::new(joints).unwrap();
        let pose = Pose { root: Transform::new(rots[0], root_pos), rotations: rots[1..].to_vec() };
        let world = fk(&skel, &pose);

        let mut m = homogeneous(&rots[0], &root_pos);
        for j in 0..5 {
            if j > 0 {
                m *= homogeneous(&rots[j], &offsets[j - 1]);
            }
            let p = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
            let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
            prop_assert!((world[j].position - p).norm() < 1e-9);
            prop_assert!((world[j].rotation.matrix() - r).abs().max() < 1e-9);
        }
    }

    #[test]
    fn sixdof_round_trip_from_rotation(r in rotation()) {
        let back = sixdof_to_rot(&rot_to_6d(&r)).unwrap();
        prop_assert!(back.max_deviation(&r) < 1e-9);
    }

    #[test]
    fn sixdof_decoding_is_a_projection(f in vector(3.0), u in vector(3.0)) {
        prop_assume!(f.norm() > 0.1 && u.norm() > 0.1 && f.normalize().cross(&u.normalize()).norm() > 0.1);
        let r = sixdof_to_rot(&SixDof::new(f, u)).unwrap();
        let again = sixdof_to_rot(&rot_to_6d(&r)).unwrap();
        prop_assert!(again.max_deviation(&r) < 1e-9);
        // forward direction is kept as given
        prop_assert!((r.forward() - f.normalize()).norm() < 1e-9);
    }

    #[test]
    fn learning_rate_strictly_decreases(initial in 1e-5f64..1.0, decay in 0.5f64..0.999, e in 0usize..500) {
        prop_assert!(learning_rate(initial, decay, e + 1) < learning_rate(initial, decay, e));
        prop_assert!((learning_rate(initial, decay, 0) - initial).abs() < 1e-15);
    }

    #[test]
    fn fk_loss_ignores_shared_root(rot in rotation(), pos in vector(5.0), seed in 0u64..1000) {
        let skel = Skeleton::standard();
        let clip = walk(60, 0.0, seed as f64 * 0.01);
        let rig = *skel.rig().unwrap();
        let a = clip.frames[10].lower_body_6d(&rig);
        let b = clip.frames[20 + (seed % 30) as usize].lower_body_6d(&rig);
        let at_origin = loss_fk(&a, &b, &Transform::identity(), &skel).unwrap();
        let moved = loss_fk(&a, &b, &Transform::new(rot, pos), &skel).unwrap();
        prop_assert!((at_origin - moved).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bvh_write_parse_round_trip(heading in -3.0f64..3.0, phase in 0.0f64..1.0, unit in prop_oneof![Just(1.0), Just(0.01), Just(0.0254)]) {
        let clip = walk(20, heading, phase);
        let text = write_bvh(&clip, unit);
        let back = parse_bvh(&text, &BvhOptions { unit_scale: unit, ..BvhOptions::default() }).unwrap();
        prop_assert_eq!(back.len(), clip.len());
        prop_assert!((back.fps - clip.fps).abs() < 1e-9);
        for (name_idx, joint) in clip.skeleton.joints().iter().enumerate() {
            let j = back.skeleton.index_of(&joint.name).expect("joint kept");
            prop_assert!((back.skeleton.joints()[j].offset - joint.offset).norm() < 1e-9);
            for (p, q) in clip.frames.iter().zip(&back.frames) {
                prop_assert!(p.local_rotation(name_idx).angle_to(&q.local_rotation(j)) < 1e-8);
            }
        }
        for (p, q) in clip.frames.iter().zip(&back.frames) {
            prop_assert!((p.root.position - q.root.position).norm() < 1e-9);
        }
    }

    #[test]
    fn scaling_commutes_with_fk(scale in 0.3f64..3.0, heading in -3.0f64..3.0) {
        let clip = walk(10, heading, 0.2);
        let scaled = retarget_scale(&clip, scale, 0.0).unwrap();
        for (p, q) in clip.frames.iter().zip(&scaled.frames) {
            let a = fk(&clip.skeleton, p);
            let b = fk(&scaled.skeleton, q);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.position * scale - y.position).norm() < 1e-9);
                prop_assert!(x.rotation.max_deviation(&y.rotation) < 1e-12);
            }
        }
    }

    #[test]
    fn features_ignore_yaw_and_translation(yaw in -3.1f64..3.1, shift in vector(10.0)) {
        let clip = walk(30, 0.4, 0.1);
        let t = Transform::new(Rotation::about_y(yaw), Vector3::new(shift.x, 0.0, shift.z));
        let cfg = FeatureConfig::default();
        let a = feature_sequence(&synthesize_trackers(&clip).unwrap(), &cfg).unwrap();
        let b = feature_sequence(&synthesize_trackers(&clip.transformed(&t)).unwrap(), &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn features_shift_with_time(k in 1usize..20) {
        let frames = synthesize_trackers(&walk(40, 0.0, 0.3)).unwrap();
        let cfg = FeatureConfig::default();
        let full = feature_sequence(&frames, &cfg).unwrap();
        let tail = feature_sequence(&frames[k..], &cfg).unwrap();
        prop_assert_eq!(&full[k..], &tail[..]);
    }

    #[test]
    fn halving_the_frame_rate_doubles_linear_steps(phase in 0.0f64..1.0) {
        // a gentle straight walk, so per-step velocity is near constant
        let clip = locomotion_clip(&LocomotionParams { frames: 81, turn_rate: 0.0, phase, ..LocomotionParams::default() });
        let frames = synthesize_trackers(&clip).unwrap();
        let every_other: Vec<_> = frames.iter().step_by(2).cloned().collect();
        let cfg = FeatureConfig::default();
        let fine = feature_sequence(&frames, &cfg).unwrap();
        let coarse = feature_sequence(&every_other, &cfg).unwrap();
        // forward pelvis displacement per row
        let fine_sum: f64 = fine.iter().map(|r| r[2]).sum::<f64>() / fine.len() as f64;
        let coarse_sum: f64 = coarse.iter().map(|r| r[2]).sum::<f64>() / coarse.len() as f64;
        prop_assert!((coarse_sum / fine_sum - 2.0).abs() < 0.1, "ratio {}", coarse_sum / fine_sum);
    }

    #[test]
    fn network_is_deterministic_with_normalized_contacts(seed in 0u64..1000, scale in 0.1f64..5.0) {
        let params = NetworkParams::init(NetDims { hidden: 16, latent: 8 }, seed);
        let mut w = FeatureWindow::zeros(WINDOW_LEN);
        for t in 0..WINDOW_LEN {
            for c in 0..FEATURE_DIM {
                w.row_mut(t)[c] = scale * (((t * 31 + c * 7) as f64 + seed as f64).sin());
            }
        }
        let a = forward(&w, &params).unwrap();
        let b = forward(&w, &params).unwrap();
        prop_assert_eq!(&a, &b);
        for foot in a.contact_probabilities() {
            prop_assert!((foot[0] + foot[1] - 1.0).abs() < 1e-12);
            prop_assert!(foot.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn locked_foot_stays_put_and_other_leg_is_untouched(
        frame in 5usize..40,
        drift in proptest::collection::vec((-0.02f64..0.02, -0.02f64..0.0, -0.02f64..0.02), 5),
    ) {
        let clip = walk(60, 0.0, 0.0);
        let skel = clip.skeleton.clone();
        let rig = *skel.rig().unwrap();
        let mut post = PostProcessor::new(Arc::clone(&skel), PostprocessConfig::default()).unwrap();
        let base = clip.frames[frame].clone();
        let first = post.step(&base, [true, false]).unwrap();
        let target = first.targets[0].expect("left foot locked");
        let mut root = base.root;
        for (dx, dy, dz) in drift {
            root.position += Vector3::new(dx, dy, dz);
            let pose = Pose { root, ..base.clone() };
            let out = post.step(&pose, [true, false]).unwrap();
            prop_assert_eq!(out.targets[0], Some(target));
            let toe = fk(&skel, &out.pose)[rig.toe(Side::Left)].position;
            if out.ik_converged[0] {
                prop_assert!((toe - target).norm() <= PostprocessConfig::default().ik.tolerance + 1e-12);
            }
            let left: Vec<usize> = rig.leg_chain(Side::Left)[1..].to_vec();
            for j in 1..skel.len() {
                if !left.contains(&j) {
                    prop_assert_eq!(out.pose.local_rotation(j), pose.local_rotation(j));
                }
            }
            prop_assert_eq!(out.pose.root, pose.root);
        }
    }
}

#[test]
fn locked_foot_converges_for_small_drift() {
    let clip = walk(60, 0.0, 0.0);
    let skel = clip.skeleton.clone();
    let mut post = PostProcessor::new(Arc::clone(&skel), PostprocessConfig::default()).unwrap();
    let base = clip.frames[10].clone();
    post.step(&base, [true, true]).unwrap();
    let mut pose = base.clone();
    pose.root.position += Vector3::new(0.01, -0.01, 0.0);
    let out = post.step(&pose, [true, true]).unwrap();
    assert_eq!(out.ik_converged, [true, true]);
}
