//! Dataset evaluation and the JSON report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::{body_movement, contact_accuracy, positional_error, rotational_error, toe_distance_error};
use super::EvalError;
use crate::features::{window_from_features, Dataset, FeatureConfig, WINDOW_LEN};
use crate::motion::{decode_lower_body, Category, Pose, Rotation, LOWER_BODY_JOINTS};
use crate::net::{forward_batch, NetworkParams};
use crate::postprocess::{decide_contact, PostProcessor, PostprocessConfig};
use crate::train::leg_toe_positions;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub features: FeatureConfig,
    pub postprocess: PostprocessConfig,
    /// Windows per batched forward pass.
    pub batch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            postprocess: PostprocessConfig {
                enabled: false,
                ..Default::default()
            },
            batch: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub frames: usize,
    pub contact_accuracy: f64,
    /// Degrees per joint.
    pub rotational_error_deg: f64,
    /// Centimetres, mean over both toe-bases.
    pub positional_error_cm: f64,
    pub toe_distance_error_cm: f64,
    /// Degrees per frame, predicted and ground truth.
    pub body_movement_deg: f64,
    pub body_movement_gt_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub checkpoint_id: String,
    pub manifest_hash: String,
    pub clips: usize,
    pub total: CategoryMetrics,
    pub per_category: BTreeMap<Category, CategoryMetrics>,
}

/// One evaluated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub clip: usize,
    pub frame: usize,
    pub category: Category,
    pub contact: [bool; 2],
    pub contact_gt: [bool; 2],
    pub rotational_error_deg: f64,
    pub positional_error_cm: f64,
    pub toe_distance_error_cm: f64,
}

#[derive(Default)]
struct Accumulator {
    frames: usize,
    contact: Vec<[bool; 2]>,
    contact_gt: Vec<[bool; 2]>,
    rot: f64,
    pos: f64,
    toe: f64,
    // movement sums and transition counts
    moved: f64,
    moved_gt: f64,
    transitions: usize,
}

impl Accumulator {
    fn add(&mut self, r: &FrameRecord) {
        self.frames += 1;
        self.contact.push(r.contact);
        self.contact_gt.push(r.contact_gt);
        self.rot += r.rotational_error_deg;
        self.pos += r.positional_error_cm;
        self.toe += r.toe_distance_error_cm;
    }

    fn add_movement(&mut self, pred: &[[Rotation; LOWER_BODY_JOINTS]], gt: &[[Rotation; LOWER_BODY_JOINTS]]) {
        if pred.len() >= 2 {
            let n = pred.len() - 1;
            self.moved += body_movement(pred).unwrap_or(0.0) * n as f64;
            self.moved_gt += body_movement(gt).unwrap_or(0.0) * n as f64;
            self.transitions += n;
        }
    }

    fn finish(&self) -> Result<CategoryMetrics, EvalError> {
        let n = self.frames.max(1) as f64;
        let t = self.transitions.max(1) as f64;
        Ok(CategoryMetrics {
            frames: self.frames,
            contact_accuracy: contact_accuracy(&self.contact, &self.contact_gt)?,
            rotational_error_deg: self.rot / n,
            positional_error_cm: self.pos / n,
            toe_distance_error_cm: self.toe / n,
            body_movement_deg: self.moved / t,
            body_movement_gt_deg: self.moved_gt / t,
        })
    }
}

/// Runs the network over every admissible frame of every clip. Contact
/// decisions use the post-processing threshold; when post-processing is
/// enabled the pose metrics are taken after contact locking, with the
/// ground-truth root as the body placement.
pub fn evaluate(
    dataset: &Dataset,
    params: &NetworkParams,
    cfg: &EvalConfig,
    ids: (&str, &str, &str),
) -> Result<(MetricsReport, Vec<FrameRecord>), EvalError> {
    let skeleton = &dataset.skeleton;
    let rig = *skeleton.rig()?;
    let mut records = Vec::new();
    let mut total = Accumulator::default();
    let mut per: BTreeMap<Category, Accumulator> = BTreeMap::new();
    for (ci, clip) in dataset.clips.iter().enumerate() {
        let features = clip.features(&cfg.features)?;
        let frames: Vec<usize> = (WINDOW_LEN..clip.len()).collect();
        let mut post = PostProcessor::new(skeleton.clone(), cfg.postprocess)?;
        let mut pred_rots = Vec::with_capacity(frames.len());
        let mut gt_rots = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(cfg.batch.max(1)) {
            let windows = chunk
                .iter()
                .map(|&i| window_from_features(&features, i, WINDOW_LEN))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<_> = windows.iter().collect();
            let outputs = forward_batch(&refs, params)?;
            for (&i, out) in chunk.iter().zip(&outputs) {
                let root = clip.root(i)?;
                let target = clip.target(i);
                let contact = decide_contact(&out.contact_logits, cfg.postprocess.threshold);
                let mut pose = Pose::identity(skeleton);
                pose.root = root;
                pose.set_lower_body_6d(&rig, &out.pose)?;
                let pose = if cfg.postprocess.enabled { post.step(&pose, contact)?.pose } else { pose };
                let pred: [Rotation; LOWER_BODY_JOINTS] = rig.lower_body.map(|j| pose.local_rotation(j));
                let gt = decode_lower_body(&target)?;
                let pred_toes = leg_toe_positions(skeleton, &pose.root, &pose.lower_body_6d(&rig))?;
                let gt_toes = leg_toe_positions(skeleton, &root, &target)?;
                let rec = FrameRecord {
                    clip: ci,
                    frame: i,
                    category: clip.category,
                    contact,
                    contact_gt: clip.labels(i),
                    rotational_error_deg: rotational_error(&pred, &gt),
                    positional_error_cm: positional_error(&pred_toes, &gt_toes),
                    toe_distance_error_cm: toe_distance_error(&pred_toes, &gt_toes),
                };
                total.add(&rec);
                per.entry(clip.category).or_default().add(&rec);
                records.push(rec);
                pred_rots.push(pred);
                gt_rots.push(gt);
            }
        }
        total.add_movement(&pred_rots, &gt_rots);
        per.entry(clip.category).or_default().add_movement(&pred_rots, &gt_rots);
    }
    let per_category = per
        .iter()
        .map(|(c, a)| Ok((*c, a.finish()?)))
        .collect::<Result<BTreeMap<_, _>, EvalError>>()?;
    let report = MetricsReport {
        config_hash: ids.0.to_string(),
        checkpoint_id: ids.1.to_string(),
        manifest_hash: ids.2.to_string(),
        clips: dataset.clips.len(),
        total: total.finish()?,
        per_category,
    };
    Ok((report, records))
}

/// Pretty JSON with a trailing newline; map keys are ordered.
pub fn write_report(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| EvalError::Io(e.to_string()))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

pub fn write_frame_csv(records: &[FrameRecord], path: &Path) -> Result<(), EvalError> {
    let mut s = String::from(
        "clip,frame,category,contact_left,contact_right,gt_left,gt_right,rot_err_deg,pos_err_cm,toe_dist_err_cm\n",
    );
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.clip,
            r.frame,
            r.category,
            r.contact[0] as u8,
            r.contact[1] as u8,
            r.contact_gt[0] as u8,
            r.contact_gt[1] as u8,
            r.rotational_error_deg,
            r.positional_error_cm,
            r.toe_distance_error_cm
        );
    }
    fs::write(path, s).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}
